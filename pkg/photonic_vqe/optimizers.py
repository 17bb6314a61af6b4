# optimizers.py
"""
Classical minimizers for VQE parameter loops.

Every method records one :class:`OptRecord` per iteration (iteration 0 is
the starting point) and stops at ``max_iter`` or when the best value has
improved by less than ``tol`` over the last ``window`` iterations.
Stochastic methods draw from ``numpy.random.default_rng(seed)`` only, so a
fixed seed reproduces a trace exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from photonic_vqe.exceptions import (
    NormalizationError,
    OptimizerAbortedError,
    SingularMetricError,
)
from photonic_vqe.qstate import ATOL, StateVector
from photonic_vqe.utils import emit_curve

METHODS = ("gd", "nelder_mead", "spsa", "pso", "cobyla", "qng")
QNG_METRICS = ("exact", "spsa")


@dataclass
class OptimizerConfig:
    """
    Optimizer settings.

    Attributes:
        method (str): One of ``METHODS``.
        eta (float): Step size for gradient descent and QNG.
        max_iter (int): Iteration cap.
        tol (float): Minimum best-value improvement over ``window`` iterations.
        window (int): Length of the improvement window.
        fd_step (float): Central finite-difference step for gradients.
        spsa_a, spsa_c, spsa_A (float): SPSA gains
            ``a_n = a / (n + 1 + A)**0.602`` and ``c_n = c / (n + 1)**0.101``.
        swarm_size (int): PSO particle count.
        inertia, cognitive, social (float): PSO weights.
        pso_half_width (float): Half-width of the initial PSO box around ``theta0``.
        rho_begin, rho_end (float): Initial and final trust-region radii.
        nm_step (float): Initial Nelder-Mead simplex edge.
        qng_alpha (float): Exponent of the metric in ``F^-alpha``.
        qng_lambda (float): Tikhonov shift added to the metric.
        qng_metric (str): ``exact`` (finite-difference QFIM) or ``spsa``.
        qfim_step (float): Finite-difference step for the QFIM.
        seed (int): Seed for stochastic methods.
    """

    method: str = "cobyla"
    eta: float = 0.1
    max_iter: int = 200
    tol: float = 1e-8
    window: int = 20
    fd_step: float = 1e-5
    spsa_a: float = 0.5
    spsa_c: float = 0.1
    spsa_A: float = 10.0
    swarm_size: int = 20
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    pso_half_width: float = math.pi
    rho_begin: float = 0.5
    rho_end: float = 1e-6
    nm_step: float = 0.5
    qng_alpha: float = 1.0
    qng_lambda: float = 1e-3
    qng_metric: str = "exact"
    qfim_step: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown optimizer {self.method!r}; expected one of {METHODS}")
        if self.eta <= 0:
            raise ValueError(f"step size must be positive, got {self.eta}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.window < 1:
            raise ValueError(f"window must be at least 1, got {self.window}")
        if not 0 < self.rho_end <= self.rho_begin:
            raise ValueError("trust-region radii must satisfy 0 < rho_end <= rho_begin")
        if self.qng_lambda < 0:
            raise ValueError(f"qng_lambda must be non-negative, got {self.qng_lambda}")
        if self.qng_metric not in QNG_METRICS:
            raise ValueError(f"unknown QNG metric {self.qng_metric!r}")
        if self.fd_step <= 0 or self.qfim_step <= 0:
            raise ValueError("finite-difference steps must be positive")
        if self.swarm_size < 1:
            raise ValueError("PSO swarm needs at least one particle")


@dataclass(frozen=True, eq=False)
class OptRecord:
    iteration: int
    theta: np.ndarray
    value: float
    evaluations: int


@dataclass
class OptTrace:
    method: str
    records: list = field(default_factory=list)
    converged: bool = False

    def record(self, iteration, theta, value, evaluations):
        self.records.append(OptRecord(iteration, np.array(theta, dtype=float), float(value), evaluations))
        logger.debug(f"{self.method} iteration {iteration}: value={value:.10g}, evals={evaluations}")

    def __len__(self):
        return len(self.records)

    @property
    def values(self):
        return [r.value for r in self.records]

    @property
    def best_record(self):
        return min(self.records, key=lambda r: r.value)

    @property
    def best_value(self):
        return self.best_record.value

    @property
    def best_theta(self):
        return self.best_record.theta

    @property
    def evaluations(self):
        return self.records[-1].evaluations if self.records else 0

    def best_so_far(self):
        return list(np.minimum.accumulate(self.values))

    def stalled(self, window, tol):
        if len(self.records) <= window:
            return False
        best = self.best_so_far()
        return best[-1 - window] - best[-1] < tol


class _CountedObjective:
    def __init__(self, fn, trace):
        self.fn = fn
        self.trace = trace
        self.evaluations = 0

    def __call__(self, theta):
        value = float(self.fn(np.array(theta, dtype=float)))
        self.evaluations += 1
        if not math.isfinite(value):
            logger.warning(f"Objective returned {value} at evaluation {self.evaluations}; aborting")
            raise OptimizerAbortedError(
                f"objective returned {value} after {len(self.trace)} iterations", self.trace
            )
        return value


def _fd_gradient(f, theta, h):
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = h
        grad[j] = (f(theta + step) - f(theta - step)) / (2 * h)
    return grad


def _gradient_descent(f, theta0, cfg, trace, precondition=None):
    theta = np.array(theta0, dtype=float)
    trace.record(0, theta, f(theta), f.evaluations)
    for it in range(1, cfg.max_iter + 1):
        grad = _fd_gradient(f, theta, cfg.fd_step)
        if precondition is not None:
            grad = precondition(theta, it) @ grad
        theta = theta - cfg.eta * grad
        trace.record(it, theta, f(theta), f.evaluations)
        if trace.stalled(cfg.window, cfg.tol):
            trace.converged = True
            break
    return trace


def _nelder_mead(f, theta0, cfg, trace):
    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5
    x0 = np.array(theta0, dtype=float)
    n = x0.size
    simplex = [x0] + [x0 + cfg.nm_step * np.eye(n)[j] for j in range(n)]
    values = [f(x) for x in simplex]
    best = int(np.argmin(values))
    trace.record(0, simplex[best], values[best], f.evaluations)
    for it in range(1, cfg.max_iter + 1):
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        xr = centroid + alpha * (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = centroid + rho * (xr - centroid)
                fc = f(xc)
                accept = fc <= fr
            else:
                xc = centroid + rho * (worst - centroid)
                fc = f(xc)
                accept = fc < values[-1]
            if accept:
                simplex[-1], values[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
                    values[i] = f(simplex[i])
        best = int(np.argmin(values))
        trace.record(it, simplex[best], values[best], f.evaluations)
        spread = max(values) - min(values)
        size = max(np.linalg.norm(x - simplex[best]) for x in simplex)
        if spread <= cfg.tol and size <= cfg.tol:
            trace.converged = True
            break
        if trace.stalled(cfg.window, cfg.tol):
            trace.converged = True
            break
    return trace


def _spsa(f, theta0, cfg, trace):
    rng = np.random.default_rng(cfg.seed)
    theta = np.array(theta0, dtype=float)
    trace.record(0, theta, f(theta), f.evaluations)
    for it in range(1, cfg.max_iter + 1):
        n = it - 1
        a_n = cfg.spsa_a / (n + 1 + cfg.spsa_A) ** 0.602
        c_n = cfg.spsa_c / (n + 1) ** 0.101
        delta = rng.choice([-1.0, 1.0], size=theta.size)
        diff = f(theta + c_n * delta) - f(theta - c_n * delta)
        theta = theta - a_n * diff / (2 * c_n) * delta
        trace.record(it, theta, f(theta), f.evaluations)
        if trace.stalled(cfg.window, cfg.tol):
            trace.converged = True
            break
    return trace


def _pso(f, theta0, cfg, trace):
    rng = np.random.default_rng(cfg.seed)
    x0 = np.array(theta0, dtype=float)
    n = x0.size
    half = cfg.pso_half_width
    vmax = 2 * half
    positions = x0 + rng.uniform(-half, half, size=(cfg.swarm_size, n))
    positions[0] = x0
    velocities = rng.uniform(-half, half, size=(cfg.swarm_size, n))
    values = np.array([f(x) for x in positions])
    pbest, pbest_val = positions.copy(), values.copy()
    g = int(np.argmin(pbest_val))
    trace.record(0, pbest[g], pbest_val[g], f.evaluations)
    for it in range(1, cfg.max_iter + 1):
        r1 = rng.random(size=(cfg.swarm_size, n))
        r2 = rng.random(size=(cfg.swarm_size, n))
        velocities = (
            cfg.inertia * velocities
            + cfg.cognitive * r1 * (pbest - positions)
            + cfg.social * r2 * (pbest[g] - positions)
        )
        velocities = np.clip(velocities, -vmax, vmax)
        positions = positions + velocities
        values = np.array([f(x) for x in positions])
        improved = values < pbest_val
        pbest[improved] = positions[improved]
        pbest_val[improved] = values[improved]
        g = int(np.argmin(pbest_val))
        trace.record(it, pbest[g], pbest_val[g], f.evaluations)
        if trace.stalled(cfg.window, cfg.tol):
            trace.converged = True
            break
    return trace


def _cobyla(f, theta0, cfg, trace):
    """
    Derivative-free quasi-Newton trust region.

    Each iteration takes forward-difference gradients ``(f(x + rho e_j) - f(x)) / rho``
    and steps along ``-B g`` inside a trust radius, where ``B`` is a BFGS
    inverse-Hessian estimate built from successive gradients. ``B`` falls back
    to the identity whenever a step is rejected. ``rho`` only shrinks with the
    radius. When the radius drops below ``rho_end`` the run stops only if the
    gradient norm is below ``sqrt(tol)``; otherwise it restarts from the best
    point with a fresh radius.
    """
    x = np.array(theta0, dtype=float)
    n = x.size
    fx = f(x)
    trace.record(0, x, fx, f.evaluations)
    gtol = math.sqrt(cfg.tol)
    rho = delta = cfg.rho_begin
    metric = np.eye(n)
    x_prev = g_prev = None
    restarts = 0
    for it in range(1, cfg.max_iter + 1):
        grad = np.array([(f(x + rho * np.eye(n)[j]) - fx) / rho for j in range(n)])
        if g_prev is not None:
            s, y = x - x_prev, grad - g_prev
            sy = float(s @ y)
            if sy > 1e-12:
                left = np.eye(n) - np.outer(s, y) / sy
                metric = left @ metric @ left.T + np.outer(s, s) / sy
            x_prev = g_prev = None
        step = -metric @ grad
        predicted = -float(grad @ step)
        if predicted <= 0:
            metric = np.eye(n)
            step = -grad
            predicted = float(grad @ grad)
        length = np.linalg.norm(step)
        if length > delta:
            step *= delta / length
            predicted *= delta / length
            length = delta
        if length == 0:
            trace.record(it, x, fx, f.evaluations)
            trace.converged = True
            break
        f_new = f(x + step)
        ratio = (fx - f_new) / predicted if predicted > 0 else -1.0
        if f_new < fx:
            x_prev, g_prev = x, grad
            x, fx = x + step, f_new
        else:
            metric = np.eye(n)
        if ratio > 0.75 and length >= 0.99 * delta:
            delta *= 2.0
        elif ratio < 0.1:
            delta *= 0.5
        rho = min(rho, max(0.1 * delta, cfg.rho_end))
        trace.record(it, x, fx, f.evaluations)
        if delta < cfg.rho_end:
            if np.linalg.norm(grad) < gtol:
                trace.converged = True
                break
            restarts += 1
            logger.debug(f"cobyla restart {restarts} at iteration {it}: |g|={np.linalg.norm(grad):.3g}")
            rho = delta = cfg.rho_begin
            metric = np.eye(n)
            x_prev = g_prev = None
            continue
        if trace.stalled(cfg.window, cfg.tol):
            trace.converged = True
            break
    return trace


def minimize(objective, theta0, cfg):
    """
    Minimize a scalar objective.

    Args:
        objective (callable): ``theta -> float``; may be stochastic.
        theta0 (array_like): Starting parameters.
        cfg (OptimizerConfig): Method and settings; ``qng`` needs :func:`minimize_qng`.

    Returns:
        OptTrace: Per-iteration records.

    Raises:
        OptimizerAbortedError: If the objective returns NaN or infinity;
            the exception carries the trace so far.
    """
    runners = {
        "gd": _gradient_descent,
        "nelder_mead": _nelder_mead,
        "spsa": _spsa,
        "pso": _pso,
        "cobyla": _cobyla,
    }
    if cfg.method not in runners:
        raise ValueError(f"method {cfg.method!r} needs a state function; use minimize_qng")
    trace = OptTrace(cfg.method)
    f = _CountedObjective(objective, trace)
    runners[cfg.method](f, theta0, cfg, trace)
    logger.info(
        f"{cfg.method} finished after {len(trace) - 1} iterations and {f.evaluations} evaluations: "
        f"best value {trace.best_value:.10g}"
    )
    return trace


# Quantum natural gradient


def _amplitudes(state_fn, theta):
    state = state_fn(np.array(theta, dtype=float))
    if isinstance(state, StateVector):
        return state.amplitudes
    amps = np.asarray(state, dtype=complex).reshape(-1)
    norm = float(np.vdot(amps, amps).real)
    if abs(norm - 1.0) > ATOL:
        raise NormalizationError(f"state function returned norm^2 {norm:.12g}")
    return amps


def _align(psi, reference):
    overlap = np.vdot(reference, psi)
    if abs(overlap) == 0:
        return psi
    return psi * np.exp(-1j * np.angle(overlap))


def qfim(state_fn, theta, step=1e-4):
    """
    Quantum Fisher information matrix of a pure-state family.

    ``F_jk = 4 Re(<d_j psi|d_k psi> - <d_j psi|psi><psi|d_k psi>)`` with
    derivatives by central differences after aligning each displaced
    state's global phase to ``psi(theta)``.
    """
    if step <= 0:
        raise ValueError(f"QFIM step must be positive, got {step}")
    theta = np.array(theta, dtype=float)
    psi = _amplitudes(state_fn, theta)
    derivs = []
    for j in range(theta.size):
        shift = np.zeros_like(theta)
        shift[j] = step
        plus = _align(_amplitudes(state_fn, theta + shift), psi)
        minus = _align(_amplitudes(state_fn, theta - shift), psi)
        derivs.append((plus - minus) / (2 * step))
    d = np.array(derivs)
    overlaps = d.conj() @ psi
    gram = d.conj() @ d.T
    f = 4 * np.real(gram - np.outer(overlaps, overlaps.conj()))
    return (f + f.T) / 2


def _fidelity(state_fn, psi, theta):
    return abs(np.vdot(psi, _amplitudes(state_fn, theta))) ** 2


def qfim_spsa(state_fn, theta, step, rng, samples=1):
    """
    Two-point simultaneous-perturbation estimate of the QFIM.

    Uses the fidelity ``|<psi(theta)|psi(theta')>|^2``, whose Hessian at
    ``theta' = theta`` is ``-F / 2``. Each sample costs four state
    preparations regardless of the parameter count.
    """
    theta = np.array(theta, dtype=float)
    psi = _amplitudes(state_fn, theta)
    total = np.zeros((theta.size, theta.size))
    for _ in range(samples):
        d1 = rng.choice([-1.0, 1.0], size=theta.size)
        d2 = rng.choice([-1.0, 1.0], size=theta.size)
        df = (
            _fidelity(state_fn, psi, theta + step * (d1 + d2))
            - _fidelity(state_fn, psi, theta + step * d1)
            - _fidelity(state_fn, psi, theta - step * d1 + step * d2)
            + _fidelity(state_fn, psi, theta - step * d1)
        )
        hessian = df / (2 * step**2) * (np.outer(d1, d2) + np.outer(d2, d1)) / 2
        total += -2.0 * hessian
    return total / samples


def _psd(matrix):
    w, v = np.linalg.eigh((matrix + matrix.T) / 2)
    return (v * np.clip(w, 0.0, None)) @ v.T


def _metric_power(metric, alpha, lam):
    w, v = np.linalg.eigh(metric + lam * np.eye(metric.shape[0]))
    scale = max(1.0, float(np.max(np.abs(w))))
    if lam == 0 and np.min(w) <= 1e-10 * scale:
        raise SingularMetricError(
            "quantum Fisher information matrix is singular; set qng_lambda > 0"
        )
    w = np.clip(w, 1e-300, None)
    return (v * w ** (-alpha)) @ v.T


def minimize_qng(objective, state_fn, theta0, cfg):
    """
    Quantum natural gradient descent.

    Iterates ``theta <- theta - eta (F + lambda I)^-alpha grad E`` with the
    gradient by central differences. ``alpha = 0`` skips the metric and
    reproduces gradient descent exactly.

    Args:
        objective (callable): ``theta -> float``.
        state_fn (callable): ``theta -> StateVector`` matching the objective's ansatz.
        theta0 (array_like): Starting parameters.
        cfg (OptimizerConfig): ``qng_alpha``, ``qng_lambda``, ``qng_metric`` apply.

    Returns:
        OptTrace: Per-iteration records.
    """
    trace = OptTrace("qng")
    f = _CountedObjective(objective, trace)
    precondition = None
    if cfg.qng_alpha != 0:
        rng = np.random.default_rng(cfg.seed)
        running = {"metric": None, "count": 0}

        def precondition(theta, iteration):
            if cfg.qng_metric == "exact":
                metric = qfim(state_fn, theta, cfg.qfim_step)
            else:
                sample = qfim_spsa(state_fn, theta, cfg.qfim_step, rng)
                n = running["count"]
                previous = running["metric"] if running["metric"] is not None else sample
                running["metric"] = (n * previous + sample) / (n + 1)
                running["count"] = n + 1
                metric = _psd(running["metric"])
            return _metric_power(metric, cfg.qng_alpha, cfg.qng_lambda)

    _gradient_descent(f, theta0, cfg, trace, precondition)
    logger.info(
        f"qng finished after {len(trace) - 1} iterations: best value {trace.best_value:.10g}"
    )
    return trace


def trace_to_csv(trace, path):
    """Write ``iter,value,evals,theta0,theta1,...``."""
    width = len(trace.records[0].theta) if trace.records else 0
    columns = ["iter", "value", "evals"] + [f"theta{j}" for j in range(width)]
    rows = []
    for r in trace.records:
        row = {"iter": r.iteration, "value": r.value, "evals": r.evaluations}
        row.update({f"theta{j}": float(t) for j, t in enumerate(r.theta)})
        rows.append(row)
    return emit_curve(rows, path, columns=columns)

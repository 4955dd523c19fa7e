"""Constrained least-squares fitting with restarts.

Two families of monotone box-constrained solvers are available: projected
gradient descent with backtracking (``step_rule`` ``'bb'`` or ``'armijo'``)
and L-BFGS-B (``'lbfgsb'``).  For L-BFGS-B the head weights are carried as
softmax logits so that the simplex constraint becomes unconstrained.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..core import SIGMOID
from ..errors import InvalidConfigError, OptimizationFailureError
from .measures import Box, Dims, FrozenProjections, random_measure
from .regression import RegressionDataset, ls_objective, ls_objective_grad

log = logging.getLogger(__name__)

STEP_RULES = ("bb", "armijo", "lbfgsb")


@dataclass(frozen=True)
class FitOptions:
    """``step_rule='bb'`` seeds each backtracking search with a Barzilai-Borwein
    step; ``'armijo'`` reuses the last accepted step, doubled; ``'lbfgsb'``
    hands the per-sample objective to L-BFGS-B, with ``tol`` as its ``ftol``."""

    restarts: int = 5
    max_iters: int = 10_000
    tol: float = 1e-10
    patience: int = 3
    step_rule: str = "bb"
    armijo_c: float = 1e-4
    init_scale: float = 1.0
    box: Box = field(default_factory=Box)

    def __post_init__(self):
        if self.restarts < 1:
            raise InvalidConfigError("restarts must be >= 1", key="restarts")
        if self.max_iters < 1:
            raise InvalidConfigError("max_iters must be >= 1", key="max_iters")
        if not self.tol > 0:
            raise InvalidConfigError("tol must be positive", key="tol")
        if self.step_rule not in STEP_RULES:
            raise InvalidConfigError(f"step_rule must be one of {STEP_RULES}", key="step_rule")


@dataclass
class RestartResult:
    measure: object
    objective: float
    trace: list
    iterations: int


@dataclass
class FitResult:
    measure: object
    objective: float
    trace: list
    iterations: int
    restart: int
    restart_objectives: list


def minimize_projected(G0, P: FrozenProjections, data: RegressionDataset, opts: FitOptions) -> RestartResult:
    """Monotone projected gradient descent from ``G0``.

    Every accepted step satisfies the Armijo condition along the projection
    arc, so the objective trace never increases.  Stops after ``patience``
    consecutive steps whose relative decrease is below ``tol``, when the
    projected step vanishes, or after ``max_iters``.
    """
    scale = 1.0 / max(data.n, 1)
    G = G0.project(opts.box)
    f, grad_m = ls_objective_grad(G, P, data)
    if not np.isfinite(f):
        return RestartResult(G, f, [f], 0)
    theta, grad = G.to_vector(), grad_m.to_vector() * scale
    trace = [f]
    t = 1.0
    quiet = 0
    it = 0
    for it in range(1, opts.max_iters + 1):
        accepted = False
        while t > 1e-16:
            cand = G.from_vector(theta - t * grad).project(opts.box)
            cand_theta = cand.to_vector()
            step = cand_theta - theta
            if not np.any(step):
                break
            f_new, grad_new_m = ls_objective_grad(cand, P, data)
            if np.isfinite(f_new) and f_new * scale <= f * scale + opts.armijo_c * float(grad @ step):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        grad_new = grad_new_m.to_vector() * scale
        if opts.step_rule == "bb":
            y = grad_new - grad
            sy = float(step @ y)
            t = float(step @ step) / sy if sy > 0 else 2.0 * t
        else:
            t = 2.0 * t
        t = min(max(t, 1e-10), 1e10)
        rel = (f - f_new) / max(f, 1e-300)
        G, theta, grad, f = cand, cand_theta, grad_new, f_new
        trace.append(f)
        quiet = quiet + 1 if rel < opts.tol else 0
        if quiet >= opts.patience:
            break
    return RestartResult(G, f, trace, it)


def minimize_lbfgsb(G0, P: FrozenProjections, data: RegressionDataset, opts: FitOptions) -> RestartResult:
    """L-BFGS-B from ``G0`` on the per-sample objective.

    ``pi = softmax(omega)`` with free logits ``omega``; every other variable
    keeps its box bound.  The trace records the objective at each accepted
    iterate, which the solver's line search keeps non-increasing.
    """
    G = G0.project(opts.box)
    H = G.H
    scale = 1.0 / max(data.n, 1)
    omega0 = np.log(np.maximum(G.pi, 1e-12))
    z0 = np.concatenate([omega0 - omega0.max(), G.to_vector()[H:]])
    bounds = [(None, None)] * H
    for name in G.ARRAYS[1:]:
        size = getattr(G, name).size
        if name == "c":
            bounds += [(-opts.box.c_max, opts.box.c_max)] * size
        elif name in G.FACTORS:
            bounds += [(-opts.box.theta_max, opts.box.theta_max)] * size
        else:
            bounds += [(None, None)] * size
    z0 = np.clip(z0, [-np.inf if lo is None else lo for lo, _ in bounds],
                 [np.inf if hi is None else hi for _, hi in bounds])

    def unpack(z):
        w = np.exp(z[:H] - z[:H].max())
        return G.from_vector(np.concatenate([w / w.sum(), z[H:]]))

    seen = {}

    def fun(z):
        M = unpack(z)
        f, g = ls_objective_grad(M, P, data)
        seen["last"] = (z.copy(), f)
        if not np.isfinite(f):
            return np.inf, np.zeros_like(z)
        gv = g.to_vector()
        gpi = gv[:H]
        domega = M.pi * (gpi - M.pi @ gpi)
        return f * scale, np.concatenate([domega, gv[H:]]) * scale

    f0 = ls_objective(G, P, data)
    trace = [f0]

    def callback(zk):
        z_last, f_last = seen["last"]
        f = f_last if np.array_equal(z_last, zk) else ls_objective(unpack(zk), P, data)
        trace.append(f)

    if not np.isfinite(f0):
        return RestartResult(G, f0, trace, 0)
    res = minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=bounds, callback=callback,
                   options={"maxiter": opts.max_iters, "ftol": opts.tol, "gtol": 1e-12, "maxcor": 30})
    M = unpack(res.x)
    f = ls_objective(M, P, data)
    if f != trace[-1]:
        trace.append(f)
    return RestartResult(M, f, trace, int(res.nit))


def fit_least_squares(kind: str, dims: Dims, data: RegressionDataset, P: FrozenProjections,
                      opts: FitOptions = FitOptions(), rng: np.random.Generator | None = None, init=None,
                      true_L: int | None = None, sigma1=SIGMOID, sigma2=SIGMOID,
                      fit_generators: bool = False) -> FitResult:
    """Best-of-restarts least-squares estimate over measures with ``dims.L`` experts per head.

    Restart 0 starts from ``init`` when given; the rest start from random
    measures, each drawn from its own child stream of ``rng``.  Ties in the
    final objective go to the lowest restart index.  The returned measure has
    its gating offsets normalised to ``logsumexp(c) == 0``.
    """
    if true_L is not None and dims.L < true_L:
        raise InvalidConfigError(f"over-specified L'={dims.L} must be >= true L={true_L}", key="L_fit")
    rng = np.random.default_rng() if rng is None else rng
    streams = rng.spawn(opts.restarts)
    results = []
    for k, stream in enumerate(streams):
        if k == 0 and init is not None:
            G0 = init
        else:
            G0 = random_measure(kind, dims, stream, opts.init_scale, sigma1, sigma2, fit_generators)
        solver = minimize_lbfgsb if opts.step_rule == "lbfgsb" else minimize_projected
        res = solver(G0, P, data, opts)
        log.debug("restart %d: objective %.6g after %d iterations", k, res.objective, res.iterations)
        results.append(res)
    finite = [(res.objective, k) for k, res in enumerate(results) if np.isfinite(res.objective)]
    if not finite:
        raise OptimizationFailureError("all restarts produced a non-finite objective")
    _, best = min(finite)
    res = results[best]
    return FitResult(measure=res.measure.normalized(), objective=res.objective, trace=res.trace,
                     iterations=res.iterations, restart=best,
                     restart_objectives=[r.objective for r in results])

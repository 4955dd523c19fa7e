"""Regression functions, synthetic data and the least-squares objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import InvalidInputError
from .measures import FrozenProjections, MixingMeasure, SharedMixingMeasure


@dataclass
class RegressionDataset:
    X: np.ndarray  # (n, d)
    Y: np.ndarray  # (n, d)
    sigma_noise: float

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, n: int) -> "RegressionDataset":
        return RegressionDataset(self.X[:n], self.Y[:n], self.sigma_noise)


def _as_batch(x, d: int):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.ascontiguousarray(np.atleast_2d(x))
    if X.shape[1] != d:
        raise InvalidInputError(f"inputs must have {d} columns, got {X.shape[1]}")
    return X, single


def eval_g(G, P: FrozenProjections, x, return_gates: bool = False):
    """Evaluate the mixture regression function at one input or a batch.

    With ``return_gates`` also returns the inner softmax weights
    ``(n, H, L)``.
    """
    X, single = _as_batch(x, G.d)
    S, V = G.effective(P)
    g, gates = kernels.mixture_forward(X, np.ascontiguousarray(G.pi, dtype=np.float64),
                                       np.ascontiguousarray(G.c, dtype=np.float64), S, V)
    if single:
        g, gates = g[0], gates[0]
    return (g, gates) if return_gates else g


def eval_g_nonshared(G: MixingMeasure, P: FrozenProjections, x, return_gates: bool = False):
    if not isinstance(G, MixingMeasure):
        raise InvalidInputError("eval_g_nonshared expects a MixingMeasure")
    return eval_g(G, P, x, return_gates)


def eval_g_shared(G: SharedMixingMeasure, P: FrozenProjections, x, return_gates: bool = False):
    if not isinstance(G, SharedMixingMeasure):
        raise InvalidInputError("eval_g_shared expects a SharedMixingMeasure")
    return eval_g(G, P, x, return_gates)


def generate_dataset(G, P: FrozenProjections, n: int, sigma_noise: float, rng: np.random.Generator,
                     x_max: float = 1.0) -> RegressionDataset:
    """``X ~ Uniform[-x_max, x_max]^d``, ``Y = g(X) + sigma_noise * z`` with standard normal ``z``."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if sigma_noise < 0:
        raise InvalidInputError("sigma_noise must be >= 0")
    X = rng.uniform(-x_max, x_max, (n, G.d))
    Y = eval_g(G, P, X) + sigma_noise * rng.standard_normal((n, G.d))
    return RegressionDataset(X, Y, sigma_noise)


def ls_objective(G, P: FrozenProjections, data: RegressionDataset) -> float:
    """Sum of squared residuals ``sum_i ||Y_i - g_G(X_i)||^2``."""
    if data.n == 0:
        return 0.0
    S, V = G.effective(P)
    obj, _ = kernels.objective_grad(np.ascontiguousarray(data.X), np.ascontiguousarray(data.Y),
                                    np.ascontiguousarray(G.pi, dtype=np.float64),
                                    np.ascontiguousarray(G.c, dtype=np.float64), S, V, False)
    return obj


def ls_objective_grad(G, P: FrozenProjections, data: RegressionDataset):
    """Objective and its gradient, returned as a measure of the same family."""
    S, V = G.effective(P)
    obj, (dpi, dc, dS, dV) = kernels.objective_grad(
        np.ascontiguousarray(data.X), np.ascontiguousarray(data.Y),
        np.ascontiguousarray(G.pi, dtype=np.float64), np.ascontiguousarray(G.c, dtype=np.float64), S, V, True)
    return obj, G.pullback(P, dpi, dc, dS, dV)


def l2_error(G_fit, G_true, P: FrozenProjections, X_eval: np.ndarray) -> float:
    """Monte-Carlo estimate of ``||g_fit - g_true||_{L2(mu)}`` on the points ``X_eval``."""
    diff = eval_g(G_fit, P, X_eval) - eval_g(G_true, P, X_eval)
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))

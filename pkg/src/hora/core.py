"""Dense numeric helpers used throughout the package.

Matrices and vectors are plain C-contiguous ``float64`` numpy arrays; every
public function here is pure.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError, OracleFailureError

LN_EPS = 1e-8
DEFAULT_LEAKY_SLOPE = 0.01


def as_matrix(a, name="matrix", shape=None) -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float64 array, optionally checking its shape."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError(f"{name}: expected 2-D array, got ndim={m.ndim}")
    if shape is not None and m.shape != tuple(shape):
        raise InvalidInputError(f"{name}: expected shape {tuple(shape)}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name}: contains non-finite entries")
    return m


def softmax_rows(scores) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("softmax_rows: non-finite scores")
    if s.ndim == 1:
        return softmax_rows(s[None, :])[0]
    z = np.exp(s - s.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def layer_norm(v, eps: float = LN_EPS) -> np.ndarray:
    """Parameter-free normalisation ``(v - mean) / max(std, eps)``.

    ``std`` is the population standard deviation.  Flooring the denominator at
    ``eps`` keeps the output exactly unit-variance whenever ``std > eps`` and
    maps a constant vector to zeros.
    """
    x = np.asarray(v, dtype=np.float64)
    if x.size == 0:
        raise InvalidInputError("layer_norm: empty input")
    centred = x - x.mean()
    return centred / max(float(np.sqrt(np.mean(centred * centred))), eps)


@dataclass(frozen=True)
class Activation:
    """Elementwise nonlinearity: ``sigmoid``, ``leaky_relu`` or ``identity``."""

    kind: str = "sigmoid"
    slope: float = DEFAULT_LEAKY_SLOPE

    def __post_init__(self):
        if self.kind not in ("sigmoid", "leaky_relu", "identity"):
            raise InvalidInputError(f"unknown activation kind {self.kind!r}")
        if self.kind == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise InvalidInputError("leaky_relu slope must lie in (0, 1)")

    def __call__(self, m):
        return apply_activation(self, m)

    def derivative(self, m) -> np.ndarray:
        """Elementwise derivative evaluated at the pre-activation ``m``."""
        x = np.asarray(m, dtype=np.float64)
        if self.kind == "sigmoid":
            s = _sigmoid(x)
            return s * (1.0 - s)
        if self.kind == "leaky_relu":
            return np.where(x > 0, 1.0, self.slope)
        return np.ones_like(x)

    def to_dict(self) -> dict:
        if self.kind == "leaky_relu":
            return {"kind": self.kind, "slope": self.slope}
        return {"kind": self.kind}

    @classmethod
    def parse(cls, spec) -> "Activation":
        if isinstance(spec, Activation):
            return spec
        if isinstance(spec, str):
            return cls(spec)
        return cls(**spec)


SIGMOID = Activation("sigmoid")
IDENTITY = Activation("identity")


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def apply_activation(kind: Activation, m) -> np.ndarray:
    x = np.asarray(m, dtype=np.float64)
    if kind.kind == "sigmoid":
        return _sigmoid(x)
    if kind.kind == "leaky_relu":
        return np.where(x > 0, x, kind.slope * x)
    return x.copy()


def finite_diff_grad(f: Callable[[np.ndarray], float], theta, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if not h > 0:
        raise InvalidInputError("finite_diff_grad: step must be positive")
    theta = np.array(theta, dtype=np.float64).ravel()
    grad = np.empty_like(theta)
    for k in range(theta.size):
        orig = theta[k]
        theta[k] = orig + h
        fp = float(f(theta.copy()))
        theta[k] = orig - h
        fm = float(f(theta.copy()))
        theta[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OracleFailureError(f"non-finite evaluation at coordinate {k}")
        grad[k] = (fp - fm) / (2.0 * h)
    return grad


def derive_seed(master_seed: int, stream_label: str) -> int:
    """Hash ``(master_seed, stream_label)`` to a 64-bit stream seed."""
    payload = f"{int(master_seed) & 0xFFFFFFFFFFFFFFFF}:{stream_label}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def make_rng(master_seed: int, stream_label: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, stream_label)))


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform draws on ``[-sqrt(6/fan_in), sqrt(6/fan_in)]``."""
    if fan_in < 1:
        raise InvalidInputError("kaiming_uniform: fan_in must be positive")
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)

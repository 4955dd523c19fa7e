"""Mixing measures for the two regression families and their ground-truth generator.

Non-shared family: each (head h, expert j) owns free low-rank factors
``B_Q, A_Q, B_V, A_V``.  Shared family: the update for (h, j) is
``sigma2(W2[j] @ B[h, j]) @ sigma1(W1[j] @ A[j])`` and enters both the query
and the value map.

All parameters live in a compact box: ``pi`` on the simplex, ``c`` in
``[-c_max, c_max]`` and every factor entry in ``[-theta_max, theta_max]``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..core import SIGMOID, Activation, apply_activation
from ..errors import GenerationFailureError, InvalidConfigError


@dataclass(frozen=True)
class Box:
    theta_max: float = 1.0
    c_max: float = 2.0

    def __post_init__(self):
        if not (self.theta_max > 0 and self.c_max > 0):
            raise InvalidConfigError("box bounds must be positive", key="theta_max")


@dataclass(frozen=True)
class Dims:
    H: int
    L: int
    d: int
    r: int

    def __post_init__(self):
        for key in ("H", "L", "d", "r"):
            if int(getattr(self, key)) < 1:
                raise InvalidConfigError(f"{key} must be >= 1", key=key)
        if self.r > self.d:
            raise InvalidConfigError(f"rank r={self.r} exceeds dimension d={self.d}", key="r")


@dataclass
class FrozenProjections:
    """Per-head frozen maps ``P_Q, P_K, P_V``, each ``(H, d, d)``."""

    P_Q: np.ndarray
    P_K: np.ndarray
    P_V: np.ndarray

    @property
    def H(self) -> int:
        return self.P_Q.shape[0]

    @classmethod
    def random(cls, H: int, d: int, rng: np.random.Generator, scale: float = 1.0,
               key_scale: float = 1.0) -> "FrozenProjections":
        """Gaussian entries with std ``scale / sqrt(d)``; ``P_K`` is further multiplied by
        ``key_scale``, which sharpens how strongly the gating depends on ``x``."""
        s = scale / np.sqrt(d)
        P_Q, P_K, P_V = (rng.normal(0, s, (H, d, d)) for _ in range(3))
        return cls(P_Q, key_scale * P_K, P_V)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("P_Q", "P_K", "P_V")}


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


class _MeasureBase:
    """Shared machinery: flat packing and box projection."""

    ARRAYS: tuple = ()
    FACTORS: tuple = ()

    def arrays(self):
        return [getattr(self, k) for k in self.ARRAYS]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(a) for a in self.arrays()])

    def from_vector(self, theta: np.ndarray):
        parts, off = {}, 0
        for name in self.ARRAYS:
            shape = getattr(self, name).shape
            size = int(np.prod(shape))
            parts[name] = np.array(theta[off:off + size]).reshape(shape)
            off += size
        return dataclasses.replace(self, **parts)

    def project(self, box: Box):
        """Clip into the compact parameter box (``pi`` onto the simplex)."""
        parts = {"pi": project_simplex(self.pi), "c": np.clip(self.c, -box.c_max, box.c_max)}
        for name in self.FACTORS:
            if name not in self.ARRAYS:
                continue  # frozen generators are not optimisation variables
            parts[name] = np.clip(getattr(self, name), -box.theta_max, box.theta_max)
        return dataclasses.replace(self, **parts)

    def normalized(self):
        """Shift ``c`` so that ``logsumexp(c) == 0``; the regression function is unchanged."""
        m = self.c.max()
        return dataclasses.replace(self, c=self.c - (m + np.log(np.exp(self.c - m).sum())))

    @property
    def H(self) -> int:
        return self.pi.size

    @property
    def L(self) -> int:
        return self.c.size


@dataclass
class MixingMeasure(_MeasureBase):
    pi: np.ndarray   # (H,)
    c: np.ndarray    # (L,)
    B_Q: np.ndarray  # (H, L, d, r)
    A_Q: np.ndarray  # (H, L, r, d)
    B_V: np.ndarray
    A_V: np.ndarray

    ARRAYS = ("pi", "c", "B_Q", "A_Q", "B_V", "A_V")
    FACTORS = ("B_Q", "A_Q", "B_V", "A_V")
    kind = "nonshared"

    @property
    def d(self) -> int:
        return self.B_Q.shape[2]

    @property
    def r(self) -> int:
        return self.B_Q.shape[3]

    def effective(self, P: FrozenProjections):
        """Bilinear score forms ``S`` and value maps ``V``, each ``(H, L, d, d)``."""
        dQ = self.B_Q @ self.A_Q
        S = (P.P_Q[:, None] + dQ) @ P.P_K[:, None]
        V = P.P_V[:, None] + self.B_V @ self.A_V
        return np.ascontiguousarray(S), np.ascontiguousarray(V)

    def pullback(self, P: FrozenProjections, dpi, dc, dS, dV) -> "MixingMeasure":
        """Chain gradients w.r.t. ``S, V`` back to the factors."""
        ddQ = dS @ np.swapaxes(P.P_K, -1, -2)[:, None]
        return MixingMeasure(
            pi=dpi, c=dc,
            B_Q=ddQ @ np.swapaxes(self.A_Q, -1, -2),
            A_Q=np.swapaxes(self.B_Q, -1, -2) @ ddQ,
            B_V=dV @ np.swapaxes(self.A_V, -1, -2),
            A_V=np.swapaxes(self.B_V, -1, -2) @ dV,
        )

    def atom_parts(self):
        """Per-(h, j) factor tuple used for Voronoi assignment, each ``(H, L, ...)``."""
        return [self.B_Q, self.A_Q, self.B_V, self.A_V]


@dataclass
class SharedMixingMeasure(_MeasureBase):
    pi: np.ndarray   # (H,)
    c: np.ndarray    # (L,)
    W1: np.ndarray   # (L, r, r)
    A: np.ndarray    # (L, r, d)
    W2: np.ndarray   # (L, d, d)
    B: np.ndarray    # (H, L, d, r)
    sigma1: Activation = SIGMOID
    sigma2: Activation = SIGMOID
    fit_generators: bool = False

    FACTORS = ("W1", "A", "W2", "B")
    kind = "shared"

    @property
    def ARRAYS(self):
        if self.fit_generators:
            return ("pi", "c", "W1", "A", "W2", "B")
        return ("pi", "c", "A", "B")

    @property
    def d(self) -> int:
        return self.B.shape[2]

    @property
    def r(self) -> int:
        return self.B.shape[3]

    def pre_activations(self):
        """``(W2 @ B, W1 @ A)`` with shapes ``(H, L, d, r)`` and ``(L, r, d)``."""
        return self.W2[None] @ self.B, self.W1 @ self.A

    def low_rank_updates(self) -> np.ndarray:
        Z2, Z1 = self.pre_activations()
        return apply_activation(self.sigma2, Z2) @ apply_activation(self.sigma1, Z1)[None]

    def effective(self, P: FrozenProjections):
        delta = self.low_rank_updates()
        S = (P.P_Q[:, None] + delta) @ P.P_K[:, None]
        V = P.P_V[:, None] + delta
        return np.ascontiguousarray(S), np.ascontiguousarray(V)

    def pullback(self, P: FrozenProjections, dpi, dc, dS, dV) -> "SharedMixingMeasure":
        Z2, Z1 = self.pre_activations()
        U = apply_activation(self.sigma2, Z2)           # (H, L, d, r)
        Vt = apply_activation(self.sigma1, Z1)          # (L, r, d)
        ddelta = dS @ np.swapaxes(P.P_K, -1, -2)[:, None] + dV
        dU = ddelta @ np.swapaxes(Vt, -1, -2)[None]     # (H, L, d, r)
        dVt = (np.swapaxes(U, -1, -2) @ ddelta).sum(axis=0)  # (L, r, d)
        dZ2 = dU * self.sigma2.derivative(Z2)
        dZ1 = dVt * self.sigma1.derivative(Z1)
        return dataclasses.replace(
            self, pi=dpi, c=dc,
            W2=(dZ2 @ np.swapaxes(self.B, -1, -2)).sum(axis=0),
            B=np.swapaxes(self.W2, -1, -2)[None] @ dZ2,
            W1=dZ1 @ np.swapaxes(self.A, -1, -2),
            A=np.swapaxes(self.W1, -1, -2) @ dZ1,
        )

    def atom_parts(self):
        Z2, Z1 = self.pre_activations()
        return [Z2, np.broadcast_to(Z1[None], (self.H,) + Z1.shape)]


def atoms(measure) -> np.ndarray:
    """Stack each (h, j) factor tuple into one flat vector: ``(H, L, k)``."""
    H, L = measure.H, measure.L
    return np.concatenate([np.reshape(p, (H, L, -1)) for p in measure.atom_parts()], axis=2)


def random_measure(kind: str, dims: Dims, rng: np.random.Generator, scale: float = 1.0,
                   sigma1=SIGMOID, sigma2=SIGMOID, fit_generators: bool = False):
    """Uniform factors on ``[-scale, scale]``, Dirichlet weights, small gating offsets."""
    H, L, d, r = dims.H, dims.L, dims.d, dims.r
    pi = rng.dirichlet(np.ones(H))
    c = rng.uniform(-0.5, 0.5, L)
    u = lambda *shape: rng.uniform(-scale, scale, shape)
    if kind == "nonshared":
        return MixingMeasure(pi, c, u(H, L, d, r), u(H, L, r, d), u(H, L, d, r), u(H, L, r, d))
    if kind == "shared":
        eye_r = np.broadcast_to(np.eye(r), (L, r, r)).copy()
        eye_d = np.broadcast_to(np.eye(d), (L, d, d)).copy()
        return SharedMixingMeasure(pi, c, eye_r, u(L, r, d), eye_d, u(H, L, d, r),
                                   Activation.parse(sigma1), Activation.parse(sigma2), fit_generators)
    raise InvalidConfigError(f"unknown family {kind!r}", key="kind")


def _anchor(block: np.ndarray, axis: int, value: float, rng: np.random.Generator) -> np.ndarray:
    # one entry per slice along ``axis`` is pushed to the box face
    moved = np.moveaxis(block.copy(), axis, -1)
    flat = moved.reshape(-1, moved.shape[-1])
    for row in flat:
        row[rng.integers(row.size)] = value
    return np.moveaxis(flat.reshape(moved.shape), -1, axis)


def generate_ground_truth(kind: str, dims: Dims, delta_sep: float, rng: np.random.Generator,
                          box: Box = Box(), scale: float | None = None, sigma1=SIGMOID, sigma2=SIGMOID,
                          pi_gap: float = 0.1, min_singular: float = 1e-3, anchor_scale: bool = True,
                          key_scale: float = 1.0, max_retries: int = 1000):
    """Draw a separated ground-truth mixing measure and frozen projections.

    Atoms within each head are pairwise at least ``delta_sep`` apart in the
    stacked factor space; every factor has smallest singular value at least
    ``min_singular``; head weights differ pairwise by at least ``pi_gap``.

    For the shared family with ``anchor_scale`` the largest pre-activation of
    every column of ``B`` and every row of ``A`` sits on the box face
    ``theta_max``.  With saturating activations the product
    ``sigma2(B) @ sigma1(A)`` is otherwise invariant to ``(k*u, v/k)``
    rescalings; pinning the extremes makes the factorisation unique inside
    the box.
    """
    if delta_sep <= 0:
        raise InvalidConfigError("delta_sep must be positive", key="delta_sep")
    scale = box.theta_max if scale is None else scale
    H, L, d, r = dims.H, dims.L, dims.d, dims.r
    k = (4 if kind == "nonshared" else 2) * d * r
    if L > 1 and delta_sep > 2 * scale * np.sqrt(k):
        raise GenerationFailureError(f"delta_sep={delta_sep} exceeds the box diameter {2 * scale * np.sqrt(k):.4g}")
    if H > 1 and pi_gap * (H - 1) >= 1.0:
        raise GenerationFailureError("pi_gap too large for the number of heads")

    P = FrozenProjections.random(H, d, rng, key_scale=key_scale)
    for _ in range(max_retries):
        truth = random_measure(kind, dims, rng, scale, sigma1, sigma2)
        if kind == "shared" and anchor_scale:
            truth.B = _anchor(truth.B, axis=2, value=box.theta_max, rng=rng)
            truth.A = _anchor(truth.A, axis=2, value=box.theta_max, rng=rng)
        if H > 1 and min(abs(a - b) for a, b in combinations(truth.pi, 2)) < pi_gap:
            continue
        if not _well_conditioned(truth, min_singular):
            continue
        at = atoms(truth)
        if all(np.linalg.norm(at[h, i] - at[h, j]) >= delta_sep
               for h in range(H) for i, j in combinations(range(L), 2)):
            return truth.normalized(), P
    raise GenerationFailureError(f"no admissible ground truth after {max_retries} draws")


def _well_conditioned(measure, min_singular: float) -> bool:
    for part in measure.atom_parts():
        sv = np.linalg.svd(part, compute_uv=False)
        if sv.min() < min_singular:
            return False
    return True

"""Multi-head self-attention with per-head LoRA and hypernetwork (HoRA) adapters.

Shape convention: ``W_Q[i], W_K[i]`` are ``d x d_k``, ``W_V[i]`` is ``d x d_v``,
``W_O`` is ``(H*d_v) x d``.  Adapters compose as ``delta_W = B @ A`` with
``B`` of shape ``d x r`` and ``A`` of shape ``r x d_k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SIGMOID, Activation, apply_activation, as_matrix, kaiming_uniform, layer_norm, softmax_rows
from .errors import InvalidConfigError, InvalidInputError


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AttentionConfig:
    d: int
    H: int
    N: int
    r: int

    def __post_init__(self):
        for key in ("d", "H", "N"):
            if int(getattr(self, key)) < 1:
                raise InvalidConfigError(f"{key} must be a positive integer", key=key)
        if self.d % self.H:
            raise InvalidConfigError(f"d={self.d} is not divisible by H={self.H} (need d % H == 0)", key="d")
        if self.r < 1:
            raise InvalidConfigError("adapter rank r must be >= 1", key="r")
        if self.r >= min(self.d, self.d_k):
            raise InvalidConfigError(f"rank r={self.r} must be < min(d, d_k)={min(self.d, self.d_k)}", key="r")

    @property
    def d_k(self) -> int:
        return self.d // self.H

    @property
    def d_v(self) -> int:
        return self.d // self.H


@dataclass(frozen=True)
class FrozenAttentionWeights:
    """Pre-trained projections, stacked per head: ``W_Q`` is ``(H, d, d_k)``."""

    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    W_O: np.ndarray

    def __post_init__(self):
        for name in ("W_Q", "W_K", "W_V", "W_O"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def check(self, cfg: AttentionConfig):
        H, d, dk, dv = cfg.H, cfg.d, cfg.d_k, cfg.d_v
        expected = {"W_Q": (H, d, dk), "W_K": (H, d, dk), "W_V": (H, d, dv), "W_O": (H * dv, d)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise InvalidInputError(f"{name}: expected shape {shape}, got {getattr(self, name).shape}")

    @classmethod
    def random(cls, cfg: AttentionConfig, rng: np.random.Generator, scale: float = 1.0):
        H, d, dk, dv = cfg.H, cfg.d, cfg.d_k, cfg.d_v
        s = scale / np.sqrt(d)
        return cls(
            W_Q=rng.normal(0, s, (H, d, dk)),
            W_K=rng.normal(0, s, (H, d, dk)),
            W_V=rng.normal(0, s, (H, d, dv)),
            W_O=rng.normal(0, scale / np.sqrt(H * dv), (H * dv, d)),
        )


@dataclass(frozen=True)
class LoraAdapterSet:
    """Shared ``A_Q, A_V`` (``r x d_k``) and per-head ``B_Q, B_V`` (``H x d x r``)."""

    A_Q: np.ndarray
    A_V: np.ndarray
    B_Q: np.ndarray
    B_V: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        for name in ("A_Q", "A_V", "B_Q", "B_V"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not self.scale > 0:
            raise InvalidConfigError("LoRA scale must be positive", key="scale")

    def check(self, cfg: AttentionConfig):
        H, d, r = cfg.H, cfg.d, cfg.r
        expected = {"A_Q": (r, cfg.d_k), "A_V": (r, cfg.d_v), "B_Q": (H, d, r), "B_V": (H, d, r)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise InvalidInputError(f"{name}: expected shape {shape}, got {getattr(self, name).shape}")

    def delta_q(self) -> np.ndarray:
        return self.scale * (self.B_Q @ self.A_Q)

    def delta_v(self) -> np.ndarray:
        return self.scale * (self.B_V @ self.A_V)

    @classmethod
    def zeros(cls, cfg: AttentionConfig, scale: float = 1.0):
        H, d, r = cfg.H, cfg.d, cfg.r
        return cls(np.zeros((r, cfg.d_k)), np.zeros((r, cfg.d_v)), np.zeros((H, d, r)), np.zeros((H, d, r)), scale)

    @classmethod
    def random(cls, cfg: AttentionConfig, rng: np.random.Generator, scale: float = 1.0, std: float = 0.3):
        H, d, r = cfg.H, cfg.d, cfg.r
        return cls(
            A_Q=rng.normal(0, std, (r, cfg.d_k)),
            A_V=rng.normal(0, std, (r, cfg.d_v)),
            B_Q=rng.normal(0, std, (H, d, r)),
            B_V=rng.normal(0, std, (H, d, r)),
            scale=scale,
        )


@dataclass(frozen=True)
class HoraHypernetwork:
    """Learnable generators for the per-head LoRA factors.

    ``A`` holds the diagonal of the shared ``r x r`` core.  ``B_emb`` is
    ``(H, d_e)``; ``W_QB2`` and ``W_VB2`` map the hidden layer to a flattened
    row-major ``d x r`` factor.
    """

    A: np.ndarray
    W_QA: np.ndarray
    W_VA: np.ndarray
    B_emb: np.ndarray
    W_B1: np.ndarray
    W_QB2: np.ndarray
    W_VB2: np.ndarray
    sigma1: Activation = SIGMOID
    sigma2: Activation = SIGMOID
    scale: float = 1.0

    def __post_init__(self):
        for name in ("A", "W_QA", "W_VA", "B_emb", "W_B1", "W_QB2", "W_VB2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def d_e(self) -> int:
        return self.B_emb.shape[1]

    @property
    def d_hid(self) -> int:
        return self.W_B1.shape[0]

    @classmethod
    def initialize(cls, cfg: AttentionConfig, d_e: int, d_hid: int, rng: np.random.Generator,
                   sigma1=SIGMOID, sigma2=SIGMOID, scale: float = 1.0) -> "HoraHypernetwork":
        """Build a hypernetwork with the standard initialisation.

        Query-side generators, the shared first layer and the head embeddings
        are Kaiming-uniform; value-side generators start at zero so the value
        update is exactly zero.  The diagonal core starts at ones.
        """
        if d_e < 1 or d_hid < 1:
            raise InvalidConfigError("d_e and d_hid must be positive", key="d_e" if d_e < 1 else "d_hid")
        d, r, H = cfg.d, cfg.r, cfg.H
        return cls(
            A=np.ones(r),
            W_QA=kaiming_uniform(rng, (r, cfg.d_k), fan_in=cfg.d_k),
            W_VA=np.zeros((r, cfg.d_v)),
            B_emb=kaiming_uniform(rng, (H, d_e), fan_in=d_e),
            W_B1=kaiming_uniform(rng, (d_hid, d_e), fan_in=d_e),
            W_QB2=kaiming_uniform(rng, (d * r, d_hid), fan_in=d_hid),
            W_VB2=np.zeros((d * r, d_hid)),
            sigma1=Activation.parse(sigma1),
            sigma2=Activation.parse(sigma2),
            scale=scale,
        )

    @classmethod
    def random(cls, cfg: AttentionConfig, d_e: int, d_hid: int, rng: np.random.Generator,
               sigma1=SIGMOID, sigma2=SIGMOID, std: float = 0.5) -> "HoraHypernetwork":
        d, r, H = cfg.d, cfg.r, cfg.H
        return cls(
            A=rng.normal(1.0, std, r),
            W_QA=rng.normal(0, std, (r, cfg.d_k)),
            W_VA=rng.normal(0, std, (r, cfg.d_v)),
            B_emb=rng.normal(0, 1.0, (H, d_e)),
            W_B1=rng.normal(0, std, (d_hid, d_e)),
            W_QB2=rng.normal(0, std, (d * r, d_hid)),
            W_VB2=rng.normal(0, std, (d * r, d_hid)),
            sigma1=Activation.parse(sigma1),
            sigma2=Activation.parse(sigma2),
        )


def _check_input(cfg: AttentionConfig, X) -> np.ndarray:
    return as_matrix(X, "X", (cfg.N, cfg.d))


def _attend(cfg: AttentionConfig, X, W_Q, W_K, W_V, W_O) -> np.ndarray:
    heads = []
    for i in range(cfg.H):
        scores = (X @ W_Q[i]) @ (X @ W_K[i]).T / np.sqrt(cfg.d_k)
        heads.append(softmax_rows(scores) @ (X @ W_V[i]))
    return np.concatenate(heads, axis=1) @ W_O


def mha_forward(cfg: AttentionConfig, w: FrozenAttentionWeights, X) -> np.ndarray:
    """``Concat(h_1..h_H) @ W_O`` with scaled dot-product attention per head."""
    X = _check_input(cfg, X)
    w.check(cfg)
    return _attend(cfg, X, w.W_Q, w.W_K, w.W_V, w.W_O)


def mh_lora_forward(cfg: AttentionConfig, w: FrozenAttentionWeights, adapters: LoraAdapterSet, X) -> np.ndarray:
    """Attention with query and value projections shifted by ``scale * B @ A``; keys frozen."""
    X = _check_input(cfg, X)
    w.check(cfg)
    adapters.check(cfg)
    return _attend(cfg, X, w.W_Q + adapters.delta_q(), w.W_K, w.W_V + adapters.delta_v(), w.W_O)


def hora_generate_adapters(hn: HoraHypernetwork, cfg: AttentionConfig) -> LoraAdapterSet:
    """Materialise the per-head LoRA factors produced by the hypernetwork."""
    d, r, H = cfg.d, cfg.r, cfg.H
    if hn.d_e < 1 or hn.d_hid < 1:
        raise InvalidConfigError("hypernetwork needs d_e >= 1 and d_hid >= 1", key="d_e" if hn.d_e < 1 else "d_hid")
    expected = {"A": (r,), "W_QA": (r, cfg.d_k), "W_VA": (r, cfg.d_v), "B_emb": (H, hn.d_e),
                "W_B1": (hn.d_hid, hn.d_e), "W_QB2": (d * r, hn.d_hid), "W_VB2": (d * r, hn.d_hid)}
    for name, shape in expected.items():
        if getattr(hn, name).shape != shape:
            raise InvalidInputError(f"{name}: expected shape {shape}, got {getattr(hn, name).shape}")

    A_Q = apply_activation(hn.sigma1, hn.A[:, None] * hn.W_QA)
    A_V = apply_activation(hn.sigma1, hn.A[:, None] * hn.W_VA)
    B_Q = np.empty((H, d, r))
    B_V = np.empty((H, d, r))
    for i in range(H):
        hidden = apply_activation(hn.sigma2, hn.W_B1 @ layer_norm(hn.B_emb[i]))
        B_Q[i] = (hn.W_QB2 @ hidden).reshape(d, r)
        B_V[i] = (hn.W_VB2 @ hidden).reshape(d, r)
    return LoraAdapterSet(A_Q=A_Q, A_V=A_V, B_Q=B_Q, B_V=B_V, scale=hn.scale)


def hora_forward(cfg: AttentionConfig, w: FrozenAttentionWeights, hn: HoraHypernetwork, X) -> np.ndarray:
    return mh_lora_forward(cfg, w, hora_generate_adapters(hn, cfg), X)


def param_count(kind: str, cfg: AttentionConfig, d_e: int = 0, d_hid: int = 0) -> int:
    """Number of trainable parameters of a LoRA or HoRA adapter set."""
    r, d, H = cfg.r, cfg.d, cfg.H
    if r < 1:
        raise InvalidConfigError("rank r must be >= 1", key="r")
    if kind == "lora":
        return r * cfg.d_k + r * cfg.d_v + 2 * H * d * r
    if kind == "hora":
        if d_e < 1 or d_hid < 1:
            raise InvalidConfigError("hora param count needs d_e >= 1 and d_hid >= 1", key="d_e" if d_e < 1 else "d_hid")
        return r + r * cfg.d_k + r * cfg.d_v + H * d_e + d_hid * d_e + 2 * d * r * d_hid
    raise InvalidInputError(f"unknown adapter kind {kind!r}")

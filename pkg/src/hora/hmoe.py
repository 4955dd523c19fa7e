"""Multi-head attention read as a two-level hierarchical mixture of experts.

Row ``i`` of the attention output is a mixture over heads (outer level) of
softmax-gated mixtures over key positions (inner level):

    out_i = sum_h sum_j softmax_j(s[h, i, :]) * f[h, j] @ W_O[h]

with ``s[h, i, j] = x_i^T W_Q[h] W_K[h]^T x_j / sqrt(d_k)`` and
``f[h, j] = x_j^T W_V[h]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionConfig, FrozenAttentionWeights, LoraAdapterSet, mh_lora_forward, mha_forward
from .core import as_matrix, softmax_rows
from .errors import InvalidInputError


@dataclass
class HmoeView:
    scores: np.ndarray   # (H, N, N): query position i, key position j
    experts: np.ndarray  # (H, N, d_v)
    W_O: np.ndarray      # (H, d_v, d)

    @property
    def H(self) -> int:
        return self.scores.shape[0]

    @property
    def N(self) -> int:
        return self.scores.shape[1]


def build_view(cfg: AttentionConfig, w: FrozenAttentionWeights, X, adapters: LoraAdapterSet | None = None) -> HmoeView:
    """Score and expert fields of the mixture, optionally refined by LoRA factors."""
    X = as_matrix(X, "X", (cfg.N, cfg.d))
    w.check(cfg)
    W_Q, W_V = w.W_Q, w.W_V
    if adapters is not None:
        adapters.check(cfg)
        W_Q = W_Q + adapters.delta_q()
        W_V = W_V + adapters.delta_v()
    H, N, dv = cfg.H, cfg.N, cfg.d_v
    scores = np.empty((H, N, N))
    experts = np.empty((H, N, dv))
    for h in range(H):
        bilinear = W_Q[h] @ w.W_K[h].T / np.sqrt(cfg.d_k)
        for i in range(N):
            for j in range(N):
                scores[h, i, j] = X[i] @ bilinear @ X[j]
        for j in range(N):
            experts[h, j] = X[j] @ W_V[h]
    return HmoeView(scores=scores, experts=experts, W_O=w.W_O.reshape(H, dv, cfg.d))


def gating_weights(view: HmoeView, i: int) -> np.ndarray:
    """Inner-level gate ``(H, N)`` for query row ``i``; each row sums to one."""
    if not 0 <= i < view.N:
        raise InvalidInputError(f"row index {i} out of range for N={view.N}")
    return softmax_rows(view.scores[:, i, :])


def hmoe_row_output(view: HmoeView, i: int) -> np.ndarray:
    gates = gating_weights(view, i)
    mixed = [gates[h] @ view.experts[h] for h in range(view.H)]
    # sum_h mixed[h] @ W_O[h], as one block product so rounding follows the attention pass
    return np.concatenate(mixed) @ view.W_O.reshape(-1, view.W_O.shape[2])


def hmoe_output(view: HmoeView) -> np.ndarray:
    return np.stack([hmoe_row_output(view, i) for i in range(view.N)])


@dataclass
class EquivalenceReport:
    max_abs_diff: float
    passed: bool
    tol: float


def check_equivalence(cfg: AttentionConfig, w: FrozenAttentionWeights, adapters: LoraAdapterSet | None, X,
                      tol: float = 1e-10, view: HmoeView | None = None) -> EquivalenceReport:
    """Compare every mixture row against the direct attention forward pass.

    ``view`` overrides the mixture fields built from the weights, which lets
    callers check a deliberately altered view against the same reference.
    """
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    if adapters is None:
        direct = mha_forward(cfg, w, X)
    else:
        direct = mh_lora_forward(cfg, w, adapters, X)
    if view is None:
        view = build_view(cfg, w, X, adapters)
    diff = float(np.max(np.abs(hmoe_output(view) - direct)))
    return EquivalenceReport(max_abs_diff=diff, passed=diff <= tol, tol=tol)

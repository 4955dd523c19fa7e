"""Randomised verification suites behind the ``verify-equivalence`` and ``grad-check`` commands.

Each suite returns one :class:`CheckRow` per case; a suite passes when every
row does.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    AttentionConfig,
    FrozenAttentionWeights,
    HoraHypernetwork,
    LoraAdapterSet,
    hora_generate_adapters,
    mh_lora_forward,
    mha_forward,
)
from .core import finite_diff_grad, make_rng
from .estimation import Dims, FrozenProjections, generate_dataset, ls_objective, ls_objective_grad, random_measure
from .hmoe import check_equivalence


@dataclass(frozen=True)
class CheckRow:
    check: str
    case: int
    value: float
    tol: float
    passed: bool


def random_attention_config(rng: np.random.Generator, d_max: int = 32, H_max: int = 4, N_max: int = 8):
    """Uniform over configs with ``d <= d_max``, ``H <= H_max``, ``N <= N_max`` and a valid rank."""
    H = int(rng.integers(1, H_max + 1))
    d_k = int(rng.integers(2, d_max // H + 1))
    r = int(rng.integers(1, d_k))
    return AttentionConfig(d=H * d_k, H=H, N=int(rng.integers(1, N_max + 1)), r=r)


def equivalence_suite(count: int = 100, seed: int = 0, tol: float = 1e-10, **bounds) -> list:
    """Attention output against its mixture-of-experts rewrite; even cases frozen, odd cases adapted."""
    rows = []
    for k in range(count):
        rng = make_rng(seed, f"equivalence/{k}")
        cfg = random_attention_config(rng, **bounds)
        w = FrozenAttentionWeights.random(cfg, rng)
        adapters = LoraAdapterSet.random(cfg, rng) if k % 2 else None
        X = rng.normal(size=(cfg.N, cfg.d))
        rep = check_equivalence(cfg, w, adapters, X, tol=tol)
        rows.append(CheckRow("mha_hmoe", k, rep.max_abs_diff, tol, rep.passed))
    return rows


def zero_adapter_suite(count: int = 100, seed: int = 0, tol: float = 1e-12, **bounds) -> list:
    rows = []
    for k in range(count):
        rng = make_rng(seed, f"zero-adapter/{k}")
        cfg = random_attention_config(rng, **bounds)
        w = FrozenAttentionWeights.random(cfg, rng)
        X = rng.normal(size=(cfg.N, cfg.d))
        diff = float(np.max(np.abs(mh_lora_forward(cfg, w, LoraAdapterSet.zeros(cfg), X) - mha_forward(cfg, w, X))))
        rows.append(CheckRow("zero_adapter", k, diff, tol, diff <= tol))
    return rows


def hora_init_suite(count: int = 50, seed: int = 0, **bounds) -> list:
    """Freshly initialised hypernetworks must generate exactly zero value factors."""
    rows = []
    for k in range(count):
        rng = make_rng(seed, f"hora-init/{k}")
        cfg = random_attention_config(rng, **bounds)
        hn = HoraHypernetwork.initialize(cfg, int(rng.integers(1, 17)), int(rng.integers(1, 17)), rng)
        B_V = hora_generate_adapters(hn, cfg).B_V
        value = float(np.max(np.abs(B_V)))
        rows.append(CheckRow("hora_init_zero", k, value, 0.0, value == 0.0))
    return rows


def gradient_rel_error(G, P, data, h: float = 1e-5) -> float:
    """Relative gap ``|g - g_fd| / |g_fd|`` between analytic and central-difference gradients."""
    _, grad = ls_objective_grad(G, P, data)
    g = grad.to_vector()
    fd = finite_diff_grad(lambda th: ls_objective(G.from_vector(th), P, data), G.to_vector(), h)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300))


def gradient_suite(points: int = 20, seed: int = 0, tol: float = 1e-5, kinds=("shared", "nonshared"),
                   dims: Dims = Dims(2, 2, 2, 1), n: int = 20) -> list:
    """Gradient of the least-squares objective at random candidates of each family.

    Shared candidates alternate between frozen and trainable generator matrices.
    """
    rows = []
    for kind in kinds:
        for k in range(points):
            rng = make_rng(seed, f"grad/{kind}/{k}")
            P = FrozenProjections.random(dims.H, dims.d, rng)
            truth = random_measure(kind, dims, rng)
            data = generate_dataset(truth, P, n, 0.1, rng)
            G = random_measure(kind, dims, rng, fit_generators=bool(k % 2))
            err = gradient_rel_error(G, P, data)
            rows.append(CheckRow(f"grad_{kind}", k, err, tol, err <= tol))
    return rows

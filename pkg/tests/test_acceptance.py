"""The ten acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the
"acceptance criteria" section of the pytest terminal summary.
"""
import json
import math
import time

import numpy as np
import pytest

from hora.attention import (
    AttentionConfig,
    FrozenAttentionWeights,
    HoraHypernetwork,
    LoraAdapterSet,
    hora_generate_adapters,
    mh_lora_forward,
    mha_forward,
    param_count,
)
from hora.checks import gradient_suite, random_attention_config
from hora.cli import EXIT_OK, main
from hora.config import DEFAULT_AUDIT_GRID
from hora.core import make_rng
from hora.estimation import Dims, generate_ground_truth, loss_d1_rho, loss_d2, voronoi_cells
from hora.experiments import SweepConfig
from hora.hmoe import check_equivalence

ACCEPTANCE_SWEEP = SweepConfig(kind="shared", H=2, L=2, L_fit=3, d=2, r=1, sigma_noise=0.1,
                               n_grid=(200, 632, 2000, 6325, 20000), trials=10, sigma1="sigmoid", sigma2="sigmoid")


def test_c1_mha_hmoe_equivalence(acceptance):
    start = time.perf_counter()
    worst = 0.0
    for k in range(100):
        rng = make_rng(1, f"acceptance/c1/{k}")
        cfg = random_attention_config(rng, d_max=32, H_max=4, N_max=8)
        w = FrozenAttentionWeights.random(cfg, rng)
        X = rng.normal(size=(cfg.N, cfg.d))
        for adapters in (None, LoraAdapterSet.random(cfg, rng)):
            worst = max(worst, check_equivalence(cfg, w, adapters, X, tol=1e-10).max_abs_diff)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 5.0
    acceptance(1, ok, f"MHA vs HMoE, 100 configs frozen+LoRA: max diff {worst:.2e} (<= 1e-10), {elapsed:.2f}s (< 5s)")
    assert ok


def test_c2_zero_adapter_identity(acceptance):
    worst = 0.0
    for k in range(100):
        rng = make_rng(1, f"acceptance/c2/{k}")
        cfg = random_attention_config(rng)
        w = FrozenAttentionWeights.random(cfg, rng)
        X = rng.normal(size=(cfg.N, cfg.d))
        diff = np.max(np.abs(mh_lora_forward(cfg, w, LoraAdapterSet.zeros(cfg), X) - mha_forward(cfg, w, X)))
        worst = max(worst, float(diff))
    ok = worst <= 1e-12
    acceptance(2, ok, f"zero adapters, 100 configs: max diff {worst:.2e} (<= 1e-12)")
    assert ok


def test_c3_hora_init_value_path_zero(acceptance):
    nonzero = 0
    for k in range(50):
        rng = make_rng(1, f"acceptance/c3/{k}")
        cfg = random_attention_config(rng)
        hn = HoraHypernetwork.initialize(cfg, int(rng.integers(1, 33)), int(rng.integers(1, 33)), rng)
        ad = hora_generate_adapters(hn, cfg)
        nonzero += int(np.count_nonzero(ad.B_V)) + int(np.count_nonzero(ad.delta_v()))
    ok = nonzero == 0
    acceptance(3, ok, f"HoRA init, 50 shapes: {nonzero} nonzero value-path entries (need 0)")
    assert ok


def test_c4_gradient_oracle(acceptance):
    start = time.perf_counter()
    rows = gradient_suite(points=20, seed=1, tol=1e-5)
    elapsed = time.perf_counter() - start
    counts = {k: sum(r.check == f"grad_{k}" for r in rows) for k in ("shared", "nonshared")}
    worst = max(r.value for r in rows)
    ok = all(r.passed for r in rows) and min(counts.values()) >= 20 and elapsed < 30.0
    acceptance(4, ok, f"gradients vs finite differences, {counts['shared']}+{counts['nonshared']} points: "
                      f"max rel err {worst:.2e} (<= 1e-5), {elapsed:.2f}s (< 30s)")
    assert ok


def _scaling(loss, truth, make_fitted, t_values=(1e-3, 2e-3, 4e-3)):
    """Factor-block values of ``loss`` along ``t * E``, plus the largest weight/mass residue."""
    vals, residue = [], 0.0
    for t in t_values:
        _, terms = loss(make_fitted(t), truth, return_terms=True)
        vals.append(terms["factors"])
        residue = max(residue, terms["weights"], terms["mass"])
    return vals, t_values, residue


def test_c5_voronoi_axioms(acceptance):
    import dataclasses

    rng = make_rng(1, "acceptance/c5")
    G, _ = generate_ground_truth("nonshared", Dims(2, 2, 2, 1), 1.0, rng)
    S, _ = generate_ground_truth("shared", Dims(2, 2, 2, 1), 0.5, rng)
    zero_ok = loss_d1_rho(G, G) == 0.0 and loss_d1_rho(G, G, rho=2.0) == 0.0 and loss_d2(S, S) == 0.0

    errs, residues = [], []
    E = np.zeros_like(G.B_V)
    E[1, 1, 0, 0] = 1.0
    for rho in (1.0, 2.0, 3.0):
        vals, ts, res = _scaling(lambda F, T, **kw: loss_d1_rho(F, T, rho=rho, **kw), G,
                                 lambda t: dataclasses.replace(G, B_V=G.B_V + t * E))
        errs += [abs(v / vals[0] - (t / ts[0]) ** rho) for v, t in zip(vals, ts)]
        residues.append(res)

    Eb = np.zeros_like(S.B)
    Eb[0, 0, 1, 0] = 1.0
    vals, ts, res = _scaling(loss_d2, S, lambda t: dataclasses.replace(S, B=S.B + t * Eb))
    errs += [abs(v / vals[0] - t / ts[0]) for v, t in zip(vals, ts)]
    residues.append(res)

    # two fitted atoms share true atom 0: split its mass, perturb the copy
    c = np.append(S.c, S.c[0] + math.log(0.4))
    c[0] = S.c[0] + math.log(0.6)
    pair = dataclasses.replace(S, c=c, A=np.concatenate([S.A, S.A[:1]]), B=np.concatenate([S.B, S.B[:, :1]], axis=1),
                               W1=np.concatenate([S.W1, S.W1[:1]]), W2=np.concatenate([S.W2, S.W2[:1]]))
    Ep = np.zeros_like(pair.B)
    Ep[1, 2, 0, 0] = 1.0
    assert voronoi_cells(dataclasses.replace(pair, B=pair.B + 1e-3 * Ep), S).cell(1, 0) == [0, 2]
    vals, ts, res = _scaling(loss_d2, S, lambda t: dataclasses.replace(pair, B=pair.B + t * Ep))
    errs += [abs(v / vals[0] - (t / ts[0]) ** 2) for v, t in zip(vals, ts)]
    residues.append(res)

    worst = max(errs)
    # weight/mass terms are untouched by factor perturbations; the split pair leaves only exp() rounding
    ok = zero_ok and worst <= 1e-10 and max(residues) <= 1e-15
    acceptance(5, ok, f"D(G,G)=0 exactly: {zero_ok}; factor-block homogeneity (D1 rho=1,2,3; D2 singleton/pair) "
                      f"max deviation {worst:.2e} (<= 1e-10); weight/mass residue {max(residues):.1e}")
    assert ok


@pytest.fixture(scope="module")
def acceptance_run(tmp_path_factory):
    """One CLI rate sweep on the acceptance config, with the non-shared comparison."""
    out = tmp_path_factory.mktemp("acceptance_sweep")
    cfg = out / "config.json"
    cfg.write_text(json.dumps({
        "kind": "shared", "dims": {"H": 2, "L": 2, "L_fit": 3, "d": 2, "r": 1},
        "n_grid": list(ACCEPTANCE_SWEEP.n_grid), "trials": 10, "sigma_noise": 0.1,
        "truth": {"sigma1": "sigmoid", "sigma2": "sigmoid"}, "compare": True,
    }))
    start = time.perf_counter()
    code = main(["--command", "rate-sweep", "--config", str(cfg), "--out", str(out / "run"), "--seed", "0"])
    elapsed = time.perf_counter() - start
    summary = json.loads((out / "run" / "summary.json").read_text())
    return code, elapsed, summary


@pytest.mark.slow
def test_c6_shared_rate(acceptance, acceptance_run):
    code, elapsed, summary = acceptance_run
    slope = summary["slopes"]["shared"]["loss_fit"]["slope"]
    medians = [round(m["loss"], 4) for m in summary["medians"]]
    ok = code == EXIT_OK and -0.70 <= slope <= -0.30 and elapsed <= 900
    acceptance(6, ok, f"median D2 slope {slope:.3f} (need [-0.70, -0.30]); medians {medians}; "
                      f"sweep+comparison {elapsed:.0f}s (<= 900s)")
    assert ok


@pytest.mark.slow
def test_c7_regression_function_rate(acceptance, acceptance_run):
    code, _, summary = acceptance_run
    slope = summary["slopes"]["shared"]["l2_fit"]["slope"]
    ok = code == EXIT_OK and slope <= -0.30
    acceptance(7, ok, f"median L2 error slope {slope:.3f} (need <= -0.30)")
    assert ok


@pytest.mark.slow
def test_c8_nonshared_comparison(acceptance, acceptance_run):
    code, _, summary = acceptance_run
    ns = summary["slopes"].get("nonshared", {}).get("loss_fit")
    sh = summary["slopes"].get("shared", {}).get("loss_fit")
    ok = (code == EXIT_OK and ns is not None and sh is not None and math.isfinite(ns["slope"])
          and summary["comparison"]["incomplete"] == 0)
    acceptance(8, ok, f"non-shared D1 slope {ns['slope'] if ns else float('nan'):.3f} reported beside shared D2 slope "
                      f"{sh['slope'] if sh else float('nan'):.3f} in summary.json")
    assert ok


def _summed_sizes(kind, d, H, r, d_e, d_hid):
    d_k = d_v = d // H
    if kind == "lora":
        shapes = [(r, d_k), (r, d_v)] + [(d, r)] * H * 2
    else:
        shapes = [(r, 1), (r, d_k), (r, d_v), (H, d_e), (d_hid, d_e), (d * r, d_hid), (d * r, d_hid)]
    return sum(a * b for a, b in shapes)


def test_c9_parameter_audit(acceptance):
    mismatches = 0
    for e in DEFAULT_AUDIT_GRID:
        cfg = AttentionConfig(d=e["d"], H=e["H"], N=1, r=e["r"])
        lora, hora = param_count("lora", cfg), param_count("hora", cfg, e["d_e"], e["d_hid"])
        mismatches += lora != _summed_sizes("lora", **e)
        mismatches += hora != _summed_sizes("hora", **e)
        identity = e["r"] + e["H"] * e["d_e"] + e["d_hid"] * e["d_e"] + 2 * e["d"] * e["r"] * e["d_hid"] \
            - 2 * e["H"] * e["d"] * e["r"]
        mismatches += (hora - lora) != identity
    ok = mismatches == 0 and len(DEFAULT_AUDIT_GRID) == 20
    acceptance(9, ok, f"param counts on {len(DEFAULT_AUDIT_GRID)} configs: {mismatches} mismatches (need 0)")
    assert ok


DETERMINISM_CONFIGS = {
    "verify-equivalence": {"cases": 20, "zero_adapter_cases": 20, "hora_init_cases": 10, "grad_points": 4},
    "grad-check": {"points": 5},
    "rate-sweep": {"n_grid": [50, 100, 200], "trials": 2, "optimizer": {"restarts": 2},
                   "evaluation": {"n_eval": 1000}},
    "sample-efficiency": {"n_grid": [50, 200, 400], "trials": 2, "optimizer": {"restarts": 2},
                          "evaluation": {"n_eval": 1000}, "fractions": [0.25, 1.0], "n_max": 400},
    "param-audit": {},
}


def test_c10_determinism(acceptance, tmp_path):
    differing = []
    for command, body in DETERMINISM_CONFIGS.items():
        cfg = tmp_path / f"{command}.json"
        cfg.write_text(json.dumps(body))
        outs = []
        for k in range(2):
            out = tmp_path / f"{command}-{k}"
            assert main(["--command", command, "--config", str(cfg), "--out", str(out), "--seed", "7"]) == EXIT_OK
            outs.append(out)
        for name in ("records.csv", "summary.json"):
            if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                differing.append(f"{command}/{name}")
    ok = not differing
    acceptance(10, ok, f"5 commands run twice: byte-identical records.csv and summary.json "
                       f"({', '.join(differing) if differing else 'all identical'})")
    assert ok

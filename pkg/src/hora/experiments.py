"""Rate sweeps over the sample size, log-log slope fits and parameter audits.

A sweep draws one ground truth, then for every ``(n, trial)`` pair draws a
fresh dataset, fits an over-specified measure and scores it with the Voronoi
loss of its family and a Monte-Carlo L2 error of the regression function.
Every random stream is derived from ``master_seed`` and a label, so records
do not depend on the order in which trials run.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionConfig, param_count
from .core import Activation, make_rng
from .errors import InvalidConfigError, InvalidInputError, OptimizationFailureError
from .estimation import (
    Box,
    Dims,
    FitOptions,
    fit_least_squares,
    generate_dataset,
    generate_ground_truth,
    l2_error,
    loss_d1_rho,
    loss_d2,
)
from .estimation.fitting import STEP_RULES

log = logging.getLogger(__name__)

KINDS = ("shared", "nonshared")


@dataclass(frozen=True)
class SweepConfig:
    kind: str = "shared"
    H: int = 2
    L: int = 2
    L_fit: int | None = None          # defaults to L + 1
    d: int = 2
    r: int = 1
    n_grid: tuple = (200, 632, 2000, 6325, 20000)
    trials: int = 10
    sigma_noise: float = 0.1
    master_seed: int = 0
    delta_sep: float = 1.5
    key_scale: float = 40.0
    theta_max: float = 1.0
    c_max: float = 2.0
    sigma1: str = "sigmoid"
    sigma2: str = "sigmoid"
    rho: float = 1.0
    restarts: int = 5
    max_iters: int = 10_000
    tol: float = 1e-10
    step_rule: str = "lbfgsb"
    n_eval: int = 10_000
    x_max: float = 1.0
    timing: bool = False              # wall-clock seconds break byte-reproducibility

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if self.L_fit is None:
            object.__setattr__(self, "L_fit", self.L + 1)
        if self.kind not in KINDS:
            raise InvalidConfigError(f"kind must be one of {KINDS}", key="kind")
        for key in ("H", "L", "d", "r", "trials", "restarts", "max_iters", "n_eval"):
            if int(getattr(self, key)) < 1:
                raise InvalidConfigError(f"{key} must be >= 1", key=key)
        if self.r > self.d:
            raise InvalidConfigError(f"rank r={self.r} exceeds dimension d={self.d}", key="r")
        if self.L_fit < self.L:
            raise InvalidConfigError(f"L_fit={self.L_fit} must be >= L={self.L}", key="L_fit")
        if not self.n_grid:
            raise InvalidConfigError("n_grid must not be empty", key="n_grid")
        if self.n_grid[0] < 1 or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise InvalidConfigError("n_grid must be positive and strictly increasing", key="n_grid")
        if self.sigma_noise < 0:
            raise InvalidConfigError("sigma_noise must be >= 0", key="sigma_noise")
        for key in ("delta_sep", "key_scale", "theta_max", "c_max", "tol", "x_max"):
            if not getattr(self, key) > 0:
                raise InvalidConfigError(f"{key} must be positive", key=key)
        if self.rho < 1:
            raise InvalidConfigError("rho must be >= 1", key="rho")
        if self.step_rule not in STEP_RULES:
            raise InvalidConfigError(f"step_rule must be one of {STEP_RULES}", key="step_rule")
        for key in ("sigma1", "sigma2"):
            try:
                Activation.parse(getattr(self, key))
            except (InvalidInputError, TypeError) as exc:
                raise InvalidConfigError(str(exc), key=key) from exc

    @property
    def dims(self) -> Dims:
        return Dims(self.H, self.L, self.d, self.r)

    @property
    def fit_dims(self) -> Dims:
        return Dims(self.H, self.L_fit, self.d, self.r)

    @property
    def box(self) -> Box:
        return Box(self.theta_max, self.c_max)

    def fit_options(self) -> FitOptions:
        return FitOptions(restarts=self.restarts, max_iters=self.max_iters, tol=self.tol,
                          step_rule=self.step_rule, box=self.box)

    def replace(self, **changes) -> "SweepConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["n_grid"] = list(self.n_grid)
        return out


@dataclass(frozen=True)
class SweepRecord:
    n: int
    trial: int
    loss: float
    l2_error: float
    objective: float
    iters: int
    seconds: float
    completed: bool = True


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float


@dataclass
class SweepResult:
    config: SweepConfig
    records: list
    medians: list = field(default_factory=list)   # (n, median loss, median l2, completed count)
    loss_fit: SlopeFit | None = None
    l2_fit: SlopeFit | None = None

    def median_loss(self) -> list:
        return [m[1] for m in self.medians]

    def median_l2(self) -> list:
        return [m[2] for m in self.medians]


def fit_loglog_slope(points) -> SlopeFit:
    """Ordinary least squares of ``log(value)`` on ``log(n)``."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise InvalidInputError("slope fit needs at least 3 points")
    if any(not (n > 0 and v > 0) for n, v in pts):
        raise InvalidInputError("slope fit needs positive n and positive values")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        raise InvalidInputError("slope fit needs at least two distinct n")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    stderr = math.sqrt(float(resid @ resid) / (len(pts) - 2) / sxx)
    return SlopeFit(slope, intercept, stderr)


def _stream(cfg: SweepConfig, what: str, n: int | None = None, trial: int | None = None):
    label = f"{what}/{cfg.kind}" if n is None else f"{what}/{cfg.kind}/n={n}/trial={trial}"
    return make_rng(cfg.master_seed, label)


def make_truth(cfg: SweepConfig):
    """The sweep's fixed ground truth and frozen projections."""
    return generate_ground_truth(cfg.kind, cfg.dims, cfg.delta_sep, _stream(cfg, "truth"), box=cfg.box,
                                 sigma1=cfg.sigma1, sigma2=cfg.sigma2, key_scale=cfg.key_scale)


def run_trial(cfg: SweepConfig, truth, P, X_eval: np.ndarray, n: int, trial: int) -> SweepRecord:
    start = time.perf_counter()
    data = generate_dataset(truth, P, n, cfg.sigma_noise, _stream(cfg, "data", n, trial), x_max=cfg.x_max)
    try:
        fit = fit_least_squares(cfg.kind, cfg.fit_dims, data, P, cfg.fit_options(), _stream(cfg, "fit", n, trial),
                                true_L=cfg.L, sigma1=cfg.sigma1, sigma2=cfg.sigma2)
    except OptimizationFailureError as exc:
        log.warning("n=%d trial=%d failed: %s", n, trial, exc)
        return SweepRecord(n, trial, math.nan, math.nan, math.nan, 0, 0.0, completed=False)
    G = fit.measure
    loss = loss_d2(G, truth) if cfg.kind == "shared" else loss_d1_rho(G, truth, rho=cfg.rho)
    seconds = time.perf_counter() - start if cfg.timing else 0.0
    return SweepRecord(n, trial, float(loss), l2_error(G, truth, P, X_eval), float(fit.objective),
                       int(fit.iterations), seconds)


def _aggregate(cfg: SweepConfig, records: list) -> SweepResult:
    result = SweepResult(cfg, records)
    for n in cfg.n_grid:
        done = [r for r in records if r.n == n and r.completed]
        if done:
            result.medians.append((n, float(np.median([r.loss for r in done])),
                                   float(np.median([r.l2_error for r in done])), len(done)))
        else:
            result.medians.append((n, math.nan, math.nan, 0))
    usable = [m for m in result.medians if m[3] > 0]
    if len(usable) >= 3:
        if all(m[1] > 0 for m in usable):
            result.loss_fit = fit_loglog_slope([(m[0], m[1]) for m in usable])
        if all(m[2] > 0 for m in usable):
            result.l2_fit = fit_loglog_slope([(m[0], m[2]) for m in usable])
    return result


def run_rate_sweep(cfg: SweepConfig, progress=None) -> SweepResult:
    """Fit every ``(n, trial)`` of the grid against one fixed ground truth.

    ``progress``, when given, is called with each finished record.  Failed
    fits are kept as incomplete records and excluded from the medians.
    """
    truth, P = make_truth(cfg)
    X_eval = _stream(cfg, "eval").uniform(-cfg.x_max, cfg.x_max, (cfg.n_eval, cfg.d))
    records = []
    for n in cfg.n_grid:
        for trial in range(cfg.trials):
            rec = run_trial(cfg, truth, P, X_eval, n, trial)
            records.append(rec)
            if progress is not None:
                progress(rec)
    return _aggregate(cfg, records)


@dataclass
class EfficiencyRow:
    fraction: float
    n: int
    shared_loss: float
    nonshared_loss: float
    shared_l2: float
    nonshared_l2: float

    @property
    def gap(self) -> float:
        return self.nonshared_loss - self.shared_loss


def fraction_grid(fractions, n_max: int) -> list:
    out = []
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise InvalidConfigError(f"fraction {f} outside (0, 1]", key="fractions")
        out.append((float(f), max(1, int(round(f * n_max)))))
    return out


def sample_efficiency_report(base_cfg: SweepConfig, fractions, n_max: int | None = None, progress=None):
    """Shared and non-shared sweeps at ``n = round(f * n_max)`` for every fraction.

    Returns the table rows and the two underlying sweep results.
    """
    n_max = max(base_cfg.n_grid) if n_max is None else int(n_max)
    grid = fraction_grid(fractions, n_max)
    ns = sorted({n for _, n in grid})
    sweeps = {kind: run_rate_sweep(base_cfg.replace(kind=kind, n_grid=tuple(ns)), progress) for kind in KINDS}
    med = {kind: {m[0]: m for m in res.medians} for kind, res in sweeps.items()}
    rows = [EfficiencyRow(f, n, med["shared"][n][1], med["nonshared"][n][1],
                          med["shared"][n][2], med["nonshared"][n][2]) for f, n in grid]
    return rows, sweeps


@dataclass(frozen=True)
class AuditRow:
    d: int
    H: int
    r: int
    d_e: int
    d_hid: int
    lora: int
    hora: int

    @property
    def difference(self) -> int:
        return self.hora - self.lora

    @property
    def ratio(self) -> float:
        return self.hora / self.lora


def param_audit_report(grid) -> list:
    """LoRA and HoRA parameter counts for each ``{d, H, r, d_e, d_hid}`` entry."""
    rows = []
    for entry in grid:
        e = dict(entry)
        cfg = AttentionConfig(d=e["d"], H=e["H"], N=1, r=e["r"])
        rows.append(AuditRow(cfg.d, cfg.H, cfg.r, e["d_e"], e["d_hid"], param_count("lora", cfg),
                             param_count("hora", cfg, e["d_e"], e["d_hid"])))
    return rows

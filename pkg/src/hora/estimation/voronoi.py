"""Voronoi cells of fitted atoms around true atoms, and the Voronoi losses.

Head alignment ``tau[h]`` is the fitted head whose weight is closest to the
true weight ``pi*[h]``.  Within each aligned head pair, fitted atom ``i``
belongs to the cell of the nearest true atom (Euclidean norm over the stacked
factor tuple).  All ties go to the lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from .measures import SharedMixingMeasure, atoms


@dataclass
class VoronoiCells:
    tau: np.ndarray      # (H,) fitted head aligned with each true head
    assign: np.ndarray   # (H, L') true atom index for each fitted atom
    L_true: int

    def cell(self, h: int, j: int) -> list[int]:
        return [int(i) for i in np.nonzero(self.assign[h] == j)[0]]

    def cells(self) -> list[list[list[int]]]:
        return [[self.cell(h, j) for j in range(self.L_true)] for h in range(self.assign.shape[0])]


def voronoi_cells(fitted, truth) -> VoronoiCells:
    if fitted.H != truth.H:
        raise InvalidInputError("fitted and true measures must have the same number of heads")
    H = truth.H
    tau = np.array([int(np.argmin(np.abs(fitted.pi - truth.pi[h]))) for h in range(H)])
    fa, ta = atoms(fitted), atoms(truth)
    assign = np.empty((H, fitted.L), dtype=int)
    for h in range(H):
        dist = np.linalg.norm(fa[tau[h]][:, None, :] - ta[h][None, :, :], axis=2)
        assign[h] = np.argmin(dist, axis=1)
    return VoronoiCells(tau=tau, assign=assign, L_true=truth.L)


def _mass_terms(fitted, truth, vc: VoronoiCells):
    weights = np.abs(fitted.pi[vc.tau] - truth.pi).sum()
    mass = 0.0
    for h in range(truth.H):
        for l in range(truth.L):
            cell = vc.cell(h, l)
            mass += fitted.pi[vc.tau[h]] * abs(np.exp(fitted.c[cell]).sum() - np.exp(truth.c[l]))
    return float(weights), float(mass)


def _part_distances(fitted, truth, vc: VoronoiCells, h: int, i: int, l: int) -> list[float]:
    return [float(np.linalg.norm(pf[vc.tau[h], i] - pt[h, l]))
            for pf, pt in zip(fitted.atom_parts(), truth.atom_parts())]


def loss_d1_rho(fitted, truth, rho: float = 1.0, cells: VoronoiCells | None = None,
                return_terms: bool = False):
    """Voronoi loss with exponent ``rho`` on every factor discrepancy.

    Factor terms are weighted by the fitted masses ``exp(c_i)``.
    """
    if rho < 1:
        raise InvalidInputError("rho must be >= 1")
    vc = voronoi_cells(fitted, truth) if cells is None else cells
    weights, mass = _mass_terms(fitted, truth, vc)
    factors = 0.0
    for h in range(truth.H):
        ph = fitted.pi[vc.tau[h]]
        for l in range(truth.L):
            for i in vc.cell(h, l):
                dist = _part_distances(fitted, truth, vc, h, i, l)
                factors += ph * np.exp(fitted.c[i]) * sum(x ** rho for x in dist)
    total = weights + mass + factors
    return (total, {"weights": weights, "mass": mass, "factors": factors}) if return_terms else total


def loss_d2(fitted: SharedMixingMeasure, truth: SharedMixingMeasure, cells: VoronoiCells | None = None,
            return_terms: bool = False):
    """Voronoi loss for the shared family on atoms ``(W2 @ B, W1 @ A)``.

    Singleton cells contribute first powers of the discrepancies, larger
    cells their squares; both are weighted by the true mass ``exp(c*_l)`` of
    the cell's atom.
    """
    if not (isinstance(fitted, SharedMixingMeasure) and isinstance(truth, SharedMixingMeasure)):
        raise InvalidInputError("loss_d2 expects shared-family measures")
    vc = voronoi_cells(fitted, truth) if cells is None else cells
    weights, mass = _mass_terms(fitted, truth, vc)
    factors = 0.0
    for h in range(truth.H):
        ph = fitted.pi[vc.tau[h]]
        for l in range(truth.L):
            cell = vc.cell(h, l)
            power = 1 if len(cell) == 1 else 2
            for i in cell:
                dist = _part_distances(fitted, truth, vc, h, i, l)
                factors += ph * np.exp(truth.c[l]) * sum(x ** power for x in dist)
    total = weights + mass + factors
    return (total, {"weights": weights, "mass": mass, "factors": factors}) if return_terms else total

"""Fitting measured transition matrices into an endpoint-vertex hull.

Membership of a TPM in the hull for a given interval reduces to a linear
system with the invertible vertex matrix, so the unique candidate weight
matrix is obtained in closed form and membership is just a sign check.
The minimal-interval search walks a coarse grid, prunes with the
monotonicity of membership under interval inclusion, and refines the best
cells with bisection on each boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInterval
from .geometry import (
    Interval,
    Tpm,
    _inverse_factor,
    barycentric_coordinates,
    _endpoint_factor,
    kron_apply,
    membership_tolerance,
    product_vector,
    vertex_matrix,
)

DEFAULT_WIDTH_TOL = 1e-3


@dataclass(frozen=True)
class FitResult:
    """Outcome of a hull-membership fit."""

    feasible: bool
    weights: np.ndarray | None
    residual: float
    min_coordinate: float


@dataclass(frozen=True)
class IntervalSearchResult:
    """Minimal feasible interval plus the evaluated search trace."""

    interval: Interval
    width: float
    trace: tuple[tuple[float, float, bool], ...]


def fit_feasible(
    tpm: Tpm, iv: Interval, tol: float | None = None, lp_check: bool = False
) -> FitResult:
    """Fit a TPM as row-wise convex combinations of endpoint vertices.

    Since the vertex matrix is invertible for non-degenerate intervals,
    the weight matrix is uniquely determined; the fit is feasible iff all
    weights are non-negative up to tolerance.  Weight rows sum to one
    automatically for stochastic input.  With ``lp_check`` the closed-form
    solution is cross-checked against an LP solve of the same system.
    """
    if iv.degenerate:
        raise DegenerateInterval(f"rho_l == rho_u == {iv.rho_l}")
    if tol is None:
        tol = membership_tolerance(tpm.m, iv)
    k = 1 << tpm.m
    finv = _inverse_factor(iv)
    fwd = _endpoint_factor(iv)
    weights = np.empty((k, k))
    residual = 0.0
    for r in range(k):
        lam = kron_apply(finv, tpm.rows[r], tpm.m)
        weights[r] = lam
        rec = kron_apply(fwd, lam, tpm.m)
        residual = max(residual, float(np.abs(rec - tpm.rows[r]).max()))
    min_coord = float(weights.min())
    feasible = min_coord >= -tol

    if lp_check:
        lp = _lp_fit(tpm, iv)
        if lp is not None and feasible:
            if np.abs(lp - weights).max() > 1e-8:
                raise AssertionError("LP recheck disagrees with the closed-form fit")
    return FitResult(
        feasible=feasible,
        weights=weights if feasible else None,
        residual=residual,
        min_coordinate=min_coord,
    )


def _lp_fit(tpm: Tpm, iv: Interval) -> np.ndarray | None:
    """Row-wise LP solve of the fit system; None when any row is infeasible."""
    from scipy.optimize import linprog

    k = 1 << tpm.m
    mat = vertex_matrix(tpm.m, iv)
    weights = np.empty((k, k))
    for r in range(k):
        res = linprog(
            c=np.zeros(k),
            A_eq=mat,
            b_eq=tpm.rows[r],
            bounds=[(0, None)] * k,
            method="highs",
        )
        if not res.success:
            return None
        weights[r] = res.x
    return weights


def _feasible(tpm: Tpm, lo: float, hi: float, trace: list) -> bool:
    ok = fit_feasible(tpm, Interval(lo, hi)).feasible
    trace.append((lo, hi, ok))
    return ok


def minimal_interval(
    tpm: Tpm, tol_width: float = DEFAULT_WIDTH_TOL
) -> IntervalSearchResult:
    """Smallest interval (to within tol_width) whose hull contains the TPM.

    Feasibility is monotone under interval inclusion, so the minimal upper
    endpoint for a fixed lower endpoint is non-decreasing in the lower
    endpoint; a single two-pointer sweep over the coarse grid evaluates
    each candidate cell once.  The best cells are then refined with a fine
    sweep of the lower endpoint and bisection on the upper endpoint.
    Always terminates because [0, 1] is feasible for any stochastic TPM.
    """
    trace: list[tuple[float, float, bool]] = []
    step = 10.0 * tol_width
    grid = np.unique(np.clip(np.arange(0.0, 1.0 + step, step), 0.0, 1.0))
    n = len(grid)

    # Coarse sweep: for each lower endpoint, smallest feasible grid upper.
    best: tuple[float, float, float] | None = None  # (width, lo, hi)
    coarse: list[tuple[int, float]] = []  # (index of lo, grid hi)
    j = 1
    for i in range(n - 1):
        lo = float(grid[i])
        j = max(j, i + 1)
        found = None
        while j < n:
            if _feasible(tpm, lo, float(grid[j]), trace):
                found = float(grid[j])
                break
            j += 1
        if found is None:
            break  # larger lower endpoints cannot be feasible either
        coarse.append((i, found))
        width = found - lo
        if best is None or width < best[0]:
            best = (width, lo, found)
    if best is None:
        # every row needs the full interval
        ok = _feasible(tpm, 0.0, 1.0, trace)
        return IntervalSearchResult(
            interval=Interval(0.0, 1.0), width=1.0, trace=tuple(trace)
        )

    # Refine every cell that could still beat the incumbent: the coarse
    # width overestimates the cell optimum by at most two grid steps.
    min_gap = tol_width / 16.0
    fine = tol_width / 2.0
    for i, hi_grid in coarse:
        if hi_grid - float(grid[i]) > best[0] + 2.0 * step:
            continue
        lo_cell = float(grid[i])
        lo_end = min(float(grid[i + 1]), 1.0) if i + 1 < n else 1.0
        lo = lo_cell
        while lo <= lo_end + 1e-12:
            hi = _min_upper(tpm, lo, hi_grid, min_gap, tol_width / 8.0, trace)
            if hi is not None and hi - lo < best[0]:
                best = (hi - lo, lo, hi)
            lo += fine
    width, lo, hi = best
    return IntervalSearchResult(
        interval=Interval(lo, hi), width=width, trace=tuple(trace)
    )


def _min_upper(
    tpm: Tpm, lo: float, hi_start: float, min_gap: float, prec: float, trace: list
) -> float | None:
    """Bisect the smallest feasible upper endpoint for a fixed lower one."""
    hi_ok = None
    hi = min(max(hi_start, lo + min_gap), 1.0)
    if hi <= lo:
        return None
    if _feasible(tpm, lo, hi, trace):
        hi_ok = hi
    else:
        # widen geometrically up to 1
        while hi < 1.0:
            hi = min(1.0, hi + max(prec, (hi - lo)))
            if _feasible(tpm, lo, hi, trace):
                hi_ok = hi
                break
        if hi_ok is None:
            return None
    lo_bad = lo + min_gap / 2.0
    while hi_ok - lo_bad > prec:
        mid = 0.5 * (hi_ok + lo_bad)
        if mid - lo < min_gap:
            break
        if _feasible(tpm, lo, mid, trace):
            hi_ok = mid
        else:
            lo_bad = mid
    return hi_ok


def synthesize_correlated_tpm(
    m: int, iv: Interval, correlation_knob: float, seed: int = 0
) -> Tpm:
    """Synthetic TPM inside the hull with tunable spatial correlation.

    At knob 0 each row is a single product distribution with interior
    per-edge probabilities (spatially independent).  At knob 1 each row is
    a two-point mixture of a vertex distribution and its antipode (all
    links flip together, maximal spatial correlation).  Intermediate knob
    values blend the two, so the result always lies in the hull of the
    generating interval.
    """
    if not 0.0 <= correlation_knob <= 1.0:
        raise ValueError(f"knob must lie in [0,1], got {correlation_knob}")
    rng = np.random.default_rng(seed)
    k = 1 << m
    verts = vertex_matrix(m, iv)
    rows = np.empty((k, k))
    span = iv.rho_u - iv.rho_l
    for r in range(k):
        p = iv.rho_l + span * (0.1 + 0.8 * rng.random(m))
        independent = product_vector(p)
        vtx = int(rng.integers(0, k))
        anti = (k - 1) - vtx
        beta = rng.random()
        correlated = beta * verts[:, vtx] + (1.0 - beta) * verts[:, anti]
        rows[r] = (1.0 - correlation_knob) * independent + correlation_knob * correlated
    return Tpm(m=m, rows=rows)

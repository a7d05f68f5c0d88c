"""Geometry of mode-probability vectors under per-edge loss intervals.

The central objects are the product map taking per-edge success
probabilities to a joint mode distribution, the 2^m vertex distributions
obtained by pinning every edge to one of the interval endpoints, and
barycentric coordinates with respect to those vertices.  Because the vertex
matrix is a Kronecker power of a single 2x2 factor, all linear solves are
done factor-by-factor in O(m 2^m) without forming the dense matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInterval, ModeCapExceeded
from .graphs import MODE_CAP

PROB_SUM_TOL = 1e-12
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class Interval:
    """Per-edge success probability interval [rho_l, rho_u]."""

    rho_l: float
    rho_u: float

    def __post_init__(self):
        if not (0.0 <= self.rho_l <= self.rho_u <= 1.0):
            raise ValueError(
                f"need 0 <= rho_l <= rho_u <= 1, got [{self.rho_l}, {self.rho_u}]"
            )

    @property
    def width(self) -> float:
        return self.rho_u - self.rho_l

    @property
    def degenerate(self) -> bool:
        return self.rho_l == self.rho_u

    def contains(self, other: "Interval") -> bool:
        return self.rho_l <= other.rho_l and other.rho_u <= self.rho_u


def validate_prob_vector(v: np.ndarray, sum_tol: float = PROB_SUM_TOL) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("probability vector must be 1-d")
    if v.min(initial=0.0) < -1e-9:
        raise ValueError(f"negative probability entry {v.min()}")
    if abs(v.sum() - 1.0) > max(sum_tol, 1e-15 * v.size):
        raise ValueError(f"probabilities sum to {v.sum()}, not 1")
    return v


@dataclass(frozen=True)
class Tpm:
    """Row-stochastic transition matrix over the 2^m loss modes."""

    m: int
    rows: np.ndarray

    def __post_init__(self):
        k = 1 << self.m
        rows = np.asarray(self.rows, dtype=float)
        if rows.shape != (k, k):
            raise ValueError(f"expected shape ({k},{k}), got {rows.shape}")
        for r in range(k):
            validate_prob_vector(rows[r])
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "Tpm":
        rows = np.asarray(rows, dtype=float)
        k = rows.shape[0]
        m = int(round(np.log2(k)))
        if 1 << m != k:
            raise ValueError(f"row count {k} is not a power of two")
        return cls(m=m, rows=rows)


class Membership(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


def product_vector(p) -> np.ndarray:
    """Joint mode distribution of independent links with success probs p.

    Entry j - 1 (0-based) is the probability of mode j: the product over
    edges of p_e or 1 - p_e according to the transmit bit of mode j.  The
    first entry of p is the most significant bit, matching the mode index
    encoding.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("p must be a non-empty vector")
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError(f"success probabilities must lie in [0,1], got {p}")
    v = np.ones(1)
    for pe in p:
        v = np.kron(v, np.array([1.0 - pe, pe]))
    return v


def _endpoint_factor(iv: Interval) -> np.ndarray:
    """2x2 factor whose columns are the single-edge endpoint distributions."""
    return np.array(
        [[1.0 - iv.rho_l, 1.0 - iv.rho_u], [iv.rho_l, iv.rho_u]]
    )


def _inverse_factor(iv: Interval) -> np.ndarray:
    if iv.degenerate:
        raise DegenerateInterval(f"rho_l == rho_u == {iv.rho_l}")
    d = iv.rho_u - iv.rho_l
    return np.array(
        [[iv.rho_u, iv.rho_u - 1.0], [-iv.rho_l, 1.0 - iv.rho_l]]
    ) / d


def kron_apply(factor: np.ndarray, x: np.ndarray, m: int) -> np.ndarray:
    """Apply the m-fold Kronecker power of a 2x2 factor to a vector."""
    y = np.asarray(x, dtype=float)
    if y.size != 1 << m:
        raise ValueError(f"vector length {y.size} != 2^{m}")
    for _ in range(m):
        y = (factor @ y.reshape(2, -1)).T.ravel()
    return y


def vertex_probabilities(m: int, iv: Interval, cap: int = MODE_CAP) -> list[np.ndarray]:
    """The 2^m endpoint mode distributions, in binary-counter order.

    Entry r - 1 is the product distribution of the probability vector whose
    edge e takes rho_u when bit e of r - 1 is set (most significant bit
    first) and rho_l otherwise.  Entries coincide iff the interval is
    degenerate.
    """
    if m > cap:
        raise ModeCapExceeded(f"m={m} exceeds cap {cap}")
    lo, hi = iv.rho_l, iv.rho_u
    out = []
    for r in range(1 << m):
        bits = [(r >> (m - k)) & 1 for k in range(1, m + 1)]
        p = np.array([hi if b else lo for b in bits])
        out.append(product_vector(p))
    return out


def vertex_matrix(m: int, iv: Interval, cap: int = MODE_CAP) -> np.ndarray:
    """Matrix with the endpoint distributions as columns.

    Equals the m-fold Kronecker power of the 2x2 endpoint factor; its
    determinant is (rho_u - rho_l)^(m 2^(m-1)), so it is invertible exactly
    when the interval is non-degenerate.
    """
    if m > cap:
        raise ModeCapExceeded(f"m={m} exceeds cap {cap}")
    mt = _endpoint_factor(iv)
    out = np.ones((1, 1))
    for _ in range(m):
        out = np.kron(out, mt)
    return out


def vertex_matrix_determinant(m: int, iv: Interval) -> float:
    """Closed-form determinant of the vertex matrix."""
    return float(iv.width ** (m * (1 << (m - 1))))


def barycentric_coordinates(t: np.ndarray, iv: Interval) -> np.ndarray:
    """Coordinates of a mode distribution in the endpoint-vertex basis.

    Solves the vertex-matrix system with the factored inverse.  Coordinates
    sum to one whenever t does; they are all non-negative exactly when t
    lies in the convex hull of the vertex distributions.
    """
    t = np.asarray(t, dtype=float)
    m = int(round(np.log2(t.size)))
    if 1 << m != t.size:
        raise ValueError(f"vector length {t.size} is not a power of two")
    return kron_apply(_inverse_factor(iv), t, m)


def membership_tolerance(m: int, iv: Interval, tol: float = MEMBERSHIP_TOL) -> float:
    """Base tolerance scaled by the conditioning of the factored solve."""
    cond = np.linalg.cond(_endpoint_factor(iv))
    return tol * cond**m


def simplex_membership(
    t: np.ndarray, iv: Interval, tol: float | None = None
) -> Membership:
    """Classify a mode distribution against the vertex hull.

    Interior means strictly positive barycentric coordinates, Outside means
    some coordinate is negative beyond tolerance, Boundary is the remaining
    sliver around zero.
    """
    t = np.asarray(t, dtype=float)
    m = int(round(np.log2(t.size)))
    if tol is None:
        tol = membership_tolerance(m, iv)
    lam_min = barycentric_coordinates(t, iv).min()
    if lam_min > tol:
        return Membership.INTERIOR
    if lam_min < -tol:
        return Membership.OUTSIDE
    return Membership.BOUNDARY


def tpm_membership(
    tpm: Tpm, iv: Interval, tol: float | None = None
) -> tuple[list[Membership], Membership]:
    """Row-wise hull membership of a TPM plus the aggregate verdict.

    The hull of vertex TPMs is the product of the row hulls, so the
    aggregate is Interior iff every row is Interior, Outside if any row is
    Outside, and Boundary otherwise.
    """
    per_row = [simplex_membership(tpm.rows[r], iv, tol) for r in range(1 << tpm.m)]
    if any(v is Membership.OUTSIDE for v in per_row):
        agg = Membership.OUTSIDE
    elif all(v is Membership.INTERIOR for v in per_row):
        agg = Membership.INTERIOR
    else:
        agg = Membership.BOUNDARY
    return per_row, agg

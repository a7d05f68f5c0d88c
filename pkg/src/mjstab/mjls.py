"""Mode-system assembly, second-moment oracles and seeded simulation.

The mode matrices combine a per-agent block with a Laplacian-patterned
coupling block.  For a fixed transition matrix, mean-square stability is
equivalent to the spectral radius of the second-moment propagation
operator being below one; that operator and the exact moment recursion
serve as desk-scale oracles for the LMI tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SizeCapExceeded
from .geometry import Interval, Tpm, vertex_matrix
from .graphs import Graph, disagreement_basis, enumerate_loss_modes, laplacian

# Desk-scale caps for the exact moment recursion.
MOMENT_DIM_CAP = 32
MOMENT_MODE_CAP = 4

# Total dimension cap for the dense moment-operator eigenproblem.
SPECTRAL_DIM_CAP = 8192

# Sample-mean blowup factor that flags an unstable simulation.
INSTABILITY_FACTOR = 1e6

_OVERFLOW_GUARD = 1e200


@dataclass(frozen=True)
class AgentDynamics:
    """Decoupled and coupled component of each agent's update."""

    ad: np.ndarray
    ac: np.ndarray

    def __post_init__(self):
        ad = np.atleast_2d(np.asarray(self.ad, dtype=float))
        ac = np.atleast_2d(np.asarray(self.ac, dtype=float))
        if ad.shape != ac.shape or ad.shape[0] != ad.shape[1]:
            raise ValueError(f"ad and ac must be square and same shape, got {ad.shape}, {ac.shape}")
        object.__setattr__(self, "ad", ad)
        object.__setattr__(self, "ac", ac)

    @property
    def nx(self) -> int:
        return self.ad.shape[0]


@dataclass(frozen=True)
class ModeSystem:
    """One system matrix per loss mode, in mode-index order."""

    modes: tuple[np.ndarray, ...]
    origin: tuple[Graph, AgentDynamics] | None = None

    def __post_init__(self):
        modes = tuple(np.atleast_2d(np.asarray(a, dtype=float)) for a in self.modes)
        if not modes:
            raise ValueError("need at least one mode")
        dim = modes[0].shape[0]
        for a in modes:
            if a.shape != (dim, dim):
                raise ValueError("all mode matrices must be square with equal size")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def from_matrices(cls, matrices) -> "ModeSystem":
        return cls(modes=tuple(matrices), origin=None)

    @property
    def dim(self) -> int:
        return self.modes[0].shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.modes)


@dataclass(frozen=True)
class TrajectoryStats:
    """Per-step sample statistics of the squared state norm."""

    horizon: int
    mean_sq: np.ndarray
    stderr: np.ndarray
    trials: int
    seed: int
    unstable: bool


def assemble_modes(g: Graph, dyn: AgentDynamics, cap: int = 16) -> ModeSystem:
    """Mode matrices I (x) ad + L_i (x) ac for every loss subgraph."""
    subgraphs = enumerate_loss_modes(g, cap=cap)
    eye = np.eye(g.n)
    modes = [
        np.kron(eye, dyn.ad) + np.kron(laplacian(sub).astype(float), dyn.ac)
        for sub in subgraphs
    ]
    return ModeSystem(modes=tuple(modes), origin=(g, dyn))


def project_disagreement(g: Graph, dyn: AgentDynamics, cap: int = 16) -> ModeSystem:
    """Mode system restricted to the orthogonal complement of agreement.

    Replaces each Laplacian by its compression onto the complement of the
    all-ones direction, dropping the invariant agreement block.  Used for
    consensus problems where only the disagreement part must contract.
    """
    u = disagreement_basis(g.n)
    eye = np.eye(g.n - 1)
    modes = []
    for sub in enumerate_loss_modes(g, cap=cap):
        lred = u.T @ laplacian(sub).astype(float) @ u
        modes.append(np.kron(eye, dyn.ad) + np.kron(lred, dyn.ac))
    return ModeSystem(modes=tuple(modes), origin=None)


def moment_operator(ms: ModeSystem, tpm: Tpm) -> np.ndarray:
    """Block matrix propagating the mode-conditioned second moments.

    Block (j, i) is t_ij (A_i (x) A_i); stacking the vectorized moments of
    each mode, the state moment at step k+1 is this matrix applied to the
    stack at step k.
    """
    k = ms.n_modes
    if tpm.rows.shape != (k, k):
        raise ValueError(f"TPM shape {tpm.rows.shape} does not match {k} modes")
    n2 = ms.dim * ms.dim
    if k * n2 > SPECTRAL_DIM_CAP:
        raise SizeCapExceeded(f"moment operator dimension {k * n2} exceeds {SPECTRAL_DIM_CAP}")
    big = np.zeros((k * n2, k * n2))
    for i, a in enumerate(ms.modes):
        aa = np.kron(a, a)
        for j in range(k):
            t = tpm.rows[i, j]
            if t != 0.0:
                big[j * n2:(j + 1) * n2, i * n2:(i + 1) * n2] = t * aa
    return big


def moment_spectral_radius(ms: ModeSystem, tpm: Tpm) -> float:
    """Spectral radius of the second-moment operator.

    A value below one certifies mean-square stability for this fixed
    transition matrix; above one refutes it.
    """
    return float(np.abs(np.linalg.eigvals(moment_operator(ms, tpm))).max())


def _sigma0_distribution(sigma0, n_modes: int) -> np.ndarray:
    if sigma0 is None:
        return np.full(n_modes, 1.0 / n_modes)
    if np.isscalar(sigma0):
        j = int(sigma0)
        if not 1 <= j <= n_modes:
            raise ValueError(f"initial mode {j} outside 1..{n_modes}")
        dist = np.zeros(n_modes)
        dist[j - 1] = 1.0
        return dist
    dist = np.asarray(sigma0, dtype=float)
    if dist.shape != (n_modes,) or dist.min() < 0 or abs(dist.sum() - 1.0) > 1e-9:
        raise ValueError("initial mode distribution must be a probability vector")
    return dist


def exact_moment_sequence(
    ms: ModeSystem,
    tpm: Tpm,
    x0: np.ndarray,
    sigma0=None,
    horizon: int = 100,
) -> np.ndarray:
    """Exact E[|x_k|^2] for k = 0..horizon by moment propagation.

    Desk-scale only: the per-mode moment matrices are propagated densely.
    Step 0 equals |x0|^2 for any initial mode distribution.
    """
    k = ms.n_modes
    if ms.dim > MOMENT_DIM_CAP:
        raise SizeCapExceeded(f"dimension {ms.dim} exceeds {MOMENT_DIM_CAP}")
    if k > 1 << MOMENT_MODE_CAP:
        raise SizeCapExceeded(f"{k} modes exceed 2^{MOMENT_MODE_CAP}")
    if tpm.rows.shape != (k, k):
        raise ValueError(f"TPM shape {tpm.rows.shape} does not match {k} modes")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != ms.dim:
        raise ValueError(f"x0 has length {x0.size}, expected {ms.dim}")
    dist = _sigma0_distribution(sigma0, k)

    outer = np.outer(x0, x0)
    moments = [dist[i] * outer for i in range(k)]
    out = np.empty(horizon + 1)
    out[0] = float(np.trace(outer))
    for step in range(1, horizon + 1):
        nxt = [np.zeros_like(outer) for _ in range(k)]
        for i, a in enumerate(ms.modes):
            contrib = a @ moments[i] @ a.T
            for j in range(k):
                t = tpm.rows[i, j]
                if t != 0.0:
                    nxt[j] += t * contrib
        moments = nxt
        out[step] = float(sum(np.trace(mi) for mi in moments))
    return out


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    # Counter-based stream keyed by (seed, trial): independent of execution
    # order and of how many other trials run.
    return np.random.Generator(
        np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, trial], dtype=np.uint64))
    )


def monte_carlo(
    ms: ModeSystem,
    tpm: Tpm,
    x0: np.ndarray,
    sigma0=None,
    horizon: int = 100,
    trials: int = 100,
    seed: int = 0,
) -> TrajectoryStats:
    """Simulate independent mode chains and average the squared norms.

    Each trial draws from its own counter-based stream keyed by
    (seed, trial index), and aggregation reduces the per-trial array with a
    fixed summation order, so results are bit-reproducible regardless of
    scheduling.  Squared norms saturate at a large guard value instead of
    overflowing; hitting the guard flags the run unstable.
    """
    k = ms.n_modes
    if tpm.rows.shape != (k, k):
        raise ValueError(f"TPM shape {tpm.rows.shape} does not match {k} modes")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != ms.dim:
        raise ValueError(f"x0 has length {x0.size}, expected {ms.dim}")
    dist = _sigma0_distribution(sigma0, k)
    cum_init = np.cumsum(dist)
    cum_rows = np.cumsum(tpm.rows, axis=1)

    sq = np.empty((trials, horizon + 1))
    overflowed = False
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        draws = rng.random(horizon + 1)
        mode = int(np.searchsorted(cum_init, draws[0], side="right"))
        mode = min(mode, k - 1)
        x = x0.copy()
        sq[trial, 0] = x @ x
        for step in range(1, horizon + 1):
            x = ms.modes[mode] @ x
            val = x @ x
            if val > _OVERFLOW_GUARD:
                # saturate the rest of this trial
                sq[trial, step:] = _OVERFLOW_GUARD
                overflowed = True
                break
            sq[trial, step] = val
            nxt = int(np.searchsorted(cum_rows[mode], draws[step], side="right"))
            mode = min(nxt, k - 1)
    mean = sq.mean(axis=0)
    stderr = sq.std(axis=0, ddof=1) / np.sqrt(trials) if trials > 1 else np.zeros(horizon + 1)
    unstable = overflowed or bool(mean[-1] > INSTABILITY_FACTOR * max(mean[0], 1e-300))
    return TrajectoryStats(
        horizon=horizon,
        mean_sq=mean,
        stderr=stderr,
        trials=trials,
        seed=seed,
        unstable=unstable,
    )


def sample_tpm_in_hull(m: int, iv: Interval, seed: int = 0) -> Tpm:
    """Random TPM whose rows are convex combinations of the vertex set.

    Row weights are independent normalized uniforms, so the result always
    lies in the convex hull of the vertex TPMs for the given interval.
    """
    rng = np.random.default_rng(seed)
    verts = vertex_matrix(m, iv)
    k = 1 << m
    w = rng.random((k, k))
    w /= w.sum(axis=1, keepdims=True)
    return Tpm(m=m, rows=w @ verts.T)

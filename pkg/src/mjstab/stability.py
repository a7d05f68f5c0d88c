"""LMI stability tests: brute-force desk-scale forms and the scalable test.

Three layers of tests are provided, ordered by generality:

* exact per-mode tests for a single fixed transition matrix (primal and
  dual form), which are necessary and sufficient;
* vertex-enumeration tests over all endpoint transition matrices, with a
  shared block-repeated Lyapunov matrix as the decomposed variant;
* the scalable test whose constraints have the size of a single agent and
  involve only the extreme Laplacian eigenvalues, using a structured
  full-block multiplier.

The multiplier is parametrized with a block-diagonal quadratic part, a
skew pair of one symmetric block on the off-diagonal and a full symmetric
corner, which makes its validity condition affine in the per-edge success
probability; checking the two interval endpoints is then exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DisconnectedGraph, ParameterOutOfRange, SizeCapExceeded
from .geometry import Interval, Tpm, vertex_probabilities
from .graphs import Graph, disagreement_basis, enumerate_loss_modes, laplacian, spectrum
from .mjls import AgentDynamics, ModeSystem
from .sdp import (
    NEGATIVE,
    POSITIVE,
    SdpOutcome,
    SdpProblem,
    _NumpyOps,
    constraint_margins,
    default_margin,
    solve_feasibility,
)

VERTEX_CONSTRAINT_CAP = 4096
BRUTE_SIZE_CAP = 65536


@dataclass(frozen=True)
class UncertainTpmSet:
    """Polytope of transition matrices given by its vertex list."""

    vertices: tuple[Tpm, ...]

    def __post_init__(self):
        if not self.vertices:
            raise ValueError("need at least one vertex")
        m = self.vertices[0].m
        if any(v.m != m for v in self.vertices):
            raise ValueError("vertex TPMs must share the mode count")


@dataclass(frozen=True)
class MultiplierP:
    """Structured full-block multiplier.

    Blocks q1, q2, q3 form the block-diagonal quadratic part, r11, r22, r12
    the corner, and s0 the single symmetric block that appears as the skew
    pair (-s0, s0) on the off-diagonal.  All blocks are nx x nx; q1, q2,
    q3, r11, r22 and s0 are symmetric.
    """

    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    r11: np.ndarray
    r22: np.ndarray
    r12: np.ndarray
    s0: np.ndarray

    def __post_init__(self):
        for name in ("q1", "q2", "q3", "r11", "r22", "r12", "s0"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        nx = self.q1.shape[0]
        for name in ("q1", "q2", "q3", "r11", "r22", "r12", "s0"):
            arr = getattr(self, name)
            if arr.shape != (nx, nx):
                raise ValueError(f"block {name} has shape {arr.shape}, expected ({nx},{nx})")
        for name in ("q1", "q2", "q3", "r11", "r22", "s0"):
            arr = getattr(self, name)
            if np.abs(arr - arr.T).max() > 1e-10 * max(1.0, np.abs(arr).max()):
                raise ValueError(f"block {name} must be symmetric")

    @property
    def nx(self) -> int:
        return self.q1.shape[0]

    def assemble(self) -> np.ndarray:
        """Full 5nx x 5nx multiplier matrix."""
        z = np.zeros_like(self.q1)
        return np.block(
            [
                [self.q1, z, z, z, self.s0],
                [z, self.q2, z, z, z],
                [z, z, self.q3, -self.s0, z],
                [z, z, -self.s0, self.r11, self.r12],
                [self.s0, z, z, self.r12.T, self.r22],
            ]
        )


@dataclass(frozen=True)
class Certificate:
    """Stability certificate: Lyapunov block plus structured multiplier."""

    xtilde: np.ndarray
    multiplier: MultiplierP
    interval: Interval
    lambda2: float
    lambdaN: float
    margin: float
    include_nominal: bool = True

    def __post_init__(self):
        xt = np.atleast_2d(np.asarray(self.xtilde, dtype=float))
        object.__setattr__(self, "xtilde", xt)


def _auto_margin(ms: ModeSystem) -> float:
    if ms.origin is not None:
        return default_margin(ms.origin[1].ad, ms.origin[1].ac)
    scale = 1.0 + max(np.linalg.norm(a, 2) for a in ms.modes)
    return 1e-7 * scale * scale


def _check_brute_size(ms: ModeSystem):
    if ms.n_modes * ms.dim * ms.dim > BRUTE_SIZE_CAP:
        raise SizeCapExceeded(
            f"{ms.n_modes} modes of dimension {ms.dim} exceed the brute-force cap"
        )


# ---------------------------------------------------------------------------
# Fixed-TPM tests (exact, desk scale)
# ---------------------------------------------------------------------------

def fixed_tpm_test(ms: ModeSystem, tpm: Tpm, eps: float | None = None) -> SdpOutcome:
    """Exact mean-square stability test for one fixed transition matrix.

    Searches per-mode matrices X_i > 0 with
    sum_j t_ij A_j' X_j A_j - X_i < 0 for every mode i.
    """
    _check_brute_size(ms)
    k = ms.n_modes
    if tpm.rows.shape != (k, k):
        raise ValueError(f"TPM shape {tpm.rows.shape} does not match {k} modes")
    eps = _auto_margin(ms) if eps is None else eps

    prob = SdpProblem()
    for i in range(k):
        prob.add_variable(f"X{i}", ms.dim)

    def mode_constraint(v, ops, i=0):
        total = -v[f"X{i}"]
        for j, a in enumerate(ms.modes):
            t = tpm.rows[i, j]
            if t != 0.0:
                total = total + t * (a.T @ v[f"X{j}"] @ a)
        return total

    for i in range(k):
        prob.add_constraint(f"pd_{i}", ms.dim, POSITIVE, lambda v, ops, i=i: v[f"X{i}"])
        prob.add_constraint(
            f"mode_{i}", ms.dim, NEGATIVE, lambda v, ops, i=i: mode_constraint(v, ops, i=i)
        )
    return solve_feasibility(prob, eps)


def fixed_tpm_test_dual(ms: ModeSystem, tpm: Tpm, eps: float | None = None) -> SdpOutcome:
    """Equivalent dual form: A_i' (sum_j t_ij P_j) A_i - P_i < 0."""
    _check_brute_size(ms)
    k = ms.n_modes
    if tpm.rows.shape != (k, k):
        raise ValueError(f"TPM shape {tpm.rows.shape} does not match {k} modes")
    eps = _auto_margin(ms) if eps is None else eps

    prob = SdpProblem()
    for i in range(k):
        prob.add_variable(f"P{i}", ms.dim)

    def mode_constraint(v, ops, i=0):
        mixed = None
        for j in range(k):
            t = tpm.rows[i, j]
            if t != 0.0:
                term = t * v[f"P{j}"]
                mixed = term if mixed is None else mixed + term
        a = ms.modes[i]
        return a.T @ mixed @ a - v[f"P{i}"]

    for i in range(k):
        prob.add_constraint(f"pd_{i}", ms.dim, POSITIVE, lambda v, ops, i=i: v[f"P{i}"])
        prob.add_constraint(
            f"mode_{i}", ms.dim, NEGATIVE, lambda v, ops, i=i: mode_constraint(v, ops, i=i)
        )
    return solve_feasibility(prob, eps)


# ---------------------------------------------------------------------------
# Vertex-enumeration tests
# ---------------------------------------------------------------------------

def _dedupe_rows(rows: list[np.ndarray]) -> list[np.ndarray]:
    seen = {}
    for r in rows:
        seen.setdefault(r.tobytes(), r)
    return list(seen.values())


def _project_modes(g: Graph, dyn: AgentDynamics):
    """Mode matrices and Laplacians compressed onto the disagreement space."""
    u = disagreement_basis(g.n)
    laps = [u.T @ laplacian(sub).astype(float) @ u for sub in enumerate_loss_modes(g)]
    eye = np.eye(g.n - 1)
    modes = [np.kron(eye, dyn.ad) + np.kron(lr, dyn.ac) for lr in laps]
    return modes, laps


def vertex_tpm_test(
    ms: ModeSystem,
    iv: Interval,
    eps: float | None = None,
    consensus: bool = False,
) -> SdpOutcome:
    """Vertex test over all endpoint transition matrices.

    Searches constant per-mode X_i > 0 such that the mode inequality holds
    for every endpoint probability row.  Because the constraints decouple
    row by row, one constraint per (mode, endpoint row) pair suffices
    instead of enumerating entire vertex matrices.

    With ``consensus`` set, the system is first compressed onto the
    disagreement space (requires mode provenance), certifying convergence
    of the disagreement part only.
    """
    if consensus:
        if ms.origin is None:
            raise ValueError("consensus projection requires mode provenance")
        modes, _ = _project_modes(*ms.origin)
        dim = modes[0].shape[0]
    else:
        modes = list(ms.modes)
        dim = ms.dim
    k = len(modes)
    m = int(round(np.log2(k)))
    rows = _dedupe_rows(vertex_probabilities(m, iv))
    if k * len(rows) > VERTEX_CONSTRAINT_CAP:
        raise SizeCapExceeded(
            f"{k} modes x {len(rows)} vertex rows exceed {VERTEX_CONSTRAINT_CAP} constraints"
        )
    eps = _auto_margin(ms) if eps is None else eps

    prob = SdpProblem()
    for i in range(k):
        prob.add_variable(f"X{i}", dim)

    def vertex_constraint(v, ops, i=0, row=None):
        total = -v[f"X{i}"]
        for j, a in enumerate(modes):
            t = row[j]
            if t != 0.0:
                total = total + t * (a.T @ v[f"X{j}"] @ a)
        return total

    for i in range(k):
        prob.add_constraint(f"pd_{i}", dim, POSITIVE, lambda v, ops, i=i: v[f"X{i}"])
        for r, row in enumerate(rows):
            prob.add_constraint(
                f"mode_{i}_row_{r}",
                dim,
                NEGATIVE,
                lambda v, ops, i=i, row=row: vertex_constraint(v, ops, i=i, row=row),
            )
    return solve_feasibility(prob, eps)


def vertex_set_test(
    ms: ModeSystem, tpm_set: UncertainTpmSet, eps: float | None = None
) -> SdpOutcome:
    """Vertex test over an explicit list of vertex transition matrices."""
    _check_brute_size(ms)
    k = ms.n_modes
    if k * len(tpm_set.vertices) > VERTEX_CONSTRAINT_CAP:
        raise SizeCapExceeded("vertex set too large")
    eps = _auto_margin(ms) if eps is None else eps

    prob = SdpProblem()
    for i in range(k):
        prob.add_variable(f"X{i}", ms.dim)

    def vertex_constraint(v, ops, i=0, row=None):
        total = -v[f"X{i}"]
        for j, a in enumerate(ms.modes):
            t = row[j]
            if t != 0.0:
                total = total + t * (a.T @ v[f"X{j}"] @ a)
        return total

    for i in range(k):
        prob.add_constraint(f"pd_{i}", ms.dim, POSITIVE, lambda v, ops, i=i: v[f"X{i}"])
    for r, gamma in enumerate(tpm_set.vertices):
        for i in range(k):
            prob.add_constraint(
                f"vtx_{r}_mode_{i}",
                ms.dim,
                NEGATIVE,
                lambda v, ops, i=i, row=gamma.rows[i]: vertex_constraint(v, ops, i=i, row=row),
            )
    return solve_feasibility(prob, eps)


def decomposed_vertex_test(
    g: Graph,
    dyn: AgentDynamics,
    iv: Interval,
    eps: float | None = None,
    consensus: bool = False,
) -> SdpOutcome:
    """Vertex test with a single block-repeated Lyapunov matrix.

    Restricting X_i = I (x) Xt turns the per-mode inequality into one
    constraint per endpoint row, built from the first and second moments
    of the mode Laplacian under that row.  Feasibility of this test
    implies feasibility of the unrestricted vertex test.
    """
    if consensus:
        _, laps = _project_modes(g, dyn)
        nred = g.n - 1
    else:
        laps = [laplacian(sub).astype(float) for sub in enumerate_loss_modes(g)]
        nred = g.n
    k = len(laps)
    rows = _dedupe_rows(vertex_probabilities(g.m, iv))
    if k > VERTEX_CONSTRAINT_CAP:
        raise SizeCapExceeded(f"{k} modes exceed {VERTEX_CONSTRAINT_CAP}")
    eps = default_margin(dyn.ad, dyn.ac) if eps is None else eps

    dim = nred * dyn.nx
    eye = np.eye(nred)
    prob = SdpProblem()
    prob.add_variable("Xt", dyn.nx)
    prob.add_constraint("pd", dyn.nx, POSITIVE, lambda v, ops: v["Xt"])

    ad, ac = dyn.ad, dyn.ac
    for r, row in enumerate(rows):
        lap_mean = sum(t * lap for t, lap in zip(row, laps) if t != 0.0)
        lap_sq_mean = sum(t * (lap @ lap) for t, lap in zip(row, laps) if t != 0.0)

        def block_constraint(v, ops, el=lap_mean, el2=lap_sq_mean):
            xt = v["Xt"]
            return (
                ops.kron(eye, ad.T @ xt @ ad - xt)
                + ops.kron(el2, ac.T @ xt @ ac)
                + ops.kron(el, ad.T @ xt @ ac + ac.T @ xt @ ad)
            )

        prob.add_constraint(f"row_{r}", dim, NEGATIVE, block_constraint)
    return solve_feasibility(prob, eps)


# ---------------------------------------------------------------------------
# Scalable test with structured multiplier
# ---------------------------------------------------------------------------

def _outer_factor(dyn: AgentDynamics, lam: float) -> np.ndarray:
    """Constant outer factor of the modal LMI for one Laplacian eigenvalue.

    Stacks, against the middle block diag(-Xt, Xt, 2Xt, P), the rows
    (I | 0), (Ad | sqrt(lam) at slot 1), (0 | slot 2), (0 | I_3nx),
    (0 | slot 3), (sqrt(lam) Ac | 0), where the right column group has
    three nx-wide slots.
    """
    nx = dyn.nx
    eye = np.eye(nx)
    z = np.zeros((nx, nx))
    s = np.sqrt(lam)
    return np.block(
        [
            [eye, z, z, z],
            [dyn.ad, s * eye, z, z],
            [z, z, eye, z],
            [z, eye, z, z],
            [z, z, eye, z],
            [z, z, z, eye],
            [z, z, z, eye],
            [s * dyn.ac, z, z, z],
        ]
    )


def _middle_block(v, ops, nx: int):
    """diag(-Xt, Xt, 2Xt, P) with P assembled from the structured blocks."""
    z = ops.zeros(nx, nx)
    xt = v["Xt"]
    return ops.bmat(
        [
            [-xt, z, z, z, z, z, z, z],
            [z, xt, z, z, z, z, z, z],
            [z, z, 2 * xt, z, z, z, z, z],
            [z, z, z, v["Q1"], z, z, z, v["S0"]],
            [z, z, z, z, v["Q2"], z, z, z],
            [z, z, z, z, z, v["Q3"], -v["S0"], z],
            [z, z, z, z, z, -v["S0"], v["R11"], v["R12"]],
            [z, z, z, v["S0"], z, z, v["R12"].T, v["R22"]],
        ]
    )


def _validity_expr(v, ops, rho: float):
    return ops.bmat(
        [
            [v["R11"] + rho * v["Q1"] + (1.0 - rho) * v["Q2"], v["R12"]],
            [v["R12"].T, v["R22"] + rho * v["Q3"]],
        ]
    )


def multiplier_validity(p: MultiplierP, iv: Interval) -> tuple[np.ndarray, np.ndarray]:
    """The two endpoint matrices whose positive definiteness validates P.

    Thanks to the multiplier structure the validity condition over the
    whole uncertainty set is affine in the success probability, so it
    holds everywhere iff it holds at both interval endpoints.
    """
    v = {"Q1": p.q1, "Q2": p.q2, "Q3": p.q3, "R11": p.r11, "R22": p.r22, "R12": p.r12}
    low = _validity_expr(v, _NumpyOps, iv.rho_l)
    high = _validity_expr(v, _NumpyOps, iv.rho_u)
    return low, high


def _scalable_problem(
    dyn: AgentDynamics,
    lam2: float,
    lamN: float,
    iv: Interval,
    include_nominal: bool,
) -> SdpProblem:
    nx = dyn.nx
    prob = SdpProblem()
    prob.add_variable("Xt", nx)
    for name in ("Q1", "Q2", "Q3", "R11", "R22", "S0"):
        prob.add_variable(name, nx)
    prob.add_variable("R12", nx, symmetric=False)

    prob.add_constraint("positivity", nx, POSITIVE, lambda v, ops: v["Xt"])
    if include_nominal:
        prob.add_constraint(
            "nominal", nx, NEGATIVE,
            lambda v, ops: dyn.ad.T @ v["Xt"] @ dyn.ad - v["Xt"],
        )
    for tag, lam in (("lam2", lam2), ("lamN", lamN)):
        if tag == "lamN" and lamN == lam2:
            continue
        outer = _outer_factor(dyn, lam)
        prob.add_constraint(
            f"modal_{tag}", 4 * nx, NEGATIVE,
            lambda v, ops, outer=outer: outer.T @ _middle_block(v, ops, nx) @ outer,
        )
    for tag, rho in (("low", iv.rho_l), ("high", iv.rho_u)):
        if tag == "high" and iv.degenerate:
            continue
        prob.add_constraint(
            f"validity_{tag}", 2 * nx, POSITIVE,
            lambda v, ops, rho=rho: _validity_expr(v, ops, rho),
        )
    return prob


def scalable_stability_test(
    dyn: AgentDynamics,
    lam2: float,
    lamN: float,
    iv: Interval,
    eps: float | None = None,
    include_nominal: bool = True,
) -> tuple[SdpOutcome, Certificate | None]:
    """Stability test whose problem size depends only on the agent dimension.

    Searches the block Lyapunov matrix and the structured multiplier; the
    modal constraint is evaluated at the extreme non-zero Laplacian
    eigenvalues only, and the multiplier validity at the two interval
    endpoints.  Feasibility certifies mean-square stability for every
    transition matrix in the convex hull of the endpoint vertex set.
    """
    if not (0 < lam2 <= lamN):
        raise ValueError(f"need 0 < lam2 <= lamN, got ({lam2}, {lamN})")
    eps = default_margin(dyn.ad, dyn.ac) if eps is None else eps
    prob = _scalable_problem(dyn, lam2, lamN, iv, include_nominal)
    outcome = solve_feasibility(prob, eps)
    cert = None
    if outcome.feasible:
        a = outcome.assignment
        cert = Certificate(
            xtilde=a["Xt"],
            multiplier=MultiplierP(
                q1=a["Q1"], q2=a["Q2"], q3=a["Q3"],
                r11=a["R11"], r22=a["R22"], r12=a["R12"], s0=a["S0"],
            ),
            interval=iv,
            lambda2=lam2,
            lambdaN=lamN,
            margin=eps,
            include_nominal=include_nominal,
        )
    return outcome, cert


def consensus_stability_test(
    g: Graph, kappa: float, rho_l: float, eps: float | None = None
) -> tuple[SdpOutcome, Certificate | None]:
    """Scalable test specialised to the first-order consensus protocol.

    The agreement direction is invariant, so the nominal constraint is
    dropped and feasibility certifies that the expected squared
    disagreement converges to zero whenever every link succeeds with
    probability at least rho_l.
    """
    if kappa <= 0:
        raise ParameterOutOfRange(f"consensus gain must be positive, got {kappa}")
    spec = spectrum(g, require_connected=True)
    dyn = AgentDynamics(ad=[[1.0]], ac=[[-kappa]])
    return scalable_stability_test(
        dyn, spec.lambda2, spec.lambdaN, Interval(rho_l, 1.0), eps, include_nominal=False
    )


def consensus_certificate(
    kappa: float,
    lam_n: float,
    rho_l: float,
    eps_tilde: float,
    lam2: float | None = None,
) -> Certificate:
    """Closed-form certificate for the consensus protocol.

    Valid whenever 0 < kappa < 2 / lam_n, rho_l > 0 and
    0 < eps_tilde < (2 - kappa lam_n) / 4.  The Lyapunov scalar is kappa
    and the multiplier entries are fixed affine expressions in
    kappa lam_n and eps_tilde.
    """
    if kappa <= 0 or kappa * lam_n >= 2.0:
        raise ParameterOutOfRange(
            f"need 0 < kappa < 2/lambda_N, got kappa={kappa}, lambda_N={lam_n}"
        )
    if not 0.0 < rho_l <= 1.0:
        raise ParameterOutOfRange(f"need rho_l in (0, 1], got {rho_l}")
    bound = (2.0 - kappa * lam_n) / 4.0
    if not 0.0 < eps_tilde < bound:
        raise ParameterOutOfRange(
            f"need 0 < eps_tilde < {bound}, got {eps_tilde}"
        )
    kl = kappa * lam_n
    mult = MultiplierP(
        q1=[[-kl - eps_tilde]],
        q2=[[-kl - eps_tilde]],
        q3=[[2.0 - kl - 3.0 * eps_tilde]],
        r11=[[kl + 2.0 * eps_tilde]],
        r22=[[rho_l * (kl - 2.0 + 4.0 * eps_tilde)]],
        r12=[[0.0]],
        s0=[[1.0]],
    )
    return Certificate(
        xtilde=[[kappa]],
        multiplier=mult,
        interval=Interval(rho_l, 1.0),
        lambda2=lam2 if lam2 is not None else lam_n,
        lambdaN=lam_n,
        margin=eps_tilde,
        include_nominal=False,
    )


@dataclass(frozen=True)
class CertificateReport:
    """Per-constraint margins of an independent certificate recheck."""

    margins: dict[str, float]
    required_margin: float
    passed: bool


def verify_certificate(
    cert: Certificate,
    dyn: AgentDynamics,
    lambdas: tuple[float, float] | None = None,
    margin: float | None = None,
) -> CertificateReport:
    """Recheck a certificate by direct eigenvalue computation.

    Reassembles the same constraints the scalable test solves, evaluates
    them at the certificate values and requires every definiteness margin
    to reach the threshold.  Solver-independent.
    """
    lam2, lam_n = lambdas if lambdas is not None else (cert.lambda2, cert.lambdaN)
    margin = cert.margin / 2.0 if margin is None else margin
    prob = _scalable_problem(dyn, lam2, lam_n, cert.interval, cert.include_nominal)
    p = cert.multiplier
    assignment = {
        "Xt": cert.xtilde,
        "Q1": p.q1, "Q2": p.q2, "Q3": p.q3,
        "R11": p.r11, "R22": p.r22, "R12": p.r12, "S0": p.s0,
    }
    margins = constraint_margins(prob, assignment)
    return CertificateReport(
        margins=margins,
        required_margin=margin,
        passed=all(v >= margin for v in margins.values()),
    )

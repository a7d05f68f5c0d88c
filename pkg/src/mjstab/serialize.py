"""Problem files, certificate documents and CSV formats.

All structured results are schema-versioned JSON; bulk numeric series are
CSV.  Parsing is strict: unknown fields are rejected so silently ignored
typos cannot change the meaning of a run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import Interval, Tpm
from .graphs import Graph
from .mjls import AgentDynamics, TrajectoryStats
from .stability import Certificate, MultiplierP

PROBLEM_SCHEMA = "mjstab/problem/v1"
CERTIFICATE_SCHEMA = "mjstab/certificate/v1"
REPORT_SCHEMA = "mjstab/report/v1"

TPM_ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class RunOptions:
    seed: int = 0
    horizon: int = 200
    trials: int = 1000
    eps: float | None = None
    tol: float | None = None
    sigma0: int | None = None  # fixed 1-based mode; None = uniform
    x0: tuple[float, ...] | None = None


@dataclass(frozen=True)
class ProblemFile:
    graph: Graph
    dynamics: AgentDynamics
    interval: Interval
    mode: str  # "general" | "consensus"
    tpm_path: str | None
    options: RunOptions


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise InputError(f"unknown fields in {where}: {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise InputError(f"missing fields in {where}: {sorted(missing)}")


def _matrix_from_flat(data, nx: int, where: str) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape == (nx, nx):
        return arr
    if arr.shape == (nx * nx,):
        return arr.reshape(nx, nx)
    raise InputError(f"{where}: expected {nx}x{nx} row-major matrix, got shape {arr.shape}")


def parse_problem(doc: dict) -> ProblemFile:
    """Validate and convert a problem document into module inputs."""
    if not isinstance(doc, dict):
        raise InputError("problem document must be a JSON object")
    _require_keys(
        doc,
        {"schema", "graph", "dynamics", "loss", "mode", "tpm", "options"},
        {"schema", "graph", "dynamics", "loss"},
        "problem",
    )
    if doc["schema"] != PROBLEM_SCHEMA:
        raise InputError(f"unsupported schema {doc['schema']!r}, expected {PROBLEM_SCHEMA!r}")

    gdoc = doc["graph"]
    _require_keys(gdoc, {"n", "edges", "edge_order"}, {"n", "edges"}, "graph")
    try:
        graph = Graph.from_edges(gdoc["n"], gdoc["edges"], gdoc.get("edge_order"))
    except ValueError as exc:
        raise InputError(f"graph: {exc}") from exc

    ddoc = doc["dynamics"]
    _require_keys(ddoc, {"nx", "ad", "ac"}, {"nx", "ad", "ac"}, "dynamics")
    nx = int(ddoc["nx"])
    if nx < 1:
        raise InputError(f"dynamics: nx must be >= 1, got {nx}")
    dynamics = AgentDynamics(
        ad=_matrix_from_flat(ddoc["ad"], nx, "dynamics.ad"),
        ac=_matrix_from_flat(ddoc["ac"], nx, "dynamics.ac"),
    )

    ldoc = doc["loss"]
    _require_keys(ldoc, {"rho_l", "rho_u"}, {"rho_l", "rho_u"}, "loss")
    try:
        interval = Interval(float(ldoc["rho_l"]), float(ldoc["rho_u"]))
    except ValueError as exc:
        raise InputError(f"loss: {exc}") from exc

    mode = doc.get("mode", "general")
    if mode not in ("general", "consensus"):
        raise InputError(f"mode must be 'general' or 'consensus', got {mode!r}")
    if mode == "consensus":
        if nx != 1 or dynamics.ad[0, 0] != 1.0 or dynamics.ac[0, 0] >= 0.0:
            raise InputError(
                "consensus mode requires scalar dynamics with ad=1 and ac=-gain"
            )

    odoc = doc.get("options", {})
    _require_keys(
        odoc,
        {"seed", "horizon", "trials", "eps", "tol", "sigma0", "x0"},
        set(),
        "options",
    )
    options = RunOptions(
        seed=int(odoc.get("seed", 0)),
        horizon=int(odoc.get("horizon", 200)),
        trials=int(odoc.get("trials", 1000)),
        eps=None if odoc.get("eps") is None else float(odoc["eps"]),
        tol=None if odoc.get("tol") is None else float(odoc["tol"]),
        sigma0=None if odoc.get("sigma0") is None else int(odoc["sigma0"]),
        x0=None if odoc.get("x0") is None else tuple(float(v) for v in odoc["x0"]),
    )
    return ProblemFile(
        graph=graph,
        dynamics=dynamics,
        interval=interval,
        mode=mode,
        tpm_path=doc.get("tpm"),
        options=options,
    )


def load_problem(path: str) -> ProblemFile:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read problem file {path}: {exc}") from exc
    return parse_problem(doc)


def _matrix_doc(a: np.ndarray) -> dict:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return {"rows": a.shape[0], "cols": a.shape[1], "data": [float(v) for v in a.ravel()]}


def _matrix_from_doc(doc: dict, where: str) -> np.ndarray:
    _require_keys(doc, {"rows", "cols", "data"}, {"rows", "cols", "data"}, where)
    r, c = int(doc["rows"]), int(doc["cols"])
    data = np.asarray(doc["data"], dtype=float)
    if data.size != r * c:
        raise InputError(f"{where}: {r}x{c} matrix needs {r * c} entries, got {data.size}")
    return data.reshape(r, c)


def certificate_to_doc(cert: Certificate) -> dict:
    p = cert.multiplier
    return {
        "schema": CERTIFICATE_SCHEMA,
        "nx": int(cert.xtilde.shape[0]),
        "xtilde": _matrix_doc(cert.xtilde),
        "multiplier": {
            name: _matrix_doc(getattr(p, name))
            for name in ("q1", "q2", "q3", "r11", "r22", "r12", "s0")
        },
        "interval": {"rho_l": cert.interval.rho_l, "rho_u": cert.interval.rho_u},
        "lambda2": cert.lambda2,
        "lambdaN": cert.lambdaN,
        "margin": cert.margin,
        "include_nominal": cert.include_nominal,
    }


def certificate_from_doc(doc: dict) -> Certificate:
    _require_keys(
        doc,
        {"schema", "nx", "xtilde", "multiplier", "interval", "lambda2", "lambdaN",
         "margin", "include_nominal"},
        {"schema", "xtilde", "multiplier", "interval", "lambda2", "lambdaN", "margin"},
        "certificate",
    )
    if doc["schema"] != CERTIFICATE_SCHEMA:
        raise InputError(f"unsupported certificate schema {doc['schema']!r}")
    mdoc = doc["multiplier"]
    names = ("q1", "q2", "q3", "r11", "r22", "r12", "s0")
    _require_keys(mdoc, set(names), set(names), "certificate.multiplier")
    mult = MultiplierP(**{n: _matrix_from_doc(mdoc[n], f"multiplier.{n}") for n in names})
    ivdoc = doc["interval"]
    _require_keys(ivdoc, {"rho_l", "rho_u"}, {"rho_l", "rho_u"}, "certificate.interval")
    return Certificate(
        xtilde=_matrix_from_doc(doc["xtilde"], "certificate.xtilde"),
        multiplier=mult,
        interval=Interval(float(ivdoc["rho_l"]), float(ivdoc["rho_u"])),
        lambda2=float(doc["lambda2"]),
        lambdaN=float(doc["lambdaN"]),
        margin=float(doc["margin"]),
        include_nominal=bool(doc.get("include_nominal", True)),
    )


def load_certificate(path: str) -> Certificate:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read certificate {path}: {exc}") from exc
    return certificate_from_doc(doc)


def dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def read_tpm_csv(path: str, row_sum_tol: float = TPM_ROW_SUM_TOL) -> Tpm:
    """Read a square TPM from CSV; rows are renormalized after validation.

    Rows whose sums deviate from one by more than ``row_sum_tol`` are
    rejected; smaller deviations are divided out so downstream invariants
    hold to machine precision.
    """
    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read TPM CSV {path}: {exc}") from exc
    if raw.shape[0] != raw.shape[1]:
        raise InputError(f"TPM must be square, got shape {raw.shape}")
    k = raw.shape[0]
    m = int(round(np.log2(k)))
    if 1 << m != k:
        raise InputError(f"TPM size {k} is not a power of two")
    if raw.min() < -1e-12:
        raise InputError(f"TPM has negative entry {raw.min()}")
    sums = raw.sum(axis=1)
    worst = float(np.abs(sums - 1.0).max())
    if worst > row_sum_tol:
        raise InputError(f"TPM row sums deviate from 1 by {worst:.3e} (> {row_sum_tol})")
    return Tpm(m=m, rows=np.clip(raw, 0.0, None) / sums[:, None])


def write_tpm_csv(path: str, tpm: Tpm):
    np.savetxt(path, tpm.rows, delimiter=",", fmt="%.17g")


def trajectory_csv(stats: TrajectoryStats) -> str:
    lines = ["k,mean_sq_norm,stderr"]
    for k in range(stats.horizon + 1):
        lines.append(f"{k},{stats.mean_sq[k]!r},{stats.stderr[k]!r}")
    return "\n".join(lines) + "\n"

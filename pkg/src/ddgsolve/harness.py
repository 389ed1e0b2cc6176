"""Experiment driver: configuration, single runs, sweeps and the coarse-accuracy study."""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from . import io as dio
from .coarse import build_coarse_space, build_generating_basis, coarse_solution_error
from .krylov import SolveReport, pcg
from .partition import (
    Partition,
    box_partition,
    graph_partition,
    inertial_partition,
    num_parts_for,
)
from .problems import ProblemInstance, gaussian_rhs, make_problem, PROBLEMS
from .schwarz import build_three_level, build_two_level

__all__ = [
    "ExperimentConfig",
    "StageError",
    "RESULT_COLUMNS",
    "STUDY_COLUMNS",
    "load_config",
    "build_problem",
    "make_partition",
    "run_experiment",
    "run_sweep",
    "coarse_accuracy_study",
    "write_rows",
    "fit_order",
]

RESULT_COLUMNS = [
    "problem", "n", "d", "p", "H/h", "delta", "levels", "iterations", "fractional_iterations",
    "condition_estimate", "iteration_bound", "coarse_rank", "setup_seconds", "solve_seconds",
    "coarse_fraction_of_time",
]

STUDY_COLUMNS = ["problem", "H", "h", "n", "num_parts", "p", "q", "coarse_rank", "error", "l2_error",
                 "fitted_order", "fitted_l2_order"]

DEFAULT_STUDY_H = (1 / 8, 1 / 16, 1 / 32, 1 / 64)

SWEEP_AXES = ("p", "size", "coarsening", "hH2")


class StageError(RuntimeError):
    """A pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, error: BaseException):
        self.stage = stage
        self.error = error
        super().__init__(f"[{stage}] {type(error).__name__}: {error}")


@dataclass
class ExperimentConfig:
    """Parameters of one experiment.

    ``size`` is the nominal ``n**(1/d)`` of a generated problem.  When
    ``matrix`` is set the system is imported from Matrix Market files instead
    (``coords`` is then required unless ``generators`` is given).
    ``partitioner`` is ``auto`` (inertial with a random first cut for the 3D
    grid, graph bisection otherwise), ``graph``, ``inertial``, ``box`` or
    ``file`` (read from ``partition``).
    """

    problem: str = "poisson3d"
    size: int = 40
    coarsening_factor: float = 10.0
    p: int = 1
    delta: int = 0
    levels: int = 2
    tol: float = 1e-9
    max_iter: int = 1000
    seed: int = 0
    partitioner: str = "auto"
    materials: bool = True
    rank_tol: float = 1e-8
    inner: str = "exact"
    ssor_iters: int = 2
    reference: str = "first"
    num_components: int = 1
    q: int = 1
    matrix: str = ""
    coords: str = ""
    rhs: str = ""
    generators: str = ""
    material_file: str = ""
    partition: str = ""
    output: str = ""
    history: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.tol <= 1:
            raise ValueError(f"tol must lie in (0, 1], got {self.tol}")
        if not self.coarsening_factor >= 1:
            raise ValueError(f"coarsening_factor must be >= 1, got {self.coarsening_factor}")
        if self.p < 0:
            raise ValueError(f"p must be >= 0, got {self.p}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.partitioner not in ("auto", "graph", "inertial", "box", "file"):
            raise ValueError(f"unknown partitioner {self.partitioner!r}")
        if self.inner not in ("exact", "ssor"):
            raise ValueError(f"unknown inner solver {self.inner!r}")
        if not self.matrix and self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        return self

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        """Build from string or typed values, coercing to field types."""
        kw = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kw[key] = _coerce(raw, types[key])
        return cls(**kw)


def _coerce(raw, typ):
    if not isinstance(raw, str):
        return raw
    if typ in ("bool", bool):
        low = raw.strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"not a boolean: {raw!r}")
        return low in ("1", "true", "yes", "on")
    if typ in ("int", int):
        return int(raw)
    if typ in ("float", float):
        return float(raw)
    return raw.strip()


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a flat ``key = value`` file; ``#`` starts a comment.

    Entries in ``overrides`` (e.g. from command-line flags) win.
    """
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    values.update(overrides or {})
    return ExperimentConfig.from_mapping(values)


def _stage(name):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, et, ev, tb):
            if ev is not None and not isinstance(ev, StageError):
                raise StageError(name, ev) from ev
            return False

    return _Ctx()


def build_problem(cfg: ExperimentConfig) -> ProblemInstance:
    """Generate the configured benchmark or import it from files."""
    if not cfg.matrix:
        return make_problem(cfg.problem, cfg.size, cfg.seed)
    A = dio.read_matrix(cfg.matrix)
    nc = cfg.num_components
    if cfg.coords:
        coords = dio.read_coordinates(cfg.coords)
    elif cfg.generators:
        coords = np.zeros((A.shape[0] // nc, 1))
    else:
        raise ValueError("an imported matrix needs coords or generators")
    if coords.shape[0] * nc != A.shape[0]:
        raise ValueError(f"{coords.shape[0]} coordinate rows x {nc} components != {A.shape[0]} matrix rows")
    rhs = dio.read_dense(cfg.rhs) if cfg.rhs else gaussian_rhs(A.shape[0], cfg.seed)
    if rhs.shape != (A.shape[0],):
        raise ValueError(f"rhs has shape {rhs.shape}, matrix is {A.shape}")
    mat = dio.read_materials(cfg.material_file) if cfg.material_file else None
    d = coords.shape[1]
    h = float(A.shape[0] // nc) ** (-1.0 / d)
    return ProblemInstance(A, coords, d, cfg.q, nc, rhs, h, Path(cfg.matrix).stem, mat)


def make_partition(P: ProblemInstance, cfg: ExperimentConfig) -> Partition:
    """Non-overlapping partition with about ``(H/h)**d`` nodes per part."""
    nodes = P.coords.shape[0]
    kind = cfg.partitioner
    if kind == "file":
        part = dio.read_partition(cfg.partition)
        if len(part) != P.n:
            raise ValueError(f"partition file covers {len(part)} unknowns, matrix has {P.n}")
        return part
    if kind == "box":
        return box_partition(P.coords, cfg.coarsening_factor * P.mesh_h).expand_components(P.num_components)
    k = num_parts_for(nodes, cfg.coarsening_factor, P.d)
    if kind == "auto":
        kind = "inertial" if P.label.startswith("poisson3d") else "graph"
    if kind == "inertial":
        k = 1 << max(int(round(math.log2(max(k, 1)))), 0)
        return inertial_partition(P.coords, k, cfg.seed, randomize_first_cut=True).expand_components(
            P.num_components)
    return graph_partition(P.A, k, seed=cfg.seed, num_components=P.num_components)


def _generators(P: ProblemInstance, cfg: ExperimentConfig):
    if cfg.generators:
        F = dio.read_generators(cfg.generators)
        if F.shape[0] != P.n:
            raise ValueError(f"generators have {F.shape[0]} rows, matrix has {P.n}")
        return F
    mat = P.material_of_node if cfg.materials else None
    return build_generating_basis(P.coords, cfg.p, P.num_components, mat)


def run_experiment(cfg: ExperimentConfig, problem: ProblemInstance | None = None):
    """Run the full pipeline once.

    Returns
    -------
    report : SolveReport
    row : dict
        Keyed by ``RESULT_COLUMNS``.

    Raises
    ------
    StageError
        Wrapping whichever module error stopped the run.
    """
    cfg.validate()
    with _stage("generate"):
        P = problem if problem is not None else build_problem(cfg)
    t0 = time.perf_counter()
    with _stage("partition"):
        part = make_partition(P, cfg)
    with _stage("generators"):
        F = _generators(P, cfg)
    tc = time.perf_counter()
    with _stage("coarse"):
        if cfg.levels == 3:
            pre = build_three_level(P.A, F, part, cfg.coarsening_factor, cfg.delta, d=P.d,
                                    rank_tol=cfg.rank_tol, num_components=P.num_components,
                                    inner=cfg.inner, ssor_iters=cfg.ssor_iters, seed=cfg.seed)
        else:
            cs = build_coarse_space(P.A, F, part, cfg.rank_tol)
    coarse_setup = time.perf_counter() - tc
    with _stage("smoother"):
        if cfg.levels == 2:
            pre = build_two_level(P.A, F, part, cfg.delta, cfg.rank_tol, P.num_components,
                                  cfg.inner, cfg.ssor_iters, coarse=cs)
    setup = time.perf_counter() - t0
    with _stage("solve"):
        t1 = time.perf_counter()
        report = pcg(P.A, pre, P.rhs, cfg.tol, cfg.max_iter, cfg.reference)
        solve = time.perf_counter() - t1
    if cfg.levels == 3:
        coarse_setup = pre.coarse_setup_seconds
    coarse_time = coarse_setup + pre.coarse_seconds
    row = {
        "problem": P.label,
        "n": P.n,
        "d": P.d,
        "p": cfg.p,
        "H/h": float(cfg.coarsening_factor),
        "delta": cfg.delta,
        "levels": pre.levels,
        **report.as_row(),
        "coarse_rank": pre.coarse.rank,
        "setup_seconds": setup,
        "solve_seconds": solve,
        "coarse_fraction_of_time": coarse_time / max(setup + solve, 1e-300),
    }
    row = {k: row[k] for k in RESULT_COLUMNS}
    report.extra.update(partition=part, problem=P, preconditioner=pre)
    if cfg.output:
        write_rows(cfg.output, [row], RESULT_COLUMNS, append=True)
    if cfg.history:
        write_history(cfg.history, report)
    return report, row


def write_rows(path, rows, columns=RESULT_COLUMNS, append=False):
    """Write rows as CSV; appending to an existing file keeps its single header."""
    path = Path(path)
    fresh = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "w" if fresh else "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        if fresh:
            w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in columns})


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_history(path, report: SolveReport):
    """Residual history as ``iteration, residual, relative`` CSV."""
    ref = report.reference_residual or 1.0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "residual", "relative"])
        for k, r in enumerate(report.residual_history):
            w.writerow([k, repr(float(r)), repr(float(r / ref))])


def _sweep_config(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "p":
        return cfg.replace(p=int(value))
    if axis == "size":
        return cfg.replace(size=int(value))
    if axis == "coarsening":
        return cfg.replace(coarsening_factor=float(value))
    # h = H^2: H/h = sqrt(n^(1/d)) and the overlap follows H/(4h)
    cf = math.sqrt(float(value))
    return cfg.replace(size=int(value), coarsening_factor=cf, delta=int(math.floor(cf / 4)))


def run_sweep(cfg: ExperimentConfig, axis: str, values, output=None) -> list[dict]:
    """One experiment per value along ``axis`` (``p``, ``size``, ``coarsening`` or ``hH2``).

    ``hH2`` takes sizes ``n**(1/d)`` and sets ``H/h = sqrt(size)`` and
    ``delta = floor(H / 4h)``.  All rows share the template's seed.  With an
    empty ``values`` only the header is written.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    rows = []
    base = cfg.replace(output="", history="")
    for v in values:
        _, row = run_experiment(_sweep_config(base, axis, v).validate())
        rows.append(row)
    if output:
        write_rows(output, rows, RESULT_COLUMNS)
    return rows


def fit_order(H, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(H)``."""
    H = np.asarray(H, dtype=np.float64)
    e = np.asarray(errors, dtype=np.float64)
    if H.size < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(H), np.log(e), 1)
    return float(slope)


def _manufactured(problem: str, coords):
    x, y = coords[:, 0], coords[:, 1]
    pi = np.pi
    if problem == "poisson2d":
        return 5 * pi ** 2 * np.sin(pi * x) * np.sin(2 * pi * y)
    # clamped plate: u = sin^2(pi x) sin^2(pi y)
    s = lambda t: np.sin(pi * t) ** 2
    s2 = lambda t: 2 * pi ** 2 * np.cos(2 * pi * t)
    s4 = lambda t: -8 * pi ** 4 * np.cos(2 * pi * t)
    return s4(x) * s(y) + 2 * s2(x) * s2(y) + s(x) * s4(y)


def coarse_accuracy_study(cfg: ExperimentConfig, H_values=DEFAULT_STUDY_H, output=None):
    """Energy-norm error of the Galerkin coarse solution as ``H`` shrinks at fixed ``H/h``.

    Supports ``poisson2d`` and ``biharmonic`` on the unit square with a smooth
    manufactured solution; the reference is a sparse direct fine solve.  The
    grid for subdomain width ``H`` has ``h = H / coarsening_factor``.
    ``error`` is the A-norm error scaled to the continuous energy norm;
    ``l2_error`` is the grid L2 norm ``sqrt(h**d) ||e||``.

    Returns
    -------
    rows : list of dict
        Keyed by ``STUDY_COLUMNS``.
    order : float
        Least-squares log-log slope of the energy error (nan for fewer than
        two values).  The L2 slope is in each row as ``fitted_l2_order``.
    """
    if cfg.problem not in ("poisson2d", "biharmonic"):
        raise ValueError("coarse_accuracy_study supports poisson2d and biharmonic")
    rows = []
    for H in H_values:
        H = float(H)
        with _stage("generate"):
            m = int(round(cfg.coarsening_factor / H)) - 1
            P = make_problem(cfg.problem, m, cfg.seed)
            f = _manufactured(cfg.problem, P.coords)
        with _stage("partition"):
            kind = "box" if cfg.partitioner == "auto" else cfg.partitioner
            part = make_partition(P, cfg.replace(partitioner=kind))
        with _stage("coarse"):
            F = build_generating_basis(P.coords, cfg.p)
            cs = build_coarse_space(P.A, F, part, cfg.rank_tol)
        with _stage("solve"):
            ref = spla.spsolve(P.A.tocsc(), f)
            err = coarse_solution_error(P.A, f, cs, ref) * math.sqrt(P.energy_scale)
            e = cs.restriction.T @ cs.solve(cs.restriction @ f) - ref
            l2 = float(np.linalg.norm(e)) * P.mesh_h ** (P.d / 2)
        rows.append({"problem": cfg.problem, "H": H, "h": P.mesh_h, "n": P.n, "num_parts": part.num_parts,
                     "p": cfg.p, "q": P.q, "coarse_rank": cs.rank, "error": err, "l2_error": l2})
    Hs = [r["H"] for r in rows]
    order = fit_order(Hs, [r["error"] for r in rows])
    l2_order = fit_order(Hs, [r["l2_error"] for r in rows])
    for r in rows:
        r["fitted_order"] = order
        r["fitted_l2_order"] = l2_order
    if output:
        write_rows(output, rows, STUDY_COLUMNS)
    return rows, order

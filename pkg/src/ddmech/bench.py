"""Benchmark problems, error metrics, and reproducible studies.

Two desk-scale benchmark problems are provided:

* ``tube``: quarter of a nonlinear-elastic cylindrical tube under
  internal pressure, with symmetry boundary conditions;
* ``plateHole``: elasto-plastic rectangular plate with a centered
  circular hole, clamped on the left edge and loaded by a vertical
  traction cycle on the right edge.

Studies sweep dataset sizes or noise levels over replicated random
datasets, compare against the reference constitutive solutions, and
emit CSV tables plus a JSON manifest (config, config hash, seeds,
package versions) so every row can be reproduced.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ddmech import data, fem, materials, solver, transition
from ddmech.neighbors import NNIndex, PhaseMetric, local_distances


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------

def step_error(states, ref_states, model: fem.FemModel,
               metric: PhaseMetric) -> float:
    """Relative phase-space error of one step against a reference.

    ``Error^2 = sum_e w_e ||z_e - z_e_ref||^2 / sum_e w_e ||z_e_ref||^2``
    with the metric's stiffness-weighted norm; ``states`` and
    ``ref_states`` expose ``strains`` and ``stresses`` arrays.
    """
    zero_s = np.zeros_like(ref_states.strains)
    num = local_distances(states.strains, states.stresses,
                          ref_states.strains, ref_states.stresses, metric)
    den = local_distances(ref_states.strains, ref_states.stresses,
                          zero_s, zero_s, metric)
    den_total = float(model.w_flat @ den)
    if den_total == 0.0:
        raise ValueError("reference states are identically zero")
    return float(np.sqrt(model.w_flat @ num / den_total))


def rmsd(history, ref_history, model: fem.FemModel, metric: PhaseMetric) -> float:
    """Root-mean-square of per-step errors along a load history.

    A history of ``T + 1`` entries is averaged with denominator ``T``
    (so a constant error ``c`` yields ``c * sqrt((T + 1) / T)``);
    histories must have equal length >= 2.
    """
    if len(history) != len(ref_history):
        raise ValueError(f"history lengths differ: {len(history)} vs {len(ref_history)}")
    if len(history) < 2:
        raise ValueError("need at least two steps to form an RMSD")
    errors = [step_error(z, z_ref, model, metric)
              for z, z_ref in zip(history, ref_history)]
    return float(np.sqrt(np.sum(np.square(errors)) / (len(errors) - 1)))


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Configuration mirrored by the CLI's JSON config document."""

    problem: str = "tube"            # "tube", "plateHole", or a mesh file path
    # mesh resolution (tube default: 200 elements; plate: 360)
    n_radial: int = 5
    n_circ: int = 20
    refinement: int = 1
    # dataset
    scheme: str = "randomNormal"
    size_per_axis: int = 16
    std: float = 0.01
    half_width: float = 0.02
    noise_level: float = 0.0
    dataset_path: str | None = None
    dataset_size: int = 10_000       # virtual-test sample total (plate)
    steps_per_path: int = 25
    max_path_strain: float = 0.012
    # metric and solver
    metric_modulus: float | None = None
    tolerance: float | None = None
    max_iterations: int = 60
    # tube load: pressure amplitude factor applied to the log-schedule,
    # 100 steps at scale 0.03 keeps states inside the sampled strain range
    load_steps: int = 100
    load_scale: float = 0.03
    # plate load cycle (Pa peaks, steps per leg)
    plate_peaks: tuple = (1.8e7, 0.0, 2.0e7)
    plate_leg_steps: tuple = (18, 18, 20)
    # experiment controls
    seed: int = 2024
    replicas: int = 10
    sizes: tuple = (8, 16, 32)
    noise_levels: tuple = (0.01, 0.05, 0.10)
    output_dir: str = "out"
    threads: int = 1
    # custom-mesh problems: boundary conditions and load edge
    dirichlet: tuple = ()            # ((edge_tag, component, value), ...)
    load_edge: str | None = None
    load_traction: tuple = (0.0, -1.0)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        for key in ("plate_peaks", "plate_leg_steps", "sizes", "noise_levels",
                    "dirichlet", "load_traction"):
            setattr(cfg, key, tuple(getattr(cfg, key)))
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Benchmark problems
# ---------------------------------------------------------------------------

TUBE_R1, TUBE_R2 = 1.0, 2.0
TUBE_MATERIAL = materials.NonlinearElasticParams(E=70e3, nu=0.3, c1=3.0e-2, c2=1.0e2)
PLATE_LENGTH, PLATE_HEIGHT, PLATE_HOLE_RADIUS = 1.0, 0.2, 0.05
PLATE_MATERIAL = materials.J2Params(E=200e9, nu=0.3, H=200e9 / 20.0, sigma_y0=250e6)


def tube_pressure(t: float, r1: float = TUBE_R1, r2: float = TUBE_R2) -> float:
    """Pressure schedule ``5e4 / sqrt(3) * ln(r2 / r1) * t``."""
    return 5.0e4 / np.sqrt(3.0) * np.log(r2 / r1) * t


@dataclass
class Problem:
    """A benchmark instance: model, load schedule, metric, reference.

    ``magnitudes`` holds the scalar load parameter per step (pressure or
    edge traction in Pa); ``schedule`` the assembled load vectors.
    """

    name: str
    model: fem.FemModel
    schedule: list
    magnitudes: np.ndarray
    metric: PhaseMetric
    material: object
    _reference: list | None = field(default=None, repr=False)

    def reference(self) -> list[materials.ReferenceStep]:
        """Reference constitutive solution along the schedule (cached)."""
        if self._reference is None:
            if isinstance(self.material, materials.J2Params):
                self._reference = materials.reference_solve_plastic(
                    self.model, self.material, self.schedule)
            else:
                self._reference = materials.reference_solve_nonlinear(
                    self.model, self.material, self.schedule)
        return self._reference


def build_tube(config: RunConfig) -> Problem:
    """Quarter tube under internal pressure, nonlinear elastic."""
    mesh = fem.generate_quarter_annulus(TUBE_R1, TUBE_R2, config.n_radial,
                                        config.n_circ)
    model = fem.build_fem_model(mesh, [fem.DirichletBC("sym_y0", 1),
                                       fem.DirichletBC("sym_x0", 0)])
    base = fem.pressure_load(model, "inner", 1.0)
    times = np.linspace(0.0, config.load_scale, config.load_steps + 1)[1:]
    mags = np.array([tube_pressure(t) for t in times])
    schedule = [p * base for p in mags]
    metric = PhaseMetric(config.metric_modulus or TUBE_MATERIAL.E)
    return Problem("tube", model, schedule, mags, metric, TUBE_MATERIAL)


def plate_load_magnitudes(peaks, leg_steps) -> np.ndarray:
    """Piecewise-linear load cycle through the given peaks (start at 0)."""
    mags: list[float] = []
    start = 0.0
    for peak, steps in zip(peaks, leg_steps):
        mags.extend(np.linspace(start, peak, steps + 1)[1:])
        start = peak
    return np.array(mags)


def build_plate(config: RunConfig) -> Problem:
    """Plate with a hole, clamped left edge, vertical traction cycle."""
    mesh = fem.generate_plate_with_hole(PLATE_LENGTH, PLATE_HEIGHT,
                                        PLATE_HOLE_RADIUS, config.refinement)
    model = fem.build_fem_model(mesh, [fem.DirichletBC("clamp", 0),
                                       fem.DirichletBC("clamp", 1)])
    base = fem.edge_traction_load(model, "load", config.load_traction)
    mags = plate_load_magnitudes(config.plate_peaks, config.plate_leg_steps)
    schedule = [q * base for q in mags]
    metric = PhaseMetric(config.metric_modulus or PLATE_MATERIAL.E)
    return Problem("plateHole", model, schedule, mags, metric, PLATE_MATERIAL)


def build_custom(config: RunConfig) -> Problem:
    """Problem on a user-supplied mesh file with nonlinear elastic material."""
    mesh = fem.load_mesh(config.problem)
    bcs = [fem.DirichletBC(tag, int(comp), float(val))
           for tag, comp, val in config.dirichlet]
    if not bcs:
        raise ValueError("custom-mesh problems require 'dirichlet' entries")
    if config.load_edge is None:
        raise ValueError("custom-mesh problems require 'load_edge'")
    model = fem.build_fem_model(mesh, bcs)
    base = fem.edge_traction_load(model, config.load_edge, config.load_traction)
    mags = np.linspace(0.0, config.load_scale, config.load_steps + 1)[1:]
    schedule = [t * base for t in mags]
    metric = PhaseMetric(config.metric_modulus or TUBE_MATERIAL.E)
    return Problem("custom", model, schedule, mags, metric, TUBE_MATERIAL)


def build_problem(config: RunConfig) -> Problem:
    if config.problem == "tube":
        return build_tube(config)
    if config.problem == "plateHole":
        return build_plate(config)
    if Path(config.problem).exists():
        return build_custom(config)
    raise ValueError(f"unknown problem {config.problem!r} "
                     f"(expected 'tube', 'plateHole', or a mesh file path)")


def make_dataset(config: RunConfig, problem: Problem, seed) -> data.LabeledDataSet:
    """Dataset per config: file, virtual test (plastic), or sampled elastic."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    data_seed, noise_seed = seed.spawn(2)
    if config.dataset_path:
        ds = data.load_dataset(config.dataset_path)
    elif isinstance(problem.material, materials.J2Params):
        n_paths = max(1, config.dataset_size // config.steps_per_path)
        ds = materials.virtual_test_sample(
            problem.material, n_paths, config.steps_per_path, data_seed,
            max_strain=config.max_path_strain)
    else:
        size = (config.size_per_axis ** 3
                if config.scheme in ("randomNormal", "randomUniform")
                else config.size_per_axis)
        ds = data.sample_dataset(problem.material, config.scheme, size,
                                 std=config.std, half_width=config.half_width,
                                 metric_modulus=problem.metric.modulus,
                                 seed=data_seed)
    if config.noise_level > 0.0:
        ds = data.add_noise(ds, config.noise_level, noise_seed)
    return ds


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------

def run_elastic_history(problem: Problem, ds: data.LabeledDataSet, *,
                        tol=None, max_iter=60, classical=False):
    view = NNIndex(ds.view(), problem.metric)
    return solver.solve_load_program(problem.model, view, problem.schedule,
                                     tol=tol, max_iter=max_iter,
                                     classical=classical)


def run_plastic_history(problem: Problem, ds: data.LabeledDataSet, *,
                        tol=None, max_iter=60):
    assert isinstance(problem.material, materials.J2Params)
    return transition.run_load_program(problem.model, ds, problem.schedule,
                                       problem.material.sigma_y0,
                                       metric=problem.metric, tol=tol,
                                       max_iter=max_iter)


def history_rmsd(problem: Problem, solutions) -> float:
    return rmsd(solutions, problem.reference(), problem.model, problem.metric)


def corner_node(mesh: fem.Mesh, x: float, y: float) -> int:
    """Node id closest to a physical point (for tracking displacements)."""
    return int(np.argmin(np.linalg.norm(mesh.nodes - np.array([x, y]), axis=1)))


def tracked_displacement(solutions, node: int, component: int = 1) -> np.ndarray:
    """One displacement component of a node along a solve history."""
    return np.array([sol.displacements[2 * node + component] for sol in solutions])


def step_rows(problem: Problem, solutions, histories=None) -> list[dict]:
    """Per-step summary rows for CSV output (one run)."""
    reference = problem.reference()
    rows = []
    for k, sol in enumerate(solutions):
        row = {
            "step": k + 1,
            "load": float(problem.magnitudes[k]),
            "iterations": sol.iterations,
            "distance": sol.final_distance,
            "error": step_error(sol, reference[k], problem.model, problem.metric),
            "maxDisplacement": float(np.abs(sol.displacements).max()),
        }
        if histories is not None:
            row["inelasticPoints"] = int(
                np.count_nonzero(histories[k].subset == data.INELASTIC))
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

_PROBLEM_CACHE: dict[str, Problem] = {}


def _cached_problem(config: RunConfig) -> Problem:
    key = json.dumps({k: v for k, v in config.to_dict().items()
                      if k in ("problem", "n_radial", "n_circ", "refinement",
                               "load_steps", "load_scale", "plate_peaks",
                               "plate_leg_steps", "metric_modulus", "dirichlet",
                               "load_edge", "load_traction")}, sort_keys=True)
    if key not in _PROBLEM_CACHE:
        _PROBLEM_CACHE[key] = build_problem(config)
        _PROBLEM_CACHE[key].reference()
    return _PROBLEM_CACHE[key]


def _replica_rmsd(payload) -> float:
    """One replica: build dataset from its seed, run, return RMSD."""
    cfg_dict, seed_list = payload
    config = RunConfig.from_dict(cfg_dict)
    problem = _cached_problem(config)
    seed = np.random.SeedSequence(seed_list)
    ds = make_dataset(config, problem, seed)
    if isinstance(problem.material, materials.J2Params):
        solutions, _ = run_plastic_history(problem, ds, tol=config.tolerance,
                                           max_iter=config.max_iterations)
    else:
        solutions = run_elastic_history(problem, ds, tol=config.tolerance,
                                        max_iter=config.max_iterations)
    return history_rmsd(problem, solutions)


def _run_replicas(config: RunConfig, payloads: list) -> list[float]:
    if config.threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(_replica_rmsd, payloads))
    return [_replica_rmsd(p) for p in payloads]


def convergence_study(config: RunConfig) -> list[dict]:
    """RMSD versus dataset size, replicated over independent datasets.

    Returns one row per size with mean/min/max RMSD and wall time; the
    replica seeds are spawned deterministically from the master seed.
    """
    if len(config.sizes) < 2:
        raise ValueError("convergence study needs at least two dataset sizes")
    rows = []
    for size in config.sizes:
        cfg = replace(config, size_per_axis=int(size), dataset_size=int(size))
        payloads = [(cfg.to_dict(), [config.seed, int(size), r])
                    for r in range(config.replicas)]
        t0 = time.perf_counter()
        values = _run_replicas(cfg, payloads)
        rows.append({
            "datasetSize": int(size),
            "meanRMSD": float(np.mean(values)),
            "minRMSD": float(np.min(values)),
            "maxRMSD": float(np.max(values)),
            "runtime": time.perf_counter() - t0,
        })
    return rows


def noise_study(config: RunConfig) -> list[dict]:
    """RMSD versus noise level for normal and uniform datasets."""
    rows = []
    for scheme in ("randomNormal", "randomUniform"):
        for level in config.noise_levels:
            cfg = replace(config, scheme=scheme, noise_level=float(level))
            payloads = [(cfg.to_dict(),
                         [config.seed, 1 if scheme == "randomNormal" else 2, r])
                        for r in range(config.replicas)]
            values = _run_replicas(cfg, payloads)
            rows.append({
                "noiseLevel": float(level),
                "distribution": scheme,
                "meanRMSD": float(np.mean(values)),
                "spread": float(np.max(values) - np.min(values)),
            })
    return rows


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def write_csv(rows: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def write_manifest(config: RunConfig, path, extra: dict | None = None) -> None:
    import scipy

    import ddmech

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config.to_dict(),
        "config_sha256": config.digest(),
        "versions": {"ddmech": ddmech.__version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
    }
    manifest.update(extra or {})
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")

"""Load-step driver with elastic/inelastic transition rules.

Between load increments every material point is mapped to the data
subset matching its behaviour: a point whose von Mises comparison
stress stays below its current yield stress searches the elastic
subset, any other point searches the inelastic subset and raises its
yield stress to the comparison stress (isotropic hardening).  The
nearest data point in the newly selected subset seeds the next step's
solve, so loading, unloading and reloading pick up the right local
tangent maps without any constitutive model in the loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ddmech.data import ELASTIC, INELASTIC, LabeledDataSet
from ddmech.fem import FemModel
from ddmech.neighbors import NNIndex, PhaseMetric
from ddmech.solver import DDSolution, dd_solve_step, initial_assignment
from ddmech.tensors import von_mises_stress


class DataCoverageError(RuntimeError):
    """A required data subset is empty or too sparse to proceed."""


@dataclass
class PointHistory:
    """Per-point driver state, stored as arrays over all material points.

    ``sigma_y`` never drops below the initial yield stress; ``subset``
    holds the label of the subset each point searches next; ``assigned``
    is the global dataset index seeding the next solve.
    """

    sigma_y: np.ndarray      # (m,)
    subset: np.ndarray       # (m,) label strings
    assigned: np.ndarray     # (m,) int

    @classmethod
    def initial(cls, n_points: int, sigma_y0: float,
                elastic_view: NNIndex) -> "PointHistory":
        assigned = initial_assignment(elastic_view, n_points)
        return cls(np.full(n_points, float(sigma_y0)),
                   np.full(n_points, ELASTIC, dtype="U9"), assigned)


def build_subset_indices(dataset: LabeledDataSet,
                         metric: PhaseMetric | None = None) -> dict[str, NNIndex]:
    """One nearest-neighbor index per non-empty label subset."""
    metric = metric or PhaseMetric(dataset.metric_modulus)
    indices: dict[str, NNIndex] = {}
    for label in (ELASTIC, INELASTIC):
        view = dataset.view(label)
        if len(view):
            indices[label] = NNIndex(view, metric)
    if ELASTIC not in indices:
        raise DataCoverageError(
            "dataset has no elastic samples; generate a dataset covering "
            "the unloaded regime")
    return indices


def transition_step(model: FemModel, subsets: dict[str, NNIndex],
                    histories: PointHistory, f: np.ndarray, *,
                    tol: float | None = None, max_iter: int = 50,
                    clamp_hardening: bool = True) -> tuple[DDSolution, PointHistory]:
    """Solve one load increment and apply the transition rules.

    Runs the tangent-map solver on each point's current subset, then
    per point: classify against the yield stress (ties count as
    inelastic), raise the yield stress of inelastic points to their
    comparison stress, and re-assign the nearest data point inside the
    new subset.  ``clamp_hardening`` keeps ``sigma_y`` non-decreasing,
    guarding the hardening semantics against noisy data; disable it to
    apply the raw update.
    """
    views = [subsets[label] for label in histories.subset]
    solution = dd_solve_step(model, views, histories.assigned, f=f, tol=tol,
                             max_iter=max_iter)

    sig_com = von_mises_stress(solution.stresses)
    elastic_mask = sig_com < histories.sigma_y
    new_subset = np.where(elastic_mask, ELASTIC, INELASTIC)
    new_sigma_y = histories.sigma_y.copy()
    if clamp_hardening:
        new_sigma_y[~elastic_mask] = np.maximum(histories.sigma_y[~elastic_mask],
                                                sig_com[~elastic_mask])
    else:
        new_sigma_y[~elastic_mask] = sig_com[~elastic_mask]

    if INELASTIC not in subsets and not elastic_mask.all():
        n_bad = int(np.count_nonzero(~elastic_mask))
        raise DataCoverageError(
            f"{n_bad} material points left the elastic regime but the dataset "
            f"has no inelastic samples; provide a larger dataset covering "
            f"yielded states")

    new_assigned = histories.assigned.copy()
    for label in (ELASTIC, INELASTIC):
        pts = np.flatnonzero(new_subset == label)
        if pts.size:
            idx, _ = subsets[label].nearest_batch(solution.strains[pts],
                                                  solution.stresses[pts])
            new_assigned[pts] = idx
    return solution, PointHistory(new_sigma_y, new_subset, new_assigned)


def run_load_program(model: FemModel, dataset: LabeledDataSet, load_schedule,
                     sigma_y0: float, *, metric: PhaseMetric | None = None,
                     tol: float | None = None, max_iter: int = 50,
                     clamp_hardening: bool = True
                     ) -> tuple[list[DDSolution], list[PointHistory]]:
    """Run a full load schedule, threading the transition state.

    Returns the per-step solutions (for error evaluation) and the
    per-step histories after each transition (for inspecting subset
    flags and yield-stress evolution).
    """
    subsets = build_subset_indices(dataset, metric)
    histories = PointHistory.initial(model.n_points, sigma_y0, subsets[ELASTIC])
    solutions: list[DDSolution] = []
    trace: list[PointHistory] = []
    for f in load_schedule:
        solution, histories = transition_step(
            model, subsets, histories, f, tol=tol, max_iter=max_iter,
            clamp_hardening=clamp_hardening)
        solutions.append(solution)
        trace.append(histories)
    return solutions, trace

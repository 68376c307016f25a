"""Data-driven solvers: tangent-map accelerated and classical.

Both solvers iterate between (a) solving for the displacement field
that best satisfies equilibrium given one assigned data point per
material point and (b) re-assigning each point to its nearest dataset
neighbor in phase space.  Compatibility ``eps = B u`` holds by
construction at every iterate; equilibrium holds to linear-solver
accuracy on the free dofs.

The tangent-map solver replaces each assigned sample by its local
affine map ``sig = sig_hat + C (eps - eps_hat)``, which collapses the
update to one symmetric linear solve and typically stabilizes the
assignment within a few iterations.  The classical solver keeps the
samples as bare points and alternates the two-field projection
(displacement and equilibrium-multiplier solves with the metric
modulus as surrogate stiffness), which needs more sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ddmech.data import LabeledDataSet
from ddmech.fem import (FemModel, NonConvergenceError, SingularSystemError,
                        assemble_stiffness, solve_constrained)
from ddmech.neighbors import NNIndex


@dataclass(frozen=True)
class MechState:
    """Strain-stress pair of one material point (Mandel components)."""

    strain: np.ndarray
    stress: np.ndarray


@dataclass
class DDSolution:
    """Converged state of one data-driven solve.

    ``assignment`` holds one global dataset index per material point;
    ``final_distance`` is the quadrature-weighted phase-space distance
    between the states and their assigned data points.  ``cycled`` marks
    solves that revisited an earlier assignment and returned the best
    iterate instead of a fixed point.
    """

    displacements: np.ndarray
    strains: np.ndarray           # (m, 4)
    stresses: np.ndarray          # (m, 4)
    assignment: np.ndarray        # (m,) int
    iterations: int
    final_distance: float
    cycled: bool = False

    @property
    def states(self) -> list[MechState]:
        return [MechState(self.strains[e], self.stresses[e])
                for e in range(self.strains.shape[0])]


def default_tolerance(dataset: LabeledDataSet, n_points: int) -> float:
    """Distance tolerance scaled by point count and dataset energy scale."""
    s_max = float(np.abs(dataset.strains).max()) or 1.0
    return 1e-8 * n_points * 0.5 * dataset.metric_modulus * s_max ** 2


def assemble_dd_system(model: FemModel, hat_strains: np.ndarray,
                       hat_stresses: np.ndarray, tangents: np.ndarray,
                       f: np.ndarray):
    """Linear system of the tangent-map update.

    ``K = sum_e w_e B_e^T C_e B_e`` and
    ``rhs = f - sum_e w_e B_e^T (sig_hat_e - C_e eps_hat_e)``; Dirichlet
    rows are condensed later by :func:`ddmech.fem.solve_constrained`.
    """
    k = assemble_stiffness(model, tangents)
    offset = hat_stresses - np.einsum("pij,pj->pi", tangents, hat_strains)
    rhs = f - model.internal_force(offset)
    return k, rhs


def _as_views(views, n_points: int) -> list[NNIndex]:
    if isinstance(views, NNIndex):
        return [views] * n_points
    views = list(views)
    if len(views) != n_points:
        raise ValueError(f"need one subset view per material point "
                         f"({n_points}), got {len(views)}")
    if len(views) == 0:
        raise ValueError("model has no material points")
    ds = views[0].dataset
    if any(v.dataset is not ds for v in views):
        raise ValueError("all subset views must share one dataset")
    return views


def _reassign(views: list[NNIndex], strains, stresses):
    """Nearest data point per material point, batched per distinct view."""
    m = strains.shape[0]
    assignment = np.empty(m, dtype=int)
    dists = np.empty(m)
    groups: dict[int, list[int]] = {}
    for e, view in enumerate(views):
        groups.setdefault(id(view), []).append(e)
    for point_ids in groups.values():
        pts = np.array(point_ids)
        view = views[pts[0]]
        idx, d = view.nearest_batch(strains[pts], stresses[pts])
        assignment[pts] = idx
        dists[pts] = d
    return assignment, dists


def initial_assignment(views, n_points: int) -> np.ndarray:
    """Nearest data point to the zero state, per material point."""
    views = _as_views(views, n_points)
    zero = np.zeros((n_points, 4))
    assignment, _ = _reassign(views, zero, zero)
    return assignment


#: Iterations without relative distance improvement before a solve is
#: declared oscillating (noisy datasets flap between near-equivalent
#: assignments without exactly revisiting one).
STALL_ITERATIONS = 10
_STALL_REL = 1e-2


def _fixed_point(model: FemModel, views: list[NNIndex], init: np.ndarray,
                 update, tol: float, max_iter: int,
                 solver_name: str) -> DDSolution:
    """Shared assignment-iteration loop with oscillation handling.

    ``update(assignment) -> (u, strains, stresses)`` produces the
    constrained states for a given data assignment.  Terminates when the
    assignment repeats or the global distance drops below ``tol``.  A
    revisit of an older assignment, or ``STALL_ITERATIONS`` sweeps
    without relative distance improvement, counts as an oscillation and
    returns the best-distance iterate with ``cycled=True``.
    """
    assignment = np.asarray(init, dtype=int).copy()
    seen = {assignment.tobytes()}
    best: DDSolution | None = None
    last: DDSolution | None = None
    stalled = 0
    for it in range(1, max_iter + 1):
        u, strains, stresses = update(assignment)
        new_assignment, dists = _reassign(views, strains, stresses)
        distance = float(model.w_flat @ dists)
        last = DDSolution(u, strains, stresses, new_assignment, it, distance)
        if best is None or distance < best.final_distance * (1.0 - _STALL_REL):
            stalled = 0
        else:
            stalled += 1
        if best is None or distance < best.final_distance:
            best = last
        if np.array_equal(new_assignment, assignment) or distance <= tol:
            return last
        if new_assignment.tobytes() in seen or stalled >= STALL_ITERATIONS:
            best.cycled = True
            best.iterations = it
            return best
        seen.add(new_assignment.tobytes())
        assignment = new_assignment
    raise NonConvergenceError(
        f"{solver_name} did not stabilize within {max_iter} iterations "
        f"(last distance {last.final_distance:.3e}, tol {tol:.3e})", last=last)


def dd_solve_step(model: FemModel, views, init_assignment=None, *,
                  f: np.ndarray, tol: float | None = None,
                  max_iter: int = 50) -> DDSolution:
    """One load step of the tangent-map data-driven solver.

    ``views`` is an :class:`~ddmech.neighbors.NNIndex` (shared by all
    points) or one per material point; the views carry the phase-space
    metric.  ``init_assignment`` defaults to the nearest data point to
    the zero state.  Raises :class:`~ddmech.fem.NonConvergenceError`
    carrying the last iterate if the assignment never stabilizes, and
    propagates :class:`~ddmech.fem.SingularSystemError` from the linear
    solves.
    """
    views = _as_views(views, model.n_points)
    dataset = views[0].dataset
    if init_assignment is None:
        init_assignment = initial_assignment(views, model.n_points)
    if tol is None:
        tol = default_tolerance(dataset, model.n_points)

    def update(assignment):
        hat_eps = dataset.strains[assignment]
        hat_sig = dataset.stresses[assignment]
        tangents = dataset.tangents[assignment]
        k, rhs = assemble_dd_system(model, hat_eps, hat_sig, tangents, f)
        u = solve_constrained(model, k, rhs)
        strains = model.strains(u)
        stresses = hat_sig + np.einsum("pij,pj->pi", tangents, strains - hat_eps)
        return u, strains, stresses

    return _fixed_point(model, views, init_assignment, update, tol, max_iter,
                        "tangent-map data-driven solver")


def classical_dd_solve(model: FemModel, views, init_assignment=None, *,
                       f: np.ndarray, tol: float | None = None,
                       max_iter: int = 200) -> DDSolution:
    """Classical distance-minimizing data-driven solve (one load step).

    Alternates the two-field projection onto the constraint set with
    nearest-point re-assignment; the views' metric modulus doubles as
    the surrogate stiffness.  Both linear solves share one constant
    matrix ``E * sum_e w_e B_e^T B_e``, factorized once.
    """
    from scipy.sparse.linalg import splu

    views = _as_views(views, model.n_points)
    dataset = views[0].dataset
    if init_assignment is None:
        init_assignment = initial_assignment(views, model.n_points)
    if tol is None:
        tol = default_tolerance(dataset, model.n_points)
    e_mod = views[0].metric.modulus

    metric_tangent = np.broadcast_to(e_mod * np.eye(4), (model.n_points, 4, 4))
    k = assemble_stiffness(model, metric_tangent)
    k = 0.5 * (k + k.T)
    free = model.free_dofs
    try:
        lu = splu(k[free][:, free].tocsc())
    except RuntimeError as exc:
        raise SingularSystemError(f"metric stiffness is singular: {exc}") from None
    k_fc = k[free][:, model.dirichlet_dofs]

    def update(assignment):
        hat_eps = dataset.strains[assignment]
        hat_sig = dataset.stresses[assignment]
        # displacement field closest to the assigned strains
        u = np.zeros(model.n_dofs)
        u[model.dirichlet_dofs] = model.dirichlet_values
        rhs_u = model.internal_force(e_mod * hat_eps)[free]
        if model.dirichlet_dofs.size:
            rhs_u = rhs_u - k_fc @ model.dirichlet_values
        u[free] = lu.solve(rhs_u)
        # equilibrium multiplier field lifting the assigned stresses onto f
        eta = np.zeros(model.n_dofs)
        eta[free] = lu.solve((f - model.internal_force(hat_sig))[free])
        strains = model.strains(u)
        stresses = hat_sig + e_mod * model.strains(eta)
        return u, strains, stresses

    return _fixed_point(model, views, init_assignment, update, tol, max_iter,
                        "classical data-driven solver")


def solve_load_program(model: FemModel, view, load_schedule, *,
                       tol: float | None = None, max_iter: int = 50,
                       classical: bool = False) -> list[DDSolution]:
    """Run a load schedule with a fixed dataset view (elastic problems).

    The converged assignment of each step initializes the next one.
    """
    solve = classical_dd_solve if classical else dd_solve_step
    solutions: list[DDSolution] = []
    assignment = None
    for f in load_schedule:
        sol = solve(model, view, assignment, f=f, tol=tol, max_iter=max_iter)
        solutions.append(sol)
        assignment = sol.assignment
    return solutions

"""Reference constitutive models and reference FEM solutions.

Two material models drive dataset synthesis and provide the reference
solutions that benchmark errors are measured against:

* a nonlinear elastic law with an arctan-saturating volumetric term,
* small-strain J2 plasticity with linear isotropic hardening, solved by
  a radial return map with the consistent algorithmic tangent.

Both are pure functions of explicit inputs and vectorize over material
points.  The Newton solvers here are conventional equilibrium solvers
used only to produce reference states and exact-data test sets; the
data-driven solvers live in :mod:`ddmech.solver`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ddmech import tensors
from ddmech.data import ELASTIC, INELASTIC, LabeledDataSet
from ddmech.fem import FemModel, NonConvergenceError, assemble_stiffness, solve_constrained
from ddmech.tensors import IDENTITY, N_COMP, deviator, von_mises_stress


@dataclass(frozen=True)
class LinearElasticModel:
    """Isotropic linear elasticity, mostly for exact-data tests."""

    E: float
    nu: float

    @property
    def stiffness(self) -> np.ndarray:
        return tensors.isotropic_elasticity_lame(self.E, self.nu)

    def stress(self, eps: np.ndarray) -> np.ndarray:
        return np.asarray(eps) @ self.stiffness.T

    def tangent(self, eps: np.ndarray) -> np.ndarray:
        eps = np.asarray(eps)
        return np.broadcast_to(self.stiffness, eps.shape[:-1] + (N_COMP, N_COMP)).copy()


@dataclass(frozen=True)
class NonlinearElasticParams:
    """Elastic law ``sig = lam*f(tr eps)*I + mu*eps + C:eps``.

    ``f(x) = c1 * arctan(c2 * x)`` saturates the volumetric response;
    ``C`` is the isotropic stiffness built from (E, nu).
    """

    E: float
    nu: float
    c1: float
    c2: float

    def __post_init__(self):
        if self.E <= 0.0 or self.c2 <= 0.0:
            raise ValueError("require E > 0 and c2 > 0")

    def stress(self, eps: np.ndarray) -> np.ndarray:
        return nl_stress(eps, self)

    def tangent(self, eps: np.ndarray) -> np.ndarray:
        return nl_tangent(eps, self)


def nl_stress(eps: np.ndarray, p: NonlinearElasticParams) -> np.ndarray:
    """Nonlinear elastic stress; broadcasts over leading axes of eps."""
    eps = np.asarray(eps, dtype=float)
    lam, mu = tensors.lame_constants(p.E, p.nu)
    c = tensors.isotropic_elasticity_lame(p.E, p.nu)
    f_vol = p.c1 * np.arctan(p.c2 * tensors.trace(eps))
    return lam * f_vol[..., None] * IDENTITY + mu * eps + eps @ c.T


def nl_tangent(eps: np.ndarray, p: NonlinearElasticParams) -> np.ndarray:
    """Analytic stiffness d(sig)/d(eps) of :func:`nl_stress`."""
    eps = np.asarray(eps, dtype=float)
    lam, mu = tensors.lame_constants(p.E, p.nu)
    c = tensors.isotropic_elasticity_lame(p.E, p.nu)
    df = p.c1 * p.c2 / (1.0 + (p.c2 * tensors.trace(eps)) ** 2)
    ii = np.outer(IDENTITY, IDENTITY)
    return lam * df[..., None, None] * ii + mu * np.eye(N_COMP) + c


# ---------------------------------------------------------------------------
# J2 plasticity with linear isotropic hardening
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class J2Params:
    """Elastic constants plus hardening modulus and initial yield stress."""

    E: float
    nu: float
    H: float
    sigma_y0: float

    def __post_init__(self):
        if self.H < 0.0 or self.sigma_y0 <= 0.0:
            raise ValueError("require H >= 0 and sigma_y0 > 0")

    @property
    def elastic_tangent(self) -> np.ndarray:
        return tensors.isotropic_elasticity_bulk_shear(self.E, self.nu)


@dataclass(frozen=True)
class PlasticState:
    """History at one material point: plastic strain and yield stress."""

    plastic_strain: np.ndarray   # (4,) Mandel, deviatoric
    sigma_y: float
    accumulated: float = 0.0

    @classmethod
    def initial(cls, p: J2Params) -> "PlasticState":
        return cls(np.zeros(N_COMP), p.sigma_y0, 0.0)


def j2_return_map_batch(eps: np.ndarray, plastic_strain: np.ndarray,
                        sigma_y: np.ndarray, accumulated: np.ndarray,
                        p: J2Params):
    """Radial return for a batch of points.

    Returns ``(sig, ct, plastic_strain', sigma_y', accumulated')``.
    The trial stress is elastic from the stored plastic strain; if its
    comparison stress exceeds the current yield stress the plastic
    multiplier ``(q_trial - sigma_y) / (3G + H)`` restores consistency,
    and ``ct`` is the algorithmic tangent of the full update.
    """
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    plastic_strain = np.atleast_2d(plastic_strain)
    sigma_y = np.atleast_1d(sigma_y).astype(float)
    accumulated = np.atleast_1d(accumulated).astype(float)
    kappa, g = tensors.bulk_shear_moduli(p.E, p.nu)
    c_el = p.elastic_tangent

    sig_tr = (eps - plastic_strain) @ c_el.T
    s_tr = deviator(sig_tr)
    q_tr = von_mises_stress(sig_tr)
    plastic = q_tr > sigma_y

    sig = sig_tr.copy()
    ct = np.broadcast_to(c_el, eps.shape[:-1] + (N_COMP, N_COMP)).copy()
    eps_p = plastic_strain.copy()
    sig_y_new = sigma_y.copy()
    acc = accumulated.copy()

    if np.any(plastic):
        dgamma = (q_tr[plastic] - sigma_y[plastic]) / (3.0 * g + p.H)
        s_norm = np.linalg.norm(s_tr[plastic], axis=-1)
        n_dir = s_tr[plastic] / s_norm[:, None]
        deps_p = np.sqrt(1.5) * dgamma[:, None] * n_dir
        sig[plastic] = sig_tr[plastic] - 2.0 * g * deps_p
        eps_p[plastic] = plastic_strain[plastic] + deps_p
        sig_y_new[plastic] = sigma_y[plastic] + p.H * dgamma
        acc[plastic] = accumulated[plastic] + dgamma

        theta = 1.0 - 3.0 * g * dgamma / q_tr[plastic]
        beta = 6.0 * g * g * (dgamma / q_tr[plastic] - 1.0 / (3.0 * g + p.H))
        ii = np.outer(IDENTITY, IDENTITY)
        i_dev = np.eye(N_COMP) - ii / 3.0
        nn = np.einsum("pi,pj->pij", n_dir, n_dir)
        ct[plastic] = (kappa * ii
                       + 2.0 * g * theta[:, None, None] * i_dev
                       + beta[:, None, None] * nn)
    return sig, ct, eps_p, sig_y_new, acc


def j2_return_map(eps_total: np.ndarray, state: PlasticState, p: J2Params):
    """Single-point radial return: ``(sig, ct, new_state)``."""
    sig, ct, eps_p, sig_y, acc = j2_return_map_batch(
        eps_total, state.plastic_strain, np.array([state.sigma_y]),
        np.array([state.accumulated]), p)
    new_state = PlasticState(eps_p[0], float(sig_y[0]), float(acc[0]))
    return sig[0], ct[0], new_state


# ---------------------------------------------------------------------------
# Reference Newton solvers
# ---------------------------------------------------------------------------

@dataclass
class ReferenceStep:
    """Converged reference state after one load increment."""

    displacements: np.ndarray
    strains: np.ndarray          # (m, 4)
    stresses: np.ndarray         # (m, 4)
    iterations: int
    residual: float


def _newton(model: FemModel, f: np.ndarray, u0: np.ndarray, evaluate, *,
            tol: float, max_iter: int) -> tuple[np.ndarray, int, float]:
    """Newton iteration on the equilibrium residual; returns (u, iters, res)."""
    free = model.free_dofs
    f_ref = max(np.linalg.norm(f[free]), 1.0)
    u = u0.copy()
    u[model.dirichlet_dofs] = model.dirichlet_values
    for it in range(max_iter + 1):
        sig, ct = evaluate(model.strains(u))
        residual = model.internal_force(sig) - f
        res = np.linalg.norm(residual[free])
        if res <= tol * f_ref:
            return u, it, res
        k = assemble_stiffness(model, ct)
        du = solve_constrained(model, k, -residual)
        # prescribed values already satisfied, keep the correction homogeneous
        du[model.dirichlet_dofs] = 0.0
        u = u + du
    raise NonConvergenceError(
        f"Newton failed to reach {tol:.1e} relative residual in {max_iter} "
        f"iterations (last residual {res:.3e})")


def reference_solve_nonlinear(model: FemModel, params: NonlinearElasticParams,
                              load_schedule, *, tol: float = 1e-8,
                              max_iter: int = 30) -> list[ReferenceStep]:
    """Equilibrium path of the nonlinear elastic law, one entry per load."""
    steps: list[ReferenceStep] = []
    u = np.zeros(model.n_dofs)
    for f in load_schedule:
        u, iters, res = _newton(
            model, f, u, lambda e: (nl_stress(e, params), nl_tangent(e, params)),
            tol=tol, max_iter=max_iter)
        steps.append(ReferenceStep(u.copy(), model.strains(u),
                                   nl_stress(model.strains(u), params), iters, res))
    return steps


def reference_solve_plastic(model: FemModel, params: J2Params, load_schedule, *,
                            tol: float = 1e-8, max_iter: int = 40) -> list[ReferenceStep]:
    """Incremental J2 solution; plastic history carried between steps."""
    m = model.n_points
    eps_p = np.zeros((m, N_COMP))
    sig_y = np.full(m, params.sigma_y0)
    acc = np.zeros(m)
    u = np.zeros(model.n_dofs)
    steps: list[ReferenceStep] = []
    for f in load_schedule:
        def evaluate(eps):
            sig, ct, *_ = j2_return_map_batch(eps, eps_p, sig_y, acc, params)
            return sig, ct

        u, iters, res = _newton(model, f, u, evaluate, tol=tol, max_iter=max_iter)
        eps = model.strains(u)
        sig, _, eps_p, sig_y, acc = j2_return_map_batch(eps, eps_p, sig_y, acc, params)
        steps.append(ReferenceStep(u.copy(), eps, sig, iters, res))
    return steps


# ---------------------------------------------------------------------------
# Virtual tests: strain-path driven dataset synthesis
# ---------------------------------------------------------------------------

def virtual_test_sample(params: J2Params, n_paths: int, steps_per_path: int,
                        seed=None, *, max_strain: float = 0.01,
                        segments: int = 4) -> LabeledDataSet:
    """Drive random strain paths through the J2 model and record every step.

    Each path walks the three in-plane strain components through
    ``segments`` piecewise-linear legs toward uniformly drawn targets in
    the ``max_strain`` cube, producing loading reversals and elastic
    unloading branches.  Every increment is recorded as
    (strain, stress, algorithmic tangent) labeled ``inelastic`` when the
    step yielded and ``elastic`` otherwise, so unloading states carry
    the elastic stiffness.  Total record count is
    ``n_paths * steps_per_path``.
    """
    if n_paths < 1 or steps_per_path < 1:
        raise ValueError("n_paths and steps_per_path must be >= 1")
    segments = min(segments, steps_per_path)
    n_total = n_paths * steps_per_path
    strains = np.zeros((n_total, N_COMP))
    stresses = np.zeros((n_total, N_COMP))
    tangents = np.zeros((n_total, N_COMP, N_COMP))
    labels = np.empty(n_total, dtype="U9")

    out = 0
    for child in np.random.SeedSequence(seed).spawn(n_paths):
        rng = np.random.default_rng(child)
        eps_p = np.zeros((1, N_COMP))
        sig_y = np.array([params.sigma_y0])
        acc = np.array([0.0])
        eps = np.zeros(N_COMP)

        counts = np.full(segments, steps_per_path // segments)
        counts[:steps_per_path % segments] += 1
        for count in counts:
            target_plane = rng.uniform(-max_strain, max_strain, 3)
            target = np.array([target_plane[0], target_plane[1], 0.0,
                               np.sqrt(2.0) * target_plane[2]])
            deps = (target - eps) / count
            for _ in range(count):
                eps = eps + deps
                acc_prev = acc[0]
                sig, ct, eps_p, sig_y, acc = j2_return_map_batch(
                    eps, eps_p, sig_y, acc, params)
                strains[out] = eps
                stresses[out] = sig[0]
                tangents[out] = ct[0]
                labels[out] = INELASTIC if acc[0] > acc_prev else ELASTIC
                out += 1
    return LabeledDataSet(strains, stresses, tangents, labels, params.E)

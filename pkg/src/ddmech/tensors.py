"""Symmetric-tensor algebra for plane strain in Mandel component form.

Second-order symmetric tensors are stored as length-4 vectors
``[xx, yy, zz, sqrt(2)*xy]`` (Mandel convention).  With the sqrt(2)
scaling on the shear entry, the Euclidean norm of the vector equals the
Frobenius norm of the underlying 3x3 tensor, and fourth-order tangents
become plain symmetric 4x4 matrices whose matrix-vector products are the
tensor contractions.  All functions broadcast over leading axes, so a
``(m, 4)`` array of material-point states is handled in one call.

User-facing I/O (dataset files) uses engineering Voigt components
``[xx, yy, zz, gamma_xy]`` for strain (``gamma_xy = 2 eps_xy``) and
``[xx, yy, zz, sigma_xy]`` for stress; the conversion helpers here
round-trip exactly.
"""

from __future__ import annotations

import numpy as np

#: Number of tensor components carried per material point.
N_COMP = 4

#: Second-order identity tensor in Mandel components.
IDENTITY = np.array([1.0, 1.0, 1.0, 0.0])

_SQRT2 = np.sqrt(2.0)


def lame_constants(E: float, nu: float) -> tuple[float, float]:
    """First Lame constant and shear modulus from (E, nu)."""
    _check_elastic_params(E, nu)
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


def bulk_shear_moduli(E: float, nu: float) -> tuple[float, float]:
    """Bulk and shear modulus from (E, nu)."""
    _check_elastic_params(E, nu)
    kappa = E / (3.0 * (1.0 - 2.0 * nu))
    G = E / (2.0 * (1.0 + nu))
    return kappa, G


def _check_elastic_params(E: float, nu: float) -> None:
    if E <= 0.0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {nu}")


def isotropic_elasticity_lame(E: float, nu: float) -> np.ndarray:
    """Isotropic stiffness ``lam I(x)I + 2 mu I_sym`` as a Mandel 4x4 matrix.

    Raises ``ValueError`` for the incompressible limit ``nu = 0.5`` (the
    first Lame constant diverges) and for parameters outside the stable
    isotropic range.
    """
    lam, mu = lame_constants(E, nu)
    return lam * np.outer(IDENTITY, IDENTITY) + 2.0 * mu * np.eye(N_COMP)


def isotropic_elasticity_bulk_shear(E: float, nu: float) -> np.ndarray:
    """Isotropic stiffness ``(kappa - 2G/3) I(x)I + 2G I_sym`` in Mandel form.

    Algebraically identical to :func:`isotropic_elasticity_lame` since
    ``kappa - 2G/3 = lam``; provided so either parameterization can be
    used directly.
    """
    kappa, G = bulk_shear_moduli(E, nu)
    return (kappa - 2.0 * G / 3.0) * np.outer(IDENTITY, IDENTITY) + 2.0 * G * np.eye(N_COMP)


def trace(t: np.ndarray) -> np.ndarray:
    """Trace of symmetric tensors given as (..., 4) Mandel components."""
    t = np.asarray(t)
    return t[..., 0] + t[..., 1] + t[..., 2]


def deviator(t: np.ndarray) -> np.ndarray:
    """Deviatoric part: subtracts ``tr(t)/3`` from the normal components."""
    t = np.asarray(t, dtype=float)
    out = t.copy()
    out[..., :3] -= (trace(t) / 3.0)[..., None]
    return out


def von_mises_stress(sig: np.ndarray) -> np.ndarray:
    """Von Mises comparison stress ``sqrt(3/2) * ||dev sig||``.

    The Mandel Euclidean norm of the deviator equals its Frobenius norm,
    so no shear special-casing is needed.
    """
    dev = deviator(sig)
    return np.sqrt(1.5) * np.linalg.norm(dev, axis=-1)


# ---------------------------------------------------------------------------
# Mandel <-> engineering Voigt and <-> 3x3 tensor conversions
# ---------------------------------------------------------------------------

def strain_voigt_to_mandel(v: np.ndarray) -> np.ndarray:
    """[eps_xx, eps_yy, eps_zz, gamma_xy] -> Mandel components."""
    v = np.asarray(v, dtype=float)
    m = v.copy()
    m[..., 3] = v[..., 3] / _SQRT2
    return m


def strain_mandel_to_voigt(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    v = m.copy()
    v[..., 3] = m[..., 3] * _SQRT2
    return v


def stress_voigt_to_mandel(v: np.ndarray) -> np.ndarray:
    """[sig_xx, sig_yy, sig_zz, sig_xy] -> Mandel components."""
    v = np.asarray(v, dtype=float)
    m = v.copy()
    m[..., 3] = v[..., 3] * _SQRT2
    return m


def stress_mandel_to_voigt(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    v = m.copy()
    v[..., 3] = m[..., 3] / _SQRT2
    return v


def tangent_voigt_to_mandel(c: np.ndarray) -> np.ndarray:
    """Voigt stiffness d(sig_voigt)/d(eps_voigt) -> Mandel 4x4."""
    c = np.asarray(c, dtype=float)
    m = c.copy()
    m[..., 3, :] *= _SQRT2
    m[..., :, 3] *= _SQRT2
    return m


def tangent_mandel_to_voigt(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    v = c.copy()
    v[..., 3, :] /= _SQRT2
    v[..., :, 3] /= _SQRT2
    return v


def mandel_to_tensor(m: np.ndarray) -> np.ndarray:
    """Mandel components -> full symmetric 3x3 tensor (leading axes kept)."""
    m = np.asarray(m, dtype=float)
    out = np.zeros(m.shape[:-1] + (3, 3))
    out[..., 0, 0] = m[..., 0]
    out[..., 1, 1] = m[..., 1]
    out[..., 2, 2] = m[..., 2]
    out[..., 0, 1] = out[..., 1, 0] = m[..., 3] / _SQRT2
    return out


def tensor_to_mandel(t: np.ndarray) -> np.ndarray:
    """Symmetric 3x3 tensor (zero out-of-plane shear) -> Mandel components."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape[:-2] + (N_COMP,))
    out[..., 0] = t[..., 0, 0]
    out[..., 1] = t[..., 1, 1]
    out[..., 2] = t[..., 2, 2]
    out[..., 3] = _SQRT2 * 0.5 * (t[..., 0, 1] + t[..., 1, 0])
    return out

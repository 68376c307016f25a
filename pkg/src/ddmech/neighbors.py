"""Nearest-neighbor search in strain-stress phase space.

The local distance between two states ``z = (eps, sig)`` is the
stiffness-weighted quadratic form

    d(z, z') = 1/2 E ||eps - eps'||^2 + 1/2 E^-1 ||sig - sig'||^2

with Mandel Euclidean norms and a representative modulus ``E``.  Scaling
strain coordinates by sqrt(E/2) and stress coordinates by sqrt(1/(2E))
turns this into the squared Euclidean distance of an 8-vector, so a k-d
tree over the scaled embedding searches the exact metric.  A separate
brute-force routine provides the oracle the accelerated index is tested
against; ties are broken toward the lowest global index in both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ddmech.data import DataSubset


@dataclass(frozen=True)
class PhaseMetric:
    """Scaling modulus weighing strain against stress distances."""

    modulus: float

    def __post_init__(self):
        if not self.modulus > 0.0:
            raise ValueError(f"metric modulus must be positive, got {self.modulus}")


def local_distance(z, z_hat, metric: PhaseMetric) -> float:
    """Phase-space distance between two states with strain/stress attributes."""
    de = np.asarray(z.strain) - np.asarray(z_hat.strain)
    ds = np.asarray(z.stress) - np.asarray(z_hat.stress)
    e = metric.modulus
    return float(0.5 * e * de @ de + 0.5 / e * ds @ ds)


def local_distances(strains, stresses, hat_strains, hat_stresses,
                    metric: PhaseMetric) -> np.ndarray:
    """Row-wise phase-space distances between two batches of states."""
    de = np.asarray(strains) - np.asarray(hat_strains)
    ds = np.asarray(stresses) - np.asarray(hat_stresses)
    e = metric.modulus
    return (0.5 * e * np.einsum("...i,...i->...", de, de)
            + 0.5 / e * np.einsum("...i,...i->...", ds, ds))


def global_distance(strains, stresses, hat_strains, hat_stresses, model,
                    metric: PhaseMetric) -> float:
    """Quadrature-weighted sum of local distances over all material points."""
    strains = np.asarray(strains)
    if strains.shape[0] != model.n_points:
        raise ValueError(
            f"state count {strains.shape[0]} != material points {model.n_points}")
    d = local_distances(strains, stresses, hat_strains, hat_stresses, metric)
    return float(model.w_flat @ d)


def embed(strains, stresses, metric: PhaseMetric) -> np.ndarray:
    """Scaled (..., 8) phase-space coordinates; squared Euclidean distance
    between embedded states equals :func:`local_distances`."""
    e = metric.modulus
    return np.concatenate([np.sqrt(0.5 * e) * np.asarray(strains, dtype=float),
                           np.sqrt(0.5 / e) * np.asarray(stresses, dtype=float)],
                          axis=-1)


def brute_force_nearest(subset: DataSubset, strains, stresses,
                        metric: PhaseMetric) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive nearest-point search; the oracle for the k-d tree index.

    Returns global dataset indices and distances for a batch of query
    states; ``np.argmin`` picks the first minimum, which is the lowest
    global index because subset indices are ascending.
    """
    if len(subset) == 0:
        raise ValueError("nearest-neighbor query on an empty subset")
    pts = embed(subset.strains, subset.stresses, metric)
    q = np.atleast_2d(embed(strains, stresses, metric))
    idx = np.empty(q.shape[0], dtype=int)
    dist = np.empty(q.shape[0])
    for row in range(q.shape[0]):
        d = np.einsum("nj,nj->n", pts - q[row], pts - q[row])
        k = int(np.argmin(d))
        idx[row], dist[row] = subset.indices[k], d[k]
    return idx, dist


class NNIndex:
    """k-d tree nearest-neighbor index over one dataset subset.

    Immutable after construction; queries return global dataset indices.
    Near-ties (second neighbor within a 1e-9 relative shell) are
    re-ranked with the brute-force formula so results match
    :func:`brute_force_nearest` exactly, including tie-breaks.
    """

    _TIE_REL = 1e-9

    def __init__(self, subset: DataSubset, metric: PhaseMetric):
        from scipy.spatial import cKDTree

        if len(subset) == 0:
            raise ValueError("cannot index an empty subset")
        self.subset = subset
        self.metric = metric
        self._points = embed(subset.strains, subset.stresses, metric)
        self._tree = cKDTree(self._points)

    @property
    def dataset(self):
        return self.subset.dataset

    def nearest_batch(self, strains, stresses) -> tuple[np.ndarray, np.ndarray]:
        """Nearest dataset point per query row: (global indices, distances)."""
        q = np.atleast_2d(embed(strains, stresses, metric=self.metric))
        k = min(2, len(self.subset))
        d_euc, loc = self._tree.query(q, k=k)
        if k == 1:
            d_euc = d_euc[:, None]
            loc = loc[:, None]
        idx = self.subset.indices[loc[:, 0]]
        dist = d_euc[:, 0] ** 2
        # resolve queries whose second neighbor sits inside the tie shell
        ambiguous = np.flatnonzero(
            (k > 1) & (d_euc[:, 1] <= d_euc[:, 0] * (1.0 + self._TIE_REL)))
        for row in ambiguous:
            radius = d_euc[row, 0] * (1.0 + self._TIE_REL)
            cand = np.array(sorted(self._tree.query_ball_point(q[row], radius)))
            delta = self._points[cand] - q[row]
            d = np.einsum("nj,nj->n", delta, delta)
            best = int(np.argmin(d))
            idx[row] = self.subset.indices[cand[best]]
            dist[row] = d[best]
        return idx, dist

    def nearest(self, strain, stress) -> tuple[int, float]:
        """Nearest dataset point to a single state; lowest index wins ties."""
        idx, dist = self.nearest_batch(np.atleast_2d(strain), np.atleast_2d(stress))
        return int(idx[0]), float(dist[0])

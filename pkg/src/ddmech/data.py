"""Datasets of (strain, stress, tangent stiffness) material samples.

A :class:`LabeledDataSet` is a column-oriented container: Mandel strain
and stress arrays of shape (n, 4), tangent matrices (n, 4, 4), and a
per-point behaviour label (``elastic`` / ``inelastic``).  Subset views
select one label without copying the parent arrays.

Datasets are written to a plain-text format with engineering-Voigt
columns (one record per line, 17 significant digits)::

    ddmech-dataset v1 metric_modulus=<value>
    eps_xx eps_yy eps_zz gam_xy sig_xx sig_yy sig_zz sig_xy C11 ... C44 label

The 16 tangent entries are the row-major Voigt stiffness
``d sigma_voigt / d eps_voigt``.  A ``.gz`` suffix selects gzip
compression.  The decimal encoding is lossless; the sqrt(2) rescaling of
the shear entries between file and memory can differ by one ulp.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass

import numpy as np

from ddmech import tensors

ELASTIC = "elastic"
INELASTIC = "inelastic"
LABELS = (ELASTIC, INELASTIC)


class DatasetFormatError(ValueError):
    """Malformed dataset file; message carries the offending line number."""


@dataclass(frozen=True)
class DataPoint:
    """One material sample: strain, stress, tangent stiffness, label."""

    strain: np.ndarray    # (4,) Mandel
    stress: np.ndarray    # (4,) Mandel
    tangent: np.ndarray   # (4, 4) Mandel
    label: str = ELASTIC


class LabeledDataSet:
    """Immutable collection of material samples with a metric modulus.

    ``metric_modulus`` is the representative stiffness used to weigh
    strain against stress in phase-space distances.
    """

    def __init__(self, strains, stresses, tangents, labels, metric_modulus: float):
        self.strains = np.ascontiguousarray(strains, dtype=float)
        self.stresses = np.ascontiguousarray(stresses, dtype=float)
        self.tangents = np.ascontiguousarray(tangents, dtype=float)
        self.labels = np.asarray(labels, dtype="U9")
        n = self.strains.shape[0]
        if self.strains.shape != (n, 4) or self.stresses.shape != (n, 4):
            raise ValueError("strains and stresses must have shape (n, 4)")
        if self.tangents.shape != (n, 4, 4):
            raise ValueError("tangents must have shape (n, 4, 4)")
        if self.labels.shape != (n,):
            raise ValueError("labels must have shape (n,)")
        bad = ~np.isin(self.labels, LABELS)
        if bad.any():
            raise ValueError(f"unknown label {self.labels[bad][0]!r}")
        if not metric_modulus > 0.0:
            raise ValueError(f"metric modulus must be positive, got {metric_modulus}")
        self.metric_modulus = float(metric_modulus)
        for arr in (self.strains, self.stresses, self.tangents, self.labels):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.strains.shape[0]

    def __getitem__(self, i: int) -> DataPoint:
        return DataPoint(self.strains[i], self.stresses[i], self.tangents[i],
                         str(self.labels[i]))

    def view(self, label: str | None = None) -> "DataSubset":
        """Subset of points carrying ``label`` (all points when None)."""
        if label is None:
            idx = np.arange(len(self))
        elif label in LABELS:
            idx = np.flatnonzero(self.labels == label)
        else:
            raise ValueError(f"unknown label {label!r}")
        return DataSubset(self, idx, label)

    def with_metric_modulus(self, metric_modulus: float) -> "LabeledDataSet":
        return LabeledDataSet(self.strains, self.stresses, self.tangents,
                              self.labels, metric_modulus)


@dataclass(frozen=True)
class DataSubset:
    """View of one label class; ``indices`` are ascending global indices."""

    dataset: LabeledDataSet
    indices: np.ndarray
    label: str | None = None

    def __len__(self) -> int:
        return self.indices.size

    @property
    def strains(self) -> np.ndarray:
        return self.dataset.strains[self.indices]

    @property
    def stresses(self) -> np.ndarray:
        return self.dataset.stresses[self.indices]


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

_SCHEMES = ("randomNormal", "randomUniform", "normalGrid", "uniformGrid")


def _in_plane_grid(axis_values: np.ndarray) -> np.ndarray:
    xx, yy, xy = np.meshgrid(axis_values, axis_values, axis_values, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel(), xy.ravel()])


def sample_dataset(model, scheme: str, size: int, *, std: float = 0.01,
                   half_width: float = 0.02, metric_modulus: float | None = None,
                   seed=None) -> LabeledDataSet:
    """Sample an elastic dataset from a constitutive model.

    The model must provide batched ``stress`` and ``tangent`` callables
    over Mandel strains.  Sampling acts on the three in-plane tensor
    strain components (xx, yy, xy); the out-of-plane strain stays zero.

    scheme
        ``randomNormal``  iid zero-mean normal, standard deviation ``std``;
        ``randomUniform`` iid uniform on [-half_width, half_width];
        ``normalGrid``    tensor grid of the ``size`` mid-quantiles of the
        normal law; ``uniformGrid`` tensor grid of ``size`` equispaced
        values spanning [-half_width, half_width].
    size
        Total count for the random schemes, per-axis count for grids.
    """
    from scipy.stats import norm

    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    rng = np.random.default_rng(seed)
    if scheme == "randomNormal":
        plane = rng.normal(0.0, std, size=(size, 3))
    elif scheme == "randomUniform":
        plane = rng.uniform(-half_width, half_width, size=(size, 3))
    elif scheme == "normalGrid":
        axis = norm.ppf((np.arange(size) + 0.5) / size, scale=std)
        plane = _in_plane_grid(axis)
    elif scheme == "uniformGrid":
        axis = np.linspace(-half_width, half_width, size) if size > 1 else np.zeros(1)
        plane = _in_plane_grid(axis)
    else:
        raise ValueError(f"unknown sampling scheme {scheme!r}; expected one of {_SCHEMES}")

    strains = np.zeros((plane.shape[0], 4))
    strains[:, 0] = plane[:, 0]
    strains[:, 1] = plane[:, 1]
    strains[:, 3] = np.sqrt(2.0) * plane[:, 2]

    stresses = model.stress(strains)
    tangents = model.tangent(strains)
    labels = np.full(plane.shape[0], ELASTIC)
    modulus = model.E if metric_modulus is None else metric_modulus
    return LabeledDataSet(strains, stresses, tangents, labels, modulus)


def add_noise(ds: LabeledDataSet, level: float, seed=None) -> LabeledDataSet:
    """Perturb a dataset with zero-mean uniform noise.

    Per-component amplitudes are ``level`` times the largest absolute
    strain / stress component of the set; tangent entries are perturbed
    by ``level`` times the largest absolute tangent entry and then
    re-symmetrized.  ``level = 0`` returns an identical copy.
    """
    if level < 0.0:
        raise ValueError(f"noise level must be >= 0, got {level}")
    if len(ds) == 0:
        raise ValueError("cannot noise an empty dataset")
    if level == 0.0:
        return LabeledDataSet(ds.strains, ds.stresses, ds.tangents, ds.labels,
                              ds.metric_modulus)
    rng = np.random.default_rng(seed)
    a_eps = level * np.abs(ds.strains).max()
    a_sig = level * np.abs(ds.stresses).max()
    a_tan = level * np.abs(ds.tangents).max()
    strains = ds.strains + rng.uniform(-a_eps, a_eps, ds.strains.shape)
    stresses = ds.stresses + rng.uniform(-a_sig, a_sig, ds.stresses.shape)
    tangents = ds.tangents + rng.uniform(-a_tan, a_tan, ds.tangents.shape)
    tangents = 0.5 * (tangents + np.swapaxes(tangents, -1, -2))
    return LabeledDataSet(strains, stresses, tangents, ds.labels, ds.metric_modulus)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

_HEADER_PREFIX = "ddmech-dataset v1"
_N_COLUMNS = 4 + 4 + 16 + 1


def _open(path: str, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def save_dataset(ds: LabeledDataSet, path: str) -> None:
    """Write a dataset in the engineering-Voigt text format."""
    eps = tensors.strain_mandel_to_voigt(ds.strains)
    sig = tensors.stress_mandel_to_voigt(ds.stresses)
    tan = tensors.tangent_mandel_to_voigt(ds.tangents).reshape(len(ds), 16)
    with _open(path, "w") as fh:
        fh.write(f"{_HEADER_PREFIX} metric_modulus={ds.metric_modulus:.17g}\n")
        for i in range(len(ds)):
            cols = np.concatenate([eps[i], sig[i], tan[i]])
            fh.write(" ".join(f"{c:.17g}" for c in cols) + f" {ds.labels[i]}\n")


def load_dataset(path: str) -> LabeledDataSet:
    """Read a dataset written by :func:`save_dataset`."""
    with _open(path, "r") as fh:
        header = fh.readline()
        if not header.startswith(_HEADER_PREFIX):
            raise DatasetFormatError(f"{path}:1: missing '{_HEADER_PREFIX}' header")
        try:
            modulus = float(header.strip().rsplit("metric_modulus=", 1)[1])
        except (IndexError, ValueError):
            raise DatasetFormatError(f"{path}:1: header lacks metric_modulus") from None

        eps, sig, tan, labels = [], [], [], []
        for lineno, line in enumerate(fh, start=2):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != _N_COLUMNS:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {_N_COLUMNS} columns, got {len(parts)}")
            if parts[-1] not in LABELS:
                raise DatasetFormatError(
                    f"{path}:{lineno}: label must be one of {LABELS}, got {parts[-1]!r}")
            try:
                values = [float(p) for p in parts[:-1]]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
            eps.append(values[0:4])
            sig.append(values[4:8])
            tan.append(values[8:24])
            labels.append(parts[-1])

    if not labels:
        raise DatasetFormatError(f"{path}: no records")
    strains = tensors.strain_voigt_to_mandel(np.array(eps))
    stresses = tensors.stress_voigt_to_mandel(np.array(sig))
    tangents = tensors.tangent_voigt_to_mandel(np.array(tan).reshape(-1, 4, 4))
    return LabeledDataSet(strains, stresses, tangents, np.array(labels), modulus)

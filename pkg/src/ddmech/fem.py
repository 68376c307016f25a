"""2D plane-strain finite elements on 6-node triangles.

Provides structured mesh generators for the two benchmark geometries
(quarter annulus under internal pressure, rectangular plate with a
centered circular hole), a plain-text mesh format for external meshes,
and the quadrature/B-matrix infrastructure used by every solver in the
package.  Strain rows follow the Mandel convention of
:mod:`ddmech.tensors`: ``[xx, yy, zz(=0), sqrt(2)*xy]``.

Element convention: corner nodes 0-2 counterclockwise, mid-side node
``3 + k`` on the edge from corner ``k`` to corner ``(k + 1) % 3``.
Boundary edges are addressed as ``(element, local_edge)`` pairs grouped
under string tags.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ddmech.tensors import N_COMP

# 3-point Gauss rule on the reference triangle (degree-2 exact).
GAUSS_POINTS = np.array([[1.0 / 6.0, 1.0 / 6.0],
                         [2.0 / 3.0, 1.0 / 6.0],
                         [1.0 / 6.0, 2.0 / 3.0]])
GAUSS_WEIGHTS = np.array([1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0])

N_GAUSS = 3
NODES_PER_ELEM = 6
DOFS_PER_ELEM = 12

# Local edge k runs from corner k to corner (k+1)%3 with mid node 3+k.
EDGE_NODES = ((0, 1, 3), (1, 2, 4), (2, 0, 5))


class MeshFormatError(ValueError):
    """Malformed mesh file; carries the offending line number."""


class MeshQualityError(RuntimeError):
    """Mesh has a degenerate or inverted element."""


class SingularSystemError(RuntimeError):
    """Constrained stiffness matrix could not be factorized."""


class NonConvergenceError(RuntimeError):
    """An equilibrium iteration exceeded its iteration budget.

    The partially converged result, when available, is attached as the
    ``last`` attribute.
    """

    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last


@dataclass
class Mesh:
    """Unstructured 6-node triangle mesh with tagged boundary edges."""

    nodes: np.ndarray                      # (n_nodes, 2)
    elements: np.ndarray                   # (n_elems, 6) int
    edge_groups: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def edge_node_ids(self, tag: str) -> np.ndarray:
        """Sorted unique node ids lying on the edges of a tag group."""
        if tag not in self.edge_groups:
            raise KeyError(f"unknown edge tag {tag!r}; have {sorted(self.edge_groups)}")
        ids: set[int] = set()
        for elem, edge in self.edge_groups[tag]:
            for local in EDGE_NODES[edge]:
                ids.add(int(self.elements[elem, local]))
        return np.array(sorted(ids), dtype=int)


def shape_tri6(xi: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic triangle shape functions and reference gradients.

    Returns ``(N, dN)`` with ``N`` shape (6,) and ``dN`` shape (6, 2)
    holding ``(dN/dxi, dN/deta)`` rows.
    """
    l1 = 1.0 - xi - eta
    l2 = xi
    l3 = eta
    n = np.array([
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        l3 * (2.0 * l3 - 1.0),
        4.0 * l1 * l2,
        4.0 * l2 * l3,
        4.0 * l3 * l1,
    ])
    dn = np.array([
        [1.0 - 4.0 * l1, 1.0 - 4.0 * l1],
        [4.0 * l2 - 1.0, 0.0],
        [0.0, 4.0 * l3 - 1.0],
        [4.0 * (l1 - l2), -4.0 * l2],
        [4.0 * l3, 4.0 * l2],
        [-4.0 * l3, 4.0 * (l1 - l3)],
    ])
    return n, dn


# ---------------------------------------------------------------------------
# Structured block generation
# ---------------------------------------------------------------------------

class _MeshBuilder:
    """Accumulates mapped structured blocks, merging shared nodes."""

    def __init__(self, round_digits: int = 10):
        self._round = round_digits
        self._node_ids: dict[tuple[float, float], int] = {}
        self.nodes: list[tuple[float, float]] = []
        self.elements: list[list[int]] = []
        self.edge_groups: dict[str, list[tuple[int, int]]] = {}

    def _node(self, x: float, y: float) -> int:
        key = (round(x, self._round), round(y, self._round))
        nid = self._node_ids.get(key)
        if nid is None:
            nid = len(self.nodes)
            self._node_ids[key] = nid
            self.nodes.append((x, y))
        return nid

    def add_block(self, mapping, n_s: int, n_t: int,
                  side_tags: dict[str, str] | None = None) -> None:
        """Mesh the image of the unit square under ``mapping(s, t)``.

        ``n_s`` x ``n_t`` quad cells, each split into two tri6 elements.
        ``side_tags`` maps block sides ('s0', 's1', 't0', 't1') to edge
        tags; the mapping must be orientation preserving.
        """
        ns2, nt2 = 2 * n_s + 1, 2 * n_t + 1
        ids = np.empty((ns2, nt2), dtype=int)
        for i in range(ns2):
            for j in range(nt2):
                x, y = mapping(i / (2.0 * n_s), j / (2.0 * n_t))
                ids[i, j] = self._node(x, y)

        base = len(self.elements)
        for ci in range(n_s):
            for cj in range(n_t):
                i, j = 2 * ci, 2 * cj
                a, b = ids[i, j], ids[i + 2, j]
                c, d = ids[i + 2, j + 2], ids[i, j + 2]
                ab, bc = ids[i + 1, j], ids[i + 2, j + 1]
                ce = ids[i + 1, j + 1]
                cd, da = ids[i + 1, j + 2], ids[i, j + 1]
                self.elements.append([a, b, c, ab, bc, ce])
                self.elements.append([a, c, d, ce, cd, da])

        for side, tag in (side_tags or {}).items():
            group = self.edge_groups.setdefault(tag, [])
            if side == "t0":
                group += [(base + 2 * (ci * n_t), 0) for ci in range(n_s)]
            elif side == "t1":
                group += [(base + 2 * (ci * n_t + n_t - 1) + 1, 1) for ci in range(n_s)]
            elif side == "s0":
                group += [(base + 2 * cj + 1, 2) for cj in range(n_t)]
            elif side == "s1":
                group += [(base + 2 * ((n_s - 1) * n_t + cj), 1) for cj in range(n_t)]
            else:
                raise ValueError(f"unknown block side {side!r}")

    def build(self) -> Mesh:
        return Mesh(np.array(self.nodes, dtype=float),
                    np.array(self.elements, dtype=int),
                    self.edge_groups)


def generate_quarter_annulus(r1: float, r2: float, n_radial: int, n_circ: int) -> Mesh:
    """Structured quarter-annulus mesh between radii r1 < r2.

    Nodes sit on the polar grid, so circumferential edges are curved
    (isoparametric) and radial edges are straight.  Tagged edges:
    ``inner`` (r = r1), ``outer`` (r = r2), ``sym_y0`` (the y = 0
    symmetry edge), ``sym_x0`` (the x = 0 symmetry edge).
    """
    if not 0.0 < r1 < r2:
        raise ValueError(f"radii must satisfy 0 < r1 < r2, got r1={r1}, r2={r2}")
    if n_radial < 1 or n_circ < 1:
        raise ValueError("n_radial and n_circ must be >= 1")

    def mapping(s: float, t: float) -> tuple[float, float]:
        r = r1 + (r2 - r1) * s
        theta = 0.5 * np.pi * t
        return r * np.cos(theta), r * np.sin(theta)

    builder = _MeshBuilder()
    builder.add_block(mapping, n_radial, n_circ,
                      side_tags={"s0": "inner", "s1": "outer",
                                 "t0": "sym_y0", "t1": "sym_x0"})
    return builder.build()


def generate_plate_with_hole(length: float, height: float, radius: float,
                             refinement: int = 1) -> Mesh:
    """Rectangle with a centered circular hole, meshed by transfinite blocks.

    Four ring blocks blend the hole circle (nodes placed exactly on the
    circle) into a square frame of half-width ``height / 2``; two
    rectangular blocks fill the remainder.  Tagged edges: ``clamp``
    (x = 0), ``load`` (x = length), ``hole``, ``top``, ``bottom``.

    ``refinement`` scales all subdivision counts; refinement 1 gives
    360 elements.
    """
    if radius <= 0.0 or 2.0 * radius >= height:
        raise ValueError(
            f"hole must fit the plate: need 0 < 2*radius < height, "
            f"got radius={radius}, height={height}")
    if length <= height:
        raise ValueError(f"plate must satisfy length > height, got {length} <= {height}")
    if refinement < 1:
        raise ValueError("refinement must be >= 1")

    cx, cy = 0.5 * length, 0.5 * height
    half = 0.5 * height           # frame square touches top and bottom edges
    n_arc = 6 * refinement        # along each quarter arc / frame side
    n_ring = 3 * refinement       # through the ring thickness
    n_x = 9 * refinement          # along each side rectangle

    corner = {
        -45.0: (cx + half, cy - half), 45.0: (cx + half, cy + half),
        135.0: (cx - half, cy + half), 225.0: (cx - half, cy - half),
        315.0: (cx + half, cy - half),
    }

    def ring(theta0: float, theta1: float):
        c0 = np.array(corner[theta0])
        c1 = np.array(corner[theta1])

        def mapping(s: float, t: float) -> tuple[float, float]:
            theta = np.deg2rad(theta0 + s * (theta1 - theta0))
            arc = np.array([cx + radius * np.cos(theta), cy + radius * np.sin(theta)])
            line = c0 + s * (c1 - c0)
            p = (1.0 - t) * line + t * arc
            return p[0], p[1]

        return mapping

    def rect(x0: float, x1: float):
        def mapping(s: float, t: float) -> tuple[float, float]:
            return x0 + s * (x1 - x0), t * height
        return mapping

    builder = _MeshBuilder()
    builder.add_block(ring(-45.0, 45.0), n_arc, n_ring, {"t1": "hole"})
    builder.add_block(ring(45.0, 135.0), n_arc, n_ring, {"t1": "hole", "t0": "top"})
    builder.add_block(ring(135.0, 225.0), n_arc, n_ring, {"t1": "hole"})
    builder.add_block(ring(225.0, 315.0), n_arc, n_ring, {"t1": "hole", "t0": "bottom"})
    builder.add_block(rect(0.0, cx - half), n_x, n_arc,
                      {"s0": "clamp", "t0": "bottom", "t1": "top"})
    builder.add_block(rect(cx + half, length), n_x, n_arc,
                      {"s1": "load", "t0": "bottom", "t1": "top"})
    return builder.build()


# ---------------------------------------------------------------------------
# Mesh text format
# ---------------------------------------------------------------------------

def save_mesh(mesh: Mesh, path: str) -> None:
    """Write the plain-text mesh format (node / tri6 / edge lines)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# ddmech tri6 mesh\n")
        for i, (x, y) in enumerate(mesh.nodes):
            fh.write(f"node {i} {x:.17g} {y:.17g}\n")
        for i, conn in enumerate(mesh.elements):
            fh.write("tri6 " + str(i) + " " + " ".join(str(n) for n in conn) + "\n")
        for tag, group in mesh.edge_groups.items():
            for elem, edge in group:
                fh.write(f"edge {tag} {elem} {edge}\n")


def load_mesh(path: str) -> Mesh:
    """Read the plain-text mesh format; node/element ids may be sparse."""
    node_map: dict[int, int] = {}
    elem_map: dict[int, int] = {}
    nodes: list[tuple[float, float]] = []
    raw_elems: list[list[int]] = []
    raw_edges: list[tuple[str, int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            try:
                if parts[0] == "node" and len(parts) == 4:
                    node_map[int(parts[1])] = len(nodes)
                    nodes.append((float(parts[2]), float(parts[3])))
                elif parts[0] == "tri6" and len(parts) == 8:
                    elem_map[int(parts[1])] = len(raw_elems)
                    raw_elems.append([int(p) for p in parts[2:8]])
                elif parts[0] == "edge" and len(parts) == 4:
                    raw_edges.append((parts[1], int(parts[2]), int(parts[3])))
                else:
                    raise ValueError("unrecognized record")
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: {exc}: {line.rstrip()}") from None

    try:
        elements = [[node_map[n] for n in conn] for conn in raw_elems]
    except KeyError as exc:
        raise MeshFormatError(f"{path}: element references unknown node {exc}") from None
    edge_groups: dict[str, list[tuple[int, int]]] = {}
    for tag, elem, edge in raw_edges:
        if elem not in elem_map or not 0 <= edge < 3:
            raise MeshFormatError(f"{path}: bad edge record ({tag}, {elem}, {edge})")
        edge_groups.setdefault(tag, []).append((elem_map[elem], edge))
    return Mesh(np.array(nodes, dtype=float), np.array(elements, dtype=int), edge_groups)


# ---------------------------------------------------------------------------
# FEM model: quadrature data, B-matrices, constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirichletBC:
    """Prescribed displacement component on all nodes of a tagged edge."""

    edge_tag: str
    component: int          # 0 = x, 1 = y
    value: float = 0.0


@dataclass
class FemModel:
    """Immutable assembly-ready view of a mesh.

    Arrays are indexed per element and Gauss point; the flat ``*_flat``
    views (one row per material point, ``m = 3 * n_elements`` in
    element-major order) are what the solvers consume.
    """

    mesh: Mesh
    b_matrices: np.ndarray        # (n_elems, 3, 4, 12)
    weights: np.ndarray           # (n_elems, 3)  gauss weight * |J|
    quad_points: np.ndarray       # (n_elems, 3, 2) physical coordinates
    dof_map: np.ndarray           # (n_elems, 12)
    dirichlet_dofs: np.ndarray    # (n_c,) int
    dirichlet_values: np.ndarray  # (n_c,)
    load: np.ndarray              # (n_dofs,) zero unless a load was baked in

    @property
    def n_dofs(self) -> int:
        return 2 * self.mesh.n_nodes

    @property
    def n_points(self) -> int:
        return self.weights.size

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    @property
    def b_flat(self) -> np.ndarray:
        return self.b_matrices.reshape(-1, N_COMP, DOFS_PER_ELEM)

    @property
    def w_flat(self) -> np.ndarray:
        return self.weights.reshape(-1)

    @property
    def dofs_flat(self) -> np.ndarray:
        return np.repeat(self.dof_map, N_GAUSS, axis=0)

    def strains(self, u: np.ndarray) -> np.ndarray:
        """Mandel strains at every material point for nodal displacements u."""
        return np.einsum("pij,pj->pi", self.b_flat, u[self.dofs_flat])

    def internal_force(self, stresses: np.ndarray) -> np.ndarray:
        """Assembled internal force vector ``sum_e w_e B_e^T sig_e``."""
        contrib = np.einsum("p,pij,pi->pj", self.w_flat, self.b_flat, stresses)
        f = np.zeros(self.n_dofs)
        np.add.at(f, self.dofs_flat, contrib)
        return f


def build_fem_model(mesh: Mesh, dirichlet: list[DirichletBC] | None = None) -> FemModel:
    """Precompute quadrature weights and B-matrices for a mesh.

    Raises :class:`MeshQualityError` naming the first element whose
    Jacobian is not strictly positive at every Gauss point.
    """
    ne = mesh.n_elements
    b = np.zeros((ne, N_GAUSS, N_COMP, DOFS_PER_ELEM))
    w = np.zeros((ne, N_GAUSS))
    qp = np.zeros((ne, N_GAUSS, 2))
    inv_sqrt2 = 1.0 / np.sqrt(2.0)

    shape_cache = [shape_tri6(xi, eta) for xi, eta in GAUSS_POINTS]
    for e in range(ne):
        coords = mesh.nodes[mesh.elements[e]]          # (6, 2)
        for g, (n_vals, dn_ref) in enumerate(shape_cache):
            jac = dn_ref.T @ coords                    # (2, 2), J[i, j] = dx_j/dxi_i
            det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
            if det <= 0.0 or not np.isfinite(det):
                raise MeshQualityError(
                    f"element {e} has non-positive Jacobian {det:.3e} at Gauss point {g}")
            dn_phys = dn_ref @ np.linalg.inv(jac.T)    # (6, 2) -> dN/dx, dN/dy
            w[e, g] = GAUSS_WEIGHTS[g] * det
            qp[e, g] = n_vals @ coords
            bx, by = dn_phys[:, 0], dn_phys[:, 1]
            b[e, g, 0, 0::2] = bx
            b[e, g, 1, 1::2] = by
            b[e, g, 3, 0::2] = by * inv_sqrt2
            b[e, g, 3, 1::2] = bx * inv_sqrt2

    dof_map = np.empty((ne, DOFS_PER_ELEM), dtype=int)
    dof_map[:, 0::2] = 2 * mesh.elements
    dof_map[:, 1::2] = 2 * mesh.elements + 1

    constrained: dict[int, float] = {}
    for bc in dirichlet or []:
        if bc.component not in (0, 1):
            raise ValueError(f"Dirichlet component must be 0 or 1, got {bc.component}")
        for node in mesh.edge_node_ids(bc.edge_tag):
            constrained[2 * node + bc.component] = bc.value
    dofs = np.array(sorted(constrained), dtype=int)
    vals = np.array([constrained[d] for d in dofs])

    return FemModel(mesh=mesh, b_matrices=b, weights=w, quad_points=qp,
                    dof_map=dof_map, dirichlet_dofs=dofs, dirichlet_values=vals,
                    load=np.zeros(2 * mesh.n_nodes))


# ---------------------------------------------------------------------------
# Boundary loads
# ---------------------------------------------------------------------------

# 1D quadratic edge shape functions on s in [-1, 1], nodes at (-1, +1, 0).
_EDGE_GAUSS = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_EDGE_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def _edge_shape(s: float) -> tuple[np.ndarray, np.ndarray]:
    n = np.array([0.5 * s * (s - 1.0), 0.5 * s * (s + 1.0), 1.0 - s * s])
    dn = np.array([s - 0.5, s + 0.5, -2.0 * s])
    return n, dn


def _edge_loop(model: FemModel, edge_tag: str):
    """Yields (node ids, coords) for each edge in a tag group."""
    mesh = model.mesh
    if edge_tag not in mesh.edge_groups:
        raise KeyError(f"unknown edge tag {edge_tag!r}; have {sorted(mesh.edge_groups)}")
    for elem, edge in mesh.edge_groups[edge_tag]:
        ids = mesh.elements[elem, list(EDGE_NODES[edge])]
        yield ids, mesh.nodes[ids]


def pressure_load(model: FemModel, edge_tag: str, p: float) -> np.ndarray:
    """Consistent nodal forces for a constant pressure on tagged edges.

    The traction is ``-p`` times the outward normal (positive pressure
    pushes into the surface).  Edges are traversed in element order, so
    the outward normal is recovered from the edge tangent without any
    geometry-specific logic; curved quadratic edges are integrated
    exactly for constant pressure.
    """
    f = np.zeros(model.n_dofs)
    for ids, coords in _edge_loop(model, edge_tag):
        for s, wg in zip(_EDGE_GAUSS, _EDGE_WEIGHTS):
            n_vals, dn = _edge_shape(s)
            tangent = dn @ coords                      # (2,) = (dx/ds, dy/ds)
            # outward normal times arc-length Jacobian
            n_out_ds = np.array([tangent[1], -tangent[0]])
            for a in range(3):
                f[2 * ids[a]:2 * ids[a] + 2] += -p * wg * n_vals[a] * n_out_ds
    return f


def edge_traction_load(model: FemModel, edge_tag: str, traction) -> np.ndarray:
    """Consistent nodal forces for a constant traction vector (Pa) on edges."""
    t = np.asarray(traction, dtype=float)
    f = np.zeros(model.n_dofs)
    for ids, coords in _edge_loop(model, edge_tag):
        for s, wg in zip(_EDGE_GAUSS, _EDGE_WEIGHTS):
            n_vals, dn = _edge_shape(s)
            tangent = dn @ coords
            ds = np.hypot(tangent[0], tangent[1])
            for a in range(3):
                f[2 * ids[a]:2 * ids[a] + 2] += wg * n_vals[a] * ds * t
    return f


# ---------------------------------------------------------------------------
# Sparse assembly and constrained solves
# ---------------------------------------------------------------------------

def assemble_stiffness(model: FemModel, tangents: np.ndarray):
    """Assemble ``sum_e w_e B_e^T C_e B_e`` as a sparse CSR matrix.

    ``tangents`` holds one 4x4 matrix per material point, flat shape
    (m, 4, 4) or per-element shape (n_elems, 3, 4, 4).
    """
    from scipy import sparse

    c = tangents.reshape(model.weights.shape + (N_COMP, N_COMP))
    ke = np.einsum("eg,egki,egkl,eglj->eij", model.weights, model.b_matrices, c,
                   model.b_matrices, optimize=True)
    rows = np.repeat(model.dof_map, DOFS_PER_ELEM, axis=1).ravel()
    cols = np.tile(model.dof_map, (1, DOFS_PER_ELEM)).ravel()
    k = sparse.coo_matrix((ke.ravel(), (rows, cols)),
                          shape=(model.n_dofs, model.n_dofs))
    return k.tocsr()


def _diagnose_singular(k_ff, free: np.ndarray) -> int:
    """Best-effort identification of the dof responsible for singularity."""
    diag = np.abs(k_ff.diagonal())
    if diag.size and diag.min() <= 1e-300:
        return int(free[int(np.argmin(diag))])
    if k_ff.shape[0] <= 4000:
        _, _, vt = np.linalg.svd(k_ff.toarray())
        return int(free[int(np.argmax(np.abs(vt[-1])))])
    return int(free[0])


def solve_constrained(model: FemModel, k, rhs: np.ndarray) -> np.ndarray:
    """Solve ``K u = rhs`` with the model's Dirichlet rows condensed out.

    Uses a sparse direct factorization; the matrix is symmetrized as
    ``(K + K^T)/2`` beforehand so slightly unsymmetric inputs (noisy
    tangent data) stay well posed.  Raises
    :class:`SingularSystemError` naming the suspect dof on failure.
    """
    from scipy.sparse.linalg import splu

    free = model.free_dofs
    k = 0.5 * (k + k.T)
    u = np.zeros(model.n_dofs)
    u[model.dirichlet_dofs] = model.dirichlet_values
    k_ff = k[free][:, free].tocsc()
    rhs_f = rhs[free]
    if model.dirichlet_dofs.size and np.any(model.dirichlet_values):
        rhs_f = rhs_f - k[free][:, model.dirichlet_dofs] @ model.dirichlet_values
    try:
        u[free] = splu(k_ff).solve(rhs_f)
    except RuntimeError as exc:
        dof = _diagnose_singular(k_ff, free)
        raise SingularSystemError(
            f"constrained stiffness is singular (suspect dof {dof}, "
            f"node {dof // 2} component {dof % 2}): {exc}") from None
    if not np.all(np.isfinite(u)):
        dof = _diagnose_singular(k_ff, free)
        raise SingularSystemError(
            f"constrained solve produced non-finite values (suspect dof {dof})")
    return u

"""Plane-stress linear elasticity on quad4 and tri3 meshes.

Builds the cantilever, L-shape and truss-like meshes, assembles and solves the
stiffness system with a sparse direct factorization and recovers nodal stresses
by area-weighted averaging of the element values.

Units are whatever the caller uses consistently; the pipeline works in N and mm.
"""

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from matplotlib.path import Path
from scipy.spatial import cKDTree

from func.errors import MeshError, SolverError

QUAD4 = "quad4"
TRI3 = "tri3"

ConstraintKind = Literal["fixed", "sliding"]
LoadKind = Literal["concentrated", "distributed"]
Direction = Literal["x", "y"]

##Natural corner coordinates of the quad, counter-clockwise from (-1, -1)
NATURAL_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
GAUSS_POINTS = NATURAL_CORNERS / np.sqrt(3.0)

##Bilinear extrapolation from the 2x2 Gauss points back to the corners
EXTRAPOLATION = 0.25 * (
    (1.0 + np.sqrt(3.0) * NATURAL_CORNERS[:, None, 0] * NATURAL_CORNERS[None, :, 0])
    * (1.0 + np.sqrt(3.0) * NATURAL_CORNERS[:, None, 1] * NATURAL_CORNERS[None, :, 1])
)

RIGID_MODES = ("x-translation", "y-translation", "rotation")


# ----------------------------------
# Domain types
# ----------------------------------
@dataclass(frozen=True)
class Outline:
    """Exact geometry of a domain: counter-clockwise outer polygon and hole polygons."""

    outer: np.ndarray
    holes: tuple = ()

    def bounds(self):
        return (
            float(self.outer[:, 0].min()),
            float(self.outer[:, 1].min()),
            float(self.outer[:, 0].max()),
            float(self.outer[:, 1].max()),
        )

    def area(self):
        return _polygonArea(self.outer) - sum(abs(_polygonArea(hole)) for hole in self.holes)

    def contains(self, points):
        ##strictly inside the outer polygon and outside every hole
        points = np.asarray(points, dtype=float)
        inside = Path(self.outer).contains_points(points)
        for hole in self.holes:
            inside &= ~Path(hole).contains_points(points)
        return inside


@dataclass
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    elementKind: str
    boundarySets: dict
    outline: Outline
    elementSize: float
    geometry: str = ""
    constraintNormal: int = 0
    loadOrdinates: tuple = ()

    @property
    def nodeCount(self):
        return len(self.nodes)

    @property
    def elementCount(self):
        return len(self.elements)

    def characteristicLength(self):
        xmin, ymin, xmax, ymax = self.outline.bounds()
        return max(xmax - xmin, ymax - ymin)

    def elementAreas(self):
        coords = self.nodes[self.elements]
        if self.elementKind == QUAD4:
            _, detJ = _quadGaussB(coords)
            return detJ.sum(axis=1)
        return 0.5 * _triSignedArea2(coords)

    def validate(self):
        if self.elementKind not in (QUAD4, TRI3):
            raise MeshError(f"unknown element kind {self.elementKind}")
        perElement = 4 if self.elementKind == QUAD4 else 3
        if self.elements.ndim != 2 or self.elements.shape[1] != perElement:
            raise MeshError(f"{self.elementKind} elements need {perElement} nodes each")
        if self.elements.min() < 0 or self.elements.max() >= self.nodeCount:
            raise MeshError("element connectivity references a missing node")
        coords = self.nodes[self.elements]
        if self.elementKind == QUAD4:
            _, detJ = _quadGaussB(coords, checkJacobian=False)
            bad = np.flatnonzero((detJ <= 0).any(axis=1))
            if bad.size:
                raise MeshError(f"quad element {bad[0]} is not convex and counter-clockwise")
        else:
            area = 0.5 * _triSignedArea2(coords)
            bad = np.flatnonzero(area <= 1e-10 * self.outline.area())
            if bad.size:
                raise MeshError(f"triangle {bad[0]} is degenerate (area {area[bad[0]]:.3e})")
        pairs = cKDTree(self.nodes).query_pairs(1e-12 * self.characteristicLength())
        if pairs:
            a, b = sorted(pairs)[0]
            raise MeshError(f"duplicate nodes {a} and {b}")
        for name, ids in self.boundarySets.items():
            if len(ids) == 0:
                raise MeshError(f"boundary set '{name}' is empty")
        return True


@dataclass(frozen=True)
class Material:
    youngsModulus: float = 200000.0
    poissonsRatio: float = 0.3
    thickness: float = 10.0

    def __post_init__(self):
        if not self.youngsModulus > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.youngsModulus}")
        if not 0 <= self.poissonsRatio < 0.5:
            raise ValueError(f"Poisson's ratio must lie in [0, 0.5), got {self.poissonsRatio}")
        if not self.thickness > 0:
            raise ValueError(f"thickness must be positive, got {self.thickness}")

    def elasticity(self):
        ##plane stress
        E, nu = self.youngsModulus, self.poissonsRatio
        return E / (1.0 - nu**2) * np.array(
            [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]]
        )


@dataclass(frozen=True)
class LoadCase:
    """One analysis case: constraint, load kind, direction and location.

    `location` is the ordinate of the loaded free-end node for concentrated loads
    and the name of the loaded boundary edge (tip, top, bottom) for distributed ones.
    """

    constraintKind: ConstraintKind
    loadKind: LoadKind
    direction: Direction
    location: object
    totalMagnitude: float = 1000.0

    def __post_init__(self):
        if self.constraintKind not in ("fixed", "sliding"):
            raise ValueError(f"unknown constraint kind {self.constraintKind}")
        if self.loadKind not in ("concentrated", "distributed"):
            raise ValueError(f"unknown load kind {self.loadKind}")
        if self.direction not in ("x", "y"):
            raise ValueError(f"unknown load direction {self.direction}")
        if self.loadKind == "distributed" and not isinstance(self.location, str):
            raise ValueError("distributed loads are located by an edge name")

    @property
    def component(self):
        return 0 if self.direction == "x" else 1

    def toDict(self):
        return {
            "constraintKind": self.constraintKind,
            "loadKind": self.loadKind,
            "direction": self.direction,
            "location": self.location,
            "totalMagnitude": self.totalMagnitude,
        }


@dataclass
class StressField:
    mesh: Mesh
    sigmaX: np.ndarray
    sigmaY: np.ndarray
    tauXY: np.ndarray
    displacements: np.ndarray = None
    reactions: np.ndarray = None
    strainEnergy: float = 0.0
    loadNodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    ##Point forces the stencil cannot see past: concentrated loads and support pins
    singularNodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        for name in ("sigmaX", "sigmaY", "tauXY"):
            values = np.asarray(getattr(self, name), dtype=float)
            if values.shape != (self.mesh.nodeCount,):
                raise ValueError(f"{name} has {values.shape} values for {self.mesh.nodeCount} nodes")
            if not np.all(np.isfinite(values)):
                raise SolverError(f"{name} contains non-finite values")
            setattr(self, name, values)

    def components(self):
        ##(3, nodeCount), channel order sigma_x, sigma_y, tau_xy
        return np.stack([self.sigmaX, self.sigmaY, self.tauXY])


# ----------------------------------
# Mesh builders
# ----------------------------------
def _polygonArea(polygon):
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _divisions(length, elementSize, what):
    if elementSize <= 0:
        raise MeshError(f"element size must be positive, got {elementSize}")
    count = int(round(length / elementSize))
    if count < 1 or abs(count * elementSize - length) > 1e-9 * length:
        raise MeshError(
            f"element size {elementSize} does not divide the {what} {length} evenly"
        )
    return count


def _structuredGrid(width, height, nx, ny):
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    quads = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    return nodes, quads


def _dropUnusedNodes(nodes, elements):
    used = np.unique(elements)
    renumber = np.full(len(nodes), -1, dtype=int)
    renumber[used] = np.arange(len(used))
    return nodes[used], renumber[elements]


def _edgeSet(nodes, axis, value, tol, sortAxis, lower=-np.inf, upper=np.inf):
    ##nodes on coordinate[axis] == value, ordered along sortAxis
    along = nodes[:, sortAxis]
    ids = np.flatnonzero(
        (np.abs(nodes[:, axis] - value) < tol) & (along > lower - tol) & (along < upper + tol)
    )
    return ids[np.argsort(nodes[ids, sortAxis], kind="stable")]


def _nearestOnEdge(nodes, edge, sortAxis, target):
    return np.array([edge[np.argmin(np.abs(nodes[edge, sortAxis] - target))]])


def _loadSets(nodes, tip, ordinates, tol):
    sets = {}
    for i, ordinate in enumerate(ordinates):
        hit = tip[np.abs(nodes[tip, 1] - ordinate) < tol]
        if hit.size == 0:
            raise MeshError(f"no free-end node at load ordinate {ordinate}")
        sets[f"load_{i}"] = hit[:1]
    return sets


def buildMeshCantilever(H, elementSize, aspect=2.0):
    """Structured quad4 mesh of the W x H cantilever (W = aspect * H), root at x = 0."""
    W = aspect * H
    nx = _divisions(W, elementSize, "width")
    ny = _divisions(H, elementSize, "height")
    nodes, quads = _structuredGrid(W, H, nx, ny)
    tol = 1e-9 * W
    root = _edgeSet(nodes, 0, 0.0, tol, 1)
    tip = _edgeSet(nodes, 0, W, tol, 1)
    ordinates = tuple(i * H / 5.0 for i in range(6))
    boundarySets = {
        "root": root,
        "rootMid": _nearestOnEdge(nodes, root, 1, 0.5 * H),
        "tip": tip,
        "top": _edgeSet(nodes, 1, H, tol, 0),
        "bottom": _edgeSet(nodes, 1, 0.0, tol, 0),
    }
    boundarySets.update(_loadSets(nodes, tip, ordinates, tol))
    outline = Outline(np.array([[0.0, 0.0], [W, 0.0], [W, H], [0.0, H]]))
    mesh = Mesh(nodes, quads, QUAD4, boundarySets, outline, elementSize,
                geometry="cantilever", constraintNormal=0, loadOrdinates=ordinates)
    mesh.validate()
    logging.info(f"Cantilever mesh H={H} l={elementSize}: {mesh.elementCount} quads, {mesh.nodeCount} nodes")
    return mesh


def buildMeshLShape(d, elementSize, armLength=None):
    """Structured quad4 mesh of an L with arm length L = 3d (default) and arm width d.

    The vertical arm [0, d] x [0, L] is constrained along its top edge y = L; the
    horizontal arm [0, L] x [0, d] ends in the free edge x = L that carries the loads.
    """
    L = 3.0 * d if armLength is None else armLength
    nd = _divisions(d, elementSize, "arm width")
    n = _divisions(L, elementSize, "arm length")
    nodes, quads = _structuredGrid(L, L, n, n)
    centers = nodes[quads].mean(axis=1)
    inL = (centers[:, 0] < d) | (centers[:, 1] < d)
    nodes, quads = _dropUnusedNodes(nodes, quads[inL])
    tol = 1e-9 * L
    root = _edgeSet(nodes, 1, L, tol, 0)
    tip = _edgeSet(nodes, 0, L, tol, 1)
    ordinates = tuple(i * d / 5.0 for i in range(6))
    boundarySets = {
        "root": root,
        "rootMid": _nearestOnEdge(nodes, root, 0, 0.5 * d),
        "tip": tip,
        "top": _edgeSet(nodes, 1, d, tol, 0, lower=d, upper=L),
        "bottom": _edgeSet(nodes, 1, 0.0, tol, 0),
        "reentrant": np.flatnonzero(np.all(np.abs(nodes - d) < tol, axis=1)),
    }
    boundarySets.update(_loadSets(nodes, tip, ordinates, tol))
    outline = Outline(np.array([[0.0, 0.0], [L, 0.0], [L, d], [d, d], [d, L], [0.0, L]]))
    mesh = Mesh(nodes, quads, QUAD4, boundarySets, outline, elementSize,
                geometry="lshape", constraintNormal=1, loadOrdinates=ordinates)
    mesh.validate()
    logging.info(f"L-shape mesh d={d} l={elementSize} (nd={nd}): {mesh.elementCount} quads, {mesh.nodeCount} nodes")
    return mesh


def buildMeshTrussLike(templateId, elementSize, H=1.0):
    """Tri3 mesh of a bundled truss-like cantilever outline, scaled so its height is H."""
    from config.jsonFiles import TrussTemplates
    from func.trussMesher import meshOutline

    if templateId not in TrussTemplates:
        raise MeshError(f"unknown truss template '{templateId}'")
    template = TrussTemplates[templateId]
    W = float(template["width"]) * H
    height = float(template["height"]) * H
    outer = np.array([[0.0, 0.0], [W, 0.0], [W, height], [0.0, height]])
    holes = tuple(np.asarray(hole, dtype=float) * H for hole in template["holes"])
    outline = Outline(outer, holes)
    nodes, triangles = meshOutline(outline, elementSize)
    tol = 1e-9 * W
    root = _edgeSet(nodes, 0, 0.0, tol, 1)
    tip = _edgeSet(nodes, 0, W, tol, 1)
    ordinates = tuple(float(o) * H for o in template["loadOrdinates"])
    boundarySets = {
        "root": root,
        "rootMid": _nearestOnEdge(nodes, root, 1, 0.5 * height),
        "tip": tip,
        "top": _edgeSet(nodes, 1, height, tol, 0),
        "bottom": _edgeSet(nodes, 1, 0.0, tol, 0),
    }
    boundarySets.update(_loadSets(nodes, tip, ordinates, tol))
    mesh = Mesh(nodes, triangles, TRI3, boundarySets, outline, elementSize,
                geometry="truss", constraintNormal=0, loadOrdinates=ordinates)
    mesh.validate()
    logging.info(f"Truss mesh '{templateId}' l={elementSize}: {mesh.elementCount} triangles, {mesh.nodeCount} nodes")
    return mesh


# ----------------------------------
# Element kernels
# ----------------------------------
def quadShape(xi, eta):
    xi, eta = np.asarray(xi, dtype=float), np.asarray(eta, dtype=float)
    return 0.25 * (1.0 + xi[..., None] * NATURAL_CORNERS[:, 0]) * (1.0 + eta[..., None] * NATURAL_CORNERS[:, 1])


def quadShapeDerivatives(xi, eta):
    ##(..., 2, 4): d/dxi and d/deta of the four bilinear shape functions
    xi, eta = np.asarray(xi, dtype=float), np.asarray(eta, dtype=float)
    c = NATURAL_CORNERS
    dXi = 0.25 * c[:, 0] * (1.0 + eta[..., None] * c[:, 1])
    dEta = 0.25 * c[:, 1] * (1.0 + xi[..., None] * c[:, 0])
    return np.stack([dXi, dEta], axis=-2)


def _quadGaussB(coords, checkJacobian=True):
    ##B (m, 4, 3, 8) and det J (m, 4) at the Gauss points
    dN = quadShapeDerivatives(GAUSS_POINTS[:, 0], GAUSS_POINTS[:, 1])
    J = np.einsum("gan,mnb->mgab", dN, coords)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if not checkJacobian:
        return None, detJ
    bad = np.flatnonzero((detJ <= 0).any(axis=1))
    if bad.size:
        raise MeshError(f"non-positive Jacobian in quad element {bad[0]}")
    invJ = np.linalg.inv(J)
    dNdx = np.einsum("mgab,gbn->mgan", invJ, dN)
    B = np.zeros(coords.shape[:1] + (4, 3, 8))
    B[..., 0, 0::2] = dNdx[..., 0, :]
    B[..., 1, 1::2] = dNdx[..., 1, :]
    B[..., 2, 0::2] = dNdx[..., 1, :]
    B[..., 2, 1::2] = dNdx[..., 0, :]
    return B, detJ


def _triSignedArea2(coords):
    x, y = coords[..., 0], coords[..., 1]
    return (x[..., 1] - x[..., 0]) * (y[..., 2] - y[..., 0]) - (x[..., 2] - x[..., 0]) * (y[..., 1] - y[..., 0])


def _triB(coords):
    ##B (m, 1, 3, 6) and areas (m, 1)
    area2 = _triSignedArea2(coords)
    bad = np.flatnonzero(area2 <= 0)
    if bad.size:
        raise MeshError(f"triangle {bad[0]} has non-positive area")
    x, y = coords[..., 0], coords[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / area2[:, None]
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / area2[:, None]
    B = np.zeros((len(coords), 1, 3, 6))
    B[:, 0, 0, 0::2] = b
    B[:, 0, 1, 1::2] = c
    B[:, 0, 2, 0::2] = c
    B[:, 0, 2, 1::2] = b
    return B, 0.5 * area2[:, None]


def _elementKernels(mesh):
    coords = mesh.nodes[mesh.elements]
    if mesh.elementKind == QUAD4:
        return _quadGaussB(coords)
    return _triB(coords)


def elementDofs(elements):
    return np.stack([2 * elements, 2 * elements + 1], axis=-1).reshape(len(elements), -1)


# ----------------------------------
# Assembly and solution
# ----------------------------------
def assembleStiffness(mesh, material):
    B, weights = _elementKernels(mesh)
    D = material.elasticity()
    Ke = material.thickness * np.einsum("mgki,kl,mglj,mg->mij", B, D, B, weights)
    dofs = elementDofs(mesh.elements)
    nDof = dofs.shape[1]
    rows = np.repeat(dofs, nDof, axis=1).ravel()
    cols = np.tile(dofs, (1, nDof)).ravel()
    size = 2 * mesh.nodeCount
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(size, size)).tocsr()


def loadVector(mesh, load):
    """Consistent nodal forces of a load case and the ids of the loaded nodes."""
    f = np.zeros(2 * mesh.nodeCount)
    comp = load.component
    if load.loadKind == "concentrated":
        tip = mesh.boundarySets["tip"]
        tol = 1e-9 * mesh.characteristicLength()
        hit = tip[np.abs(mesh.nodes[tip, 1] - float(load.location)) < tol]
        if hit.size == 0:
            raise MeshError(f"load ordinate {load.location} is not on the loadable free end")
        f[2 * hit[0] + comp] = load.totalMagnitude
        return f, hit[:1]
    if load.location not in ("tip", "top", "bottom") or load.location not in mesh.boundarySets:
        raise MeshError(f"'{load.location}' is not a loadable edge of the {mesh.geometry} mesh")
    edge = mesh.boundarySets[load.location]
    points = mesh.nodes[edge]
    lengths = np.linalg.norm(np.diff(points, axis=0), axis=1)
    traction = load.totalMagnitude / lengths.sum()
    nodal = np.zeros(len(edge))
    nodal[:-1] += 0.5 * traction * lengths
    nodal[1:] += 0.5 * traction * lengths
    np.add.at(f, 2 * edge + comp, nodal)
    return f, edge.copy()


def constrainedDofs(mesh, constraintKind):
    root = mesh.boundarySets["root"]
    normal = mesh.constraintNormal
    if constraintKind == "fixed":
        dofs = np.concatenate([2 * root, 2 * root + 1])
    elif constraintKind == "sliding":
        pin = mesh.boundarySets["rootMid"]
        dofs = np.concatenate([2 * root + normal, 2 * pin + (1 - normal)])
    else:
        raise ValueError(f"unknown constraint kind {constraintKind}")
    return np.unique(dofs)


def supportSingularNodes(mesh, constraintKind):
    """Nodes where the support or the outline makes the stress singular.

    The sliding pin carries the whole tangential reaction as one nodal force; a
    fixed root concentrates its reaction at the two root ends. Re-entrant outline
    corners are added for every constraint.
    """
    root = mesh.boundarySets["root"]
    if constraintKind == "sliding":
        nodes = mesh.boundarySets["rootMid"]
    else:
        nodes = root[[0, -1]]
    return np.unique(np.concatenate([nodes, mesh.boundarySets.get("reentrant", np.zeros(0, dtype=int))])).astype(int)


def _checkRigidModes(mesh, fixed):
    center = mesh.nodes.mean(axis=0)
    scale = mesh.characteristicLength()
    modes = np.zeros((2 * mesh.nodeCount, 3))
    modes[0::2, 0] = 1.0
    modes[1::2, 1] = 1.0
    modes[0::2, 2] = -(mesh.nodes[:, 1] - center[1]) / scale
    modes[1::2, 2] = (mesh.nodes[:, 0] - center[0]) / scale
    restrained = modes[fixed]
    if len(fixed) == 0:
        raise SolverError("no constraints: unconstrained rigid-body mode x-translation")
    _, s, vt = np.linalg.svd(restrained, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * max(s.max(), 1.0)))
    if rank < 3:
        free = vt[-1]
        raise SolverError(
            f"singular system: unconstrained rigid-body mode {RIGID_MODES[int(np.argmax(np.abs(free)))]}"
        )


def recoverNodalStresses(mesh, gaussStresses, weights):
    """Area-weighted average of element stresses at the nodes.

    Quad Gauss values are extrapolated to the element corners first; triangles carry
    one constant value.
    """
    if mesh.elementKind == QUAD4:
        cornerStresses = np.einsum("ag,mgk->mak", EXTRAPOLATION, gaussStresses)
    else:
        cornerStresses = np.repeat(gaussStresses, 3, axis=1)
    areas = weights.sum(axis=1)
    total = np.zeros((mesh.nodeCount, 3))
    weight = np.zeros(mesh.nodeCount)
    np.add.at(total, mesh.elements, areas[:, None, None] * cornerStresses)
    np.add.at(weight, mesh.elements, np.broadcast_to(areas[:, None], mesh.elements.shape))
    return total / weight[:, None]


def solve(mesh, material, load):
    """Solve one load case and return the nodal stress field with its by-products."""
    K = assembleStiffness(mesh, material)
    f, loadNodes = loadVector(mesh, load)
    fixed = constrainedDofs(mesh, load.constraintKind)
    _checkRigidModes(mesh, fixed)

    free = np.setdiff1d(np.arange(2 * mesh.nodeCount), fixed)
    u = np.zeros(2 * mesh.nodeCount)
    Kff = K[free][:, free].tocsc()
    u[free] = spla.spsolve(Kff, f[free])
    if not np.all(np.isfinite(u)):
        raise SolverError("non-finite displacement solution")

    B, weights = _elementKernels(mesh)
    ue = u[elementDofs(mesh.elements)]
    gaussStresses = np.einsum("kl,mgli,mi->mgk", material.elasticity(), B, ue)
    nodal = recoverNodalStresses(mesh, gaussStresses, weights)

    reactions = K @ u - f
    reactions[free] = 0.0
    strainEnergy = 0.5 * float(u @ (K @ u))
    pointLoads = loadNodes if load.loadKind == "concentrated" else np.zeros(0, dtype=int)
    singular = np.unique(np.concatenate([pointLoads, supportSingularNodes(mesh, load.constraintKind)])).astype(int)
    logging.info(
        f"Solved {mesh.geometry} {load.constraintKind}/{load.loadKind}/{load.direction}@{load.location}: "
        f"{2 * mesh.nodeCount} dofs, strain energy {strainEnergy:.6g}"
    )
    return StressField(
        mesh,
        nodal[:, 0],
        nodal[:, 1],
        nodal[:, 2],
        displacements=u.reshape(-1, 2),
        reactions=reactions.reshape(-1, 2),
        strainEnergy=strainEnergy,
        loadNodes=loadNodes,
        singularNodes=singular,
    )


def checkEquilibrium(stressField, load, rtol=1e-8):
    """Raise SolverError unless the support reactions balance the applied load."""
    applied = np.zeros(2)
    applied[load.component] = load.totalMagnitude
    imbalance = stressField.reactions.sum(axis=0) + applied
    if np.max(np.abs(imbalance)) > rtol * load.totalMagnitude:
        raise SolverError(f"reactions do not balance the applied load (imbalance {imbalance.tolist()} N)")


def checkRefinement(coarse, fine, rtol=1e-9):
    """Raise SolverError when the finer mesh stores less strain energy than the coarser one."""
    if fine.strainEnergy < coarse.strainEnergy * (1.0 - rtol):
        raise SolverError(
            f"strain energy fell under refinement: coarse {coarse.strainEnergy:.9g}, fine {fine.strainEnergy:.9g}"
        )


# ----------------------------------
# Plain-text serialization
# ----------------------------------
def writeFieldText(path, stressField):
    """Write mesh, boundary sets, outline and nodal stresses as a plain-text table file."""
    mesh = stressField.mesh
    lines = [
        "# pistress field v1",
        f"mesh {mesh.elementKind} {mesh.geometry or '-'} {mesh.elementSize!r} {mesh.constraintNormal}",
        "ordinates " + " ".join(repr(float(o)) for o in mesh.loadOrdinates),
        f"outline {len(mesh.outline.outer)}",
    ]
    lines += [f"{x!r} {y!r}" for x, y in mesh.outline.outer.tolist()]
    for hole in mesh.outline.holes:
        lines.append(f"hole {len(hole)}")
        lines += [f"{x!r} {y!r}" for x, y in np.asarray(hole).tolist()]
    lines.append(f"nodes {mesh.nodeCount}")
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.nodes.tolist())]
    lines.append(f"elements {mesh.elementCount}")
    lines += [f"{i} " + " ".join(str(n) for n in conn) for i, conn in enumerate(mesh.elements.tolist())]
    for name, ids in mesh.boundarySets.items():
        lines.append(f"set {name} " + " ".join(str(int(n)) for n in ids))
    lines.append("loadnodes " + " ".join(str(int(n)) for n in stressField.loadNodes))
    lines.append("singularnodes " + " ".join(str(int(n)) for n in stressField.singularNodes))
    lines.append(f"stress {mesh.nodeCount}")
    lines += [
        f"{i} {sx!r} {sy!r} {txy!r}"
        for i, (sx, sy, txy) in enumerate(stressField.components().T.tolist())
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def readFieldText(path):
    with open(path, "r") as f:
        lines = [line.rstrip("\n") for line in f if not line.startswith("#")]
    pos = 0

    def take(count):
        nonlocal pos
        block = lines[pos:pos + count]
        pos += count
        return block

    _, kind, geometry, elementSize, normal = take(1)[0].split()
    ordinates = tuple(float(o) for o in take(1)[0].split()[1:])
    outer = np.array([[float(v) for v in line.split()] for line in take(int(take(1)[0].split()[1]))])
    holes = []
    while lines[pos].startswith("hole"):
        holes.append(np.array([[float(v) for v in line.split()] for line in take(int(take(1)[0].split()[1]))]))
    nodes = np.array([[float(v) for v in line.split()[1:]] for line in take(int(take(1)[0].split()[1]))])
    elements = np.array([[int(v) for v in line.split()[1:]] for line in take(int(take(1)[0].split()[1]))])
    boundarySets = {}
    while lines[pos].startswith("set "):
        parts = take(1)[0].split()
        boundarySets[parts[1]] = np.array([int(v) for v in parts[2:]], dtype=int)
    loadNodes = np.array([int(v) for v in take(1)[0].split()[1:]], dtype=int)
    singularNodes = np.zeros(0, dtype=int)
    if lines[pos].startswith("singularnodes"):
        singularNodes = np.array([int(v) for v in take(1)[0].split()[1:]], dtype=int)
    stress = np.array([[float(v) for v in line.split()[1:]] for line in take(int(take(1)[0].split()[1]))])
    mesh = Mesh(nodes, elements, kind, boundarySets, Outline(outer, tuple(holes)), float(elementSize),
                geometry="" if geometry == "-" else geometry, constraintNormal=int(normal),
                loadOrdinates=ordinates)
    return StressField(mesh, stress[:, 0], stress[:, 1], stress[:, 2], loadNodes=loadNodes,
                       singularNodes=singularNodes)

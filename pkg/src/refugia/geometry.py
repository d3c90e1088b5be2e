"""Habitat geometry: uniform cell-centered grid, refuge masks, face tables.

The habitat is the rectangle [0, lx] x [0, ly]. The refuge is a subregion
whose closure must stay strictly inside the habitat; the predator domain is
the complement of the refuge closure. All regions are represented by cell
masks on the grid (staircase boundaries). Fluxes vanish on every face of the
habitat boundary (for prey) and additionally on every face separating the
predator domain from the refuge (for predators), which is realized by simply
omitting those faces from the face tables.

Grid arrays have shape (nx, ny) indexed [i, j] with cell centers at
x = (i + 0.5) * hx, y = (j + 0.5) * hy. Flat cell ordering is the row-major
ravel of that array.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateGrid, NonPositiveAttackRate, RefugeTouchesBoundary
from .fields import Region, ScalarField


class CellClass(enum.IntEnum):
    REFUGE_INTERIOR = 0
    PREDATOR_DOMAIN = 1
    OUTER_BOUNDARY_ADJACENT = 2


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centered grid: nx-by-ny cells over [0, lx] x [0, ly]."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise DegenerateGrid(f"grid must have nx, ny >= 4, got {self.nx}x{self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise DegenerateGrid("physical extents must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(nx, ny) arrays of cell-center coordinates."""
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y, indexing="ij")


@dataclass(frozen=True)
class RefugeShape:
    """Refuge region: an axis-aligned rectangle, a disc, or nothing."""

    kind: str
    center: tuple[float, float] | None = None
    half_width: tuple[float, float] | None = None
    radius: float | None = None

    _KINDS = ("rectangle", "disc", "empty")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"refuge kind must be one of {self._KINDS}")
        if self.kind == "rectangle" and (self.center is None or self.half_width is None):
            raise ValueError("rectangle refuge needs center and half_width")
        if self.kind == "disc" and (self.center is None or self.radius is None):
            raise ValueError("disc refuge needs center and radius")
        if self.kind == "rectangle" and (self.half_width[0] <= 0 or self.half_width[1] <= 0):
            raise ValueError("rectangle half widths must be positive")
        if self.kind == "disc" and self.radius <= 0:
            raise ValueError("disc radius must be positive")

    @staticmethod
    def rectangle(center, half_width) -> "RefugeShape":
        return RefugeShape("rectangle", center=tuple(center), half_width=tuple(half_width))

    @staticmethod
    def disc(center, radius) -> "RefugeShape":
        return RefugeShape("disc", center=tuple(center), radius=float(radius))

    @staticmethod
    def empty() -> "RefugeShape":
        return RefugeShape("empty")

    def margin_to_boundary(self, grid: GridSpec) -> float:
        """Smallest distance from the refuge closure to the habitat boundary."""
        if self.kind == "empty":
            return float("inf")
        cx, cy = self.center
        if self.kind == "rectangle":
            wx, wy = self.half_width
            return min(cx - wx, grid.lx - cx - wx, cy - wy, grid.ly - cy - wy)
        r = self.radius
        return min(cx - r, grid.lx - cx - r, cy - r, grid.ly - cy - r)

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Membership of points in the refuge closure."""
        if self.kind == "empty":
            return np.zeros_like(x, dtype=bool)
        cx, cy = self.center
        if self.kind == "rectangle":
            wx, wy = self.half_width
            return (np.abs(x - cx) <= wx) & (np.abs(y - cy) <= wy)
        return (x - cx) ** 2 + (y - cy) ** 2 <= self.radius**2


@dataclass
class DomainGeometry:
    """Immutable-after-build description of the discretized habitat.

    Face tables list the interior faces across which diffusion acts; the
    zero-flux condition on a region's boundary is equivalent to that face
    simply not appearing in the region's table (ghost-reflection values
    cancel).
    """

    grid: GridSpec
    refuge: RefugeShape
    cell_class: np.ndarray  # (nx, ny) int8
    omega1_mask: np.ndarray  # (nx, ny) bool
    area_omega1: float
    v_index: np.ndarray  # (nx, ny) int, -1 outside OMEGA1
    omega1_flat: np.ndarray = field(repr=False)  # flat bool over cells
    # interior faces of OMEGA in flat cell indices, per axis
    face_u_x: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)
    face_u_y: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)
    # faces internal to OMEGA1 in v-vector indices, per axis
    face_v_x: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)
    face_v_y: tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)

    @property
    def n_omega(self) -> int:
        return self.grid.n_cells

    @property
    def n_omega1(self) -> int:
        return int(self.omega1_mask.sum())

    @property
    def n_unknowns(self) -> int:
        return self.n_omega + self.n_omega1

    def to_grid(self, f: ScalarField) -> np.ndarray:
        """Scatter a field into an (nx, ny) array, zero outside its region."""
        self.check_field(f)
        if f.region is Region.OMEGA:
            return f.values.reshape(self.grid.nx, self.grid.ny)
        g = np.zeros((self.grid.nx, self.grid.ny))
        g[self.omega1_mask] = f.values
        return g

    def from_grid(self, g: np.ndarray, region: Region) -> ScalarField:
        if region is Region.OMEGA:
            return ScalarField(g.ravel().copy(), region)
        return ScalarField(g[self.omega1_mask].copy(), region)

    def check_field(self, f: ScalarField) -> None:
        expected = self.n_omega if f.region is Region.OMEGA else self.n_omega1
        if f.values.size != expected:
            from .errors import RegionMismatch

            raise RegionMismatch(
                f"field on {f.region.value} has {f.values.size} values, expected {expected}"
            )

    @cached_property
    def lap_omega(self) -> sp.csr_matrix:
        """Zero-flux 5-point Laplacian over OMEGA (symmetric, rows sum to 0)."""
        return _face_matrix(
            self.n_omega, self.face_u_x, self.face_u_y, self.grid, ones=True
        )

    @cached_property
    def lap_omega1(self) -> sp.csr_matrix:
        """Zero-flux 5-point Laplacian over OMEGA1 (refuge faces excluded)."""
        return _face_matrix(
            self.n_omega1, self.face_v_x, self.face_v_y, self.grid, ones=True
        )


def _face_matrix(n, faces_x, faces_y, grid, ones=False, vals_x=None, vals_y=None):
    """Assemble a flux-divergence matrix from face tables.

    For a face (a, b) with axis weight w and side values (pa, pb) the matrix
    gets entries (a,b) += w*pb, (b,a) += w*pa, (a,a) -= w*pa, (b,b) -= w*pb.
    With pa = pb = 1 this is the Laplacian; with pa = pb = face-average it is
    the frozen-coefficient diffusion operator; with pa, pb = cell values it is
    the linearization of the density-dependent diffusion.
    """
    rows, cols, data = [], [], []
    for (a, b), w, vals in (
        (faces_x, 1.0 / grid.hx**2, vals_x),
        (faces_y, 1.0 / grid.hy**2, vals_y),
    ):
        if ones:
            pa = pb = np.ones(a.size)
        else:
            pa, pb = vals
        rows.append(a), cols.append(b), data.append(w * pb)
        rows.append(b), cols.append(a), data.append(w * pa)
        rows.append(a), cols.append(a), data.append(-w * pa)
        rows.append(b), cols.append(b), data.append(-w * pb)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    return sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def build_geometry(grid: GridSpec, refuge: RefugeShape) -> DomainGeometry:
    """Classify cells, measure the predator domain, and build face tables.

    Raises RefugeTouchesBoundary when the refuge closure comes within 2h of
    the habitat boundary (h the larger cell spacing), which enforces the
    strict-interior requirement on the discrete level.
    """
    h = max(grid.hx, grid.hy)
    if refuge.kind != "empty" and refuge.margin_to_boundary(grid) <= 2.0 * h:
        raise RefugeTouchesBoundary(
            f"refuge margin {refuge.margin_to_boundary(grid):.6g} <= 2h = {2*h:.6g}"
        )

    x, y = grid.cell_centers()
    in_refuge = refuge.contains(x, y)

    cls = np.full((grid.nx, grid.ny), CellClass.PREDATOR_DOMAIN, dtype=np.int8)
    cls[in_refuge] = CellClass.REFUGE_INTERIOR
    edge = np.zeros_like(in_refuge)
    edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    cls[edge & ~in_refuge] = CellClass.OUTER_BOUNDARY_ADJACENT
    if np.any(edge & in_refuge):
        raise RefugeTouchesBoundary("refuge cells touch the habitat boundary")

    omega1 = ~in_refuge
    area = float(omega1.sum()) * grid.hx * grid.hy

    v_index = np.full((grid.nx, grid.ny), -1, dtype=np.int64)
    v_index[omega1] = np.arange(int(omega1.sum()))

    idx = np.arange(grid.n_cells).reshape(grid.nx, grid.ny)
    face_u_x = (idx[:-1, :].ravel(), idx[1:, :].ravel())
    face_u_y = (idx[:, :-1].ravel(), idx[:, 1:].ravel())

    ok_x = omega1[:-1, :] & omega1[1:, :]
    ok_y = omega1[:, :-1] & omega1[:, 1:]
    face_v_x = (v_index[:-1, :][ok_x], v_index[1:, :][ok_x])
    face_v_y = (v_index[:, :-1][ok_y], v_index[:, 1:][ok_y])

    return DomainGeometry(
        grid=grid,
        refuge=refuge,
        cell_class=cls,
        omega1_mask=omega1,
        area_omega1=area,
        v_index=v_index,
        omega1_flat=omega1.ravel(),
        face_u_x=face_u_x,
        face_u_y=face_u_y,
        face_v_x=face_v_x,
        face_v_y=face_v_y,
    )


def attack_rate_field(geom: DomainGeometry, b: float) -> ScalarField:
    """Attack rate over OMEGA: b on the predator domain, 0 on the refuge."""
    if b <= 0:
        raise NonPositiveAttackRate(f"attack rate must be positive, got {b}")
    g = np.where(geom.omega1_mask, float(b), 0.0)
    return ScalarField(g.ravel(), Region.OMEGA)


def dump_mask(geom: DomainGeometry, path) -> None:
    """Write the cell classification as a PGM-style text raster."""
    shade = {
        int(CellClass.REFUGE_INTERIOR): 0,
        int(CellClass.PREDATOR_DOMAIN): 255,
        int(CellClass.OUTER_BOUNDARY_ADJACENT): 180,
    }
    nx, ny = geom.grid.nx, geom.grid.ny
    lines = ["P2", f"{nx} {ny}", "255"]
    for j in range(ny - 1, -1, -1):  # top row first, image convention
        lines.append(" ".join(str(shade[int(geom.cell_class[i, j])]) for i in range(nx)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

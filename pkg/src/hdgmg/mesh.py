"""Cartesian quadrilateral meshes and their facet skeleton.

Facets are numbered globally: all horizontal facets first (row by row, bottom
up), then all vertical facets (column by column, left to right).  Each element
lists its facets in the fixed local order (bottom, right, top, left), so the
outward normal of local side s is NORMALS[s].  Meshes are immutable after
construction.
"""

from dataclasses import dataclass, field

import numpy as np

# outward normals for local sides (bottom, right, top, left)
NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

SIDE_BOTTOM, SIDE_RIGHT, SIDE_TOP, SIDE_LEFT = 0, 1, 2, 3


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Structured n_x-by-n_y quad mesh of an axis-aligned rectangle."""

    n_x: int
    n_y: int
    x0: float
    y0: float
    dx: float  # element width
    dy: float  # element height
    # per facet: orientation axis (0 = horizontal, i.e. normal along y;
    # 1 = vertical), midpoint coordinates, length, boundary flag
    facet_axis: np.ndarray = field(repr=False)
    facet_boundary: np.ndarray = field(repr=False)
    # (n_elems, 4) facet ids in local order (bottom, right, top, left)
    elem_to_facets: np.ndarray = field(repr=False)
    # (n_facets, 2, 2): [owner slot, (elem id, local side)], -1 where absent.
    # Slot 0 is the element on the negative side of the facet normal.
    facet_to_elems: np.ndarray = field(repr=False)
    # (n_coarse, 4) fine element ids per coarse element when built by coarsen()
    child_elements: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_elems(self):
        return self.n_x * self.n_y

    @property
    def n_facets(self):
        return self.facet_axis.shape[0]

    @property
    def interior_facets(self):
        return np.flatnonzero(~self.facet_boundary)

    def elem_cell(self, e):
        """Grid coordinates (i, j) of element e."""
        return e % self.n_x, e // self.n_x

    def elem_origin(self, e):
        """Lower-left corner of element e."""
        i, j = self.elem_cell(e)
        return self.x0 + i * self.dx, self.y0 + j * self.dy

    def elem_corners(self, e):
        x, y = self.elem_origin(e)
        return np.array(
            [[x, y], [x + self.dx, y], [x + self.dx, y + self.dy], [x, y + self.dy]]
        )

    def facet_length(self, f):
        return self.dx if self.facet_axis[f] == 0 else self.dy

    def facet_geometry(self, f):
        """Start point and unit tangent direction of facet f (global orientation)."""
        nh = self.n_x * (self.n_y + 1)
        if self.facet_axis[f] == 0:
            i, j = f % self.n_x, f // self.n_x
            return (self.x0 + i * self.dx, self.y0 + j * self.dy), (1.0, 0.0)
        k = f - nh
        i, j = k // self.n_y, k % self.n_y
        return (self.x0 + i * self.dx, self.y0 + j * self.dy), (0.0, 1.0)

    def facet_points(self, f, t):
        """Physical points on facet f at parameter t in [-1,1] along its tangent."""
        (px, py), (tx, ty) = self.facet_geometry(f)
        s = self.facet_length(f) * (np.asarray(t) + 1.0) / 2.0
        return px + tx * s, py + ty * s

    def normal(self, e, side):
        """Outward unit normal of element e on local side `side`."""
        return NORMALS[side]

    def dump_csv(self, path):
        """Debug dump: element corner coordinates, then facet ownership."""
        with open(path, "w") as fh:
            fh.write("record,id,a,b,c,d,e,f,g,h\n")
            for e in range(self.n_elems):
                c = self.elem_corners(e).ravel()
                fh.write("element,%d,%s\n" % (e, ",".join("%.17g" % v for v in c)))
            for f in range(self.n_facets):
                owners = self.facet_to_elems[f]
                fh.write(
                    "facet,%d,%d,%d,%d,%d,%.17g,,,\n"
                    % (f, self.facet_axis[f], int(self.facet_boundary[f]),
                       owners[0, 0], owners[1, 0], self.facet_length(f))
                )


def _horizontal_id(n_x, i, j):
    return j * n_x + i


def _vertical_id(n_x, n_y, i, j):
    return n_x * (n_y + 1) + i * n_y + j


def build_cartesian(n_x, n_y, domain=((0.0, 1.0), (0.0, 1.0))):
    """Build the n_x-by-n_y subdivision of an axis-aligned rectangle.

    domain is ((x_lo, x_hi), (y_lo, y_hi)).
    """
    if n_x < 1 or n_y < 1:
        raise MeshError(f"element counts must be positive, got ({n_x}, {n_y})")
    (xa, xb), (ya, yb) = domain
    if not (xb > xa and yb > ya):
        raise MeshError("domain must have positive area")
    dx = (xb - xa) / n_x
    dy = (yb - ya) / n_y

    n_h = n_x * (n_y + 1)
    n_v = n_y * (n_x + 1)
    n_f = n_h + n_v
    axis = np.zeros(n_f, dtype=np.int8)
    axis[n_h:] = 1
    boundary = np.zeros(n_f, dtype=bool)
    elem_to_facets = np.empty((n_x * n_y, 4), dtype=np.int64)
    facet_to_elems = np.full((n_f, 2, 2), -1, dtype=np.int64)

    for j in range(n_y):
        for i in range(n_x):
            e = j * n_x + i
            fb = _horizontal_id(n_x, i, j)
            ft = _horizontal_id(n_x, i, j + 1)
            fl = _vertical_id(n_x, n_y, i, j)
            fr = _vertical_id(n_x, n_y, i + 1, j)
            elem_to_facets[e] = (fb, fr, ft, fl)
            # slot 0 = element on the negative side of the facet normal (+y / +x)
            facet_to_elems[ft, 0] = (e, SIDE_TOP)
            facet_to_elems[fb, 1] = (e, SIDE_BOTTOM)
            facet_to_elems[fr, 0] = (e, SIDE_RIGHT)
            facet_to_elems[fl, 1] = (e, SIDE_LEFT)

    for i in range(n_x):
        boundary[_horizontal_id(n_x, i, 0)] = True
        boundary[_horizontal_id(n_x, i, n_y)] = True
    for j in range(n_y):
        boundary[_vertical_id(n_x, n_y, 0, j)] = True
        boundary[_vertical_id(n_x, n_y, n_x, j)] = True

    return Mesh(n_x, n_y, xa, ya, dx, dy, axis, boundary, elem_to_facets, facet_to_elems)


def coarsen(mesh):
    """Halve the mesh in each direction; 2x2 blocks of fine elements merge.

    The returned mesh records the four fine children of each coarse element
    (order: SW, SE, NW, NE) so inter-level transfers can be assembled.
    """
    if mesh.n_x % 2 or mesh.n_y % 2:
        raise MeshError(
            f"cannot coarsen a {mesh.n_x}x{mesh.n_y} mesh: element counts must be even"
        )
    n_x, n_y = mesh.n_x // 2, mesh.n_y // 2
    coarse = build_cartesian(
        n_x, n_y,
        ((mesh.x0, mesh.x0 + mesh.n_x * mesh.dx), (mesh.y0, mesh.y0 + mesh.n_y * mesh.dy)),
    )
    children = np.empty((n_x * n_y, 4), dtype=np.int64)
    for cj in range(n_y):
        for ci in range(n_x):
            c = cj * n_x + ci
            fi, fj = 2 * ci, 2 * cj
            children[c] = (
                fj * mesh.n_x + fi,
                fj * mesh.n_x + fi + 1,
                (fj + 1) * mesh.n_x + fi,
                (fj + 1) * mesh.n_x + fi + 1,
            )
    return Mesh(
        coarse.n_x, coarse.n_y, coarse.x0, coarse.y0, coarse.dx, coarse.dy,
        coarse.facet_axis, coarse.facet_boundary, coarse.elem_to_facets,
        coarse.facet_to_elems, child_elements=children,
    )

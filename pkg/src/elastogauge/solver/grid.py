"""Uniform node grids on axis-aligned boxes."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import ConfigError, CornerError
from ..fields import check_dimension

AXIS_NAMES = "xyz"


@dataclass(frozen=True)
class Face:
    axis: int
    side: int  # 0 at the lower end of the axis, 1 at the upper end

    @property
    def name(self):
        return AXIS_NAMES[self.axis] + ("-" if self.side == 0 else "+")

    @property
    def normal(self):
        """Outward unit covector in the coordinate frame."""
        return self.side * 2 - 1


class Grid:
    """Nodes ``x_a = lo_a + i h_a``, ``i = 0 .. nx_a - 1``, on a box.

    Arrays defined on the grid carry the node axes last, e.g. a displacement
    is ``(n, *nx)``.
    """

    def __init__(self, domain, nx):
        domain = np.asarray(domain, dtype=float)
        if domain.ndim != 2 or domain.shape[1] != 2:
            raise ConfigError("expected an (n, 2) array of bounds", "domain")
        n = check_dimension(domain.shape[0])
        nx = (int(nx),) * n if np.ndim(nx) == 0 else tuple(int(k) for k in nx)
        if len(nx) != n or min(nx) < 5:
            raise ConfigError(f"need at least 5 nodes per axis, got {nx}", "grid/nx")
        if np.any(domain[:, 1] <= domain[:, 0]):
            raise ConfigError("empty domain", "domain")
        self.domain = domain
        self.n = n
        self.nx = nx
        self.h = (domain[:, 1] - domain[:, 0]) / (np.array(nx) - 1)

    def __repr__(self):
        return f"Grid(nx={self.nx}, h={self.h.tolist()})"

    @property
    def h_min(self):
        return float(self.h.min())

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def shape(self):
        return self.nx

    @property
    def size(self):
        return int(np.prod(self.nx))

    def axis(self, a):
        return self.domain[a, 0] + self.h[a] * np.arange(self.nx[a])

    def points(self, index=None):
        """Coordinates of the nodes (all nodes in C order, or ``index`` tuples)."""
        if index is None:
            mesh = np.meshgrid(*[self.axis(a) for a in range(self.n)], indexing="ij")
            return np.stack([m.ravel() for m in mesh], axis=1)
        return np.stack([self.domain[a, 0] + self.h[a] * np.asarray(index[a])
                         for a in range(self.n)], axis=1)

    @property
    def interior(self):
        return (slice(1, -1),) * self.n

    @cached_property
    def boundary_mask(self):
        mask = np.ones(self.nx, dtype=bool)
        mask[self.interior] = False
        return mask

    @property
    def faces(self):
        return [Face(a, s) for a in range(self.n) for s in (0, 1)]

    def face(self, name):
        for f in self.faces:
            if f.name == name:
                return f
        raise ConfigError(f"unknown face {name!r}", "face")

    def face_index(self, face):
        """Multi-index of the nodes on the open face (edges and corners excluded)."""
        ranges = []
        for a in range(self.n):
            if a == face.axis:
                ranges.append(np.array([0 if face.side == 0 else self.nx[a] - 1]))
            else:
                ranges.append(np.arange(1, self.nx[a] - 1))
        mesh = np.meshgrid(*ranges, indexing="ij")
        return tuple(m.ravel() for m in mesh)

    def classify(self, index):
        """The unique open face containing a boundary node; raises on corners."""
        index = tuple(int(i) for i in index)
        hits = [Face(a, 0 if index[a] == 0 else 1) for a in range(self.n)
                if index[a] in (0, self.nx[a] - 1)]
        if not hits:
            raise ValueError(f"node {index} is interior")
        if len(hits) > 1:
            raise CornerError(f"node {index} lies on {len(hits)} faces; no unique normal")
        return hits[0]

    def refined(self, nx):
        return Grid(self.domain, nx)

"""Vertex embeddings of the triangular and square lattices on a square region.

Both lattices are stored on a rectangular index grid ``(row, col)`` with
integer coordinates ``(x, y) = (xs[col], ys[row])``. A triangular vertex sits at
``eta * (x + y * e^{i pi/3})``, a square vertex at ``eta * (x + i y)``. Only grid
cells whose position lies in the closed region ``[-k, k]^2`` are vertices;
vertex ids enumerate those cells in row-major order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError


TRIANGULAR = "triangular-site"
SQUARE = "square-fk"
KINDS = (TRIANGULAR, SQUARE)

SQRT3_2 = math.sqrt(3.0) / 2.0
# absolute slack for comparisons against box sides (plane units)
TOL = 1e-9

_OFFSETS = {
	TRIANGULAR: [(0, 1), (0, -1), (1, 0), (-1, 0), (1, -1), (-1, 1)],
	SQUARE: [(0, 1), (0, -1), (1, 0), (-1, 0)],
}
_FORWARD = {
	TRIANGULAR: [(0, 1), (1, 0), (1, -1)],
	SQUARE: [(0, 1), (1, 0)],
}


@dataclass(frozen=True)
class Box:
	"""Closed axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

	xmin: float
	xmax: float
	ymin: float
	ymax: float

	@classmethod
	def centered(cls, center: Tuple[float, float], radius: float) -> "Box":
		cx, cy = center
		return cls(cx - radius, cx + radius, cy - radius, cy + radius)

	@property
	def center(self) -> Tuple[float, float]:
		return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

	@property
	def width(self) -> float:
		return self.xmax - self.xmin

	@property
	def height(self) -> float:
		return self.ymax - self.ymin

	def contains(self, x, y) -> np.ndarray:
		return (x >= self.xmin - TOL) & (x <= self.xmax + TOL) & (y >= self.ymin - TOL) & (y <= self.ymax + TOL)

	def contains_half_open(self, x, y) -> np.ndarray:
		# [xmin, xmax) x [ymin, ymax): upper and right sides excluded
		return (x >= self.xmin - TOL) & (x < self.xmax - TOL) & (y >= self.ymin - TOL) & (y < self.ymax - TOL)

	def contains_box(self, other: "Box") -> bool:
		return (
			other.xmin >= self.xmin - TOL and other.xmax <= self.xmax + TOL
			and other.ymin >= self.ymin - TOL and other.ymax <= self.ymax + TOL
		)

	def intersects(self, other: "Box") -> bool:
		return not (
			other.xmax < self.xmin - TOL or other.xmin > self.xmax + TOL
			or other.ymax < self.ymin - TOL or other.ymin > self.ymax + TOL
		)

	def as_list(self) -> List[float]:
		return [self.xmin, self.xmax, self.ymin, self.ymax]


@dataclass(frozen=True)
class GridFrame:
	"""Affine map from index cells to plane positions.

	``px = eta * (x0 + col + shear * (y0 + row))`` and ``py = row_step * (y0 + row)``.
	"""

	eta: float
	row_step: float
	shear: float
	x0: float
	y0: float
	ny: int
	nx: int

	def window(self, box: Box) -> Tuple[slice, slice]:
		"""Index slices covering every cell whose position may lie in `box`."""
		r_lo = max(0, math.ceil((box.ymin - TOL) / self.row_step - self.y0))
		r_hi = min(self.ny - 1, math.floor((box.ymax + TOL) / self.row_step - self.y0))
		if r_lo > r_hi:
			return slice(0, 0), slice(0, 0)
		c_lo = math.ceil((box.xmin - TOL) / self.eta - self.x0 - self.shear * (self.y0 + r_hi))
		c_hi = math.floor((box.xmax + TOL) / self.eta - self.x0 - self.shear * (self.y0 + r_lo))
		c_lo = max(0, c_lo)
		c_hi = min(self.nx - 1, c_hi)
		if c_lo > c_hi:
			return slice(0, 0), slice(0, 0)
		return slice(r_lo, r_hi + 1), slice(c_lo, c_hi + 1)

	def positions(self, rows: slice, cols: slice) -> Tuple[np.ndarray, np.ndarray]:
		r = np.arange(self.ny)[rows].astype(float)
		c = np.arange(self.nx)[cols].astype(float)
		C, R = np.meshgrid(c, r)
		px = self.eta * (self.x0 + C + self.shear * (self.y0 + R))
		py = self.row_step * (self.y0 + R)
		return px, py


@dataclass(frozen=True)
class EdgeBlock:
	"""Lattice edges sharing one forward offset ``(dr, dc)``."""

	dr: int
	dc: int
	src_rows: np.ndarray
	src_cols: np.ndarray
	u: np.ndarray
	v: np.ndarray


class Lattice:
	"""Geometry of one (kind, eta, k) region; shared by every sample on it."""

	def __init__(self, kind: str, eta: float, k: float):
		if kind not in KINDS:
			raise ConfigurationError(f"unknown lattice kind {kind!r}")
		if not (eta > 0 and eta < k):
			raise ConfigurationError(f"mesh needs 0 < eta < k, got eta={eta}, k={k}")
		self.kind = kind
		self.eta = float(eta)
		self.k = float(k)
		shear = 0.5 if kind == TRIANGULAR else 0.0
		row_step = self.eta * SQRT3_2 if kind == TRIANGULAR else self.eta
		ny_half = int(math.floor(self.k / row_step + TOL))
		nx_half = int(math.floor(self.k / self.eta + shear * ny_half + TOL))
		self.ys = np.arange(-ny_half, ny_half + 1)
		self.xs = np.arange(-nx_half, nx_half + 1)
		self.frame = GridFrame(self.eta, row_step, shear, float(self.xs[0]), float(self.ys[0]), len(self.ys), len(self.xs))
		self.px, self.py = self.frame.positions(slice(None), slice(None))
		self.inside = (np.abs(self.px) <= self.k + TOL) & (np.abs(self.py) <= self.k + TOL)
		self.rows, self.cols = np.nonzero(self.inside)
		self.n_vertices = int(self.rows.size)
		self.index = np.full(self.inside.shape, -1, dtype=np.int64)
		self.index[self.rows, self.cols] = np.arange(self.n_vertices)
		self.positions = np.column_stack([self.px[self.rows, self.cols], self.py[self.rows, self.cols]])

	def __repr__(self) -> str:
		return f"Lattice({self.kind!r}, eta={self.eta}, k={self.k}, n_vertices={self.n_vertices})"

	@property
	def shape(self) -> Tuple[int, int]:
		return self.inside.shape

	@property
	def region(self) -> Box:
		return Box(-self.k, self.k, -self.k, self.k)

	@property
	def min_spacing(self) -> float:
		"""Smallest L-infinity distance between two distinct vertices."""
		return self.frame.row_step if self.kind == TRIANGULAR else self.eta

	@cached_property
	def steps(self) -> np.ndarray:
		"""Plane displacements to every lattice neighbour."""
		out = [
			(self.eta * (dc + self.frame.shear * dr), self.frame.row_step * dr)
			for dr, dc in _OFFSETS[self.kind]
		]
		return np.asarray(out, dtype=float)

	@property
	def forward_offsets(self) -> List[Tuple[int, int]]:
		return list(_FORWARD[self.kind])

	@cached_property
	def edge_blocks(self) -> List[EdgeBlock]:
		ny, nx = self.shape
		blocks = []
		for dr, dc in _FORWARD[self.kind]:
			ok = np.zeros((ny, nx), dtype=bool)
			r0, r1 = 0, ny - dr
			c0, c1 = max(0, -dc), nx - max(0, dc)
			ok[r0:r1, c0:c1] = self.inside[r0:r1, c0:c1] & self.inside[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
			rr, cc = np.nonzero(ok)
			blocks.append(EdgeBlock(dr, dc, rr, cc, self.index[rr, cc], self.index[rr + dr, cc + dc]))
		return blocks

	@cached_property
	def edges(self) -> np.ndarray:
		"""``(E, 2)`` vertex-id pairs; square bonds are horizontal then vertical, row-major."""
		if not self.edge_blocks:
			return np.zeros((0, 2), dtype=np.int64)
		return np.column_stack([
			np.concatenate([b.u for b in self.edge_blocks]),
			np.concatenate([b.v for b in self.edge_blocks]),
		])

	@property
	def n_edges(self) -> int:
		return int(self.edges.shape[0])

	@cached_property
	def dual_frame(self) -> GridFrame:
		if self.kind != SQUARE:
			raise ConfigurationError("only the square lattice carries a dual lattice here")
		ny, nx = self.shape
		return GridFrame(self.eta, self.eta, 0.0, self.frame.x0 + 0.5, self.frame.y0 + 0.5, ny - 1, nx - 1)

	def vertex_at(self, x: int, y: int) -> int:
		r = int(y - self.ys[0])
		c = int(x - self.xs[0])
		if not (0 <= r < self.shape[0] and 0 <= c < self.shape[1]):
			return -1
		return int(self.index[r, c])

	@property
	def origin(self) -> int:
		return self.vertex_at(0, 0)

	def vertices_in(self, box: Box, half_open: bool = False) -> np.ndarray:
		"""Vertex ids inside `box` (sorted)."""
		rs, cs = self.frame.window(box)
		px, py = self.px[rs, cs], self.py[rs, cs]
		inside = box.contains_half_open(px, py) if half_open else box.contains(px, py)
		ids = self.index[rs, cs][inside & self.inside[rs, cs]]
		return np.sort(ids)


@lru_cache(maxsize=16)
def lattice_for(kind: str, eta: float, k: float) -> Lattice:
	return Lattice(kind, eta, k)


def annulus_rings(px: np.ndarray, py: np.ndarray, center: Tuple[float, float], a: Optional[float], b: float, steps: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
	"""Inner and outer ring masks for the box annulus around `center`.

	A cell is on the inner ring when some neighbour lies strictly inside
	``Lambda_a``; it is on the outer ring when some neighbour lies outside the
	closed ``Lambda_b``. Neighbour positions are analytic, so cells at the edge
	of the sampled region are handled like any other.
	"""
	dx = px - center[0]
	dy = py - center[1]
	inner = np.zeros(px.shape, dtype=bool)
	outer = np.zeros(px.shape, dtype=bool)
	for sx, sy in steps:
		d = np.maximum(np.abs(dx + sx), np.abs(dy + sy))
		if a is not None:
			inner |= d < a - TOL
		outer |= d > b + TOL
	return inner, outer


def linf_distance(px: np.ndarray, py: np.ndarray, center: Tuple[float, float]) -> np.ndarray:
	return np.maximum(np.abs(px - center[0]), np.abs(py - center[1]))


def grid_cells_meeting(points, spacing: float, radius: float) -> np.ndarray:
	"""Integer cells ``z`` whose closed box ``Lambda_radius(spacing * z)`` meets `points`.

	Returns a lexicographically sorted ``(m, 2)`` array.
	"""
	pts = np.asarray(points, dtype=float).reshape(-1, 2)
	if pts.shape[0] == 0:
		return np.zeros((0, 2), dtype=np.int64)
	reach = int(math.ceil(radius / spacing)) + 1
	base = np.floor(pts / spacing).astype(np.int64)
	found = []
	for dx in range(-reach, reach + 1):
		zx = base[:, 0] + dx
		ok_x = np.abs(pts[:, 0] - spacing * zx) <= radius + TOL
		if not ok_x.any():
			continue
		for dy in range(-reach, reach + 1):
			zy = base[:, 1] + dy
			ok = ok_x & (np.abs(pts[:, 1] - spacing * zy) <= radius + TOL)
			if ok.any():
				found.append(np.column_stack([zx[ok], zy[ok]]))
	if not found:
		return np.zeros((0, 2), dtype=np.int64)
	return np.unique(np.concatenate(found), axis=0)

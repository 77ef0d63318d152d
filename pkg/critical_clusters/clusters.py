"""Cluster labelling, domain restrictions and set distances."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial import cKDTree

from .errors import DomainError, ParameterError
from .geometry import TOL, Box
from .lattice import Configuration
from .unionfind import label_edges


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cluster:
	"""One cluster or piece: its vertex ids (sorted) and their geometry."""

	id: int
	vertices: np.ndarray
	positions: np.ndarray

	@property
	def size(self) -> int:
		return int(self.vertices.size)

	@cached_property
	def bbox(self) -> Box:
		lo = self.positions.min(axis=0)
		hi = self.positions.max(axis=0)
		return Box(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))

	@property
	def diameter(self) -> float:
		b = self.bbox
		return max(b.width, b.height)

	@property
	def min_vertex(self) -> int:
		return int(self.vertices[0])


def _order_key(c: Cluster):
	return (-c.size, c.min_vertex)


@dataclass
class ClusterCollection:
	members: List[Cluster]
	domain: Box
	delta: float

	def __len__(self) -> int:
		return len(self.members)

	def __iter__(self):
		return iter(self.members)

	def __getitem__(self, i):
		return self.members[i]

	def point_sets(self) -> List[np.ndarray]:
		return [c.positions for c in self.members]


class PieceCollection(ClusterCollection):
	"""Components of ``cluster ∩ domain``; wholly interior clusters are their own piece."""


@dataclass(eq=False)
class ClusterSet:
	"""Union-find labelling of one configuration.

	`parent` holds, for every occupied vertex, the smallest vertex id of its
	cluster (the cluster id) and -1 for unoccupied vertices. Per-cluster arrays
	are indexed like `roots`.
	"""

	config: Configuration
	parent: np.ndarray
	roots: np.ndarray
	labels: np.ndarray
	sizes: np.ndarray
	xmin: np.ndarray
	xmax: np.ndarray
	ymin: np.ndarray
	ymax: np.ndarray
	_members: List[np.ndarray] = field(default_factory=list, repr=False)

	@property
	def n_clusters(self) -> int:
		return int(self.roots.size)

	@property
	def diameters(self) -> np.ndarray:
		return np.maximum(self.xmax - self.xmin, self.ymax - self.ymin)

	@property
	def positions(self) -> np.ndarray:
		return self.config.lattice.positions

	def bbox(self, i: int) -> Box:
		return Box(float(self.xmin[i]), float(self.xmax[i]), float(self.ymin[i]), float(self.ymax[i]))

	def members(self, i: int) -> np.ndarray:
		return self._members[i]

	def cluster(self, i: int) -> Cluster:
		v = self._members[i]
		return Cluster(int(self.roots[i]), v, self.positions[v])

	def index_of(self, vertex: int) -> int:
		"""Cluster index holding `vertex`, or -1."""
		return int(self.labels[vertex])


def _group(n_vertices: int, roots: np.ndarray, occupied: np.ndarray, positions: np.ndarray):
	occ = np.flatnonzero(occupied)
	r = roots[occ]
	uniq, lab = np.unique(r, return_inverse=True)
	labels = np.full(n_vertices, -1, dtype=np.int64)
	labels[occ] = lab
	if uniq.size == 0:
		empty = np.zeros(0)
		return uniq, labels, np.zeros(0, dtype=np.int64), empty, empty, empty, empty, []
	order = np.argsort(lab, kind="stable")
	members_flat = occ[order]
	sizes = np.bincount(lab, minlength=uniq.size)
	starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
	px = positions[members_flat, 0]
	py = positions[members_flat, 1]
	xmin = np.minimum.reduceat(px, starts)
	xmax = np.maximum.reduceat(px, starts)
	ymin = np.minimum.reduceat(py, starts)
	ymax = np.maximum.reduceat(py, starts)
	members = np.split(members_flat, starts[1:])
	return uniq, labels, sizes, xmin, xmax, ymin, ymax, members


def find_clusters(config: Configuration) -> ClusterSet:
	"""Label red sites (triangular) or open-bond clusters (square-fk)."""
	lat = config.lattice
	e = lat.edges
	roots = label_edges(lat.n_vertices, e[:, 0], e[:, 1], config.open_edges)
	occupied = config.occupied
	parent = np.where(occupied, roots, -1)
	uniq, labels, sizes, xmin, xmax, ymin, ymax, members = _group(lat.n_vertices, roots, occupied, lat.positions)
	return ClusterSet(config, parent, uniq, labels, sizes, xmin, xmax, ymin, ymax, members)


def _check_domain(cs: ClusterSet, domain: Box) -> None:
	if not cs.config.lattice.region.contains_box(domain):
		raise DomainError(f"domain {domain.as_list()} is not inside the sampled region")


def clusters_in_domain(cs: ClusterSet, domain: Box, delta: float) -> ClusterCollection:
	"""Clusters wholly inside `domain` with L-infinity diameter at least `delta`."""
	if delta < 0:
		raise ParameterError("delta must be non-negative")
	_check_domain(cs, domain)
	inside = (
		(cs.xmin >= domain.xmin - TOL) & (cs.xmax <= domain.xmax + TOL)
		& (cs.ymin >= domain.ymin - TOL) & (cs.ymax <= domain.ymax + TOL)
		& (cs.diameters >= delta - TOL)
	)
	members = [cs.cluster(int(i)) for i in np.flatnonzero(inside)]
	members.sort(key=_order_key)
	return ClusterCollection(members, domain, float(delta))


def pieces_in_domain(cs: ClusterSet, domain: Box, delta: float) -> PieceCollection:
	"""Connected components of every cluster intersected with `domain`."""
	if delta < 0:
		raise ParameterError("delta must be non-negative")
	_check_domain(cs, domain)
	lat = cs.config.lattice
	pos = lat.positions
	in_dom = domain.contains(pos[:, 0], pos[:, 1])
	e = lat.edges
	active = cs.config.open_edges & in_dom[e[:, 0]] & in_dom[e[:, 1]]
	roots = label_edges(lat.n_vertices, e[:, 0], e[:, 1], active)
	occupied = cs.config.occupied & in_dom
	uniq, _, _, xmin, xmax, ymin, ymax, members = _group(lat.n_vertices, roots, occupied, pos)
	diam = np.maximum(xmax - xmin, ymax - ymin) if uniq.size else np.zeros(0)
	keep = np.flatnonzero(diam >= delta - TOL)
	pieces = [Cluster(int(uniq[i]), members[i], pos[members[i]]) for i in keep]
	pieces.sort(key=_order_key)
	return PieceCollection(pieces, domain, float(delta))


def largest_clusters(cs: ClusterSet, domain: Box, count: int) -> List[Cluster]:
	if count <= 0:
		raise ParameterError("count must be positive")
	return pieces_in_domain(cs, domain, 0.0).members[:count]


def hausdorff_distance(A, B) -> float:
	"""Hausdorff distance between finite point sets under the L-infinity metric."""
	a = np.asarray(A, dtype=float).reshape(-1, 2)
	b = np.asarray(B, dtype=float).reshape(-1, 2)
	if a.shape[0] == 0 or b.shape[0] == 0:
		raise DomainError("hausdorff_distance needs non-empty point sets")
	d_ab = cKDTree(b).query(a, p=np.inf)[0].max()
	d_ba = cKDTree(a).query(b, p=np.inf)[0].max()
	return float(max(d_ab, d_ba))


def _perfect_matching(mask: np.ndarray) -> bool:
	match = maximum_bipartite_matching(csr_matrix(mask.astype(np.int8)), perm_type="column")
	return bool((match >= 0).all())


def collection_distance(S: Sequence, S_prime: Sequence) -> float:
	"""Bottleneck assignment of Hausdorff distances; infinite for unequal sizes."""
	if len(S) != len(S_prime):
		return math.inf
	n = len(S)
	if n == 0:
		return 0.0
	D = np.array([[hausdorff_distance(a, b) for b in S_prime] for a in S])
	values = np.unique(D)
	lo, hi = 0, values.size - 1
	while lo < hi:
		mid = (lo + hi) // 2
		if _perfect_matching(D <= values[mid]):
			hi = mid
		else:
			lo = mid + 1
	return float(values[lo])

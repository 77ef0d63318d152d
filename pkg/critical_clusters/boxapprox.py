"""Box graphs, good subgraphs and the events under which they match clusters.

Boxes are ``Lambda_{eps/2}(eps z)`` for integer points ``z`` with
``|z|_inf <= ceil(1/eps)``; a box is identified by its integer cell ``z``.
Two boxes are adjacent when they are grid neighbours or when one cluster meets
both. Adjacency is answered from the cluster/box incidence, never stored as an
edge list.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .arms import detect_box_crossing, half_plane_events
from .clusters import ClusterSet, clusters_in_domain, find_clusters
from .errors import AcceptanceError, DomainError, ParameterError
from .geometry import TOL, Box, grid_cells_meeting
from .lattice import Configuration


logger = logging.getLogger(__name__)

Cell = Tuple[int, int]

UNIT = Box(-1.0, 1.0, -1.0, 1.0)
# Bound on good subgraphs: |C_1(delta)| <= 32 / eps^2 on NA
GOOD_COUNT_FACTOR = 32.0
CROSSING = (0, 1, 0)


def _check_scales(eps: float, delta: float) -> None:
	if not (eps > 0 and 10.0 * eps < delta < 1.0):
		raise ParameterError(f"need 0 < 10 eps < delta < 1, got eps={eps}, delta={delta}")


def cell_radius(eps: float) -> int:
	return int(math.ceil(1.0 / eps - TOL))


def cell_box(cell: Cell, eps: float) -> Box:
	return Box.centered((eps * cell[0], eps * cell[1]), eps / 2.0)


@dataclass(frozen=True)
class GoodSubgraph:
	"""A complete set of boxes with its extremes and strips."""

	eps: float
	cells: Tuple[Cell, ...]

	def __len__(self) -> int:
		return len(self.cells)

	@property
	def key(self) -> FrozenSet[Cell]:
		return frozenset(self.cells)

	@cached_property
	def _z(self) -> np.ndarray:
		return np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)

	@property
	def U(self) -> Optional[Box]:
		"""Bounding box of the union of boxes (the union itself is not a rectangle in general)."""
		if not self.cells:
			return None
		z = self._z
		h = self.eps / 2.0
		return Box(self.eps * z[:, 0].min() - h, self.eps * z[:, 0].max() + h, self.eps * z[:, 1].min() - h, self.eps * z[:, 1].max() + h)

	@property
	def diameter(self) -> float:
		if not self.cells:
			return 0.0
		z = self._z
		span = max(z[:, 0].max() - z[:, 0].min(), z[:, 1].max() - z[:, 1].min())
		return self.eps * (span + 1)

	def _extreme(self, axis: int, pick) -> List[Cell]:
		z = self._z
		v = pick(z[:, axis])
		return [c for c in self.cells if c[axis] == v]

	@property
	def left(self) -> List[Cell]:
		return self._extreme(0, np.min)

	@property
	def right(self) -> List[Cell]:
		return self._extreme(0, np.max)

	@property
	def top(self) -> List[Cell]:
		return self._extreme(1, np.max)

	@property
	def bottom(self) -> List[Cell]:
		return self._extreme(1, np.min)

	@property
	def SV(self) -> Box:
		u = self.U
		return Box(u.xmin, u.xmax, -math.inf, math.inf)

	@property
	def SH(self) -> Box:
		u = self.U
		return Box(-math.inf, math.inf, u.ymin, u.ymax)

	@property
	def SR(self) -> Box:
		return self.U

	def within(self, outer: Box) -> bool:
		return bool(self.cells) and outer.contains_box(self.U)

	def to_json(self) -> dict:
		return {"eps": self.eps, "cells": [list(c) for c in self.cells], "diameter": self.diameter}


def k_eps(points, eps: float) -> GoodSubgraph:
	"""The complete graph on the boxes meeting `points` (closed boxes)."""
	pts = getattr(points, "positions", points)
	cells = grid_cells_meeting(pts, eps, eps / 2.0)
	return GoodSubgraph(float(eps), tuple((int(x), int(y)) for x, y in cells))


def _memberships(points: np.ndarray, eps: float) -> Tuple[np.ndarray, np.ndarray]:
	"""``(point index, cell)`` pairs for every closed box containing a point."""
	base = np.rint(points / eps).astype(np.int64)
	idx, cells = [], []
	for dx in (-1, 0, 1):
		for dy in (-1, 0, 1):
			z = base + np.array([dx, dy])
			ok = np.all(np.abs(points - eps * z) <= eps / 2.0 + TOL, axis=1)
			idx.append(np.flatnonzero(ok))
			cells.append(z[ok])
	return np.concatenate(idx), np.concatenate(cells)


@dataclass(eq=False)
class BoxGraph:
	config: Configuration
	clusters: ClusterSet
	eps: float
	radius: int
	box_clusters: Dict[Cell, FrozenSet[int]]
	cluster_cells: Dict[int, FrozenSet[Cell]]
	_neighbours: Dict[Cell, FrozenSet[Cell]] = field(default_factory=dict, repr=False)

	def __contains__(self, cell: Cell) -> bool:
		return max(abs(cell[0]), abs(cell[1])) <= self.radius

	@property
	def n_boxes(self) -> int:
		return (2 * self.radius + 1) ** 2

	def cells(self) -> Iterator[Cell]:
		r = self.radius
		for y in range(-r, r + 1):
			for x in range(-r, r + 1):
				yield (x, y)

	def box(self, cell: Cell) -> Box:
		return cell_box(cell, self.eps)

	def red_connected(self, c1: Cell, c2: Cell) -> bool:
		a = self.box_clusters.get(c1)
		b = self.box_clusters.get(c2)
		return bool(a and b and not a.isdisjoint(b))

	def tags(self, c1: Cell, c2: Cell) -> Set[str]:
		out = set()
		if max(abs(c1[0] - c2[0]), abs(c1[1] - c2[1])) == 1:
			out.add("grid")
		if c1 != c2 and self.red_connected(c1, c2):
			out.add("red")
		return out

	def adjacent(self, c1: Cell, c2: Cell) -> bool:
		return bool(self.tags(c1, c2))

	def neighbours(self, cell: Cell) -> FrozenSet[Cell]:
		if cell not in self._neighbours:
			out = set()
			for dx in (-1, 0, 1):
				for dy in (-1, 0, 1):
					c = (cell[0] + dx, cell[1] + dy)
					if (dx or dy) and c in self:
						out.add(c)
			for i in self.box_clusters.get(cell, ()):
				out.update(self.cluster_cells[i])
			out.discard(cell)
			self._neighbours[cell] = frozenset(out)
		return self._neighbours[cell]

	def red_components(self) -> List[FrozenSet[Cell]]:
		"""Boxes meeting some cluster, grouped by chains of shared clusters."""
		cells = sorted(self.box_clusters)
		if not cells:
			return []
		index = {c: i for i, c in enumerate(cells)}
		us, vs = [], []
		for members in self.cluster_cells.values():
			ids = sorted(index[c] for c in members)
			us.extend(ids[:-1])
			vs.extend(ids[1:])
		n = len(cells)
		graph = csr_matrix((np.ones(len(us), dtype=np.int8), (np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64))), shape=(n, n))
		n_comp, labels = connected_components(graph, directed=False)
		groups: List[List[Cell]] = [[] for _ in range(n_comp)]
		for c, lab in zip(cells, labels.tolist()):
			groups[lab].append(c)
		return [frozenset(g) for g in groups]

	def edges(self) -> Iterator[Tuple[Cell, Cell, Set[str]]]:
		"""Every edge once, ``c1 < c2``; meant for small graphs."""
		for c1 in self.cells():
			for c2 in sorted(self.neighbours(c1)):
				if c1 < c2:
					yield c1, c2, self.tags(c1, c2)


def build_box_graph(config: Configuration, eps: float, clusters: Optional[ClusterSet] = None) -> BoxGraph:
	lat = config.lattice
	if not (lat.eta < eps):
		raise ParameterError(f"box graphs need eta < eps, got eta={lat.eta}, eps={eps}")
	r = cell_radius(eps)
	if not lat.region.contains_box(Box.centered((0.0, 0.0), eps * r + eps / 2.0)):
		raise DomainError(f"boxes at scale {eps} reach beyond the sampled region")
	cs = clusters if clusters is not None else find_clusters(config)
	occ = np.flatnonzero(cs.labels >= 0)
	pidx, cells = _memberships(lat.positions[occ], eps)
	keep = np.max(np.abs(cells), axis=1) <= r if cells.size else np.zeros(0, dtype=bool)
	pidx, cells = pidx[keep], cells[keep]
	labels = cs.labels[occ[pidx]]
	box_sets: Dict[Cell, Set[int]] = {}
	cluster_sets: Dict[int, Set[Cell]] = {}
	for (x, y), lab in zip(cells.tolist(), labels.tolist()):
		box_sets.setdefault((x, y), set()).add(lab)
		cluster_sets.setdefault(lab, set()).add((x, y))
	return BoxGraph(
		config, cs, float(eps), r,
		{c: frozenset(s) for c, s in box_sets.items()},
		{i: frozenset(s) for i, s in cluster_sets.items()},
	)


def _bron_kerbosch(nodes: FrozenSet[Cell], neighbours) -> List[FrozenSet[Cell]]:
	"""Maximal cliques of the graph induced on `nodes` (pivoting variant)."""
	nbrs = {v: set(neighbours(v)) & nodes for v in nodes}
	out: List[FrozenSet[Cell]] = []
	stack = [(set(), set(nodes), set())]
	while stack:
		r, p, x = stack.pop()
		if not p and not x:
			out.append(frozenset(r))
			continue
		pivot = max(p | x, key=lambda v: len(nbrs[v] & p))
		for v in sorted(p - nbrs[pivot]):
			stack.append((r | {v}, p & nbrs[v], x & nbrs[v]))
			p = p - {v}
			x = x | {v}
	return out


def _crossing_condition(g: BoxGraph, h: GoodSubgraph) -> bool:
	u = h.U
	for lc in h.left:
		for rc in h.right:
			if not detect_box_crossing(g.config, g.box(lc), g.box(rc), h.SV, CROSSING, math.pi):
				return False
	for tc in h.top:
		for bc in h.bottom:
			if not detect_box_crossing(g.config, g.box(tc), g.box(bc), h.SH, CROSSING, math.pi / 2.0):
				return False
	logger.debug("crossing condition holds on %d boxes spanning %s", len(h), u.as_list())
	return True


def is_good(g: BoxGraph, cells, delta: float, check_maximal: bool = True) -> bool:
	"""Evaluate the five conditions for the box set `cells` literally."""
	cells = sorted(set(cells))
	if not cells:
		return False
	for i, c1 in enumerate(cells):
		for c2 in cells[i + 1:]:
			if not g.adjacent(c1, c2):
				return False
	h = GoodSubgraph(g.eps, tuple(cells))
	if not h.within(UNIT) or h.diameter < delta - TOL:
		return False
	if check_maximal:
		common = set(g.neighbours(cells[0]))
		for c in cells[1:]:
			common &= g.neighbours(c)
		if common - set(cells):
			return False
	return _crossing_condition(g, h)


def candidate_cliques(g: BoxGraph, delta: float) -> List[FrozenSet[Cell]]:
	"""Maximal cliques inside each red-connected component wide enough to reach diameter `delta`.

	Boxes without a cluster only have grid neighbours, and a complete subgraph
	wider than two boxes joins every member by a red edge to one of its far
	extremes. So every complete subgraph of diameter ``delta > 10 eps`` lies in
	one component, and its common neighbours do too.
	"""
	out: Set[FrozenSet[Cell]] = set()
	for comp in g.red_components():
		if GoodSubgraph(g.eps, tuple(comp)).diameter < delta - TOL:
			continue
		out.update(_bron_kerbosch(comp, g.neighbours))
	return sorted(out, key=sorted)


def good_subgraphs(g: BoxGraph, delta: float) -> List[GoodSubgraph]:
	"""Every good subgraph of the box graph, each candidate clique checked by `is_good`.

	Candidates are the maximal cliques of the red-connected components of
	boxes. They include the maximal complete subgraphs containing ``K_eps(C)``
	for each cluster ``C``.
	"""
	_check_scales(g.eps, delta)
	found: List[GoodSubgraph] = []
	for key in candidate_cliques(g, delta):
		h = GoodSubgraph(g.eps, tuple(sorted(key)))
		# cheap conditions first; is_good repeats them
		if not h.within(UNIT) or h.diameter < delta - TOL:
			continue
		if is_good(g, key, delta):
			found.append(h)
	logger.debug("eps=%g delta=%g: %d good subgraphs", g.eps, delta, len(found))
	found.sort(key=lambda h: h.cells)
	return found


@dataclass
class ApproxEvents:
	nc: bool
	na1: bool
	na2: bool

	@property
	def na(self) -> bool:
		return self.na1 and self.na2

	@property
	def e(self) -> bool:
		return self.na and self.nc

	def to_json(self) -> dict:
		return {"nc": self.nc, "na1": self.na1, "na2": self.na2, "na": self.na, "e": self.e}


def boundary_distance(cell: Cell, eps: float) -> float:
	"""L-infinity distance between the box of `cell` and the boundary of ``Lambda_1``."""
	s = eps * max(abs(cell[0]), abs(cell[1]))
	return max(0.0, 1.0 - s - eps / 2.0, s - eps / 2.0 - 1.0)


def _candidate_cells(config: Configuration, cs: ClusterSet, eps: float, a: float, b: float, radius: int) -> List[Cell]:
	"""Centres whose annulus can carry a red crossing at all."""
	step = float(np.abs(config.lattice.steps).max())
	big = np.flatnonzero(cs.diameters >= b - a - 2.0 * step - TOL)
	cells: Set[Cell] = set()
	for i in big:
		pos = cs.positions[cs.members(int(i))]
		for x, y in grid_cells_meeting(pos, eps, a + step).tolist():
			if max(abs(x), abs(y)) <= radius:
				cells.add((x, y))
	return sorted(cells)


def scan_half_plane_events(config: Configuration, eps: float, delta: float, clusters: Optional[ClusterSet] = None) -> Dict[Cell, Dict[int, Tuple[bool, bool]]]:
	"""Centres ``eps z`` where some half-plane event of the annulus ``(eps/2, delta/2 - 3 eps)`` holds.

	Values map each side to ``(A_{(), (010)}, A_{(1), (010)})``; absent centres
	carry no event.
	"""
	_check_scales(eps, delta)
	r = cell_radius(eps)
	a, b = eps / 2.0, delta / 2.0 - 3.0 * eps
	if not config.lattice.region.contains_box(Box.centered((0.0, 0.0), eps * r + b)):
		raise DomainError(f"event annuli at scale {eps} reach beyond the sampled region")
	cs = clusters if clusters is not None else find_clusters(config)
	out = {}
	for cell in _candidate_cells(config, cs, eps, a, b, r):
		ev = half_plane_events(config, (eps * cell[0], eps * cell[1]), a, b)
		if any(p03 or p13 for p03, p13 in ev.values()):
			out[cell] = ev
	return out


def detect_events(config: Configuration, eps: float, delta: float, clusters: Optional[ClusterSet] = None) -> ApproxEvents:
	"""NC, NA1 and NA2 at scale `eps`, with events centred at ``eps z``."""
	hits = scan_half_plane_events(config, eps, delta, clusters)
	na1 = not any(p13 for ev in hits.values() for _, p13 in ev.values())
	na2 = True
	for cell, ev in hits.items():
		if boundary_distance(cell, eps) <= eps + TOL and any(p03 for p03, _ in ev.values()):
			na2 = False
			break
	lo, hi = (delta - 3.0 * eps) / eps, (delta + 3.0 * eps) / eps
	nc = True
	for j in (1, 2):
		first = [c for c, ev in hits.items() if ev[j][0]]
		second = [c for c, ev in hits.items() if ev[j + 2][0]]
		axis = j - 1
		for c1 in first:
			for c2 in second:
				d = abs(c1[axis] - c2[axis])
				if lo + TOL < d < hi - TOL:
					nc = False
					break
			if not nc:
				break
		if not nc:
			break
	events = ApproxEvents(nc, na1, na2)
	logger.debug("events eps=%g delta=%g: %s", eps, delta, events.to_json())
	return events


@dataclass
class CorrespondenceReport:
	sample_index: int
	eps: float
	delta: float
	events: ApproxEvents
	status: str
	n_good: int = 0
	n_clusters: int = 0
	counterexamples: List[dict] = field(default_factory=list)
	gap_violations: List[int] = field(default_factory=list)
	leftmost_disjoint: Optional[bool] = None

	def to_json(self) -> dict:
		return {
			"sample_index": self.sample_index,
			"eps": self.eps,
			"delta": self.delta,
			"events": self.events.to_json(),
			"status": self.status,
			"n_good": self.n_good,
			"n_clusters": self.n_clusters,
			"counterexamples": self.counterexamples,
			"gap_violations": self.gap_violations,
			"leftmost_disjoint": self.leftmost_disjoint,
		}


def verify_correspondence(config: Configuration, eps: float, delta: float) -> CorrespondenceReport:
	"""Match good subgraphs against ``K_eps`` of the clusters in ``Lambda_1`` of diameter at least `delta`.

	On NA the number of good subgraphs must not exceed ``32 / eps^2`` whether
	or not NC holds; a violation raises `AcceptanceError`. Samples outside
	``E(eps, delta)`` are then reported as skipped. The report also records,
	on NC, the clusters with diameter strictly between ``delta - 2 eps`` and
	`delta`, and on NA whether the leftmost boxes of wide clusters are disjoint.
	"""
	cs = find_clusters(config)
	events = detect_events(config, eps, delta, cs)
	idx = config.spec.sample_index
	gaps = diameter_gap_violations(cs, eps, delta) if events.nc else []
	if gaps:
		logger.info("sample %d: NC holds but %d clusters fall in the diameter gap at eps=%g", idx, len(gaps), eps)
	if not events.na:
		logger.debug("sample %d: NA(%g, %g) fails, skipped", idx, eps, delta)
		return CorrespondenceReport(idx, eps, delta, events, "skipped", gap_violations=gaps)
	g = build_box_graph(config, eps, cs)
	goods = good_subgraphs(g, delta)
	if len(goods) > GOOD_COUNT_FACTOR / eps ** 2:
		raise AcceptanceError(f"sample {idx}: {len(goods)} good subgraphs exceed 32 / eps^2 at eps={eps}")
	disjoint = leftmost_boxes_disjoint(cs, eps, delta)
	if not disjoint:
		logger.info("sample %d: NA holds but leftmost boxes of two clusters overlap at eps=%g", idx, eps)
	if not events.nc:
		logger.debug("sample %d: NC(%g, %g) fails, skipped", idx, eps, delta)
		return CorrespondenceReport(idx, eps, delta, events, "skipped", len(goods), gap_violations=gaps, leftmost_disjoint=disjoint)
	big = clusters_in_domain(cs, UNIT, delta)
	by_key: Dict[FrozenSet[Cell], List[int]] = {}
	for c in big:
		by_key.setdefault(k_eps(c, eps).key, []).append(c.id)
	problems = []
	good_keys = {h.key for h in goods}
	for h in goods:
		owners = by_key.get(h.key, [])
		if len(owners) != 1:
			problems.append({"kind": "good-without-unique-cluster", "cells": [list(c) for c in h.cells], "clusters": owners})
	for key, owners in by_key.items():
		if key not in good_keys:
			problems.append({"kind": "cluster-not-good", "clusters": owners, "cells": [list(c) for c in sorted(key)]})
	status = "failed" if problems else "passed"
	if problems:
		logger.info("sample %d: correspondence failed with %d counterexamples", idx, len(problems))
	return CorrespondenceReport(idx, eps, delta, events, status, len(goods), len(big), problems, gaps, disjoint)


def refinement_levels(eta: float, delta: float) -> Tuple[int, int]:
	"""``(n_lo, n_hi)``: coarsest level with ``10 * 3^-n < delta`` and finest with ``3^-n > 10 eta``.

	Boxes at levels past `n_hi` hold at most ten mesh steps and are not
	scanned. When even `n_lo` is that fine, ``n_hi < n_lo`` and the range is
	empty.
	"""
	if not (0 < delta < 1):
		raise ParameterError(f"delta must lie in (0, 1), got {delta}")
	if not eta > 0:
		raise ParameterError("eta must be positive")
	n_lo = 0
	while not 10.0 * 3.0 ** -n_lo < delta:
		n_lo += 1
	n_hi = 0
	while 3.0 ** -(n_hi + 1) > 10.0 * eta:
		n_hi += 1
	if not 3.0 ** -n_hi > 10.0 * eta:
		n_hi = -1
	return n_lo, n_hi


def refinement_index(config: Configuration, delta: float) -> Optional[int]:
	"""Smallest level from which ``E(3^-n, delta)`` holds down to the finest scanned level.

	Levels coarser than ``n_lo`` carry no events and count as holding, so a
	configuration with E at every scanned level gets 0. Returns None when E
	fails at the finest level or when the mesh leaves no level to scan.
	"""
	if not (0 < delta < 1):
		raise ParameterError(f"delta must lie in (0, 1), got {delta}")
	n_lo, n_hi = refinement_levels(config.lattice.eta, delta)
	if n_hi < n_lo:
		logger.warning("refinement scan truncated: no level between %d and the mesh eta=%g", n_lo, config.lattice.eta)
		return None
	cs = find_clusters(config)
	n = n_hi
	while n >= n_lo:
		if not detect_events(config, 3.0 ** -n, delta, cs).e:
			if n == n_hi:
				logger.debug("refinement scan: E fails at the finest level %d", n_hi)
				return None
			return n + 1
		n -= 1
	return 0


def refinement_tail(indices: Sequence[Optional[int]], n_lo: int, n_hi: int) -> Dict[int, float]:
	"""Empirical ``P(n_0 > n)`` per scanned level; a missing index exceeds every level."""
	values = list(indices)
	if not values:
		raise ParameterError("refinement_tail needs at least one sample")
	return {n: sum(v is None or v > n for v in values) / len(values) for n in range(n_lo, n_hi + 1)}


def _coarsen(cell: Cell, factor: int) -> Cell:
	half = (factor - 1) // 2
	return ((cell[0] + half) // factor, (cell[1] + half) // factor)


def nesting_check(config: Configuration, delta: float, levels: Sequence[int]) -> List[dict]:
	"""Good subgraphs at each finer level whose U does not sit in exactly one coarser U."""
	levels = sorted(set(int(n) for n in levels))
	cs = find_clusters(config)
	goods = {n: good_subgraphs(build_box_graph(config, 3.0 ** -n, cs), delta) for n in levels}
	violations = []
	for coarse, fine in zip(levels, levels[1:]):
		factor = 3 ** (fine - coarse)
		for h in goods[fine]:
			image = {_coarsen(c, factor) for c in h.cells}
			owners = [i for i, hc in enumerate(goods[coarse]) if image <= hc.key]
			if len(owners) != 1:
				violations.append({"coarse": coarse, "fine": fine, "cells": [list(c) for c in h.cells], "owners": owners})
	return violations


def diameter_gap_violations(cs: ClusterSet, eps: float, delta: float) -> List[int]:
	"""Ids of clusters in ``Lambda_1`` whose diameter lies strictly between ``delta - 2 eps`` and `delta`."""
	inside = clusters_in_domain(cs, UNIT, 0.0)
	return sorted(c.id for c in inside if delta - 2.0 * eps + TOL < c.diameter < delta - TOL)


def leftmost_boxes_disjoint(cs: ClusterSet, eps: float, delta: float) -> bool:
	"""Whether ``L(K_eps(C))`` (and ``B(K_eps(C))`` for tall clusters) are pairwise disjoint."""
	wide: Set[Cell] = set()
	tall: Set[Cell] = set()
	for c in clusters_in_domain(cs, UNIT, delta):
		h = k_eps(c, eps)
		if c.bbox.width >= delta - TOL:
			left = set(h.left)
			if wide & left:
				return False
			wide |= left
		if c.bbox.height >= delta - TOL:
			bottom = set(h.bottom)
			if tall & bottom:
				return False
			tall |= bottom
	return True

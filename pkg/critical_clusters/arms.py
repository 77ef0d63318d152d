"""Multi-arm events in box annuli and their Monte Carlo probabilities.

An arm event asks for disjoint crossings of ``A(z; a, b) = Lambda_b(z) minus
the interior of Lambda_a(z)`` with prescribed colours in counterclockwise
order. Detection labels every colour inside the annulus, keeps the clusters
that meet both the inner and the outer ring, and reads the colours of their
inner-ring contacts around `z` as a cyclic word. The event holds when the
colour sequence is a cyclic subsequence of that word, where a run of clusters
of one colour may supply as many arms as it has vertex-disjoint crossings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .connectivity import Layer, WindowLabels, connected_to_boundary, label_window
from .errors import DomainError, ParameterError
from .geometry import TOL, Box, annulus_rings, linf_distance
from .lattice import DEFAULT_BURN_IN, Configuration, MeshSpec, sample
from .stats import wilson_interval


logger = logging.getLogger(__name__)

RED = 1
BLUE = 0
SIDES = (1, 2, 3, 4)

Colours = Tuple[int, ...]


def parse_colours(text) -> Colours:
	"""``"1010"``, ``[1, 0, 1, 0]`` or ``""`` to a colour tuple."""
	if isinstance(text, str):
		bits = tuple(int(ch) for ch in text.strip() if not ch.isspace())
	else:
		bits = tuple(int(b) for b in text)
	if any(b not in (0, 1) for b in bits):
		raise ParameterError(f"colour sequences use only 0 and 1, got {text!r}")
	return bits


def format_colours(bits: Colours) -> str:
	return "".join(str(b) for b in bits)


@dataclass(frozen=True)
class ArmQuery:
	center: Tuple[float, float]
	a: float
	b: float
	kappa: Colours
	kappa_hp: Colours = ()
	side: Optional[int] = None

	def __post_init__(self) -> None:
		object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
		object.__setattr__(self, "kappa", parse_colours(self.kappa))
		object.__setattr__(self, "kappa_hp", parse_colours(self.kappa_hp))
		if not (0 < self.a < self.b):
			raise ParameterError(f"arm annulus needs 0 < a < b, got a={self.a}, b={self.b}")
		if bool(self.kappa_hp) != (self.side is not None):
			raise ParameterError("a half-plane side is given exactly when the half-plane colours are")
		if self.side is not None and self.side not in SIDES:
			raise ParameterError(f"side must be one of {SIDES}, got {self.side}")
		if not self.kappa and not self.kappa_hp:
			raise ParameterError("an arm event needs at least one arm")

	@property
	def colours(self) -> Colours:
		return self.kappa + self.kappa_hp

	def with_radii(self, a: float, b: float) -> "ArmQuery":
		return ArmQuery(self.center, a, b, self.kappa, self.kappa_hp, self.side)


SPECIAL_EVENTS: Dict[str, Tuple[Colours, Colours, Optional[int]]] = {
	"pi1": ((1,), (), None),
	"pi4": ((1, 0, 1, 0), (), None),
	"pi6": ((0, 1, 0, 1, 0, 1), (), None),
	"pi03": ((), (0, 1, 0), 1),
	"pi13": ((1,), (0, 1, 0), 1),
}


def special_query(name: str, a: float, b: float, center: Tuple[float, float] = (0.0, 0.0), side: Optional[int] = None) -> ArmQuery:
	try:
		kappa, kappa_hp, default_side = SPECIAL_EVENTS[name]
	except KeyError:
		raise ParameterError(f"unknown arm event {name!r}; known: {sorted(SPECIAL_EVENTS)}") from None
	return ArmQuery(center, a, b, kappa, kappa_hp, side if (side is not None and kappa_hp) else default_side)


def half_plane(center: Tuple[float, float], a: float, side: int):
	"""Membership test for ``H_side(z, a)``, the half-plane bounded by one side line of ``Lambda_a(z)``."""
	zx, zy = center
	if side == 1:
		return lambda px, py: px <= zx + a + TOL
	if side == 2:
		return lambda px, py: py <= zy + a + TOL
	if side == 3:
		return lambda px, py: px >= zx - a - TOL
	if side == 4:
		return lambda px, py: py >= zy - a - TOL
	raise ParameterError(f"side must be one of {SIDES}, got {side}")


@dataclass
class _Crossings:
	colour: int
	wl: WindowLabels
	inner: np.ndarray
	outer: np.ndarray
	angles: np.ndarray
	labels: np.ndarray


def _crossings(layer: Layer, center, a: float, b: float, restrict=None) -> _Crossings:
	def in_annulus(px, py):
		m = linf_distance(px, py, center) >= a - TOL
		if restrict is not None:
			m &= restrict(px, py)
		return m

	wl = label_window(layer, Box.centered(center, b), in_annulus)
	inner, outer = annulus_rings(wl.px, wl.py, center, a, b, layer.steps)
	inner &= wl.domain
	outer &= wl.domain
	crossing = np.intersect1d(wl.labels[inner], wl.labels[outer])
	contact = inner & np.isin(wl.labels, crossing)
	angles = np.arctan2(wl.py[contact] - center[1], wl.px[contact] - center[0])
	return _Crossings(layer.colour, wl, inner, outer, angles, wl.labels[contact])


def _disjoint_crossings(cr: _Crossings, label: int, cap: int) -> int:
	"""Vertex-disjoint inner-to-outer paths inside one crossing cluster, at most `cap`."""
	lab = cr.wl.labels[cr.wl.domain]
	members = np.flatnonzero(lab == label)
	m = members.size
	local = np.full(lab.size, -1, dtype=np.int64)
	local[members] = np.arange(m)
	keep = local[cr.wl.u] >= 0
	p, q = local[cr.wl.u[keep]], local[cr.wl.v[keep]]
	inner = np.flatnonzero(cr.inner[cr.wl.domain][members])
	outer = np.flatnonzero(cr.outer[cr.wl.domain][members])
	src, snk = 2 * m, 2 * m + 1
	j = np.arange(m)
	rows = np.concatenate([2 * j, 2 * p + 1, 2 * q + 1, np.full(inner.size, src), 2 * outer + 1])
	cols = np.concatenate([2 * j + 1, 2 * q, 2 * p, 2 * inner, np.full(outer.size, snk)])
	cap_arr = np.ones(rows.size, dtype=np.int32)
	graph = csr_matrix((cap_arr, (rows, cols)), shape=(2 * m + 2, 2 * m + 2))
	flow = maximum_flow(graph, src, snk).flow_value
	return int(min(flow, cap))


def _blocks(parts: Sequence[_Crossings], shift: Optional[float], cyclic: bool) -> List[Tuple[int, List[Tuple[int, int]]]]:
	"""Maximal same-colour runs of crossing clusters in angular order."""
	angles = np.concatenate([c.angles for c in parts])
	if angles.size == 0:
		return []
	colours = np.concatenate([np.full(c.angles.size, c.colour) for c in parts])
	labels = np.concatenate([c.labels for c in parts])
	if shift is not None:
		angles = np.mod(angles - shift + TOL, 2.0 * math.pi)
	order = np.lexsort((labels, colours, angles))
	runs: List[Tuple[int, int]] = []
	for i in order:
		key = (int(colours[i]), int(labels[i]))
		if not runs or runs[-1] != key:
			runs.append(key)
	if cyclic and len(runs) > 1 and runs[0] == runs[-1]:
		runs.pop()
	blocks: List[Tuple[int, List[Tuple[int, int]]]] = []
	for key in runs:
		if blocks and blocks[-1][0] == key[0]:
			if key not in blocks[-1][1]:
				blocks[-1][1].append(key)
		else:
			blocks.append((key[0], [key]))
	if cyclic and len(blocks) > 1 and blocks[0][0] == blocks[-1][0]:
		first = blocks.pop(0)
		blocks[-1][1].extend(k for k in first[1] if k not in blocks[-1][1])
	return blocks


def _adjacent_repeat(bits: Colours, cyclic: bool) -> bool:
	n = len(bits)
	pairs = range(n) if cyclic else range(n - 1)
	return n > 1 and any(bits[i] == bits[(i + 1) % n] for i in pairs)


def _expanded_word(blocks, by_colour: Dict[int, _Crossings], bits: Colours, cyclic: bool) -> List[int]:
	cap = len(bits)
	multi = _adjacent_repeat(bits, cyclic)
	word: List[int] = []
	for colour, keys in blocks:
		if multi:
			count = sum(_disjoint_crossings(by_colour[colour], label, cap) for _, label in keys)
		else:
			count = len(keys)
		word.extend([colour] * min(count, cap))
	return word


def _embeds(word: Sequence[int], bits: Colours, cyclic: bool) -> bool:
	if not bits:
		return True
	n = len(word)
	if n < len(bits):
		return False
	for s in (range(n) if cyclic else (0,)):
		j = 0
		for t in range(n):
			if word[(s + t) % n] == bits[j]:
				j += 1
				if j == len(bits):
					return True
	return False


def _word_event(config: Configuration, center, a, b, bits: Colours, restrict, shift, cyclic: bool) -> bool:
	layers = config.layers
	by_colour = {c: _crossings(layers[c], center, a, b, restrict) for c in sorted(set(bits))}
	if any(cr.angles.size == 0 for cr in by_colour.values()):
		return False
	blocks = _blocks(list(by_colour.values()), shift, cyclic)
	return _embeds(_expanded_word(blocks, by_colour, bits, cyclic), bits, cyclic)


def _check_annulus(config: Configuration, center, b: float) -> None:
	if not config.lattice.region.contains_box(Box.centered(center, b)):
		raise DomainError(f"Lambda_{b}({center[0]}, {center[1]}) is not inside the sampled region")


def detect_arms(config: Configuration, query: ArmQuery) -> bool:
	"""Whether the configuration realizes the arm event of `query`.

	Colour 1 arms are red sites (triangular) or open bonds (square-fk); colour
	0 arms are blue sites or paths of the dual lattice through closed bonds.
	With half-plane colours the full sequence ``kappa + kappa_hp`` must cross
	the whole annulus and ``kappa_hp`` must also cross the annulus cut to
	``H_side``, ordered counterclockwise from the cut.
	"""
	center = query.center
	_check_annulus(config, center, query.b)
	if not _word_event(config, center, query.a, query.b, query.colours, None, None, True):
		return False
	if not query.kappa_hp:
		return True
	restrict = half_plane(center, query.a, query.side)
	shift = (query.side - 1) * math.pi / 2.0
	return _word_event(config, center, query.a, query.b, query.kappa_hp, restrict, shift, False)


def half_plane_events(config: Configuration, center: Tuple[float, float], a: float, b: float) -> Dict[int, Tuple[bool, bool]]:
	"""``side -> (A_{(), (010)}, A_{(1), (010)})`` for all four sides in one pass."""
	center = (float(center[0]), float(center[1]))
	if not (0 < a < b):
		raise ParameterError(f"arm annulus needs 0 < a < b, got a={a}, b={b}")
	_check_annulus(config, center, b)
	none = {side: (False, False) for side in SIDES}
	layers = config.layers
	by_colour = {c: _crossings(layers[c], center, a, b) for c in (RED, BLUE)}
	if any(cr.angles.size == 0 for cr in by_colour.values()):
		return none
	blocks = _blocks(list(by_colour.values()), None, True)
	three, four = (0, 1, 0), (1, 0, 1, 0)
	full3 = _embeds(_expanded_word(blocks, by_colour, three, True), three, True)
	full4 = _embeds(_expanded_word(blocks, by_colour, four, True), four, True)
	if not (full3 or full4):
		return none
	out = {}
	for side in SIDES:
		hp = _word_event(config, center, a, b, three, half_plane(center, a, side), (side - 1) * math.pi / 2.0, False)
		out[side] = (full3 and hp, full4 and hp)
	return out


def detect_box_crossing(config: Configuration, source: Box, target: Box, strip: Box, bits, cut_angle: float) -> bool:
	"""Disjoint crossings from `source` to `target` inside `strip`, colours `bits` in order.

	Crossings are read off where they leave `source`, going counterclockwise
	around it from `cut_angle` (the side of `source` lying on the strip edge).
	"""
	bits = parse_colours(bits)
	center = source.center
	a = 0.5 * source.width
	clipped = Box(
		max(strip.xmin, -config.lattice.k), min(strip.xmax, config.lattice.k),
		max(strip.ymin, -config.lattice.k), min(strip.ymax, config.lattice.k),
	)

	def outside_source(px, py):
		return linf_distance(px, py, center) >= a - TOL

	parts: Dict[int, _Crossings] = {}
	for colour in sorted(set(bits)):
		layer = config.layers[colour]
		wl = label_window(layer, clipped, outside_source)
		inner, _ = annulus_rings(wl.px, wl.py, center, a, math.inf, layer.steps)
		inner &= wl.domain
		reach = wl.domain & target.contains(wl.px, wl.py)
		crossing = np.intersect1d(wl.labels[inner], wl.labels[reach])
		contact = inner & np.isin(wl.labels, crossing)
		if not contact.any():
			return False
		angles = np.arctan2(wl.py[contact] - center[1], wl.px[contact] - center[0])
		parts[colour] = _Crossings(colour, wl, inner, reach, angles, wl.labels[contact])
	blocks = _blocks(list(parts.values()), cut_angle, False)
	return _embeds(_expanded_word(blocks, parts, bits, False), bits, False)


@dataclass
class ArmEstimate:
	query: ArmQuery
	hits: int
	trials: int

	@property
	def p_hat(self) -> float:
		return self.hits / self.trials

	@property
	def ci_halfwidth(self) -> float:
		return wilson_interval(self.hits, self.trials)[1]

	def merged(self, other: "ArmEstimate") -> "ArmEstimate":
		return ArmEstimate(self.query, self.hits + other.hits, self.trials + other.trials)

	def row(self, spec: MeshSpec) -> dict:
		return {
			"kind": spec.kind,
			"eta": spec.eta,
			"z": f"{self.query.center[0]:g},{self.query.center[1]:g}",
			"a": self.query.a,
			"b": self.query.b,
			"kappa": format_colours(self.query.kappa),
			"kappa_hp": format_colours(self.query.kappa_hp),
			"side": self.query.side if self.query.side is not None else "",
			"hits": self.hits,
			"trials": self.trials,
			"p_hat": self.p_hat,
			"ci": self.ci_halfwidth,
		}


def arm_probability(spec: MeshSpec, query: ArmQuery, n_samples: int, sweeps: int = DEFAULT_BURN_IN) -> ArmEstimate:
	"""Monte Carlo frequency of the arm event over samples ``spec.sample_index + i``."""
	if int(n_samples) < 1:
		raise ParameterError("n_samples must be at least 1")
	hits = 0
	for i in range(int(n_samples)):
		config = sample(spec.at(spec.sample_index + i), sweeps)
		hits += detect_arms(config, query)
	return ArmEstimate(query, hits, int(n_samples))


def _one_arm(config: Configuration, a: float, b: float) -> bool:
	if a >= b:
		return True
	return detect_arms(config, ArmQuery((0.0, 0.0), a, b, (RED,)))


def quasi_mult_ratio(spec: MeshSpec, a: float, b: float, c: float, n_samples: int, sweeps: int = DEFAULT_BURN_IN) -> float:
	"""``pi1(a, b) * pi1(b, c) / pi1(a, c)`` estimated on one set of samples."""
	if not (spec.eta < a <= b <= c) or a == c:
		raise ParameterError(f"need eta < a <= b <= c with a < c, got a={a}, b={b}, c={c}")
	if int(n_samples) < 1:
		raise ParameterError("n_samples must be at least 1")
	hits = np.zeros(3, dtype=np.int64)
	for i in range(int(n_samples)):
		config = sample(spec.at(spec.sample_index + i), sweeps)
		hits += [_one_arm(config, a, b), _one_arm(config, b, c), _one_arm(config, a, c)]
	if hits[2] == 0:
		raise ParameterError(f"no sample realized the (a, c) one-arm event in {n_samples} trials")
	p_ab, p_bc, p_ac = hits / float(n_samples)
	ratio = p_ab * p_bc / p_ac
	logger.debug("quasi-multiplicativity %s (%g, %g, %g): %.4f", spec.key, a, b, c, ratio)
	return float(ratio)


def count_connected_vertices(config: Configuration, a: float) -> int:
	"""Vertices of ``Lambda_{a/2}`` joined to the boundary of ``Lambda_a`` inside it."""
	if not config.lattice.region.contains_box(Box.centered((0.0, 0.0), a)):
		raise DomainError(f"Lambda_{a} is not inside the sampled region")
	wl, reach = connected_to_boundary(config.layers[RED], (0.0, 0.0), a)
	near = linf_distance(wl.px, wl.py, (0.0, 0.0)) <= a / 2.0 + TOL
	return int(np.count_nonzero(reach & near))


def count_local_arm_vertices(config: Configuration, a: float) -> int:
	"""Vertices ``v`` of ``Lambda_1`` with a red path from `v` to the boundary of ``Lambda_a(v)``."""
	if not (0 < a < 0.5):
		raise ParameterError(f"need 0 < a < 1/2, got {a}")
	lat = config.lattice
	if not lat.region.contains_box(Box.centered((0.0, 0.0), 1.0 + a)):
		raise DomainError(f"Lambda_{1 + a} is not inside the sampled region")
	from .clusters import find_clusters

	cs = find_clusters(config)
	layer = config.layers[RED]
	reach_step = float(np.abs(lat.steps).max())
	count = 0
	for vid in lat.vertices_in(Box.centered((0.0, 0.0), 1.0)):
		i = cs.index_of(int(vid))
		if i < 0:
			continue
		vx, vy = lat.positions[vid]
		extent = max(vx - cs.xmin[i], cs.xmax[i] - vx, vy - cs.ymin[i], cs.ymax[i] - vy)
		if extent + reach_step < a - TOL:
			continue
		wl, reach = connected_to_boundary(layer, (vx, vy), a)
		here = (np.abs(wl.px - vx) < TOL) & (np.abs(wl.py - vy) < TOL)
		count += bool((reach & here).any())
	return count

from __future__ import annotations

import math
from itertools import combinations

import numpy as np
import pytest

from conftest import fk_config, neighbour_table
from critical_clusters.arms import (
	ArmQuery,
	arm_probability,
	count_connected_vertices,
	count_local_arm_vertices,
	detect_arms,
	detect_box_crossing,
	format_colours,
	half_plane_events,
	parse_colours,
	quasi_mult_ratio,
	special_query,
)
from critical_clusters.errors import DomainError, ParameterError
from critical_clusters.geometry import SQUARE, TRIANGULAR, Box
from critical_clusters.lattice import P_SELF_DUAL, MeshSpec, SiteConfig, sample_bernoulli

A, B = 1.0, 2.5


@pytest.fixture
def coarse():
	return MeshSpec(TRIANGULAR, 1.0, 3.0, 0.5, seed=5)


def _annulus(lat, a: float, b: float):
	pos = lat.positions
	d = np.max(np.abs(pos), axis=1)
	ann = (d >= a - 1e-9) & (d <= b + 1e-9)

	def ring(v, test) -> bool:
		return any(test(float(np.max(np.abs(pos[v] + s)))) for s in lat.steps)

	inner = {int(v) for v in np.flatnonzero(ann) if ring(v, lambda t: t < a - 1e-9)}
	outer = {int(v) for v in np.flatnonzero(ann) if ring(v, lambda t: t > b + 1e-9)}
	return ann, neighbour_table(pos, lat.eta), inner, outer


def _paths(colors, colour, ann, nbrs, inner, outer):
	"""Every crossing that leaves the inner ring once and stops at the first outer-ring vertex, with its start."""
	ok = ann & (colors == bool(colour))
	found = []

	def walk(path):
		v = path[-1]
		if v in outer:
			found.append((path[0], frozenset(path)))
			return
		for w in nbrs[v]:
			w = int(w)
			if ok[w] and w not in path and w not in inner:
				walk(path + [w])

	for s in sorted(inner):
		if ok[s]:
			walk([s])
	return found


def _two_disjoint(paths) -> bool:
	return any(not p & q for (_, p), (_, q) in combinations(paths, 2))


def _alternating(red, blue, angle) -> bool:
	"""Two disjoint red and two disjoint blue crossings whose starts alternate in colour around the centre."""
	for (s1, r1), (s2, r2) in combinations(red, 2):
		if r1 & r2:
			continue
		for (t1, b1), (t2, b2) in combinations(blue, 2):
			if b1 & b2:
				continue
			word = [c for _, c in sorted([(angle[s1], 1), (angle[s2], 1), (angle[t1], 0), (angle[t2], 0)])]
			if word in ([1, 0, 1, 0], [0, 1, 0, 1]):
				return True
	return False


@pytest.mark.slow
def test_arm_events_match_path_enumeration_on_every_colouring(coarse):
	a, b = 0.5, 1.8
	lat = coarse.lattice
	ann, nbrs, inner, outer = _annulus(lat, a, b)
	window = np.flatnonzero(ann)
	assert window.size == 16
	# the four inner vertices off the axis need a second step to reach the outer ring
	assert len(inner) == 6 and len(inner & outer) == 2
	pos = lat.positions
	angle = {int(v): math.atan2(pos[v, 1], pos[v, 0]) for v in inner}
	queries = {key: ArmQuery((0.0, 0.0), a, b, key) for key in ("1", "11", "10", "1010")}
	seen = {key: 0 for key in queries}
	for mask in range(2 ** window.size):
		colors = np.zeros(lat.n_vertices, dtype=bool)
		colors[window] = (mask >> np.arange(window.size)) & 1 == 1
		config = SiteConfig(coarse, colors)
		red = _paths(colors, 1, ann, nbrs, inner, outer)
		blue = _paths(colors, 0, ann, nbrs, inner, outer)
		want = {
			"1": bool(red),
			"11": _two_disjoint(red),
			"10": bool(red) and bool(blue),
			"1010": _alternating(red, blue, angle),
		}
		for key, query in queries.items():
			assert detect_arms(config, query) == want[key], (key, mask)
			seen[key] += want[key]
	assert all(0 < v < 2 ** window.size for v in seen.values())


def test_quadrant_colouring_has_four_alternating_arms(coarse):
	pos = coarse.lattice.positions
	config = SiteConfig(coarse, pos[:, 0] * pos[:, 1] > 0)
	assert detect_arms(config, special_query("pi4", A, B))
	assert detect_arms(config, ArmQuery((0.0, 0.0), A, B, "1100"))
	assert not detect_arms(config, special_query("pi6", A, B))


def test_half_split_colouring(coarse):
	pos = coarse.lattice.positions
	config = SiteConfig(coarse, pos[:, 0] > 0)
	assert detect_arms(config, special_query("pi1", A, B))
	assert detect_arms(config, ArmQuery((0.0, 0.0), A, B, "10"))
	assert not detect_arms(config, special_query("pi4", A, B))


def test_monochrome_configurations(coarse):
	red = SiteConfig(coarse, np.ones(coarse.lattice.n_vertices, dtype=bool))
	assert detect_arms(red, special_query("pi1", A, B))
	assert not detect_arms(red, ArmQuery((0.0, 0.0), A, B, "10"))
	assert not detect_arms(red, special_query("pi03", A, B))
	assert all(v == (False, False) for v in half_plane_events(red, (0.0, 0.0), A, B).values())
	blue = SiteConfig(coarse, np.zeros(coarse.lattice.n_vertices, dtype=bool))
	assert not detect_arms(blue, special_query("pi1", A, B))
	assert detect_arms(blue, ArmQuery((0.0, 0.0), A, B, "0"))


def test_fk_primal_and_dual_crossings():
	spec = MeshSpec(SQUARE, 0.25, 1.5, P_SELF_DUAL)
	n_e = spec.lattice.n_edges
	open_ = fk_config(spec, np.ones(n_e, dtype=bool))
	closed = fk_config(spec, np.zeros(n_e, dtype=bool))
	primal = special_query("pi1", 0.5, 1.25)
	dual = ArmQuery((0.0, 0.0), 0.5, 1.25, "0")
	assert detect_arms(open_, primal) and not detect_arms(open_, dual)
	assert detect_arms(closed, dual) and not detect_arms(closed, primal)


def test_annulus_must_fit_region(coarse):
	config = sample_bernoulli(coarse)
	with pytest.raises(DomainError):
		detect_arms(config, ArmQuery((0.0, 0.0), 1.0, 3.5, "1"))
	with pytest.raises(DomainError):
		detect_arms(config, ArmQuery((1.0, 0.0), 1.0, 2.5, "1"))


def test_query_validation():
	with pytest.raises(ParameterError):
		ArmQuery((0.0, 0.0), 2.0, 1.0, "1")
	with pytest.raises(ParameterError):
		ArmQuery((0.0, 0.0), 0.5, 1.0, "", "010")
	with pytest.raises(ParameterError):
		ArmQuery((0.0, 0.0), 0.5, 1.0, "1", side=2)
	with pytest.raises(ParameterError):
		ArmQuery((0.0, 0.0), 0.5, 1.0, "", "010", side=5)
	with pytest.raises(ParameterError):
		ArmQuery((0.0, 0.0), 0.5, 1.0, "")
	with pytest.raises(ParameterError):
		special_query("pi5", 0.5, 1.0)
	q = special_query("pi13", 0.5, 1.0, side=3)
	assert (q.kappa, q.kappa_hp, q.side) == ((1,), (0, 1, 0), 3)
	assert q.colours == (1, 0, 1, 0)


def test_parse_colours():
	assert parse_colours("1010") == (1, 0, 1, 0)
	assert parse_colours([0, 1]) == (0, 1)
	assert parse_colours("") == ()
	assert format_colours((0, 1, 1)) == "011"
	with pytest.raises(ParameterError):
		parse_colours("102")
	with pytest.raises(ValueError):
		parse_colours("1x")


def test_arm_probability_and_quasi_multiplicativity_at_p_one():
	spec = MeshSpec(TRIANGULAR, 0.125, 1.5, 1.0)
	est = arm_probability(spec, special_query("pi1", 0.25, 1.0), 3)
	assert (est.hits, est.trials, est.p_hat) == (3, 3, 1.0)
	row = est.row(spec)
	assert row["kappa"] == "1" and row["side"] == ""
	assert quasi_mult_ratio(spec, 0.25, 0.5, 1.0, 2) == pytest.approx(1.0)
	with pytest.raises(ParameterError):
		quasi_mult_ratio(spec, 0.5, 0.25, 1.0, 2)
	with pytest.raises(ParameterError):
		arm_probability(spec, special_query("pi1", 0.25, 1.0), 0)


def test_quasi_multiplicativity_without_crossings():
	spec = MeshSpec(TRIANGULAR, 0.125, 1.5, 0.0)
	with pytest.raises(ParameterError):
		quasi_mult_ratio(spec, 0.25, 0.5, 1.0, 2)


def test_vertex_counts_on_monochrome_samples():
	red = sample_bernoulli(MeshSpec(TRIANGULAR, 0.125, 1.5, 1.0))
	lat = red.lattice
	assert count_connected_vertices(red, 1.0) == lat.vertices_in(Box.centered((0.0, 0.0), 0.5)).size
	assert count_local_arm_vertices(red, 0.25) == lat.vertices_in(Box.centered((0.0, 0.0), 1.0)).size
	blue = sample_bernoulli(MeshSpec(TRIANGULAR, 0.125, 1.5, 0.0))
	assert count_connected_vertices(blue, 1.0) == 0
	assert count_local_arm_vertices(blue, 0.25) == 0
	with pytest.raises(ParameterError):
		count_local_arm_vertices(red, 0.75)


def test_box_crossing_in_strip():
	spec = MeshSpec(TRIANGULAR, 0.125, 1.5, 1.0)
	red = sample_bernoulli(spec)
	blue = sample_bernoulli(MeshSpec(TRIANGULAR, 0.125, 1.5, 0.0))
	source = Box.centered((-0.5, 0.0), 0.125)
	target = Box.centered((0.5, 0.0), 0.125)
	strip = Box(-0.625, 0.625, -math.inf, math.inf)
	assert detect_box_crossing(red, source, target, strip, "1", math.pi)
	assert not detect_box_crossing(blue, source, target, strip, "1", math.pi)

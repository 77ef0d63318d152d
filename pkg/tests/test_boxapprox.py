from __future__ import annotations

import logging
from itertools import combinations

import numpy as np
import pytest

from conftest import site_config
from critical_clusters import boxapprox
from critical_clusters.boxapprox import (
	UNIT,
	ApproxEvents,
	BoxGraph,
	GoodSubgraph,
	boundary_distance,
	build_box_graph,
	candidate_cliques,
	cell_radius,
	detect_events,
	diameter_gap_violations,
	good_subgraphs,
	is_good,
	k_eps,
	leftmost_boxes_disjoint,
	refinement_index,
	refinement_levels,
	refinement_tail,
	verify_correspondence,
)
from critical_clusters.clusters import clusters_in_domain, find_clusters
from critical_clusters.errors import AcceptanceError, DomainError, ParameterError
from critical_clusters.geometry import TRIANGULAR
from critical_clusters.lattice import MeshSpec

EPS = 1.0 / 27.0
DELTA = 0.5


@pytest.fixture
def mesh32():
	return MeshSpec(TRIANGULAR, 1.0 / 32.0, 1.25, 0.5, seed=12)


def _bar(spec: MeshSpec, half_length: float):
	"""Red horizontal row through the origin, everything else blue."""
	pos = spec.lattice.positions
	red = np.flatnonzero((np.abs(pos[:, 1]) < 1e-9) & (np.abs(pos[:, 0]) <= half_length + 1e-9))
	return site_config(spec, red)


def test_k_eps_uses_closed_boxes():
	assert k_eps(np.zeros((1, 2)), 0.1).cells == ((0, 0),)
	assert set(k_eps([[0.05, 0.0]], 0.1).cells) == {(0, 0), (1, 0)}
	assert len(k_eps([[0.05, 0.05]], 0.1)) == 4


def test_good_subgraph_geometry():
	h = GoodSubgraph(0.1, ((0, 0), (1, 0), (1, 1)))
	u = h.U
	assert u.as_list() == pytest.approx([-0.05, 0.15, -0.05, 0.15])
	assert h.diameter == pytest.approx(0.2)
	assert h.left == [(0, 0)]
	assert h.right == [(1, 0), (1, 1)]
	assert h.top == [(1, 1)]
	assert h.bottom == [(0, 0), (1, 0)]
	assert h.SV.ymin == -np.inf and h.SV.xmax == pytest.approx(0.15)
	assert h.SH.xmax == np.inf and h.SH.ymin == pytest.approx(-0.05)
	assert h.within(u)
	assert h.to_json()["cells"] == [[0, 0], [1, 0], [1, 1]]
	assert GoodSubgraph(0.1, ()).U is None


def test_boundary_distance():
	assert boundary_distance((0, 0), 0.1) == pytest.approx(0.95)
	assert boundary_distance((10, 0), 0.1) == pytest.approx(0.0)
	assert boundary_distance((5, -3), 0.1) == pytest.approx(0.45)


def test_refinement_levels():
	assert refinement_levels(1.0 / 1024.0, 0.5) == (3, 4)
	assert refinement_levels(1.0 / 512.0, 0.5) == (3, 3)
	# boxes of 1/27 hold fewer than ten steps of 1/128
	assert refinement_levels(1.0 / 128.0, 0.5) == (3, 2)
	assert refinement_levels(0.25, 0.5) == (3, -1)
	with pytest.raises(ParameterError):
		refinement_levels(1.0 / 128.0, 1.5)
	assert cell_radius(EPS) == 27


def test_box_graph_on_blue_configuration(mesh32):
	g = build_box_graph(site_config(mesh32, []), EPS)
	assert g.n_boxes == 55 ** 2
	assert g.neighbours((0, 0)) == frozenset((x, y) for x in (-1, 0, 1) for y in (-1, 0, 1) if (x, y) != (0, 0))
	assert len(g.neighbours((27, 27))) == 3
	assert not g.red_connected((0, 0), (1, 0))
	assert g.tags((0, 0), (1, 1)) == {"grid"}
	assert not g.adjacent((0, 0), (2, 0))


def test_box_graph_links_boxes_of_one_cluster(mesh32):
	config = _bar(mesh32, 0.5)
	g = build_box_graph(config, EPS)
	left, right = (-13, 0), (13, 0)
	assert g.red_connected(left, right)
	assert g.tags(left, right) == {"red"}
	assert right in g.neighbours(left)
	assert not g.red_connected((0, 5), (0, -5))


def test_box_graph_needs_a_coarser_scale(mesh32):
	with pytest.raises(ParameterError):
		build_box_graph(site_config(mesh32, []), 1.0 / 64.0)
	with pytest.raises(DomainError):
		build_box_graph(site_config(MeshSpec(TRIANGULAR, 1.0 / 32.0, 1.0, 0.5), []), EPS)


def test_good_subgraphs_scale_checks(mesh32):
	g = build_box_graph(site_config(mesh32, []), EPS)
	with pytest.raises(ParameterError):
		good_subgraphs(g, 0.3)
	assert good_subgraphs(g, DELTA) == []
	assert not is_good(g, [], DELTA)
	# a small complete set fails the diameter condition
	assert not is_good(g, [(0, 0), (1, 0)], DELTA)


def test_events_hold_without_red_clusters(mesh32):
	blue = site_config(mesh32, [])
	events = detect_events(blue, EPS, DELTA)
	assert (events.nc, events.na1, events.na2, events.e) == (True, True, True, True)
	report = verify_correspondence(blue, EPS, DELTA)
	assert report.status == "passed"
	assert (report.n_good, report.n_clusters) == (0, 0)


def test_bar_ends_break_na1(mesh32):
	# at either tip: a red arm along the bar, blue above and below it in the half-plane
	report = verify_correspondence(_bar(mesh32, 0.5), EPS, DELTA)
	assert not report.events.na1
	assert report.status == "skipped"
	assert report.n_good == 0
	assert report.to_json()["events"]["e"] is False


def test_good_subgraph_bound_is_checked_without_nc(monkeypatch, mesh32):
	config = _bar(mesh32, 0.5)
	monkeypatch.setattr(boxapprox, "detect_events", lambda *args: ApproxEvents(nc=False, na1=True, na2=True))
	too_many = [GoodSubgraph(EPS, ((0, 0),))] * (32 * 27 * 27 + 1)
	monkeypatch.setattr(boxapprox, "good_subgraphs", lambda g, delta: too_many)
	with pytest.raises(AcceptanceError):
		verify_correspondence(config, EPS, DELTA)
	monkeypatch.setattr(boxapprox, "good_subgraphs", lambda g, delta: too_many[:3])
	report = verify_correspondence(config, EPS, DELTA)
	assert (report.status, report.n_good) == ("skipped", 3)
	assert report.leftmost_disjoint is True


def test_correspondence_passes_on_matching_good_subgraphs(monkeypatch, mesh32):
	config = _bar(mesh32, 0.5)
	monkeypatch.setattr(boxapprox, "detect_events", lambda *args: ApproxEvents(nc=True, na1=True, na2=True))
	monkeypatch.setattr(boxapprox, "good_subgraphs", lambda g, delta: [k_eps(c, g.eps) for c in clusters_in_domain(g.clusters, UNIT, delta)])
	report = verify_correspondence(config, EPS, DELTA)
	assert report.status == "passed"
	assert report.n_good == report.n_clusters == 1
	assert report.n_good <= 32.0 / EPS ** 2
	assert report.gap_violations == []
	assert report.to_json()["leftmost_disjoint"] is True
	# a good subgraph with no cluster behind it is a counterexample
	monkeypatch.setattr(boxapprox, "good_subgraphs", lambda g, delta: [GoodSubgraph(EPS, ((0, 5), (1, 5)))])
	report = verify_correspondence(config, EPS, DELTA)
	assert report.status == "failed"
	assert {c["kind"] for c in report.counterexamples} == {"good-without-unique-cluster", "cluster-not-good"}


def _synthetic_graph(eps: float, cluster_cells: dict) -> BoxGraph:
	config = site_config(MeshSpec(TRIANGULAR, 1.0 / 16.0, 1.25, 0.5), [])
	box_clusters: dict = {}
	for i, cells in cluster_cells.items():
		for c in cells:
			box_clusters.setdefault(c, set()).add(i)
	return BoxGraph(
		config, find_clusters(config), eps, cell_radius(eps),
		{c: frozenset(s) for c, s in box_clusters.items()},
		{i: frozenset(s) for i, s in cluster_cells.items()},
	)


def test_good_subgraphs_match_subset_enumeration(monkeypatch):
	monkeypatch.setattr(boxapprox, "_crossing_condition", lambda g, h: True)
	eps, delta = 0.09, 0.95
	# two overlapping bars, neither wide enough alone, plus a cluster bridging their far ends
	g = _synthetic_graph(eps, {
		0: [(x, 0) for x in range(-5, 5)],
		1: [(x, 0) for x in range(-4, 6)],
		2: [(-5, 0), (5, 0), (0, 3)],
	})
	cells = sorted(g.box_clusters) + [(0, 1), (0, 2)]
	assert len(cells) == 14
	brute = {frozenset(s) for k in range(1, len(cells) + 1) for s in combinations(cells, k) if is_good(g, s, delta)}
	assert brute == {frozenset((x, 0) for x in range(-5, 6)), frozenset({(-5, 0), (5, 0), (0, 3)})}
	assert {h.key for h in good_subgraphs(g, delta)} == brute


def test_candidate_cliques_follow_red_components(mesh32):
	g = build_box_graph(_bar(mesh32, 0.5), EPS)
	assert len(g.red_components()) == 1
	assert candidate_cliques(g, DELTA) == [frozenset(g.box_clusters)]
	short = build_box_graph(_bar(mesh32, 0.24), EPS)
	assert candidate_cliques(short, DELTA) == []
	assert build_box_graph(site_config(mesh32, []), EPS).red_components() == []


def test_cluster_diagnostics(mesh32):
	cs = find_clusters(_bar(mesh32, 0.5))
	assert diameter_gap_violations(cs, EPS, DELTA) == []
	assert leftmost_boxes_disjoint(cs, EPS, DELTA)
	short = find_clusters(_bar(mesh32, 0.24))
	# diameter 0.4375 lies between delta - 2 eps and delta
	assert diameter_gap_violations(short, EPS, DELTA) == [short.roots[0]]


def test_refinement_index_validates_delta(mesh32):
	with pytest.raises(ParameterError):
		refinement_index(site_config(mesh32, []), 1.5)


def test_refinement_index_is_truncated_on_coarse_meshes(mesh32, caplog):
	with caplog.at_level(logging.WARNING, logger="critical_clusters.boxapprox"):
		assert refinement_index(site_config(mesh32, []), DELTA) is None
	assert "truncated" in caplog.text


@pytest.mark.parametrize(
	"failing, want",
	[((), 0), ((3,), 4), ((3, 4), 5), ((4,), 5), ((5,), None)],
)
def test_refinement_index_scans_from_the_finest_level(monkeypatch, mesh32, failing, want):
	monkeypatch.setattr(boxapprox, "refinement_levels", lambda eta, delta: (3, 5))

	def events(config, eps, delta, clusters):
		bad = any(abs(eps - 3.0 ** -n) < 1e-12 for n in failing)
		return ApproxEvents(nc=not bad, na1=True, na2=True)

	monkeypatch.setattr(boxapprox, "detect_events", events)
	assert refinement_index(site_config(mesh32, []), DELTA) == want


def test_refinement_tail():
	tail = refinement_tail([0, 4, None, 5], 3, 5)
	assert tail == {3: 0.75, 4: 0.5, 5: 0.25}
	assert refinement_tail([0, 0], 3, 3) == {3: 0.0}
	with pytest.raises(ParameterError):
		refinement_tail([], 3, 5)

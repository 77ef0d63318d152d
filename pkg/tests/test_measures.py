from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import pytest

from conftest import site_config
from critical_clusters.clusters import clusters_in_domain, find_clusters
from critical_clusters.errors import ConfigurationError, DomainError, ParameterError
from critical_clusters.geometry import Box
from critical_clusters.lattice import MeshSpec, Normalizer, sample_bernoulli
from critical_clusters.measures import (
	bin_measure,
	box_sum_measure,
	counting_measure,
	gap_frequency,
	largest_masses,
	one_arm_measure,
	prokhorov_exact,
	prokhorov_upper,
	recovered_measure,
	scaling_covariance_distance,
	tv_distance,
)

NORM = Normalizer(0.125, 0.5, 0.01)
UNIT = Box(-1.0, 1.0, -1.0, 1.0)


@dataclass
class Atoms:
	"""Atomic measure with arbitrary masses."""

	positions: np.ndarray
	masses: np.ndarray


def _atoms(points, masses) -> Atoms:
	return Atoms(np.asarray(points, dtype=float).reshape(-1, 2), np.asarray(masses, dtype=float))


def _prokhorov_brute(m1, m2) -> float:
	"""Bisection on eps with every subset of atoms checked in both directions."""
	p1, w1 = np.asarray(m1.positions), np.asarray(m1.masses)
	p2, w2 = np.asarray(m2.positions), np.asarray(m2.masses)

	def holds(eps: float) -> bool:
		for pa, wa, pb, wb in ((p1, w1, p2, w2), (p2, w2, p1, w1)):
			d = np.max(np.abs(pa[:, None, :] - pb[None, :, :]), axis=2)
			for r in range(1, len(pa) + 1):
				for S in itertools.combinations(range(len(pa)), r):
					near = np.any(d[list(S)] <= eps + 1e-12, axis=0)
					if wa[list(S)].sum() > wb[near].sum() + eps + 1e-12:
						return False
		return True

	lo, hi = 0.0, max(w1.sum(), w2.sum()) + 1.0
	for _ in range(60):
		mid = 0.5 * (lo + hi)
		if holds(mid):
			hi = mid
		else:
			lo = mid
	return hi


def test_counting_measure_mass():
	pts = np.zeros((16, 2))
	mu = counting_measure(pts, NORM)
	assert mu.n_atoms == 16
	assert mu.total_mass == pytest.approx(0.5)
	assert mu.masses.tolist() == [0.125 ** 2 / 0.5] * 16
	lo, hi = mu.mass_ci
	assert lo < mu.total_mass < hi
	assert counting_measure(np.zeros((0, 2)), NORM).total_mass == 0.0
	with pytest.raises(ConfigurationError):
		counting_measure(pts, None)


def test_counting_measure_is_additive():
	rng = np.random.default_rng(2)
	pts = rng.uniform(-1, 1, size=(40, 2))
	mu = counting_measure(pts, NORM)
	left = Box(-1.0, 0.0, -1.0, 1.0)
	right = Box(1e-6, 1.0, -1.0, 1.0)
	assert mu.mass_in(left) + mu.mass_in(right) == pytest.approx(mu.total_mass)
	assert mu.integrate(lambda x, y: np.ones_like(x)) == pytest.approx(mu.total_mass)


def test_one_arm_measure_monochrome(small_triangular):
	lat = small_triangular.lattice
	red = site_config(small_triangular, range(lat.n_vertices))
	mu = one_arm_measure(red, (0.25, 0.0), 0.25, 0.75, NORM)
	want = lat.vertices_in(Box.centered((0.25, 0.0), 0.25), half_open=True).size
	assert mu.n_atoms == want
	blue = site_config(small_triangular, [])
	assert one_arm_measure(blue, (0.0, 0.0), 0.25, 0.75, NORM).n_atoms == 0
	with pytest.raises(ParameterError):
		one_arm_measure(red, (0.0, 0.0), 0.75, 0.25, NORM)
	with pytest.raises(DomainError):
		one_arm_measure(red, (1.0, 0.0), 0.25, 0.75, NORM)


def test_one_arm_measure_atoms_sit_in_half_open_box(small_triangular):
	config = sample_bernoulli(small_triangular.at(4))
	mu = one_arm_measure(config, (0.0, 0.0), 0.5, 1.0, NORM)
	box = Box.centered((0.0, 0.0), 0.5)
	assert np.all(box.contains_half_open(mu.positions[:, 0], mu.positions[:, 1]))
	assert np.all(config.colors[[config.lattice.vertices_in(Box(x, x, y, y))[0] for x, y in mu.positions]])


def test_box_sum_equals_counting_measure_below_the_mesh(small_triangular):
	# 3^-3 < eta and 2 * 3^-3 < min spacing: one vertex per inner box, all from the cluster
	delta = 0.5
	for i in range(40):
		config = sample_bernoulli(small_triangular.at(i))
		big = clusters_in_domain(find_clusters(config), UNIT, delta)
		if len(big):
			break
	else:
		pytest.skip("no macroscopic cluster in the first samples")
	c = big[0]
	mu = counting_measure(c, NORM)
	approx = box_sum_measure(config, c, 3, delta, NORM)
	assert approx.n_atoms == c.size
	assert tv_distance(mu, approx) == pytest.approx(0.0, abs=1e-12)


def test_box_sum_mass_is_monotone_in_level():
	spec = MeshSpec("triangular-site", 1.0 / 32.0, 1.5, 0.5, seed=8)
	delta = 0.5
	for i in range(40):
		config = sample_bernoulli(spec.at(i))
		big = clusters_in_domain(find_clusters(config), UNIT, delta)
		if len(big):
			break
	else:
		pytest.skip("no macroscopic cluster in the first samples")
	c = big[0]
	m3 = box_sum_measure(config, c, 3, delta, NORM).total_mass
	m4 = box_sum_measure(config, c, 4, delta, NORM).total_mass
	assert m4 <= m3 + 1e-12
	assert m4 >= counting_measure(c, NORM).total_mass - 1e-12


def test_box_sum_rejects_coarse_levels(small_triangular):
	config = sample_bernoulli(small_triangular)
	with pytest.raises(ParameterError):
		box_sum_measure(config, np.zeros((1, 2)), 1, 0.5, NORM)
	assert box_sum_measure(config, np.zeros((0, 2)), 3, 0.5, NORM).total_mass == 0.0


def test_recovered_measure_on_a_point():
	psi = 0.25
	norm0 = Normalizer(0.5, 0.8)
	rec = recovered_measure(np.zeros((1, 2)), psi, norm0)
	assert rec.positions.tolist() == [[0.0, 0.0]]
	assert rec.total_mass == pytest.approx(4 * psi ** 2 / 0.8)
	assert recovered_measure(np.zeros((0, 2)), psi, norm0).total_mass == 0.0
	with pytest.raises(ConfigurationError):
		recovered_measure(np.zeros((1, 2)), psi, Normalizer(0.25, 0.8))
	with pytest.raises(ParameterError):
		recovered_measure(np.zeros((1, 2)), 0.5, Normalizer(1.0, 0.8))


def test_tv_distance():
	a = counting_measure([[0.0, 0.0], [0.5, 0.5]], NORM)
	b = counting_measure([[0.5, 0.5], [1.0, 1.0]], NORM)
	w = NORM.weight
	assert tv_distance(a, a) == 0.0
	assert tv_distance(a, b) == pytest.approx(2 * w)
	assert tv_distance(a, counting_measure(np.zeros((0, 2)), NORM)) == pytest.approx(2 * w)


def test_prokhorov_between_two_atoms():
	for d, w in [(0.3, 0.1), (0.05, 0.4), (0.2, 0.2)]:
		m1 = _atoms([[0.0, 0.0]], [w])
		m2 = _atoms([[d, -0.5 * d]], [w])
		assert prokhorov_exact(m1, m2) == pytest.approx(min(d, w))
		assert min(d, w) - 1e-12 <= prokhorov_upper(m1, m2, 0.01) <= min(d, w) + 0.02 + 1e-12


def test_prokhorov_matches_subset_enumeration():
	rng = np.random.default_rng(5)
	for _ in range(6):
		m1 = _atoms(rng.uniform(-0.5, 0.5, size=(3, 2)), rng.uniform(0.05, 0.3, size=3))
		m2 = _atoms(rng.uniform(-0.5, 0.5, size=(3, 2)), rng.uniform(0.05, 0.3, size=3))
		assert prokhorov_exact(m1, m2) == pytest.approx(_prokhorov_brute(m1, m2), abs=1e-6)


def test_prokhorov_against_empty_measure():
	m1 = _atoms([[0.0, 0.0], [1.0, 0.0]], [0.2, 0.3])
	assert prokhorov_exact(m1, _atoms(np.zeros((0, 2)), [])) == pytest.approx(0.5)
	assert prokhorov_exact(m1, m1) == 0.0


def test_bin_measure_keeps_mass():
	m = counting_measure([[0.01, 0.01], [0.02, 0.03], [0.6, -0.4]], NORM)
	binned = bin_measure(m, 0.1)
	assert binned.total_mass == pytest.approx(m.total_mass)
	assert len(binned.bins) == 2
	with pytest.raises(ParameterError):
		bin_measure(m, 0.0)


def test_largest_masses_pad_with_zero():
	pieces = [np.zeros((4, 2)), np.zeros((2, 2))]
	assert largest_masses(pieces, NORM, 3) == pytest.approx([4 * NORM.weight, 2 * NORM.weight, 0.0])


def test_gap_frequency():
	assert gap_frequency([1.0, 2.0, 3.0, 4.0], [0.99, 1.0, 2.995, 3.0], 0.02) == 0.5
	with pytest.raises(ParameterError):
		gap_frequency([1.0], [1.0, 2.0], 0.1)


def test_scaling_covariance_distance():
	fine = np.linspace(0.1, 1.0, 50)
	r, alpha1 = 2.0, 5.0 / 48.0
	coarse = fine * r ** (2 - alpha1)
	# equal up to rounding of the rescaled masses
	assert scaling_covariance_distance(fine, coarse, r, alpha1) <= 1 / 50 + 1e-12
	assert scaling_covariance_distance(fine, fine, r, alpha1) > 0.5
	assert math.isfinite(scaling_covariance_distance(fine, coarse[:10], r, alpha1))

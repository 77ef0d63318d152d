from __future__ import annotations

import math

import numpy as np
import pytest

from critical_clusters.clusters import find_clusters
from critical_clusters.errors import ConfigurationError, DomainError, ParameterError
from critical_clusters.geometry import SQUARE, Box
from critical_clusters.ising import (
	TestFunction,
	atom_weight,
	cutoff_magnetization,
	indicator,
	magnetization,
	magnetization_sample,
	mesh_stability_scan,
	resign,
	two_point,
)
from critical_clusters.lattice import P_SELF_DUAL, MeshSpec, Normalizer, sample_bernoulli, sample_fk_ising


@pytest.fixture
def fk_sample(small_square):
	return sample_fk_ising(small_square, sweeps=15)


def test_bump_function_shape():
	f = TestFunction("smooth-bump", Box.centered((0.5, 0.0), 0.25), amplitude=2.0)
	assert float(f(0.5, 0.0)) == pytest.approx(2.0)
	assert float(f(0.75, 0.0)) == 0.0
	assert f(np.array([0.6, 2.0]), np.array([0.1, 0.0])).tolist()[1] == 0.0
	assert 0.0 < float(f(0.6, 0.1)) < 2.0
	assert f.sup_norm == 2.0
	g = indicator(0.5)
	assert g(np.array([0.5, 0.51]), np.array([0.0, 0.0])).tolist() == [1.0, 0.0]
	assert g.id == "indicator-box[-0.5,0.5]x[-0.5,0.5]*1"


def test_test_function_validation():
	with pytest.raises(ParameterError):
		TestFunction("gaussian", Box.centered((0.0, 0.0), 0.5))
	with pytest.raises(ParameterError):
		TestFunction("indicator-box", Box(0.0, 0.0, -1.0, 1.0))


def test_field_is_the_sum_over_all_clusters(fk_sample):
	f = TestFunction("smooth-bump", Box.centered((0.0, 0.0), 1.0))
	full = magnetization(fk_sample, f)
	eta = fk_sample.spec.eta
	assert cutoff_magnetization(fk_sample, f, eta / 2.0, "eta-power") == pytest.approx(full, abs=1e-12)
	assert cutoff_magnetization(fk_sample, f, eta, "eta-power") == pytest.approx(full, abs=1e-12)
	assert cutoff_magnetization(fk_sample, f, 10.0, "eta-power") == 0.0


def test_field_scaling(fk_sample):
	f = indicator(1.0)
	pos = fk_sample.lattice.positions
	inside = f(pos[:, 0], pos[:, 1]) > 0
	want = fk_sample.spec.eta ** (15.0 / 8.0) * fk_sample.spins[inside].sum()
	assert magnetization(fk_sample, f) == pytest.approx(want)


def test_pi1_convention_needs_normalizer(fk_sample):
	f = indicator(1.0)
	with pytest.raises(ConfigurationError):
		cutoff_magnetization(fk_sample, f, 0.5, "pi1")
	with pytest.raises(ParameterError):
		cutoff_magnetization(fk_sample, f, 0.5, "volume")
	with pytest.raises(ParameterError):
		cutoff_magnetization(fk_sample, f, 0.0, "eta-power")
	norm = Normalizer(fk_sample.spec.eta, 0.4)
	assert atom_weight(fk_sample.spec.eta, "pi1", norm) == pytest.approx(fk_sample.spec.eta ** 2 / 0.4)
	assert math.isfinite(cutoff_magnetization(fk_sample, f, 0.5, "pi1", norm))


def test_field_rejects_wrong_inputs(fk_sample, small_triangular):
	with pytest.raises(DomainError):
		magnetization(fk_sample, indicator(2.0))
	with pytest.raises(ConfigurationError):
		magnetization(sample_bernoulli(small_triangular), indicator(0.5))


def test_resign_keeps_bonds(fk_sample):
	cs = find_clusters(fk_sample)
	a = resign(fk_sample, 41, cs)
	b = resign(fk_sample, 41)
	np.testing.assert_array_equal(a.bonds, fk_sample.bonds)
	np.testing.assert_array_equal(a.spins, b.spins)
	assert a.sign_seed == 41
	a.check_edwards_sokal()
	# a spin flip of every cluster negates the field
	flipped = type(a)(a.spec, a.bonds, -a.spins, a.sweeps, a.sign_seed)
	f = indicator(1.0)
	assert magnetization(flipped, f) == pytest.approx(-magnetization(a, f))


def test_magnetization_sample_records(fk_sample):
	f = indicator(1.0)
	eta = fk_sample.spec.eta
	s = magnetization_sample(fk_sample, f, [0.25, eta / 2.0, 10.0], convention="eta-power", sign_seed=99)
	assert s.sign_seed == 99
	assert s.phi_cutoff[eta / 2.0] == pytest.approx(s.phi_full, abs=1e-12)
	assert s.phi_cutoff[10.0] == 0.0
	rows = s.rows()
	assert [r["eps"] for r in rows] == sorted([0.25, eta / 2.0, 10.0])
	assert all(r["f_id"] == f.id for r in rows)
	cs = find_clusters(fk_sample)
	assert s.signs.shape == (cs.n_clusters, 2)
	assert set(np.unique(s.signs[:, 1])) <= {-1, 1}


def test_full_and_cutoff_fields_share_the_convention(fk_sample):
	f = indicator(1.0)
	eta = fk_sample.spec.eta
	norm = Normalizer(eta, 0.4)
	s = magnetization_sample(fk_sample, f, [eta, 0.5], convention="pi1", norm=norm)
	# every cluster kept: the spin sum rescaled from eta^(15/8) to eta^2 / pi1
	want = magnetization(fk_sample, f) * (eta ** 2 / 0.4) / eta ** (15.0 / 8.0)
	assert s.phi_full == pytest.approx(want, abs=1e-12)
	assert s.phi_cutoff[eta] == pytest.approx(s.phi_full, abs=1e-12)
	assert s.phi_cutoff[0.5] == pytest.approx(cutoff_magnetization(fk_sample, f, 0.5, "pi1", norm), abs=1e-12)


def test_two_point_at_the_origin_is_one():
	spec = MeshSpec(SQUARE, 0.25, 1.0, P_SELF_DUAL, seed=7)
	res = two_point(spec, [0.0, 0.25, 0.5], n_samples=3, sweeps=5)
	assert res.rows[0]["estimate"] == 1.0
	assert res.rows[0]["hits"] == 3
	assert all(0.0 <= r["estimate"] <= 1.0 for r in res.rows)
	assert res.fit is None and res.decay_exponent is None
	with pytest.raises(DomainError):
		two_point(spec, [2.0], n_samples=1, sweeps=5)
	with pytest.raises(ParameterError):
		two_point(spec, [0.25], n_samples=0)


def test_mesh_scan_gives_repeated_meshes_fresh_samples():
	scan = mesh_stability_scan(indicator(0.5), [0.25, 0.25], n_samples=6, k=1.0, seed=3, sweeps=5)
	assert scan.etas == [0.25, 0.25]
	assert [x.size for x in scan.samples] == [6, 6]
	assert not np.array_equal(scan.samples[0], scan.samples[1])
	assert list(scan.ks) == [(0, 1)]
	assert 0.0 <= scan.ks[(0, 1)] <= 1.0
	assert scan.rows()[0]["eta_1"] == 0.25
	with pytest.raises(DomainError):
		mesh_stability_scan(indicator(1.5), [0.25], n_samples=1, k=1.0)
	with pytest.raises(ParameterError):
		mesh_stability_scan(indicator(0.5), [0.25], n_samples=0, k=1.0)

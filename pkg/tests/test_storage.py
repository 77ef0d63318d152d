from __future__ import annotations

import json
import struct

import numpy as np
import pandas as pd
import pytest

from critical_clusters.clusters import clusters_in_domain, find_clusters
from critical_clusters.errors import ConfigurationError
from critical_clusters.geometry import Box
from critical_clusters.lattice import FkConfig, Normalizer, SiteConfig, sample_bernoulli, sample_fk_ising
from critical_clusters.measures import counting_measure
from critical_clusters.storage import (
	FIELDS,
	HEADER,
	MAGIC,
	export_collection,
	export_measure,
	load_configuration,
	save_configuration,
)


def test_site_configuration_survives_a_file(tmp_path, small_triangular):
	config = sample_bernoulli(small_triangular.at(6))
	path = save_configuration(config, tmp_path / "site.ccls")
	back = load_configuration(path)
	assert isinstance(back, SiteConfig)
	assert back.spec == config.spec
	np.testing.assert_array_equal(back.colors, config.colors)
	n = config.lattice.n_vertices
	assert path.stat().st_size == HEADER.size + FIELDS.size + (n + 7) // 8


def test_fk_configuration_keeps_chain_metadata(tmp_path, small_square):
	config = sample_fk_ising(small_square.at(2), sweeps=7, sign_seed=31)
	back = load_configuration(save_configuration(config, tmp_path / "fk.ccls"))
	assert isinstance(back, FkConfig)
	assert (back.sweeps, back.sign_seed, back.spec.sample_index) == (7, 31, 2)
	np.testing.assert_array_equal(back.bonds, config.bonds)
	np.testing.assert_array_equal(back.spins, config.spins)
	back.check_edwards_sokal()


def _corrupt(path, offset: int, data: bytes):
	raw = bytearray(path.read_bytes())
	raw[offset:offset + len(data)] = data
	path.write_bytes(bytes(raw))


def test_load_rejects_damaged_files(tmp_path, tiny_triangular):
	config = sample_bernoulli(tiny_triangular)
	good = save_configuration(config, tmp_path / "good.ccls")
	raw = good.read_bytes()
	cases = {}
	cases["short"] = raw[:20]
	cases["magic"] = b"XXXX" + raw[4:]
	cases["version"] = raw[:4] + struct.pack("<H", 9) + raw[6:]
	cases["kind"] = raw[:6] + bytes([7]) + raw[7:]
	cases["payload"] = raw + b"\x00"
	for name, data in cases.items():
		p = tmp_path / f"{name}.ccls"
		p.write_bytes(data)
		with pytest.raises(ConfigurationError):
			load_configuration(p)
	with pytest.raises(ConfigurationError):
		load_configuration(tmp_path / "missing.ccls")
	assert raw[:4] == MAGIC


def test_export_collection(tmp_path, small_triangular):
	config = sample_bernoulli(small_triangular.at(1))
	coll = clusters_in_domain(find_clusters(config), Box(-1.0, 1.0, -1.0, 1.0), 0.0)
	path = export_collection(coll, tmp_path / "clusters.json", max_vertices=3)
	data = json.loads(path.read_text())
	assert data["delta"] == 0.0
	assert data["domain"] == [-1.0, 1.0, -1.0, 1.0]
	assert len(data["clusters"]) == len(coll)
	for record, c in zip(data["clusters"], coll):
		assert record["size"] == c.size
		assert ("vertices" in record) == (c.size <= 3)


def test_export_measure_writes_csv_and_sidecar(tmp_path):
	mu = counting_measure([[0.0, 0.0], [0.25, -0.5]], Normalizer(0.125, 0.5, 0.01))
	path = export_measure(mu, tmp_path / "measure.csv")
	df = pd.read_csv(path)
	assert list(df.columns) == ["x", "y", "weight"]
	assert df["weight"].tolist() == pytest.approx([0.125 ** 2 / 0.5] * 2)
	meta = json.loads((tmp_path / "measure.json").read_text())
	assert meta["n_atoms"] == 2
	assert meta["total_mass"] == pytest.approx(mu.total_mass)

	loose = counting_measure([[0.0, 0.0]], Normalizer(0.125, 0.01, 0.05))
	export_measure(loose, tmp_path / "loose.csv", sidecar=tmp_path / "meta.json")
	assert json.loads((tmp_path / "meta.json").read_text())["total_mass_ci"][1] is None

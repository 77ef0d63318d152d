"""Binary configuration files and JSON / CSV exports of clusters and measures.

Configuration layout (little-endian)::

	0   4s  magic b"CCLS"
	4   H   format version
	6   B   kind code (0 triangular-site, 1 square-fk)
	7   9x  padding to 16 bytes
	16  d   eta
	24  d   k
	32  d   p
	40  Q   seed
	48  Q   sample_index
	56  I   sweeps
	60  Q   sign_seed
	68  ... np.packbits payload: colours, or bonds followed by (spins > 0)
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from .errors import ConfigurationError
from .geometry import SQUARE, TRIANGULAR
from .lattice import Configuration, FkConfig, MeshSpec, SiteConfig


logger = logging.getLogger(__name__)

MAGIC = b"CCLS"
FORMAT_VERSION = 1
KIND_CODES = {TRIANGULAR: 0, SQUARE: 1}
HEADER = struct.Struct("<4sHB9x")
FIELDS = struct.Struct("<dddQQIQ")
DEFAULT_MAX_VERTICES = 10_000
MEASURE_COLUMNS = ["x", "y", "weight"]


def _payload_bits(config: Configuration) -> np.ndarray:
	if isinstance(config, SiteConfig):
		return config.colors
	return np.concatenate([config.bonds, config.spins > 0])


def save_configuration(config: Configuration, path: Union[str, Path]) -> Path:
	path = Path(path)
	spec = config.spec
	sweeps = getattr(config, "sweeps", 0)
	sign_seed = getattr(config, "sign_seed", 0)
	head = HEADER.pack(MAGIC, FORMAT_VERSION, KIND_CODES[spec.kind])
	fields = FIELDS.pack(float(spec.eta), float(spec.k), float(spec.p), int(spec.seed), int(spec.sample_index), int(sweeps), int(sign_seed))
	path.write_bytes(head + fields + np.packbits(_payload_bits(config)).tobytes())
	logger.debug("saved %s sample %d to %s", spec.key, spec.sample_index, path)
	return path


def load_configuration(path: Union[str, Path]) -> Configuration:
	path = Path(path)
	try:
		raw = path.read_bytes()
	except OSError as exc:
		raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
	if len(raw) < HEADER.size + FIELDS.size:
		raise ConfigurationError(f"{path} is too short to be a configuration file")
	magic, version, code = HEADER.unpack_from(raw, 0)
	if magic != MAGIC:
		raise ConfigurationError(f"{path} is not a configuration file (magic {magic!r})")
	if version != FORMAT_VERSION:
		raise ConfigurationError(f"{path} has format version {version}, expected {FORMAT_VERSION}")
	kinds = {v: k for k, v in KIND_CODES.items()}
	if code not in kinds:
		raise ConfigurationError(f"{path} has unknown kind code {code}")
	eta, k, p, seed, sample_index, sweeps, sign_seed = FIELDS.unpack_from(raw, HEADER.size)
	spec = MeshSpec(kinds[code], eta, k, p, seed, sample_index)
	lat = spec.lattice
	n_bits = lat.n_vertices if code == 0 else lat.n_edges + lat.n_vertices
	payload = np.frombuffer(raw, dtype=np.uint8, offset=HEADER.size + FIELDS.size)
	if payload.size != (n_bits + 7) // 8:
		raise ConfigurationError(f"{path} carries {payload.size} payload bytes, expected {(n_bits + 7) // 8}")
	bits = np.unpackbits(payload, count=n_bits).astype(bool)
	if code == 0:
		return SiteConfig(spec, bits)
	spins = np.where(bits[lat.n_edges:], 1, -1).astype(np.int8)
	return FkConfig(spec, bits[:lat.n_edges], spins, sweeps=int(sweeps), sign_seed=int(sign_seed))


def _cluster_json(c, max_vertices: int) -> dict:
	b = c.bbox
	out = {"id": int(c.id), "size": c.size, "diameter": c.diameter, "bbox": b.as_list()}
	if c.size <= max_vertices:
		out["vertices"] = c.vertices.tolist()
		out["positions"] = c.positions.tolist()
	return out


def export_collection(collection, path: Union[str, Path], max_vertices: int = DEFAULT_MAX_VERTICES) -> Path:
	"""One JSON record per member; vertex lists are left out above `max_vertices`."""
	path = Path(path)
	data = {
		"domain": collection.domain.as_list(),
		"delta": collection.delta,
		"clusters": [_cluster_json(c, int(max_vertices)) for c in collection],
	}
	path.write_text(json.dumps(data, indent=2) + "\n")
	return path


def export_measure(measure, path: Union[str, Path], sidecar: Optional[Path] = None) -> Path:
	"""CSV of atoms ``x, y, weight`` plus a JSON sidecar with the normalizer's provenance."""
	path = Path(path)
	pos = np.asarray(measure.positions, dtype=float).reshape(-1, 2)
	df = pd.DataFrame({"x": pos[:, 0], "y": pos[:, 1], "weight": measure.masses})
	df = df.reindex(columns=MEASURE_COLUMNS)
	df.to_csv(path, index=False)
	lo, hi = measure.mass_ci
	meta = {
		"eta": measure.eta,
		"pi1_hat": measure.pi1_hat,
		"ci_halfwidth": measure.ci_halfwidth,
		"n_atoms": measure.n_atoms,
		"total_mass": measure.total_mass,
		"total_mass_ci": [lo, hi if np.isfinite(hi) else None],
	}
	side = Path(sidecar) if sidecar is not None else path.with_suffix(".json")
	side.write_text(json.dumps(meta, indent=2) + "\n")
	return path

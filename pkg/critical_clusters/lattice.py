"""Mesh specifications, configurations and samplers for both models."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from .errors import AcceptanceError, ConfigurationError, DomainError, ParameterError
from .geometry import KINDS, SQUARE, TRIANGULAR, Box, Lattice, lattice_for
from .rng import STREAM_SIGNS, STREAM_SITES, STREAM_SWEEPS, generator
from .stats import wilson_interval
from .unionfind import label_edges, swendsen_wang_sweep


logger = logging.getLogger(__name__)

P_SELF_DUAL = math.sqrt(2.0) / (1.0 + math.sqrt(2.0))
DEFAULT_BURN_IN = 200
DEFAULT_GAP = 10


@dataclass(frozen=True)
class MeshSpec:
	kind: str
	eta: float
	k: float
	p: float
	seed: int = 0
	sample_index: int = 0

	def __post_init__(self) -> None:
		if self.kind not in KINDS:
			raise ConfigurationError(f"kind must be one of {KINDS}, got {self.kind!r}")
		if not (self.eta > 0 and self.eta < self.k):
			raise ConfigurationError(f"invalid mesh: need 0 < eta < k, got eta={self.eta}, k={self.k}")
		if not (0.0 <= self.p <= 1.0):
			raise ConfigurationError(f"p must lie in [0, 1], got {self.p}")
		if not (0 <= int(self.seed) < 2 ** 64):
			raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
		if int(self.sample_index) < 0:
			raise ConfigurationError(f"sample_index must be non-negative, got {self.sample_index}")

	@property
	def lattice(self) -> Lattice:
		return lattice_for(self.kind, float(self.eta), float(self.k))

	@property
	def region(self) -> Box:
		return Box(-self.k, self.k, -self.k, self.k)

	@property
	def key(self) -> str:
		return normalization_key(self.kind, self.eta)

	def at(self, sample_index: int) -> "MeshSpec":
		return replace(self, sample_index=int(sample_index))


@dataclass(eq=False)
class SiteConfig:
	"""Site colouring of the triangular lattice; True is red."""

	spec: MeshSpec
	colors: np.ndarray

	def __post_init__(self) -> None:
		self.colors = np.asarray(self.colors, dtype=bool)
		if self.colors.shape != (self.lattice.n_vertices,):
			raise ConfigurationError(f"expected {self.lattice.n_vertices} site colours, got {self.colors.shape}")

	@property
	def lattice(self) -> Lattice:
		return self.spec.lattice

	@property
	def occupied(self) -> np.ndarray:
		return self.colors

	@property
	def open_edges(self) -> np.ndarray:
		e = self.lattice.edges
		return self.colors[e[:, 0]] & self.colors[e[:, 1]]

	@cached_property
	def layers(self):
		from .connectivity import site_layers
		return site_layers(self)


@dataclass(eq=False)
class FkConfig:
	"""Random-cluster bonds on the square lattice with Edwards–Sokal spins."""

	spec: MeshSpec
	bonds: np.ndarray
	spins: np.ndarray
	sweeps: int = 0
	sign_seed: int = 0

	def __post_init__(self) -> None:
		lat = self.lattice
		self.bonds = np.asarray(self.bonds, dtype=bool)
		self.spins = np.asarray(self.spins, dtype=np.int8)
		if self.bonds.shape != (lat.n_edges,):
			raise ConfigurationError(f"expected {lat.n_edges} bonds, got {self.bonds.shape}")
		if self.spins.shape != (lat.n_vertices,):
			raise ConfigurationError(f"expected {lat.n_vertices} spins, got {self.spins.shape}")

	@property
	def lattice(self) -> Lattice:
		return self.spec.lattice

	@property
	def critical(self) -> bool:
		return abs(self.spec.p - P_SELF_DUAL) < 1e-12

	@property
	def occupied(self) -> np.ndarray:
		return np.ones(self.lattice.n_vertices, dtype=bool)

	@property
	def open_edges(self) -> np.ndarray:
		return self.bonds

	def bond_grids(self) -> Tuple[np.ndarray, np.ndarray]:
		"""Horizontal ``(ny, nx-1)`` and vertical ``(ny-1, nx)`` bond arrays."""
		ny, nx = self.lattice.shape
		n_h = ny * (nx - 1)
		return self.bonds[:n_h].reshape(ny, nx - 1), self.bonds[n_h:].reshape(ny - 1, nx)

	def check_edwards_sokal(self) -> None:
		e = self.lattice.edges[self.bonds]
		bad = int(np.count_nonzero(self.spins[e[:, 0]] != self.spins[e[:, 1]]))
		if bad:
			raise AcceptanceError(f"{bad} open bonds join opposite spins (sample {self.spec.sample_index})")

	@cached_property
	def layers(self):
		from .connectivity import fk_layers
		return fk_layers(self)


Configuration = Union[SiteConfig, FkConfig]


@dataclass(frozen=True)
class Normalizer:
	"""Provenance of the atom weight ``eta^2 / pi1_hat``."""

	eta: float
	pi1_hat: float
	ci_halfwidth: float = 0.0

	@property
	def weight(self) -> float:
		return self.eta ** 2 / self.pi1_hat


@dataclass
class Pi1Entry:
	hits: int
	n_samples: int

	@property
	def pi1_hat(self) -> float:
		return self.hits / self.n_samples

	@property
	def ci_halfwidth(self) -> float:
		return wilson_interval(self.hits, self.n_samples)[1]

	def merged(self, other: "Pi1Entry") -> "Pi1Entry":
		return Pi1Entry(self.hits + other.hits, self.n_samples + other.n_samples)


def normalization_key(kind: str, eta: float) -> str:
	return f"{kind}:{float(eta)!r}"


@dataclass
class NormalizationTable:
	entries: Dict[str, Pi1Entry] = field(default_factory=dict)

	def add(self, kind: str, eta: float, entry: Pi1Entry) -> None:
		key = normalization_key(kind, eta)
		prev = self.entries.get(key)
		self.entries[key] = entry if prev is None else prev.merged(entry)

	def merge(self, other: "NormalizationTable") -> "NormalizationTable":
		out = NormalizationTable(dict(self.entries))
		for key, entry in other.entries.items():
			prev = out.entries.get(key)
			out.entries[key] = entry if prev is None else prev.merged(entry)
		return out

	def lookup(self, kind: str, eta: float) -> Normalizer:
		key = normalization_key(kind, eta)
		entry = self.entries.get(key)
		if entry is None:
			raise ConfigurationError(f"no normalization entry for {key}")
		if entry.hits == 0:
			raise ConfigurationError(f"normalization entry {key} has pi1_hat = 0 and cannot normalize measures")
		return Normalizer(float(eta), entry.pi1_hat, entry.ci_halfwidth)

	def to_json(self) -> dict:
		return {
			key: {
				"pi1_hat": e.pi1_hat,
				"n_samples": e.n_samples,
				"hits": e.hits,
				"ci_halfwidth": e.ci_halfwidth,
				"usable": e.hits > 0,
			}
			for key, e in sorted(self.entries.items())
		}

	@classmethod
	def from_json(cls, data: dict) -> "NormalizationTable":
		entries = {}
		for key, raw in data.items():
			try:
				n = int(raw["n_samples"])
				hits = int(raw["hits"]) if "hits" in raw else int(round(float(raw["pi1_hat"]) * n))
			except (KeyError, TypeError, ValueError) as exc:
				raise ConfigurationError(f"malformed normalization entry {key!r}: {exc}") from exc
			if n <= 0 or not (0 <= hits <= n):
				raise ConfigurationError(f"normalization entry {key!r} is out of range")
			entries[key] = Pi1Entry(hits, n)
		return cls(entries)

	def save(self, path: Path) -> Path:
		path = Path(path)
		path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
		return path

	@classmethod
	def load(cls, path: Path) -> "NormalizationTable":
		try:
			data = json.loads(Path(path).read_text())
		except (OSError, json.JSONDecodeError) as exc:
			raise ConfigurationError(f"cannot read normalization table {path}: {exc}") from exc
		return cls.from_json(data)


def sample_bernoulli(spec: MeshSpec) -> SiteConfig:
	if spec.kind != TRIANGULAR:
		raise ConfigurationError(f"site sampling needs kind {TRIANGULAR!r}, got {spec.kind!r}")
	n = spec.lattice.n_vertices
	u = generator(spec.seed, spec.sample_index, STREAM_SITES).random(n)
	return SiteConfig(spec, u < spec.p)


def cluster_signs(roots: np.ndarray, sign_seed: int, sample_index: int) -> np.ndarray:
	"""Uniform +-1 per cluster, read off the cluster's smallest vertex id.

	`roots` maps each vertex to the smallest id in its cluster, so the sign of
	a cluster never depends on the order clusters are enumerated in.
	"""
	roots = np.asarray(roots, dtype=np.int64)
	u = generator(sign_seed, sample_index, STREAM_SIGNS).random(roots.shape[0])
	return np.where(u[roots] < 0.5, 1, -1).astype(np.int8)


def _fk_roots(lat: Lattice, bonds: np.ndarray) -> np.ndarray:
	e = lat.edges
	return label_edges(lat.n_vertices, e[:, 0], e[:, 1], bonds)


def _check_fk(spec: MeshSpec, sweeps: int) -> None:
	if spec.kind != SQUARE:
		raise ConfigurationError(f"FK sampling needs kind {SQUARE!r}, got {spec.kind!r}")
	if int(sweeps) <= 0:
		raise ParameterError("sweeps must be a positive integer")
	if abs(spec.p - P_SELF_DUAL) >= 1e-12:
		logger.warning("FK sampling at non-critical p=%s (self-dual point is %.12f)", spec.p, P_SELF_DUAL)


def sample_fk_ising(spec: MeshSpec, sweeps: int = DEFAULT_BURN_IN, sign_seed: Optional[int] = None) -> FkConfig:
	"""Free-boundary q=2 random-cluster sample after `sweeps` Swendsen–Wang sweeps.

	The chain starts from independent uniform spins keyed by
	``(seed, sample_index)``. The returned spins are an Edwards–Sokal colouring
	of the final bonds using the sign stream of `sign_seed` (default: the mesh
	seed).
	"""
	_check_fk(spec, sweeps)
	lat = spec.lattice
	e = lat.edges
	rng = generator(spec.seed, spec.sample_index, STREAM_SWEEPS)
	spins = np.where(rng.random(lat.n_vertices) < 0.5, 1, -1).astype(np.int8)
	bonds = np.zeros(lat.n_edges, dtype=bool)
	for _ in range(int(sweeps)):
		swendsen_wang_sweep(spins, e[:, 0], e[:, 1], spec.p, rng.random(lat.n_edges), rng.random(lat.n_vertices), bonds)
	seed = spec.seed if sign_seed is None else int(sign_seed)
	spins = cluster_signs(_fk_roots(lat, bonds), seed, spec.sample_index)
	config = FkConfig(spec, bonds, spins, sweeps=int(sweeps), sign_seed=seed)
	config.check_edwards_sokal()
	return config


@dataclass
class FkChainRun:
	configs: List[FkConfig]
	density_trace: np.ndarray


def iter_fk_chain(spec: MeshSpec, burn_in: int = DEFAULT_BURN_IN, gap: int = DEFAULT_GAP, count: int = 1) -> FkChainRun:
	"""`count` samples of one chain: after `burn_in` sweeps, then every `gap` sweeps.

	Sample ``j`` carries ``sample_index = spec.sample_index + j`` for its sign
	stream. The open-bond density after every sweep is recorded.
	"""
	_check_fk(spec, burn_in)
	if int(gap) <= 0 or int(count) <= 0:
		raise ParameterError("gap and count must be positive")
	lat = spec.lattice
	e = lat.edges
	rng = generator(spec.seed, spec.sample_index, STREAM_SWEEPS)
	spins = np.where(rng.random(lat.n_vertices) < 0.5, 1, -1).astype(np.int8)
	bonds = np.zeros(lat.n_edges, dtype=bool)
	total = int(burn_in) + int(gap) * (int(count) - 1)
	take = {int(burn_in) + int(gap) * j for j in range(int(count))}
	trace = np.empty(total, dtype=float)
	configs = []
	for sweep in range(1, total + 1):
		swendsen_wang_sweep(spins, e[:, 0], e[:, 1], spec.p, rng.random(lat.n_edges), rng.random(lat.n_vertices), bonds)
		trace[sweep - 1] = bonds.mean() if bonds.size else 0.0
		if sweep in take:
			j = len(configs)
			idx = spec.sample_index + j
			signs = cluster_signs(_fk_roots(lat, bonds), spec.seed, idx)
			config = FkConfig(spec.at(idx), bonds.copy(), signs, sweeps=sweep, sign_seed=spec.seed)
			config.check_edwards_sokal()
			configs.append(config)
	return FkChainRun(configs, trace)


def sample(spec: MeshSpec, sweeps: int = DEFAULT_BURN_IN) -> Configuration:
	if spec.kind == TRIANGULAR:
		return sample_bernoulli(spec)
	return sample_fk_ising(spec, sweeps)


def origin_connected(config: Configuration, radius: float = 1.0) -> bool:
	"""Whether the origin is joined to the boundary of ``Lambda_radius``."""
	from .connectivity import connected_to_boundary

	lat = config.lattice
	if not lat.region.contains_box(Box.centered((0.0, 0.0), radius)):
		raise DomainError(f"Lambda_{radius} is not inside the sampled region Lambda_{lat.k}")
	layer = config.layers[1]
	wl, reach = connected_to_boundary(layer, (0.0, 0.0), radius)
	hit = reach & (layer.index[wl.rows, wl.cols] == lat.origin)
	return bool(hit.any())


def estimate_pi1_normalization(spec: MeshSpec, n_samples: int, radius: float = 1.0, sweeps: int = DEFAULT_BURN_IN) -> Pi1Entry:
	"""Monte Carlo tally of ``P(0 <-> boundary of Lambda_radius)``.

	Samples use indices ``spec.sample_index .. spec.sample_index + n_samples - 1``.
	"""
	if int(n_samples) <= 0:
		raise ParameterError("n_samples must be positive")
	hits = 0
	for i in range(int(n_samples)):
		config = sample(spec.at(spec.sample_index + i), sweeps)
		hits += origin_connected(config, radius)
	entry = Pi1Entry(hits, int(n_samples))
	logger.debug("pi1 %s radius=%s: %d/%d", spec.key, radius, hits, n_samples)
	return entry

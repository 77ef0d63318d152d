"""Magnetization fields of critical FK-Ising samples."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .clusters import ClusterSet, find_clusters
from .errors import ConfigurationError, DomainError, FitError, ParameterError
from .geometry import SQUARE, Box
from .lattice import DEFAULT_BURN_IN, P_SELF_DUAL, FkConfig, MeshSpec, Normalizer, cluster_signs, sample_fk_ising
from .stats import FitResult, ks_distance, loglog_fit, wilson_interval


logger = logging.getLogger(__name__)

FIELD_EXPONENT = 15.0 / 8.0
CONVENTIONS = ("pi1", "eta-power")
FUNCTION_KINDS = ("indicator-box", "smooth-bump")


@dataclass(frozen=True)
class TestFunction:
	"""Bounded function with bounded support: a box indicator or a product bump."""

	__test__ = False

	kind: str
	support: Box
	amplitude: float = 1.0

	def __post_init__(self) -> None:
		if self.kind not in FUNCTION_KINDS:
			raise ParameterError(f"test function kind must be one of {FUNCTION_KINDS}, got {self.kind!r}")
		if not (self.support.width > 0 and self.support.height > 0):
			raise ParameterError("test function support must have positive area")

	@property
	def id(self) -> str:
		s = self.support
		return f"{self.kind}[{s.xmin:g},{s.xmax:g}]x[{s.ymin:g},{s.ymax:g}]*{self.amplitude:g}"

	@property
	def sup_norm(self) -> float:
		return abs(self.amplitude)

	def __call__(self, x, y) -> np.ndarray:
		x = np.asarray(x, dtype=float)
		y = np.asarray(y, dtype=float)
		if self.kind == "indicator-box":
			return self.amplitude * self.support.contains(x, y).astype(float)
		cx, cy = self.support.center
		u = (x - cx) / (0.5 * self.support.width)
		v = (y - cy) / (0.5 * self.support.height)
		inside = (np.abs(u) < 1) & (np.abs(v) < 1)
		out = np.zeros(np.broadcast(x, y).shape)
		uu, vv = u[inside], v[inside]
		out[inside] = np.exp(2.0 - 1.0 / (1.0 - uu * uu) - 1.0 / (1.0 - vv * vv))
		return self.amplitude * out


def indicator(L: float, amplitude: float = 1.0) -> TestFunction:
	return TestFunction("indicator-box", Box.centered((0.0, 0.0), L), amplitude)


def _check_support(config: FkConfig, f: TestFunction) -> None:
	if config.spec.kind != SQUARE:
		raise ConfigurationError("magnetization fields need a square-fk configuration")
	if not config.lattice.region.contains_box(f.support):
		raise DomainError(f"support {f.support.as_list()} escapes the sampled region")


def resign(config: FkConfig, sign_seed: int, clusters: Optional[ClusterSet] = None) -> FkConfig:
	"""Same bonds, fresh Edwards–Sokal signs from `sign_seed`."""
	cs = clusters if clusters is not None else find_clusters(config)
	spins = cluster_signs(cs.parent, sign_seed, config.spec.sample_index)
	out = replace(config, spins=spins, sign_seed=int(sign_seed))
	out.check_edwards_sokal()
	return out


def magnetization(config: FkConfig, f: TestFunction) -> float:
	"""``eta^(15/8) * sum_x S_x f(x)``."""
	_check_support(config, f)
	pos = config.lattice.positions
	eta = config.spec.eta
	return float(eta ** FIELD_EXPONENT * np.dot(config.spins.astype(float), f(pos[:, 0], pos[:, 1])))


def atom_weight(eta: float, convention: str, norm: Optional[Normalizer]) -> float:
	if convention == "eta-power":
		return eta ** FIELD_EXPONENT
	if convention != "pi1":
		raise ParameterError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
	if norm is None:
		raise ConfigurationError("the pi1 convention needs a normalization entry")
	weight = norm.weight
	logger.debug("cluster weight eta^2/pi1 = %.6g, eta^(15/8) = %.6g, ratio %.4f", weight, eta ** FIELD_EXPONENT, weight / eta ** FIELD_EXPONENT)
	return weight


def _cluster_integrals(config: FkConfig, cs: ClusterSet, f: TestFunction) -> np.ndarray:
	"""``sum_{v in C} f(v)`` per cluster."""
	pos = config.lattice.positions
	occ = np.flatnonzero(cs.labels >= 0)
	values = f(pos[occ, 0], pos[occ, 1])
	return np.bincount(cs.labels[occ], weights=values, minlength=cs.n_clusters)


def _cutoff_from(config: FkConfig, cs: ClusterSet, integrals: np.ndarray, eps: float, weight: float) -> float:
	if not eps > 0:
		raise ParameterError("eps must be positive")
	signs = config.spins[cs.roots].astype(float)
	# at scales up to the mesh every cluster, single vertices included, counts
	keep = np.ones(cs.n_clusters, dtype=bool) if eps <= config.spec.eta else cs.diameters >= eps
	return float(weight * np.dot(signs[keep], integrals[keep]))


def cutoff_magnetization(
	config: FkConfig,
	f: TestFunction,
	eps: float,
	convention: str = "pi1",
	norm: Optional[Normalizer] = None,
	clusters: Optional[ClusterSet] = None,
) -> float:
	"""Signed sum of ``<mu_C, f>`` over FK clusters of diameter at least `eps`."""
	_check_support(config, f)
	cs = clusters if clusters is not None else find_clusters(config)
	weight = atom_weight(config.spec.eta, convention, norm)
	return _cutoff_from(config, cs, _cluster_integrals(config, cs, f), eps, weight)


@dataclass
class MagnetizationSample:
	eta: float
	f_id: str
	phi_full: float
	phi_cutoff: Dict[float, float]
	signs: np.ndarray
	sample_index: int
	sign_seed: int

	def rows(self) -> List[dict]:
		return [
			{
				"eta": self.eta,
				"f_id": self.f_id,
				"eps": eps,
				"phi_cutoff": value,
				"phi_full": self.phi_full,
				"sample_index": self.sample_index,
				"sign_seed": self.sign_seed,
			}
			for eps, value in sorted(self.phi_cutoff.items())
		]


def magnetization_sample(
	config: FkConfig,
	f: TestFunction,
	cutoffs: Sequence[float],
	convention: str = "pi1",
	norm: Optional[Normalizer] = None,
	sign_seed: Optional[int] = None,
) -> MagnetizationSample:
	"""Full and cutoff fields of one sample sharing one cluster-sign record.

	Both fields carry the per-site weight of `convention`, so ``phi_full`` is
	the cutoff sum with every cluster kept and the two are comparable sample
	by sample.
	"""
	_check_support(config, f)
	cs = find_clusters(config)
	if sign_seed is not None and int(sign_seed) != config.sign_seed:
		config = resign(config, int(sign_seed), cs)
	eta = config.spec.eta
	weight = atom_weight(eta, convention, norm)
	integrals = _cluster_integrals(config, cs, f)
	full = _cutoff_from(config, cs, integrals, eta, weight)
	cut = {float(e): _cutoff_from(config, cs, integrals, float(e), weight) for e in cutoffs}
	signs = np.column_stack([cs.roots, config.spins[cs.roots]])
	return MagnetizationSample(eta, f.id, full, cut, signs, config.spec.sample_index, config.sign_seed)


@dataclass
class TwoPointResult:
	rows: List[dict]
	fit: Optional[FitResult] = None

	@property
	def decay_exponent(self) -> Optional[float]:
		return None if self.fit is None else -self.fit.slope


def two_point(spec: MeshSpec, r_values: Sequence[float], n_samples: int, sweeps: int = DEFAULT_BURN_IN) -> TwoPointResult:
	"""``<S_0 S_x> = P(0 <-> x)`` for ``x = (r, 0)``, with a log-log fit over ``r > 0``."""
	if int(n_samples) < 1:
		raise ParameterError("n_samples must be at least 1")
	lat = spec.lattice
	targets = []
	for r in r_values:
		v = lat.vertex_at(int(round(r / spec.eta)), 0)
		if v < 0:
			raise DomainError(f"no vertex at distance {r} from the origin inside the region")
		targets.append(v)
	origin = lat.origin
	hits = np.zeros(len(targets), dtype=np.int64)
	for i in range(int(n_samples)):
		config = sample_fk_ising(spec.at(spec.sample_index + i), sweeps)
		cs = find_clusters(config)
		hits += np.array([cs.labels[t] == cs.labels[origin] for t in targets], dtype=np.int64)
	rows = []
	for r, h in zip(r_values, hits):
		p, ci = wilson_interval(int(h), int(n_samples))
		rows.append({"r": float(r), "hits": int(h), "n_samples": int(n_samples), "estimate": p, "ci": ci})
	fit = None
	pos = [(row["r"], row["estimate"], row["hits"]) for row in rows if row["r"] > 0]
	if len(pos) >= 3:
		try:
			fit = loglog_fit([p[0] for p in pos], [p[1] for p in pos], trials=[int(n_samples)] * len(pos), seed=spec.seed)
		except FitError as exc:
			logger.warning("two-point fit failed: %s", exc)
	return TwoPointResult(rows, fit)


@dataclass
class MeshScan:
	"""Field samples per entry of the mesh list; entries may repeat a mesh."""

	etas: List[float]
	samples: List[np.ndarray]
	ks: Dict[Tuple[int, int], float] = field(default_factory=dict)

	@property
	def variances(self) -> List[float]:
		return [float(np.var(x)) for x in self.samples]

	def rows(self) -> List[dict]:
		return [
			{
				"eta_1": self.etas[i],
				"eta_2": self.etas[j],
				"ks": d,
				"var_1": float(np.var(self.samples[i])),
				"var_2": float(np.var(self.samples[j])),
			}
			for (i, j), d in sorted(self.ks.items())
		]


def mesh_stability_scan(
	f: TestFunction,
	eta_list: Sequence[float],
	n_samples: int,
	k: float,
	seed: int = 0,
	sweeps: int = DEFAULT_BURN_IN,
	p: float = P_SELF_DUAL,
) -> MeshScan:
	"""Empirical laws of ``Phi^eta(f)`` per mesh and their pairwise KS distances.

	Entry ``j`` of `eta_list` uses sample indices ``j * n_samples + i``, so a
	repeated mesh gets independent samples.
	"""
	n = int(n_samples)
	if n < 1:
		raise ParameterError("n_samples must be at least 1")
	if not Box.centered((0.0, 0.0), k).contains_box(f.support):
		raise DomainError("test function support must fit the common region")
	etas, samples = [], []
	for j, eta in enumerate(eta_list):
		spec = MeshSpec(SQUARE, float(eta), float(k), p, seed)
		values = np.array([magnetization(sample_fk_ising(spec.at(j * n + i), sweeps), f) for i in range(n)])
		etas.append(float(eta))
		samples.append(values)
		logger.info("mesh %g: %d field samples, variance %.4g", eta, n, float(np.var(values)))
	ks = {(i, j): ks_distance(samples[i], samples[j]) for i, j in combinations(range(len(samples)), 2)}
	return MeshScan(etas, samples, ks)

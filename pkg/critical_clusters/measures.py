"""Normalized counting measures and distances between them."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from .connectivity import connected_to_boundary
from .errors import ConfigurationError, DomainError, ParameterError
from .geometry import TOL, Box, grid_cells_meeting
from .lattice import DEFAULT_BURN_IN, Configuration, MeshSpec, Normalizer
from .stats import ks_distance


logger = logging.getLogger(__name__)

# positions are matched after rounding to this many decimals
POSITION_DECIMALS = 12
ALPHA1_PERCOLATION = 5.0 / 48.0
ALPHA1_ISING = 1.0 / 8.0


@dataclass(frozen=True)
class CountingMeasure:
	"""Point measure with one atom of mass `weight` at each row of `positions`."""

	positions: np.ndarray
	weight: float
	eta: float
	pi1_hat: float
	ci_halfwidth: float = 0.0

	@property
	def n_atoms(self) -> int:
		return int(self.positions.shape[0])

	@property
	def total_mass(self) -> float:
		return self.weight * self.n_atoms

	@property
	def masses(self) -> np.ndarray:
		return np.full(self.n_atoms, self.weight)

	@property
	def mass_ci(self) -> Tuple[float, float]:
		"""Total mass with the normalizer's interval propagated."""
		if self.n_atoms == 0:
			return (0.0, 0.0)
		lo = max(self.pi1_hat - self.ci_halfwidth, 0.0)
		hi = self.pi1_hat + self.ci_halfwidth
		scale = self.eta ** 2 * self.n_atoms
		return (scale / hi, scale / lo if lo > 0 else math.inf)

	def mass_in(self, box: Box) -> float:
		if self.n_atoms == 0:
			return 0.0
		inside = box.contains(self.positions[:, 0], self.positions[:, 1])
		return self.weight * int(np.count_nonzero(inside))

	def integrate(self, f) -> float:
		if self.n_atoms == 0:
			return 0.0
		return self.weight * float(np.sum(f(self.positions[:, 0], self.positions[:, 1])))


def _measure(points, norm: Normalizer) -> CountingMeasure:
	pts = np.asarray(points, dtype=float).reshape(-1, 2)
	return CountingMeasure(pts, norm.weight, norm.eta, norm.pi1_hat, norm.ci_halfwidth)


def counting_measure(cluster, norm: Normalizer) -> CountingMeasure:
	"""``eta^2 / pi1_hat`` times the counting measure of the cluster's vertices.

	`cluster` is a `Cluster` or an ``(n, 2)`` array of vertex positions.
	"""
	if norm is None:
		raise ConfigurationError("counting measures need a normalization entry")
	points = getattr(cluster, "positions", cluster)
	return _measure(points, norm)


def _check_annulus(config: Configuration, center, a: float, b: float) -> None:
	if not (0 < a < b):
		raise ParameterError(f"need 0 < a < b, got a={a}, b={b}")
	if not config.lattice.region.contains_box(Box.centered(center, b)):
		raise DomainError(f"Lambda_{b}({center[0]}, {center[1]}) is not inside the sampled region")


def _one_arm_points(config: Configuration, center, a: float, b: float) -> np.ndarray:
	wl, reach = connected_to_boundary(config.layers[1], center, b)
	hit = reach & Box.centered(center, a).contains_half_open(wl.px, wl.py)
	return np.column_stack([wl.px[hit], wl.py[hit]])


def one_arm_measure(config: Configuration, center: Tuple[float, float], a: float, b: float, norm: Normalizer) -> CountingMeasure:
	"""Vertices of the half-open ``Lambda'_a(z)`` with a red arm to the boundary of ``Lambda_b(z)``."""
	center = (float(center[0]), float(center[1]))
	_check_annulus(config, center, a, b)
	return _measure(_one_arm_points(config, center, a, b), norm)


def box_sum_measure(config: Configuration, S, n: int, delta: float, norm: Normalizer) -> CountingMeasure:
	"""Sum of one-arm measures of ``A(eps z; eps/2, delta/2 - eps)``, ``eps = 3**-n``.

	The sum runs over the grid points `z` whose box ``Lambda_{3 eps / 2}(eps z)``
	meets `S`. The half-open inner boxes tile the plane, so no vertex is
	counted twice.
	"""
	if int(n) < 0:
		raise ParameterError("n must be non-negative")
	eps = 3.0 ** -int(n)
	if not 10.0 * eps < delta:
		raise ParameterError(f"box sums need 10 * 3^-n < delta, got n={n}, delta={delta}")
	points = getattr(S, "positions", S)
	cells = grid_cells_meeting(points, eps, 1.5 * eps)
	b = delta / 2.0 - eps
	chunks = []
	for zx, zy in cells:
		center = (eps * zx, eps * zy)
		_check_annulus(config, center, eps / 2.0, b)
		chunks.append(_one_arm_points(config, center, eps / 2.0, b))
	pts = np.concatenate(chunks) if chunks else np.zeros((0, 2))
	return _measure(pts, norm)


def recovered_measure(points, psi: float, norm0: Normalizer) -> CountingMeasure:
	"""Atoms of weight ``4 psi^2 / pi1(2 psi, 1)`` on the grid ``psi Z^2`` near `points`.

	`norm0` carries ``eta = 2 psi`` and the box-to-box estimate ``pi1(2 psi, 1)``.
	"""
	if not (0 < psi < 0.5):
		raise ParameterError(f"psi must lie in (0, 1/2), got {psi}")
	if abs(norm0.eta - 2.0 * psi) > TOL:
		raise ConfigurationError(f"recovered measure at psi={psi} needs a normalizer at scale {2 * psi}, got {norm0.eta}")
	if not norm0.pi1_hat > 0:
		raise ConfigurationError("recovered measure needs pi1(2 psi, 1) > 0")
	pts = getattr(points, "positions", points)
	cells = grid_cells_meeting(pts, psi, psi / 2.0)
	return _measure(psi * cells.astype(float), norm0)


def recovered_normalizer(spec: MeshSpec, psi: float, n_samples: int, sweeps: int = DEFAULT_BURN_IN) -> Normalizer:
	from .arms import arm_probability, special_query

	est = arm_probability(spec, special_query("pi1", 2.0 * psi, 1.0), n_samples, sweeps)
	if est.hits == 0:
		raise ConfigurationError(f"pi1({2 * psi}, 1) estimated as 0 on {n_samples} samples")
	return Normalizer(2.0 * psi, est.p_hat, est.ci_halfwidth)


def _aggregate(positions: np.ndarray, masses: np.ndarray) -> Dict[Tuple[float, float], float]:
	out: Dict[Tuple[float, float], float] = {}
	for (x, y), w in zip(np.round(positions, POSITION_DECIMALS), masses):
		key = (float(x), float(y))
		out[key] = out.get(key, 0.0) + float(w)
	return out


def tv_distance(m1, m2) -> float:
	"""Total variation of ``m1 - m2`` over the union of atom positions."""
	a = _aggregate(m1.positions, m1.masses)
	b = _aggregate(m2.positions, m2.masses)
	return float(sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b)))


@dataclass(frozen=True)
class BinnedMeasure:
	resolution: float
	bins: Dict[Tuple[int, int], float]

	@property
	def positions(self) -> np.ndarray:
		if not self.bins:
			return np.zeros((0, 2))
		cells = np.asarray(sorted(self.bins), dtype=float)
		return (cells + 0.5) * self.resolution

	@property
	def masses(self) -> np.ndarray:
		return np.asarray([self.bins[c] for c in sorted(self.bins)], dtype=float)

	@property
	def total_mass(self) -> float:
		return float(sum(self.bins.values()))


def bin_measure(m, resolution: float) -> BinnedMeasure:
	if not resolution > 0:
		raise ParameterError("resolution must be positive")
	cells = np.floor(np.asarray(m.positions, dtype=float) / resolution).astype(np.int64)
	bins: Dict[Tuple[int, int], float] = {}
	for (i, j), w in zip(cells.reshape(-1, 2), m.masses):
		bins[(int(i), int(j))] = bins.get((int(i), int(j)), 0.0) + float(w)
	return BinnedMeasure(float(resolution), bins)


def _matchable_mass(w1: np.ndarray, w2: np.ndarray, allowed: np.ndarray) -> float:
	"""Largest mass movable from `w1` to `w2` along allowed pairs."""
	ii, jj = np.nonzero(allowed)
	if ii.size == 0:
		return 0.0
	n1, n2 = w1.size, w2.size
	k = ii.size
	rows = np.concatenate([ii, n1 + jj])
	cols = np.concatenate([np.arange(k), np.arange(k)])
	A = np.zeros((n1 + n2, k))
	A[rows, cols] = 1.0
	res = linprog(-np.ones(k), A_ub=A, b_ub=np.concatenate([w1, w2]), bounds=(0, None), method="highs")
	if res.status != 0:
		raise ParameterError(f"transport problem failed: {res.message}")
	return float(-res.fun)


def prokhorov_exact(m1, m2) -> float:
	"""Prokhorov distance between two finite atomic measures (L-infinity metric).

	``m1(S) <= m2(S^eps) + eps`` for every `S` is equivalent to the mass that
	can be moved by at most `eps` being at least ``m1(C) - eps``; both directions
	together read ``max(M1, M2) - F(eps) <= eps``.
	"""
	p1 = np.asarray(m1.positions, dtype=float).reshape(-1, 2)
	p2 = np.asarray(m2.positions, dtype=float).reshape(-1, 2)
	w1 = np.asarray(m1.masses, dtype=float)
	w2 = np.asarray(m2.masses, dtype=float)
	total = max(float(w1.sum()), float(w2.sum()))
	if p1.shape[0] == 0 or p2.shape[0] == 0:
		return total
	D = cdist(p1, p2, metric="chebyshev")
	dists = np.unique(np.concatenate([[0.0], D.ravel()]))

	cache: Dict[int, float] = {}

	def gap(k: int) -> float:
		if k not in cache:
			cache[k] = total - _matchable_mass(w1, w2, D <= dists[k] + TOL)
		return cache[k]

	# first k with dists[k] >= gap(k): gap decreases while dists increase
	lo, hi = 0, dists.size
	while lo < hi:
		mid = (lo + hi) // 2
		if dists[mid] >= gap(mid) - TOL:
			hi = mid
		else:
			lo = mid + 1
	if lo == dists.size:
		return max(gap(dists.size - 1), 0.0)
	if lo == 0:
		return float(dists[0])
	return float(min(dists[lo], gap(lo - 1)))


def prokhorov_upper(m1, m2, resolution: float) -> float:
	"""Upper bound on the Prokhorov distance: the exact value between the binned measures plus `resolution`."""
	return prokhorov_exact(bin_measure(m1, resolution), bin_measure(m2, resolution)) + resolution


def largest_masses(pieces: Sequence, norm: Normalizer, count: int = 2) -> List[float]:
	"""Masses of the first `count` pieces (pieces ordered by size), padded with zeros."""
	out = [counting_measure(p, norm).total_mass for p in list(pieces)[:count]]
	return out + [0.0] * (count - len(out))


def gap_frequency(first: Sequence[float], second: Sequence[float], alpha: float) -> float:
	"""Fraction of samples with ``|mass M_(1) - mass M_(2)| < alpha``."""
	x = np.asarray(first, dtype=float)
	y = np.asarray(second, dtype=float)
	if x.size == 0 or x.size != y.size:
		raise ParameterError("gap statistic needs two equal-length, non-empty mass lists")
	return float(np.mean(np.abs(x - y) < alpha))


def scaling_covariance_distance(masses_fine: Sequence[float], masses_coarse: Sequence[float], r: float, alpha1: float) -> float:
	"""KS distance between masses in ``Lambda_1`` at mesh eta and masses in ``Lambda_r`` at mesh ``r eta`` scaled by ``r^-(2 - alpha1)``."""
	scaled = np.asarray(masses_coarse, dtype=float) * r ** (-(2.0 - alpha1))
	return ks_distance(masses_fine, scaled)

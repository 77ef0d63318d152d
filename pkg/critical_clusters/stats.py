"""Exponent fits, tail fits, distribution distances and interval estimates."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps

from .errors import DomainError, FitError, ParameterError
from .rng import STREAM_BOOTSTRAP, generator


logger = logging.getLogger(__name__)

CONFIDENCE = 0.95
N_BOOTSTRAP = 1000
MIN_TAIL_SAMPLES = 100
STRETCH_BETAS = np.round(np.arange(0.25, 2.0001, 0.05), 2)


@dataclass
class FitResult:
	slope: float
	intercept: float
	slope_ci: Tuple[float, float]
	r2: float
	n_points: int
	beta: Optional[float] = None

	def to_json(self) -> dict:
		out = asdict(self)
		out["slope_ci"] = [float(self.slope_ci[0]), float(self.slope_ci[1])]
		return out


def _z(confidence: float) -> float:
	return float(sps.norm.ppf(0.5 + confidence / 2.0))


def wilson_interval(hits: int, trials: int, confidence: float = CONFIDENCE) -> Tuple[float, float]:
	"""Return ``(hits / trials, half-width of the Wilson score interval)``."""
	if trials <= 0:
		raise ParameterError("trials must be positive")
	z = _z(confidence)
	p = hits / trials
	denom = 1.0 + z * z / trials
	half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
	return p, half


def _weighted_line(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> Tuple[float, float, float]:
	if not np.ptp(x) > 0:
		raise FitError("fit abscissae are all equal")
	# polyfit weights multiply the residuals, not their squares
	slope, intercept = np.polyfit(x, y, 1, w=np.sqrt(w))
	ym = (w * y).sum() / w.sum()
	ss_res = (w * (y - intercept - slope * x) ** 2).sum()
	ss_tot = (w * (y - ym) ** 2).sum()
	r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
	return float(slope), float(intercept), float(r2)


def _loglog_weights(p: np.ndarray, ci: Optional[np.ndarray], trials: Optional[np.ndarray], z: float) -> np.ndarray:
	# delta method: sd(log p) ~ sd(p) / p
	if ci is not None:
		sd = np.maximum(ci / z, 1e-15) / p
		return 1.0 / sd ** 2
	if trials is not None:
		var = (1.0 - p) / (trials * p)
		var = np.maximum(var, 1.0 / trials.astype(float) ** 2)
		return 1.0 / var
	return np.ones_like(p)


def _interval(boots: list, estimate: float, confidence: float) -> Tuple[float, float]:
	if not boots:
		return (estimate, estimate)
	alpha = (1.0 - confidence) / 2.0
	lo, hi = np.quantile(np.asarray(boots), [alpha, 1.0 - alpha])
	return (float(min(lo, estimate)), float(max(hi, estimate)))


def loglog_fit(
	scales: Sequence[float],
	probs: Sequence[float],
	ci_halfwidths: Optional[Sequence[float]] = None,
	trials: Optional[Sequence[int]] = None,
	n_boot: int = N_BOOTSTRAP,
	seed: int = 0,
	confidence: float = CONFIDENCE,
) -> FitResult:
	"""Weighted least squares of ``log p`` on ``log scale`` with a bootstrap CI.

	With `trials` the bootstrap redraws each tally binomially; with only
	`ci_halfwidths` it perturbs each point normally; with neither it resamples
	the points themselves.
	"""
	s = np.asarray(scales, dtype=float)
	p = np.asarray(probs, dtype=float)
	ci = None if ci_halfwidths is None else np.asarray(ci_halfwidths, dtype=float)
	n_tr = None if trials is None else np.asarray(trials, dtype=np.int64)
	keep = (p > 0) & np.isfinite(p) & (s > 0)
	if not keep.all():
		logger.warning("loglog_fit: excluding %d non-positive points", int((~keep).sum()))
	if keep.sum() < 3:
		raise FitError(f"need at least 3 usable points, have {int(keep.sum())}")
	s, p = s[keep], p[keep]
	ci = None if ci is None else ci[keep]
	n_tr = None if n_tr is None else n_tr[keep]
	z = _z(confidence)
	x = np.log(s)
	slope, intercept, r2 = _weighted_line(x, np.log(p), _loglog_weights(p, ci, n_tr, z))

	rng = generator(seed, 0, STREAM_BOOTSTRAP)
	m = x.size
	boots = []
	for _ in range(int(n_boot)):
		try:
			if n_tr is not None:
				pb = rng.binomial(n_tr, p) / n_tr
				ok = pb > 0
				if ok.sum() < 2:
					continue
				boots.append(_weighted_line(x[ok], np.log(pb[ok]), _loglog_weights(pb[ok], None, n_tr[ok], z))[0])
			elif ci is not None:
				pb = p + rng.normal(0.0, 1.0, m) * ci / z
				ok = pb > 0
				if ok.sum() < 2:
					continue
				boots.append(_weighted_line(x[ok], np.log(pb[ok]), _loglog_weights(pb[ok], ci[ok], None, z))[0])
			else:
				idx = rng.integers(0, m, m)
				boots.append(_weighted_line(x[idx], np.log(p[idx]), np.ones(m))[0])
		except FitError:
			continue
	return FitResult(slope, intercept, _interval(boots, slope, confidence), r2, int(m))


def _survival_window(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
	n = x.size
	ranks = np.arange(1, n + 1)
	surv = (n - ranks + 0.5) / n
	# upper half of the sample, dropping the last few noisy order statistics
	sel = slice(n // 2, max(n // 2 + 3, n - 10))
	return x[sel], np.log(surv[sel])


def _tail_once(x_sorted: np.ndarray, beta: float) -> Tuple[float, float, float]:
	xs, ls = _survival_window(x_sorted)
	slope, intercept, r2 = _weighted_line(xs ** beta, ls, np.ones(xs.size))
	return -slope, intercept, r2


def tail_fit(samples: Sequence[float], family: str = "exponential", n_boot: int = N_BOOTSTRAP, seed: int = 0, confidence: float = CONFIDENCE) -> FitResult:
	"""Fit ``log P(X > x)`` against ``x`` (exponential) or ``x**beta`` (stretched).

	The returned slope is the decay constant (positive for a decaying tail);
	the stretched family profiles beta over a fixed grid by r2.
	"""
	if family not in ("exponential", "stretched"):
		raise ParameterError(f"unknown tail family {family!r}")
	x = np.sort(np.asarray(samples, dtype=float).ravel())
	if x.size < MIN_TAIL_SAMPLES:
		raise FitError(f"tail fit needs at least {MIN_TAIL_SAMPLES} samples, got {x.size}")
	if not x[-1] > x[0]:
		raise FitError("tail fit on constant data")
	if family == "stretched" and x[0] < 0:
		raise FitError("stretched tail fit needs non-negative samples")

	if family == "exponential":
		beta = 1.0
	else:
		best = None
		for b in STRETCH_BETAS:
			try:
				r2 = _tail_once(x, float(b))[2]
			except FitError:
				continue
			if best is None or r2 > best[1]:
				best = (float(b), r2)
		if best is None:
			raise FitError("no admissible stretch exponent")
		beta = best[0]
	decay, intercept, r2 = _tail_once(x, beta)

	rng = generator(seed, 1, STREAM_BOOTSTRAP)
	boots = []
	for _ in range(int(n_boot)):
		xb = np.sort(x[rng.integers(0, x.size, x.size)])
		try:
			boots.append(_tail_once(xb, beta)[0])
		except FitError:
			continue
	_, hi_tail = _survival_window(x)
	return FitResult(decay, intercept, _interval(boots, decay, confidence), r2, int(hi_tail.size), None if family == "exponential" else beta)


def ks_distance(x: Sequence[float], y: Sequence[float]) -> float:
	"""Two-sample Kolmogorov–Smirnov statistic ``sup |F_x - F_y|``."""
	xs = np.asarray(x, dtype=float).ravel()
	ys = np.asarray(y, dtype=float).ravel()
	if xs.size == 0 or ys.size == 0:
		raise DomainError("ks_distance needs two non-empty samples")
	return float(sps.ks_2samp(xs, ys, method="asymp").statistic)


def integrated_autocorrelation(series: Sequence[float]) -> float:
	"""Integrated autocorrelation time, summed until the first non-positive lag."""
	x = np.asarray(series, dtype=float)
	n = x.size
	if n < 2:
		return 1.0
	x = x - x.mean()
	var = float(np.dot(x, x)) / n
	if var <= 0:
		return 1.0
	f = np.fft.rfft(x, 2 * n)
	acf = np.fft.irfft(f * np.conjugate(f))[:n] / (n * var)
	tau = 1.0
	for t in range(1, n):
		if acf[t] <= 0:
			break
		tau += 2.0 * acf[t]
	return float(tau)

"""Experiment runner: chunked Monte Carlo over sample indices, CSV/JSON results and a run manifest.

Sample indices are cut into chunks of `CHUNK_SIZE` whatever the worker count,
each chunk is a pure function of the config and its index range, and chunk
results are concatenated in index order. Output files therefore do not depend
on `workers`.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import combinations
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import __version__
from .arms import SPECIAL_EVENTS, ArmEstimate, ArmQuery, arm_probability, count_connected_vertices, count_local_arm_vertices, parse_colours, quasi_mult_ratio, special_query
from .boxapprox import UNIT, nesting_check, refinement_index, refinement_levels, refinement_tail, verify_correspondence
from .clusters import clusters_in_domain, find_clusters, largest_clusters, pieces_in_domain
from .config import ExperimentConfig
from .errors import AcceptanceError, CriticalClustersError, FitError
from .geometry import SQUARE, TOL, Box
from .ising import cutoff_magnetization, magnetization, magnetization_sample, mesh_stability_scan, two_point
from .lattice import MeshSpec, NormalizationTable, Normalizer, Pi1Entry, estimate_pi1_normalization, iter_fk_chain, sample
from .measures import (
	ALPHA1_ISING,
	ALPHA1_PERCOLATION,
	box_sum_measure,
	counting_measure,
	gap_frequency,
	largest_masses,
	recovered_measure,
	recovered_normalizer,
	scaling_covariance_distance,
	tv_distance,
)
from .stats import integrated_autocorrelation, ks_distance, loglog_fit, tail_fit
from .storage import export_collection, export_measure, save_configuration


logger = logging.getLogger(__name__)

CHUNK_SIZE = 64
MANIFEST = "manifest.json"
PROGRESS_EVERY = 10

SAMPLE_COLUMNS = ["sample_index", "kind", "eta", "n_clusters", "largest_size", "open_fraction", "file"]
PI1_COLUMNS = ["kind", "eta", "radius", "hits", "n_samples", "pi1_hat", "ci_halfwidth", "usable"]
ARM_COLUMNS = ["kind", "eta", "z", "a", "b", "kappa", "kappa_hp", "side", "hits", "trials", "p_hat", "ci"]
QM_COLUMNS = ["kind", "eta", "a", "b", "c", "n_samples", "ratio"]
TAIL_COLUMNS = ["kind", "eta", "a", "sample_index", "count", "normalized"]
LOCAL_ARM_COLUMNS = ["kind", "eta", "a", "sample_index", "count"]
EVENT_COLUMNS = ["sample_index", "eps", "delta", "nc", "na1", "na2", "e", "status", "n_good", "n_clusters", "n_counterexamples", "n_gap_violations", "leftmost_disjoint"]
REFINEMENT_COLUMNS = ["eta", "sample_index", "delta", "n_lo", "n_hi", "n0"]
MEASURE_COLUMNS = ["sample_index", "n", "eps", "cluster_id", "size", "mass", "box_sum_mass", "tv", "tv_exceeds"]
RECOVERED_COLUMNS = ["sample_index", "psi", "cluster_id", "mass", "recovered_mass", "ratio"]
LARGEST_COLUMNS = ["kind", "eta", "sample_index", "mass_1", "mass_2", "size_1", "size_2"]
MASS_COLUMNS = ["kind", "eta", "window", "sample_index", "cluster_id", "mass"]
ISING_COLUMNS = ["eta", "f_id", "eps", "phi_cutoff", "phi_full", "sample_index", "sign_seed"]
TWO_POINT_COLUMNS = ["eta", "r", "hits", "n_samples", "estimate", "ci"]
MESH_SCAN_COLUMNS = ["eta_1", "eta_2", "ks", "var_1", "var_2"]
TV_EXPONENT = 0.1


@dataclass
class RunReport:
	out_dir: Path
	files: List[str] = field(default_factory=list)
	summary: dict = field(default_factory=dict)
	acceptance: dict = field(default_factory=dict)


def chunks(first: int, n: int, size: int = CHUNK_SIZE) -> List[Tuple[int, int]]:
	"""``(start, count)`` pieces of ``first .. first + n - 1``."""
	return [(s, min(size, first + n - s)) for s in range(first, first + n, size)]


def map_chunks(fn: Callable, args: tuple, cfg: ExperimentConfig) -> list:
	"""``fn(*args, start, count)`` per chunk, results in chunk order."""
	parts = chunks(cfg.first_sample, cfg.n_samples)
	if cfg.workers == 1 or len(parts) == 1:
		out = []
		for j, (s, c) in enumerate(parts, 1):
			out.append(fn(*args, s, c))
			if j % PROGRESS_EVERY == 0:
				logger.info("%s: %d/%d chunks done", fn.__name__.strip("_"), j, len(parts))
		return out
	return Parallel(n_jobs=cfg.workers)(delayed(fn)(*args, s, c) for s, c in parts)


def write_table(rows: Sequence[dict], path: Path, columns: List[str]) -> Path:
	df = pd.DataFrame(list(rows))
	if not df.empty:
		df = df.reindex(columns=columns)
	else:
		df = pd.DataFrame(columns=columns)
	df.to_csv(path, index=False)
	return path


def write_json(data, path: Path) -> Path:
	path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")
	return path


def _json_default(obj):
	if isinstance(obj, (np.integer,)):
		return int(obj)
	if isinstance(obj, (np.floating,)):
		return float(obj)
	if isinstance(obj, np.ndarray):
		return obj.tolist()
	raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fit_json(fn: Callable, *args, **kwargs) -> Optional[dict]:
	try:
		return fn(*args, **kwargs).to_json()
	except FitError as exc:
		logger.warning("fit skipped: %s", exc)
		return None


def _check_band(report: RunReport, cfg: ExperimentConfig, name: str, value: Optional[float], expected_key: str, tol_key: str) -> None:
	if value is None or expected_key not in cfg.acceptance:
		return
	expected = cfg.acceptance[expected_key]
	tol = cfg.acceptance.get(tol_key, 0.0)
	report.acceptance[name] = {"value": value, "expected": expected, "tolerance": tol, "passed": abs(value - expected) <= tol}


def _spec(cfg: ExperimentConfig, eta: float) -> MeshSpec:
	return cfg.mesh.spec(eta, cfg.seed, cfg.first_sample)


# sample

def _sample_chunk(cfg: ExperimentConfig, eta: float, out_dir: str, start: int, count: int) -> List[dict]:
	spec = _spec(cfg, eta)
	rows = []
	for i in range(start, start + count):
		config = sample(spec.at(i), cfg.mesh.sweeps)
		name = f"{spec.kind}-{eta:g}-{i:06d}"
		path = save_configuration(config, Path(out_dir) / f"{name}.ccls")
		cs = find_clusters(config)
		if cfg.export_clusters:
			export_collection(clusters_in_domain(cs, UNIT, 0.0), Path(out_dir) / f"{name}-clusters.json")
		rows.append({
			"sample_index": i,
			"kind": spec.kind,
			"eta": eta,
			"n_clusters": cs.n_clusters,
			"largest_size": int(cs.sizes.max()) if cs.n_clusters else 0,
			"open_fraction": float(config.open_edges.mean()) if config.open_edges.size else 0.0,
			"file": path.name,
		})
	return rows


def _run_sample(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
	config_dir = out_dir / "configs"
	config_dir.mkdir(exist_ok=True)
	rows = []
	for eta in cfg.mesh.etas:
		for part in map_chunks(_sample_chunk, (cfg, eta, str(config_dir)), cfg):
			rows.extend(part)
	report.files.append(write_table(rows, out_dir / "samples.csv", SAMPLE_COLUMNS).name)
	report.files.extend(sorted(f"configs/{p.name}" for p in config_dir.iterdir()))
	if cfg.mesh.kind == SQUARE:
		diag = {}
		for eta in cfg.mesh.etas:
			run = iter_fk_chain(_spec(cfg, eta), cfg.mesh.sweeps, cfg.mesh.gap, min(cfg.n_samples, 10))
			diag[f"{eta!r}"] = {
				"tau_int": integrated_autocorrelation(run.density_trace[cfg.mesh.sweeps // 2:]),
				"mean_density": float(run.density_trace[cfg.mesh.sweeps // 2:].mean()),
				"sweeps": int(run.density_trace.size),
			}
		report.files.append(write_json(diag, out_dir / "chain_diagnostics.json").name)
		report.summary["chain"] = diag


# pi1-table

def _pi1_chunk(cfg: ExperimentConfig, eta: float, radius: float, start: int, count: int) -> Pi1Entry:
	return estimate_pi1_normalization(_spec(cfg, eta).at(start), count, radius, cfg.mesh.sweeps)


def pi1_table(cfg: ExperimentConfig, etas: Optional[Sequence[float]] = None, radius: Optional[float] = None) -> NormalizationTable:
	"""Normalization entries for every mesh in `etas` (default: the config's meshes)."""
	radius = cfg.scales.radius if radius is None else radius
	table = NormalizationTable()
	for eta in (cfg.mesh.etas if etas is None else etas):
		parts = map_chunks(_pi1_chunk, (cfg, float(eta), radius), cfg)
		entry = parts[0]
		for p in parts[1:]:
			entry = entry.merged(p)
		table.add(cfg.mesh.kind, float(eta), entry)
		logger.info("pi1 %s eta=%g: %d/%d", cfg.mesh.kind, eta, entry.hits, entry.n_samples)
		if entry.hits == 0:
			logger.warning("pi1 entry for eta=%g is zero and cannot normalize measures", eta)
	return table


def _run_pi1(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
	table = pi1_table(cfg)
	report.files.append(table.save(out_dir / "normalization.json").name)
	rows = []
	for key, e in sorted(table.entries.items()):
		kind, eta = key.split(":")
		rows.append({
			"kind": kind,
			"eta": float(eta),
			"radius": cfg.scales.radius,
			"hits": e.hits,
			"n_samples": e.n_samples,
			"pi1_hat": e.pi1_hat,
			"ci_halfwidth": e.ci_halfwidth,
			"usable": e.hits > 0,
		})
	report.files.append(write_table(rows, out_dir / "pi1_table.csv", PI1_COLUMNS).name)


def _normalization(cfg: ExperimentConfig, etas: Sequence[float]) -> NormalizationTable:
	if cfg.normalization:
		return NormalizationTable.load(Path(cfg.normalization))
	logger.info("no normalization table configured; estimating pi1 for %d meshes", len(etas))
	return pi1_table(cfg, etas, 1.0)


# arms / exponents

def _query(name: str, a: float, b: float) -> ArmQuery:
	if name in SPECIAL_EVENTS:
		return special_query(name, a, b)
	return ArmQuery((0.0, 0.0), a, b, parse_colours(name))


def _arm_chunk(cfg: ExperimentConfig, eta: float, query: ArmQuery, start: int, count: int) -> ArmEstimate:
	return arm_probability(_spec(cfg, eta).at(start), query, count, cfg.mesh.sweeps)


def _arm_rows(cfg: ExperimentConfig) -> Dict[Tuple[float, str], List[dict]]:
	out: Dict[Tuple[float, str], List[dict]] = {}
	for eta in cfg.mesh.etas:
		spec = _spec(cfg, eta)
		for name in cfg.scales.events:
			for a, b in cfg.scales.annuli(eta):
				parts = map_chunks(_arm_chunk, (cfg, eta, _query(name, a, b)), cfg)
				est = parts[0]
				for p in parts[1:]:
					est = est.merged(p)
				out.setdefault((eta, name), []).append(est.row(spec))
			logger.info("arm event %s at eta=%g: %d annuli", name, eta, len(cfg.scales.annuli(eta)))
	return out


def _qm_rows(cfg: ExperimentConfig) -> List[dict]:
	rows = []
	for eta in cfg.mesh.etas:
		spec = _spec(cfg, eta)
		for t in cfg.scales.triples:
			a, b, c = cfg.scales.plane(t, eta)
			ratio = quasi_mult_ratio(spec, a, b, c, cfg.n_samples, cfg.mesh.sweeps)
			rows.append({"kind": spec.kind, "eta": eta, "a": a, "b": b, "c": c, "n_samples": cfg.n_samples, "ratio": ratio})
	return rows


def _run_arms(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
	rows = [r for part in _arm_rows(cfg).values() for r in part]
	report.files.append(write_table(rows, out_dir / "arms.csv", ARM_COLUMNS).name)
	if cfg.scales.triples:
		qm = _qm_rows(cfg)
		report.files.append(write_table(qm, out_dir / "quasi_multiplicativity.csv", QM_COLUMNS).name)
		lo = cfg.acceptance.get("qm_low")
		hi = cfg.acceptance.get("qm_high")
		if lo is not None and hi is not None:
			ratios = [r["ratio"] for r in qm]
			report.acceptance["quasi_multiplicativity"] = {"band": [lo, hi], "ratios": ratios, "passed": all(lo <= x <= hi for x in ratios)}


def _tail_chunk(cfg: ExperimentConfig, eta: float, a: float, start: int, count: int) -> List[dict]:
	spec = _spec(cfg, eta)
	return [
		{"kind": spec.kind, "eta": eta, "a": a, "sample_index": i, "count": count_connected_vertices(sample(spec.at(i), cfg.mesh.sweeps), a)}
		for i in range(start, start + count)
	]


def _local_chunk(cfg: ExperimentConfig, eta: float, a: float, start: int, count: int) -> List[dict]:
	spec = _spec(cfg, eta)
	return [
		{"kind": spec.kind, "eta": eta, "a": a, "sample_index": i, "count": count_local_arm_vertices(sample(spec.at(i), cfg.mesh.sweeps), a)}
		for i in range(start, start + count)
	]


def _local_arm_moments(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> dict:
	"""``E|W_a|^3 / (eta^-6 pi1(eta, a)^3)`` per mesh; the ratio should stay bounded as eta shrinks."""
	rows, moments = [], {}
	for eta in cfg.mesh.etas:
		a = cfg.scales.plane([cfg.scales.local_a], eta)[0]
		entry = estimate_pi1_normalization(_spec(cfg, eta), cfg.n_samples, a, cfg.mesh.sweeps)
		part = [r for chunk in map_chunks(_local_chunk, (cfg, eta, a), cfg) for r in chunk]
		rows.extend(part)
		third = float(np.mean(np.array([r["count"] for r in part], dtype=float) ** 3))
		scale = eta ** -6 * entry.pi1_hat ** 3
		moments[f"{eta!r}"] = {"a": a, "pi1_hat": entry.pi1_hat, "third_moment": third, "ratio": third / scale if scale > 0 else math.nan}
		logger.info("local arms at eta=%g, a=%g: E|W|^3 = %.4g, ratio %.4g", eta, a, third, moments[f"{eta!r}"]["ratio"])
	report.files.append(write_table(rows, out_dir / "local_arms.csv", LOCAL_ARM_COLUMNS).name)
	ratios = [m["ratio"] for m in moments.values()]
	if "local_ratio_spread" in cfg.acceptance and all(math.isfinite(x) and x > 0 for x in ratios):
		spread = max(ratios) / min(ratios)
		limit = cfg.acceptance["local_ratio_spread"]
		report.acceptance["local_arm_third_moment"] = {"ratios": ratios, "spread": spread, "max": limit, "passed": spread <= limit}
	return moments


def _run_exponents(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
	by_event = _arm_rows(cfg)
	rows = [r for part in by_event.values() for r in part]
	report.files.append(write_table(rows, out_dir / "arms.csv", ARM_COLUMNS).name)
	fits = {}
	for (eta, name), part in sorted(by_event.items()):
		fit = _fit_json(
			loglog_fit,
			[r["a"] / r["b"] for r in part],
			[r["p_hat"] for r in part],
			trials=[r["trials"] for r in part],
			seed=cfg.seed,
		)
		fits[f"{name}@{eta!r}"] = fit
		if fit is not None:
			logger.info("exponent %s at eta=%g: %.4f [%.4f, %.4f]", name, eta, fit["slope"], *fit["slope_ci"])
			if name == "pi1":
				_check_band(report, cfg, f"one_arm@{eta!r}", fit["slope"], "alpha1", "alpha1_tol")
			elif name == "pi6" and "pi6_min" in cfg.acceptance:
				report.acceptance[f"six_arm@{eta!r}"] = {"value": fit["slope"], "min": cfg.acceptance["pi6_min"], "passed": fit["slope"] >= cfg.acceptance["pi6_min"]}
			elif name == "pi03" and "pi03_min" in cfg.acceptance:
				report.acceptance[f"half_plane_three_arm@{eta!r}"] = {"value": fit["slope"], "min": cfg.acceptance["pi03_min"], "passed": fit["slope"] >= cfg.acceptance["pi03_min"]}
	if cfg.scales.tail_a is not None:
		tails = []
		for eta in cfg.mesh.etas:
			a = cfg.scales.plane([cfg.scales.tail_a], eta)[0]
			entry = estimate_pi1_normalization(_spec(cfg, eta), cfg.n_samples, a, cfg.mesh.sweeps)
			scale = (a / eta) ** 2 * entry.pi1_hat
			part = [r for chunk in map_chunks(_tail_chunk, (cfg, eta, a), cfg) for r in chunk]
			for r in part:
				r["normalized"] = r["count"] / scale if scale > 0 else math.nan
			tails.extend(part)
			values = [r["normalized"] for r in part if math.isfinite(r["normalized"])]
			fit = _fit_json(tail_fit, values, "exponential", seed=cfg.seed)
			fits[f"tail@{eta!r}"] = fit
			if fit is not None and "tail_r2" in cfg.acceptance:
				report.acceptance[f"tail@{eta!r}"] = {"r2": fit["r2"], "slope": fit["slope"], "passed": fit["r2"] >= cfg.acceptance["tail_r2"] and fit["slope"] > 0}
		report.files.append(write_table(tails, out_dir / "tail.csv", TAIL_COLUMNS).name)
	if cfg.scales.local_a is not None:
		fits["local_arm_moments"] = _local_arm_moments(cfg, out_dir, report)
	report.files.append(write_json(fits, out_dir / "fits.json").name)
	report.summary["fits"] = fits


# approx-verify

def _approx_chunk(cfg: ExperimentConfig, eta: float, start: int, count: int) -> List[dict]:
	spec = _spec(cfg, eta)
	delta = cfg.scales.delta
	out = []
	for i in range(start, start + count):
		config = sample(spec.at(i), cfg.mesh.sweeps)
		for eps in cfg.scales.eps:
			out.append(verify_correspondence(config, eps, delta).to_json())
		if cfg.scales.n_levels:
			bad = nesting_check(config, delta, cfg.scales.n_levels)
			if bad:
				out.append({"sample_index": i, "nesting": bad})
		if cfg.scales.refinement:
			out.append({"sample_index": i, "eta": eta, "refinement": refinement_index(config, delta)})
	return out


def _refinement_summary(cfg: ExperimentConfig, rows: List[dict], report: RunReport) -> dict:
	out = {}
	for eta in cfg.mesh.etas:
		n_lo, n_hi = refinement_levels(eta, cfg.scales.delta)
		mine = [r["n0"] for r in rows if r["eta"] == eta]
		entry = {"n_lo": n_lo, "n_hi": n_hi, "truncated": n_hi < n_lo, "unresolved": sum(v is None for v in mine)}
		if n_hi >= n_lo and mine:
			tail = refinement_tail(mine, n_lo, n_hi)
			entry["tail"] = {str(n): p for n, p in tail.items()}
			ratios = [tail[n + 1] / tail[n] for n in range(n_lo, n_hi) if tail[n] > 0]
			entry["decay_ratios"] = ratios
			if ratios:
				report.acceptance[f"refinement_decay@{eta!r}"] = {"ratios": ratios, "passed": all(x < 1.0 for x in ratios)}
		else:
			logger.warning("refinement scan at eta=%g has no level finer than delta allows; n0 not resolved", eta)
		out[f"{eta!r}"] = entry
	return out


def _run_approx(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
	reports, nesting, refinement = [], [], []
	for eta in cfg.mesh.etas:
		n_lo, n_hi = refinement_levels(eta, cfg.scales.delta)
		for part in map_chunks(_approx_chunk, (cfg, eta), cfg):
			for r in part:
				if "nesting" in r:
					nesting.append(r)
				elif "refinement" in r:
					refinement.append({"eta": eta, "sample_index": r["sample_index"], "delta": cfg.scales.delta, "n_lo": n_lo, "n_hi": n_hi, "n0": r["refinement"]})
				else:
					reports.append(r)
	rows = [
		{
			"sample_index": r["sample_index"],
			"eps": r["eps"],
			"delta": r["delta"],
			**{k: r["events"][k] for k in ("nc", "na1", "na2", "e")},
			"status": r["status"],
			"n_good": r["n_good"],
			"n_clusters": r["n_clusters"],
			"n_counterexamples": len(r["counterexamples"]),
			"n_gap_violations": len(r["gap_violations"]),
			"leftmost_disjoint": r["leftmost_disjoint"],
		}
		for r in reports
	]
	report.files.append(write_table(rows, out_dir / "events.csv", EVENT_COLUMNS).name)
	summary = {}
	for eps in cfg.scales.eps:
		mine = [r for r in reports if r["eps"] == eps]
		summary[f"{eps!r}"] = {
			"samples": len(mine),
			"skipped": sum(r["status"] == "skipped" for r in mine),
			"passed": sum(r["status"] == "passed" for r in mine),
			"failed": sum(r["status"] == "failed" for r in mine),
			"gap_violations": sum(bool(r["gap_violations"]) for r in mine),
			"leftmost_overlaps": sum(r["leftmost_disjoint"] is False for r in mine),
			"counterexamples": [dict(c, sample_index=r["sample_index"]) for r in mine for c in r["counterexamples"]],
		}
	bad_rate = {e: s["skipped"] / s["samples"] for e, s in summary.items() if s["samples"]}
	data = {"by_eps": summary, "bad_event_rate": bad_rate, "nesting_violations": nesting}
	epss = sorted(cfg.scales.eps)
	rates = [bad_rate.get(f"{e!r}", 0.0) for e in epss]
	if len(epss) >= 3 and all(r > 0 for r in rates):
		data["bad_event_fit"] = _fit_json(loglog_fit, epss, rates, trials=[cfg.n_samples * len(cfg.mesh.etas)] * len(epss), seed=cfg.seed)
	failed = sum(s["failed"] for s in summary.values())
	report.acceptance["correspondence"] = {"failed": failed, "passed": failed == 0 and not nesting}
	if len(epss) >= 2:
		# rates are ordered by increasing eps
		report.acceptance["bad_event_decay"] = {"rates": rates, "passed": all(y > x for x, y in zip(rates, rates[1:]))}
	gaps = sum(s["gap_violations"] for s in summary.values())
	report.acceptance["diameter_gap"] = {"samples": gaps, "passed": gaps == 0}
	overlaps = sum(s["leftmost_overlaps"] for s in summary.values())
	report.acceptance["leftmost_disjoint"] = {"samples": overlaps, "passed": overlaps == 0}
	if cfg.scales.refinement:
		report.files.append(write_table(refinement, out_dir / "refinement.csv", REFINEMENT_COLUMNS).name)
		data["refinement"] = _refinement_summary(cfg, refinement, report)
		report.summary["refinement"] = data["refinement"]
	report.files.append(write_json(data, out_dir / "correspondence.json").name)
	report.summary["correspondence"] = {e: {k: v for k, v in s.items() if k != "counterexamples"} for e, s in summary.items()}


# measures

def _measures_chunk(cfg: ExperimentConfig, eta: float, norm: Normalizer, recovered: Dict[float, Normalizer], export_dir: str, start: int, count: int) -> Tuple[List[dict], List[dict]]:
	spec = _spec(cfg, eta)
	delta = cfg.scales.delta
	levels = sorted(set(cfg.scales.n_levels))
	rows, rec_rows = [], []
	for i in range(start, start + count):
		config = sample(spec.at(i), cfg.mesh.sweeps)
		big = clusters_in_domain(find_clusters(config), UNIT, delta)
		for c in big:
			mu = counting_measure(c, norm)
			prev = None
			for n in levels:
				eps = 3.0 ** -n
				approx = box_sum_measure(config, c, n, delta, norm)
				if prev is not None and approx.total_mass > prev + TOL * max(1.0, prev):
					raise AcceptanceError(f"sample {i}, cluster {c.id}: box-sum mass grew from {prev} to {approx.total_mass} at n={n}")
				prev = approx.total_mass
				tv = tv_distance(mu, approx)
				rows.append({
					"sample_index": i, "n": n, "eps": eps, "cluster_id": c.id, "size": c.size,
					"mass": mu.total_mass, "box_sum_mass": approx.total_mass, "tv": tv, "tv_exceeds": tv >= eps ** TV_EXPONENT,
				})
				if i == cfg.first_sample and c is big[0] and n == levels[-1]:
					export_measure(approx, Path(export_dir) / f"box_sum-{eta:g}-{i:06d}.csv")
			for psi, norm0 in recovered.items():
				rec = recovered_measure(c, psi, norm0)
				rec_rows.append({
					"sample_index": i, "psi": psi, "cluster_id": c.id, "mass": mu.total_mass,
					"recovered_mass": rec.total_mass, "ratio": rec.total_mass / mu.total_mass,
				})
			if i == cfg.first_sample and c is big[0]:
				export_measure(mu, Path(export_dir) / f"cluster-{eta:g}-{i:06d}.csv")
	return rows, rec_rows


def _run_measures(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
	table = _normalization(cfg, cfg.mesh.etas)
	rows, rec_rows = [], []
	export_dir = out_dir / "measures"
	export_dir.mkdir(exist_ok=True)
	for eta in cfg.mesh.etas:
		norm = table.lookup(cfg.mesh.kind, eta)
		spec = _spec(cfg, eta)
		recovered = {psi: recovered_normalizer(spec, psi, cfg.n_samples, cfg.mesh.sweeps) for psi in cfg.scales.psi}
		for r, rr in map_chunks(_measures_chunk, (cfg, eta, norm, recovered, str(export_dir)), cfg):
			rows.extend(r)
			rec_rows.extend(rr)
	report.files.append(write_table(rows, out_dir / "measures.csv", MEASURE_COLUMNS).name)
	if cfg.scales.psi:
		report.files.append(write_table(rec_rows, out_dir / "recovered.csv", RECOVERED_COLUMNS).name)
	report.files.extend(sorted(f"measures/{p.name}" for p in export_dir.iterdir()))
	freq = {}
	for n in sorted(set(cfg.scales.n_levels)):
		mine = [r for r in rows if r["n"] == n]
		if mine:
			freq[n] = float(np.mean([r["tv_exceeds"] for r in mine]))
	report.summary["tv_exceed_frequency"] = freq
	levels = sorted(freq)
	if len(levels) >= 2:
		values = [freq[n] for n in levels]
		report.acceptance["tv_frequency_decreasing"] = {"frequencies": values, "passed": all(y <= x for x, y in zip(values, values[1:]))}


# largest

def _largest_chunk(cfg: ExperimentConfig, eta: float, norm: Normalizer, window: float, start: int, count: int) -> Tuple[List[dict], List[dict]]:
	spec = _spec(cfg, eta)
	box = Box.centered((0.0, 0.0), window)
	rows, masses = [], []
	for i in range(start, start + count):
		cs = find_clusters(sample(spec.at(i), cfg.mesh.sweeps))
		if window == 1.0:
			top = largest_clusters(cs, box, cfg.scales.count)
			m = largest_masses(top, norm, max(2, cfg.scales.count))
			sizes = [c.size for c in top] + [0] * (2 - len(top[:2]))
			rows.append({"kind": spec.kind, "eta": eta, "sample_index": i, "mass_1": m[0], "mass_2": m[1], "size_1": sizes[0], "size_2": sizes[1]})
		for c in pieces_in_domain(cs, box, cfg.scales.delta * window):
			masses.append({"kind": spec.kind, "eta": eta, "window": window, "sample_index": i, "cluster_id": c.id, "mass": counting_measure(c, norm).total_mass})
	return rows, masses


def _run_largest(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
	r = cfg.scales.r
	coarse = [eta * r for eta in cfg.mesh.etas] if r is not None else []
	table = _normalization(cfg, list(cfg.mesh.etas) + coarse)
	rows, masses = [], []
	for eta in cfg.mesh.etas:
		for rr, mm in map_chunks(_largest_chunk, (cfg, eta, table.lookup(cfg.mesh.kind, eta), 1.0), cfg):
			rows.extend(rr)
			masses.extend(mm)
	for eta in coarse:
		for _, mm in map_chunks(_largest_chunk, (cfg, eta, table.lookup(cfg.mesh.kind, eta), r), cfg):
			masses.extend(mm)
	report.files.append(write_table(rows, out_dir / "largest.csv", LARGEST_COLUMNS).name)
	report.files.append(write_table(masses, out_dir / "masses.csv", MASS_COLUMNS).name)
	first = {eta: [x["mass_1"] for x in rows if x["eta"] == eta] for eta in cfg.mesh.etas}
	summary = {
		"ks_largest": {f"{e1!r}|{e2!r}": ks_distance(first[e1], first[e2]) for e1, e2 in combinations(cfg.mesh.etas, 2)},
		"gap_frequency": {
			f"{eta!r}": gap_frequency(first[eta], [x["mass_2"] for x in rows if x["eta"] == eta], cfg.scales.alpha)
			for eta in cfg.mesh.etas
		},
	}
	if r is not None:
		alpha1 = ALPHA1_ISING if cfg.mesh.kind == SQUARE else ALPHA1_PERCOLATION
		scov = {}
		for eta in cfg.mesh.etas:
			fine = [m["mass"] for m in masses if m["eta"] == eta and m["window"] == 1.0]
			coarse_masses = [m["mass"] for m in masses if m["eta"] == eta * r and m["window"] == r]
			if fine and coarse_masses:
				scov[f"{eta!r}"] = scaling_covariance_distance(fine, coarse_masses, r, alpha1)
			else:
				logger.warning("no macroscopic pieces at eta=%g; scaling covariance skipped", eta)
		summary["scaling_covariance_ks"] = scov
	report.files.append(write_json(summary, out_dir / "largest_summary.json").name)
	report.summary.update(summary)
	if "ks_max" in cfg.acceptance:
		values = list(summary["ks_largest"].values()) + list(summary.get("scaling_covariance_ks", {}).values())
		report.acceptance["mesh_stability"] = {"values": values, "max": cfg.acceptance["ks_max"], "passed": all(v <= cfg.acceptance["ks_max"] for v in values)}


# ising

def _ising_chunk(cfg: ExperimentConfig, eta: float, norm: Optional[Normalizer], start: int, count: int) -> List[dict]:
	spec = _spec(cfg, eta)
	f = cfg.ising.function()
	rows = []
	for i in range(start, start + count):
		config = sample(spec.at(i), cfg.mesh.sweeps)
		ms = magnetization_sample(config, f, cfg.scales.cutoffs, cfg.ising.convention, norm, cfg.ising.sign_seed)
		full = magnetization(config, f)
		whole = cutoff_magnetization(config, f, eta, "eta-power")
		if abs(full - whole) > 1e-9 * max(1.0, abs(full)):
			raise AcceptanceError(f"sample {i}: spin sum {full} differs from the signed cluster sum {whole}")
		rows.extend(ms.rows())
	return rows


def _run_ising(cfg: ExperimentConfig, out_dir: Path, report: RunReport) -> None:
	table = _normalization(cfg, cfg.mesh.etas) if cfg.ising.convention == "pi1" else None
	rows = []
	for eta in cfg.mesh.etas:
		norm = table.lookup(cfg.mesh.kind, eta) if table is not None else None
		for part in map_chunks(_ising_chunk, (cfg, eta, norm), cfg):
			rows.extend(part)
	report.files.append(write_table(rows, out_dir / "ising.csv", ISING_COLUMNS).name)
	f = cfg.ising.function()
	summary: dict = {}
	df = pd.DataFrame(rows, columns=ISING_COLUMNS)
	if not df.empty:
		df["sq"] = (df["phi_full"] - df["phi_cutoff"]) ** 2
		moments = df.groupby(["eta", "eps"])["sq"].mean()
		summary["cutoff_second_moment"] = {f"{eta!r}|{eps!r}": float(v) for (eta, eps), v in moments.items()}
		for eta in cfg.mesh.etas:
			m = moments.loc[eta] if eta in moments.index.get_level_values(0) else None
			if m is not None and len(m) >= 3 and (m > 0).all():
				fit = _fit_json(loglog_fit, m.index.tolist(), m.tolist(), seed=cfg.seed)
				summary[f"cutoff_fit@{eta!r}"] = fit
				if fit is not None and "cutoff_slope_min" in cfg.acceptance:
					report.acceptance[f"cutoff_rate@{eta!r}"] = {"value": fit["slope"], "min": cfg.acceptance["cutoff_slope_min"], "passed": fit["slope"] >= cfg.acceptance["cutoff_slope_min"]}
		full = df.drop_duplicates(["eta", "sample_index"])
		summary["phi_full_mean"] = {f"{eta!r}": float(g.mean()) for eta, g in full.groupby("eta")["phi_full"]}
		summary["phi_full_sem"] = {f"{eta!r}": float(g.std(ddof=1) / math.sqrt(len(g))) if len(g) > 1 else None for eta, g in full.groupby("eta")["phi_full"]}
	if cfg.scales.r_values:
		tp_rows = []
		for eta in cfg.mesh.etas:
			res = two_point(_spec(cfg, eta), cfg.scales.plane(cfg.scales.r_values, eta), cfg.n_samples, cfg.mesh.sweeps)
			tp_rows.extend(dict(row, eta=eta) for row in res.rows)
			summary[f"two_point@{eta!r}"] = res.fit.to_json() if res.fit is not None else None
			if res.decay_exponent is not None:
				_check_band(report, cfg, f"two_point@{eta!r}", res.decay_exponent, "two_point", "two_point_tol")
		report.files.append(write_table(tp_rows, out_dir / "two_point.csv", TWO_POINT_COLUMNS).name)
	if len(cfg.mesh.etas) > 1:
		scan = mesh_stability_scan(f, cfg.mesh.etas, cfg.n_samples, cfg.mesh.k, cfg.seed, cfg.mesh.sweeps, cfg.mesh.p_value)
		report.files.append(write_table(scan.rows(), out_dir / "mesh_scan.csv", MESH_SCAN_COLUMNS).name)
		summary["variances"] = dict(zip((f"{e!r}" for e in scan.etas), scan.variances))
	report.files.append(write_json(summary, out_dir / "ising_summary.json").name)
	report.summary.update(summary)


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig, Path, RunReport], None]] = {
	"sample": _run_sample,
	"pi1-table": _run_pi1,
	"arms": _run_arms,
	"exponents": _run_exponents,
	"approx-verify": _run_approx,
	"measures": _run_measures,
	"largest": _run_largest,
	"ising": _run_ising,
}


def _now() -> str:
	return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_manifest(out_dir: Path, cfg: ExperimentConfig, report: RunReport, started: str, wall: float, complete: bool, error: Optional[str] = None) -> None:
	data = {
		"config_hash": cfg.hash,
		"config": cfg.to_json(),
		"version": __version__,
		"started": started,
		"finished": _now() if complete or error else None,
		"wall_time_s": round(wall, 3),
		"workers": cfg.workers,
		"files": sorted(report.files),
		"complete": complete,
		"acceptance": report.acceptance,
	}
	if error is not None:
		data["error"] = error
	write_json(data, out_dir / MANIFEST)


def run(cfg: ExperimentConfig) -> RunReport:
	"""Validate, execute and persist one experiment; the manifest marks whether it finished."""
	cfg.validated()
	out_dir = Path(cfg.out) / cfg.run_name
	out_dir.mkdir(parents=True, exist_ok=True)
	report = RunReport(out_dir)
	started = _now()
	t0 = time.perf_counter()
	_write_manifest(out_dir, cfg, report, started, 0.0, False)
	logger.info("running %s into %s (%d samples, %d workers)", cfg.experiment, out_dir, cfg.n_samples, cfg.workers)
	try:
		EXPERIMENTS[cfg.experiment](cfg, out_dir, report)
	except CriticalClustersError as exc:
		_write_manifest(out_dir, cfg, report, started, time.perf_counter() - t0, False, str(exc))
		raise
	_write_manifest(out_dir, cfg, report, started, time.perf_counter() - t0, True)
	logger.info("finished %s in %.1fs: %d files", cfg.experiment, time.perf_counter() - t0, len(report.files))
	return report

"""Experiment configuration read from TOML files."""

from __future__ import annotations

import hashlib
import json
import math
try:
	import tomllib
except ModuleNotFoundError:  # Python < 3.11
	import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .errors import ConfigurationError, ParameterError, ValidationError
from .geometry import KINDS, SQUARE, TRIANGULAR
from .ising import CONVENTIONS, FUNCTION_KINDS, TestFunction
from .lattice import DEFAULT_BURN_IN, DEFAULT_GAP, P_SELF_DUAL, MeshSpec


EXPERIMENTS = ("sample", "pi1-table", "arms", "exponents", "approx-verify", "measures", "largest", "ising")
DEFAULT_OUT = "runs"
DEFAULT_SAMPLES = 100
DEFAULT_DELTA = 0.5
DEFAULT_GAP_ALPHA = 0.02
SEED_LIMIT = 2 ** 64


def _floats(value) -> Tuple[float, ...]:
	if value is None:
		return ()
	if isinstance(value, (int, float)):
		return (float(value),)
	return tuple(float(v) for v in value)


@dataclass(frozen=True)
class MeshSettings:
	kind: str = TRIANGULAR
	etas: Tuple[float, ...] = (1.0 / 64.0,)
	k: float = 2.0
	p: Optional[float] = None
	sweeps: int = DEFAULT_BURN_IN
	gap: int = DEFAULT_GAP

	@property
	def p_value(self) -> float:
		if self.p is not None:
			return float(self.p)
		return P_SELF_DUAL if self.kind == SQUARE else 0.5

	def spec(self, eta: float, seed: int, sample_index: int = 0) -> MeshSpec:
		return MeshSpec(self.kind, float(eta), float(self.k), self.p_value, int(seed), int(sample_index))


@dataclass(frozen=True)
class ScaleSettings:
	"""Scale grids; `a`, `b`, `r_values`, `tail_a` and `local_a` are mesh multiples when `mesh_units` is set."""

	a: Tuple[float, ...] = ()
	b: Tuple[float, ...] = ()
	ratios: Tuple[float, ...] = ()
	triples: Tuple[Tuple[float, float, float], ...] = ()
	events: Tuple[str, ...] = ("pi1",)
	eps: Tuple[float, ...] = ()
	delta: float = DEFAULT_DELTA
	psi: Tuple[float, ...] = ()
	n_levels: Tuple[int, ...] = ()
	r_values: Tuple[float, ...] = ()
	cutoffs: Tuple[float, ...] = ()
	radius: float = 1.0
	tail_a: Optional[float] = None
	local_a: Optional[float] = None
	r: Optional[float] = None
	alpha: float = DEFAULT_GAP_ALPHA
	count: int = 2
	refinement: bool = False
	mesh_units: bool = False

	def plane(self, values, eta: float) -> Tuple[float, ...]:
		scale = eta if self.mesh_units else 1.0
		return tuple(float(v) * scale for v in values)

	def annuli(self, eta: float) -> List[Tuple[float, float]]:
		"""``(a, b)`` pairs: every ``a`` with each ratio, else ``a`` zipped with ``b``."""
		a = self.plane(self.a, eta)
		if self.ratios:
			return [(x, x * r) for x in a for r in self.ratios]
		return list(zip(a, self.plane(self.b, eta)))


@dataclass(frozen=True)
class IsingSettings:
	sign_seed: Optional[int] = None
	test_function: str = "indicator-box"
	support: float = 0.5
	amplitude: float = 1.0
	convention: str = "pi1"

	def function(self) -> TestFunction:
		from .geometry import Box

		return TestFunction(self.test_function, Box.centered((0.0, 0.0), self.support), self.amplitude)


SECTIONS = {"mesh": MeshSettings, "scales": ScaleSettings, "ising": IsingSettings}


@dataclass(frozen=True)
class ExperimentConfig:
	experiment: str
	seed: int = 0
	n_samples: int = DEFAULT_SAMPLES
	first_sample: int = 0
	workers: int = 1
	out: str = DEFAULT_OUT
	normalization: Optional[str] = None
	export_clusters: bool = False
	mesh: MeshSettings = field(default_factory=MeshSettings)
	scales: ScaleSettings = field(default_factory=ScaleSettings)
	ising: IsingSettings = field(default_factory=IsingSettings)
	acceptance: Dict[str, float] = field(default_factory=dict)

	@classmethod
	def from_mapping(cls, data: dict) -> "ExperimentConfig":
		problems: List[str] = []
		top = {f.name for f in fields(cls)}
		kwargs = {}
		for key, value in data.items():
			if key not in top:
				problems.append(f"unknown key {key!r}")
			elif key in SECTIONS:
				kwargs[key] = _section(SECTIONS[key], key, value, problems)
			elif key == "acceptance":
				try:
					kwargs[key] = {str(k): float(v) for k, v in dict(value).items()}
				except (TypeError, ValueError) as exc:
					problems.append(f"acceptance: {exc}")
			else:
				kwargs[key] = value
		if "experiment" not in kwargs:
			problems.append("missing key 'experiment'")
		if problems:
			raise ValidationError(problems)
		return cls(**kwargs)

	@classmethod
	def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
		path = Path(path)
		try:
			with path.open("rb") as fh:
				data = tomllib.load(fh)
		except OSError as exc:
			raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
		except tomllib.TOMLDecodeError as exc:
			raise ValidationError([f"{path}: {exc}"]) from exc
		return cls.from_mapping(data)

	def with_overrides(self, **overrides) -> "ExperimentConfig":
		"""Replace top-level values; None means keep the file's value."""
		given = {k: v for k, v in overrides.items() if v is not None}
		return replace(self, **given) if given else self

	def to_json(self) -> dict:
		return asdict(self)

	@property
	def hash(self) -> str:
		"""sha256 of the canonical JSON of every setting that shapes results."""
		data = self.to_json()
		data.pop("out")
		data.pop("workers")
		text = json.dumps(data, sort_keys=True, separators=(",", ":"))
		return hashlib.sha256(text.encode("utf-8")).hexdigest()

	@property
	def run_name(self) -> str:
		return f"{self.experiment}-{self.hash[:12]}"

	def validate(self) -> List[str]:
		problems: List[str] = []
		if self.experiment not in EXPERIMENTS:
			problems.append(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
		if not _is_int(self.n_samples) or self.n_samples < 1:
			problems.append(f"n_samples must be a positive integer, got {self.n_samples!r}")
		if not _is_int(self.first_sample) or self.first_sample < 0:
			problems.append(f"first_sample must be a non-negative integer, got {self.first_sample!r}")
		if not _is_int(self.workers) or self.workers < 1:
			problems.append(f"workers must be a positive integer, got {self.workers!r}")
		if not _is_int(self.seed) or not (0 <= self.seed < SEED_LIMIT):
			problems.append(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
		problems += _mesh_problems(self.mesh)
		if not problems:
			problems += _EXPERIMENT_CHECKS.get(self.experiment, lambda cfg: [])(self)
		return problems

	def validated(self) -> "ExperimentConfig":
		problems = self.validate()
		if problems:
			raise ValidationError(problems)
		return self


def _is_int(value) -> bool:
	return isinstance(value, int) and not isinstance(value, bool)


def _section(kind, name: str, raw, problems: List[str]):
	if not isinstance(raw, dict):
		problems.append(f"[{name}] must be a table")
		return kind()
	known = {f.name for f in fields(kind)}
	data = dict(raw)
	if kind is MeshSettings and "eta" in data:
		data["etas"] = data.pop("eta")
	out = {}
	for key, value in data.items():
		if key not in known:
			problems.append(f"unknown key {name}.{key}")
			continue
		try:
			out[key] = _coerce(kind, key, value)
		except (TypeError, ValueError) as exc:
			problems.append(f"{name}.{key}: {exc}")
	return kind(**out)


def _coerce(kind, key: str, value):
	if key in ("etas", "a", "b", "ratios", "eps", "psi", "r_values", "cutoffs"):
		return _floats(value)
	if key == "triples":
		return tuple(tuple(float(x) for x in t) for t in value)
	if key == "events":
		return (str(value),) if isinstance(value, str) else tuple(str(v) for v in value)
	if key == "n_levels":
		return tuple(int(v) for v in ([value] if isinstance(value, int) else value))
	default = next(f.default for f in fields(kind) if f.name == key)
	if isinstance(default, bool):
		if not isinstance(value, bool):
			raise TypeError(f"expected a boolean, got {value!r}")
		return value
	if isinstance(default, int) and not isinstance(value, int):
		raise TypeError(f"expected an integer, got {value!r}")
	if isinstance(default, float):
		return float(value)
	return value


def _mesh_problems(mesh: MeshSettings) -> List[str]:
	problems = []
	if mesh.kind not in KINDS:
		problems.append(f"mesh.kind must be one of {KINDS}, got {mesh.kind!r}")
	if not mesh.etas:
		problems.append("mesh.eta needs at least one mesh")
	for eta in mesh.etas:
		if not (0 < eta < mesh.k):
			problems.append(f"mesh.eta={eta} must satisfy 0 < eta < k={mesh.k}")
	if not (0.0 <= mesh.p_value <= 1.0):
		problems.append(f"mesh.p must lie in [0, 1], got {mesh.p_value}")
	if mesh.sweeps < 1:
		problems.append("mesh.sweeps must be positive")
	if mesh.gap < 1:
		problems.append("mesh.gap must be positive")
	return problems


def _need_square(cfg: ExperimentConfig) -> List[str]:
	if cfg.mesh.kind != SQUARE:
		return [f"experiment {cfg.experiment!r} needs mesh.kind = {SQUARE!r}"]
	return []


def _check_sample(cfg: ExperimentConfig) -> List[str]:
	if cfg.export_clusters and cfg.mesh.k < 1.0:
		return ["export_clusters needs Lambda_1 inside the region (k >= 1)"]
	return []


def _check_pi1(cfg: ExperimentConfig) -> List[str]:
	if cfg.scales.radius > cfg.mesh.k:
		return [f"scales.radius={cfg.scales.radius} exceeds the region half-width k={cfg.mesh.k}"]
	if cfg.scales.radius <= 0:
		return ["scales.radius must be positive"]
	return []


def _annulus_problems(cfg: ExperimentConfig) -> List[str]:
	problems = []
	s = cfg.scales
	if s.ratios and s.b:
		problems.append("give scales.ratios or scales.b, not both")
	if not s.ratios and len(s.a) != len(s.b):
		problems.append("scales.a and scales.b must have equal length")
	for eta in cfg.mesh.etas:
		for a, b in s.annuli(eta):
			if not (0 < a < b):
				problems.append(f"annulus (a={a}, b={b}) at eta={eta} needs 0 < a < b")
			elif b > cfg.mesh.k:
				problems.append(f"annulus outer radius {b} at eta={eta} exceeds k={cfg.mesh.k}")
	return problems


def _check_arms(cfg: ExperimentConfig) -> List[str]:
	from .arms import SPECIAL_EVENTS, parse_colours

	problems = _annulus_problems(cfg)
	if not cfg.scales.annuli(cfg.mesh.etas[0]) and not cfg.scales.triples:
		problems.append("arms needs annuli (scales.a with scales.b or scales.ratios) or scales.triples")
	for name in cfg.scales.events:
		if name in SPECIAL_EVENTS:
			continue
		try:
			parse_colours(name)
		except (ParameterError, ValueError):
			problems.append(f"scales.events entry {name!r} is neither a named event nor a colour word")
	for eta in cfg.mesh.etas:
		for t in cfg.scales.triples:
			a, b, c = cfg.scales.plane(t, eta)
			if not (eta < a <= b <= c and a < c and c <= cfg.mesh.k):
				problems.append(f"triple {t} at eta={eta} needs eta < a <= b <= c <= k with a < c")
	return problems


def _check_exponents(cfg: ExperimentConfig) -> List[str]:
	problems = _check_arms(cfg)
	if len(cfg.scales.annuli(cfg.mesh.etas[0])) < 3:
		problems.append("exponent fits need at least three annuli")
	if cfg.scales.tail_a is not None:
		for eta in cfg.mesh.etas:
			a = cfg.scales.plane([cfg.scales.tail_a], eta)[0]
			if not (eta < a <= 1.0 <= cfg.mesh.k):
				problems.append(f"scales.tail_a={a} at eta={eta} needs eta < a <= 1 <= k")
	if cfg.scales.local_a is not None:
		for eta in cfg.mesh.etas:
			a = cfg.scales.plane([cfg.scales.local_a], eta)[0]
			if not (eta < a < 0.5):
				problems.append(f"scales.local_a={a} at eta={eta} needs eta < a < 1/2")
			elif cfg.mesh.k < 1.0 + a:
				problems.append(f"local arm windows at a={a} need k >= {1.0 + a:.4g}")
	return problems


def _box_reach(eps: float, delta: float) -> float:
	return eps * math.ceil(1.0 / eps) + max(eps / 2.0, delta / 2.0 - 3.0 * eps)


def _check_approx(cfg: ExperimentConfig) -> List[str]:
	s = cfg.scales
	problems = []
	if not s.eps:
		problems.append("approx-verify needs scales.eps")
	for eps in s.eps:
		if not (10.0 * eps < s.delta < 1.0):
			problems.append(f"scales need 10 * eps < delta < 1, got eps={eps}, delta={s.delta}")
		if any(eps <= eta for eta in cfg.mesh.etas):
			problems.append(f"eps={eps} must exceed every mesh")
		if _box_reach(eps, s.delta) > cfg.mesh.k:
			problems.append(f"boxes and annuli at eps={eps} need k >= {_box_reach(eps, s.delta):.4g}")
	if s.refinement and 0 < s.delta < 1.0:
		from .boxapprox import refinement_levels

		for eta in cfg.mesh.etas:
			n_lo, n_hi = refinement_levels(eta, s.delta)
			for n in range(n_lo, n_hi + 1):
				if _box_reach(3.0 ** -n, s.delta) > cfg.mesh.k:
					problems.append(f"refinement level {n} at eta={eta} needs k >= {_box_reach(3.0 ** -n, s.delta):.4g}")
	return problems


def _check_measures(cfg: ExperimentConfig) -> List[str]:
	s = cfg.scales
	problems = []
	if not s.n_levels and not s.psi:
		problems.append("measures needs scales.n_levels or scales.psi")
	for n in s.n_levels:
		if n < 0 or not 10.0 * 3.0 ** -n < s.delta:
			problems.append(f"scales.n_levels entry {n} needs 10 * 3^-n < delta={s.delta}")
	if s.n_levels and cfg.mesh.k < 1.0 + s.delta / 2.0 + 2.0 * 3.0 ** -min(s.n_levels):
		problems.append("box-sum annuli around Lambda_1 reach beyond the region; increase k")
	for psi in s.psi:
		if not (0 < psi < 0.5):
			problems.append(f"scales.psi entry {psi} must lie in (0, 1/2)")
		elif any(2.0 * psi <= eta for eta in cfg.mesh.etas):
			problems.append(f"scales.psi entry {psi} must exceed half of every mesh")
	if s.psi and cfg.mesh.k < 1.0 + max(s.psi):
		problems.append("recovered-measure annuli need k >= 1 + psi")
	if cfg.mesh.k < 1.0:
		problems.append("measures need Lambda_1 inside the region (k >= 1)")
	return problems


def _check_largest(cfg: ExperimentConfig) -> List[str]:
	s = cfg.scales
	problems = []
	if cfg.mesh.k < 1.0:
		problems.append("largest needs Lambda_1 inside the region (k >= 1)")
	if s.count < 1:
		problems.append("scales.count must be positive")
	if s.r is not None and not (1.0 < s.r <= cfg.mesh.k):
		problems.append(f"scales.r={s.r} must satisfy 1 < r <= k")
	if s.alpha <= 0:
		problems.append("scales.alpha must be positive")
	return problems


def _check_ising(cfg: ExperimentConfig) -> List[str]:
	problems = _need_square(cfg)
	i = cfg.ising
	if i.test_function not in FUNCTION_KINDS:
		problems.append(f"ising.test_function must be one of {FUNCTION_KINDS}")
	if i.convention not in CONVENTIONS:
		problems.append(f"ising.convention must be one of {CONVENTIONS}")
	if not (0 < i.support <= cfg.mesh.k):
		problems.append(f"ising.support={i.support} must lie in (0, k]")
	if i.sign_seed is not None and not (_is_int(i.sign_seed) and 0 <= i.sign_seed < SEED_LIMIT):
		problems.append("ising.sign_seed must be a 64-bit unsigned integer")
	if any(c <= 0 for c in cfg.scales.cutoffs):
		problems.append("scales.cutoffs must be positive")
	for eta in cfg.mesh.etas:
		for r in cfg.scales.plane(cfg.scales.r_values, eta):
			if not (0 <= r <= cfg.mesh.k):
				problems.append(f"two-point distance {r} at eta={eta} must lie in [0, k]")
	return problems


_EXPERIMENT_CHECKS = {
	"sample": _check_sample,
	"pi1-table": _check_pi1,
	"arms": _check_arms,
	"exponents": _check_exponents,
	"approx-verify": _check_approx,
	"measures": _check_measures,
	"largest": _check_largest,
	"ising": _check_ising,
}

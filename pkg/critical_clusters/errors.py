from __future__ import annotations

from typing import Iterable, List


class CriticalClustersError(Exception):
	"""Base class for every error raised by the package."""

	exit_code = 2


class ConfigurationError(CriticalClustersError):
	pass


class ParameterError(CriticalClustersError):
	pass


class DomainError(CriticalClustersError):
	pass


class FitError(CriticalClustersError):
	pass


class ValidationError(CriticalClustersError):
	"""Experiment configuration rejected; `problems` lists every violation."""

	exit_code = 1

	def __init__(self, problems: Iterable[str]):
		self.problems: List[str] = list(problems)
		super().__init__("; ".join(self.problems) or "invalid configuration")


class AcceptanceError(CriticalClustersError):
	exit_code = 3

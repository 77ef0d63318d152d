from __future__ import annotations

import math
from collections import deque
from typing import Dict, List, Set

import numpy as np
import pytest

from critical_clusters.geometry import SQUARE, TRIANGULAR
from critical_clusters.lattice import P_SELF_DUAL, FkConfig, MeshSpec, SiteConfig, cluster_signs
from critical_clusters.unionfind import label_edges


def neighbour_table(positions: np.ndarray, eta: float) -> List[List[int]]:
	"""Euclidean nearest neighbours at distance eta, found by brute force."""
	d = np.hypot(positions[:, None, 0] - positions[None, :, 0], positions[:, None, 1] - positions[None, :, 1])
	return [list(np.flatnonzero(np.abs(row - eta) < 1e-9)) for row in d]


def unit_steps(kind: str, eta: float) -> np.ndarray:
	n = 6 if kind == TRIANGULAR else 4
	angles = np.arange(n) * 2.0 * math.pi / n
	return eta * np.column_stack([np.cos(angles), np.sin(angles)])


def bfs_components(active: np.ndarray, nbrs: List[List[int]], allowed=None) -> Dict[int, int]:
	"""Component id per active vertex, walking only through active (and allowed) vertices."""
	ok = np.asarray(active, dtype=bool).copy()
	if allowed is not None:
		ok &= allowed
	comp: Dict[int, int] = {}
	for s in np.flatnonzero(ok):
		if s in comp:
			continue
		comp[s] = s
		queue = deque([s])
		while queue:
			u = queue.popleft()
			for w in nbrs[u]:
				if ok[w] and w not in comp:
					comp[w] = s
					queue.append(w)
	return comp


def bfs_bond_components(n: int, edges: np.ndarray, open_: np.ndarray) -> List[Set[int]]:
	adj: List[List[int]] = [[] for _ in range(n)]
	for (u, v), o in zip(edges, open_):
		if o:
			adj[u].append(v)
			adj[v].append(u)
	seen: Set[int] = set()
	out = []
	for s in range(n):
		if s in seen:
			continue
		part = {s}
		queue = deque([s])
		seen.add(s)
		while queue:
			u = queue.popleft()
			for w in adj[u]:
				if w not in seen:
					seen.add(w)
					part.add(w)
					queue.append(w)
		out.append(part)
	return out


def site_config(spec: MeshSpec, red) -> SiteConfig:
	colors = np.zeros(spec.lattice.n_vertices, dtype=bool)
	colors[list(red)] = True
	return SiteConfig(spec, colors)


def fk_config(spec: MeshSpec, bonds, sign_seed: int = 0) -> FkConfig:
	lat = spec.lattice
	bonds = np.asarray(bonds, dtype=bool)
	roots = label_edges(lat.n_vertices, lat.edges[:, 0], lat.edges[:, 1], bonds)
	return FkConfig(spec, bonds, cluster_signs(roots, sign_seed, spec.sample_index), sign_seed=sign_seed)


@pytest.fixture
def tiny_triangular() -> MeshSpec:
	# 11 vertices: 3 on the middle row, 4 on each of the rows above and below
	return MeshSpec(TRIANGULAR, 0.6, 1.0, 0.5, seed=1)


@pytest.fixture
def small_triangular() -> MeshSpec:
	return MeshSpec(TRIANGULAR, 1.0 / 8.0, 1.5, 0.5, seed=2)


@pytest.fixture
def grid3() -> MeshSpec:
	# 3 x 3 square patch, 12 bonds
	return MeshSpec(SQUARE, 0.5, 0.5, P_SELF_DUAL, seed=3)


@pytest.fixture
def small_square() -> MeshSpec:
	return MeshSpec(SQUARE, 1.0 / 8.0, 1.5, P_SELF_DUAL, seed=4)

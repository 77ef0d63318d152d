"""Jitted union-find kernels.

Roots always point at the smallest vertex id of their component, so a root
doubles as the component's lexicographically smallest vertex.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def find(parent, i):
	while parent[i] != i:
		parent[i] = parent[parent[i]]
		i = parent[i]
	return i


@numba.njit(cache=True)
def union(parent, i, j):
	ri = find(parent, i)
	rj = find(parent, j)
	if ri == rj:
		return
	if ri < rj:
		parent[rj] = ri
	else:
		parent[ri] = rj


@numba.njit(cache=True)
def label_edges(n, eu, ev, active):
	"""Root id of every vertex after merging the active edges."""
	parent = np.arange(n)
	for e in range(eu.shape[0]):
		if active[e]:
			union(parent, eu[e], ev[e])
	roots = np.empty(n, dtype=np.int64)
	for i in range(n):
		roots[i] = find(parent, i)
	return roots


@numba.njit(cache=True)
def swendsen_wang_sweep(spins, eu, ev, p, bond_u, colour_u, open_out):
	"""One Swendsen–Wang update in place.

	Bonds between equal spins open with probability `p`; every open cluster
	then takes spin +1 when ``colour_u[root] < 1/2`` and -1 otherwise.
	"""
	n = spins.shape[0]
	parent = np.arange(n)
	for e in range(eu.shape[0]):
		is_open = spins[eu[e]] == spins[ev[e]] and bond_u[e] < p
		open_out[e] = is_open
		if is_open:
			union(parent, eu[e], ev[e])
	for i in range(n):
		r = find(parent, i)
		if colour_u[r] < 0.5:
			spins[i] = 1
		else:
			spins[i] = -1

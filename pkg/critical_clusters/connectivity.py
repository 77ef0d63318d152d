"""Colour layers of a configuration and connected components inside windows.

A `Layer` is one colour seen as a graph on an index grid: red or blue sites of
the triangular lattice, open primal bonds of the square lattice, or closed
bonds read on the dual (plaquette) lattice. Window queries relabel only the
cells near a box, which keeps per-annulus work proportional to the annulus.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import Box, GridFrame, annulus_rings


Restrict = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Layer:
	frame: GridFrame
	active: np.ndarray
	# (dr, dc, open) with open[r, c] marking the link (r, c) -> (r + dr, c + dc)
	links: Tuple[Tuple[int, int, np.ndarray], ...]
	steps: np.ndarray
	colour: int
	index: Optional[np.ndarray] = None


@dataclass
class WindowLabels:
	"""Component labels of one layer inside a window.

	Cells of the window grid outside `domain` carry label -1. `u` and `v` list
	the open links between domain cells, numbered in row-major order of
	``domain`` (the order of ``labels[domain]``).
	"""

	rows: slice
	cols: slice
	px: np.ndarray
	py: np.ndarray
	domain: np.ndarray
	labels: np.ndarray
	n_components: int
	u: np.ndarray
	v: np.ndarray


def _pair_slices(h: int, w: int, dr: int, dc: int):
	src = (slice(0, h - dr), slice(max(0, -dc), w - max(0, dc)))
	dst = (slice(dr, h), slice(max(0, -dc) + dc, w - max(0, dc) + dc))
	return src, dst


def _site_links(active: np.ndarray, offsets: List[Tuple[int, int]]) -> Tuple[Tuple[int, int, np.ndarray], ...]:
	h, w = active.shape
	links = []
	for dr, dc in offsets:
		m = np.zeros_like(active)
		src, dst = _pair_slices(h, w, dr, dc)
		m[src] = active[src] & active[dst]
		links.append((dr, dc, m))
	return tuple(links)


def site_layers(config) -> Dict[int, Layer]:
	lat = config.lattice
	red = np.zeros(lat.shape, dtype=bool)
	red[lat.rows, lat.cols] = config.colors
	blue = lat.inside & ~red
	return {
		1: Layer(lat.frame, red, _site_links(red, lat.forward_offsets), lat.steps, 1, lat.index),
		0: Layer(lat.frame, blue, _site_links(blue, lat.forward_offsets), lat.steps, 0, lat.index),
	}


def fk_layers(config) -> Dict[int, Layer]:
	lat = config.lattice
	ny, nx = lat.shape
	h, v = config.bond_grids()
	h_open = np.zeros((ny, nx), dtype=bool)
	h_open[:, :nx - 1] = h
	v_open = np.zeros((ny, nx), dtype=bool)
	v_open[:ny - 1, :] = v
	primal = Layer(lat.frame, lat.inside.copy(), ((0, 1, h_open), (1, 0, v_open)), lat.steps, 1, lat.index)
	# plaquette (r, c) meets (r, c+1) across v[r, c+1] and (r+1, c) across h[r+1, c]
	d_right = np.zeros((ny - 1, nx - 1), dtype=bool)
	d_right[:, :nx - 2] = ~v[:, 1:nx - 1]
	d_up = np.zeros((ny - 1, nx - 1), dtype=bool)
	d_up[:ny - 2, :] = ~h[1:ny - 1, :]
	dual = Layer(lat.dual_frame, np.ones((ny - 1, nx - 1), dtype=bool), ((0, 1, d_right), (1, 0, d_up)), lat.steps, 0)
	return {1: primal, 0: dual}


def label_window(layer: Layer, box: Box, restrict: Optional[Restrict] = None) -> WindowLabels:
	"""Components of the layer restricted to the closed `box` (and `restrict`)."""
	rs, cs = layer.frame.window(box)
	px, py = layer.frame.positions(rs, cs)
	domain = layer.active[rs, cs] & box.contains(px, py)
	if restrict is not None:
		domain &= restrict(px, py)
	labels = np.full(domain.shape, -1, dtype=np.int64)
	n = int(np.count_nonzero(domain))
	if n == 0:
		none = np.zeros(0, dtype=np.int64)
		return WindowLabels(rs, cs, px, py, domain, labels, 0, none, none)
	ids = np.full(domain.shape, -1, dtype=np.int64)
	ids[domain] = np.arange(n)
	h, w = domain.shape
	us, vs = [], []
	for dr, dc, open_ in layer.links:
		src, dst = _pair_slices(h, w, dr, dc)
		ok = domain[src] & domain[dst] & open_[rs, cs][src]
		us.append(ids[src][ok])
		vs.append(ids[dst][ok])
	u = np.concatenate(us) if us else np.zeros(0, dtype=np.int64)
	v = np.concatenate(vs) if vs else np.zeros(0, dtype=np.int64)
	graph = csr_matrix((np.ones(u.size, dtype=np.int8), (u, v)), shape=(n, n))
	n_comp, lab = connected_components(graph, directed=False)
	labels[domain] = lab
	return WindowLabels(rs, cs, px, py, domain, labels, int(n_comp), u, v)


def connected_to_boundary(layer: Layer, center: Tuple[float, float], b: float, restrict: Optional[Restrict] = None) -> Tuple[WindowLabels, np.ndarray]:
	"""Cells joined to the boundary of ``Lambda_b(center)`` by a path inside it."""
	wl = label_window(layer, Box.centered(center, b), restrict)
	_, outer = annulus_rings(wl.px, wl.py, center, None, b, layer.steps)
	touching = np.unique(wl.labels[wl.domain & outer])
	reach = wl.domain & np.isin(wl.labels, touching)
	return wl, reach

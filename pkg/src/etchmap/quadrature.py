"""Composite Gauss-Legendre quadrature helpers."""

from __future__ import annotations

import numpy as np

_RULE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order not in _RULE_CACHE:
        _RULE_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _RULE_CACHE[order]


def panel_nodes(a: float, b: float, panels: int, order: int = 16
                ) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite Gauss-Legendre rule on [a, b]."""
    x, w = gauss_legendre_rule(order)
    edges = np.linspace(a, b, panels + 1)
    mid = (edges[:-1] + edges[1:]) / 2
    half = (edges[1:] - edges[:-1]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def panels_for_scale(a: float, b: float, scale: float, order: int = 16
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule with panel width tied to a feature scale (scale/2)."""
    width = max(scale / 2.0, 1e-12)
    panels = max(1, int(np.ceil((b - a) / width)))
    return panel_nodes(a, b, panels, order)

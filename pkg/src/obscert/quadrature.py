"""Gauss-Legendre panel quadrature shared by the rate, Bernstein and symbol modules.

All integrands are assumed vectorized (ndarray in, ndarray out).  Improper
integrals are handled by panel growth with explicit stopping/divergence
policies rather than by library adaptivity, so behaviour is deterministic
and the divergence verdicts are inspectable.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np


@functools.lru_cache(maxsize=64)
def gauss_rule(order: int):
    """Reference Gauss-Legendre nodes/weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def panel_nodes(edges, order: int):
    """Map the reference rule onto every panel [edges[i], edges[i+1]].

    Returns flattened (nodes, weights); integrating a function is then a
    single vectorized call plus a dot product.
    """
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_rule(order)
    a = edges[:-1]
    h = np.diff(edges)
    nodes = a[:, None] + (x[None, :] + 1.0) * 0.5 * h[:, None]
    weights = w[None, :] * 0.5 * h[:, None]
    return nodes.ravel(), weights.ravel()


def integrate_panels(fn: Callable, edges, order: int = 16) -> float:
    nodes, weights = panel_nodes(edges, order)
    vals = np.asarray(fn(nodes), dtype=float)
    return float(np.dot(vals, weights))


def _panel_value(fn: Callable, a: float, b: float, order: int) -> float:
    x, w = gauss_rule(order)
    h = b - a
    nodes = a + (x + 1.0) * 0.5 * h
    vals = np.asarray(fn(nodes), dtype=float)
    return float(np.dot(vals, w)) * 0.5 * h


def _refined_panel_value(fn: Callable, a: float, b: float, inner_points, order: int) -> float:
    """Panel integral with edges geometrically condensed around interior points.

    Used when a wide panel contains a known sharp feature (e.g. the
    exponential turn-on of a transformed tail integrand).
    """
    edges = {a, b}
    for p in inner_points:
        step = 0.25
        while step < (b - a):
            for e in (p - step, p + step):
                if a < e < b:
                    edges.add(e)
            step *= 2.0
        if a < p < b:
            edges.add(p)
    return integrate_panels(fn, np.array(sorted(edges)), order)


@dataclass
class TailIntegral:
    """Result of an improper integral over [start, infinity)."""

    value: float
    diverged: bool
    reason: str
    upper_limit: float
    panels: int
    depth: int = 1


_UNIFORM_PANELS = 6
_DOUBLING_PANELS = 24
_GROWTH_STREAK = 6


def integrate_to_infinity(
    fn: Callable,
    start: float,
    *,
    rel_tol: float = 1e-12,
    order: int = 32,
    cap: float = 1e12,
    stop_above: float = None,
    initial_width: float = 0.5,
    max_depth: int = 5,
    family: Callable = None,
    hints: Callable = None,
) -> TailIntegral:
    """Integrate ``fn`` over [start, inf) with doubling panels and log re-substitution.

    One depth walks panels of doubling width and stops once the last panel
    contributes less than ``rel_tol`` of the accumulated value.  If the panel
    budget of a depth runs out before that happens, the remainder is
    integrated in the variable w = ln(u): convergent power-law tails become
    exponentially decaying there, while (near-)divergent tails make the
    accumulated value blow past ``cap`` within a few doubled panels at some
    depth.  Depth exhaustion (slower than iterated-log convergence) is
    declared divergent.

    ``stop_above`` short-circuits threshold comparisons: once the partial
    value exceeds it, the integral returns non-diverged with the partial
    value (a valid lower bound of the true integral).

    ``family(depth)``, when given, supplies the transformed integrand of each
    depth directly (same variable convention: depth d+1 starts at the log of
    where depth d stopped) so integrands can be evaluated symbolically far
    beyond the float range of the original variable.  ``hints(depth)`` may
    list sharp-feature locations of that depth's integrand; wide panels
    containing one are refined around it.
    """
    total = 0.0
    g = fn if family is None else family(1)
    lo = float(start)
    panels_done = 0

    for depth in range(1, max_depth + 1):
        width = float(initial_width) if depth == 1 else 1.0
        small_streak = 0
        budget = _UNIFORM_PANELS + _DOUBLING_PANELS
        depth_hints = list(hints(depth)) if hints is not None else []
        for k in range(budget):
            hi = lo + width
            inner = [p for p in depth_hints if lo < p < hi]
            if inner and width > 2.0:
                contrib = _refined_panel_value(g, lo, hi, inner, order)
            else:
                contrib = _panel_value(g, lo, hi, order)
            panels_done += 1
            if not np.isfinite(contrib):
                return TailIntegral(float("inf"), True, "non-finite panel", hi, panels_done, depth)
            total += contrib
            if stop_above is not None and total > stop_above:
                return TailIntegral(total, False, "exceeded stop threshold", hi, panels_done, depth)
            if total > cap:
                return TailIntegral(
                    total, True, f"accumulated value exceeded cap at depth {depth}",
                    hi, panels_done, depth,
                )
            if total > 0.0 and contrib <= rel_tol * total:
                small_streak += 1
            elif total == 0.0 and contrib == 0.0:
                small_streak += 1
            else:
                small_streak = 0
            if small_streak >= 2 and panels_done >= 2:
                return TailIntegral(total, False, "converged", hi, panels_done, depth)
            lo = hi
            if k >= _UNIFORM_PANELS:
                width *= 2.0

        # budget exhausted: hand the remainder to the next depth via u = e^w
        if lo <= 0.0:
            return TailIntegral(total, True, "cannot re-substitute at nonpositive edge", lo, panels_done, depth)
        if family is not None:
            g = family(depth + 1)
        else:
            inner = g

            def g(w, _inner=inner):
                w = np.asarray(w, dtype=float)
                with np.errstate(over="ignore", invalid="ignore"):
                    u = np.exp(w)
                    vals = u * np.asarray(_inner(u), dtype=float)
                return np.where(np.isnan(vals), 0.0, vals)

        lo = float(np.log(lo))

    return TailIntegral(total, True, "depth budget exhausted (sub-integrable decay)", lo, panels_done, max_depth)


@dataclass
class SingularIntegral:
    """Result of an integral over (0, top] with a possible singularity at 0."""

    value: float
    diverged: bool
    lower_limit: float
    panels: int


def integrate_down_to_zero(
    fn: Callable,
    top: float,
    *,
    rel_tol: float = 1e-12,
    order: int = 16,
    floor: float = 1e-300,
    max_panels: int = 2400,
) -> SingularIntegral:
    """Integrate ``fn`` over (0, top] with panels shrinking geometrically to 0.

    Works for integrable power singularities: panel contributions then decay
    geometrically and the loop stops once they are negligible.  Growing
    contributions flag divergence.
    """
    accum = 0.0
    hi = float(top)
    prev = None
    growth_streak = 0
    small_streak = 0
    panels = 0
    while hi > floor and panels < max_panels:
        lo = hi * 0.5
        contrib = _panel_value(fn, lo, hi, order)
        panels += 1
        if not np.isfinite(contrib):
            return SingularIntegral(float("inf"), True, lo, panels)
        accum += contrib
        if prev is not None and prev > 0.0 and contrib > prev * (1.0 + 1e-12):
            growth_streak += 1
            if growth_streak >= _GROWTH_STREAK:
                return SingularIntegral(accum, True, lo, panels)
        else:
            growth_streak = 0
        if accum > 0.0 and contrib <= rel_tol * accum:
            small_streak += 1
        elif accum == 0.0 and contrib == 0.0:
            small_streak += 1
        else:
            small_streak = 0
        if small_streak >= 2:
            return SingularIntegral(accum, False, lo, panels)
        prev = contrib
        hi = lo
    return SingularIntegral(accum, False, hi, panels)


def geometric_edges(lo: float, hi: float, per_decade: int = 8) -> np.ndarray:
    """Geometrically spaced panel edges between lo and hi (inclusive)."""
    if not (0.0 < lo < hi):
        raise ValueError("need 0 < lo < hi")
    decades = np.log10(hi / lo)
    count = max(2, int(np.ceil(decades * per_decade)) + 1)
    return np.geomspace(lo, hi, count)

"""Bernstein functions, Levy triplets, and subordination of dissipation rates.

A Bernstein function phi is represented either in closed form (powers,
affine maps) or through its Levy triplet (a, b, mu) via

    phi(lam) = a + b*lam + integral over (0, inf) of (1 - exp(-lam t)) mu(dt).

Subordinating a semigroup turns a dissipation rate g into phi o g with the
same constant; the admissibility machinery of :mod:`obscert.rates` then
decides whether the composed rate still certifies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rates as rates_mod
from .certifier import Certificate, ProblemData, certify
from .errors import HypothesisViolation, QuadratureFailure
from .quadrature import integrate_down_to_zero, integrate_to_infinity
from .rates import RateFunction


@dataclass(frozen=True)
class LevyTriplet:
    """Killing rate a >= 0, drift b >= 0, and a measure on (0, inf).

    The measure is either a finite atom list [(t_i, w_i)] or a density
    evaluator with a support interval.  ``density_kind`` tags the canonical
    family rho(t) = scale * t^(-1-s) so that moments have closed forms.
    """

    a: float = 0.0
    b: float = 0.0
    atoms: Optional[np.ndarray] = None  # shape (k, 2): positions, weights
    density: Optional[Callable] = None  # vectorized rho(t)
    support: tuple = (0.0, math.inf)
    density_kind: Optional[str] = None
    density_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise HypothesisViolation("Levy triplet needs a >= 0 and b >= 0")
        if self.atoms is not None and self.density is not None:
            raise ValueError("give either atoms or a density, not both")
        if self.atoms is not None:
            arr = np.asarray(self.atoms, dtype=float).reshape(-1, 2)
            if (arr[:, 0] <= 0).any() or (arr[:, 1] < 0).any():
                raise ValueError("atoms need positions > 0 and weights >= 0")
            object.__setattr__(self, "atoms", arr)

    # -- measure moments -----------------------------------------------------

    def moment_below(self, cutoff: float) -> float:
        """integral of t over mu restricted to (0, cutoff)."""
        if cutoff <= 0:
            return 0.0
        if self.atoms is not None:
            sel = self.atoms[:, 0] < cutoff
            return float(np.sum(self.atoms[sel, 0] * self.atoms[sel, 1]))
        if self.density is None:
            return 0.0
        if self.density_kind == "stable":
            s = self.density_params["s"]
            scale = self.density_params.get("scale", 1.0)
            top = min(cutoff, self.support[1])
            lo = max(0.0, self.support[0])
            hi_part = top ** (1.0 - s) / (1.0 - s)
            lo_part = lo ** (1.0 - s) / (1.0 - s) if lo > 0 else 0.0
            return scale * max(0.0, hi_part - lo_part) if top > lo else 0.0
        top = min(cutoff, self.support[1])
        lo = max(self.support[0], 0.0)
        if top <= lo:
            return 0.0
        dens = self.density

        def integrand(t):
            return t * np.asarray(dens(t), dtype=float)

        res = integrate_down_to_zero(integrand, top, rel_tol=1e-11)
        if res.diverged:
            raise QuadratureFailure("first moment of the measure diverges near 0")
        if lo > 0.0 and res.lower_limit < lo:
            # subtract the part below the support floor
            sub = integrate_down_to_zero(integrand, lo, rel_tol=1e-11)
            return max(0.0, res.value - sub.value)
        return res.value

    def mass_above(self, cutoff: float) -> float:
        """mu([cutoff, inf))."""
        if self.atoms is not None:
            sel = self.atoms[:, 0] >= cutoff
            return float(np.sum(self.atoms[sel, 1]))
        if self.density is None:
            return 0.0
        if self.density_kind == "stable":
            s = self.density_params["s"]
            scale = self.density_params.get("scale", 1.0)
            lo = max(cutoff, self.support[0])
            hi = self.support[1]
            if math.isinf(hi):
                return scale * lo ** (-s) / s
            if hi <= lo:
                return 0.0
            return scale * (lo ** (-s) - hi ** (-s)) / s
        lo = max(cutoff, self.support[0], 1e-300)
        if lo >= self.support[1]:
            return 0.0
        dens = self.density
        top = self.support[1]

        def integrand(v):  # t = e^v
            t = np.exp(np.asarray(v, dtype=float))
            vals = t * np.asarray(dens(t), dtype=float)
            if math.isfinite(top):
                vals = np.where(t > top, 0.0, vals)
            return vals

        res = integrate_to_infinity(integrand, math.log(lo), rel_tol=1e-11)
        if res.diverged:
            raise QuadratureFailure("measure has infinite mass away from 0")
        return res.value

    def check_integrability(self) -> None:
        """Verify integral of min(1, t) d(mu) < infinity; raises otherwise."""
        self.moment_below(1.0)
        self.mass_above(1.0)


def stable_triplet(s: float, scale: float = 1.0) -> LevyTriplet:
    """Triplet (0, 0, scale * t^(-1-s) dt), s in (0, 1); phi grows like lam^s."""
    if not 0.0 < s < 1.0:
        raise ValueError("stable density needs s in (0, 1)")

    def rho(t):
        return scale * np.asarray(t, dtype=float) ** (-1.0 - s)

    return LevyTriplet(
        a=0.0, b=0.0, density=rho, support=(0.0, math.inf),
        density_kind="stable", density_params={"s": s, "scale": scale},
    )


@dataclass(frozen=True)
class BernsteinFunction:
    """phi: (0, inf) -> [0, inf), non-decreasing, with optional triplet backing."""

    kind: str  # power | affine | triplet | custom
    evaluate: Callable
    log_evaluate: Optional[Callable] = None
    triplet: Optional[LevyTriplet] = None
    params: dict = field(default_factory=dict)

    def __call__(self, lam):
        return self.evaluate(lam)


def power(s: float) -> BernsteinFunction:
    """phi(lam) = lam^s for s in (0, 1]."""
    if not 0.0 < s <= 1.0:
        raise ValueError("power Bernstein function needs s in (0, 1]")
    return BernsteinFunction(
        kind="power",
        evaluate=lambda lam: np.asarray(lam, dtype=float) ** s,
        log_evaluate=lambda u: s * np.asarray(u, dtype=float),
        params={"s": s},
    )


def affine_bernstein(a: float, b: float) -> BernsteinFunction:
    """phi(lam) = a + b*lam (killing + drift, no jump part)."""
    if a < 0 or b < 0:
        raise HypothesisViolation("affine Bernstein function needs a, b >= 0")
    log_a = math.log(a) if a > 0 else -math.inf
    log_b = math.log(b) if b > 0 else -math.inf

    def _log_eval(u):
        u = np.asarray(u, dtype=float)
        if b == 0:
            return np.full_like(u, log_a)
        return np.logaddexp(log_a, log_b + u)

    return BernsteinFunction(
        kind="affine",
        evaluate=lambda lam: a + b * np.asarray(lam, dtype=float),
        log_evaluate=_log_eval,
        triplet=LevyTriplet(a=a, b=b),
        params={"a": a, "b": b},
    )


def from_triplet(triplet: LevyTriplet) -> BernsteinFunction:
    """phi via quadrature of the Levy representation."""
    triplet.check_integrability()

    def _eval(lam):
        arr = np.asarray(lam, dtype=float)
        out = np.empty_like(arr)
        flat = arr.ravel()
        res = out.ravel()
        for i, x in enumerate(flat):
            res[i] = _phi_triplet_scalar(triplet, float(x))
        return out if arr.shape else float(out)

    return BernsteinFunction(kind="triplet", evaluate=_eval, triplet=triplet)


def _phi_triplet_scalar(tr: LevyTriplet, lam: float, rel_tol: float = 1e-10) -> float:
    if lam < 0:
        raise ValueError("phi is defined on [0, inf)")
    base = tr.a + tr.b * lam
    if lam == 0.0:
        return base
    if tr.atoms is not None:
        t = tr.atoms[:, 0]
        w = tr.atoms[:, 1]
        return base + float(np.sum(w * (-np.expm1(-lam * t))))
    if tr.density is None:
        return base
    dens = tr.density
    lo_sup, hi_sup = max(tr.support[0], 0.0), tr.support[1]
    split = 1.0 / lam

    def clip(t, vals):
        vals = np.where(t < lo_sup, 0.0, vals)
        if math.isfinite(hi_sup):
            vals = np.where(t > hi_sup, 0.0, vals)
        return vals

    def inner(t):  # (1 - e^{-lam t}) ~ lam t near 0; stable via expm1
        t = np.asarray(t, dtype=float)
        return clip(t, -np.expm1(-lam * t) * np.asarray(dens(t), dtype=float))

    top = min(split, hi_sup)
    value = 0.0
    if top > lo_sup:
        res = integrate_down_to_zero(inner, top, rel_tol=rel_tol)
        if res.diverged:
            raise QuadratureFailure("Levy measure violates min(1,t) integrability near 0")
        value += res.value

    start = max(split, lo_sup, 1e-300)
    if not math.isfinite(hi_sup) or hi_sup > start:

        def outer(v):  # t = e^v
            t = np.exp(np.asarray(v, dtype=float))
            return clip(t, -np.expm1(-lam * t) * np.asarray(dens(t), dtype=float) * t)

        res = integrate_to_infinity(outer, math.log(start), rel_tol=rel_tol)
        if res.diverged:
            raise QuadratureFailure("Levy measure has infinite mass away from 0")
        value += res.value
    return base + value


# ---------------------------------------------------------------------------
# operations


def phi_eval(phi: BernsteinFunction, lam: float) -> float:
    """Evaluate phi at lam > 0 (closed form or triplet quadrature)."""
    if lam <= 0:
        raise ValueError("phi_eval needs lam > 0")
    if phi.kind == "triplet":
        return _phi_triplet_scalar(phi.triplet, float(lam))
    return float(phi.evaluate(lam))


def phi_bounds(triplet: LevyTriplet, lam: float) -> tuple[float, float]:
    """Two-sided growth envelope for the pure-jump case (a = b = 0).

    lower = lam/2 * integral of t over (0, 1/lam); upper adds twice the mass
    at and beyond 1/lam.  phi itself always lies between the two.
    """
    if triplet.a != 0.0 or triplet.b != 0.0:
        raise HypothesisViolation("phi_bounds applies to triplets with a = b = 0")
    if lam <= 0:
        raise ValueError("phi_bounds needs lam > 0")
    inner = triplet.moment_below(1.0 / lam)
    tail = triplet.mass_above(1.0 / lam)
    return 0.5 * lam * inner, lam * inner + 2.0 * tail


def lower_bound_rate(triplet: LevyTriplet) -> RateFunction:
    """The envelope lower bound lam/2 * int_{(0,1/lam)} t mu(dt) as a rate function.

    For the canonical stable density this is the exact power law
    scale * lam^s / (2 (1-s)); generic measures fall back to quadrature.
    Useful to certify subordinated semigroups when only the triplet is known:
    any dissipation rate below phi o g still satisfies the estimate.
    """
    if triplet.a != 0.0 or triplet.b != 0.0:
        raise HypothesisViolation("lower_bound_rate applies to triplets with a = b = 0")
    if triplet.density_kind == "stable":
        s = triplet.density_params["s"]
        scale = triplet.density_params.get("scale", 1.0)
        return rates_mod.polynomial(scale / (2.0 * (1.0 - s)), s)

    def _eval(lam):
        arr = np.asarray(lam, dtype=float)
        out = np.empty_like(arr)
        flat = arr.ravel()
        res = out.ravel()
        for i, x in enumerate(flat):
            res[i] = 0.5 * x * triplet.moment_below(1.0 / x)
        return out if arr.shape else float(out)

    return rates_mod.custom(_eval, label="phi-lower-bound", strictly_increasing=False)


def as_rate(phi: BernsteinFunction) -> RateFunction:
    """View a Bernstein function as a rate function (for composition)."""
    increasing = phi.kind in ("power",) or (phi.kind == "affine" and phi.params.get("b", 0) > 0)
    if phi.kind == "triplet":
        tr = phi.triplet
        increasing = tr.b > 0 or tr.atoms is not None or tr.density is not None
    bijective = phi.kind == "power"
    return RateFunction(
        label=f"phi[{phi.kind}]",
        kind=f"bernstein-{phi.kind}",
        evaluate=phi.evaluate,
        log_evaluate=phi.log_evaluate,
        strictly_increasing=increasing,
        bijective=bijective,
        params=dict(phi.params),
    )


def subordinate_rate(phi: BernsteinFunction, g: RateFunction) -> RateFunction:
    """The composed decay rate lam -> phi(g(lam)); the constant C2 is unchanged."""
    return rates_mod.composite(as_rate(phi), g)


def certify_subordinated(phi: BernsteinFunction, p: ProblemData, *, via_lower_bound: Optional[bool] = None) -> Certificate:
    """Certificate for the subordinated semigroup.

    Requires the bounded-semigroup setting (omega <= 0; rescale first
    otherwise) and h(t) = t, the only case in which dissipation is known to
    transfer.  The decay rate becomes phi o g with the same C2; admissibility
    of (f, phi o g, id) is then decided as usual.

    Triplet-backed phi defaults to its closed growth lower bound (valid a
    fortiori and cheap); pass via_lower_bound=False to force quadrature of
    phi inside the solver.
    """
    if p.omega > 0.0:
        raise HypothesisViolation(
            "subordination needs a bounded semigroup; rescale to omega <= 0 first"
        )
    if not _is_identity(p.h):
        raise HypothesisViolation("dissipation transfer is only available for h(t) = t")
    if via_lower_bound is None:
        via_lower_bound = phi.kind == "triplet"
    if via_lower_bound:
        if phi.kind != "triplet":
            raise ValueError("via_lower_bound needs a triplet-backed Bernstein function")
        g_new = rates_mod.composite(lower_bound_rate(phi.triplet), p.g)
    else:
        g_new = subordinate_rate(phi, p.g)
    p_new = ProblemData(
        f=p.f, g=g_new, h=p.h, M=p.M, omega=p.omega, C1=p.C1, C2=p.C2,
        normC=p.normC, T=p.T, r=p.r, m=p.m,
    )
    return certify(p_new)


def _is_identity(h: RateFunction) -> bool:
    if h.kind == "polynomial":
        return (
            math.isclose(h.params.get("c", 0.0), 1.0)
            and math.isclose(h.params.get("gamma", 0.0), 1.0)
        )
    t = np.array([0.37, 1.0, 5.5, 120.0])
    return bool(np.allclose(np.asarray(h.evaluate(t), dtype=float), t, rtol=1e-12))


def subordinate_diagonal(eigen_rates, phi: BernsteinFunction, t: float) -> np.ndarray:
    """Multipliers exp(-phi(mu_j) t) of the subordinated diagonal semigroup."""
    if t < 0:
        raise ValueError("need t >= 0")
    mu = np.asarray(eigen_rates, dtype=float)
    if (mu < 0).any():
        raise ValueError("eigenvalue decay rates must be >= 0")
    vals = np.empty_like(mu)
    pos = mu > 0
    if pos.any():
        vals[pos] = np.asarray(phi.evaluate(mu[pos]), dtype=float)
    if (~pos).any():
        # phi(0+) = a for triplet-backed functions, 0 for pure powers
        vals[~pos] = _phi_at_zero(phi)
    return np.exp(-vals * t)


def _phi_at_zero(phi: BernsteinFunction) -> float:
    if phi.kind == "power":
        return 0.0
    if phi.triplet is not None:
        return phi.triplet.a
    return float(phi.evaluate(1e-12))


def check_complete_monotonicity(phi: BernsteinFunction, lambdas, rel_tol: float = 1e-6) -> bool:
    """Spot-check the alternating-sign pattern of the first three divided differences."""
    lam = np.sort(np.asarray(lambdas, dtype=float))
    vals = np.array([phi_eval(phi, x) for x in lam])
    scale = np.max(np.abs(vals)) + 1e-300
    d1 = np.diff(vals) / np.diff(lam)
    if (d1 < -rel_tol * scale).any():
        return False
    mid1 = 0.5 * (lam[1:] + lam[:-1])
    d2 = np.diff(d1) / np.diff(mid1)
    if (d2 > rel_tol * scale).any():
        return False
    mid2 = 0.5 * (mid1[1:] + mid1[:-1])
    d3 = np.diff(d2) / np.diff(mid2)
    return not (d3 < -rel_tol * scale).any()

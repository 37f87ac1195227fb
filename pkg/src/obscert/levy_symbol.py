"""Negative-definite symbols on R^n and the dissipation rates they induce.

A symbol is determined by (c, d, Q, mu):

    psi(xi) = c + i<d, xi> + <xi, Q xi>
              + integral (1 - exp(-i<x, xi>) - i<x, xi>/(1+|x|^2)) mu(dx).

For radially symmetric Levy measures the real part collapses to a 1D
integral of (1 - angular mean of cos) against the radial profile, which is
what the quadrature here evaluates.  The quadratic minorant

    phi(xi) = integral over the ball B(0, 1/|xi|) of <xi, x>^2 mu(dx)

sandwiches Re psi as (11/24) phi <= Re psi <= 2 (phi + tail mass), and
(11/24) inf phi outside a frequency cube is the dissipation rate fed to the
certifier.  (The sandwich provides the lower bound with factor 11/24, so
that factor — not its reciprocal — is the valid rate constant.)
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import j0

from . import rates as rates_mod
from .errors import (
    HypothesisViolation,
    MonotonicityUnverifiedWarning,
    QuadratureFailure,
    UnsupportedDimension,
)
from .quadrature import integrate_down_to_zero, integrate_to_infinity
from .rates import RateFunction

SANDWICH_LOWER = 11.0 / 24.0

_SPHERE_SURFACE = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


def fractional_stable_coefficient(n: int, alpha: float) -> float:
    """Normalization making the r^(-n-2a) profile produce Re psi = |xi|^(2a)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("fractional stable density needs alpha in (0, 1)")
    return (
        4.0 ** alpha
        * math.gamma(n / 2.0 + alpha)
        / (math.pi ** (n / 2.0) * abs(math.gamma(-alpha)))
    )


@dataclass(frozen=True)
class RadialDensity:
    """Radial profile rho(r) of an absolutely continuous Levy measure."""

    kind: str  # indicator | power_law | fractional_stable | custom
    rho: Callable
    support: tuple = (0.0, math.inf)
    params: dict = field(default_factory=dict)

    def moment(self, power: float, lo: float, hi: float, n: int) -> Optional[float]:
        """Closed form of integral r^power * rho(r) dr over (lo, hi), when known."""
        s_lo, s_hi = self.support
        lo = max(lo, s_lo)
        hi = min(hi, s_hi)
        if hi <= lo:
            return 0.0
        if self.kind == "indicator":
            q = power
        elif self.kind in ("power_law", "fractional_stable"):
            q = power + self.params["exponent"]
        else:
            return None
        scale = self.params.get("coefficient", 1.0)
        if abs(q + 1.0) < 1e-14:
            return scale * math.log(hi / lo)
        hi_part = hi ** (q + 1.0) / (q + 1.0) if math.isfinite(hi) else (
            0.0 if q + 1.0 < 0 else math.inf
        )
        lo_part = lo ** (q + 1.0) / (q + 1.0) if lo > 0 else (
            0.0 if q + 1.0 > 0 else math.inf
        )
        return scale * (hi_part - lo_part)


def indicator_density() -> RadialDensity:
    """rho = 1 on (0, 1): a finite Levy measure, Re psi stays bounded."""
    return RadialDensity(
        kind="indicator",
        rho=lambda r: np.where((np.asarray(r, float) > 0) & (np.asarray(r, float) < 1), 1.0, 0.0),
        support=(0.0, 1.0),
        params={"coefficient": 1.0},
    )


def power_law_density(exponent: float, coefficient: float = 1.0) -> RadialDensity:
    """rho(r) = coefficient * r^exponent on (0, inf)."""

    def rho(r):
        return coefficient * np.asarray(r, dtype=float) ** exponent

    return RadialDensity(
        kind="power_law", rho=rho, params={"exponent": exponent, "coefficient": coefficient}
    )


def fractional_stable_density(n: int, alpha: float) -> RadialDensity:
    coeff = fractional_stable_coefficient(n, alpha)

    def rho(r):
        return coeff * np.asarray(r, dtype=float) ** (-n - 2.0 * alpha)

    return RadialDensity(
        kind="fractional_stable",
        rho=rho,
        params={"exponent": -n - 2.0 * alpha, "coefficient": coeff, "alpha": alpha},
    )


@dataclass(frozen=True)
class SymbolModel:
    """Levy-Khinchin data (c, d, Q, mu) on R^n with optional closed-form tag."""

    n: int
    c: float = 0.0
    d: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    density: Optional[RadialDensity] = None
    atoms: Optional[tuple] = None  # (positions (k, n), weights (k,))
    closed_form: Optional[dict] = None  # {"kind": "fractional_laplacian", "alpha": a}

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if self.c < 0:
            raise HypothesisViolation("killing rate c must be >= 0")
        d = np.zeros(self.n) if self.d is None else np.asarray(self.d, dtype=float).reshape(self.n)
        object.__setattr__(self, "d", d)
        Q = np.zeros((self.n, self.n)) if self.Q is None else np.asarray(self.Q, dtype=float)
        if Q.shape != (self.n, self.n) or not np.allclose(Q, Q.T, atol=1e-12):
            raise HypothesisViolation("Q must be a symmetric n x n matrix")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise HypothesisViolation("Q must be positive semi-definite")
        object.__setattr__(self, "Q", Q)
        if self.atoms is not None:
            pos, w = self.atoms
            pos = np.asarray(pos, dtype=float).reshape(-1, self.n)
            w = np.asarray(w, dtype=float).reshape(-1)
            if (w < 0).any():
                raise ValueError("atom weights must be >= 0")
            if (np.linalg.norm(pos, axis=1) == 0).any():
                raise ValueError("Levy measures put no mass at the origin")
            object.__setattr__(self, "atoms", (pos, w))
        if self.density is not None and self.atoms is not None:
            raise ValueError("give either a radial density or atoms, not both")
        if self.density is not None:
            self._check_levy_integrability()

    def _check_levy_integrability(self) -> None:
        """integral of min(|x|^2, 1) d(mu) must be finite."""
        sigma = _SPHERE_SURFACE.get(self.n)
        if sigma is None:
            return  # higher dimensions only with closed-form tags; checked at use
        inner = self.density.moment(self.n + 1, 0.0, 1.0, self.n)
        tail = self.density.moment(self.n - 1, 1.0, math.inf, self.n)
        if inner is None or tail is None:
            inner = _radial_moment_quadrature(self.density, self.n + 1, 0.0, 1.0)
            tail = _radial_tail_quadrature(self.density, self.n - 1, 1.0)
        if not (math.isfinite(inner) and math.isfinite(tail)):
            raise QuadratureFailure("Levy measure violates min(|x|^2, 1) integrability")


def _radial_moment_quadrature(density: RadialDensity, power: float, lo: float, hi: float) -> float:
    rho = density.rho
    s_lo, s_hi = density.support
    lo = max(lo, s_lo)
    hi = min(hi, s_hi)
    if hi <= lo:
        return 0.0

    def integrand(r):
        r = np.asarray(r, dtype=float)
        return r ** power * np.asarray(rho(r), dtype=float)

    res = integrate_down_to_zero(integrand, hi, rel_tol=1e-11)
    if res.diverged:
        return math.inf
    if lo > res.lower_limit and lo > 0:
        sub = integrate_down_to_zero(integrand, lo, rel_tol=1e-11)
        return max(0.0, res.value - sub.value)
    return res.value


def _radial_tail_quadrature(density: RadialDensity, power: float, lo: float) -> float:
    rho = density.rho
    s_lo, s_hi = density.support
    lo = max(lo, s_lo, 1e-300)
    if lo >= s_hi:
        return 0.0

    def integrand(v):  # r = e^v
        r = np.exp(np.asarray(v, dtype=float))
        vals = r ** (power + 1.0) * np.asarray(rho(r), dtype=float)
        if math.isfinite(s_hi):
            vals = np.where(r > s_hi, 0.0, vals)
        return vals

    res = integrate_to_infinity(integrand, math.log(lo), rel_tol=1e-11)
    if res.diverged:
        return math.inf
    return res.value


def _one_minus_mean(n: int, z):
    """1 - (angular average of cos over the sphere), stable near z = 0."""
    z = np.asarray(z, dtype=float)
    if n == 1:
        return 2.0 * np.sin(0.5 * z) ** 2
    if n == 2:
        small = np.abs(z) < 1e-3
        zs = np.where(small, z, 1.0)
        series = zs ** 2 / 4.0 - zs ** 4 / 64.0
        return np.where(small, series, 1.0 - j0(z))
    if n == 3:
        small = np.abs(z) < 1e-3
        zs = np.where(small, z, 1.0)
        series = zs ** 2 / 6.0 - zs ** 4 / 120.0
        with np.errstate(invalid="ignore", divide="ignore"):
            exact = 1.0 - np.sin(z) / np.where(z == 0.0, 1.0, z)
        return np.where(small, series, exact)
    raise UnsupportedDimension(f"radial quadrature supports n <= 3, got n = {n}")


def _amplitude(n: int, kr):
    """Decay of the oscillating part of the angular mean at large k*r."""
    if n == 1:
        return 1.0
    if n == 2:
        return math.sqrt(2.0 / (math.pi * max(kr, 1e-300)))
    return 1.0 / max(kr, 1e-300)


def _re_psi_radial(model: SymbolModel, k: float, rel_tol: float = 1e-9) -> float:
    """sigma * integral (1 - mean_n(k r)) rho(r) r^(n-1) dr by panel quadrature.

    Splits at the first oscillation scale pi/k: below it the integrand is
    smooth with an integrable singularity at 0, beyond it panels of half a
    period are walked until the leftover oscillation is provably below
    tolerance; the remaining monotone tail is added as a pure mass term.
    """
    n = model.n
    density = model.density
    sigma = _SPHERE_SURFACE[n]
    rho = density.rho
    s_lo, s_hi = density.support

    def weight(r):
        r = np.asarray(r, dtype=float)
        vals = _one_minus_mean(n, k * r) * np.asarray(rho(r), dtype=float) * r ** (n - 1.0)
        vals = np.where(r < s_lo, 0.0, vals)
        if math.isfinite(s_hi):
            vals = np.where(r > s_hi, 0.0, vals)
        return vals

    r1 = min(math.pi / k, s_hi if math.isfinite(s_hi) else math.inf)
    res = integrate_down_to_zero(weight, r1, rel_tol=rel_tol * 1e-2)
    if res.diverged:
        raise QuadratureFailure("Re psi integrand is not integrable near 0")
    accum = res.value

    hi_cut = s_hi if math.isfinite(s_hi) else math.inf
    if r1 >= hi_cut:
        return sigma * accum

    # oscillatory mid-range: half-period panels until the leftover
    # oscillation bound drops below tolerance
    width = math.pi / k
    lo = r1
    max_panels = 60000
    from .quadrature import _panel_value

    for i in range(max_panels):
        hi = lo + width
        if hi >= hi_cut:
            accum += _panel_value(weight, lo, hi_cut, 12)
            return sigma * accum
        accum += _panel_value(weight, lo, hi, 12)
        lo = hi
        env = float(np.asarray(rho(lo), dtype=float)) * lo ** (n - 1.0)
        osc_bound = 2.0 * env * _amplitude(n, k * lo) / k
        if i >= 4 and osc_bound <= rel_tol * max(abs(accum), 1e-300):
            break
    else:
        raise QuadratureFailure("oscillatory panel budget exhausted in Re psi")

    # monotone remainder: pure tail mass, oscillation already below tolerance
    tail = density.moment(n - 1.0, lo, math.inf, n)
    if tail is None:
        tail = _radial_tail_quadrature(density, n - 1.0, lo)
    if not math.isfinite(tail):
        raise QuadratureFailure("Levy tail mass diverges")
    return sigma * (accum + tail)


def psi_eval(model: SymbolModel, xi) -> complex:
    """psi(xi) = c + i<d,xi> + <xi,Qxi> + jump integral (closed form when tagged)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float)).reshape(model.n)
    base = complex(model.c + np.dot(xi, model.Q @ xi), float(np.dot(model.d, xi)))
    if model.closed_form is not None:
        if model.closed_form.get("kind") != "fractional_laplacian":
            raise ValueError(f"unknown closed form {model.closed_form}")
        alpha = model.closed_form["alpha"]
        return base + float(np.linalg.norm(xi)) ** (2.0 * alpha)
    if model.atoms is not None:
        pos, w = model.atoms
        phase = pos @ xi
        comp = 1.0 - np.exp(-1j * phase) - 1j * phase / (1.0 + np.sum(pos ** 2, axis=1))
        return base + complex(np.sum(w * comp))
    if model.density is None:
        return base
    if model.n > 3:
        raise UnsupportedDimension("quadrature-backed symbols support n <= 3")
    k = float(np.linalg.norm(xi))
    if k == 0.0:
        return base
    # radial symmetry kills the imaginary part of the jump integral
    return base + _re_psi_radial(model, k)


def re_psi(model: SymbolModel, xi) -> float:
    return psi_eval(model, xi).real


def phi_quadratic(model: SymbolModel, xi, rel_tol: float = 1e-11) -> float:
    """Quadratic minorant: integral of <xi, x>^2 over the ball of radius 1/|xi|."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float)).reshape(model.n)
    k = float(np.linalg.norm(xi))
    if k == 0.0:
        raise ValueError("phi_quadratic needs xi != 0")
    radius = 1.0 / k
    if model.atoms is not None:
        pos, w = model.atoms
        sel = np.linalg.norm(pos, axis=1) < radius
        proj = pos[sel] @ xi
        return float(np.sum(w[sel] * proj ** 2))
    if model.density is None:
        return 0.0
    if model.n > 3:
        raise UnsupportedDimension("quadrature-backed symbols support n <= 3")
    density = model.density
    n = model.n
    s_lo, s_hi = density.support
    top = min(radius, s_hi if math.isfinite(s_hi) else radius)
    if top <= s_lo:
        return 0.0
    rho = density.rho

    def integrand(r):
        r = np.asarray(r, dtype=float)
        vals = r ** (n + 1.0) * np.asarray(rho(r), dtype=float)
        return np.where(r < s_lo, 0.0, vals)

    res = integrate_down_to_zero(integrand, top, rel_tol=rel_tol)
    if res.diverged:
        raise QuadratureFailure("second moment of the Levy measure diverges near 0")
    # spherical average of <xi, x>^2 at radius r is |xi|^2 r^2 / n
    return _SPHERE_SURFACE[n] * k ** 2 / n * res.value


def mu_tail(model: SymbolModel, radius: float) -> float:
    """mu of the complement of the ball B(0, radius)."""
    if model.atoms is not None:
        pos, w = model.atoms
        sel = np.linalg.norm(pos, axis=1) >= radius
        return float(np.sum(w[sel]))
    if model.density is None:
        return 0.0
    tail = model.density.moment(model.n - 1.0, radius, math.inf, model.n)
    if tail is None:
        tail = _radial_tail_quadrature(model.density, model.n - 1.0, radius)
    return _SPHERE_SURFACE[model.n] * tail


@dataclass
class SandwichResult:
    lower_ok: bool
    upper_ok: bool
    re_psi: float
    phi: float
    tail_mass: float


def sandwich_check(model: SymbolModel, xi, tol: float = 1e-7) -> SandwichResult:
    """Verify (11/24) phi <= Re psi <= 2 (phi + mu(B^c)) at one frequency.

    Stated for the pure-jump part: requires c = 0 and Q = 0 (a drift d only
    shifts the imaginary part and is allowed).
    """
    if model.c != 0.0 or not np.allclose(model.Q, 0.0):
        raise HypothesisViolation("sandwich_check needs c = 0 and Q = 0")
    xi = np.atleast_1d(np.asarray(xi, dtype=float)).reshape(model.n)
    re = re_psi(model, xi)
    phi = phi_quadratic(model, xi)
    tail = mu_tail(model, 1.0 / float(np.linalg.norm(xi)))
    slack = tol * (1.0 + abs(re) + abs(phi) + abs(tail))
    lower_ok = SANDWICH_LOWER * phi <= re + slack
    upper_ok = re <= 2.0 * (phi + tail) + slack
    return SandwichResult(bool(lower_ok), bool(upper_ok), re, phi, tail)


# ---------------------------------------------------------------------------
# dissipation rates


@dataclass
class DissipationRate:
    """Value of the certified decay rate at one cutoff, with search evidence."""

    value: float
    lam: float
    face_value: float
    quad_term: float
    ray_monotone: bool
    heuristic: bool
    shell_min: Optional[float] = None


def _phi_radial_profile(model: SymbolModel):
    """phi as a function of |xi| for radial measures (vectorized by loop)."""

    def profile(k_values):
        arr = np.atleast_1d(np.asarray(k_values, dtype=float))
        out = np.empty_like(arr)
        xi0 = np.zeros(model.n)
        for i, kv in enumerate(arr):
            xi0[0] = kv
            out[i] = phi_quadratic(model, xi0)
        return out

    return profile


def _face_grid_min(model: SymbolModel, lam: float, points: int = 64, rounds: int = 2) -> float:
    """Minimize phi over the boundary of the cube (-lam, lam)^n."""
    n = model.n
    if n == 1:
        return min(phi_quadratic(model, np.array([lam])), phi_quadratic(model, np.array([-lam])))

    def face_points(axis, sign, centers, half):
        axes = [a for a in range(n) if a != axis]
        grids = np.meshgrid(
            *[np.linspace(centers[a] - half[a], centers[a] + half[a], points) for a in axes],
            indexing="ij",
        )
        pts = np.zeros((grids[0].size, n))
        for i, a in enumerate(axes):
            pts[:, a] = np.clip(grids[i].ravel(), -lam, lam)
        pts[:, axis] = sign * lam
        return pts

    best_val = math.inf
    best_pt = None
    centers = {a: 0.0 for a in range(n)}
    half = {a: lam for a in range(n)}
    for _ in range(rounds + 1):
        for axis in range(n):
            for sign in (-1.0, 1.0):
                pts = face_points(axis, sign, centers, half)
                vals = np.array([phi_quadratic(model, p) for p in pts])
                i = int(np.argmin(vals))
                if vals[i] < best_val:
                    best_val = float(vals[i])
                    best_pt = pts[i]
        if best_pt is None:
            break
        centers = {a: best_pt[a] for a in range(n)}
        half = {a: half[a] / 8.0 for a in range(n)}
    return best_val


def dissipation_rate(model: SymbolModel, lam: float) -> DissipationRate:
    """(11/24) * inf of phi outside (-lam, lam)^n, plus alpha*lam^2 when Q > 0.

    For radial measures with phi verified non-decreasing along rays the
    infimum sits on the cube boundary (face minimum; for n = 1 it is
    phi(lam)).  When ray-monotonicity cannot be confirmed, the boundary
    value is still reported but flagged heuristic, together with the
    smallest value found on a coarse expanding shell: the true infimum may
    be lower, so the result must not be used as a certified bound.
    """
    if lam <= 0:
        raise ValueError("dissipation_rate needs lam > 0")
    eigs = np.linalg.eigvalsh(model.Q)
    if eigs.min() < -1e-12:
        raise HypothesisViolation("Q must be positive semi-definite")
    q_min = float(eigs.min())
    if q_min < 1e-14 and eigs.max() > 1e-12:
        raise HypothesisViolation(
            "mixed Q (singular but nonzero) is outside the supported dissipation cases"
        )
    quad_term = q_min * lam ** 2 if q_min > 1e-14 else 0.0

    if model.density is not None:
        profile = _phi_radial_profile(model)
        ks = np.geomspace(lam, 1e4 * lam, 48)
        vals = profile(ks)
        diffs = np.diff(vals)
        ray_monotone = bool((diffs >= -1e-9 * (np.abs(vals[:-1]) + 1e-300)).all())
        if ray_monotone:
            face_value = float(profile(lam)[0])
            return DissipationRate(
                quad_term + SANDWICH_LOWER * face_value,
                lam, face_value, quad_term, True, False, None,
            )
        face_ks = np.geomspace(lam, math.sqrt(model.n) * lam, 33)
        face_value = float(np.min(profile(face_ks)))
        shell = np.geomspace(lam, 1024.0 * lam, 96)
        shell_min = float(np.min(profile(shell)))
        warnings.warn(
            "phi is not ray-monotone at this cutoff; reported rate is the cube-boundary "
            "value and is heuristic",
            MonotonicityUnverifiedWarning,
        )
        return DissipationRate(
            quad_term + SANDWICH_LOWER * face_value,
            lam, face_value, quad_term, False, True, shell_min,
        )

    face_value = _face_grid_min(model, lam)
    # atom measures: confirm boundary optimality on a coarse shell
    shell_min = face_value
    factors = np.geomspace(1.0, 1024.0, 48)
    xi0 = np.zeros(model.n)
    for fac in factors:
        xi0[0] = lam * fac
        shell_min = min(shell_min, phi_quadratic(model, xi0))
    heuristic = shell_min < face_value * (1.0 - 1e-9)
    if heuristic:
        warnings.warn(
            "phi decreases beyond the cube boundary; reported rate is heuristic",
            MonotonicityUnverifiedWarning,
        )
    return DissipationRate(
        quad_term + SANDWICH_LOWER * face_value,
        lam, face_value, quad_term, not heuristic, heuristic, shell_min,
    )


def dissipation_rate_function(model: SymbolModel) -> RateFunction:
    """The map lam -> dissipation_rate(model, lam).value as a rate function.

    Pure power-law profiles (power_law, fractional_stable) with Q = 0 give an
    exact closed-form power rate; anything else is a sampled custom rate.
    """
    eigs = np.linalg.eigvalsh(model.Q)
    q_min = float(eigs.min())
    has_quad = q_min > 1e-14
    if model.density is not None and model.density.kind in ("power_law", "fractional_stable") and not has_quad:
        n = model.n
        p = model.density.params["exponent"]
        coeff = model.density.params.get("coefficient", 1.0)
        sigma = _SPHERE_SURFACE[n]
        exponent = -n - p  # from (k^2/n) * sigma * integral_0^{1/k} r^{n+1+p}
        moment_power = n + 2.0 + p
        if moment_power <= 0:
            raise QuadratureFailure("second moment diverges; no dissipation rate exists")
        scale = SANDWICH_LOWER * sigma * coeff / (n * moment_power)
        if exponent <= 0:
            raise HypothesisViolation(
                "dissipation rate is non-increasing; the observability route cannot apply"
            )
        return rates_mod.polynomial(scale, exponent)

    def _eval(lam):
        arr = np.atleast_1d(np.asarray(lam, dtype=float))
        out = np.empty_like(arr)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MonotonicityUnverifiedWarning)
            for i, x in enumerate(arr):
                out[i] = dissipation_rate(model, float(x)).value
        return out if np.ndim(lam) else float(out)

    return rates_mod.custom(_eval, label="symbol-dissipation-rate")


def interpolate_dissipation(p: float, p0: float, C_p0: float, g: RateFunction):
    """Transfer an L2 dissipation estimate to L_p by interpolation.

    theta solves 1/p = (1-theta)/p0 + theta/2; the constant becomes
    C_p0^(1-theta) and the rate is scaled by theta.  p = 2 is the trivial
    endpoint (theta = 1).
    """
    if p == 2.0:
        return 1.0, g
    if p0 < 1.0:
        raise HypothesisViolation(f"p0 must lie in [1, inf), got {p0}")
    lo, hi = min(p0, 2.0), max(p0, 2.0)
    if not (lo < p < hi):
        raise HypothesisViolation(f"p must lie strictly between p0 = {p0} and 2, got {p}")
    theta = (1.0 / p - 1.0 / p0) / (0.5 - 1.0 / p0)
    return C_p0 ** (1.0 - theta), g.scaled(theta)

"""Rate functions and the admissibility machinery for rate triples (f, g, h).

A rate function is a strictly positive map on (0, infinity).  The solver
decides whether a triple satisfies the two structural conditions

  * lam -> lam / g(f^{-1}(lam)) is non-increasing, and
  * the tail integral  I_m(a) = int_a^inf h^{-1}((4+m) lam / g(f^{-1}(lam))) dlam/lam
    drops below (ln 2 / 4) * min(1, T) for some threshold frequency a,

and returns the smallest such threshold.  Threshold frequencies routinely
exceed the float64 range (double-exponential growth for iterated-log rates),
so every built-in kind carries overflow-safe log-space evaluation
``ln r(e^u)`` and the whole solve runs in log coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import BracketFailure, Divergent, NonInvertible
from .quadrature import integrate_to_infinity

LN2 = math.log(2.0)

# ln r(e^u) is trusted up to |values| ~ 1e308; direct evaluation only up to
# exp(_DIRECT_LOG_MAX).  Custom kinds without a log evaluator are clamped at
# the direct limit, which errs on the divergent side (see tail_integral).
_DIRECT_LOG_MAX = 690.0
_CLAMP_LOG = math.log(1e300)
# frequencies with ln(lam) beyond this carry < ~1e-11 of a threshold-scale
# tail integral but exceed float64 exponent resolution; they are truncated
_DEEP_WALL = 1e13


@dataclass(frozen=True, eq=False)
class RateFunction:
    """A positive rate on (0, inf) with monotonicity metadata and log-space support.

    ``evaluate`` is vectorized.  ``log_evaluate`` maps u = ln(lam) to
    ln r(lam) without forming lam; built-in kinds provide it in closed form.
    ``log_excess`` evaluates ln r(e^x) - x at x = u + carry without the
    catastrophic cancellation of subtracting two huge logs (the tail solver
    probes x beyond 1e15, where ln r(e^x) and x agree to machine precision
    for slowly-varying rates).  ``inverse``/``log_inverse`` are optional
    closed-form inverses.
    """

    label: str
    kind: str
    evaluate: Callable
    strictly_increasing: bool
    bijective: bool
    log_evaluate: Optional[Callable] = None
    log_excess: Optional[Callable] = None
    # excess at x = e^(logx), for frequencies whose log overflows float64
    log_excess_deep: Optional[Callable] = None
    inverse: Optional[Callable] = None
    log_inverse: Optional[Callable] = None
    domain_floor: float = 1e-12
    params: dict = field(default_factory=dict)

    def __call__(self, lam):
        return self.evaluate(lam)

    def log_value(self, u):
        """ln r(e^u), overflow-safe for built-in kinds."""
        if self.log_evaluate is not None:
            return self.log_evaluate(u)
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            vals = np.log(self.evaluate(np.exp(np.minimum(u, _DIRECT_LOG_MAX))))
        return vals if u.shape else float(vals)

    def excess(self, u, carry=0.0):
        """ln r(e^x) - x at x = u + carry, cancellation-free when supported."""
        if self.log_excess is not None:
            return self.log_excess(u, carry)
        x = np.asarray(u, dtype=float) + carry
        return np.asarray(self.log_value(x), dtype=float) - x

    def excess_deep(self, logx):
        """excess at x = e^(logx); used when x itself overflows float64.

        Kinds without a deep form saturate the argument at 1e300, which
        understates slowly-growing rates and so errs on the divergent side.
        """
        if self.log_excess_deep is not None:
            return self.log_excess_deep(logx)
        with np.errstate(over="ignore"):
            x_sat = np.exp(np.minimum(np.asarray(logx, dtype=float), 690.0))
        return self.excess(np.minimum(x_sat, 1e300))

    def log_invert(self, log_y):
        """ln r^{-1}(e^w) for w = log_y; closed form when available, else bracketing."""
        if self.log_inverse is not None:
            return self.log_inverse(log_y)
        arr = np.asarray(log_y, dtype=float)
        out = np.empty_like(arr)
        flat = arr.ravel()
        res = out.ravel()
        for i, w in enumerate(flat):
            res[i] = self._log_invert_scalar(float(w))
        return out if arr.shape else float(out)

    def invert_value(self, y: float) -> float:
        """Solve r(lam) = y; see :func:`invert`."""
        return invert(self, y)

    def _log_invert_scalar(self, w: float) -> float:
        if not self.strictly_increasing or not self.bijective:
            raise NonInvertible(f"rate '{self.label}' is not flagged increasing+bijective")

        def resid(u):
            return self.log_value(u) - w

        lo, hi = -1.0, 1.0
        flo, fhi = resid(lo), resid(hi)
        for _ in range(140):
            if flo <= 0.0 <= fhi:
                break
            if flo > 0.0:
                lo = lo * 2.0 if lo < 0 else -1.0
                flo = resid(lo)
            if fhi < 0.0:
                hi = hi * 2.0 if hi > 0 else 1.0
                fhi = resid(hi)
            if lo < math.log(1e-300) and hi > math.log(1e300):
                break
        if not (flo <= 0.0 <= fhi):
            raise BracketFailure(
                f"no bracket for '{self.label}' inverse at log-target {w:.6g}"
            )
        return brentq(resid, lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=200)

    def scaled(self, factor: float) -> "RateFunction":
        """The rate lam -> factor * r(lam), keeping log-space support."""
        return composite(affine(slope=factor, offset=0.0), self)


# ---------------------------------------------------------------------------
# built-in kinds


def polynomial(c: float, gamma: float) -> RateFunction:
    """r(lam) = c * lam**gamma with c > 0, gamma > 0."""
    if c <= 0 or gamma <= 0:
        raise ValueError("polynomial rate needs c > 0 and gamma > 0")
    lc = math.log(c)

    def _excess_deep(logx):
        logx = np.asarray(logx, dtype=float)
        if gamma == 1.0:
            return np.full_like(logx, lc)
        with np.errstate(over="ignore"):
            return (gamma - 1.0) * np.exp(logx) + lc

    return RateFunction(
        label=f"{c:g}*lam^{gamma:g}",
        kind="polynomial",
        evaluate=lambda lam: c * np.asarray(lam, dtype=float) ** gamma,
        log_evaluate=lambda u: lc + gamma * np.asarray(u, dtype=float),
        # linear in the exponent: the carry enters exactly
        log_excess=lambda u, carry=0.0: (gamma - 1.0) * np.asarray(u, dtype=float)
        + ((gamma - 1.0) * carry + lc),
        log_excess_deep=_excess_deep,
        inverse=lambda y: (np.asarray(y, dtype=float) / c) ** (1.0 / gamma),
        log_inverse=lambda w: (np.asarray(w, dtype=float) - lc) / gamma,
        strictly_increasing=True,
        bijective=True,
        params={"c": c, "gamma": gamma},
    )


def identity() -> RateFunction:
    r = polynomial(1.0, 1.0)
    return replace(r, label="id", params={"c": 1.0, "gamma": 1.0})


def exponential() -> RateFunction:
    """r(lam) = exp(lam).  Range is (1, inf); fine as a decay rate g."""

    def _log_eval(u):
        with np.errstate(over="ignore"):
            return np.exp(np.asarray(u, dtype=float))

    def _excess(u, carry=0.0):
        x = np.asarray(u, dtype=float) + carry
        with np.errstate(over="ignore"):
            return np.exp(x) - x

    return RateFunction(
        label="exp(lam)",
        kind="exponential",
        evaluate=lambda lam: np.exp(np.asarray(lam, dtype=float)),
        log_evaluate=_log_eval,
        log_excess=_excess,
        log_excess_deep=lambda logx: np.full_like(np.asarray(logx, dtype=float), np.inf),
        inverse=lambda y: np.log(np.asarray(y, dtype=float)),
        log_inverse=lambda w: np.log(np.asarray(w, dtype=float)),
        strictly_increasing=True,
        bijective=True,
        params={},
    )


def log_power(s: float) -> RateFunction:
    """r(lam) = lam * ln(1+lam)**s with s > 1."""
    if s <= 1:
        raise ValueError("log_power needs s > 1")

    def _eval(lam):
        lam = np.asarray(lam, dtype=float)
        return lam * np.log1p(lam) ** s

    def _log_eval(u):
        u = np.asarray(u, dtype=float)
        # ln(1+e^u) via logaddexp is exact for u anywhere in float range
        return u + s * np.log(np.logaddexp(0.0, u))

    def _excess(u, carry=0.0):
        x = np.asarray(u, dtype=float) + carry
        return s * np.log(np.logaddexp(0.0, x))

    return RateFunction(
        label=f"lam*ln(1+lam)^{s:g}",
        kind="log_power",
        evaluate=_eval,
        log_evaluate=_log_eval,
        log_excess=_excess,
        log_excess_deep=lambda logx: s * np.asarray(logx, dtype=float),
        strictly_increasing=True,
        bijective=True,
        params={"s": s},
    )


def loglog_power(s: float) -> RateFunction:
    """r(lam) = lam * ln(1+lam) * ln(1+ln(1+lam))**s with s > 1.

    This is the iterated-log rate whose threshold frequency is a double
    exponential; the extra ln(1+lam) factor is what makes 1/r integrable
    at infinity.
    """
    if s <= 1:
        raise ValueError("loglog_power needs s > 1")

    def _eval(lam):
        lam = np.asarray(lam, dtype=float)
        l1 = np.log1p(lam)
        return lam * l1 * np.log1p(l1) ** s

    def _log_eval(u):
        u = np.asarray(u, dtype=float)
        l1 = np.logaddexp(0.0, u)  # ln(1+e^u)
        return u + np.log(l1) + s * np.log(np.log1p(l1))

    def _excess(u, carry=0.0):
        x = np.asarray(u, dtype=float) + carry
        l1 = np.logaddexp(0.0, x)
        return np.log(l1) + s * np.log(np.log1p(l1))

    return RateFunction(
        label=f"lam*ln(1+lam)*lnln^{s:g}",
        kind="loglog_power",
        evaluate=_eval,
        log_evaluate=_log_eval,
        log_excess=_excess,
        log_excess_deep=lambda logx: np.asarray(logx, dtype=float)
        + s * np.log(np.asarray(logx, dtype=float)),
        strictly_increasing=True,
        bijective=True,
        params={"s": s},
    )


def affine(slope: float, offset: float = 0.0) -> RateFunction:
    """r(lam) = offset + slope * lam with slope >= 0, offset >= 0."""
    if slope < 0 or offset < 0:
        raise ValueError("affine rate needs slope >= 0 and offset >= 0")
    if slope == 0 and offset == 0:
        raise ValueError("affine rate must not vanish identically")
    log_off = math.log(offset) if offset > 0 else -math.inf
    log_slope = math.log(slope) if slope > 0 else -math.inf

    def _eval(lam):
        return offset + slope * np.asarray(lam, dtype=float)

    def _log_eval(u):
        u = np.asarray(u, dtype=float)
        if slope == 0:
            return np.full_like(u, log_off)
        return np.logaddexp(log_off, log_slope + u)

    def _excess(u, carry=0.0):
        x = np.asarray(u, dtype=float) + carry
        if slope == 0:
            return log_off - x
        with np.errstate(over="ignore", under="ignore"):
            return log_slope + np.log1p((offset / slope) * np.exp(-x))

    inverse = None
    log_inverse = None
    bij = slope > 0 and offset == 0.0
    if slope > 0:
        def inverse(y):
            return (np.asarray(y, dtype=float) - offset) / slope

        def log_inverse(w):
            w = np.asarray(w, dtype=float)
            if offset == 0.0:
                return w - log_slope
            with np.errstate(invalid="ignore"):
                return w - log_slope + np.log1p(-offset * np.exp(-w))

    def _excess_deep(logx):
        logx = np.asarray(logx, dtype=float)
        if slope > 0:
            return np.full_like(logx, log_slope)
        with np.errstate(over="ignore"):
            return log_off - np.exp(logx)

    return RateFunction(
        label=f"{offset:g}+{slope:g}*lam",
        kind="affine",
        evaluate=_eval,
        log_evaluate=_log_eval,
        log_excess=_excess,
        log_excess_deep=_excess_deep,
        inverse=inverse,
        log_inverse=log_inverse,
        strictly_increasing=slope > 0,
        bijective=bij,
        params={"slope": slope, "offset": offset},
    )


def composite(outer: RateFunction, inner: RateFunction) -> RateFunction:
    """r(lam) = outer(inner(lam))."""
    log_eval = None
    if outer.log_evaluate is not None and inner.log_evaluate is not None:
        def log_eval(u):
            return outer.log_evaluate(inner.log_evaluate(u))

    log_excess = None
    if outer.log_excess is not None and inner.log_excess is not None:
        def log_excess(u, carry=0.0):
            # chain rule on excesses: the inner excess becomes the carry of the
            # outer evaluation point, never forming the (possibly absorbed) sum
            ei = inner.log_excess(u, carry)
            return ei + outer.log_excess(u, carry + ei)

    def log_excess_deep(logx, _inner=inner, _outer=outer):
        logx = np.asarray(logx, dtype=float)
        ei = np.asarray(_inner.excess_deep(logx), dtype=float)
        # ln(x + ei) = logx + log1p(ei / x); drop the shift when it vanishes
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            frac = ei * np.exp(-logx)
        frac = np.where(np.isnan(frac), 0.0, np.maximum(frac, -0.999999))
        logvi = np.where(np.isposinf(ei), np.inf, logx + np.log1p(frac))
        return ei + np.asarray(_outer.excess_deep(logvi), dtype=float)

    inverse = None
    log_inverse = None
    if outer.inverse is not None and inner.inverse is not None:
        def inverse(y):
            return inner.inverse(outer.inverse(y))
    if outer.log_inverse is not None and inner.log_inverse is not None:
        def log_inverse(w):
            return inner.log_inverse(outer.log_inverse(w))

    return RateFunction(
        label=f"({outer.label})o({inner.label})",
        kind="composite",
        evaluate=lambda lam: outer.evaluate(inner.evaluate(lam)),
        log_evaluate=log_eval,
        log_excess=log_excess,
        log_excess_deep=log_excess_deep,
        inverse=inverse,
        log_inverse=log_inverse,
        strictly_increasing=outer.strictly_increasing and inner.strictly_increasing,
        bijective=outer.bijective and inner.bijective,
        domain_floor=inner.domain_floor,
        params={"outer": outer.label, "inner": inner.label},
    )


def custom(
    fn: Callable,
    *,
    label: str = "custom",
    strictly_increasing: bool = False,
    bijective: bool = False,
    inverse: Optional[Callable] = None,
    log_fn: Optional[Callable] = None,
    log_excess_fn: Optional[Callable] = None,
    domain_floor: float = 1e-12,
) -> RateFunction:
    """Wrap a user evaluator.

    Without ``log_fn`` the evaluator is trusted up to lam ~ 1e299; without
    ``log_excess_fn`` (signature (u, carry) -> ln r(e^(u+carry)) - (u+carry))
    the deep-tail probes fall back to subtracting logs, which saturates for
    rates within a few log-factors of the identity.
    """
    return RateFunction(
        label=label,
        kind="custom",
        evaluate=fn,
        log_evaluate=log_fn,
        log_excess=log_excess_fn,
        inverse=inverse,
        strictly_increasing=strictly_increasing,
        bijective=bijective,
        domain_floor=domain_floor,
        params={},
    )


# ---------------------------------------------------------------------------
# operations


def invert(r: RateFunction, y: float) -> float:
    """Solve r(lam) = y for lam > 0.

    Uses the closed-form inverse when present, otherwise bracketing bisection
    (Brent) on the log-log residual.  The result satisfies
    |r(lam) - y| <= 1e-10 * (1 + y) for well-scaled rates.
    """
    if not r.strictly_increasing or not r.bijective:
        raise NonInvertible(f"rate '{r.label}' is not flagged increasing+bijective")
    if y <= 0:
        raise ValueError("invert needs y > 0")
    if r.inverse is not None:
        return float(r.inverse(y))
    return math.exp(r._log_invert_scalar(math.log(y)))


@dataclass
class RatioCheck:
    ok: bool
    first_violation: Optional[dict]
    grid_lo: float
    grid_hi: float
    points: int


def check_monotone_ratio(
    f: RateFunction,
    g: RateFunction,
    *,
    grid=None,
    lo: float = 1e-6,
    hi: float = 1e12,
    points: int = 512,
    rel_tol: float = 1e-12,
    log_lo: Optional[float] = None,
    log_hi: Optional[float] = None,
) -> RatioCheck:
    """Sample lam / g(f^{-1}(lam)) on a geometric grid and test non-increase.

    Returns the first index pair violating monotonicity by more than rel_tol.
    ``log_lo``/``log_hi`` give the grid in ln(lam) directly, for ranges whose
    endpoints overflow float64.
    """
    if grid is not None:
        u = np.log(np.asarray(grid, dtype=float))
        lo, hi, points = float(np.exp(u[0])), float(np.exp(u[-1])), len(u)
    elif log_lo is not None or log_hi is not None:
        u = np.linspace(log_lo if log_lo is not None else math.log(lo),
                        log_hi if log_hi is not None else math.log(hi), points)
        with np.errstate(over="ignore"):
            lo, hi = float(np.exp(u[0])), float(np.exp(u[-1]))
    else:
        u = np.linspace(math.log(lo), math.log(hi), points)
    # ln(lam / g(f^{-1}(lam))) = excess_f(v) - excess_g(v) at v = ln f^{-1}(lam):
    # exact even where ln(lam) and ln(g(...)) agree to machine precision
    v = np.asarray(f.log_invert(u), dtype=float)
    log_ratio = np.asarray(f.excess(v), dtype=float) - np.asarray(g.excess(v), dtype=float)
    diffs = np.diff(log_ratio)
    bad = np.nonzero(diffs > rel_tol)[0]
    if bad.size == 0:
        return RatioCheck(True, None, lo, hi, points)
    i = int(bad[0])
    viol = {
        "lambda_low": float(np.exp(u[i])),
        "lambda_high": float(np.exp(u[i + 1])),
        "log_ratio_low": float(log_ratio[i]),
        "log_ratio_high": float(log_ratio[i + 1]),
    }
    return RatioCheck(False, viol, lo, hi, points)


def _tail_family(f: RateFunction, g: RateFunction, h: RateFunction, log_a: float, m: float):
    """Per-depth integrands of I_m(a) after lam = a e^u and iterated log substitutions.

    Depth 1 walks u with ell = ln(lam) = log_a + u; depth d substitutes the
    previous variable by its exponential, so depth 3 already reaches
    frequencies with ln(ln(lam)) ~ 1e300.  The log of the tail ratio is
    formed as excess_f(v) - excess_g(v) at v = ln f^{-1}(lam) (exact at any
    finite ell) or from the deep excess forms when ell itself overflows.
    Values of h^{-1} beyond 1e300 are treated as divergent contributions.
    """
    log_4m = math.log(4.0 + m)
    # asymptotic slope of ln f^{-1}: exact 1/gamma for power-type f, sampled
    # otherwise; only the deep branch uses it
    v1 = float(np.asarray(f.log_invert(1.0e8), dtype=float))
    v2 = float(np.asarray(f.log_invert(2.0e8), dtype=float))
    inv_slope = (v2 - v1) / 1.0e8
    log_inv_slope = math.log(inv_slope) if inv_slope > 0 else 0.0

    def z_exact(ell):
        v = np.asarray(f.log_invert(ell), dtype=float)
        ratio = np.asarray(f.excess(v), dtype=float) - np.asarray(g.excess(v), dtype=float)
        return np.asarray(h.log_invert(log_4m + ratio), dtype=float)

    def z_deep(logell):
        # beyond ln(lam) ~ 1e13 the Jacobian and the excess share a huge
        # common term whose rounding (ulp >= 2e-3) would corrupt the
        # exponent; the true mass out there is below ~1e-11 of any
        # threshold-scale integral, so it is dropped (see module notes)
        logell = np.asarray(logell, dtype=float)
        logv = logell + log_inv_slope
        ratio = np.asarray(f.excess_deep(logv), dtype=float) - np.asarray(
            g.excess_deep(logv), dtype=float
        )
        z = np.asarray(h.log_invert(log_4m + ratio), dtype=float)
        return np.where(logell > _DEEP_WALL, -np.inf, z)

    def _emit(z, lnJ):
        # contribution exp(lnJ + z); h^{-1} beyond the clamp is divergent mass
        diverging = z > _CLAMP_LOG
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            out = np.exp(np.minimum(lnJ + z, 705.0))
        out = np.where(np.isnan(out), 0.0, out)
        return np.where(diverging, np.inf, out)

    def family(depth: int):
        if depth == 1:
            def F(u):
                u = np.asarray(u, dtype=float)
                return _emit(z_exact(log_a + u), np.zeros_like(u))

            return F
        if depth > 4:
            def F(y):  # pragma: no cover - only reached by pathological rates
                raise Divergent("tail needs more than quadruple-exponential range")

            return F

        def F(y):
            y = np.asarray(y, dtype=float)
            with np.errstate(over="ignore"):
                if depth == 2:
                    w = y
                    lnJ = y.copy()
                elif depth == 3:
                    ev = np.exp(y)
                    w = ev
                    lnJ = ev + y
                else:
                    ev = np.exp(y)
                    w = np.exp(ev)
                    lnJ = w + ev + y
                u = np.exp(w)
            ell = log_a + u
            finite = np.isfinite(ell)
            z = np.where(finite, z_exact(np.where(finite, ell, 1.0)), 0.0)
            if (~finite).any():
                with np.errstate(over="ignore", under="ignore"):
                    corr = log_a * np.exp(-np.minimum(w, 745.0))
                corr = np.where(np.isnan(corr), 0.0, np.maximum(corr, -0.999999))
                logell = w + np.log1p(corr)
                z = np.where(finite, z, z_deep(np.where(finite, 1.0, logell)))
            return _emit(z, lnJ)

        return F

    def hints(depth: int):
        # the transformed integrand turns over where e^w ~ log_a (and its
        # iterated logs at greater depths); wide panels there must be refined
        if log_a <= 1.0:
            return []
        marks = []
        point = math.log(log_a)
        for d in range(2, 5):
            if depth == d and point > 0.0:
                marks.append(point)
            point = math.log(point) if point > 1.0 else -math.inf
            if not math.isfinite(point):
                break
        return marks

    family.hints = hints
    return family


def tail_integral(
    f: RateFunction,
    g: RateFunction,
    h: RateFunction,
    a: float,
    m: float = 0.0,
    *,
    rel_tol: float = 1e-12,
    order: int = 32,
) -> float:
    """I_m(a); raises :class:`Divergent` when the integral cannot be finite."""
    if a <= 0:
        raise ValueError("tail integral needs a > 0")
    if m < 0:
        raise ValueError("tail integral needs m >= 0")
    for r in (f, h):
        if not (r.strictly_increasing and r.bijective):
            raise NonInvertible(f"rate '{r.label}' must be strictly increasing and bijective")
    fam = _tail_family(f, g, h, math.log(a), m)
    res = integrate_to_infinity(fam(1), 0.0, rel_tol=rel_tol, order=order, family=fam)
    if res.diverged:
        raise Divergent(f"tail integral from a={a:g} diverges ({res.reason})")
    return res.value


@dataclass
class AdmissibilityReport:
    """Outcome of the admissibility decision for a triple (f, g, h) at horizon T."""

    monotone_ratio_ok: bool
    integrable_ok: bool
    positivity_ok: bool
    lambda_T: Optional[float]
    log_lambda_T: Optional[float]
    threshold: float
    tail_value: Optional[float]
    T: float
    m: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def admissible(self) -> bool:
        return self.monotone_ratio_ok and self.integrable_ok and self.positivity_ok

    def reason(self) -> str:
        if self.admissible:
            return "admissible"
        parts = []
        if not self.positivity_ok:
            parts.append("g is not strictly positive on the sample grid")
        if not self.monotone_ratio_ok:
            parts.append("lam/g(f^-1(lam)) is not non-increasing")
        if not self.integrable_ok:
            parts.append("tail integral diverges")
        return "; ".join(parts)

    def to_dict(self) -> dict:
        return {
            "monotone_ratio_ok": self.monotone_ratio_ok,
            "integrable_ok": self.integrable_ok,
            "positivity_ok": self.positivity_ok,
            "lambda_T": self.lambda_T,
            "log_lambda_T": self.log_lambda_T,
            "threshold": self.threshold,
            "tail_value": self.tail_value,
            "T": self.T,
            "m": self.m,
            "diagnostics": self.diagnostics,
        }


def _positivity_check(g: RateFunction) -> tuple[bool, dict]:
    lam = np.geomspace(max(g.domain_floor, 1e-12), 1e12, 64)
    with np.errstate(all="ignore"):
        vals = np.asarray(g.evaluate(lam), dtype=float)
    bad = ~(vals > 0.0)
    if bad.any():
        i = int(np.nonzero(bad)[0][0])
        return False, {"first_nonpositive_lambda": float(lam[i]), "value": float(vals[i])}
    return True, {}


def solve_lambda_T(
    f: RateFunction,
    g: RateFunction,
    h: RateFunction,
    T: float,
    m: float = 0.0,
    *,
    rel_tol: float = 1e-9,
    quad_rel_tol: float = 1e-13,
) -> AdmissibilityReport:
    """Smallest threshold a with I_m(a) <= (ln 2 / 4) min(1, T).

    Bisection runs on ln(a); the returned endpoint is the one where the
    inequality holds, so the report always satisfies
    tail_value <= threshold when a threshold exists.

    The ratio condition is verified on [lambda_T + 1/2, infinity): that is
    the region the geometric iteration consumes (its frequencies start at
    lambda_0 / 2 >= lambda_T + 1/2 for every admissible constant K), and
    several reference decay rates are ratio-monotone only beyond a bounded
    head.  The standalone :func:`check_monotone_ratio` keeps the global
    default grid.
    """
    if T <= 0:
        raise ValueError("solve_lambda_T needs T > 0")
    threshold = (LN2 / 4.0) * min(1.0, T)
    diagnostics: dict = {}

    pos_ok, pos_diag = _positivity_check(g)
    diagnostics.update(pos_diag)
    if not pos_ok:
        ratio = check_monotone_ratio(f, g)
        return AdmissibilityReport(
            ratio.ok, False, False, None, None, threshold, None, T, m, diagnostics
        )

    floor = max(f.domain_floor, g.domain_floor, 1e-12)
    log_floor = math.log(floor)

    def tail_at(log_a: float, stop: bool = True) -> float:
        # bisection only compares against the threshold, so the integral may
        # stop early (with a valid lower bound) well above it
        fam = _tail_family(f, g, h, log_a, m)
        res = integrate_to_infinity(
            fam(1), 0.0, rel_tol=quad_rel_tol,
            stop_above=16.0 * threshold if stop else None, family=fam,
        )
        if res.diverged:
            raise Divergent(res.reason)
        return res.value

    def reject_not_integrable(reason: str) -> AdmissibilityReport:
        diagnostics["divergence"] = reason
        ratio = check_monotone_ratio(f, g)
        if ratio.first_violation is not None:
            diagnostics["ratio_violation"] = ratio.first_violation
        return AdmissibilityReport(
            ratio.ok, False, True, None, None, threshold, None, T, m, diagnostics
        )

    try:
        val = tail_at(log_floor)
    except Divergent as exc:
        return reject_not_integrable(str(exc))

    if val <= threshold:
        hi = -math.inf
        lam_T = 0.0
        tail_hi = val
    else:
        # expand the upper bracket multiplicatively in log space; early-stopped
        # evaluations make each probe cheap, so divergence is classified only
        # when the expansion budget runs out
        lo = log_floor
        hi = max(1.0, log_floor + 1.0)
        expansions = 0
        try:
            hi_val = tail_at(hi)
            while hi_val > threshold:
                lo = hi
                hi *= 2.0
                expansions += 1
                if expansions > 1030 or not math.isfinite(hi):
                    # never dropped below the threshold anywhere representable:
                    # genuinely divergent, or convergent only beyond
                    # double-exponential range; both are rejections
                    tail_at(min(lo, 700.0), stop=False)
                    raise Divergent(
                        "tail integral stays above the threshold for all "
                        "representable frequencies"
                    )
                hi_val = tail_at(hi)
        except Divergent as exc:
            return reject_not_integrable(str(exc))

        # bisect to relative width rel_tol on a (absolute width on ln a),
        # bottoming out at float resolution for gigantic thresholds
        while hi - lo > max(rel_tol, 4.0 * abs(hi) * np.finfo(float).eps):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if tail_at(mid) <= threshold:
                hi = mid
            else:
                lo = mid
        tail_hi = tail_at(hi)
        with np.errstate(over="ignore"):
            lam_T = float(np.exp(hi))

    # ratio condition on the region the iteration uses: [lambda_T + 1/2, inf)
    log_lo = float(np.logaddexp(hi, math.log(0.5))) if math.isfinite(hi) else math.log(0.5)
    log_hi_grid = max(math.log(1e12), log_lo + 27.7)
    ratio = check_monotone_ratio(f, g, log_lo=log_lo, log_hi=log_hi_grid)
    if ratio.first_violation is not None:
        diagnostics["ratio_violation"] = ratio.first_violation
    diagnostics["ratio_grid_log_range"] = [log_lo, log_hi_grid]
    if not ratio.ok:
        return AdmissibilityReport(
            False, True, True, None, None, threshold, None, T, m, diagnostics
        )
    return AdmissibilityReport(
        True, True, True, lam_T, hi, threshold, tail_hi, T, m, diagnostics
    )


# ---------------------------------------------------------------------------
# closed-form threshold frequencies (cross-check oracles)

TABLE_K = LN2 / 16.0


def table_log_lambda_T(kind: str, T: float, s: Optional[float] = None) -> float:
    """ln(lambda_T) closed forms for the reference decay-rate table (f = h = id).

    Kinds: 'exponential', 'power', 'log_power', 'loglog_power'.  The table is
    stated for T <= 1; larger horizons clamp at min(1, T).
    """
    kt = TABLE_K * min(1.0, T)
    if kind == "exponential":
        return math.log(math.log(1.0 / kt))
    if s is None or s <= 1:
        raise ValueError("table kinds other than 'exponential' need s > 1")
    base = -math.log((s - 1.0) * kt) / (s - 1.0)  # ln lambda_T of the power row
    if kind == "power":
        return base
    if kind == "log_power":
        return math.exp(base)
    if kind == "loglog_power":
        return math.exp(math.exp(base))
    raise ValueError(f"unknown table kind '{kind}'")


def polynomial_lambda_T(
    c1: float, c2: float, gamma1: float, gamma2: float, gamma3: float, T: float
) -> tuple[float, float]:
    """(K, lambda_T) for the polynomial family f=c1 lam^g1, g=c2 lam^g2, h=t^g3."""
    if not (gamma2 > gamma1 > 0 and gamma3 > 0 and c1 > 0 and c2 > 0):
        raise ValueError("polynomial family needs gamma2 > gamma1 > 0, gamma3 > 0, c > 0")
    expo = gamma1 * gamma3 / (gamma2 - gamma1)
    K = (c1 ** gamma2 / c2 ** gamma1) ** (1.0 / (gamma2 - gamma1)) * (
        4.0 ** (1.0 / gamma3) * (gamma1 * gamma3 / (gamma2 - gamma1)) * (4.0 / LN2)
    ) ** expo
    lam_T = K / min(1.0, T ** expo)
    return K, lam_T

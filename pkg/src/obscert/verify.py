"""Numerical validation of certified inequalities, plus oracle reference constants.

Every check samples states on a concrete model, computes the worst ratio of
left- to right-hand side, and records pass/fail against the certified bound
with a 1e-9 relative indulgence.  The r = 2 oracle assembles the
observability Gramian and solves the generalized eigenproblem against
S(T)*S(T); it is exact for the discretized problem, so

    empirical lower bound  <=  optimal constant  <=  certified bound

is the sandwich every admissible scenario must satisfy.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla

from .certifier import Certificate
from .errors import SingularGramian
from .quadrature import panel_nodes
from .rates import RateFunction
from .simgroup import DiagonalModel, GridModel, ThickSet, masked_lp_norm_rows

Model = Union[DiagonalModel, GridModel]

PASS_SLACK = 1e-9


def _mask_of(E) -> np.ndarray:
    return E.mask if isinstance(E, ThickSet) else np.asarray(E, dtype=bool)


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass
class CheckRow:
    name: str
    samples: int
    max_ratio: float
    bound: float
    log_bound: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "max_ratio": self.max_ratio,
            "bound": self.bound,
            "log_bound": self.log_bound,
            "passed": self.passed,
            "extra": self.extra,
        }


@dataclass
class VerificationReport:
    """Per-check records plus an environment echo (seeds, sizes, tolerances)."""

    header: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    def add(self, row: CheckRow) -> CheckRow:
        self.rows.append(row)
        return row

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {"header": self.header, "rows": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["name", "samples", "max_ratio", "bound", "log_bound", "passed"])
        for r in self.rows:
            writer.writerow([r.name, r.samples, repr(r.max_ratio), repr(r.bound),
                             repr(r.log_bound), r.passed])
        return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _passed(max_ratio: float, bound: float) -> bool:
    return max_ratio <= bound * (1.0 + PASS_SLACK)


def _log_passed(log_max_ratio: float, log_bound: float) -> bool:
    return log_max_ratio <= log_bound + math.log1p(PASS_SLACK)


# ---------------------------------------------------------------------------
# time quadrature layout


def time_edges(T: float, panels: int) -> np.ndarray:
    """Composite panel edges on [0, T], geometrically refined near t = 0."""
    if panels < 8:
        raise ValueError("need at least 8 time panels")
    n_geo = panels // 2
    geo = np.geomspace(T * 1e-8, T * 0.125, n_geo)
    lin = np.linspace(T * 0.125, T, panels - n_geo + 1)[1:]
    return np.concatenate([[0.0], geo, lin])


def time_quadrature(T: float, panels: int, order: int = 8):
    return panel_nodes(time_edges(T, panels), order)


# ---------------------------------------------------------------------------
# hypothesis checks


def check_dissipation(
    model: Model,
    rate: RateFunction,
    h: RateFunction,
    C2: float,
    lambda_grid,
    t_grid,
    samples: int = 32,
    rng=None,
    omega: float = 0.0,
) -> CheckRow:
    """Worst ratio of |(I-P_lam) S(t) x| against C2 exp(-rate(lam) h(t) + omega t).

    `rate` is parametrized by the projection cutoff itself (compose with
    sqrt upstream for eigenbasis scaling).  Alongside random unit states,
    the first excluded mode is probed deterministically per cutoff: it is
    the equality case on diagonal models and the sharpest negative control.
    """
    rng = _as_rng(rng)
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    worst = 0.0
    argworst = {}
    for lam in lambda_grid:
        states = _random_unit_states(model, samples, rng)
        probe = _first_excluded_state(model, lam)
        if probe is not None:
            states = np.concatenate([states, probe[None]], axis=0)
        tails = _project_complement_batch(model, lam, states)
        norms0 = _norm_batch(model, tails)
        rate_val = float(rate.evaluate(lam))
        for t in t_grid:
            evolved = _evolve_batch(model, tails, float(t))
            norms = _norm_batch(model, evolved)
            bound = C2 * math.exp(-rate_val * float(h.evaluate(t)) + omega * t)
            ratios = norms / np.maximum(bound, 1e-300)
            i = int(np.argmax(ratios))
            if ratios[i] > worst:
                worst = float(ratios[i])
                argworst = {"lambda": float(lam), "t": float(t), "tail_norm": float(norms[i]),
                            "initial_tail_norm": float(norms0[i])}
    return CheckRow(
        name="dissipation",
        samples=int(samples * lambda_grid.size * t_grid.size),
        max_ratio=worst,
        bound=1.0,
        log_bound=0.0,
        passed=_passed(worst, 1.0),
        extra=argworst,
    )


def check_uncertainty(
    model: Model,
    E,
    f: RateFunction,
    C1: float,
    lambda_grid,
    samples: int = 64,
    rng=None,
    p: Optional[float] = None,
) -> CheckRow:
    """Worst ratio of |P_lam x| against C1 exp(f(lam)) |C P_lam x|.

    Vanishing observations of nonzero projected states are reported in the
    row (degenerate_samples), not raised: they indicate the set is too small
    for the grid resolution.
    """
    rng = _as_rng(rng)
    mask = _mask_of(E)
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    worst = 0.0
    degenerate = 0
    argworst = {}
    for lam in lambda_grid:
        states = _random_unit_states(model, samples, rng)
        proj = _project_batch(model, lam, states)
        norms = _norm_batch(model, proj)
        obs = _observe_batch(model, mask, proj, p)
        bound = C1 * math.exp(float(f.evaluate(lam)))
        live = norms > 1e-14
        dead = live & (obs <= 0.0)
        degenerate += int(np.count_nonzero(dead))
        ok = live & (obs > 0.0)
        if ok.any():
            ratios = norms[ok] / (bound * obs[ok])
            i = int(np.argmax(ratios))
            if ratios[i] > worst:
                worst = float(ratios[i])
                argworst = {"lambda": float(lam)}
    extra = dict(argworst)
    if degenerate:
        extra["degenerate_samples"] = degenerate
    return CheckRow(
        name="uncertainty",
        samples=int(samples * lambda_grid.size),
        max_ratio=worst,
        bound=1.0,
        log_bound=0.0,
        passed=_passed(worst, 1.0) and degenerate == 0,
        extra=extra,
    )


def check_observability(
    model: Model,
    E,
    T: float,
    cert_or_log_bound,
    r: float,
    samples: int = 32,
    time_panels: int = 256,
    rng=None,
    p: Optional[float] = None,
) -> CheckRow:
    """Worst sampled ratio |S(T)x| / (L_r time norm of |C S(.) x|) against the bound."""
    rng = _as_rng(rng)
    mask = _mask_of(E)
    if isinstance(cert_or_log_bound, Certificate):
        log_bound = cert_or_log_bound.log_cobs_Lr
        bound = cert_or_log_bound.cobs_Lr
    else:
        log_bound = float(cert_or_log_bound)
        bound = math.exp(log_bound) if log_bound < 700 else math.inf
    t_nodes, t_wts = time_quadrature(T, time_panels)
    states = _random_unit_states(model, samples, rng)
    y = _observation_trajectories(model, states, t_nodes, mask, p)  # (samples, nodes)
    denom = _lr_time_norm(y, t_wts, r)
    final = _norm_batch(model, _evolve_batch(model, states, T))
    good = denom > 0.0
    ratios = np.full(final.shape, math.inf)
    ratios[good] = final[good] / denom[good]
    ratios[final == 0.0] = 0.0
    worst = float(np.max(ratios)) if ratios.size else 0.0
    log_worst = math.log(worst) if 0 < worst < math.inf else (-math.inf if worst == 0 else math.inf)
    return CheckRow(
        name=f"observability[r={r}]",
        samples=samples,
        max_ratio=worst,
        bound=bound,
        log_bound=log_bound,
        passed=_log_passed(log_worst, log_bound),
        extra={"time_panels": time_panels, "T": T},
    )


def _lr_time_norm(y: np.ndarray, wts: np.ndarray, r: float) -> np.ndarray:
    if math.isinf(r):
        return y.max(axis=1)
    return np.sum(wts * y ** r, axis=1) ** (1.0 / r)


# ---------------------------------------------------------------------------
# model-generic batch helpers


def _random_unit_states(model: Model, samples: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(model, DiagonalModel):
        a = rng.standard_normal((samples, model.N))
    else:
        a = rng.standard_normal((samples,) + (model.G,) * model.n)
    norms = np.maximum(_norm_batch(model, a), 1e-300)
    flat = a.reshape(samples, -1)
    flat /= norms[:, None]
    return flat.reshape(a.shape)


def _norm_batch(model: Model, states: np.ndarray) -> np.ndarray:
    if isinstance(model, DiagonalModel):
        return np.linalg.norm(states, axis=1)
    flat = states.reshape(states.shape[0], -1)
    return np.sqrt(np.sum(np.abs(flat) ** 2, axis=1) * model.cellvol)


def _evolve_batch(model: Model, states: np.ndarray, t: float) -> np.ndarray:
    if isinstance(model, DiagonalModel):
        return states * np.exp(-model.decay_rates * t)
    axes = tuple(range(1, states.ndim))
    F = np.fft.fftn(states, axes=axes)
    out = np.fft.ifftn(F * np.exp(-t * model.psi_grid), axes=axes)
    return out.real if np.isrealobj(states) else out


def _project_batch(model: Model, lam: float, states: np.ndarray) -> np.ndarray:
    if isinstance(model, DiagonalModel):
        return states * (model.eigenvalues <= lam)
    axes = tuple(range(1, states.ndim))
    F = np.fft.fftn(states, axes=axes)
    out = np.fft.ifftn(F * model.frequency_mask(lam), axes=axes)
    return out.real if np.isrealobj(states) else out


def _project_complement_batch(model: Model, lam: float, states: np.ndarray) -> np.ndarray:
    if isinstance(model, DiagonalModel):
        return states * (model.eigenvalues > lam)
    return states - _project_batch(model, lam, states)


def _observe_batch(model: Model, mask: np.ndarray, states: np.ndarray, p: Optional[float]) -> np.ndarray:
    if isinstance(model, DiagonalModel):
        return model.observe_batch(mask, states, 2.0 if p is None else p)
    pp = model.p if p is None else p
    flat_mask = mask.ravel()
    rows = np.abs(states.reshape(states.shape[0], -1)[:, flat_mask])
    if math.isinf(pp):
        return rows.max(axis=1, initial=0.0)
    return (np.sum(rows ** pp, axis=1) * model.cellvol) ** (1.0 / pp)


def _first_excluded_state(model: Model, lam: float) -> Optional[np.ndarray]:
    if isinstance(model, DiagonalModel):
        idx = model.first_excluded(lam)
        if idx is None:
            return None
        e = np.zeros(model.N)
        e[idx] = 1.0
        return e
    # grid: concentrate on the smallest excluded lattice frequency
    mask = ~model.frequency_mask(lam)
    if not mask.any():
        return None
    norm = np.zeros((model.G,) * model.n)
    for axis, xi in enumerate(model.xi_axes):
        shape = [1] * model.n
        shape[axis] = model.G
        norm = norm + np.abs(xi).reshape(shape) ** 2
    norm[~mask] = np.inf
    idx = np.unravel_index(int(np.argmin(norm)), norm.shape)
    F = np.zeros((model.G,) * model.n, dtype=complex)
    F[idx] = 1.0
    f = 2.0 * np.real(np.fft.ifftn(F))  # real state supported on +/- the chosen mode
    n2 = math.sqrt(np.sum(f ** 2) * model.cellvol)
    return f / n2 if n2 > 0 else None


def _observation_trajectories(model, states, t_nodes, mask, p) -> np.ndarray:
    """y[s, i] = |C S(t_i) x_s| for every sample and time node."""
    if isinstance(model, DiagonalModel) and (p is None or p == 2.0):
        B = model.gram_on(mask)
        U = np.exp(-np.outer(t_nodes, model.decay_rates))  # (nodes, N)
        V = states[:, None, :] * U[None, :, :]  # (samples, nodes, N)
        T1 = V @ B
        y2 = np.einsum("sij,sij->si", T1, V)
        return np.sqrt(np.maximum(y2, 0.0))
    y = np.empty((states.shape[0], t_nodes.size))
    for i, t in enumerate(t_nodes):
        evolved = _evolve_batch(model, states, float(t))
        if isinstance(model, DiagonalModel):
            phys = evolved @ model.basis.T
            y[:, i] = masked_lp_norm_rows(phys, mask, model.weights, 2.0 if p is None else p)
        else:
            y[:, i] = _observe_batch(model, mask, evolved, p)
    return y


# ---------------------------------------------------------------------------
# exact r = 2 oracle


def _freq_observation_gram(model: GridModel, mask: np.ndarray) -> np.ndarray:
    """Hermitian Gram of the masked L2 observation in DFT coefficients (n = 1)."""
    G = model.G
    m = mask.astype(float)
    # A[k, l] = cellvol / G^2 * sum_x m(x) e^{i 2 pi x (k - l) / G}
    spectrum = np.fft.ifft(m) * model.cellvol / G
    idx = (np.arange(G)[:, None] - np.arange(G)[None, :]) % G
    return spectrum[idx]


def _gramian_pair(model: Model, mask: np.ndarray, T: float, time_panels: int, order: int = 8):
    t_nodes, t_wts = time_quadrature(T, time_panels, order)
    if isinstance(model, DiagonalModel):
        B = model.gram_on(mask)
        U = np.exp(-np.outer(t_nodes, model.decay_rates))
        kernel = U.T @ (t_wts[:, None] * U)  # sum_i w_i u_i u_i^T
        G_T = B * kernel
        F = np.diag(np.exp(-2.0 * model.decay_rates * T))
        return F, G_T
    if model.n != 1:
        raise SingularGramian("dense Gramian assembly supports diagonal models and 1D grids")
    if model.G > 512:
        raise SingularGramian("dense Gramian assembly is limited to N <= 512")
    A = _freq_observation_gram(model, mask)
    mults = np.exp(-np.outer(t_nodes, model.psi_grid))  # (nodes, G)
    kernel = np.conj(mults).T @ (t_wts[:, None] * mults)
    G_T = A * kernel
    # state inner product in DFT coefficients: |f|^2 = (cellvol / G) sum |z_k|^2
    c0 = model.cellvol / model.G
    F = np.diag(np.abs(np.exp(-T * model.psi_grid)) ** 2) * c0
    return F, G_T


def optimal_constant_l2(
    model: Model,
    E,
    T: float,
    time_panels: int = 256,
    order: int = 8,
) -> float:
    """Exact optimal constant of the discretized r = 2 observability problem.

    Assembles G_T = sum_i w_i S(t_i)* C* C S(t_i) by composite Gauss panels
    and returns sqrt of the largest generalized eigenvalue of
    (S(T)*S(T), G_T): shifted power iteration on the Cholesky factorization,
    dense symmetric-definite solve as fallback (N <= 512).
    """
    mask = _mask_of(E)
    F, G_T = _gramian_pair(model, mask, T, time_panels, order)
    N = G_T.shape[0]
    tr = float(np.real(np.trace(G_T)))
    eigs = sla.eigvalsh(G_T)
    if eigs[0] < 1e-13 * tr:
        vecs = sla.eigh(G_T)[1]
        raise SingularGramian(
            f"Gramian smallest eigenvalue {eigs[0]:.3e} below 1e-13 * trace; "
            "some direction is unobserved at this resolution",
            null_direction=vecs[:, 0],
        )
    lam = _largest_generalized_eig(F, G_T)
    if lam is None:
        if N > 512:
            raise SingularGramian("power iteration failed and N > 512 forbids the dense fallback")
        lam = float(sla.eigh(F, G_T, eigvals_only=True)[-1])
    return math.sqrt(max(lam, 0.0))


def _largest_generalized_eig(F: np.ndarray, G_T: np.ndarray, tol: float = 1e-13, maxit: int = 400):
    """Power iteration on G_T^{-1} F with a Cholesky factorization of G_T."""
    cho = sla.cho_factor(G_T)
    n = G_T.shape[0]
    x = np.ones(n, dtype=G_T.dtype) / math.sqrt(n)
    lam_prev = None
    for _ in range(maxit):
        y = sla.cho_solve(cho, F @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        num = float(np.real(np.conj(x) @ (F @ x)))
        den = float(np.real(np.conj(x) @ (G_T @ x)))
        lam = num / den
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return lam
        lam_prev = lam
    return None


# ---------------------------------------------------------------------------
# ascent lower bound


def empirical_lower_bound(
    model: Model,
    E,
    T: float,
    r: float = 2.0,
    restarts: int = 6,
    steps: int = 80,
    rng=None,
    time_panels: int = 256,
    search_panels: int = 64,
    order: int = 8,
) -> float:
    """Maximize |S(T)x| / (L_r time norm of observations) over unit states.

    Random restarts plus projected gradient ascent on the sphere (analytic
    gradient for finite r, max-node subgradient for r = inf).  The search
    runs on a coarse time grid; the returned value re-evaluates the best
    state on the same quadrature used by the checks and the r = 2 oracle,
    so it is a true lower bound for that discretization.
    """
    rng = _as_rng(rng)
    mask = _mask_of(E)
    A, U, wts, mT = _engine_data(model, mask, T, search_panels, order)
    best_states = []
    for _ in range(restarts):
        x = _engine_random_state(model, rng)
        x = x / np.linalg.norm(x)
        step = 0.3
        val = _engine_value(A, U, wts, mT, x, r)
        for _ in range(steps):
            grad = _engine_gradient(A, U, wts, mT, x, r)
            grad = grad - np.real(np.vdot(x, grad)) * x
            gn = np.linalg.norm(grad)
            if gn < 1e-14:
                break
            moved = False
            for _ in range(20):
                cand = x + step * grad / gn
                cand = cand / np.linalg.norm(cand)
                cval = _engine_value(A, U, wts, mT, cand, r)
                if cval > val:
                    x, val = cand, cval
                    step *= 1.4
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
        best_states.append((val, x))
    best_states.sort(key=lambda t: t[0], reverse=True)
    A2, U2, wts2, mT2 = _engine_data(model, mask, T, time_panels, order)
    return max(_engine_value(A2, U2, wts2, mT2, x, r) for _, x in best_states[:3])


def _engine_data(model: Model, mask: np.ndarray, T: float, panels: int, order: int):
    """(A, U, w, mT): observation Gram, per-node multipliers, weights, final multiplier.

    States are coefficient vectors x; y_i^2 = (U_i o x)^H A (U_i o x) and the
    final-state norm is |mT o x|_2, with all measure factors folded into A
    and mT.
    """
    t_nodes, wts = time_quadrature(T, panels, order)
    if isinstance(model, DiagonalModel):
        A = model.gram_on(mask)
        U = np.exp(-np.outer(t_nodes, model.decay_rates))
        mT = np.exp(-model.decay_rates * T)
        return A, U, wts, mT
    if model.n != 1 or model.p != 2.0:
        raise ValueError("ascent engine supports diagonal models and 1D grids with p = 2")
    A = _freq_observation_gram(model, mask)
    U = np.exp(-np.outer(t_nodes, model.psi_grid))
    c0 = model.cellvol / model.G
    mT = np.exp(-T * model.psi_grid) * math.sqrt(c0)
    return A, U, wts, mT


def _engine_random_state(model: Model, rng: np.random.Generator) -> np.ndarray:
    if isinstance(model, DiagonalModel):
        return rng.standard_normal(model.N)
    return rng.standard_normal(model.G) + 1j * rng.standard_normal(model.G)


def _engine_observations(A, U, x) -> tuple[np.ndarray, np.ndarray]:
    """Per-node vectors W_i = A (U_i o x) and values y_i^2 >= 0."""
    V = U * x[None, :]
    W = V @ A.T  # row i equals A (U_i o x) for symmetric/Hermitian A
    y2 = np.maximum(np.real(np.einsum("ij,ij->i", np.conj(V), W)), 1e-300)
    return W, y2


def _engine_value(A, U, wts, mT, x, r: float) -> float:
    _, y2 = _engine_observations(A, U, x)
    y = np.sqrt(y2)
    if math.isinf(r):
        denom = float(y.max())
    else:
        denom = float(np.sum(wts * y ** r) ** (1.0 / r))
    num = float(np.linalg.norm(mT * x))
    return num / denom if denom > 0 else math.inf


def _engine_gradient(A, U, wts, mT, x, r: float) -> np.ndarray:
    """Ascent direction for ln(num/denom) (Wirtinger d/d conj(x) for complex states)."""
    W, y2 = _engine_observations(A, U, x)
    y = np.sqrt(y2)
    num2 = max(float(np.linalg.norm(mT * x)) ** 2, 1e-300)
    g_num = (np.abs(mT) ** 2) * x / num2
    if math.isinf(r):
        i = int(np.argmax(y))
        g_den = np.conj(U[i]) * W[i] / y2[i]
    else:
        coeff = wts * y ** (r - 2.0)
        g_den = np.sum(coeff[:, None] * np.conj(U) * W, axis=0) / float(np.sum(wts * y ** r))
    return g_num - g_den

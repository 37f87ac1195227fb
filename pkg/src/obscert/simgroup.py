"""Finite-dimensional semigroup models: diagonal sine-basis and periodic FFT grids.

The diagonal model realizes anomalous diffusion on the Dirichlet eigenbasis
of an interval: states are coefficient vectors against phi_k(x) =
sqrt(2/L) sin(k pi x / L), the semigroup multiplies coefficient k by
exp(-mu_k t), and the observation restricts the physical function to a
masked subset of a uniform grid.  The grid model realizes convolution
semigroups on a periodic box: the semigroup is a frequency multiplier
exp(-t psi(xi)) and the frequency cutoff is exact on the lattice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import HypothesisViolation, NotThick
from .levy_symbol import SymbolModel, psi_eval
from .rates import RateFunction


# ---------------------------------------------------------------------------
# diagonal model


@dataclass
class DiagonalModel:
    """Truncated eigenbasis semigroup on the interval (0, L)."""

    N: int
    L: float
    G: int
    eigenvalues: np.ndarray  # lambda_k, strictly increasing
    decay_rates: np.ndarray  # mu_k >= 0
    x: np.ndarray
    weights: np.ndarray  # trapezoid weights on the closed grid
    basis: np.ndarray  # (G, N), columns are sampled eigenfunctions

    def evolve(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("need t >= 0")
        return coeffs * np.exp(-self.decay_rates * t)

    def project(self, lam: float, coeffs: np.ndarray) -> np.ndarray:
        return np.where(self.eigenvalues <= lam, coeffs, 0.0)

    def project_complement(self, lam: float, coeffs: np.ndarray) -> np.ndarray:
        return np.where(self.eigenvalues > lam, coeffs, 0.0)

    def norm(self, coeffs: np.ndarray) -> float:
        return float(np.linalg.norm(coeffs))

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        return self.basis @ coeffs

    def observe(self, mask: np.ndarray, coeffs: np.ndarray, p: float = 2.0) -> float:
        f = self.to_physical(coeffs)
        return masked_lp_norm(f, mask, self.weights, p)

    def observe_batch(self, mask: np.ndarray, coeff_rows: np.ndarray, p: float = 2.0) -> np.ndarray:
        """Observation norms for states stacked as rows."""
        f = coeff_rows @ self.basis.T
        return masked_lp_norm_rows(f, mask, self.weights, p)

    def first_excluded(self, lam: float) -> Optional[int]:
        idx = np.nonzero(self.eigenvalues > lam)[0]
        return int(idx[0]) if idx.size else None

    def gram_on(self, mask: np.ndarray) -> np.ndarray:
        """Observation Gram matrix <phi_j, phi_k> restricted to the mask (p = 2)."""
        wm = self.weights * mask
        return self.basis.T @ (wm[:, None] * self.basis)


def diagonal_model(
    N: int,
    *,
    rate: Optional[RateFunction] = None,
    decay_rates=None,
    eigenvalues=None,
    L: float = math.pi,
    G: int = 2048,
    sqrt_argument: bool = True,
) -> DiagonalModel:
    """Build the sine-basis model; mu_k = rate(sqrt(lambda_k)) by default.

    Default eigenvalues are (k pi / L)^2, so L = pi gives lambda_k = k^2.
    """
    if N < 1 or G < 8 * N:
        raise ValueError("need N >= 1 and a grid with G >= 8 N points")
    if eigenvalues is None:
        k = np.arange(1, N + 1, dtype=float)
        eigenvalues = (k * math.pi / L) ** 2
    else:
        eigenvalues = np.asarray(eigenvalues, dtype=float)
        if eigenvalues.shape != (N,):
            raise ValueError("eigenvalues must have shape (N,)")
    if np.any(np.diff(eigenvalues) <= 0) or eigenvalues[0] <= 0:
        raise ValueError("eigenvalues must be positive and strictly increasing")

    if decay_rates is not None:
        mu = np.asarray(decay_rates, dtype=float)
    elif rate is not None:
        arg = np.sqrt(eigenvalues) if sqrt_argument else eigenvalues
        mu = np.asarray(rate.evaluate(arg), dtype=float)
    else:
        mu = eigenvalues.copy()  # plain heat semigroup
    if mu.shape != (N,) or (mu < 0).any():
        raise ValueError("decay rates must be N non-negative numbers")

    x = np.linspace(0.0, L, G)
    h = L / (G - 1)
    weights = np.full(G, h)
    weights[0] = weights[-1] = h / 2.0
    k = np.arange(1, N + 1, dtype=float)
    basis = math.sqrt(2.0 / L) * np.sin(np.outer(x, k) * math.pi / L)

    gram = basis.T @ (weights[:, None] * basis)
    dev = np.max(np.abs(gram - np.eye(N)))
    if dev > 1e-10:
        raise HypothesisViolation(f"discrete orthonormality failed: deviation {dev:.3e}")
    return DiagonalModel(N, L, G, eigenvalues, mu, x, weights, basis)


# ---------------------------------------------------------------------------
# periodic grid model


@dataclass
class GridModel:
    """Frequency-multiplier semigroup on a periodic box."""

    n: int
    G: int
    box: np.ndarray
    p: float
    xi_axes: list
    psi_grid: np.ndarray  # complex, shape (G,)*n
    cellvol: float

    def evolve(self, f: np.ndarray, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("need t >= 0")
        F = np.fft.fftn(f)
        out = np.fft.ifftn(F * np.exp(-t * self.psi_grid))
        return out.real if np.isrealobj(f) else out

    def frequency_mask(self, lam: float) -> np.ndarray:
        mask = np.ones((self.G,) * self.n, dtype=bool)
        for axis, xi in enumerate(self.xi_axes):
            shape = [1] * self.n
            shape[axis] = self.G
            mask &= np.abs(xi).reshape(shape) < lam
        return mask

    def project(self, lam: float, f: np.ndarray) -> np.ndarray:
        F = np.fft.fftn(f)
        out = np.fft.ifftn(F * self.frequency_mask(lam))
        return out.real if np.isrealobj(f) else out

    def project_complement(self, lam: float, f: np.ndarray) -> np.ndarray:
        return f - self.project(lam, f)

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(np.sum(np.abs(f) ** 2) * self.cellvol))

    def norm_p(self, f: np.ndarray, p: Optional[float] = None) -> float:
        p = self.p if p is None else p
        if math.isinf(p):
            return float(np.max(np.abs(f)))
        return float((np.sum(np.abs(f) ** p) * self.cellvol) ** (1.0 / p))

    def observe(self, mask: np.ndarray, f: np.ndarray, p: Optional[float] = None) -> float:
        p = self.p if p is None else p
        vals = np.abs(f[mask])
        if math.isinf(p):
            return float(vals.max()) if vals.size else 0.0
        return float((np.sum(vals ** p) * self.cellvol) ** (1.0 / p))

    def frequency_l2(self, f: np.ndarray) -> float:
        F = np.fft.fftn(f)
        return float(np.sqrt(np.sum(np.abs(F) ** 2) / F.size * self.cellvol))


def grid_model(
    symbol: Optional[SymbolModel] = None,
    *,
    n: int = 1,
    G: int = 256,
    box=None,
    p: float = 2.0,
    psi_values=None,
) -> GridModel:
    """Periodic lattice model; the symbol is precomputed on the frequency lattice."""
    if G < 2 or (G & (G - 1)) != 0:
        raise ValueError("G must be a power of two")
    if symbol is not None:
        n = symbol.n
    box = np.full(n, 2.0 * math.pi) if box is None else np.asarray(box, dtype=float).reshape(n)
    xi_axes = [2.0 * math.pi * np.fft.fftfreq(G, d=box[a] / G) for a in range(n)]
    cellvol = float(np.prod(box / G))

    if psi_values is not None:
        psi_grid = np.asarray(psi_values, dtype=complex)
        if psi_grid.shape != (G,) * n:
            raise ValueError("psi_values must match the frequency lattice shape")
    elif symbol is None:
        raise ValueError("give a symbol model or precomputed psi values")
    else:
        psi_grid = _symbol_on_lattice(symbol, xi_axes, n, G)

    if float(psi_grid.real.min()) < -1e-9:
        raise HypothesisViolation("Re psi must be >= 0 for contraction multipliers")
    return GridModel(n, G, box, p, xi_axes, psi_grid, cellvol)


def _symbol_on_lattice(symbol: SymbolModel, xi_axes, n: int, G: int) -> np.ndarray:
    grids = np.meshgrid(*xi_axes, indexing="ij")
    if symbol.closed_form is not None and symbol.closed_form.get("kind") == "fractional_laplacian":
        alpha = symbol.closed_form["alpha"]
        norm2 = sum(g ** 2 for g in grids)
        quad = np.zeros_like(norm2)
        lin = np.zeros_like(norm2)
        for a in range(n):
            lin = lin + symbol.d[a] * grids[a]
            for b in range(n):
                quad = quad + symbol.Q[a, b] * grids[a] * grids[b]
        return symbol.c + quad + norm2 ** alpha + 1j * lin
    # radial measures: psi depends on |xi| only; evaluate once per distinct radius
    norm = np.sqrt(sum(g ** 2 for g in grids))
    psi_grid = np.zeros_like(norm, dtype=complex)
    if symbol.density is not None:
        radii, inverse = np.unique(np.round(norm, 12), return_inverse=True)
        vals = np.empty(radii.shape, dtype=complex)
        xi0 = np.zeros(n)
        for i, rad in enumerate(radii):
            xi0[0] = rad
            vals[i] = psi_eval(symbol, xi0)
        psi_grid = vals[inverse].reshape(norm.shape)
    else:
        flat = np.stack([g.ravel() for g in grids], axis=1)
        out = np.empty(flat.shape[0], dtype=complex)
        for i, xi in enumerate(flat):
            out[i] = psi_eval(symbol, xi)
        psi_grid = out.reshape(norm.shape)
    return psi_grid


# ---------------------------------------------------------------------------
# norms over masks


def masked_lp_norm(f: np.ndarray, mask: np.ndarray, weights: np.ndarray, p: float) -> float:
    vals = np.abs(f[mask])
    if math.isinf(p):
        return float(vals.max()) if vals.size else 0.0
    return float(np.sum(weights[mask] * vals ** p) ** (1.0 / p))


def masked_lp_norm_rows(rows: np.ndarray, mask: np.ndarray, weights: np.ndarray, p: float) -> np.ndarray:
    vals = np.abs(rows[:, mask])
    if math.isinf(p):
        return vals.max(axis=1, initial=0.0)
    return np.sum(weights[mask] * vals ** p, axis=1) ** (1.0 / p)


# ---------------------------------------------------------------------------
# thick sets


@dataclass
class ThickSet:
    """A grid mask with verified thickness parameters (rho, L)."""

    mask: np.ndarray
    rho: float
    rho_actual: float
    box_lengths: np.ndarray
    window_cells: tuple
    periodic: bool

    @property
    def measure_fraction(self) -> float:
        return float(np.mean(self.mask))


def _window_sums(arr: np.ndarray, w: int, axis: int, periodic: bool) -> np.ndarray:
    """Sums over every length-w window along one axis (circular when periodic)."""
    arr = np.moveaxis(np.asarray(arr, dtype=float), axis, 0)
    if periodic:
        padded = np.concatenate([arr, arr[: w - 1]], axis=0) if w > 1 else arr
    else:
        padded = arr
    c = np.cumsum(padded, axis=0)
    zero = np.zeros((1,) + c.shape[1:])
    c = np.concatenate([zero, c], axis=0)
    sums = c[w:] - c[:-w]
    return np.moveaxis(sums, 0, axis)


def verify_thickness(
    mask: np.ndarray, window_cells, periodic: bool
) -> tuple[float, tuple]:
    """Exhaustive translate scan; returns (worst fraction, worst translate index)."""
    sums = np.asarray(mask, dtype=float)
    for axis, w in enumerate(window_cells):
        if w < 1 or w > mask.shape[axis]:
            raise ValueError("window must fit inside the grid")
        sums = _window_sums(sums, int(w), axis, periodic)
    total = float(np.prod([int(w) for w in window_cells]))
    idx = np.unravel_index(int(np.argmin(sums)), sums.shape)
    return float(sums[idx]) / total, idx


def make_thick_set(
    model: Union[DiagonalModel, GridModel],
    rho: float,
    L,
    pattern: str = "periodic-slabs",
    *,
    period: Optional[float] = None,
    axis: int = 0,
    mask: Optional[np.ndarray] = None,
) -> ThickSet:
    """Construct a mask of the requested pattern and verify its thickness.

    Patterns: 'periodic-slabs' (slabs of width rho*period along one axis),
    'checkerboard' (alternating parity blocks, density 1/2), 'full', and
    'custom' (caller-provided mask).  Raises NotThick when the exhaustive
    grid-translate scan finds a window below rho.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    if isinstance(model, DiagonalModel):
        shape = (model.G,)
        coords = [model.x]
        cells = [model.L / (model.G - 1)]
        periodic = False
        n = 1
    else:
        n = model.n
        shape = (model.G,) * n
        coords = [np.arange(model.G) * model.box[a] / model.G for a in range(n)]
        cells = [model.box[a] / model.G for a in range(n)]
        periodic = True

    L = np.asarray(L, dtype=float).reshape(-1)
    if L.size == 1 and n > 1:
        L = np.full(n, float(L[0]))
    if L.size != n or (L <= 0).any():
        raise ValueError("thickness box L must have one positive length per axis")

    def _along(axis_arr: np.ndarray, a: int) -> np.ndarray:
        view = [1] * n
        view[a] = axis_arr.size
        return axis_arr.reshape(view)

    if pattern == "full":
        built = np.ones(shape, dtype=bool)
    elif pattern == "custom":
        if mask is None:
            raise ValueError("custom pattern needs a mask")
        built = np.asarray(mask, dtype=bool)
        if built.shape != shape:
            raise ValueError("mask shape does not match the model grid")
    elif pattern == "periodic-slabs":
        # index-based so every length-(period) window carries >= rho exactly
        P = float(period) if period is not None else float(L[axis])
        period_cells = max(1, int(round(P / cells[axis])))
        on_cells = max(1, int(math.ceil(rho * period_cells - 1e-9)))
        idx = np.arange(shape[axis])
        line = (idx % period_cells) < on_cells
        built = np.broadcast_to(_along(line, axis), shape).copy()
    elif pattern == "checkerboard":
        parity = np.zeros(shape, dtype=int)
        for a in range(n):
            block_cells = max(1, int(round(L[a] / (2.0 * cells[a]))))
            blocks = np.arange(shape[a]) // block_cells
            parity = parity + np.broadcast_to(_along(blocks, a), shape)
        built = parity % 2 == 0
    else:
        raise ValueError(f"unknown thick-set pattern '{pattern}'")

    window_cells = tuple(max(1, int(round(L[a] / cells[a]))) for a in range(n))
    rho_actual, worst = verify_thickness(built, window_cells, periodic)
    if rho_actual + 1e-12 < rho:
        raise NotThick(
            f"translate {worst} carries fraction {rho_actual:.6g} < rho = {rho}",
            translate=worst,
        )
    return ThickSet(built, rho, rho_actual, L, window_cells, periodic)


# ---------------------------------------------------------------------------
# free-function facade

Model = Union[DiagonalModel, GridModel]


def evolve(model: Model, state: np.ndarray, t: float) -> np.ndarray:
    return model.evolve(state, t)


def project(model: Model, lam: float, state: np.ndarray) -> np.ndarray:
    return model.project(lam, state)


def observe(model: Model, E, state: np.ndarray, p: Optional[float] = None) -> float:
    mask = E.mask if isinstance(E, ThickSet) else np.asarray(E, dtype=bool)
    if isinstance(model, DiagonalModel):
        return model.observe(mask, state, 2.0 if p is None else p)
    return model.observe(mask, state, p)


# ---------------------------------------------------------------------------
# empirical uncertainty constants


@dataclass
class LSFit:
    """Empirical envelope fit log(ratio_max) <= log d0 + d1 * feature(lambda)."""

    d0: float
    d1: float
    lambdas: np.ndarray
    ratios: np.ndarray
    growth: str
    samples: int

    def feature(self, lam):
        lam = np.asarray(lam, dtype=float)
        return np.sqrt(lam) if self.growth == "sqrt" else lam


def estimate_ls_constants(
    model: Model,
    E,
    lambdas,
    samples: int = 128,
    rng=None,
    growth: str = "linear",
) -> LSFit:
    """Sampled lower-bound estimate of admissible uncertainty constants (d0, d1).

    Draws random states band-limited to each cutoff, records the worst
    observed ratio |f| / |f|_E, regresses its log against lambda (or
    sqrt(lambda) for eigenbasis models), and lifts the intercept so the line
    dominates every sampled point.  Empirical evidence, not a proof.
    """
    from .errors import DegenerateFit

    if growth not in ("linear", "sqrt"):
        raise ValueError("growth must be 'linear' or 'sqrt'")
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size < 2:
        raise DegenerateFit("need at least two cutoffs to fit a slope")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    mask = E.mask if isinstance(E, ThickSet) else np.asarray(E, dtype=bool)

    ratios = np.empty(lambdas.size)
    for i, lam in enumerate(lambdas):
        if isinstance(model, DiagonalModel):
            keep = model.eigenvalues <= lam
            if not keep.any():
                raise DegenerateFit(f"no modes below lambda = {lam}")
            coeffs = rng.standard_normal((samples, model.N)) * keep
            norms = np.linalg.norm(coeffs, axis=1)
            obs = model.observe_batch(mask, coeffs)
        else:
            fields = rng.standard_normal((samples,) + (model.G,) * model.n)
            proj = np.stack([model.project(lam, f) for f in fields])
            norms = np.array([model.norm_p(f) for f in proj])
            obs = np.array([model.observe(mask, f) for f in proj])
        good = obs > 0
        if not good.any():
            raise DegenerateFit(f"observation vanished for every sample at lambda = {lam}")
        ratios[i] = float(np.max(norms[good] / obs[good]))

    feats = np.sqrt(lambdas) if growth == "sqrt" else lambdas
    logs = np.log(ratios)
    if np.ptp(logs) < 1e-12:
        return LSFit(float(np.max(ratios)), 0.0, lambdas, ratios, growth, samples)
    slope, intercept = np.polyfit(feats, logs, 1)
    intercept += float(np.max(logs - (slope * feats + intercept)))  # envelope lift
    return LSFit(float(np.exp(intercept)), float(slope), lambdas, ratios, growth, samples)


# ---------------------------------------------------------------------------
# flat-array state I/O (row-major float64, little endian)


def save_state(path: str, state: np.ndarray, fmt: str = "csv") -> None:
    arr = np.ascontiguousarray(state, dtype="<f8")
    if fmt == "csv":
        np.savetxt(path, arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr, delimiter=",")
    elif fmt == "raw":
        arr.tofile(path)
    else:
        raise ValueError("fmt must be 'csv' or 'raw'")


def load_state(path: str, fmt: str = "csv", shape=None) -> np.ndarray:
    if fmt == "csv":
        arr = np.loadtxt(path, delimiter=",")
    elif fmt == "raw":
        arr = np.fromfile(path, dtype="<f8")
    else:
        raise ValueError("fmt must be 'csv' or 'raw'")
    return arr.reshape(shape) if shape is not None else arr

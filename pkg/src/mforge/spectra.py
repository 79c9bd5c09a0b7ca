"""Estimators for the scaling function, the Legendre and large-deviations
spectra, the diagonal fixed point and pointwise local dimensions."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import CylinderMeasure, _atomic_write_text, _bits, enumeration_budget, logsumexp2
from .errors import BackendMismatch, NoFixedPoint, ZeroMass

MINUS_INF = -math.inf
EPS_LADDER = (0.1, 0.05, 0.02)
KINDS = ("tau", "legendre", "large_deviations", "local_dim")


@dataclass
class SpectrumEstimate:
    kind: str
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    j_range: list
    backend: str = ""
    epsilon: float | None = None
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not self.flags:
            self.flags = ["minus_infinity" if v == -np.inf else "" for v in self.values]

    def __getitem__(self, x):
        i = np.flatnonzero(np.isclose(self.grid, x, rtol=0, atol=1e-12))
        if len(i) == 0:
            raise KeyError(x)
        return float(self.values[i[0]])

    def rows(self):
        j_min, j_max = (min(self.j_range), max(self.j_range)) if self.j_range else ("", "")
        for g, v, s, f in zip(self.grid, self.values, self.stderr, self.flags):
            yield {
                "grid_value": repr(float(g)),
                "estimate": "" if not np.isfinite(v) else repr(float(v)),
                "stderr": "" if not np.isfinite(s) else repr(float(s)),
                "j_min": j_min,
                "j_max": j_max,
                "epsilon": "" if self.epsilon is None else repr(float(self.epsilon)),
                "backend": self.backend,
                "flag": f,
            }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(next(self.rows()).keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()

    def to_json(self) -> dict:
        def enc(v):
            if v == -np.inf:
                return {"value": None, "minus_infinity": True}
            return {"value": None if not np.isfinite(v) else float(v), "minus_infinity": False}

        return {
            "kind": self.kind,
            "grid": self.grid.tolist(),
            "values": [enc(v) for v in self.values],
            "stderr": [None if not np.isfinite(s) else float(s) for s in self.stderr],
            "j_range": list(self.j_range),
            "backend": self.backend,
            "epsilon": self.epsilon,
        }


def write_csv(estimates, path):
    """Atomically write one or more estimates as a single CSV table."""
    if isinstance(estimates, SpectrumEstimate):
        estimates = [estimates]
    text = estimates[0].to_csv()
    for est in estimates[1:]:
        text += est.to_csv().split("\n", 1)[1]
    _atomic_write_text(path, text)


def _slope(x, y):
    """Least-squares slope of y on x with its standard error (0 for two points)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two generations")
    xc = x - x.mean()
    sxx = xc @ xc
    beta = (xc @ (y - y.mean(axis=0))) / sxx
    if len(x) == 2:
        return beta, np.zeros_like(beta)
    resid = y - y.mean(axis=0) - np.multiply.outer(xc, beta)
    ssr = (resid**2).sum(axis=0)
    return beta, np.sqrt(ssr / (len(x) - 2) / sxx)


def _j_list(j_range):
    if isinstance(j_range, tuple) and len(j_range) == 2:
        return list(range(int(j_range[0]), int(j_range[1]) + 1))
    js = [int(j) for j in j_range]
    if any(b <= a for a, b in zip(js, js[1:])):
        raise ValueError("j_range must be increasing")
    return js


def _is_constructed(measure):
    from .construction import ConstructedMeasure

    return isinstance(measure, ConstructedMeasure)


def _resolve_backend(measure, j, backend, budget):
    if backend in ("enumerate", "boundary_product"):
        if backend == "boundary_product" and not _is_constructed(measure):
            raise BackendMismatch("boundary_product needs a constructed measure")
        return backend
    if backend != "auto":
        raise ValueError(f"unknown backend {backend!r}")
    if not _is_constructed(measure):
        return "enumerate"
    size = measure.support_size_log2(j)
    return "enumerate" if size is not None and size <= math.log2(enumeration_budget(budget)) else "boundary_product"


# -- coarse counts and large deviations -----------------------------------------


def log2_coarse_count(measure: CylinderMeasure, j, alpha, eps, backend="auto", budget=None) -> float:
    """log2 N_j(alpha, eps); -inf when no cylinder falls in the window.

    The enumerate backend is exact.  The boundary_product backend reads a
    binned histogram of log-masses (constructed measures only) and is exact
    up to the bin width times the number of blocks.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if j < 1:
        raise ValueError("j must be >= 1")
    backend = _resolve_backend(measure, j, backend, budget)
    lo, hi = j * (alpha - eps), j * (alpha + eps)
    if backend == "enumerate":
        s = measure.enumerate_support(j, budget)
        x = -s.log2_mass
        n = int(np.count_nonzero((x >= lo - 1e-9) & (x <= hi + 1e-9)))
        return math.log2(n) if n else MINUS_INF
    v, c = measure.log2_mass_histogram(j)
    sel = (-v >= lo) & (-v <= hi)
    return float(logsumexp2(c[sel])) if sel.any() else MINUS_INF


def coarse_counts(measure: CylinderMeasure, j, alpha, eps, backend="enumerate", budget=None) -> int:
    """N_j(alpha, eps): cylinders of generation j with
    2^{-j(alpha+eps)} <= mu(C) <= 2^{-j(alpha-eps)}."""
    x = log2_coarse_count(measure, j, alpha, eps, backend, budget)
    if x == MINUS_INF:
        return 0
    e = max(0, math.floor(x) - 52)
    return int(round(2.0 ** (x - e))) << e


def ld_spectrum(measure, alpha_grid, eps, j_range, backend="auto", budget=None) -> SpectrumEstimate:
    """Slopes of log2 N_j(alpha, eps) against j.

    Generations with N_j = 0 are dropped from the fit.  When every N_j is 0
    the value is the -inf sentinel.  With a single nonzero count the slope is
    undefined and reported as NaN with flag ``insufficient``.
    """
    js = _j_list(j_range)
    grid = np.asarray(alpha_grid, dtype=float)
    vals, errs, flags, used = [], [], [], set()
    for alpha in grid:
        counts = np.array([log2_coarse_count(measure, j, alpha, eps, backend, budget) for j in js])
        ok = np.isfinite(counts)
        if not ok.any():
            vals.append(MINUS_INF)
            errs.append(np.nan)
            flags.append("minus_infinity")
        elif ok.sum() < 2:
            vals.append(np.nan)
            errs.append(np.nan)
            flags.append("insufficient")
        else:
            beta, se = _slope(np.array(js)[ok], counts[ok])
            vals.append(float(beta))
            errs.append(float(se))
            flags.append("")
    for j in js:
        used.add(_resolve_backend(measure, j, backend, budget))
    return SpectrumEstimate("large_deviations", grid, vals, errs, js, "+".join(sorted(used)), float(eps), flags)


# -- scaling function and Legendre transform -------------------------------------


def log2_moment(measure, q, j, backend="auto", budget=None):
    """log2 sum of mu(C)^q over positive-mass cylinders of generation j."""
    backend = _resolve_backend(measure, j, backend, budget)
    qs = np.atleast_1d(np.asarray(q, dtype=float))
    if backend == "boundary_product":
        return np.atleast_1d(measure.log2_partition_sum(qs, j))
    s = measure.enumerate_support(j, budget)
    return logsumexp2(np.multiply.outer(qs, s.log2_mass), axis=1)


def tau(measure, q_grid, j_range, backend="enumerate", budget=None) -> SpectrumEstimate:
    """tau(q) estimated as minus the slope of log2 sum mu(C)^q against j."""
    js = _j_list(j_range)
    qs = np.asarray(q_grid, dtype=float)
    S = np.array([log2_moment(measure, qs, j, backend, budget) for j in js])
    beta, se = _slope(js, S)
    used = sorted({_resolve_backend(measure, j, backend, budget) for j in js})
    return SpectrumEstimate("tau", qs, -beta, se, js, "+".join(used))


def legendre(tau_est: SpectrumEstimate, alpha_grid, tol=1e-9) -> SpectrumEstimate:
    """min over the q-grid of q*alpha - tau(q).

    Where the minimum sits at an end of the q-grid and keeps decreasing
    outward (slope test on the last secant), the value is the -inf sentinel.
    """
    q, t = tau_est.grid, tau_est.values
    if not np.all(np.isfinite(t)):
        raise ValueError("tau estimate must be finite")
    alphas = np.asarray(alpha_grid, dtype=float)
    table = np.multiply.outer(alphas, q) - t[None, :]
    k = np.argmin(table, axis=1)
    vals = table[np.arange(len(alphas)), k]
    if len(q) > 1:
        d_hi = (t[-1] - t[-2]) / (q[-1] - q[-2])
        d_lo = (t[1] - t[0]) / (q[1] - q[0])
        at_hi = (k == len(q) - 1) & (alphas - d_hi < -tol)
        at_lo = (k == 0) & (d_lo - alphas < -tol)
        vals = np.where(at_hi | at_lo, MINUS_INF, vals)
    return SpectrumEstimate("legendre", alphas, vals, np.zeros_like(vals), tau_est.j_range, tau_est.backend)


@dataclass(frozen=True)
class FixedPoint:
    """Where L(alpha) = alpha.  ``lo``/``hi`` bound the set on which the
    estimate touches the diagonal; ``degenerate`` marks a wide contact set."""

    alpha: float
    lo: float
    hi: float
    degenerate: bool

    def __float__(self):
        return self.alpha


def diagonal_fixed_point(leg: SpectrumEstimate, tol=1e-6, degenerate_width=0.1) -> FixedPoint:
    """Contact point of the Legendre estimate with the diagonal.

    A discrete q-grid makes the estimate coincide with alpha on a short
    interval around the true contact point; its midpoint is returned.
    Contact sets wider than ``degenerate_width`` are flagged degenerate.
    Without contact, the root of L - alpha is located on sign changes.
    """
    a = leg.grid
    fin = np.isfinite(leg.values)
    if not fin.any():
        raise NoFixedPoint("no finite Legendre values")
    a, g = a[fin], leg.values[fin] - a[fin]
    touch = np.abs(g) <= tol
    if touch.any():
        lo, hi = float(a[touch].min()), float(a[touch].max())
        return FixedPoint((lo + hi) / 2, lo, hi, hi - lo > degenerate_width)
    if np.all(g < 0):
        raise NoFixedPoint("Legendre estimate lies below the diagonal")
    roots = []
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
        roots.append(a[i] - g[i] * (a[i + 1] - a[i]) / (g[i + 1] - g[i]))
    if not roots:
        raise NoFixedPoint("no sign change of L - alpha on the grid")
    lo, hi = min(roots), max(roots)
    return FixedPoint((lo + hi) / 2, lo, hi, hi - lo > degenerate_width)


# -- local dimension -------------------------------------------------------------


@dataclass(frozen=True)
class LocalDim:
    value: float
    stderr: float
    j_min: int
    j_max: int

    def __float__(self):
        return self.value


def local_dim(measure: CylinderMeasure, point, j_range) -> LocalDim:
    """Slope of -log2 mu(C_j(x)) against j, from the lazy mass oracle only."""
    digits = point.digits if hasattr(point, "digits") else _bits(point)
    js = _j_list(j_range)
    if js[-1] > len(digits):
        raise ValueError(f"point has {len(digits)} digits, need {js[-1]}")
    pm = measure.log2_prefix_masses(digits[: js[-1]])
    y = -pm[js]
    if not np.all(np.isfinite(y)):
        raise ZeroMass(f"cylinder of generation {js[int(np.argmax(~np.isfinite(y)))]} has zero mass")
    beta, se = _slope(js, y)
    return LocalDim(float(beta), float(se), js[0], js[-1])


def to_json_text(est: SpectrumEstimate) -> str:
    return json.dumps(est.to_json(), sort_keys=True, indent=1) + "\n"


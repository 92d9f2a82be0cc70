"""Finite-size-scaling collapse and the small fits used around it.

The collapse quality is measured with a local master-curve estimator: each
point is scaled into ``(x, y, sigma)`` and compared against a weighted
straight line through its nearest neighbours (in ``x``) that come from
other system sizes.  The line's own uncertainty enters the denominator, so
the cost measures misfit in units of the combined error:

    S = (1 / N) sum_i (y_i - yhat_i)**2 / (sigma_i**2 + var(yhat_i))

Points with no foreign neighbours on both sides of them in ``x`` are left
out, as they would require extrapolation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

__all__ = [
    "AnsatzForm",
    "ScalingDataset",
    "CollapseAnsatz",
    "CollapseResult",
    "UndefinedCostError",
    "scale_points",
    "chi2_cost",
    "collapse",
    "fit_power_law",
    "fit_entropy_decay",
    "static_dataset",
    "dynamic_dataset",
]

K_NEIGHBOURS = 4
MIN_USED_FRACTION = 0.5
EXCESS = 1.3


class UndefinedCostError(ValueError):
    """Scaled ranges of the different sizes overlap too little to compare them."""


class AnsatzForm(enum.Enum):
    STATIC = "static"  # O = L^(-beta/nu) f[L^(1/nu) (p - p_c)]
    STATIC_CORRECTED = "static_corrected"  # O = L^(-beta/nu) f[L^(1/nu) (p - p_c) + A L^(-alpha)]
    STATIC_NO_BETA = "static_no_beta"  # O = f[L^(1/nu) (p - p_c) + A L^(-alpha)]
    DYNAMIC = "dynamic"  # O = L^(-beta/nu) f(t / L^z)
    DYNAMIC_SHIFTED = "dynamic_shifted"  # L^(beta/nu) O + B L^(-gamma) = f(t / L^z)
    PURIFICATION = "purification"  # O = h(t / L^z)


_PARAMS = {
    AnsatzForm.STATIC: ("p_c", "nu", "beta"),
    AnsatzForm.STATIC_CORRECTED: ("p_c", "nu", "beta", "A", "alpha"),
    AnsatzForm.STATIC_NO_BETA: ("p_c", "nu", "A", "alpha"),
    AnsatzForm.DYNAMIC: ("z", "beta_over_nu"),
    AnsatzForm.DYNAMIC_SHIFTED: ("z", "beta_over_nu", "B", "gamma"),
    AnsatzForm.PURIFICATION: ("z",),
}

_DEFAULT_BOUNDS = {
    "p_c": (0.0, 1.0),
    "nu": (0.05, 20.0),
    "beta": (-5.0, 5.0),
    "beta_over_nu": (-5.0, 5.0),
    "A": (-1e3, 1e3),
    "alpha": (0.0, 10.0),
    "z": (0.05, 5.0),
    "B": (-1e3, 1e3),
    "gamma": (0.0, 10.0),
}


@dataclass
class ScalingDataset:
    """Points ``(L, x, value, sem)``; ``x`` is the control rate ``p`` or the time ``t``."""

    L: np.ndarray
    x: np.ndarray
    value: np.ndarray
    sem: np.ndarray

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.sem = np.asarray(self.sem, dtype=float)
        n = len(self.L)
        if not all(len(a) == n for a in (self.x, self.value, self.sem)):
            raise ValueError("dataset columns differ in length")
        if np.any(self.sem <= 0) or not np.all(np.isfinite(self.sem)):
            raise ValueError("every point needs a finite sem > 0")

    @classmethod
    def from_points(cls, points) -> "ScalingDataset":
        arr = np.asarray(list(points), dtype=float).reshape(-1, 4)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    @property
    def sizes(self) -> np.ndarray:
        return np.unique(self.L)

    def __len__(self) -> int:
        return len(self.L)


@dataclass
class CollapseAnsatz:
    """Scaling form with per-parameter fixed values and bounds.

    For the static forms ``ratio=True`` replaces ``beta`` by the single
    parameter ``beta_over_nu``.
    """

    form: AnsatzForm
    fixed: dict[str, float] = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    ratio: bool = False

    def __post_init__(self):
        self.form = AnsatzForm(self.form)
        unknown = set(self.fixed) | set(self.bounds)
        unknown -= set(self.param_names)
        if unknown:
            raise ValueError(f"{self.form.name} has no parameters {sorted(unknown)}")
        if not self.free_names:
            raise ValueError("ansatz needs at least one free parameter")

    @property
    def param_names(self) -> tuple[str, ...]:
        names = _PARAMS[self.form]
        if self.ratio and "beta" in names:
            names = tuple("beta_over_nu" if n == "beta" else n for n in names)
        return names

    @property
    def free_names(self) -> tuple[str, ...]:
        return tuple(n for n in self.param_names if n not in self.fixed)

    def bound(self, name: str) -> tuple[float, float]:
        return self.bounds.get(name, _DEFAULT_BOUNDS[name])

    def full(self, free_values) -> dict[str, float]:
        params = dict(self.fixed)
        params.update(zip(self.free_names, map(float, free_values)))
        return params


def _beta_over_nu(params: dict) -> float:
    if "beta_over_nu" in params:
        return params["beta_over_nu"]
    return params["beta"] / params["nu"]


def scale_points(params: dict, data: ScalingDataset, form: AnsatzForm):
    """Scaled coordinates ``(x, y, sigma)`` of every point under ``form``."""
    L, X, O, s = data.L, data.x, data.value, data.sem
    if form in (AnsatzForm.STATIC, AnsatzForm.STATIC_CORRECTED, AnsatzForm.STATIC_NO_BETA):
        x = L ** (1.0 / params["nu"]) * (X - params["p_c"])
        if form is not AnsatzForm.STATIC:
            x = x + params["A"] * L ** (-params["alpha"])
        w = np.ones_like(L) if form is AnsatzForm.STATIC_NO_BETA else L ** _beta_over_nu(params)
        return x, O * w, s * w
    x = X / L ** params["z"]
    if form is AnsatzForm.PURIFICATION:
        return x, O, s
    w = L ** params["beta_over_nu"]
    y = O * w
    if form is AnsatzForm.DYNAMIC_SHIFTED:
        y = y + params["B"] * L ** (-params["gamma"])
    return x, y, s * w


def _local_predictions(x, y, sig, L, k=K_NEIGHBOURS):
    """Weighted line through the ``k`` nearest foreign-size points, evaluated at each ``x_i``."""
    n = len(x)
    d = np.abs(x[:, None] - x[None, :])
    foreign = L[:, None] != L[None, :]
    d = np.where(foreign, d, np.inf)
    left = np.any(foreign & (x[None, :] <= x[:, None]), axis=1)
    right = np.any(foreign & (x[None, :] >= x[:, None]), axis=1)
    kk = min(k, n - 1)
    nbr = np.argsort(d, axis=1, kind="stable")[:, :kk]
    valid = np.isfinite(np.take_along_axis(d, nbr, axis=1))
    ok = left & right & (valid.sum(axis=1) >= 2)
    xs, ys = x[nbr], y[nbr]
    w = np.where(valid, 1.0 / sig[nbr] ** 2, 0.0)
    K = w.sum(1)
    Kx = (w * xs).sum(1)
    Ky = (w * ys).sum(1)
    Kxx = (w * xs * xs).sum(1)
    Kxy = (w * xs * ys).sum(1)
    det = K * Kxx - Kx * Kx
    ok &= det > 1e-300 * np.maximum(1.0, K * Kxx)
    det = np.where(ok, det, 1.0)
    slope = (K * Kxy - Kx * Ky) / det
    icpt = (Kxx * Ky - Kx * Kxy) / det
    yhat = icpt + slope * x
    var = (Kxx - 2 * x * Kx + x * x * K) / det
    return yhat, np.maximum(var, 0.0), ok


def chi2_cost(params: dict, data: ScalingDataset, ansatz: CollapseAnsatz, return_count: bool = False):
    """Collapse cost per contributing point (see module docstring).

    Raises :class:`UndefinedCostError` when fewer than three sizes are present
    or when less than half of the points have foreign neighbours on both
    sides.
    """
    if len(data.sizes) < 3:
        raise UndefinedCostError(f"need at least 3 system sizes, got {len(data.sizes)}")
    x, y, sig = scale_points(params, data, ansatz.form)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise UndefinedCostError("non-finite scaled coordinates")
    yhat, var, ok = _local_predictions(x, y, sig, data.L)
    n_used = int(ok.sum())
    if n_used < max(3, MIN_USED_FRACTION * len(data)):
        raise UndefinedCostError(f"only {n_used} of {len(data)} points overlap other sizes")
    r = (y[ok] - yhat[ok]) ** 2 / (sig[ok] ** 2 + var[ok])
    cost = float(np.sum(r) / n_used)
    return (cost, n_used) if return_count else cost


@dataclass
class CollapseResult:
    form: AnsatzForm
    params: dict[str, float]
    errors: dict[str, tuple[float, float]]  # (low, high) where chi2 reaches 1.3 chi2_min
    chi2_min: float
    n_used: int
    converged: bool
    message: str
    master: dict[str, np.ndarray]

    def to_text(self) -> str:
        lines = [f"form = {self.form.name}"]
        for name, value in self.params.items():
            lo, hi = self.errors.get(name, (value, value))
            tag = "" if name in self.errors else "  (fixed)"
            lines.append(f"{name} = {value!r}  [{lo!r}, {hi!r}]{tag}")
        lines += [
            f"chi2_min = {self.chi2_min!r}",
            f"points_used = {self.n_used}",
            f"converged = {self.converged}",
            f"message = {self.message}",
        ]
        return "\n".join(lines) + "\n"

    def error_bar(self, name: str) -> float:
        lo, hi = self.errors[name]
        return max(self.params[name] - lo, hi - self.params[name])


_PENALTY = 1e12


def _objective(ansatz, data):
    def f(v):
        try:
            return chi2_cost(ansatz.full(v), data, ansatz)
        except UndefinedCostError:
            return _PENALTY
    return f


def _nm(f, x0, bounds, tol=1e-9):
    res = minimize(
        f, x0, method="Nelder-Mead", bounds=bounds,
        options={"xatol": 1e-7, "fatol": tol, "maxiter": 4000 * max(1, len(x0)), "adaptive": len(x0) > 2},
    )
    return res


def _grid_steps(names, x0, bounds):
    steps = []
    for name, v, (lo, hi) in zip(names, x0, bounds):
        s = 0.1 * abs(v) if v != 0 else 0.1
        if name == "p_c":
            s = 0.05
        steps.append(min(s, 0.25 * (hi - lo)))
    return np.array(steps)


def collapse(
    data: ScalingDataset, ansatz: CollapseAnsatz, initial_guess: dict, n_restarts: int = 3,
    error_bars: bool = True,
) -> CollapseResult:
    """Minimise :func:`chi2_cost` and map the 30%-excess interval of every free parameter.

    The simplex is started at ``initial_guess`` and from the ``n_restarts``
    best nodes of a three-point-per-axis grid around it; the best end point
    wins.  Each error interval is the range over which the cost, minimised
    over the other free parameters, stays below ``1.3 * chi2_min``.
    """
    names = ansatz.free_names
    missing = [n for n in names if n not in initial_guess]
    if missing:
        raise ValueError(f"initial guess lacks {missing}")
    bounds = [ansatz.bound(n) for n in names]
    x0 = np.array([float(np.clip(initial_guess[n], *b)) for n, b in zip(names, bounds)])
    f = _objective(ansatz, data)

    steps = _grid_steps(names, x0, bounds)
    grid = np.array(np.meshgrid(*[[-1, 0, 1]] * len(names), indexing="ij")).reshape(len(names), -1).T
    if len(grid) > 243:  # keep the grid coarse for many parameters
        grid = grid[np.linspace(0, len(grid) - 1, 243).astype(int)]
    nodes = [np.clip(x0 + g * steps, [b[0] for b in bounds], [b[1] for b in bounds]) for g in grid]
    costs = np.array([f(v) for v in nodes])
    order = np.argsort(costs, kind="stable")
    starts = [x0] + [nodes[i] for i in order[: n_restarts + 1] if not np.allclose(nodes[i], x0)][:n_restarts]

    best = None
    for s in starts:
        res = _nm(f, s, bounds)
        if best is None or res.fun < best.fun:
            best = res
    chi2_min = float(best.fun)
    converged = bool(best.success) and chi2_min < _PENALTY
    message = str(best.message) if chi2_min < _PENALTY else "no parameter set gives an overlapping collapse"
    params = ansatz.full(best.x)

    errors = {}
    if error_bars and converged:
        for i, name in enumerate(names):
            errors[name] = _profile_interval(f, best.x, i, bounds, chi2_min)
    n_used = 0
    master = {}
    if chi2_min < _PENALTY:
        _, n_used = chi2_cost(params, data, ansatz, return_count=True)
        x, y, sig = scale_points(params, data, ansatz.form)
        o = np.argsort(x, kind="stable")
        master = {"L": data.L[o], "x": x[o], "y": y[o], "sigma": sig[o]}
    return CollapseResult(ansatz.form, params, errors, chi2_min, n_used, converged, message, master)


def _profile_interval(f, xbest, i, bounds, chi2_min):
    """Where the profile of parameter ``i`` crosses ``EXCESS * chi2_min`` on both sides."""
    target = EXCESS * max(chi2_min, 1e-300)
    others = [k for k in range(len(xbest)) if k != i]
    warm = {"x": xbest[others].copy()}

    def profile(v):
        if not others:
            return f(np.array([v]))
        def g(u):
            full = xbest.copy()
            full[i] = v
            full[others] = u
            return f(full)
        res = _nm(g, warm["x"], [bounds[k] for k in others], tol=1e-10)
        if res.fun < _PENALTY:
            warm["x"] = res.x
        return float(res.fun)

    out = []
    for direction in (-1.0, 1.0):
        warm["x"] = xbest[others].copy()
        lo_b, hi_b = bounds[i]
        limit = lo_b if direction < 0 else hi_b
        v0 = xbest[i]
        step = max(abs(v0) * 1e-3, 1e-4)
        inside, outside = v0, None
        for _ in range(60):
            v = v0 + direction * step
            if (v - limit) * direction >= 0:
                v = limit
            if profile(v) > target:
                outside = v
                break
            inside = v
            if v == limit:
                break
            step *= 1.6
        if outside is None:
            out.append(inside)
            continue
        for _ in range(40):
            mid = 0.5 * (inside + outside)
            if profile(mid) > target:
                outside = mid
            else:
                inside = mid
            if abs(outside - inside) <= 1e-6 * max(1.0, abs(v0)):
                break
        out.append(inside)
    return (float(min(out[0], xbest[i])), float(max(out[1], xbest[i])))


def fit_power_law(times, values, t_window=None) -> tuple[float, float]:
    """Least-squares fit of ``values = prefactor * t**exponent`` on log-log axes."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t_window is not None:
        sel = (t >= t_window[0]) & (t <= t_window[1])
        t, v = t[sel], v[sel]
    if len(t) < 2:
        raise ValueError("need at least two points in the window")
    if np.any(v <= 0) or np.any(t <= 0):
        raise ValueError("power-law fit needs positive times and values")
    slope, icpt = np.polyfit(np.log(t), np.log(v), 1)
    return float(slope), float(math.exp(icpt))


def fit_entropy_decay(times, values, L: int, sem=None, t_max=None, min_points: int = 3) -> tuple[float, float]:
    """Fit ``S(t) = S_inf * exp(-Gamma * t / L)`` over ``L/2 <= t <= t_max``; returns ``(Gamma, S_inf)``.

    With ``sem`` given, the log-linear fit weights each point by
    ``(value / sem)**2``, the inverse variance of ``log(value)``.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = t >= L / 2
    if t_max is not None:
        sel &= t <= t_max
    t, v = t[sel], v[sel]
    if len(t) < min_points:
        raise ValueError(f"fit window holds {len(t)} points, need {min_points}")
    if np.any(v <= 0):
        raise ValueError("entropy decay fit needs positive values")
    w = None
    if sem is not None:
        e = np.asarray(sem, dtype=float)[sel]
        if np.any(e <= 0):
            raise ValueError("sem must be positive inside the fit window")
        w = v / e  # polyfit squares the weights
    slope, icpt = np.polyfit(t / L, np.log(v), 1, w=w)
    return float(-slope), float(math.exp(icpt))


def static_dataset(series_by_point, t_of_L) -> ScalingDataset:
    """Points at ``t = t_of_L(L)`` from ``{(L, p): AggregatedSeries}`` by linear interpolation."""
    from .harness import interpolate_at

    pts = []
    for (L, p), series in sorted(series_by_point.items()):
        value, err = interpolate_at(series, t_of_L(L))
        pts.append((L, p, value, err))
    return ScalingDataset.from_points(pts)


def dynamic_dataset(series_by_L, t_min: float = 1.0, t_max_of_L=None) -> ScalingDataset:
    """Points ``(L, t, value, sem)`` from ``{L: AggregatedSeries}`` on each recorded grid."""
    pts = []
    for L, series in sorted(series_by_L.items()):
        hi = t_max_of_L(L) if t_max_of_L else np.inf
        for t, m, s in zip(series.times, series.mean, series.sem):
            if t_min <= t <= hi and s > 0:
                pts.append((L, t, m, s))
    return ScalingDataset.from_points(pts)

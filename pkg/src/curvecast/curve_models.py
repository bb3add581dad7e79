"""The four-term learning-curve law and the M1-M4 scaling-law baselines.

The law ``a(t) = A*ln t + B*sqrt t + C + D/t`` is linear in its parameters
and is fitted exactly by least squares. The baselines

* M1: ``y = a * t**b``
* M2: ``y = a * t**b + c``
* M3: ``y = a * (t + d)**b + c``  with ``d >= -1 + eps``
* M4: ``(y - eps_inf) / (eps0 - y)**a = b * t**c``  with ``eps0 > eps_inf``

are fitted with multi-start Levenberg-Marquardt. Epochs are indexed from 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._seeding import rng_for
from .dataset_io import ValidationCurve
from .lm import levenberg_marquardt

FAMILIES = ("M1", "M2", "M3", "M4")
COEFFICIENTS = {
    "M1": ("a", "b"),
    "M2": ("a", "b", "c"),
    "M3": ("a", "b", "c", "d"),
    "M4": ("a", "b", "c", "eps0", "epsInf"),
}
N_RESTARTS = 8
M3_D_FLOOR = -1.0 + 1e-6
BISECTION_TOL = 1e-10


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class CurveParams:
    A: float
    B: float
    C: float
    D: float

    def __post_init__(self) -> None:
        if not all(np.isfinite([self.A, self.B, self.C, self.D])):
            raise ValueError(f"non-finite curve parameters {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C, self.D])

    @classmethod
    def from_array(cls, theta: Sequence[float]) -> "CurveParams":
        A, B, C, D = (float(v) for v in theta)
        return cls(A, B, C, D)


@dataclass(frozen=True)
class BaselineParams:
    family: str
    coefficients: Mapping[str, float]

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown baseline family {self.family!r}")
        names = COEFFICIENTS[self.family]
        if tuple(self.coefficients) != names:
            raise ValueError(f"{self.family} needs coefficients {names}")
        coef = {k: float(v) for k, v in self.coefficients.items()}
        if not all(np.isfinite(list(coef.values()))):
            raise ValueError(f"non-finite {self.family} coefficients")
        if self.family == "M3" and coef["d"] < M3_D_FLOOR:
            raise ValueError("M3 requires d >= -1 + eps")
        if self.family == "M4" and not coef["eps0"] > coef["epsInf"]:
            raise ValueError("M4 requires eps0 > epsInf")
        object.__setattr__(self, "coefficients", coef)

    def __getitem__(self, name: str) -> float:
        return self.coefficients[name]

    def as_array(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()))


@dataclass(frozen=True)
class FitResult:
    params: CurveParams | BaselineParams
    rmse: float
    converged: bool = True
    rank_deficient: bool = False


@dataclass(frozen=True)
class CurveSplit:
    support: np.ndarray = field(repr=False)
    query: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return len(self.support)


# ---------------------------------------------------------------------------
# the four-term law
# ---------------------------------------------------------------------------


def _epochs(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 1):
        raise ValueError("epochs start at t = 1 (the law is singular at t = 0)")
    return t


def law_basis(t) -> np.ndarray:
    """Design matrix with columns ``[ln t, sqrt t, 1, 1/t]``."""
    t = _epochs(np.atleast_1d(t))
    return np.column_stack([np.log(t), np.sqrt(t), np.ones_like(t), 1.0 / t])


def eval_law(theta: CurveParams, t):
    """Evaluate the law at epoch(s) ``t >= 1``."""
    values = law_basis(t) @ theta.as_array()
    return float(values[0]) if np.ndim(t) == 0 else values


def _as_points(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitError("points must be a sequence of (t, value) pairs")
    t, y = arr[:, 0], arr[:, 1]
    if not np.all(np.isfinite(arr)):
        raise FitError("points must be finite")
    _epochs(t)
    return t, y


def curve_points(values: Sequence[float], start: int = 1) -> np.ndarray:
    """Pair a value series with epochs ``start, start+1, ...``."""
    values = np.asarray(values, dtype=float)
    return np.column_stack([np.arange(start, start + len(values), dtype=float), values])


def fit_law(points) -> FitResult:
    """Exact least-squares fit of the four-term law.

    Solved by QR on the column-scaled design matrix. A rank-deficient design
    (e.g. all epochs equal) is flagged and gets the minimum-norm solution.
    """
    t, y = _as_points(points)
    if len(t) < 4:
        raise FitError(f"the law needs at least 4 points, got {len(t)}")
    A = law_basis(t)
    scale = np.linalg.norm(A, axis=0)
    As = A / scale
    Q, R = np.linalg.qr(As)
    diag = np.abs(np.diag(R))
    deficient = bool(diag.min() <= 1e-10 * diag.max())
    if deficient:
        theta = np.linalg.lstsq(A, y, rcond=None)[0]
    else:
        theta = np.linalg.solve(R, Q.T @ y) / scale
    resid = A @ theta - y
    return FitResult(CurveParams.from_array(theta), float(np.sqrt(np.mean(resid**2))),
                     True, deficient)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


def _pow(base: np.ndarray, expo: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return np.power(base, expo)


def _model(family: str, p: np.ndarray, t: np.ndarray) -> np.ndarray:
    if family == "M1":
        return p[0] * _pow(t, p[1])
    if family == "M2":
        return p[0] * _pow(t, p[1]) + p[2]
    if family == "M3":
        return p[0] * _pow(t + p[3], p[1]) + p[2]
    raise ValueError(family)


def _model_jac(family: str, p: np.ndarray, t: np.ndarray) -> np.ndarray:
    if family == "M3":
        u = t + p[3]
        ub = _pow(u, p[1])
        with np.errstate(all="ignore"):
            return np.column_stack([ub, p[0] * ub * np.log(u), np.ones_like(t),
                                    p[0] * p[1] * ub / u])
    tb = _pow(t, p[1])
    cols = [tb, p[0] * tb * np.log(t)]
    if family == "M2":
        cols.append(np.ones_like(t))
    return np.column_stack(cols)


def _linear_coeffs(columns: list[np.ndarray], y: np.ndarray) -> np.ndarray:
    M = np.column_stack(columns)
    if not np.all(np.isfinite(M)):
        return np.zeros(M.shape[1])
    return np.linalg.lstsq(M, y, rcond=None)[0]


def _explicit_starts(family: str, t, y, rng: np.random.Generator) -> list[np.ndarray]:
    starts = []
    for _ in range(N_RESTARTS):
        b = rng.uniform(-1.0, 1.0) if family == "M1" else rng.uniform(-2.0, 1.0)
        if family == "M1":
            (a,) = _linear_coeffs([_pow(t, b)], y)
            starts.append(np.array([a, b]))
        elif family == "M2":
            a, c = _linear_coeffs([_pow(t, b), np.ones_like(t)], y)
            starts.append(np.array([a, b, c]))
        else:
            d = rng.uniform(-0.9, 10.0)
            a, c = _linear_coeffs([_pow(t + d, b), np.ones_like(t)], y)
            starts.append(np.array([a, b, c, d]))
    return starts


def _fit_explicit(family: str, t, y, seed: int) -> tuple[np.ndarray, float, bool]:
    rng = rng_for(seed, f"baseline-{family}")
    starts = _explicit_starts(family, t, y, rng)
    # warm start from the nested family so that M3 <= M2 <= M1 in residual
    if family == "M2":
        p, _, _ = _fit_explicit("M1", t, y, seed)
        starts.append(np.array([p[0], p[1], 0.0]))
    elif family == "M3":
        p, _, _ = _fit_explicit("M2", t, y, seed)
        starts.append(np.array([p[0], p[1], p[2], 0.0]))

    def residual(p):
        return _model(family, p, t) - y

    def jacobian(p):
        return _model_jac(family, p, t)

    project = None
    if family == "M3":
        def project(p):
            p = p.copy()
            p[3] = max(p[3], M3_D_FLOOR)
            return p

    best = None
    for x0 in starts:
        res = levenberg_marquardt(residual, jacobian, x0, project)
        if best is None or res.cost < best.cost:
            best = res
    return best.x, best.cost, best.converged


def _m4_unpack(q: np.ndarray, ymin: float, ymax: float) -> tuple[float, float, float, float, float]:
    with np.errstate(over="ignore"):
        a, b, c = np.exp(q[0]), np.exp(q[1]), q[2]
        return a, b, c, ymax + np.exp(q[3]), ymin - np.exp(q[4])


def _fit_m4(t, y, seed: int) -> tuple[np.ndarray, float, bool]:
    # internal parameters: log a, log b, c, log(eps0 - max y), log(min y - epsInf)
    ymin, ymax = float(y.min()), float(y.max())
    span = max(ymax - ymin, 1e-3)
    lt = np.log(t)

    def residual(q):
        a, b, c, e0, einf = _m4_unpack(q, ymin, ymax)
        with np.errstate(all="ignore"):
            return (y - einf) - b * np.exp(c * lt + a * np.log(e0 - y))

    def jacobian(q):
        a, b, c, e0, einf = _m4_unpack(q, ymin, ymax)
        w = e0 - y
        with np.errstate(all="ignore"):
            G = b * np.exp(c * lt + a * np.log(w))
            return np.column_stack([-G * a * np.log(w), -G, -G * lt,
                                    -G * a / w * np.exp(q[3]),
                                    np.full_like(y, np.exp(q[4]))])

    rng = rng_for(seed, "baseline-M4")
    best = None
    for _ in range(N_RESTARTS):
        a = rng.uniform(0.2, 3.0)
        c = rng.uniform(-2.0, 2.0)
        off0, offi = span * rng.uniform(0.05, 1.0, size=2)
        g = np.exp(c * lt + a * np.log(ymax + off0 - y))
        b = max(float((y - ymin + offi) @ g / (g @ g)), 1e-8)
        q0 = np.array([np.log(a), np.log(b), c, np.log(off0), np.log(offi)])
        res = levenberg_marquardt(residual, jacobian, q0)
        if best is None or res.cost < best.cost:
            best = res
    return best.x, best.cost, best.converged


def fit_baseline(family: str, points, seed: int = 0) -> FitResult:
    """Fit one of M1-M4 with 8 seeded LM restarts and keep the best.

    ``rmse`` is measured in value space for every family; for M4 the curve is
    first recovered from the implicit equation.
    """
    family = family.upper()
    if family not in FAMILIES:
        raise FitError(f"unknown baseline family {family!r}")
    t, y = _as_points(points)
    n_params = len(COEFFICIENTS[family])
    if len(t) < n_params:
        raise FitError(f"{family} needs at least {n_params} points, got {len(t)}")

    if family == "M4":
        q, _, converged = _fit_m4(t, y, seed)
        a, b, c, e0, einf = _m4_unpack(q, float(y.min()), float(y.max()))
        params = BaselineParams("M4", dict(zip(COEFFICIENTS["M4"], (a, b, c, e0, einf))))
        pred, _ = _solve_m4(params, t)
    else:
        p, _, converged = _fit_explicit(family, t, y, seed)
        params = BaselineParams(family, dict(zip(COEFFICIENTS[family], p)))
        pred = _model(family, p, t)
    rmse = float(np.sqrt(np.mean((pred - y) ** 2)))
    return FitResult(params, rmse, bool(converged))


def _solve_m4(params: BaselineParams, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bisection on ``f(y) = (y - eps_inf) - b t^c (eps0 - y)^a`` inside (eps_inf, eps0)."""
    a, b, c = params["a"], params["b"], params["c"]
    lo = np.full(t.shape, params["epsInf"])
    hi = np.full(t.shape, params["eps0"])
    rhs = b * _pow(t, c)

    def f(yv):
        with np.errstate(all="ignore"):
            return (yv - params["epsInf"]) - rhs * _pow(np.maximum(params["eps0"] - yv, 0.0), a)

    f_lo, f_hi = f(lo), f(hi)
    clamped = ~((f_lo <= 0) & (f_hi >= 0))
    # no sign change: clamp to the bound the function points towards
    fallback = np.where(f_lo > 0, lo, hi)
    for _ in range(200):
        if np.all(hi - lo <= BISECTION_TOL):
            break
        mid = 0.5 * (lo + hi)
        neg = f(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return np.where(clamped, fallback, 0.5 * (lo + hi)), clamped


def extrapolate(params: CurveParams | BaselineParams, horizon: int, return_flags: bool = False):
    """Curve values at ``t = 1..horizon``.

    With ``return_flags`` also returns a boolean array marking M4 points where
    the implicit equation had no root and the value was clamped to a bound.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    t = np.arange(1, horizon + 1, dtype=float)
    flags = np.zeros(horizon, dtype=bool)
    if isinstance(params, CurveParams):
        values = law_basis(t) @ params.as_array()
    elif params.family == "M4":
        values, flags = _solve_m4(params, t)
    else:
        values = _model(params.family, params.as_array(), t)
    return (values, flags) if return_flags else values


def split_curve(curve: ValidationCurve | Sequence[float], k: int = 5) -> CurveSplit:
    values = np.asarray(curve.values if isinstance(curve, ValidationCurve) else curve, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(values) <= k:
        raise ValueError(f"curve of length {len(values)} leaves no query points for k={k}")
    return CurveSplit(values[:k].copy(), values[k:].copy())


def params_to_dict(params: CurveParams | BaselineParams) -> dict:
    if isinstance(params, CurveParams):
        return {"family": "ours", "A": params.A, "B": params.B, "C": params.C, "D": params.D}
    return {"family": params.family, **params.coefficients}

"""Talenti bubble, cut-off, the concentrating family u_eps and its energy ladder."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .functionals import critical_exponent
from .geometry import DomainMask, hardy_weight, project_support, weighted_l2_sq
from .spectral import Field, GridSpec, lp_norm, seminorm_sq

SLOPE_TOL = 0.15
CSV_VERSION = "fraclap-bubble-report/1"


def _check_order(n, m):
    if not 0 < m < n / 2:
        raise ValueError(f"order must satisfy 0 < m < n/2, got m={m}, n={n}")


def talenti_bubble(grid: GridSpec, m: float) -> Field:
    """Samples of ``(1 + |x|^2)^((2m - n)/2)``."""
    _check_order(grid.n, m)
    return Field(grid, (1.0 + grid.radius2()) ** ((2 * m - grid.n) / 2))


def _smooth_step(t):
    # 1 at t <= 0, 0 at t >= 1, C-infinity in between
    t = np.clip(t, 0.0, 1.0)
    a = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    b = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    return a / (a + b)


def cutoff(grid: GridSpec, delta: float) -> Field:
    """Radial bump equal to 1 on ``|x| <= delta`` and 0 on ``|x| >= 2 delta``."""
    if delta <= 0:
        raise ValueError("cut-off radius must be positive")
    if 2 * delta > grid.L / 2:
        raise ValueError(f"support radius 2*delta={2 * delta:g} leaves the admissible region [-L/2, L/2]")
    r = np.sqrt(grid.radius2())
    return Field(grid, _smooth_step((r - delta) / delta))


@dataclass
class BubbleParams:
    m: float
    eps: float
    delta: float

    def validate(self, grid: GridSpec, mask: DomainMask | None = None):
        if self.eps <= 0 or self.delta <= 0:
            raise ValueError("eps and delta must be positive")
        if self.eps > self.delta / 4 * (1 + 1e-12):
            raise ValueError(f"eps={self.eps:g} exceeds delta/4={self.delta / 4:g}")
        if self.eps < 4 * grid.h * (1 - 1e-12):
            raise ValueError(
                f"eps={self.eps:g} is not resolved: needs eps >= 4h = {4 * grid.h:g}"
            )
        if mask is not None and 2 * self.delta >= mask.inradius:
            raise ValueError(
                f"2*delta={2 * self.delta:g} must stay below the domain inradius {mask.inradius:g}"
            )


def bubble_values(grid: GridSpec, m: float, eps: float, delta: float, center=None) -> np.ndarray:
    """Unchecked ``phi(x - c) (eps^2 + |x - c|^2)^((2m-n)/2)``; used for seeds too."""
    if center is None or not np.any(center):
        r2 = grid.radius2()
    else:
        r2 = sum((x - c) ** 2 for x, c in zip(grid.coords(), center))
    r = np.sqrt(r2)
    return _smooth_step((r - delta) / delta) * (eps**2 + r2) ** ((2 * m - grid.n) / 2)


def test_bubble(grid: GridSpec, params: BubbleParams, mask: DomainMask | None = None) -> Field:
    _check_order(grid.n, params.m)
    params.validate(grid, mask)
    cutoff(grid, params.delta)  # support check
    return Field(grid, bubble_values(grid, params.m, params.eps, params.delta))


test_bubble.__test__ = False  # not a pytest test


def default_delta(mask: DomainMask) -> float:
    return mask.inradius / 4


def lemma31_quantities(grid: GridSpec, mask: DomainMask, n: int, m: float, s: float,
                       eps: float, delta: float | None = None):
    """Return ``(A_m, A_s, A_s_tilde, B)`` for the bubble ``u_eps``."""
    if n != grid.n:
        raise ValueError(f"n={n} does not match grid dimension {grid.n}")
    if not 0 <= s < m < n / 2:
        raise ValueError(f"requires 0 <= s < m < n/2, got n={n}, m={m}, s={s}")
    delta = default_delta(mask) if delta is None else delta
    u = test_bubble(grid, BubbleParams(m, eps, delta), mask)
    if not np.array_equal(project_support(u, mask).values, u.values):
        raise ValueError("u_eps is not supported inside the domain; is the origin in Ω?")
    p = critical_exponent(n, m)
    A_m = seminorm_sq(u, m)
    A_s = seminorm_sq(u, s)
    A_t = weighted_l2_sq(u, hardy_weight(grid, s))
    B = lp_norm(u, p) ** p
    return A_m, A_s, A_t, B


def _r2(y, fit):
    ss = np.sum((y - y.mean()) ** 2)
    return 1.0 - np.sum((y - fit) ** 2) / ss if ss > 0 else 1.0


def fit_exponent(pairs):
    """OLS slope of ``log value`` against ``log eps`` and its r^2."""
    pairs = list(pairs)
    if len(pairs) < 4:
        raise ValueError("need at least 4 (eps, value) pairs")
    eps = np.array([p[0] for p in pairs], dtype=float)
    val = np.array([p[1] for p in pairs], dtype=float)
    if np.any(val <= 0) or np.any(eps <= 0):
        raise ValueError("eps and values must be positive")
    if np.ptp(eps) == 0:
        raise ValueError("degenerate ladder: all eps equal")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps ladder must be strictly decreasing")
    x, y = np.log(eps), np.log(val)
    slope, icpt = np.polyfit(x, y, 1)
    return float(slope), float(_r2(y, slope * x + icpt))


def _fit_log_law(eps, val):
    x = np.abs(np.log(eps))
    slope, icpt = np.polyfit(x, val, 1)
    return float(slope), float(_r2(val, slope * x + icpt))


@dataclass
class BubbleReport:
    n: int
    m: float
    s: float
    delta: float
    eps_ladder: list
    A_m: list
    A_s: list
    A_s_tilde: list
    B: list
    fitted_slopes: dict
    r_squared: dict
    predicted: dict
    regime: str
    log_law_flag: bool | None
    verdicts: dict = dc_field(default_factory=dict)
    grid: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {CSV_VERSION} n={self.n} m={self.m!r} s={self.s!r} delta={self.delta!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "A_m", "A_s", "A_s_tilde", "B"])
        for row in zip(self.eps_ladder, self.A_m, self.A_s, self.A_s_tilde, self.B):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def make_eps_ladder(delta: float, count: int = 4) -> list:
    """Geometric ladder ``delta/4, delta/8, ...`` of the given length."""
    return [delta / 4 / 2**j for j in range(count)]


def verify_lemma31(grid: GridSpec, mask: DomainMask, n: int, m: float, s: float,
                   eps_ladder=None, delta: float | None = None, tol: float = SLOPE_TOL) -> BubbleReport:
    """Fit the eps-exponents of the bubble energies and compare with the predicted laws."""
    delta = default_delta(mask) if delta is None else delta
    if eps_ladder is None:
        eps_ladder = make_eps_ladder(delta)
    eps = [float(e) for e in eps_ladder]
    if len(eps) < 4:
        raise ValueError("eps ladder too short: need at least 4 points")
    rows = [lemma31_quantities(grid, mask, n, m, s, e, delta) for e in eps]
    A_m, A_s, A_t, B = (list(map(float, col)) for col in zip(*rows))

    slopes, r2 = {}, {}
    for name, col in (("A_m", A_m), ("A_s", A_s), ("A_s_tilde", A_t), ("B", B)):
        slopes[name], r2[name] = fit_exponent(zip(eps, col))

    threshold = 2 * m - n / 2
    predicted = {"A_m": 2 * m - n, "B": -n}
    verdicts = {
        "A_m": abs(slopes["A_m"] - predicted["A_m"]) <= tol,
        "B": abs(slopes["B"] - predicted["B"]) <= tol,
    }
    log_flag = None
    if math.isclose(s, threshold, abs_tol=1e-12):
        regime = "log"
        lin_slope, lin_r2 = _fit_log_law(np.array(eps), np.array(A_t))
        slopes["A_s_tilde_log"], r2["A_s_tilde_log"] = lin_slope, lin_r2
        log_flag = lin_r2 > r2["A_s_tilde"]
        verdicts["A_s_tilde"] = log_flag
    elif s > threshold:
        regime = "power"
        predicted["A_s_tilde"] = 4 * m - n - 2 * s
        verdicts["A_s_tilde"] = abs(slopes["A_s_tilde"] - predicted["A_s_tilde"]) <= tol
    else:
        # the weighted integral stays bounded; only a lower bound is meaningful
        regime = "bounded"
        predicted["A_s_tilde"] = 0.0
        verdicts["A_s_tilde"] = slopes["A_s_tilde"] >= min(0.0, 4 * m - n - 2 * s) - tol

    return BubbleReport(
        n=n, m=m, s=s, delta=delta, eps_ladder=eps, A_m=A_m, A_s=A_s, A_s_tilde=A_t, B=B,
        fitted_slopes=slopes, r_squared=r2, predicted=predicted, regime=regime,
        log_law_flag=log_flag, verdicts=verdicts, grid=grid.to_dict(),
    )

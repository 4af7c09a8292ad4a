"""Critical exponent, the two perturbed Rayleigh quotients and pinned constants."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .geometry import DomainMask, HardyWeight, hardy_weight, make_ball_mask, project_support
from .spectral import Field, GridSpec, lp_norm, make_grid, seminorm_sq

VARIANTS = ("spectral", "hardy")


class PinningError(RuntimeError):
    pass


def critical_exponent(n: int, m: float) -> float:
    """``2n / (n - 2m)``."""
    if m >= n / 2:
        raise ValueError(f"critical exponent requires m < n/2, got m={m}, n={n}")
    return 2.0 * n / (n - 2.0 * m)


@dataclass(frozen=True)
class ProblemParams:
    n: int
    m: float
    s: float = 0.0
    lam: float = 0.0
    variant: str = "spectral"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.m < self.n / 2:
            raise ValueError(f"requires m < n/2 (m={self.m}, n={self.n})")
        if not 0 <= self.s:
            raise ValueError(f"requires 0 <= s (s={self.s})")
        if not self.s < self.m:
            raise ValueError(f"requires s < m (s={self.s}, m={self.m})")

    @property
    def p(self) -> float:
        return critical_exponent(self.n, self.m)

    def with_lambda(self, lam: float) -> "ProblemParams":
        return ProblemParams(self.n, self.m, self.s, float(lam), self.variant)

    def check_domain(self, mask: DomainMask):
        if self.variant == "hardy":
            mask.require_origin()

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "s": self.s, "lambda": self.lam, "variant": self.variant}


def perturbation_form(u: Field, params: ProblemParams, weights: HardyWeight | None = None) -> float:
    if params.variant == "spectral":
        return seminorm_sq(u, params.s)
    if weights is None:
        weights = hardy_weight(u.grid, params.s)
    return float(np.sum(weights.values * u.values**2) * u.grid.cell_volume)


def rayleigh(field: Field, params: ProblemParams, mask: DomainMask,
             weights: HardyWeight | None = None) -> float:
    """Perturbed Sobolev quotient of ``field`` after projecting onto the mask."""
    if field.grid.n != params.n:
        raise ValueError("field dimension does not match the problem")
    params.check_domain(mask)
    u = project_support(field, mask)
    denom = lp_norm(u, params.p) ** 2
    if denom == 0:
        raise ValueError("rayleigh quotient undefined for the zero field")
    num = seminorm_sq(u, params.m)
    if params.lam != 0:
        num -= params.lam * perturbation_form(u, params, weights)
    q = num / denom
    if not math.isfinite(q):
        raise ValueError("rayleigh quotient is not finite")
    return q


# --- pinned reference constants -------------------------------------------------


def _default_sobolev_ladder(n):
    if n == 1:
        return [(100.0 * 2**j, 2 ** (12 + j)) for j in range(8)]
    if n == 2:
        return [(8.0 * 2**j, 64 * 2**j) for j in range(4)]
    if n == 3:
        return [(4.0 * 2**j, 16 * 2**j) for j in range(4)]
    return [(4.0 * 2**j, 16 * 2**j) for j in range(3)]


def _extrapolate_power(Ls, vals, q):
    """Fit ``S + a L^-q + b L^-2q`` on every consecutive triple."""
    out = []
    for j in range(len(Ls) - 2):
        L = np.asarray(Ls[j:j + 3], dtype=float)
        A = np.column_stack([np.ones(3), L**-q, L ** (-2 * q)])
        out.append(float(np.linalg.solve(A, vals[j:j + 3])[0]))
    return out


def _observed_order(vals, ratio=2.0):
    d = np.diff(vals)
    if len(d) < 2 or d[-1] == 0 or d[-2] == 0:
        return float("nan")
    return float(math.log(abs(d[-2] / d[-1])) / math.log(ratio))


def _check_monotone(vals, what):
    d = np.diff(vals)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise PinningError(f"{what}: ladder values do not converge monotonically: {list(vals)}")


@dataclass
class Pin:
    value: float
    raw: list
    extrapolates: list
    spread: float
    order: float
    observed_order: float
    ladder: list

    def to_dict(self):
        return asdict(self)


def _spread(extr, raw):
    if len(extr) >= 2:
        return abs(extr[-1] - extr[-2]) / abs(extr[-1])
    return abs(extr[-1] - raw[-1]) / abs(extr[-1])


def pin_sobolev_constant(n: int, m: float, grid_ladder=None, max_spread: float = 0.01):
    """Estimate ``S_m`` from the bubble quotient on boxes of growing size.

    Returns ``(S_pin, M_pin)``: the extrapolated Sobolev quotient of the
    Talenti bubble and its energy.  A truncated bubble misses a far-field
    tail of relative size ``L^-(n-2m)``; that order (and its square) is
    eliminated by three-level Richardson steps.
    """
    from .testfunctions import talenti_bubble

    critical_exponent(n, m)
    ladder = list(grid_ladder or _default_sobolev_ladder(n))
    if len(ladder) < 3:
        raise ValueError("Sobolev pinning needs a ladder of at least 3 grids")
    Ls = [float(L) for L, _ in ladder]
    if any(b <= a for a, b in zip(Ls, Ls[1:])):
        raise ValueError("ladder box sizes must increase")
    p = critical_exponent(n, m)
    quot, mass, meta = [], [], []
    for L, N in ladder:
        g = make_grid(n, N, L)
        phi = talenti_bubble(g, m)
        a = seminorm_sq(phi, m)
        b = lp_norm(phi, p) ** p
        quot.append(a / b ** (2 / p))
        mass.append(b)
        meta.append(g.to_dict())
    _check_monotone(quot, "Sobolev quotient")
    q = n - 2 * m
    ex = _extrapolate_power(Ls, np.array(quot), q)
    sp = _spread(ex, quot)
    if sp > max_spread:
        raise PinningError(f"Sobolev pinning spread {sp:.3%} exceeds {max_spread:.0%}")
    S = Pin(ex[-1], quot, ex, sp, q, _observed_order(quot, Ls[-1] / Ls[-2]), meta)
    mex = _extrapolate_power(Ls, np.array(mass), float(n))
    M = S.value * mex[-1] ** (2 / p)
    Mpin = Pin(M, [qq * bb ** (2 / p) for qq, bb in zip(quot, mass)], [], _spread(mex, mass),
               float(n), _observed_order(mass, Ls[-1] / Ls[-2]), meta)
    return S, Mpin


def _default_hardy_ladder(n):
    if n == 1:
        return [2**j for j in range(10, 17)]
    if n == 2:
        return [32, 64, 128, 256]
    return [16, 32, 64, 128][: 4 if n == 3 else 3]


def _extrapolate_inverse_log(xs, vals):
    """Fit ``H + c / (x + b)^2`` exactly through each consecutive triple."""
    out = []
    for j in range(len(xs) - 2):
        x = np.asarray(xs[j:j + 3])
        v = np.asarray(vals[j:j + 3])
        target = (v[0] - v[1]) / (v[1] - v[2])

        def f(b):
            t = 1.0 / (x + b) ** 2
            return (t[0] - t[1]) / (t[1] - t[2]) - target

        lo = -x[0] + 1e-6
        hi = lo + 1.0
        while f(hi) * f(lo) > 0 and hi < 1e6:
            hi = lo + 2 * (hi - lo)
        try:
            b = brentq(f, lo, hi, xtol=1e-13)
        except ValueError as exc:
            raise PinningError(f"inverse-log model does not fit {list(v)}") from exc
        t = 1.0 / (x + b) ** 2
        c = (v[0] - v[1]) / (t[0] - t[1])
        out.append(float(v[2] - c * t[2]))
    return out


def hardy_eigenvalue(grid: GridSpec, mask: DomainMask, m: float, tol: float = 1e-9):
    """Smallest value of ``|u|_m^2 / sum |x|^-2m u^2 h^n`` over fields in the mask."""
    from .eigensolver import ConvergenceError, lowest_eigenpair

    try:
        return lowest_eigenpair(grid, mask, m, m, "hardy", tol=tol)
    except ConvergenceError as exc:
        raise PinningError(str(exc)) from exc


def pin_hardy_constant(n: int, m: float, ladder=None, L: float = 4.0, radius: float = 1.0,
                       max_spread: float = 0.01) -> Pin:
    """Estimate ``H_m`` from the Hardy eigenvalue on a ball under grid refinement.

    The discrete minimizer collapses onto the origin cell, and the eigenvalue
    approaches ``H_m`` like ``1/log(radius/h)^2``; the model
    ``H + c/(log N + b)^2`` is fitted through consecutive triples.
    """
    critical_exponent(n, m)
    Ns = list(ladder or _default_hardy_ladder(n))
    if len(Ns) < 3:
        raise ValueError("Hardy pinning needs a ladder of at least 3 grids")
    vals, meta = [], []
    for N in Ns:
        g = make_grid(n, N, L)
        mask = make_ball_mask(g, radius, variant="hardy")
        res = hardy_eigenvalue(g, mask, m)
        vals.append(res.lambda1)
        meta.append({**g.to_dict(), "radius": radius, "iterations": res.iterations})
    _check_monotone(vals, "Hardy eigenvalue")
    ex = _extrapolate_inverse_log(np.log(np.asarray(Ns, dtype=float)), np.array(vals))
    sp = _spread(ex, vals)
    if sp > max_spread:
        raise PinningError(f"Hardy pinning spread {sp:.3%} exceeds {max_spread:.0%}")
    return Pin(ex[-1], vals, ex, sp, 2.0, _observed_order(vals), meta)


@dataclass
class PinnedConstants:
    n: int
    m: float
    S_m_hat: float
    H_m_hat: float | None
    M_hat: float
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        for name in ("S_m_hat", "M_hat"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.H_m_hat is not None and not self.H_m_hat > 0:
            raise ValueError("H_m_hat must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PinnedConstants":
        return cls(int(d["n"]), float(d["m"]), float(d["S_m_hat"]),
                   None if d.get("H_m_hat") is None else float(d["H_m_hat"]),
                   float(d["M_hat"]), d.get("provenance", {}))

    def save(self, path) -> Path:
        from .io import atomic_write_text

        return atomic_write_text(path, self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "PinnedConstants":
        return cls.from_dict(json.loads(Path(path).read_text()))


def pin_constants(n: int, m: float, sobolev_ladder=None, hardy_ladder=None,
                  with_hardy: bool = True) -> PinnedConstants:
    S, M = pin_sobolev_constant(n, m, sobolev_ladder)
    prov = {"sobolev": S.to_dict(), "bubble_energy": M.to_dict()}
    H = None
    if with_hardy:
        Hp = pin_hardy_constant(n, m, hardy_ladder)
        prov["hardy"] = Hp.to_dict()
        H = Hp.value
    return PinnedConstants(n, m, S.value, H, M.value, prov)

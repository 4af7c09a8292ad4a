"""Ground states of the perturbed critical quotients and the threshold lambda*.

The minimization is a normalized projected gradient flow: a preconditioned
gradient step on the quotient, projection onto the mask, and rescaling to
unit ``L^p`` norm with ``p = 2n/(n-2m)``.  Each step is accepted by
backtracking (Armijo) so the quotient never increases.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from .eigensolver import ConvergenceError, EigenResult, poincare_lambda1
from .functionals import PinnedConstants, ProblemParams, rayleigh
from .geometry import DomainMask, hardy_weight
from .spectral import Field, GridSpec, form_half, multiply, symbol
from .testfunctions import bubble_values

log = logging.getLogger(__name__)

ARMIJO = 1e-4
CONCENTRATION_CELLS = 3.0
DEFAULT_MARGIN = 0.02


class LambdaStarError(RuntimeError):
    def __init__(self, msg, curve=None):
        super().__init__(msg)
        self.curve = curve


@dataclass
class MinimizationResult:
    S_value: float
    field: Field = dc_field(repr=False)
    converged: bool
    concentrated: bool
    r_eff: float
    iterations: int
    lam: float = 0.0
    seed: str = ""
    solution_scale: float = float("nan")
    starts: list = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "S_value": self.S_value,
            "converged": self.converged,
            "concentrated": self.concentrated,
            "r_eff": self.r_eff,
            "iterations": self.iterations,
            "seed": self.seed,
            "solution_scale": self.solution_scale,
            "starts": self.starts,
            "grid": self.field.grid.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def effective_radius(u: np.ndarray, grid: GridSpec, p: float) -> float:
    """Half-mass radius of the ``|u|^p`` density about the peak of ``|u|``.

    The cumulative mass over node distances is a step function; the radius is
    read off its piecewise-linear interpolant so it is not quantized to ``h``.
    """
    w = np.abs(u) ** p
    total = w.sum()
    if total == 0:
        return 0.0
    peak = np.unravel_index(np.argmax(w), w.shape)
    x = grid.axis()
    d2 = sum((c - x[i]) ** 2 for c, i in zip(grid.coords(), peak))
    d2 = np.broadcast_to(d2, grid.shape).ravel()
    r, inv = np.unique(np.round(np.sqrt(d2) / grid.h, 9), return_inverse=True)
    cum = np.cumsum(np.bincount(inv.ravel(), weights=w.ravel())) / total
    return float(np.interp(0.5, cum, r) * grid.h)


class _Flow:
    def __init__(self, grid: GridSpec, mask: DomainMask, params: ProblemParams):
        self.grid, self.params = grid, params
        self.P = mask.inside.astype(float)
        self.p = params.p
        self.dv = grid.cell_volume
        self.axes = tuple(range(grid.n))
        sym_m = symbol(grid, params.m)
        if params.variant == "spectral":
            self.mult = sym_m - params.lam * symbol(grid, params.s) if params.lam else sym_m
            self.weight = None
        else:
            self.mult = sym_m
            self.weight = hardy_weight(grid, params.s).values if params.lam else None
        self.precond = 1.0 / (1.0 + sym_m)

    def energy(self, v, V=None):
        """Numerator of the quotient and the half spectrum of ``v``."""
        if V is None:
            V = np.fft.rfftn(v, axes=self.axes)
        J = form_half(V, self.grid, self.mult)
        if self.weight is not None:
            J -= self.params.lam * float(np.sum(self.weight * v * v) * self.dv)
        return J, V

    def lnorm(self, v):
        return float(np.sum(np.abs(v) ** self.p) * self.dv) ** (1.0 / self.p)

    def run(self, u0: np.ndarray, tol: float, maxiter: int, history: list | None = None):
        u = u0 * self.P
        nrm = self.lnorm(u)
        if nrm == 0:
            raise ValueError("seed vanishes on the domain")
        u = u / nrm
        J, U = self.energy(u)
        changes = []
        it = 0
        converged = False
        for it in range(1, maxiter + 1):
            Lu = np.fft.irfftn(U * self.mult, s=self.grid.shape, axes=self.axes)
            if self.weight is not None:
                Lu -= self.params.lam * self.weight * u
            g = 2.0 * (Lu - J * np.abs(u) ** (self.p - 2) * u) * self.P
            d = multiply(g, self.grid, self.precond) * self.P
            slope = float(np.sum(g * d) * self.dv)
            if slope <= 0:
                converged = True
                break
            t = 1.0
            while True:
                v = u - t * d
                Jv, V = self.energy(v)
                nv = self.lnorm(v)
                Rv = Jv / nv**2
                if Rv <= J - ARMIJO * t * slope:
                    break
                t *= 0.5
                if t < 1e-16:
                    break
            if t < 1e-16:
                # no descent left at machine precision
                converged = True
                break
            u, U = v / nv, V / nv
            J_new = Rv
            changes.append(abs(J - J_new) / abs(J_new))
            J = J_new
            if history is not None:
                history.append(J)
            if len(changes) >= 5 and max(changes[-5:]) < tol:
                converged = True
                break
        return u, J, it, converged


def default_seeds(grid: GridSpec, mask: DomainMask, m: float, eigenfield: Field | None = None,
                  count: int = 4) -> list:
    """Bubbles at the domain centre plus the eigenfield.

    The bubble scales are ``delta/4, delta/8, ...`` (``count`` of them) and a
    near-grid-scale one at ``eps = 4h``, since shrinking a bubble lowers the
    quotient so slowly that the flow alone rarely gets there.
    """
    delta = mask.inradius / 4
    floor = 4 * grid.h
    scales = [e for e in (delta / 4 / 2**j for j in range(count)) if e >= floor]
    if not scales or scales[-1] > 2 * floor:
        scales.append(floor)
    seeds = [(f"bubble eps={e:.6g}",
              Field(grid, bubble_values(grid, m, e, max(delta, 4 * e), mask.center)))
             for e in scales]
    if eigenfield is not None:
        seeds.append(("eigenfield", eigenfield))
    return seeds


def _check_lambda(params, lambda1):
    if lambda1 is not None and params.lam >= lambda1:
        raise ValueError(
            f"lambda={params.lam:g} >= Lambda_1={lambda1:g}: the numerator form is indefinite"
        )


def groundstate(grid: GridSpec, mask: DomainMask, params: ProblemParams,
                constants: PinnedConstants | None = None, seeds=None, tol: float = 1e-10,
                maxiter: int = 20000, lambda1: float | None = None,
                eigen: EigenResult | None = None) -> MinimizationResult:
    """Minimize the perturbed quotient over fields supported in ``mask``.

    ``seeds`` is a list of ``(label, Field)`` or plain fields; by default the
    bubble ladder plus the first eigenfield (computed when ``lam > 0``).
    """
    if grid.n != params.n or mask.grid != grid:
        raise ValueError("grid, mask and problem dimension disagree")
    if constants is not None and (constants.n != params.n or constants.m != params.m):
        raise ValueError("pinned constants belong to a different (n, m)")
    params.check_domain(mask)
    if params.lam > 0 and lambda1 is None:
        if eigen is None:
            eigen = poincare_lambda1(grid, mask, params.m, params.s, params.variant)
        lambda1 = eigen.lambda1
    _check_lambda(params, lambda1)
    if seeds is None:
        seeds = default_seeds(grid, mask, params.m, eigen.eigenfield if eigen else None)
    seeds = [s if isinstance(s, tuple) else (f"seed{i}", s) for i, s in enumerate(seeds)]

    flow = _Flow(grid, mask, params)
    best = None
    starts = []
    for label, seed in seeds:
        u, J, it, ok = flow.run(seed.values, tol, maxiter)
        starts.append({"seed": label, "value": J, "iterations": it, "converged": ok})
        log.debug("start %s: value=%.12g iterations=%d converged=%s", label, J, it, ok)
        cand = (not ok, J)
        if best is None or cand < best[0]:
            best = (cand, label, u, it, ok)
    (_, _), label, u, it, ok = best
    field = Field(grid, u)
    S = rayleigh(field, params, mask)
    r_eff = effective_radius(u, grid, params.p)
    conc = r_eff < CONCENTRATION_CELLS * grid.h
    scale = S ** (1.0 / (params.p - 2)) if S > 0 else float("nan")
    res = MinimizationResult(S, field, ok, conc, r_eff, it, params.lam, label, scale, starts)
    if not ok:
        raise ConvergenceError("no start converged", res)
    return res


def s_curve(grid: GridSpec, mask: DomainMask, params_base: ProblemParams, lambda_list,
            constants: PinnedConstants | None = None, tol: float = 1e-10, maxiter: int = 20000,
            eigen: EigenResult | None = None):
    """Ground states along ``lambda_list``, each warm-started from the previous minimizer.

    Returns a list of ``(lam, MinimizationResult or None, error message or None)``.
    """
    if eigen is None:
        eigen = poincare_lambda1(grid, mask, params_base.m, params_base.s, params_base.variant)
    out = []
    prev = None
    for lam in lambda_list:
        params = params_base.with_lambda(lam)
        seeds = default_seeds(grid, mask, params.m, eigen.eigenfield)
        if prev is not None:
            seeds.insert(0, ("warm start", prev))
        try:
            r = groundstate(grid, mask, params, constants, seeds, tol, maxiter,
                            lambda1=eigen.lambda1)
            out.append((float(lam), r, None))
            prev = r.field
        except (ConvergenceError, ValueError) as exc:
            out.append((float(lam), getattr(exc, "best", None), str(exc)))
    return out


@dataclass
class ThresholdResult:
    lambda_star: float
    bracket: tuple
    S_curve: list
    lambda1: float
    margin: float
    S_m_hat: float
    points: list = dc_field(default_factory=list)

    @property
    def fraction(self) -> float:
        return self.lambda_star / self.lambda1

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "lambda_star_over_lambda1": self.fraction,
            "bracket": list(self.bracket),
            "lambda1": self.lambda1,
            "margin": self.margin,
            "S_m_hat": self.S_m_hat,
            "S_curve": [list(p) for p in self.S_curve],
            "points": self.points,
        }


def lambda_star(grid: GridSpec, mask: DomainMask, params_base: ProblemParams,
                constants: PinnedConstants, tol_lambda: float = 0.01,
                margin: float = DEFAULT_MARGIN, tol: float = 1e-10, maxiter: int = 20000,
                eigen: EigenResult | None = None) -> ThresholdResult:
    """Bisect for the smallest lambda at which a non-concentrated dip below S_m appears.

    The predicate at ``lam`` is ``S < (1 - margin) S_m_hat`` and not
    concentrated.  If it already holds at ``lam = tol_lambda * Lambda_1`` the
    threshold is reported as 0.
    """
    if eigen is None:
        eigen = poincare_lambda1(grid, mask, params_base.m, params_base.s, params_base.variant)
    L1 = eigen.lambda1
    target = (1.0 - margin) * constants.S_m_hat
    evaluated = {}

    def evaluate(lam):
        below = [k for k in evaluated if k < lam]
        above = [k for k in evaluated if k > lam]
        seeds = default_seeds(grid, mask, params_base.m, eigen.eigenfield)
        if below:
            seeds.insert(0, ("warm start below", evaluated[max(below)].field))
        if above:
            seeds.insert(0, ("warm start above", evaluated[min(above)].field))
        r = groundstate(grid, mask, params_base.with_lambda(lam), constants, seeds, tol,
                        maxiter, lambda1=L1)
        evaluated[lam] = r
        ok = r.S_value < target and not r.concentrated
        log.info("lambda/Lambda1=%.5f S=%.8g concentrated=%s predicate=%s",
                 lam / L1, r.S_value, r.concentrated, ok)
        return ok

    def curve():
        return [(lam, evaluated[lam].S_value) for lam in sorted(evaluated)]

    def points():
        return [{"lambda": lam, "S_value": evaluated[lam].S_value,
                 "concentrated": evaluated[lam].concentrated, "r_eff": evaluated[lam].r_eff}
                for lam in sorted(evaluated)]

    lo = tol_lambda * L1
    hi = L1 * (1.0 - 1e-3)
    if evaluate(lo):
        return ThresholdResult(0.0, (0.0, lo), curve(), L1, margin, constants.S_m_hat, points())
    if not evaluate(hi):
        raise LambdaStarError(
            f"no dip detected: predicate false at lambda = {hi:g} (S={evaluated[hi].S_value:g}, "
            f"target {target:g})", curve())
    while hi - lo > tol_lambda * L1:
        mid = 0.5 * (lo + hi)
        if evaluate(mid):
            hi = mid
        else:
            lo = mid
    return ThresholdResult(0.5 * (lo + hi), (lo, hi), curve(), L1, margin, constants.S_m_hat,
                           points())

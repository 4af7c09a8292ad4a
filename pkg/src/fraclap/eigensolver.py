"""Lowest generalized eigenpair of the order-m form on a masked domain.

Preconditioned steepest descent: the residual ``A u - q B u`` is smoothed by
``(1 + |k|^(2m))^(-1)``, projected onto the mask, and the next iterate is the
Rayleigh-Ritz minimizer of the quotient on ``span{u, d}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg

from .geometry import DomainMask, hardy_weight
from .spectral import Field, GridSpec, multiply, symbol

VARIANTS = ("spectral", "hardy")


class ConvergenceError(RuntimeError):
    """Iteration cap reached; ``best`` holds the last iterate's result."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass
class EigenResult:
    lambda1: float
    eigenfield: Field = dc_field(repr=False)
    residual: float
    iterations: int
    m: float = 0.0
    s: float = 0.0
    variant: str = "spectral"
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "residual": self.residual,
            "iterations": self.iterations,
            "m": self.m,
            "s": self.s,
            "variant": self.variant,
            "converged": self.converged,
            "grid": self.eigenfield.grid.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class _Pencil:
    """Masked operators ``A = P (-Δ)^m P`` and ``B`` (order-s form or weight)."""

    def __init__(self, grid: GridSpec, mask: DomainMask, m: float, s: float, variant: str):
        self.grid = grid
        self.P = mask.inside.astype(float)
        self.sym_m = symbol(grid, m)
        self.precond = 1.0 / (1.0 + self.sym_m)
        self.variant = variant
        if variant == "hardy":
            self.weight = hardy_weight(grid, s).values
        else:
            self.sym_s = symbol(grid, s)
        self.axes = tuple(range(grid.n))
        self.dv = grid.cell_volume

    def apply(self, v):
        V = np.fft.rfftn(v, axes=self.axes)
        Av = np.fft.irfftn(V * self.sym_m, s=self.grid.shape, axes=self.axes) * self.P
        if self.variant == "hardy":
            Bv = self.weight * v
        else:
            Bv = np.fft.irfftn(V * self.sym_s, s=self.grid.shape, axes=self.axes) * self.P
        return Av, Bv

    def smooth(self, r):
        return multiply(r * self.P, self.grid, self.precond) * self.P

    def ip(self, a, b):
        return float(np.sum(a * b) * self.dv)


def lowest_eigenpair(grid: GridSpec, mask: DomainMask, m: float, s: float, variant: str = "spectral",
                     tol: float = 1e-8, maxiter: int = 20000, initial: Field | None = None) -> EigenResult:
    """Minimize ``|u|_m^2 / D(u)`` over fields supported in the mask.

    ``D`` is the order-``s`` seminorm (spectral) or ``sum |x|^(-2s) u^2 h^n``
    (hardy).  Unlike :func:`poincare_lambda1` this allows ``s == m`` for the
    hardy variant, which is the Hardy-constant problem.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if mask.grid != grid:
        raise ValueError("mask lives on a different grid")
    if variant == "hardy":
        mask.require_origin()
    op = _Pencil(grid, mask, m, s, variant)

    if initial is None:
        u = op.smooth(op.P)
    else:
        u = initial.values * op.P
    Au, Bu = op.apply(u)
    c = np.sqrt(op.ip(u, Bu))
    u, Au, Bu = u / c, Au / c, Bu / c
    q = op.ip(u, Au)
    changes = []
    res = np.inf
    it = 0
    for it in range(1, maxiter + 1):
        r = Au - q * Bu
        res = np.sqrt(op.ip(r, r) / op.ip(u, u))
        if len(changes) >= 5 and max(changes[-5:]) < tol and res <= tol * q:
            break
        d = op.smooth(r)
        Ad, Bd = op.apply(d)
        Am = np.array([[op.ip(u, Au), op.ip(u, Ad)], [op.ip(d, Au), op.ip(d, Ad)]])
        Bm = np.array([[op.ip(u, Bu), op.ip(u, Bd)], [op.ip(d, Bu), op.ip(d, Bd)]])
        try:
            _, V = scipy.linalg.eigh(0.5 * (Am + Am.T), 0.5 * (Bm + Bm.T))
        except scipy.linalg.LinAlgError:
            # d numerically parallel to u: nothing left to gain
            changes.append(0.0)
            continue
        a, b = V[:, 0]
        u = a * u + b * d
        if it % 50 == 0:
            Au, Bu = op.apply(u)
        else:
            Au, Bu = a * Au + b * Ad, a * Bu + b * Bd
        c = np.sqrt(op.ip(u, Bu))
        u, Au, Bu = u / c, Au / c, Bu / c
        q_new = op.ip(u, Au)
        changes.append(abs(q_new - q) / abs(q_new))
        q = q_new
    else:
        it = maxiter

    # fix the sign so runs are reproducible
    if u.flat[np.argmax(np.abs(u))] < 0:
        u = -u
    result = EigenResult(float(q), Field(grid, u), float(res), it, m, s, variant,
                         converged=res <= tol * q and it < maxiter)
    if not result.converged:
        raise ConvergenceError(
            f"eigensolver did not converge in {maxiter} iterations (residual {res:.3e})", result
        )
    return result


def poincare_lambda1(grid: GridSpec, mask: DomainMask, m: float, s: float, variant: str = "spectral",
                     tol: float = 1e-8, maxiter: int = 20000, initial: Field | None = None) -> EigenResult:
    """First eigenvalue of ``(-Δ)^m`` relative to ``(-Δ)^s`` or to ``|x|^(-2s)``."""
    n = grid.n
    if not 0 <= s < m < n / 2:
        raise ValueError(f"requires 0 <= s < m < n/2, got n={n}, m={m}, s={s}")
    return lowest_eigenpair(grid, mask, m, s, variant, tol, maxiter, initial)


def richardson_first_order(coarse: float, fine: float) -> float:
    """Two-level extrapolation for an O(h) error with the spacing halved."""
    return 2.0 * fine - coarse

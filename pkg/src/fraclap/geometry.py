"""Domain masks, support projection and the singular weight ``|x|^(-2s)``."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from itertools import product

import numpy as np

from .spectral import Field, GridError, GridSpec

_SLACK = 1e-12


class DomainError(ValueError):
    pass


@dataclass
class DomainMask:
    grid: GridSpec
    inside: np.ndarray = dc_field(repr=False)
    margin: float
    shape: str = "custom"
    center: tuple = ()
    inradius: float = 0.0
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.inside = np.asarray(self.inside, dtype=bool).reshape(self.grid.shape)
        if not self.inside.any():
            raise DomainError("domain mask has no interior nodes")
        if self.margin < self.grid.L / 2 - _SLACK * self.grid.L:
            raise DomainError(
                f"domain must keep a margin >= L/2 = {self.grid.L / 2:g} to the box "
                f"boundary, got {self.margin:g}"
            )
        if not self.center:
            self.center = (0.0,) * self.grid.n

    @property
    def contains_origin(self) -> bool:
        return bool(self.inside[self.grid.origin_index()])

    @property
    def count(self) -> int:
        return int(self.inside.sum())

    def require_origin(self):
        if not self.contains_origin:
            raise DomainError("origin not in Ω: the Hardy variant needs 0 inside the domain")

    def to_dict(self) -> dict:
        return {"shape": self.shape, **self.params, "nodes": self.count}


def _center(grid, center):
    if center is None:
        return np.zeros(grid.n)
    c = np.asarray(center, dtype=float).reshape(-1)
    if c.size == 1 and grid.n > 1:
        c = np.full(grid.n, float(c[0]))
    if c.size != grid.n:
        raise DomainError(f"center has {c.size} coordinates, grid dimension is {grid.n}")
    return c


def _dist2(grid, c):
    d2 = np.zeros(grid.shape)
    for x, ci in zip(grid.coords(), c):
        d2 = d2 + (x - ci) ** 2
    return d2


def _finish(mask, variant):
    if variant == "hardy":
        mask.require_origin()
    return mask


def make_ball_mask(grid: GridSpec, radius: float, center=None, variant=None) -> DomainMask:
    if radius <= 0:
        raise DomainError("ball radius must be positive")
    c = _center(grid, center)
    inside = _dist2(grid, c) <= radius**2 * (1 + _SLACK)
    margin = grid.L - (np.max(np.abs(c)) + radius)
    mask = DomainMask(grid, inside, margin, "ball", tuple(c), radius,
                      {"radius": radius, "center": list(c)})
    return _finish(mask, variant)


def make_cube_mask(grid: GridSpec, half_width: float, center=None, variant=None) -> DomainMask:
    if half_width <= 0:
        raise DomainError("cube half-width must be positive")
    c = _center(grid, center)
    inside = np.ones(grid.shape, dtype=bool)
    for x, ci in zip(grid.coords(), c):
        inside = inside & (np.abs(x - ci) <= half_width * (1 + _SLACK))
    margin = grid.L - (np.max(np.abs(c)) + half_width)
    mask = DomainMask(grid, inside, margin, "cube", tuple(c), half_width,
                      {"half_width": half_width, "center": list(c)})
    return _finish(mask, variant)


def make_annulus_mask(grid: GridSpec, inner: float, outer: float, center=None,
                      variant=None) -> DomainMask:
    if not 0 < inner < outer:
        raise DomainError("annulus needs 0 < inner < outer")
    c = _center(grid, center)
    d2 = _dist2(grid, c)
    inside = (d2 >= inner**2 * (1 - _SLACK)) & (d2 <= outer**2 * (1 + _SLACK))
    margin = grid.L - (np.max(np.abs(c)) + outer)
    deep = c.copy()
    deep[0] += 0.5 * (inner + outer)
    mask = DomainMask(grid, inside, margin, "annulus", tuple(deep), 0.5 * (outer - inner),
                      {"inner": inner, "outer": outer, "center": list(c)})
    return _finish(mask, variant)


def make_mask(grid: GridSpec, spec: dict, variant=None) -> DomainMask:
    """Build a mask from a config dict such as ``{"shape": "ball", "radius": 1}``."""
    kind = spec.get("shape", "ball")
    center = spec.get("center")
    if kind == "ball":
        return make_ball_mask(grid, spec["radius"], center, variant)
    if kind == "cube":
        return make_cube_mask(grid, spec["half_width"], center, variant)
    if kind == "annulus":
        return make_annulus_mask(grid, spec["inner"], spec["outer"], center, variant)
    raise DomainError(f"unknown domain shape {kind!r}")


def project_support(field: Field, mask: DomainMask) -> Field:
    if field.grid != mask.grid:
        raise GridError("field and mask live on different grids")
    return Field(field.grid, np.where(mask.inside, field.values, 0.0))


@dataclass
class HardyWeight:
    grid: GridSpec
    s: float
    values: np.ndarray = dc_field(repr=False)


@lru_cache(maxsize=16)
def origin_cell_average(n: int, h: float, s: float, points: int = 16) -> float:
    """Mean of ``|x|^(-2s)`` over the cell ``[-h/2, h/2]^n``.

    The cube is split into the n pyramids on which one coordinate dominates;
    there ``|x|^(-2s) = t^(-2s) (1+|y|^2)^(-s)`` with ``t`` integrated exactly
    and the smooth ``y`` factor by tensor Gauss-Legendre on ``[0, 1]^(n-1)``.
    """
    if s == 0:
        return 1.0
    a = h / 2
    radial = a ** (n - 2 * s) / (n - 2 * s)
    if n == 1:
        angular = 1.0
    else:
        g, w = np.polynomial.legendre.leggauss(points)
        y = 0.5 * (g + 1)
        w = 0.5 * w
        angular = 0.0
        for idx in product(range(points), repeat=n - 1):
            yy = sum(y[i] ** 2 for i in idx)
            angular += np.prod([w[i] for i in idx]) * (1 + yy) ** (-s)
    # 2^n orthants, n pyramids each, divided by the cell volume (2a)^n
    return n * radial * angular / a**n


def hardy_weight(grid: GridSpec, s: float) -> HardyWeight:
    """``|x|^(-2s)`` on the nodes, with the origin node carrying its cell average."""
    if s < 0:
        raise ValueError("weight order s must be >= 0")
    if 2 * s >= grid.n:
        raise ValueError(f"|x|^(-2s) is not locally integrable for 2s >= n (s={s}, n={grid.n})")
    if s == 0:
        return HardyWeight(grid, 0.0, np.ones(grid.shape))
    r2 = grid.radius2()
    with np.errstate(divide="ignore"):
        w = np.where(r2 > 0, r2 ** (-s), 0.0)
    w[grid.origin_index()] = origin_cell_average(grid.n, grid.h, float(s))
    return HardyWeight(grid, float(s), w)


def weighted_l2_sq(field: Field, weight: HardyWeight) -> float:
    return float(np.sum(weight.values * field.values**2) * field.grid.cell_volume)

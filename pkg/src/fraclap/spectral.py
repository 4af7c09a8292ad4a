"""Uniform periodic-box grids and Fourier-multiplier operators.

Grid functions live on ``[-L, L)^n`` sampled at ``N`` points per axis.  The
discrete transform is normalized so that Parseval reads

    sum_x u(x)**2 * h**n == sum_k |u_hat(k)|**2,

which lets every quadratic form be evaluated either in physical or in
frequency space with the same weight conventions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

MAX_NODES = int(os.environ.get("FRACLAP_MAX_NODES", 2**24))


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n: int
    N: int
    L: float

    def __post_init__(self):
        if self.n not in (1, 2, 3, 4):
            raise GridError(f"dimension must be 1..4, got n={self.n}")
        if self.N < 8 or self.N & (self.N - 1):
            raise GridError(f"N must be a power of two >= 8, got N={self.N}")
        if not self.L > 0:
            raise GridError(f"box half-width must be positive, got L={self.L}")
        if self.N**self.n > MAX_NODES:
            raise GridError(
                f"grid has {self.N**self.n} nodes, above the memory budget of {MAX_NODES}"
            )
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N**self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis, ``-L + h*i``."""
        return -self.L + self.h * np.arange(self.N)

    def wavenumbers(self) -> np.ndarray:
        """Angular frequencies ``(pi/L) * z`` in numpy FFT order."""
        return np.fft.fftfreq(self.N, d=self.h) * 2.0 * np.pi

    def coords(self) -> list[np.ndarray]:
        """Open (broadcastable) coordinate arrays, one per axis."""
        x = self.axis()
        out = []
        for d in range(self.n):
            shp = [1] * self.n
            shp[d] = self.N
            out.append(x.reshape(shp))
        return out

    def radius2(self) -> np.ndarray:
        return _radius2(self.n, self.N, self.L)

    def origin_index(self) -> tuple[int, ...]:
        return (self.N // 2,) * self.n

    def to_dict(self) -> dict:
        return {"n": self.n, "N": self.N, "L": self.L, "h": self.h}


def make_grid(n: int, N: int, L: float) -> GridSpec:
    return GridSpec(int(n), int(N), float(L))


@lru_cache(maxsize=8)
def _radius2(n, N, L):
    g = GridSpec(n, N, L)
    r2 = np.zeros(g.shape)
    for c in g.coords():
        r2 = r2 + c**2
    r2.setflags(write=False)
    return r2


@lru_cache(maxsize=8)
def _k2_half(n, N, L):
    """|k|^2 on the rfftn half spectrum."""
    g = GridSpec(n, N, L)
    k = g.wavenumbers()
    kr = np.fft.rfftfreq(N, d=g.h) * 2.0 * np.pi
    k2 = np.zeros((N,) * (n - 1) + (kr.size,))
    for d in range(n):
        shp = [1] * n
        kk = kr if d == n - 1 else k
        shp[d] = kk.size
        k2 = k2 + kk.reshape(shp) ** 2
    k2.setflags(write=False)
    return k2


@lru_cache(maxsize=8)
def _half_weights(n, N, L):
    """Multiplicity of each rfftn mode in the full spectrum (1 or 2)."""
    w = np.full(N // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    shp = [1] * (n - 1) + [N // 2 + 1]
    out = np.broadcast_to(w.reshape(shp), (N,) * (n - 1) + (N // 2 + 1,)).copy()
    out.setflags(write=False)
    return out


@lru_cache(maxsize=32)
def _symbol_cached(n, N, L, a):
    k2 = _k2_half(n, N, L)
    if a == 0:
        sym = np.ones_like(k2)
    else:
        sym = k2**a
        sym.flat[0] = 0.0
    sym.setflags(write=False)
    return sym


def symbol(grid: GridSpec, a: float) -> np.ndarray:
    """Multiplier ``|k|^(2a)`` on the half spectrum; the k=0 entry is 0 for a>0."""
    if a < 0:
        raise ValueError(f"fractional order must be >= 0, got {a}")
    return _symbol_cached(grid.n, grid.N, grid.L, float(a))


@dataclass
class Field:
    """Real grid function on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise GridError(f"field has {v.size} values, grid expects {self.grid.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        self.values = v

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: GridSpec, f) -> "Field":
        """Sample ``f(*coords)`` where coords are broadcastable axis arrays."""
        return cls(grid, np.broadcast_to(f(*grid.coords()), grid.shape))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def scaled(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)


@dataclass
class SpectralField:
    grid: GridSpec
    coefficients: np.ndarray = dc_field(repr=False)

    def wavenumbers(self) -> list[np.ndarray]:
        k = self.grid.wavenumbers()
        out = []
        for d in range(self.grid.n):
            shp = [1] * self.grid.n
            shp[d] = self.grid.N
            out.append(k.reshape(shp))
        return out


def _norm_factor(grid: GridSpec) -> float:
    return np.sqrt(grid.cell_volume / grid.size)


def transform(field: Field) -> SpectralField:
    g = field.grid
    return SpectralField(g, np.fft.fftn(field.values) * _norm_factor(g))


def inverse_transform(sf: SpectralField) -> Field:
    g = sf.grid
    vals = np.fft.ifftn(sf.coefficients / _norm_factor(g))
    return Field(g, vals.real)


def multiply(values: np.ndarray, grid: GridSpec, mult: np.ndarray) -> np.ndarray:
    """Apply a half-spectrum multiplier to a real array."""
    axes = tuple(range(grid.n))
    return np.fft.irfftn(np.fft.rfftn(values, axes=axes) * mult, s=grid.shape, axes=axes)


def fraclap_values(values: np.ndarray, grid: GridSpec, a: float) -> np.ndarray:
    if a == 0:
        return np.array(values, dtype=float, copy=True)
    return multiply(values, grid, symbol(grid, a))


def apply_fraclap(field: Field, a: float) -> Field:
    """``(-Delta)^a`` as the Fourier multiplier ``|k|^(2a)``; order 0 is the identity."""
    if a < 0:
        raise ValueError(f"fractional order must be >= 0, got {a}")
    return Field(field.grid, fraclap_values(field.values, field.grid, a))


def form_values(values: np.ndarray, grid: GridSpec, mult: np.ndarray) -> float:
    """``sum_k mult(k) |u_hat(k)|^2`` with the Parseval normalization."""
    return form_half(np.fft.rfftn(values, axes=tuple(range(grid.n))), grid, mult)


def form_half(U: np.ndarray, grid: GridSpec, mult: np.ndarray) -> float:
    """Same quadratic form from an unnormalized rfftn half spectrum ``U``."""
    w = _half_weights(grid.n, grid.N, grid.L)
    return float(np.sum(w * mult * (U.real**2 + U.imag**2)) * grid.cell_volume / grid.size)


def seminorm_sq(field: Field, a: float) -> float:
    """Squared order-``a`` seminorm ``sum_k |k|^(2a) |u_hat(k)|^2``."""
    return form_values(field.values, field.grid, symbol(field.grid, a))


def lp_norm(field: Field, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(np.sum(np.abs(field.values) ** p) * field.grid.cell_volume) ** (1.0 / p)


def dilate(field: Field, R: int) -> Field:
    """Return ``x -> u(R x)`` sampled on the same grid (zero where ``R x`` leaves the box)."""
    g = field.grid
    if int(R) != R or R < 2:
        raise ValueError(f"dilation factor must be an integer >= 2, got {R}")
    R = int(R)
    if g.N % R:
        raise ValueError(f"dilation factor {R} does not divide N={g.N}")
    src = R * np.arange(g.N) - (R - 1) * g.N // 2
    ok = (src >= 0) & (src < g.N)
    out = field.values
    for d in range(g.n):
        taken = np.take(out, np.clip(src, 0, g.N - 1), axis=d)
        shp = [1] * g.n
        shp[d] = g.N
        out = np.where(ok.reshape(shp), taken, 0.0)
    return Field(g, out)

"""Uniform rectangular grids on intervals and rectangles, grid fields, norms
and finite-difference calculus with homogeneous Dirichlet boundary values.

Only interior nodes are stored. A grid with ``n`` interior points per axis on
``(0, length)`` has spacing ``h = length / (n + 1)`` and nodes ``x_i = i h``
for ``i = 1..n``; the boundary nodes are implicit and equal to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

__all__ = [
    "Grid",
    "ScalarField",
    "make_grid",
    "l2_norm",
    "linf_norm",
    "laplacian",
    "h10_norm",
    "inner",
    "boundary_distance",
    "cutoff",
    "mollify",
    "sine_mode",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid of interior nodes on ``(0, L_1) x ... x (0, L_d)``."""

    dim: int
    n: int
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"need at least 3 interior points per axis, got n={self.n}")
        if len(self.lengths) != self.dim:
            raise ValueError(f"expected {self.dim} axis lengths, got {self.lengths}")
        if any(not math.isfinite(ell) or ell <= 0 for ell in self.lengths):
            raise ValueError(f"axis lengths must be positive, got {self.lengths}")

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(ell / (self.n + 1) for ell in self.lengths)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def coords(self, axis: int = 0) -> np.ndarray:
        """Interior node coordinates along one axis."""
        return np.arange(1, self.n + 1) * self.h[axis]

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Node coordinates broadcast to the field shape (``ij`` indexing)."""
        axes = [self.coords(a) for a in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def header(self) -> str:
        lengths = ",".join(repr(float(ell)) for ell in self.lengths)
        return f"# grid dim={self.dim} n={self.n} length={lengths}"


def make_grid(dim: int, n: int, lengths: float | Sequence[float] = 1.0) -> Grid:
    """Build a uniform grid; a scalar length is used for every axis.

    >>> make_grid(1, 3, 1.0).h
    (0.25,)
    """
    if np.isscalar(lengths):
        lengths = (float(lengths),) * int(dim)
    return Grid(int(dim), int(n), tuple(float(ell) for ell in lengths))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values at the interior nodes of a grid.

    Values are kept as a read-only array of shape ``grid.shape``. Basic
    arithmetic with scalars and fields on the same grid is supported.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.size != self.grid.size:
            raise ValueError(
                f"field has {vals.size} values, grid has {self.grid.size} interior nodes"
            )
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> "ScalarField":
        """Sample ``func(x)`` (1D) or ``func(x, y)`` (2D) at the interior nodes."""
        vals = np.broadcast_to(func(*grid.mesh()), grid.shape)
        return cls(grid, vals)

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._other(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def positive_part(self) -> "ScalarField":
        return ScalarField(self.grid, np.maximum(self.values, 0.0))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def __repr__(self):
        return f"ScalarField(grid={self.grid}, min={self.min():.6g}, max={self.max():.6g})"


def _check_same_grid(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def l2_norm(field: ScalarField) -> float:
    """Discrete L2 norm, ``sqrt(h^d * sum(u^2))``."""
    return math.sqrt(field.grid.cell_volume * float(np.sum(field.values**2)))


def linf_norm(field: ScalarField) -> float:
    return float(np.max(np.abs(field.values)))


def inner(field_a: ScalarField, field_b: ScalarField) -> float:
    """Rectangle-rule L2 inner product."""
    _check_same_grid(field_a, field_b)
    return field_a.grid.cell_volume * float(np.sum(field_a.values * field_b.values))


def _pad_axis(u: np.ndarray, axis: int, boundary: str) -> np.ndarray:
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    out = np.pad(u, pad)
    if boundary == "extrapolate":
        # quadratic ghost values: the edge second difference repeats its neighbour
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[axis], hi[axis] = 0, -1

        def take(i):
            idx = [slice(None)] * u.ndim
            idx[axis] = i
            return u[tuple(idx)]

        out[tuple(lo)] = 3 * take(0) - 3 * take(1) + take(2)
        out[tuple(hi)] = 3 * take(-1) - 3 * take(-2) + take(-3)
    return out


def _laplacian_values(u: np.ndarray, h: Sequence[float], boundary: str = "dirichlet") -> np.ndarray:
    out = np.zeros_like(u)
    for axis, ha in enumerate(h):
        p = _pad_axis(u, axis, boundary)
        n = u.shape[axis]
        left = np.take(p, np.arange(0, n), axis=axis)
        right = np.take(p, np.arange(2, n + 2), axis=axis)
        out += (left - 2.0 * u + right) / ha**2
    return out


def laplacian(field: ScalarField, boundary: str = "dirichlet") -> ScalarField:
    """Second-order central difference Laplacian.

    Parameters
    ----------
    field : ScalarField
    boundary : {"dirichlet", "extrapolate"}
        ``"dirichlet"`` reads the missing neighbours as zero, which is the
        operator used by the time stepper. ``"extrapolate"`` fills them by
        quadratic extrapolation and is meant for coefficient fields (controls)
        that need not vanish on the boundary.
    """
    if boundary not in ("dirichlet", "extrapolate"):
        raise ValueError(f"unknown boundary treatment {boundary!r}")
    return ScalarField(field.grid, _laplacian_values(field.values, field.grid.h, boundary))


def gradient_norm(field: ScalarField) -> float:
    """L2 norm of the forward-difference gradient, boundary faces included."""
    total = 0.0
    for axis, ha in enumerate(field.grid.h):
        d = np.diff(_pad_axis(field.values, axis, "dirichlet"), axis=axis) / ha
        total += float(np.sum(d**2))
    return math.sqrt(field.grid.cell_volume * total)


def h10_norm(field: ScalarField) -> float:
    """``sqrt(||u||^2 + ||grad u||^2)`` with a forward-difference gradient."""
    return math.hypot(l2_norm(field), gradient_norm(field))


def boundary_distance(grid: Grid) -> ScalarField:
    """Distance from each interior node to the boundary of the box."""
    dist = np.full(grid.shape, np.inf)
    for axis, x in enumerate(grid.mesh()):
        dist = np.minimum(dist, np.minimum(x, grid.lengths[axis] - x))
    return ScalarField(grid, dist)


def _smoothstep5(s: np.ndarray) -> np.ndarray:
    return s**3 * (6 * s**2 - 15 * s + 10)


def cutoff(grid: Grid, eta: float) -> ScalarField:
    """Cutoff equal to 1 where ``dist >= eta`` and 0 where ``dist <= eta/2``.

    Between the two levels the quintic smoothstep of
    ``s = (dist - eta/2) / (eta/2)`` is used.
    """
    half_min = 0.5 * min(grid.lengths)
    if not (0 < eta < half_min):
        raise ValueError(f"eta must lie in (0, {half_min}), got {eta}")
    d = boundary_distance(grid).values
    s = np.clip((d - 0.5 * eta) / (0.5 * eta), 0.0, 1.0)
    return ScalarField(grid, _smoothstep5(s))


def mollify(field: ScalarField, sigma: float) -> ScalarField:
    """Gaussian smoothing of width ``sigma`` (domain units).

    The kernel is truncated at ``4 sigma`` and renormalised to unit mass;
    values beyond the boundary are taken as zero.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return field
    widths = [sigma / ha for ha in field.grid.h]
    out = ndimage.gaussian_filter(
        np.asarray(field.values), sigma=widths, mode="constant", cval=0.0, truncate=4.0
    )
    return ScalarField(field.grid, out)


def sine_mode(grid: Grid, k: int | Sequence[int] = 1) -> ScalarField:
    """L2-normalised Dirichlet eigenmode ``prod_a sqrt(2/L_a) sin(k_a pi x_a / L_a)``.

    Under the rectangle rule these modes are exactly orthonormal for
    ``1 <= k_a <= n``.
    """
    ks = (k,) * grid.dim if np.isscalar(k) else tuple(k)
    if len(ks) != grid.dim or any(kk < 1 for kk in ks):
        raise ValueError(f"invalid mode index {k}")
    vals = np.ones(grid.shape)
    for axis, x in enumerate(grid.mesh()):
        ell = grid.lengths[axis]
        vals = vals * math.sqrt(2.0 / ell) * np.sin(ks[axis] * np.pi * x / ell)
    return ScalarField(grid, vals)


def write_field_csv(path: str | Path, field: ScalarField) -> None:
    """Header line with the grid, then one value per line in row-major order."""
    lines = [field.grid.header()]
    lines.extend(format(v, ".17g") for v in field.values.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path: str | Path, grid: Grid | None = None) -> ScalarField:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# grid"):
        raise ValueError(f"{path}: missing '# grid' header")
    meta = dict(tok.split("=", 1) for tok in text[0][len("# grid"):].split())
    try:
        file_grid = make_grid(
            int(meta["dim"]), int(meta["n"]), [float(s) for s in meta["length"].split(",")]
        )
    except KeyError as exc:
        raise ValueError(f"{path}: header lacks {exc}") from None
    if grid is not None and grid != file_grid:
        raise ValueError(f"{path}: field grid {file_grid} does not match {grid}")
    values = np.array([float(s) for s in text[1:] if s.strip()])
    return ScalarField(file_grid, values)

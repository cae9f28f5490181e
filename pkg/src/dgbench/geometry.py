"""Masked Cartesian grids over balls, scalar fields, averages and level sets.

Cells are indexed by integer coordinates ``i`` with centers ``center + h*i``;
a cell belongs to the ball when its center lies strictly inside.  Every ball
that lives on a domain (``B_r``, ``B_{r/2}``, off-center balls) is evaluated
on the parent grid, so restrictions never interpolate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np
from scipy import ndimage

ZERO_TOL = 1e-9

__all__ = [
    "BallDomain",
    "ScalarField",
    "LevelSet",
    "ball_measure",
    "sphere_measure",
    "l2_average",
    "levelset_measure",
    "truncate_shift",
    "rescale_truncate",
    "dump_field",
    "load_field",
]


def ball_measure(n: int, r: float = 1.0) -> float:
    """Lebesgue measure of the radius-``r`` ball in dimension 2 or 3."""
    if n == 2:
        return math.pi * r**2
    if n == 3:
        return 4.0 * math.pi / 3.0 * r**3
    raise ValueError(f"unsupported dimension {n}")


def sphere_measure(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1}."""
    if n == 2:
        return 2.0 * math.pi
    if n == 3:
        return 4.0 * math.pi
    raise ValueError(f"unsupported dimension {n}")


@dataclass(frozen=True)
class BallDomain:
    n: int
    radius: float
    h: float
    center: tuple = None

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"unsupported dimension {self.n}")
        if self.radius <= 0 or self.h <= 0:
            raise ValueError("radius and h must be positive")
        if self.h > self.radius / 8 * (1 + 1e-12):
            raise ValueError(f"h={self.h} too coarse for radius {self.radius} (need h <= r/8)")
        c = (0.0,) * self.n if self.center is None else tuple(float(x) for x in self.center)
        if len(c) != self.n:
            raise ValueError("center has wrong length")
        object.__setattr__(self, "center", c)

    # grid layout -----------------------------------------------------------
    @property
    def half_width(self) -> int:
        """Index half-width of the box; leaves room for the boundary layer."""
        return int(math.ceil(self.radius / self.h - 1e-9)) + 1

    @property
    def shape(self) -> tuple:
        return (2 * self.half_width + 1,) * self.n

    @property
    def offset(self) -> int:
        return self.half_width

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    def coords(self) -> np.ndarray:
        """Cell-center coordinates, shape ``(n, *shape)``."""
        idx = np.arange(-self.half_width, self.half_width + 1)
        axes = [self.center[d] + self.h * idx for d in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def _dist2(self, center=None) -> np.ndarray:
        x = self.coords()
        c = self.center if center is None else center
        return sum((x[d] - c[d]) ** 2 for d in range(self.n))

    def ball_mask(self, radius: float | None = None, center=None) -> np.ndarray:
        """Cells of this grid whose centers lie in the open ball."""
        r = self.radius if radius is None else radius
        return self._dist2(center) < r * r

    @property
    def mask(self) -> np.ndarray:
        m = self.__dict__.get("_mask")
        if m is None:
            m = self.ball_mask()
            m.setflags(write=False)
            self.__dict__["_mask"] = m
        return m

    @property
    def layer(self) -> np.ndarray:
        """One-cell boundary layer: cells outside the mask touching it (3^n stencil)."""
        lay = self.__dict__.get("_layer")
        if lay is None:
            grown = ndimage.binary_dilation(self.mask, structure=np.ones((3,) * self.n, bool))
            lay = grown & ~self.mask
            lay.setflags(write=False)
            self.__dict__["_layer"] = lay
        return lay

    @property
    def support(self) -> np.ndarray:
        return self.mask | self.layer

    @property
    def mask_volume(self) -> float:
        return int(self.mask.sum()) * self.cell_volume

    def sub(self, radius: float, center=None) -> "BallDomain":
        """A ball sharing this grid's spacing (and, for equal centers, its cells)."""
        return BallDomain(self.n, radius, self.h, self.center if center is None else center)

    def mask_on(self, other: "BallDomain") -> np.ndarray:
        """Mask of ``self`` evaluated on the grid of ``other``."""
        if not math.isclose(self.h, other.h, rel_tol=1e-12):
            raise ValueError("domains live on different grids")
        return other.ball_mask(self.radius, self.center)

    def cell_indices(self, mask: np.ndarray | None = None) -> np.ndarray:
        """Integer cell coordinates of ``mask`` cells in lexicographic order."""
        m = self.mask if mask is None else mask
        return np.argwhere(m) - self.offset

    def element_centers(self) -> np.ndarray:
        """Centers of the multilinear elements spanned by 2^n neighbouring cells."""
        idx = np.arange(-self.half_width, self.half_width) + 0.5
        axes = [self.center[d] + self.h * idx for d in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def element_ball_mask(self, radius: float | None = None, center=None) -> np.ndarray:
        r = self.radius if radius is None else radius
        c = self.center if center is None else center
        x = self.element_centers()
        return sum((x[d] - c[d]) ** 2 for d in range(self.n)) < r * r

    def describe(self) -> dict:
        return {
            "n": self.n,
            "dims": list(self.shape),
            "h": self.h,
            "center": list(self.center),
            "radius": self.radius,
        }


@dataclass(frozen=True)
class ScalarField:
    """Cell values on a ball; the dense array also carries boundary-layer values."""

    domain: BallDomain
    data: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.shape != self.domain.shape:
            raise ValueError(f"data shape {d.shape} != domain shape {self.domain.shape}")
        d[~self.domain.support] = 0.0
        if not np.all(np.isfinite(d)):
            raise ValueError("field values must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @classmethod
    def from_function(cls, domain: BallDomain, f) -> "ScalarField":
        x = domain.coords()
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(np.asarray(f(x), dtype=float), domain.shape)
        return cls(domain, np.where(domain.support, vals, 0.0))

    @classmethod
    def from_values(cls, domain: BallDomain, values, boundary=None) -> "ScalarField":
        data = np.zeros(domain.shape)
        values = np.asarray(values, dtype=float)
        if values.shape != (int(domain.mask.sum()),):
            raise ValueError("value count must equal mask size")
        data[domain.mask] = values
        if boundary is not None:
            data[domain.layer] = boundary
        return cls(domain, data)

    @classmethod
    def constant(cls, domain: BallDomain, c: float) -> "ScalarField":
        return cls(domain, np.full(domain.shape, float(c)))

    @property
    def values(self) -> np.ndarray:
        return self.data[self.domain.mask]

    def map(self, fn) -> "ScalarField":
        return ScalarField(self.domain, fn(self.data))

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.domain, self.data * c)

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.domain, -self.data)

    def positive_part(self) -> "ScalarField":
        return ScalarField(self.domain, np.maximum(self.data, 0.0))

    def negative_part(self) -> "ScalarField":
        return ScalarField(self.domain, np.maximum(-self.data, 0.0))

    def at(self, point) -> float:
        """Value of the cell whose center is ``point`` (must be a grid point)."""
        dom = self.domain
        idx = tuple(int(round((p - c) / dom.h)) + dom.offset for p, c in zip(point, dom.center))
        return float(self.data[idx])

    def gradient(self) -> np.ndarray:
        """Multilinear gradient at element centers, shape ``(n, *element_shape)``."""
        u = self.data
        n = u.ndim
        grads = []
        for d in range(n):
            g = np.diff(u, axis=d)
            for e in range(n):
                if e != d:
                    g = 0.5 * (g[(slice(None),) * e + (slice(1, None),)] + g[(slice(None),) * e + (slice(None, -1),)])
            grads.append(g / self.domain.h)
        return np.stack(grads)

    def max_over(self, ball: BallDomain) -> float:
        m = _ball_cells(self, ball)
        return float(self.data[m].max())

    def min_over(self, ball: BallDomain) -> float:
        m = _ball_cells(self, ball)
        return float(self.data[m].min())


def _ball_cells(u: ScalarField, ball: BallDomain | None) -> np.ndarray:
    if ball is None:
        return u.domain.mask
    m = ball.mask_on(u.domain)
    if np.any(m & ~u.domain.mask):
        raise ValueError("ball is not contained in the field's domain")
    if not m.any():
        raise ValueError("empty mask")
    return m


def integral(u: ScalarField, ball: BallDomain | None = None, power: float = 2.0) -> float:
    """Midpoint integral of |u|^power over the ball's cells."""
    m = _ball_cells(u, ball)
    return float(np.sum(np.abs(u.data[m]) ** power) * u.domain.cell_volume)


def l2_average(u: ScalarField, ball: BallDomain | None = None) -> float:
    """Root of the averaged square of ``u`` over the ball (the slashed integral)."""
    m = _ball_cells(u, ball)
    return float(np.sqrt(np.mean(u.data[m] ** 2)))


_PREDICATES = {
    "eq": lambda v, a, b: np.abs(v - a) <= ZERO_TOL,
    "le": lambda v, a, b: v <= a,
    "gt": lambda v, a, b: v > a,
    "ge": lambda v, a, b: v >= a,
    "between": lambda v, a, b: (v > a) & (v < b),
}


@dataclass(frozen=True)
class LevelSet:
    source: ScalarField = dc_field(repr=False)
    predicate: str
    bounds: tuple
    cells: np.ndarray = dc_field(repr=False)
    measure: float

    @property
    def count(self) -> int:
        return int(self.cells.sum())


def levelset_measure(u: ScalarField, ball: BallDomain | None, predicate: str, a: float, b: float | None = None) -> LevelSet:
    """Measure of ``{x in ball: predicate(u(x))}`` by cell-center counting.

    ``predicate`` is one of ``eq`` (|u-a| <= 1e-9), ``le``, ``gt``, ``ge`` or
    ``between`` (a < u < b).
    """
    if predicate not in _PREDICATES:
        raise ValueError(f"unknown predicate {predicate!r}")
    if predicate == "between" and b is None:
        raise ValueError("between needs two bounds")
    m = _ball_cells(u, ball)
    cells = m & _PREDICATES[predicate](u.data, a, b)
    return LevelSet(u, predicate, (a, b), cells, int(cells.sum()) * u.domain.cell_volume)


def truncate_shift(u: ScalarField, c: float) -> ScalarField:
    """Pointwise ``(u - c)^+``."""
    return ScalarField(u.domain, np.maximum(u.data - c, 0.0))


def rescale_truncate(u: ScalarField, k: int) -> ScalarField:
    """``2^k (u - (1 - 2^-k))^+`` for a field with values in [0, 1]."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    vals = u.data[u.domain.support]
    if vals.min() < -1e-12 or vals.max() > 1 + 1e-12:
        raise ValueError("rescale_truncate needs 0 <= u <= 1")
    out = np.clip(2.0**k * np.maximum(u.data - (1.0 - 2.0**-k), 0.0), 0.0, 1.0)
    return ScalarField(u.domain, out)


# dumps ----------------------------------------------------------------------
def dump_field(u: ScalarField, stem, field_id: str | None = None) -> tuple[Path, Path]:
    """Write ``stem.json`` (descriptor) and ``stem.csv`` (one value per support cell, boundary layer included)."""
    stem = Path(stem)
    vals = u.data[u.domain.support]
    desc = dict(u.domain.describe(), count=int(vals.size), cells="support", order="lexicographic-cell-index")
    if field_id is not None:
        desc["id"] = field_id
    jpath, cpath = stem.with_suffix(".json"), stem.with_suffix(".csv")
    jpath.write_text(json.dumps(desc, indent=2))
    np.savetxt(cpath, vals, fmt="%.17g")
    return jpath, cpath


def load_field(stem) -> ScalarField:
    stem = Path(stem)
    desc = json.loads(stem.with_suffix(".json").read_text())
    dom = BallDomain(desc["n"], desc["radius"], desc["h"], tuple(desc["center"]))
    vals = np.atleast_1d(np.loadtxt(stem.with_suffix(".csv"), dtype=float))
    if vals.size != desc["count"] or vals.size != int(dom.support.sum()):
        raise ValueError("value count does not match descriptor")
    data = np.zeros(dom.shape)
    data[dom.support] = vals
    return ScalarField(dom, data)

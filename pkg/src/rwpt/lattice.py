"""Lattice geometry: discs, annuli, torus projections and the jump taxonomy.

Discs are open, ``D(x, n) = {y : |y - x| < n}``, so the ring
``n <= |y| < n + s`` lies outside ``D(0, n)``.  Toral regions are stored
through their primary-copy representatives in ``[-K/2, K/2)^2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import RegionError, UnboundedRegion


def project_pi(x, K: int):
    """Coordinatewise ``((x_i + floor(K/2)) mod K) - floor(K/2)``.

    Accepts a single point or an ``(N, 2)`` array.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    h = K // 2
    arr = np.asarray(x, dtype=np.int64)
    out = np.mod(arr + h, K) - h
    if arr.ndim == 1:
        return tuple(int(v) for v in out)
    return out


def torus_distance(xh, yh, K: int) -> float:
    """Minimum Euclidean distance between two projected points over the
    nine neighbouring copies."""
    dx = int(xh[0]) - int(yh[0])
    dy = int(xh[1]) - int(yh[1])
    return min(
        math.hypot(dx - i * K, dy - j * K) for i in (-1, 0, 1) for j in (-1, 0, 1)
    )


@dataclass(frozen=True)
class TorusGeometry:
    K: int

    def __post_init__(self):
        if int(self.K) < 8:
            raise RegionError("torus side K must be >= 8")

    @property
    def low(self) -> int:
        return -(self.K // 2)

    def project(self, x):
        return project_pi(x, self.K)

    def distance(self, a, b) -> float:
        return torus_distance(a, b, self.K)

    def points(self) -> np.ndarray:
        """All primary-copy points, row-major."""
        xs = np.arange(self.low, self.low + self.K)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)


@dataclass(frozen=True)
class Region:
    """A lattice region with planar (``K=None``) or toral geometry.

    Build with :func:`disc`, :func:`annulus`, :func:`complement`,
    :func:`union`.
    """

    kind: str
    center: tuple[int, int] = (0, 0)
    n: float = 0.0
    s: float = 0.0
    parts: tuple["Region", ...] = ()
    K: int | None = None

    def __post_init__(self):
        if self.kind not in ("disc", "annulus", "complement", "union"):
            raise RegionError(f"unknown region kind {self.kind!r}")
        if self.K is not None:
            TorusGeometry(self.K)
            if self.kind in ("disc", "annulus") and not self.outer_radius < self.K / 4:
                raise RegionError(
                    f"toral discs need radius < K/4 (radius {self.outer_radius}, K={self.K})"
                )
        if self.n < 0 or self.s < 0:
            raise RegionError("radii must be non-negative")

    @property
    def toral(self) -> bool:
        return self.K is not None

    @property
    def outer_radius(self) -> float:
        if self.kind == "disc":
            return self.n
        if self.kind == "annulus":
            return self.n + self.s
        if self.kind == "union":
            return max(p.outer_radius + math.hypot(*p.center) for p in self.parts)
        return math.inf

    @property
    def bounded(self) -> bool:
        return self.toral or self.kind in ("disc", "annulus") or (
            self.kind == "union" and all(p.bounded for p in self.parts)
        )

    def contains(self, points) -> np.ndarray:
        """Vectorised membership for an ``(N, 2)`` array (or one point)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        if self.kind == "complement":
            return ~self.parts[0].contains(pts)
        if self.kind == "union":
            out = np.zeros(len(pts), dtype=bool)
            for p in self.parts:
                out |= p.contains(pts)
            return out
        rel = pts - np.asarray(self.center, dtype=np.int64)
        if self.K is not None:
            rel = project_pi(rel, self.K)
        d2 = (rel * rel).sum(axis=1).astype(float)
        if self.kind == "disc":
            return d2 < self.n * self.n
        return (d2 >= self.n * self.n) & (d2 < (self.n + self.s) ** 2)

    def __contains__(self, point) -> bool:
        return bool(self.contains(point)[0])

    def to_json(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind in ("disc", "annulus"):
            out["center"] = list(self.center)
            out["n"] = self.n
            if self.kind == "annulus":
                out["s"] = self.s
        else:
            out["parts"] = [p.to_json() for p in self.parts]
        out["geometry"] = "planar" if self.K is None else {"toral": self.K}
        return out

    @classmethod
    def from_json(cls, obj: Mapping[str, Any] | str) -> "Region":
        if isinstance(obj, str):
            obj = json.loads(obj)
        geometry = obj.get("geometry", "planar")
        K = None if geometry == "planar" else int(geometry["toral"])
        kind = obj["kind"]
        if kind == "disc":
            return disc(tuple(obj.get("center", (0, 0))), obj["n"], K=K)
        if kind == "annulus":
            return annulus(tuple(obj.get("center", (0, 0))), obj["n"], obj["s"], K=K)
        parts = tuple(cls.from_json(p) for p in obj["parts"])
        if kind == "complement":
            return complement(parts[0])
        return union(parts)


def disc(center=(0, 0), n: float = 1.0, K: int | None = None) -> Region:
    return Region("disc", (int(center[0]), int(center[1])), float(n), 0.0, (), K)


def annulus(center=(0, 0), n: float = 1.0, s: float = 1.0, K: int | None = None) -> Region:
    """``D(center, n+s) minus D(center, n)``."""
    return Region("annulus", (int(center[0]), int(center[1])), float(n), float(s), (), K)


def complement(region: Region) -> Region:
    return Region("complement", parts=(region,), K=region.K)


def union(regions: Iterable[Region]) -> Region:
    regions = tuple(regions)
    Ks = {r.K for r in regions}
    if len(Ks) != 1:
        raise RegionError("cannot mix planar and toral regions in a union")
    return Region("union", parts=regions, K=Ks.pop())


def box_points(radius: int) -> np.ndarray:
    xs = np.arange(-radius, radius + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def disc_points(n: float, center=(0, 0)) -> np.ndarray:
    """Lattice points of the open disc, row-major."""
    m = int(math.ceil(n))
    pts = box_points(m)
    d2 = (pts * pts).sum(1)
    return pts[d2 < n * n] + np.asarray(center, dtype=np.int64)


def ring_points(inner: float, outer: float, center=(0, 0)) -> np.ndarray:
    """Points with ``inner <= |y - center| < outer``, row-major."""
    m = int(math.ceil(outer))
    if m <= 512:
        pts = box_points(m)
        d2 = (pts * pts).sum(1)
        keep = (d2 >= inner * inner) & (d2 < outer * outer)
        return pts[keep] + np.asarray(center, dtype=np.int64)
    # thin rings of large radius: walk the columns instead of the full box
    chunks = []
    o2, i2 = outer * outer, inner * inner
    for x in range(-m, m + 1):
        rest = o2 - x * x
        if rest <= 0:
            continue
        hi = int(math.isqrt(int(math.ceil(rest)) + 1)) + 1
        lo = max(int(math.isqrt(max(int(i2 - x * x), 0))) - 1, 0)
        pos = np.arange(lo, hi + 1)
        ys = np.concatenate([-pos[::-1], pos[1:] if lo == 0 else pos])
        d2 = x * x + ys * ys
        ys = ys[(d2 >= i2) & (d2 < o2)]
        if len(ys):
            chunks.append(np.column_stack([np.full(len(ys), x), ys]))
    return np.concatenate(chunks).astype(np.int64) + np.asarray(center, dtype=np.int64)


def enumerate_region(region: Region, within: Region | None = None) -> np.ndarray:
    """Exact lattice point set of ``region`` in row-major order.

    Planar regions must be bounded, or be intersected with a bounded
    ``within`` region.  Toral regions enumerate over the primary copy.
    """
    if region.toral:
        pts = TorusGeometry(region.K).points()
        mask = region.contains(pts)
        if within is not None:
            mask &= within.contains(pts)
        return pts[mask]
    if not region.bounded:
        if within is None or not within.bounded:
            raise UnboundedRegion(f"{region.kind} region needs a bounded 'within' region")
        box = within
    else:
        box = region if within is None or not within.bounded else within
    m = int(math.ceil(_box_radius(box)))
    pts = box_points(m)
    mask = region.contains(pts)
    if within is not None:
        mask &= within.contains(pts)
    return pts[mask]


def _box_radius(region: Region) -> float:
    if region.kind in ("disc", "annulus"):
        return region.outer_radius + max(abs(region.center[0]), abs(region.center[1]))
    if region.kind == "union":
        return max(_box_radius(p) for p in region.parts)
    raise UnboundedRegion("complement regions have no bounding box")


JUMP_LABELS = ("baby", "small", "medium", "large")


def classify_jump(step: Sequence[int], n: float, s: float, K: int) -> frozenset[str]:
    """Every applicable label for one step relative to ``(n, s, K)``.

    The categories overlap; a step may be both small and medium.
    ``targeted(j)`` is reported only for large jumps.
    """
    if not (s <= n < K / 4):
        raise ValueError("classify_jump needs s <= n < K/4")
    length = math.hypot(step[0], step[1])
    labels = set()
    if length < s:
        labels.add("baby")
    if length < 2 * n:
        labels.add("small")
    if s < length < K - 2 * n:
        labels.add("medium")
    if length > K - 2 * n:
        labels.add("large")
        lo = math.ceil(length * math.sqrt(2) / (K + 2 * n))
        hi = math.floor(length / (K - 2 * n))
        for j in range(max(lo, 1), hi + 1):
            if j * (K - 2 * n) <= length <= j * (K + 2 * n) / math.sqrt(2):
                labels.add(f"targeted({j})")
    return frozenset(labels)

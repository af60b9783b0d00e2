"""Monte Carlo path engine for stopping-time events.

Each path ``i`` draws its steps from its own Philox4x32-10 substream with
counter ``(t // 2, i, stream)`` and key ``seed``, so results do not depend on
how paths are split across worker threads.  Toral walks are simulated with
planar increments; toral stop conditions test the projection of the planar
position, so planar and toral stopping times are read off the same path.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import core
from .errors import Capped, UnsupportedDistribution
from .lattice import Region, project_pi
from .stepdist import StepDistribution

DEFAULT_CAP = 100_000_000
CHUNK = 4096


class PathSampler:
    """Immutable step sampler for one distribution and seed.

    Parameters
    ----------
    dist : StepDistribution
        Needs a finite support table.
    K : int, optional
        Torus side used for reported projections.
    seed : int
        64-bit key of the counter RNG.
    stream : int
        32-bit stream id; distinct streams give independent path families.
    """

    def __init__(self, dist: StepDistribution, K: int | None = None, seed: int = 0,
                 stream: int = 0):
        if dist.offsets is None:
            raise UnsupportedDistribution("sampling needs a finite step table")
        self.dist = dist
        self.K = K
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFF
        self.key0 = self.seed & 0xFFFFFFFF
        self.key1 = self.seed >> 32
        self.off_x = np.ascontiguousarray(dist.offsets[:, 0], dtype=np.int64)
        self.off_y = np.ascontiguousarray(dist.offsets[:, 1], dtype=np.int64)
        cdf = np.cumsum(dist.probs)
        cdf[-1] = 1.0
        self.cdf = np.ascontiguousarray(cdf)

    def step_indices(self, n: int, path_id: int = 0) -> np.ndarray:
        out = np.empty(int(n), dtype=np.int64)
        core.draw_steps(self.cdf, self.key0, self.key1, self.stream, int(path_id), int(n), out)
        return out

    def steps(self, n: int, path_id: int = 0) -> np.ndarray:
        """The first ``n`` increments of path ``path_id``."""
        idx = self.step_indices(n, path_id)
        return np.column_stack([self.off_x[idx], self.off_y[idx]])

    def path(self, x, n: int, path_id: int = 0) -> np.ndarray:
        """Planar positions ``S_0 .. S_n``."""
        inc = self.steps(n, path_id)
        out = np.empty((n + 1, 2), dtype=np.int64)
        out[0] = x
        np.cumsum(inc, axis=0, out=out[1:])
        out[1:] += np.asarray(x, dtype=np.int64)
        return out


# stop specifications ---------------------------------------------------------

@dataclass(frozen=True)
class StopSpec:
    """``hit(region)``, ``escape(region)`` or ``first_of([...])``.

    For ``first_of`` the stop index is the position of the first condition
    that holds; ties at the same time go to the earlier entry.
    """

    kind: str
    region: Region | None = None
    parts: tuple["StopSpec", ...] = ()

    def conditions(self) -> list[tuple[str, Region]]:
        if self.kind == "first_of":
            return [(p.kind, p.region) for p in self.parts]
        return [(self.kind, self.region)]

    def describe(self) -> str:
        if self.kind == "first_of":
            return "first_of(" + ", ".join(p.describe() for p in self.parts) + ")"
        return f"{self.kind}({json.dumps(self.region.to_json(), sort_keys=True)})"


def hit(region: Region) -> StopSpec:
    return StopSpec("hit", region)


def escape(region: Region) -> StopSpec:
    return StopSpec("escape", region)


def first_of(specs: Sequence[StopSpec]) -> StopSpec:
    specs = tuple(specs)
    if any(s.kind == "first_of" for s in specs):
        raise ValueError("first_of does not nest")
    return StopSpec("first_of", parts=specs)


def _primitives(region: Region, negate: bool) -> list[tuple]:
    if region.kind == "disc":
        return [(region.center, -1.0, region.n ** 2, negate, region.K or 0)]
    if region.kind == "annulus":
        return [(region.center, region.n ** 2, (region.n + region.s) ** 2, negate, region.K or 0)]
    if region.kind == "complement":
        return _primitives(region.parts[0], not negate)
    if region.kind == "union" and not negate:
        out = []
        for p in region.parts:
            out.extend(_primitives(p, False))
        return out
    raise ValueError("stop regions must be discs, annuli, their complements, or plain unions")


def _compile(stop: StopSpec) -> tuple[np.ndarray, ...]:
    rows = []
    for k, (kind, region) in enumerate(stop.conditions()):
        for prim in _primitives(region, kind == "escape"):
            rows.append((k,) + prim)
    cidx = np.array([r[0] for r in rows], dtype=np.int64)
    ccx = np.array([r[1][0] for r in rows], dtype=np.int64)
    ccy = np.array([r[1][1] for r in rows], dtype=np.int64)
    rin2 = np.array([r[2] for r in rows], dtype=np.float64)
    rout2 = np.array([r[3] for r in rows], dtype=np.float64)
    neg = np.array([int(r[4]) for r in rows], dtype=np.int64)
    ck = np.array([r[5] for r in rows], dtype=np.int64)
    return cidx, ccx, ccy, rin2, rout2, neg, ck


@dataclass
class StopRecord:
    path_id: int
    stop_index: int
    position: tuple[int, int]
    projected: tuple[int, int] | None
    steps: int

    @property
    def capped(self) -> bool:
        return self.steps < 0


@dataclass
class StopBatch:
    """Outcomes of paths ``first_path .. first_path + n - 1`` in id order."""

    path_ids: np.ndarray
    stop_index: np.ndarray
    position: np.ndarray
    steps: np.ndarray
    K: int | None = None

    def __len__(self) -> int:
        return len(self.path_ids)

    @property
    def capped(self) -> np.ndarray:
        return self.steps < 0

    def record(self, i: int) -> StopRecord:
        pos = (int(self.position[i, 0]), int(self.position[i, 1]))
        proj = project_pi(pos, self.K) if self.K else None
        return StopRecord(int(self.path_ids[i]), int(self.stop_index[i]), pos, proj,
                          int(self.steps[i]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "stop_index", "x1", "x2", "steps"])
            for i in range(len(self)):
                w.writerow([int(self.path_ids[i]), int(self.stop_index[i]),
                            int(self.position[i, 0]), int(self.position[i, 1]),
                            int(self.steps[i])])


def default_threads() -> int:
    env = os.environ.get("RWPT_THREADS")
    if env:
        return max(1, int(env))
    return 1


def run(sampler: PathSampler, x, stop: StopSpec, n_paths: int, cap: int = DEFAULT_CAP,
        threads: int | None = None, first_path: int = 0) -> StopBatch:
    """Simulate ``n_paths`` independent paths from ``x``."""
    conds = _compile(stop)
    ids = np.arange(first_path, first_path + n_paths, dtype=np.int64)
    out_stop = np.empty(n_paths, dtype=np.int64)
    out_x = np.empty(n_paths, dtype=np.int64)
    out_y = np.empty(n_paths, dtype=np.int64)
    out_steps = np.empty(n_paths, dtype=np.int64)
    x0, y0 = int(x[0]), int(x[1])

    def work(lo, hi):
        core.run_paths(sampler.off_x, sampler.off_y, sampler.cdf, sampler.key0, sampler.key1,
                       sampler.stream, x0, y0, ids[lo:hi], *conds, int(cap),
                       out_stop[lo:hi], out_x[lo:hi], out_y[lo:hi], out_steps[lo:hi])

    bounds = [(lo, min(n_paths, lo + CHUNK)) for lo in range(0, n_paths, CHUNK)]
    threads = threads or default_threads()
    if threads <= 1 or len(bounds) == 1:
        for lo, hi in bounds:
            work(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: work(*b), bounds))
    return StopBatch(ids, out_stop, np.column_stack([out_x, out_y]), out_steps, sampler.K)


def sample_until(sampler: PathSampler, x, stop: StopSpec, cap: int = DEFAULT_CAP,
                 path_id: int = 0) -> StopRecord:
    """Run one path until a stop condition fires.

    Raises
    ------
    Capped
        When ``cap`` steps pass without a stop; the record is attached.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    rec = run(sampler, x, stop, 1, cap=cap, first_path=path_id, threads=1).record(0)
    if rec.capped:
        raise Capped(rec)
    return rec


# estimates -------------------------------------------------------------------

@dataclass(frozen=True)
class EventSpec:
    """Event or statistic read off a stop record.

    ``statistic="indicator"`` estimates ``P(stop index in success)``;
    ``statistic="steps"`` estimates the mean elapsed time.
    """

    stop: StopSpec
    success: tuple[int, ...] = (0,)
    statistic: str = "indicator"
    label: str = ""

    def describe(self) -> str:
        base = self.label or self.stop.describe()
        if self.statistic == "steps":
            return f"mean steps until {base}"
        return f"P(stop index in {list(self.success)}) for {base}"


@dataclass
class EstimateReport:
    event: str
    n_paths: int
    estimate: float
    se: float
    ci95: tuple[float, float]
    seed: int
    stream: int
    n_capped: int = 0
    statistic: str = "indicator"
    backend: str = field(default_factory=lambda: core.BACKEND)
    provenance: str = "mc"

    @property
    def half_width(self) -> float:
        return 1.96 * self.se

    def within(self, exact: float, n_se: float = 4.0) -> bool:
        return abs(self.estimate - exact) <= n_se * self.se

    def to_json(self) -> dict:
        out = asdict(self)
        out["ci95"] = list(self.ci95)
        return out


def summarize(batch: StopBatch, event: EventSpec, seed: int, stream: int) -> EstimateReport:
    ok = ~batch.capped
    n_capped = int((~ok).sum())
    if event.statistic == "indicator":
        vals = np.isin(batch.stop_index, event.success).astype(np.float64)
    elif event.statistic == "steps":
        vals = batch.steps[ok].astype(np.float64)
    else:
        raise ValueError(f"unknown statistic {event.statistic!r}")
    n = len(vals)
    mean = float(math.fsum(vals) / n) if n else math.nan
    if event.statistic == "indicator":
        se = math.sqrt(max(mean * (1 - mean), 0.0) / n)
    else:
        se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return EstimateReport(event.describe(), len(batch), mean, se,
                          (mean - 1.96 * se, mean + 1.96 * se), seed, stream, n_capped,
                          event.statistic)


def estimate(sampler: PathSampler, x, event: EventSpec, n_paths: int,
             cap: int = DEFAULT_CAP, threads: int | None = None) -> EstimateReport:
    """Frequency (or mean-time) estimate with a normal 95% interval."""
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    batch = run(sampler, x, event.stop, n_paths, cap=cap, threads=threads)
    return summarize(batch, event, sampler.seed, sampler.stream)


def step_chi_square(sampler: PathSampler, n_draws: int = 1_000_000, path_id: int = 0) -> dict:
    """Chi-square goodness of fit of sampled step frequencies against ``p1``."""
    idx = sampler.step_indices(n_draws, path_id)
    counts = np.bincount(idx, minlength=len(sampler.cdf))
    expected = sampler.dist.probs * n_draws
    res = stats.chisquare(counts, expected)
    z = (counts - expected) / np.sqrt(expected * (1 - sampler.dist.probs))
    return {"statistic": float(res.statistic), "dof": len(counts) - 1,
            "p_value": float(res.pvalue), "max_abs_z": float(np.abs(z).max()),
            "counts": counts.tolist()}

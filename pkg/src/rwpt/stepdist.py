"""One-step laws for symmetric planar walks.

A :class:`StepDistribution` is the validated law of a single increment
``X_1``.  The builder enforces the standing hypotheses used everywhere else
in the package: the law is symmetric, its covariance is a multiple of the
identity, and the flags record strong aperiodicity, bounded support and the
moment condition.

Table-based laws keep exact rational probabilities so that symmetry is
checked exactly; the power-law family is stored in floating point.
"""
from __future__ import annotations

import json
import math
from types import MappingProxyType
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping

import numpy as np
from scipy import signal, special

from .errors import (
    AnisotropicCovariance,
    DistributionError,
    DivergentMoment,
    NotAProbability,
    NotSymmetric,
    UnsupportedDistribution,
)

KINDS = ("lazy_srw", "king", "custom_table", "truncated_power_law")

PROB_TOL = 1e-12
ISO_TOL = 1e-12
DEFAULT_MOMENT_ORDER = 6.0


@dataclass(frozen=True)
class DistributionSpec:
    """Serializable recipe for a step distribution.

    ``params`` per kind:

    * ``lazy_srw``: ``hold`` (default 1/2)
    * ``king``: none
    * ``custom_table``: ``table`` as ``[[dx, dy, p], ...]``; ``p`` may be a
      number or a fraction string such as ``"1/8"``
    * ``truncated_power_law``: ``exponent``, ``cutoff`` (``null`` or
      ``"inf"`` for the untruncated law)

    Every kind accepts ``M``, the moment order used by the predictors.
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DistributionError(f"unknown distribution kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))
        if self.kind == "custom_table":
            table = self.params.get("table")
            if not table:
                raise DistributionError("custom_table needs a non-empty 'table'")
            offsets = [(int(row[0]), int(row[1])) for row in table]
            if len(set(offsets)) != len(offsets):
                raise DistributionError("custom_table offsets must be distinct")
        if self.kind == "truncated_power_law":
            if "exponent" not in self.params:
                raise DistributionError("truncated_power_law needs 'exponent'")
            cutoff = _parse_cutoff(self.params.get("cutoff"))
            if cutoff < 1:
                raise DistributionError("truncated_power_law cutoff must be >= 1")

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": _jsonable(self.params)}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any] | str) -> "DistributionSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        unknown = set(obj) - {"kind", "params"}
        if unknown:
            raise DistributionError(f"unknown keys in distribution spec: {sorted(unknown)}")
        return cls(obj["kind"], obj.get("params", {}))


def _jsonable(value):
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def _parse_cutoff(cutoff) -> float:
    if cutoff is None or cutoff == "inf":
        return math.inf
    return float(cutoff)


def _parse_prob(p) -> Fraction | float:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, int):
        return Fraction(p)
    if isinstance(p, str):
        return Fraction(p)
    return float(p)


@dataclass(frozen=True, eq=False)
class StepDistribution:
    """Validated one-step law ``p1``.

    ``offsets`` and ``probs`` are read-only arrays over the support (zero
    entries dropped).  They are ``None`` for the untruncated power law, which
    only supports the analytic operations (:func:`moment`,
    :func:`check_condition_A`).
    """

    spec: DistributionSpec
    offsets: np.ndarray | None
    probs: np.ndarray | None
    exact_probs: tuple | None
    cov_scale: float
    gamma2: float
    pi_gamma: float
    moment_order: float
    moments: Mapping[float, float]
    flags: Mapping[str, bool]
    max_jump: float
    models_infinite_range: bool = False
    _powerlaw: tuple | None = None  # (exponent, normalization) for the infinite law

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def beta(self) -> float:
        """The ``beta`` with ``M = 4 + 2 beta``."""
        return (self.moment_order - 4.0) / 2.0

    @property
    def bounded_support(self) -> bool:
        return self.flags["bounded_support"]

    @property
    def key(self) -> str:
        return self.spec.dumps()

    @property
    def support_size(self) -> int:
        self.require_table()
        return len(self.probs)

    def require_table(self) -> None:
        if self.offsets is None:
            raise UnsupportedDistribution(
                f"{self.kind} with infinite support has no finite step table"
            )

    def prob(self, offset) -> float:
        """``p1(offset)``."""
        dx, dy = int(offset[0]), int(offset[1])
        if self.offsets is None:
            alpha, z = self._powerlaw
            r2 = dx * dx + dy * dy
            return 0.0 if r2 == 0 else r2 ** (-alpha / 2) / z
        hit = np.flatnonzero((self.offsets[:, 0] == dx) & (self.offsets[:, 1] == dy))
        return float(self.probs[hit[0]]) if hit.size else 0.0

    def tail_prob(self, t: float) -> float:
        """``P(|X_1| > t)`` for finite tables."""
        self.require_table()
        norms = np.hypot(self.offsets[:, 0], self.offsets[:, 1])
        return float(self.probs[norms > t].sum())

    def kernel_grid(self) -> tuple[np.ndarray, int]:
        """Dense ``(2w+1, 2w+1)`` array of ``p1`` centred at index ``w``."""
        self.require_table()
        w = int(np.abs(self.offsets).max()) if len(self.offsets) else 0
        grid = np.zeros((2 * w + 1, 2 * w + 1))
        grid[self.offsets[:, 0] + w, self.offsets[:, 1] + w] = self.probs
        return grid, w

    def __repr__(self) -> str:
        return f"StepDistribution({self.spec.dumps()}, c={self.cov_scale:.6g})"


def _table_for(spec: DistributionSpec) -> tuple[list[tuple[int, int]], list]:
    kind, params = spec.kind, spec.params
    if kind == "lazy_srw":
        hold = _parse_prob(params.get("hold", Fraction(1, 2)))
        side = (1 - hold) / 4
        return [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)], [hold, side, side, side, side]
    if kind == "king":
        offs = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]
        return offs, [Fraction(1, 8)] * 8
    if kind == "custom_table":
        table = params["table"]
        return [(int(r[0]), int(r[1])) for r in table], [_parse_prob(r[2]) for r in table]
    alpha = float(params["exponent"])
    cutoff = _parse_cutoff(params.get("cutoff"))
    w = int(math.floor(cutoff))
    xs = np.arange(-w, w + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    r2 = X * X + Y * Y
    mask = (r2 > 0) & (r2 <= cutoff * cutoff)
    weights = r2[mask].astype(float) ** (-alpha / 2)
    probs = weights / weights.sum()
    return list(zip(X[mask].tolist(), Y[mask].tolist())), probs.tolist()


def _lattice_zeta(s: float) -> float:
    """``sum_{x in Z^2 \\ 0} |x|^{-2s}`` = 4 zeta(s) beta(s), valid for s > 1."""
    if s <= 1:
        return math.inf
    dirichlet_beta = 4.0 ** (-s) * (special.zeta(s, 0.25) - special.zeta(s, 0.75))
    return 4.0 * special.zeta(s) * dirichlet_beta


def build_distribution(spec: DistributionSpec | Mapping | str) -> StepDistribution:
    """Construct and validate a step distribution.

    Raises
    ------
    NotAProbability
        Negative entries or total mass different from one.
    NotSymmetric
        ``p1(x) != p1(-x)`` for some support point.
    AnisotropicCovariance
        The covariance is not a multiple of the identity.
    """
    if isinstance(spec, str) and spec in KINDS:
        spec = DistributionSpec(spec)
    elif not isinstance(spec, DistributionSpec):
        spec = DistributionSpec.from_json(spec)
    M = float(spec.params.get("M", DEFAULT_MOMENT_ORDER))
    if spec.kind == "truncated_power_law" and math.isinf(_parse_cutoff(spec.params.get("cutoff"))):
        return _build_infinite_powerlaw(spec, M)

    offsets, probs = _table_for(spec)
    exact = all(isinstance(p, Fraction) for p in probs)
    if any(p < 0 for p in probs):
        raise NotAProbability("negative probability in step table")
    total = sum(probs) if exact else math.fsum(float(p) for p in probs)
    if (exact and total != 1) or (not exact and abs(total - 1.0) > PROB_TOL):
        raise NotAProbability(f"probabilities sum to {float(total)!r}, not 1")

    keep = [i for i, p in enumerate(probs) if p != 0]
    offsets = [offsets[i] for i in keep]
    probs = [probs[i] for i in keep]
    lookup = dict(zip(offsets, probs))
    for (dx, dy), p in lookup.items():
        q = lookup.get((-dx, -dy), 0)
        if (q != p) if exact else (float(q) != float(p)):
            raise NotSymmetric(f"p1({dx},{dy}) = {p} but p1({-dx},{-dy}) = {q}")

    if exact:
        g11 = sum(p * dx * dx for (dx, dy), p in lookup.items())
        g22 = sum(p * dy * dy for (dx, dy), p in lookup.items())
        g12 = sum(p * dx * dy for (dx, dy), p in lookup.items())
        isotropic = g11 == g22 and g12 == 0
        g11, g22, g12 = float(g11), float(g22), float(g12)
    else:
        pf = np.array([float(p) for p in probs])
        off = np.array(offsets, dtype=float)
        g11 = math.fsum(pf * off[:, 0] ** 2)
        g22 = math.fsum(pf * off[:, 1] ** 2)
        g12 = math.fsum(pf * off[:, 0] * off[:, 1])
        isotropic = abs(g11 - g22) <= ISO_TOL * g11 and abs(g12) <= ISO_TOL
    if not isotropic:
        raise AnisotropicCovariance(
            f"covariance [[{g11}, {g12}], [{g12}, {g22}]] is not a multiple of the identity"
        )

    off_arr = np.array(offsets, dtype=np.int64).reshape(-1, 2)
    p_arr = np.array([float(p) for p in probs])
    off_arr.flags.writeable = False
    p_arr.flags.writeable = False
    c = (g11 + g22) / 2.0
    norms = np.hypot(off_arr[:, 0], off_arr[:, 1])
    moments = {0.0: 1.0, 2.0: 2.0 * c, M: math.fsum(p_arr * norms ** M)}
    flags = {
        "symmetric": True,
        "isotropic_cov": True,
        "strongly_aperiodic": _reach_covers_box(off_arr, p_arr, float(norms.max())),
        "bounded_support": True,
        "moment_condition": M > 4,
    }
    return StepDistribution(
        spec=spec,
        offsets=off_arr,
        probs=p_arr,
        exact_probs=tuple(probs) if exact else None,
        cov_scale=c,
        gamma2=2.0 * c,
        pi_gamma=2.0 * math.pi * c,
        moment_order=M,
        moments=MappingProxyType(moments),
        flags=MappingProxyType(flags),
        max_jump=float(norms.max()),
        models_infinite_range=spec.kind == "truncated_power_law",
    )


def _build_infinite_powerlaw(spec: DistributionSpec, M: float) -> StepDistribution:
    alpha = float(spec.params["exponent"])
    z = _lattice_zeta(alpha / 2)
    if not math.isfinite(z):
        raise NotAProbability(f"|x|^-{alpha} is not summable on Z^2")
    second = _lattice_zeta((alpha - 2) / 2)
    if not math.isfinite(second):
        raise DivergentMoment(f"exponent {alpha} gives infinite covariance")
    c = second / z / 2.0
    flags = {
        "symmetric": True,
        "isotropic_cov": True,
        "bounded_support": False,
        "moment_condition": M > 4 and M < alpha - 2,
        # contains the steps (1,0), (0,1) and (1,1)
        "strongly_aperiodic": True,
    }
    moments = {0.0: 1.0, 2.0: 2.0 * c}
    return StepDistribution(
        spec=spec,
        offsets=None,
        probs=None,
        exact_probs=None,
        cov_scale=c,
        gamma2=2.0 * c,
        pi_gamma=2.0 * math.pi * c,
        moment_order=M,
        moments=MappingProxyType(moments),
        flags=MappingProxyType(flags),
        max_jump=math.inf,
        models_infinite_range=True,
        _powerlaw=(alpha, z),
    )


def moment(d: StepDistribution, M: float) -> float:
    """``E|X_1|^M``.

    For the untruncated power law the lattice sum is evaluated in closed form
    through the Epstein zeta identity; a divergent sum raises
    :class:`DivergentMoment`.
    """
    if M < 0:
        raise ValueError("moment order must be >= 0")
    M = float(M)
    if M in d.moments:
        return d.moments[M]
    if d.offsets is None:
        alpha, z = d._powerlaw
        if M >= alpha - 2:
            raise DivergentMoment(f"E|X|^{M} diverges for exponent {alpha}")
        return _lattice_zeta((alpha - M) / 2) / z
    norms = np.hypot(d.offsets[:, 0], d.offsets[:, 1])
    return math.fsum(d.probs * norms ** M)


def check_strong_aperiodicity(d: StepDistribution, max_iter: int = 64) -> bool:
    """Decide strong aperiodicity by iterating reachable sets.

    The t-step reachable set (paths kept inside a box of radius
    ``4 * max|support|``) must cover the whole box at two consecutive times
    within ``max_iter`` iterations.
    """
    if d.offsets is None:
        return d.flags["strongly_aperiodic"]
    return _reach_covers_box(d.offsets, d.probs, d.max_jump, max_iter)


def _reach_covers_box(offsets, probs, max_jump, max_iter=64) -> bool:
    rho = int(math.ceil(max_jump))
    if len(offsets) == 0 or rho == 0:
        return False
    b = 4 * rho
    step = np.zeros((2 * rho + 1, 2 * rho + 1))
    step[offsets[:, 0] + rho, offsets[:, 1] + rho] = probs > 0
    reach = np.zeros((2 * b + 1, 2 * b + 1))
    reach[b, b] = 1.0
    covered_prev = False
    for _ in range(max_iter):
        if step.size <= 81:
            nxt = signal.convolve2d(reach, step, mode="same")
        else:
            nxt = signal.fftconvolve(reach, step, mode="same")
        reach = (nxt > 0.5).astype(float)
        covered = bool(reach.all())
        if covered and covered_prev:
            return True
        covered_prev = covered
    return False


@dataclass(frozen=True)
class ConditionAReport:
    n: int
    s: int
    c: float
    beta: float
    inf_entry: float
    argmin: tuple[int, int]
    threshold: float
    bound_holds: bool
    short_circuit: bool
    passed: bool

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["argmin"] = list(self.argmin)
        return out


def entry_masses(d: StepDistribution, n: float, s: float) -> tuple[np.ndarray, np.ndarray]:
    """One-step probabilities of entering ``D(0, n)`` from each ring point.

    Returns the ring points ``n <= |y| < n + s`` and
    ``P^y(X_1 in D(0, n))`` for each of them, by exhaustive summation.
    """
    from .lattice import disc_points, ring_points

    ring = ring_points(n, n + s)
    disc = disc_points(n)
    out = np.zeros(len(ring))
    if d.offsets is None:
        alpha, z = d._powerlaw
        for lo in range(0, len(ring), 256):
            diff = ring[lo:lo + 256, None, :] - disc[None, :, :]
            r2 = (diff ** 2).sum(-1).astype(float)
            out[lo:lo + 256] = (r2 ** (-alpha / 2)).sum(1) / z
        return ring, out
    grid, w = d.kernel_grid()
    for lo in range(0, len(ring), 256):
        diff = disc[None, :, :] - ring[lo:lo + 256, None, :]
        inside = (np.abs(diff) <= w).all(-1)
        vals = np.zeros(diff.shape[:2])
        vals[inside] = grid[diff[..., 0][inside] + w, diff[..., 1][inside] + w]
        out[lo:lo + 256] = vals.sum(1)
    return ring, out


def check_condition_A(
    d: StepDistribution,
    n: int,
    s: int,
    c: float = 0.01,
    beta: float = 1.0,
    short_circuit: bool | None = None,
) -> ConditionAReport:
    """Test the entry condition ``inf P^y(X_1 in D(0,n)) >= c exp(-beta s^(1/4))``.

    The infimum runs over the ring ``n <= |y| < n + s`` and is always
    computed.  Bounded-support laws pass without the bound unless the law is
    a model of an infinite-range walk (the power-law family), in which case
    the bound itself decides.
    """
    if s > n:
        raise ValueError("Condition A requires s <= n")
    if short_circuit is None:
        short_circuit = d.bounded_support and not d.models_infinite_range
    ring, masses = entry_masses(d, n, s)
    i = int(np.argmin(masses))
    inf_entry = float(masses[i])
    threshold = c * math.exp(-beta * s ** 0.25)
    holds = inf_entry >= threshold
    return ConditionAReport(
        n=int(n),
        s=int(s),
        c=c,
        beta=beta,
        inf_entry=inf_entry,
        argmin=(int(ring[i, 0]), int(ring[i, 1])),
        threshold=threshold,
        bound_holds=holds,
        short_circuit=bool(short_circuit),
        passed=bool(short_circuit) or holds,
    )


def builtin(kind: str, **params) -> StepDistribution:
    """Shorthand: ``builtin("lazy_srw")``."""
    return build_distribution(DistributionSpec(kind, params))

"""Visit-frequency estimation (lossy counting) and quantile-mapped frequency weights."""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Hashable, Iterable, Mapping, Optional, Tuple, Union

from mobsim.poi_store import CheckinLog

PSI_CHOICES = ("identity", "log1p")


@dataclass(frozen=True)
class FrequencyConfig:
    epsilon: float = 0.01
    sigma: float = 0.1
    psi: str = "identity"

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("frequency.epsilon must be in (0, 1)")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("frequency.sigma must be in [0, 1]")
        if self.psi not in PSI_CHOICES:
            raise ValueError(f"frequency.psi must be one of {PSI_CHOICES}")


class LossyCounter:
    """Manku-Motwani lossy counting over a stream of hashable ids.

    Each retained entry holds ``[count, max_error]``. The stream is cut into
    buckets of ``ceil(1/epsilon)`` items; at every bucket boundary entries
    with ``count + max_error <= bucket`` are evicted. Eviction for a boundary
    is applied when the next item arrives (or on :meth:`flush`), so a query
    taken exactly at a boundary still sees that bucket's survivors. That keeps
    every id with true count >= epsilon*N retained, including the
    ``count == epsilon*N`` edge case an eager sweep would drop.
    """

    def __init__(self, epsilon: float = 0.01):
        if not 0.0 < epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        self.epsilon = epsilon
        self.bucket_width = math.ceil(1.0 / epsilon)
        self.n_observed = 0
        self.entries: Dict[Hashable, list] = {}

    @property
    def current_bucket(self) -> int:
        return max(1, math.ceil(self.n_observed / self.bucket_width))

    def _evict(self, bucket: int) -> None:
        self.entries = {k: v for k, v in self.entries.items() if v[0] + v[1] > bucket}

    def flush(self) -> None:
        """Apply a pending boundary eviction now."""
        if self.n_observed and self.n_observed % self.bucket_width == 0:
            self._evict(self.n_observed // self.bucket_width)

    def observe(self, item: Hashable) -> "LossyCounter":
        n, w = self.n_observed, self.bucket_width
        if n and n % w == 0:
            self._evict(n // w)
        self.n_observed = n + 1
        entry = self.entries.get(item)
        if entry is not None:
            entry[0] += 1
        else:
            # error bound is current_bucket - 1 == ceil((n + 1) / w) - 1
            self.entries[item] = [1, n // w]
        return self

    def observe_all(self, items: Iterable[Hashable]) -> "LossyCounter":
        for item in items:
            self.observe(item)
        return self

    def query(self) -> Dict[Hashable, int]:
        return {k: v[0] for k, v in self.entries.items()}

    def __len__(self) -> int:
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "n_observed": self.n_observed,
            "entries": {str(k): list(v) for k, v in sorted(self.entries.items())},
        }


def observe(counter: LossyCounter, poi_id: Hashable) -> LossyCounter:
    return counter.observe(poi_id)


def query(counter: LossyCounter) -> Dict[Hashable, int]:
    return counter.query()


@dataclass(frozen=True)
class CategoryEcdf:
    category: str
    sorted_values: Tuple[int, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.sorted_values


class EmptyEcdfError(ValueError):
    pass


def build_ecdf(checkins: CheckinLog, category: str) -> CategoryEcdf:
    counts = Counter(r.poi_id for r in checkins.records if r.category == category)
    return CategoryEcdf(category, tuple(sorted(counts.values())))


def build_all_ecdfs(checkins: Optional[CheckinLog]) -> Dict[str, CategoryEcdf]:
    if checkins is None:
        return {}
    categories = sorted({r.category for r in checkins.records})
    return {c: build_ecdf(checkins, c) for c in categories}


def inverse_ecdf(ecdf: CategoryEcdf, q: Union[float, Fraction]) -> float:
    """Smallest sorted value whose cumulative share reaches ``q``: ``values[ceil(q*m) - 1]``.

    ``q`` is evaluated exactly (floats via their binary value), so rank
    fractions passed as ``Fraction`` never land on the wrong index from
    rounding.
    """
    if ecdf.empty:
        raise EmptyEcdfError(f"no check-in values for category {ecdf.category!r}")
    q = Fraction(q)
    if not 0 < q <= 1:
        raise ValueError("quantile must be in (0, 1]")
    m = len(ecdf.sorted_values)
    return float(ecdf.sorted_values[math.ceil(q * m) - 1])


def rank_normalize(freqs: Mapping[Hashable, float], ecdf: CategoryEcdf) -> Dict[Hashable, float]:
    """Map candidate frequencies onto the check-in scale by max-rank quantile lookup.

    rank(f) counts candidates with frequency <= f, so ties share the highest
    rank. An empty ECDF falls back to the raw frequencies.
    """
    if ecdf.empty:
        return {k: float(v) for k, v in freqs.items()}
    ordered = sorted(freqs.values())
    n = len(ordered)
    values = ecdf.sorted_values
    m = len(values)
    # values[ceil(rank/n * m) - 1] in integer arithmetic; same index inverse_ecdf picks
    return {k: float(values[-(-bisect_right(ordered, v) * m // n) - 1]) for k, v in freqs.items()}


def distribution_map(z: Mapping[Hashable, float], psi: str = "identity") -> Dict[Hashable, float]:
    if psi == "identity":
        out = {k: float(v) for k, v in z.items()}
    elif psi == "log1p":
        out = {}
        for k, v in z.items():
            if v <= -1:
                raise ValueError(f"log1p mapping undefined for z={v} (candidate {k!r})")
            out[k] = math.log1p(v)
    else:
        raise ValueError(f"unknown mapping {psi!r}; expected one of {PSI_CHOICES}")
    for k, v in out.items():
        if not (v >= 0.0 and math.isfinite(v)):
            raise ValueError(f"adjusted frequency for {k!r} is negative or not finite: {v}")
    return out


class EmptyCandidateSetError(ValueError):
    """No candidates to weight; the caller should widen the search radius."""


@dataclass(frozen=True)
class FrequencyWeights:
    per_poi: Dict[Hashable, float] = field(default_factory=dict)
    sigma: float = 0.0


def frequency_weights(fprime: Mapping[Hashable, float], sigma: float) -> FrequencyWeights:
    """(1 - sigma) * f'/sum(f') + sigma/n, with a uniform first term when sum(f') == 0."""
    if not fprime:
        raise EmptyCandidateSetError("empty candidate set; widen the radius")
    if not 0.0 <= sigma <= 1.0:
        raise ValueError("sigma must be in [0, 1]")
    n = len(fprime)
    total = math.fsum(fprime.values())
    if total > 0:
        share = {k: v / total for k, v in fprime.items()}
    else:
        share = {k: 1.0 / n for k in fprime}
    return FrequencyWeights({k: (1.0 - sigma) * s + sigma / n for k, s in share.items()}, sigma)

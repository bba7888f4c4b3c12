"""Distance impedance and per-POI spatial weights of the gravity-style destination model."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from mobsim.poi_store import GeoPoint, Poi, haversine


class DeterrenceMode(enum.Enum):
    MULTIPLY = "multiply"
    DIVIDE = "divide"


@dataclass(frozen=True)
class ImpedanceParams:
    """Truncated power-law parameters; ``k_km = inf`` disables the exponential cutoff."""

    r0_km: float = 1.5
    beta: float = 1.75
    k_km: float = 400.0

    def __post_init__(self):
        if not self.r0_km > 0:
            raise ValueError("impedance.r0_km must be > 0")
        if not self.beta >= 0:
            raise ValueError("impedance.beta must be >= 0")
        if not self.k_km > 0:
            raise ValueError("impedance.k_km must be > 0")

    @classmethod
    def from_config(cls, cfg: dict) -> "ImpedanceParams":
        k = cfg.get("k_km", 400.0)
        if isinstance(k, str):
            if k.strip().lower() not in ("inf", "+inf", "infinity"):
                raise ValueError(f"impedance.k_km: expected a number or 'inf', got {k!r}")
            k = math.inf
        return cls(r0_km=float(cfg.get("r0_km", 1.5)), beta=float(cfg.get("beta", 1.75)), k_km=float(k))


def impedance(d: float, params: ImpedanceParams) -> float:
    """f(d) = (d + r0)^-beta * exp(-d / k)."""
    if d < 0:
        raise ValueError("distance must be nonnegative")
    return (d + params.r0_km) ** (-params.beta) * math.exp(-d / params.k_km)


def spatial_weight(
    poi: Poi,
    current: GeoPoint,
    params: ImpedanceParams,
    mode: DeterrenceMode = DeterrenceMode.MULTIPLY,
) -> float:
    return spatial_weight_at(poi, haversine(current, poi.location), params, mode)


def spatial_weight_at(
    poi: Poi, distance_km: float, params: ImpedanceParams, mode: DeterrenceMode = DeterrenceMode.MULTIPLY
) -> float:
    """spatial_weight for a distance already known."""
    f = impedance(distance_km, params)
    if mode is DeterrenceMode.MULTIPLY:
        return poi.attraction * f
    return poi.attraction / f

import math

import numpy as np
import pytest

from mobsim.poi_store import Poi
from mobsim.spatial import DeterrenceMode, ImpedanceParams, impedance, spatial_weight

from conftest import TOKYO, offset

INF = math.inf


def test_impedance_collapses_to_one():
    p = ImpedanceParams(r0_km=2.0, beta=0.0, k_km=INF)
    assert all(impedance(d, p) == 1.0 for d in (0.0, 0.3, 12.0, 1e4))


def test_impedance_direct_values():
    assert impedance(1.0, ImpedanceParams(1.0, 2.0, INF)) == pytest.approx(0.25, abs=1e-15)
    # exp/log oracle: 1.5**-1.75 = exp(-1.75 ln 1.5) = 0.491859
    expected = math.exp(-1.75 * math.log(1.5))
    assert impedance(0.0, ImpedanceParams(1.5, 1.75, 400.0)) == pytest.approx(expected, rel=1e-12)
    assert impedance(0.0, ImpedanceParams(1.5, 1.75, 400.0)) == pytest.approx(0.4919, abs=1e-4)


@pytest.mark.parametrize("beta,k", [(1.75, 400.0), (0.5, INF), (0.0, 10.0), (3.0, 1.0)])
def test_impedance_strictly_decreasing(beta, k):
    p = ImpedanceParams(1.5, beta, k)
    values = [impedance(d, p) for d in np.linspace(0, 50, 100)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert impedance(0.0, p) == 1.5 ** (-beta)


def test_impedance_params_validation_and_config():
    with pytest.raises(ValueError):
        ImpedanceParams(r0_km=0.0)
    with pytest.raises(ValueError):
        ImpedanceParams(beta=-1)
    with pytest.raises(ValueError):
        ImpedanceParams(k_km=0)
    assert ImpedanceParams.from_config({"k_km": "inf"}).k_km == INF
    with pytest.raises(ValueError):
        ImpedanceParams.from_config({"k_km": "big"})


def test_spatial_weight_modes():
    poi = Poi("a", "", "Cafe", offset(TOKYO, 1.0), 2.0)
    p = ImpedanceParams(1.0, 2.0, INF)
    # d is ~1 km via the small-offset helper, so compare to attraction*f(d) for the exact d
    from mobsim.poi_store import haversine

    d = haversine(TOKYO, poi.location)
    assert d == pytest.approx(1.0, abs=1e-6)
    assert spatial_weight(poi, TOKYO, p, DeterrenceMode.MULTIPLY) == pytest.approx(0.5, abs=1e-6)
    assert spatial_weight(poi, TOKYO, p, DeterrenceMode.DIVIDE) == pytest.approx(8.0, abs=1e-5)


def test_spatial_weight_symmetry_and_identity():
    a = Poi("a", "", "Cafe", offset(TOKYO, 1.0), 1.3)
    b = Poi("b", "", "Cafe", offset(TOKYO, -1.0), 1.3)
    p = ImpedanceParams()
    for mode in DeterrenceMode:
        assert spatial_weight(a, TOKYO, p, mode) == pytest.approx(spatial_weight(b, TOKYO, p, mode), rel=1e-9)
    flat = ImpedanceParams(1.0, 0.0, INF)
    assert spatial_weight(a, TOKYO, flat, DeterrenceMode.MULTIPLY) == 1.3


def test_spatial_weight_monotone_by_mode():
    p = ImpedanceParams()
    pois = [Poi(f"p{i}", "", "Cafe", offset(TOKYO, d), 1.0) for i, d in enumerate(np.linspace(0, 30, 100))]
    mult = [spatial_weight(q, TOKYO, p, DeterrenceMode.MULTIPLY) for q in pois]
    div = [spatial_weight(q, TOKYO, p, DeterrenceMode.DIVIDE) for q in pois]
    assert all(x >= y for x, y in zip(mult, mult[1:]))
    assert all(x <= y for x, y in zip(div, div[1:]))


@pytest.mark.parametrize("c", [0.1, 2.0, 37.5])
def test_spatial_weight_linear_in_attraction(c):
    p = ImpedanceParams()
    loc = offset(TOKYO, 2.5, 1.0)
    for mode in DeterrenceMode:
        w1 = spatial_weight(Poi("a", "", "Cafe", loc, 1.7), TOKYO, p, mode)
        wc = spatial_weight(Poi("a", "", "Cafe", loc, 1.7 * c), TOKYO, p, mode)
        assert wc == pytest.approx(c * w1, rel=1e-12)

import json
import math

import numpy as np
import pytest

from bestnet import (
    LinkSpec,
    NetworkSpec,
    RouteSpec,
    Stability,
    ValidationError,
    classify_stability,
    compute_link_loads,
    gen_asym_star,
    gen_hypercube,
    gen_linear,
    gen_star,
)
from bestnet.network import asym_star_loads, hypercube_routes_per_link

from oracles import hypercube_route_count


def _tiny(**route_kw):
    kw = dict(id=0, links=(0, 1), arrival_rate=0.2, mean_size=1.0)
    kw.update(route_kw)
    return NetworkSpec((LinkSpec(0, 1.0), LinkSpec(1, 2.0)), (RouteSpec(**kw),))


def test_load_is_sum_over_routes():
    spec = NetworkSpec(
        (LinkSpec(0, 2.0), LinkSpec(1, 1.0)),
        (RouteSpec(0, (0, 1), 0.3, 2.0), RouteSpec(1, (0,), 0.5, 1.0)),
    )
    rep = compute_link_loads(spec)
    # link 0: (0.6 + 0.5) / 2, link 1: 0.6 / 1
    assert rep.per_link_load == pytest.approx((0.55, 0.6))
    assert rep.max_load == pytest.approx(0.6)
    assert rep.classification is Stability.ERGODIC


@pytest.mark.parametrize(
    "rho, expected",
    [(0.5, Stability.ERGODIC), (1.0, Stability.BOUNDARY), (1.0 + 1e-13, Stability.BOUNDARY), (1.1, Stability.TRANSIENT)],
)
def test_classifier_thresholds(rho, expected):
    assert classify_stability(rho) is expected


@pytest.mark.parametrize(
    "bad",
    [
        dict(links=(0, 5)),
        dict(links=(0, 0)),
        dict(links=()),
        dict(arrival_rate=-1.0),
        dict(mean_size=0.0),
    ],
)
def test_invalid_routes_rejected(bad):
    with pytest.raises(ValidationError):
        _tiny(**bad)


def test_nonpositive_capacity_rejected():
    with pytest.raises(ValidationError):
        NetworkSpec((LinkSpec(0, 0.0),), (RouteSpec(0, (0,), 0.1, 1.0),))


def test_json_round_trip(tmp_path):
    spec = gen_linear(3)
    again = NetworkSpec.from_json(spec.to_json())
    assert again == spec
    spec.save(tmp_path / "s.json")
    assert NetworkSpec.load(tmp_path / "s.json") == spec
    data = json.loads(spec.to_json())
    assert set(data) == {"label", "links", "routes"}


def test_linear_loads():
    spec = gen_linear(3, lambda_long=0.3, lambda_short=0.4)
    assert spec.n_routes == 4
    assert compute_link_loads(spec).per_link_load == pytest.approx((0.7, 0.7, 0.7))


def test_star_counts_and_rates():
    spec = gen_star(100, 0.9)
    assert spec.n_routes == 50 * 49
    assert spec.routes[0].arrival_rate == pytest.approx(0.018)
    rep = compute_link_loads(spec)
    assert rep.max_load == pytest.approx(0.9 * (1 - 2 / 100))
    assert np.ptp(rep.per_link_load) < 1e-12
    assert np.all(spec.routes_per_link() == 49)


def test_star_exact_load():
    rep = compute_link_loads(gen_star(100, 0.9, exact_load=True))
    assert rep.per_link_load == pytest.approx([0.9] * 100)


def test_star_link_roles():
    spec = gen_star(6, 0.5)
    for r in spec.routes:
        a, b = r.links
        assert a % 2 == 0 and b % 2 == 1 and a // 2 != b // 2


@pytest.mark.parametrize("n", [3, 2, 7])
def test_star_rejects_bad_sizes(n):
    with pytest.raises(ValidationError):
        gen_star(n, 0.5)


def test_asym_star_loads():
    spec = gen_asym_star(n_in=2, n_out=20, c_in=10.0, c_out=1.0, lam=0.5)
    loads = asym_star_loads(spec, 2)
    assert loads["rho_out"] == pytest.approx(0.5)
    assert loads["rho_in"] == pytest.approx(0.5 * 20 / (10.0 * 2))


@pytest.mark.parametrize("d, L", [(3, 1), (3, 2), (4, 2), (4, 3), (5, 2)])
def test_hypercube_route_and_link_counts(d, L):
    spec = gen_hypercube(d, L, rho=0.5)
    assert spec.n_links == d * 2**d
    assert spec.n_routes == hypercube_route_count(d, L)
    per = spec.routes_per_link()
    assert np.all(per == per[0])
    assert per[0] == hypercube_routes_per_link(d, L) == L * math.factorial(d - 1) // math.factorial(d - L)
    assert compute_link_loads(spec).per_link_load == pytest.approx([0.5] * spec.n_links)


def test_hypercube_routes_are_paths():
    d = 4
    spec = gen_hypercube(d, 3)
    for r in spec.routes:
        # link id = vertex * d + dimension; consecutive links must chain
        v = r.links[0] // d
        for ell in r.links:
            assert ell // d == v
            v ^= 1 << (ell % d)

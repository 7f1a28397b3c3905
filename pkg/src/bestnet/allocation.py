"""Per-route bandwidth shares under the min and max-min policies."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numba
import numpy as np

from .network import NetworkSpec, ValidationError

FEAS_RTOL = 1e-9


class Policy(str, enum.Enum):
    MIN = "Min"
    MAXMIN = "MaxMin"

    @classmethod
    def parse(cls, value: str | Policy) -> Policy:
        if isinstance(value, Policy):
            return value
        key = value.replace("-", "").replace("_", "").lower()
        for p in cls:
            if p.value.lower() == key:
                return p
        raise ValidationError(f"unknown policy {value!r}")


@dataclass(frozen=True)
class Allocation:
    shares: np.ndarray
    policy: Policy

    def to_dict(self) -> dict:
        return {"policy": self.policy.value, "shares": [float(s) for s in self.shares]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_counts(spec: NetworkSpec, counts) -> np.ndarray:
    x = np.asarray(counts)
    if x.shape != (spec.n_routes,):
        raise ValidationError(f"expected {spec.n_routes} route counts, got shape {x.shape}")
    if np.any(x < 0):
        raise ValidationError("route counts must be nonnegative")
    return x.astype(float)


def link_occupancy(spec: NetworkSpec, counts) -> np.ndarray:
    """X_l: total number of transfers using each link."""
    x = _check_counts(spec, counts)
    return x @ spec.incidence()


def alloc_min(spec: NetworkSpec, counts) -> Allocation:
    x = _check_counts(spec, counts)
    inc = spec.incidence()
    occ = x @ inc
    with np.errstate(divide="ignore"):
        per_link = np.where(occ > 0, spec.capacities / np.where(occ > 0, occ, 1.0), np.inf)
    shares = np.where(inc, per_link[None, :], np.inf).min(axis=1)
    shares[x == 0] = 0.0
    return Allocation(shares, Policy.MIN)


class RouteIndex:
    """CSR route->links and link->routes tables for the water-filling kernel."""

    def __init__(self, spec: NetworkSpec) -> None:
        lengths = [r.length for r in spec.routes]
        self.route_ptr = np.zeros(spec.n_routes + 1, dtype=np.int64)
        self.route_ptr[1:] = np.cumsum(lengths)
        self.route_links = np.array([ell for r in spec.routes for ell in r.links], dtype=np.int64)
        by_link: list[list[int]] = [[] for _ in range(spec.n_links)]
        for r in spec.routes:
            for ell in r.links:
                by_link[ell].append(r.id)
        self.link_ptr = np.zeros(spec.n_links + 1, dtype=np.int64)
        self.link_ptr[1:] = np.cumsum([len(b) for b in by_link])
        self.link_routes = np.array([r for b in by_link for r in b], dtype=np.int64)
        self.capacities = spec.capacities

    def maxmin(self, counts: np.ndarray) -> np.ndarray:
        return _waterfill(
            np.asarray(counts, dtype=np.int64),
            self.route_ptr,
            self.route_links,
            self.link_ptr,
            self.link_routes,
            self.capacities,
        )


@numba.njit(cache=True)
def _waterfill(counts, route_ptr, route_links, link_ptr, link_routes, capacities):  # pragma: no cover - jitted
    # each round the link with the lowest residual capacity per unfrozen flow
    # binds (lowest id on ties) and freezes its unfrozen routes at that level
    n_links = capacities.size
    shares = np.zeros(counts.size)
    residual = capacities.copy()
    unfrozen = np.zeros(n_links, dtype=np.int64)
    frozen = counts <= 0
    for r in range(counts.size):
        if counts[r] > 0:
            for j in range(route_ptr[r], route_ptr[r + 1]):
                unfrozen[route_links[j]] += counts[r]
    while True:
        best = -1
        level = np.inf
        for ell in range(n_links):
            if unfrozen[ell] > 0:
                v = residual[ell] / unfrozen[ell]
                if v < level:
                    level = v
                    best = ell
        if best < 0:
            break
        fair = max(level, 0.0)
        for j in range(link_ptr[best], link_ptr[best + 1]):
            r = link_routes[j]
            if frozen[r]:
                continue
            frozen[r] = True
            shares[r] = fair
            for i in range(route_ptr[r], route_ptr[r + 1]):
                ell = route_links[i]
                residual[ell] -= counts[r] * fair
                unfrozen[ell] -= counts[r]
    return shares


def alloc_maxmin(spec: NetworkSpec, counts) -> Allocation:
    """Max-min fair shares by progressive water-filling."""
    x = _check_counts(spec, counts)
    if np.any(x != np.round(x)):
        raise ValidationError("route counts must be integers")
    return Allocation(RouteIndex(spec).maxmin(x.astype(np.int64)), Policy.MAXMIN)


def allocate(spec: NetworkSpec, counts, policy: Policy | str) -> Allocation:
    policy = Policy.parse(policy)
    return alloc_min(spec, counts) if policy is Policy.MIN else alloc_maxmin(spec, counts)


def verify_feasibility(spec: NetworkSpec, counts, alloc: Allocation) -> bool:
    x = _check_counts(spec, counts)
    used = (x * np.asarray(alloc.shares)) @ spec.incidence()
    return bool(np.all(used <= spec.capacities * (1.0 + FEAS_RTOL)))


def verify_maxmin_conditions(spec: NetworkSpec, counts, alloc: Allocation, atol: float = 1e-9) -> bool:
    """Every busy route has a saturated link on which its share is maximal.

    Routes with no flows are ignored in the per-link maximum.
    """
    x = _check_counts(spec, counts)
    shares = np.asarray(alloc.shares, dtype=float)
    inc = spec.incidence()
    used = (x * shares) @ inc
    saturated = np.abs(used - spec.capacities) <= atol * np.maximum(1.0, spec.capacities)
    busy = x > 0
    masked = np.where(inc & busy[:, None], shares[:, None], -np.inf)
    link_max = masked.max(axis=0)
    for r in np.flatnonzero(busy):
        links = np.flatnonzero(inc[r])
        ok = saturated[links] & (shares[r] >= link_max[links] - atol)
        if not ok.any():
            return False
    return True

"""Network topologies, traffic parameters and link loads.

A network is a set of capacitated links and a set of routes, each route being
a list of link ids carrying Poisson arrivals of exponentially sized documents.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


class ValidationError(ValueError):
    """Raised for malformed network descriptions or out-of-range parameters."""


class Stability(str, enum.Enum):
    ERGODIC = "Ergodic"
    TRANSIENT = "Transient"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class LinkSpec:
    id: int
    capacity: float


@dataclass(frozen=True)
class RouteSpec:
    id: int
    links: tuple[int, ...]
    arrival_rate: float
    mean_size: float

    @property
    def length(self) -> int:
        return len(self.links)


@dataclass(frozen=True)
class NetworkSpec:
    links: tuple[LinkSpec, ...]
    routes: tuple[RouteSpec, ...]
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(
            self,
            "routes",
            tuple(
                r if isinstance(r.links, tuple) else RouteSpec(r.id, tuple(r.links), r.arrival_rate, r.mean_size)
                for r in self.routes
            ),
        )
        self.validate()

    def validate(self) -> None:
        n = len(self.links)
        if [link.id for link in self.links] != list(range(n)):
            raise ValidationError("link ids must be dense and ordered 0..N-1")
        for link in self.links:
            if not link.capacity > 0:
                raise ValidationError(f"link {link.id}: capacity must be positive")
        if not self.routes:
            raise ValidationError("network has no routes")
        if [r.id for r in self.routes] != list(range(len(self.routes))):
            raise ValidationError("route ids must be dense and ordered 0..R-1")
        for r in self.routes:
            if not r.links:
                raise ValidationError(f"route {r.id}: empty link list")
            if len(set(r.links)) != len(r.links):
                raise ValidationError(f"route {r.id}: duplicate link ids")
            for lid in r.links:
                if not 0 <= lid < n:
                    raise ValidationError(f"route {r.id}: dangling link id {lid}")
            if r.arrival_rate < 0:
                raise ValidationError(f"route {r.id}: negative arrival rate")
            if not r.mean_size > 0:
                raise ValidationError(f"route {r.id}: mean size must be positive")

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_routes(self) -> int:
        return len(self.routes)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([link.capacity for link in self.links], dtype=float)

    @property
    def arrival_rates(self) -> np.ndarray:
        return np.array([r.arrival_rate for r in self.routes], dtype=float)

    @property
    def mean_sizes(self) -> np.ndarray:
        return np.array([r.mean_size for r in self.routes], dtype=float)

    def incidence(self) -> np.ndarray:
        """Boolean route-by-link matrix, ``A[r, l]`` true iff route r uses link l."""
        a = np.zeros((self.n_routes, self.n_links), dtype=bool)
        for r in self.routes:
            a[r.id, list(r.links)] = True
        return a

    def routes_per_link(self) -> np.ndarray:
        return self.incidence().sum(axis=0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "links": [{"id": link.id, "capacity": link.capacity} for link in self.links],
            "routes": [
                {"id": r.id, "links": list(r.links), "arrival_rate": r.arrival_rate, "mean_size": r.mean_size}
                for r in self.routes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> NetworkSpec:
        try:
            links = tuple(LinkSpec(int(d["id"]), float(d["capacity"])) for d in data["links"])
            routes = tuple(
                RouteSpec(int(d["id"]), tuple(int(x) for x in d["links"]), float(d["arrival_rate"]), float(d["mean_size"]))
                for d in data["routes"]
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed network document: {exc}") from exc
        return cls(links, routes, str(data.get("label", "")))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> NetworkSpec:
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> NetworkSpec:
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class LoadReport:
    per_link_load: tuple[float, ...]
    max_load: float
    classification: Stability
    extra: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["per_link_load"] = list(self.per_link_load)
        d["classification"] = self.classification.value
        if not self.extra:
            d.pop("extra")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def classify_stability(report: LoadReport | float, tol: float = 1e-12) -> Stability:
    """Ergodic below unit load, transient above, Boundary within ``tol`` of 1."""
    if tol < 0:
        raise ValidationError("tol must be nonnegative")
    rho = report.max_load if isinstance(report, LoadReport) else float(report)
    if rho < 1.0 - tol:
        return Stability.ERGODIC
    if rho > 1.0 + tol:
        return Stability.TRANSIENT
    return Stability.BOUNDARY


def compute_link_loads(spec: NetworkSpec, tol: float = 1e-12) -> LoadReport:
    spec.validate()
    work = np.zeros(spec.n_links)
    for r in spec.routes:
        for lid in r.links:
            work[lid] += r.arrival_rate * r.mean_size
    loads = work / spec.capacities
    max_load = float(loads.max())
    return LoadReport(tuple(float(x) for x in loads), max_load, classify_stability(max_load, tol))


def gen_linear(
    n_links: int,
    capacity: float = 1.0,
    lambda_long: float = 0.3,
    lambda_short: float = 0.4,
    sigma: float = 1.0,
) -> NetworkSpec:
    """Linear network: route 0 crosses every link, route i crosses link i-1 only."""
    if n_links < 1:
        raise ValidationError("n_links must be >= 1")
    links = tuple(LinkSpec(i, capacity) for i in range(n_links))
    routes = [RouteSpec(0, tuple(range(n_links)), lambda_long, sigma)]
    routes += [RouteSpec(i + 1, (i,), lambda_short, sigma) for i in range(n_links)]
    return NetworkSpec(links, tuple(routes), f"linear(n={n_links})")


def gen_star(n_links: int, rho: float, sigma: float = 1.0, exact_load: bool = False) -> NetworkSpec:
    """Symmetric star with ``n_links/2`` branches and unit capacities.

    Link ``2b`` is the inbound link of branch ``b`` and ``2b+1`` its outbound
    link. One route per ordered pair of distinct branches, each with arrival
    rate ``2*lambda/N`` where ``lambda = rho/sigma``; the resulting link load is
    ``rho*(1 - 2/N)``. With ``exact_load`` the rate becomes ``2*lambda/(N-2)``
    so every link carries exactly ``rho``.
    """
    if n_links % 2 or n_links < 4:
        raise ValidationError("star needs an even number of links >= 4")
    if rho < 0 or sigma <= 0:
        raise ValidationError("rho must be >= 0 and sigma > 0")
    branches = n_links // 2
    rate = 2.0 * (rho / sigma) / (n_links - 2 if exact_load else n_links)
    links = tuple(LinkSpec(i, 1.0) for i in range(n_links))
    routes = tuple(
        RouteSpec(i, (2 * src, 2 * dst + 1), rate, sigma)
        for i, (src, dst) in enumerate(itertools.permutations(range(branches), 2))
    )
    return NetworkSpec(links, routes, f"star(N={n_links},rho={rho}{',exact' if exact_load else ''})")


def gen_asym_star(
    n_in: int,
    n_out: int,
    c_in: float,
    c_out: float,
    lam: float,
    sigma: float = 1.0,
) -> NetworkSpec:
    """Star with distinct inbound and outbound link populations.

    Links ``0..n_in-1`` are inbound, ``n_in..n_in+n_out-1`` outbound. Every
    (inbound, outbound) pair is a route with rate ``lam/n_in``, so outbound
    links carry load ``lam*sigma/c_out`` and inbound links
    ``lam*sigma*n_out/(c_in*n_in)``.
    """
    if n_in < 1 or n_out < 1:
        raise ValidationError("n_in and n_out must be >= 1")
    if c_in <= 0 or c_out <= 0 or lam <= 0 or sigma <= 0:
        raise ValidationError("capacities, lam and sigma must be positive")
    links = tuple(LinkSpec(i, c_in) for i in range(n_in))
    links += tuple(LinkSpec(n_in + j, c_out) for j in range(n_out))
    rate = lam / n_in
    routes = tuple(
        RouteSpec(i, (a, n_in + b), rate, sigma)
        for i, (a, b) in enumerate(itertools.product(range(n_in), range(n_out)))
    )
    return NetworkSpec(links, routes, f"asym-star(in={n_in},out={n_out})")


def asym_star_loads(spec: NetworkSpec, n_in: int) -> dict[str, float]:
    """Inbound/outbound loads of an asymmetric star (max over each link class)."""
    loads = compute_link_loads(spec).per_link_load
    return {"rho_in": max(loads[:n_in]), "rho_out": max(loads[n_in:])}


def hypercube_routes_per_link(d: int, route_len: int) -> int:
    return route_len * math.factorial(d - 1) // math.factorial(d - route_len)


def gen_hypercube(d: int, route_len: int, rho: float = 0.5, sigma: float = 1.0) -> NetworkSpec:
    """Hypercube of dimension ``d`` with two directed unit links per edge.

    Routes are all shortest directed paths between vertices at Hamming distance
    ``route_len``: one per ordering of the coordinates to flip. Each route gets
    rate ``rho/(sigma*R)`` with ``R`` routes per link, so every link has load
    exactly ``rho``.
    """
    if d < 1 or not 1 <= route_len <= d:
        raise ValidationError("need 1 <= route_len <= d")
    n_vertices = 1 << d
    # link id for the directed edge leaving vertex v along coordinate i
    def link_id(v: int, i: int) -> int:
        return v * d + i

    links = tuple(LinkSpec(i, 1.0) for i in range(d * n_vertices))
    per_link = hypercube_routes_per_link(d, route_len)
    rate = rho / (sigma * per_link)
    routes = []
    for v in range(n_vertices):
        for coords in itertools.combinations(range(d), route_len):
            for order in itertools.permutations(coords):
                path = []
                cur = v
                for i in order:
                    path.append(link_id(cur, i))
                    cur ^= 1 << i
                routes.append(RouteSpec(len(routes), tuple(path), rate, sigma))
    return NetworkSpec(links, tuple(routes), f"hypercube(d={d},L={route_len})")

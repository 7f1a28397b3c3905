"""Mean-field fixed point for the link-occupancy distribution of large networks.

In a large symmetric network whose routes cross ``L`` links, the stationary
fraction ``alpha_k`` of links carrying ``k`` transfers satisfies

    alpha_{k+1} u_{k+1} = rho * abar**(L-1) * alpha_k,   k >= 0,

with ``abar = sum_k k alpha_k`` and

    u_k = k * sum_{y>=k} S_y**(L-1) / (y (y+1)),   S_y = sum_{m<=y} m alpha_m.

For ``L = 2`` this is ``u_k = sum_y min(k, y) alpha_y``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .network import ValidationError

log = logging.getLogger(__name__)

NORM_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int) -> None:
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class MeanFieldProblem:
    rho: float
    route_len: int = 2
    k_max: int | None = None
    damping: float = 0.5
    tol: float = 1e-10
    max_iters: int = 10_000
    init: str = "geometric"

    def __post_init__(self) -> None:
        if not 0 < self.rho < 1:
            raise ValidationError(
                f"rho={self.rho}: the fixed point only exists for 0 < rho < 1 "
                "(at rho >= 1 the network is not stable)"
            )
        if self.route_len < 1:
            raise ValidationError("route_len must be >= 1")
        if self.k_max is not None and self.k_max < 10:
            raise ValidationError("k_max must be >= 10")
        if not 0 < self.damping <= 1:
            raise ValidationError("damping must lie in (0, 1]")
        if self.init not in ("geometric", "uniform"):
            raise ValidationError("init must be 'geometric' or 'uniform'")

    @property
    def initial_k_max(self) -> int:
        if self.k_max is not None:
            return self.k_max
        return int(max(50, math.ceil(10.0 / (1.0 - self.rho) ** 2)))


@dataclass
class MeanFieldSolution:
    rho: float
    route_len: int
    alpha: np.ndarray
    u: np.ndarray
    alpha_bar: float
    k0: int
    iterations: int
    residual: float
    tail_mass: float
    k_max: int = field(init=False)

    def __post_init__(self) -> None:
        self.k_max = self.alpha.size - 1

    @property
    def mean(self) -> float:
        return self.alpha_bar

    @property
    def cdf(self) -> np.ndarray:
        return np.minimum(np.cumsum(self.alpha), 1.0)

    def metadata(self) -> dict:
        return {
            "rho": self.rho,
            "route_len": self.route_len,
            "iterations": self.iterations,
            "residual": self.residual,
            "k_max": self.k_max,
            "k0": self.k0,
            "mean": self.mean,
            "tail_mass": self.tail_mass,
        }

    def to_json(self, include_arrays: bool = True) -> str:
        d = self.metadata()
        if include_arrays:
            last = int(np.flatnonzero(self.alpha > 1e-300)[-1])
            d["alpha"] = self.alpha[: last + 1].tolist()
        return json.dumps(d)

    def to_csv(self, cutoff: float = 1e-15) -> str:
        """Rows ``k,alpha,u,cdf``; trailing rows with negligible mass are dropped."""
        big = np.flatnonzero(self.alpha > cutoff)
        last = int(big[-1]) if big.size else 0
        cdf = self.cdf
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "alpha", "u", "cdf"])
        for k in range(last + 1):
            w.writerow([k, repr(float(self.alpha[k])), repr(float(self.u[k])), repr(float(cdf[k]))])
        return buf.getvalue()


def _check_alpha(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or a.size < 2:
        raise ValidationError("alpha must be a 1-D vector over k = 0..k_max")
    if np.any(a < 0) or abs(a.sum() - 1.0) > NORM_TOL:
        raise ValidationError("alpha must be a nonnegative vector summing to 1")
    return a


def _scaled_u(alpha: np.ndarray, route_len: int, abar: float) -> np.ndarray:
    """u_k / abar**(L-1) for k = 0..k_max (entry 0 unused, set to 0).

    Mass beyond k_max is zero, so S_y = S_{k_max} for y > k_max and the tail of
    the series sums to S_{k_max}**(L-1) / (k_max + 1) in closed form.
    """
    k_max = alpha.size - 1
    power = route_len - 1
    out = np.zeros(k_max + 1)
    if power == 0:
        out[1:] = 1.0
        return out
    y = np.arange(1, k_max + 1, dtype=float)
    s = np.cumsum(np.arange(k_max + 1) * alpha)[1:] / abar
    terms = s**power / (y * (y + 1.0))
    suffix = np.cumsum(terms[::-1])[::-1]
    tail = s[-1] ** power / (k_max + 1.0)
    out[1:] = y * (suffix + tail)
    return out


def compute_u(alpha, route_len: int) -> np.ndarray:
    """u_k for k = 0..k_max via prefix sums (``u[0]`` is 0 by convention)."""
    if route_len < 1:
        raise ValidationError("route_len must be >= 1")
    a = _check_alpha(alpha)
    abar = float(np.arange(a.size) @ a)
    if route_len == 1:
        return _scaled_u(a, 1, 1.0)
    if abar <= 0:
        return np.zeros(a.size)
    return _scaled_u(a, route_len, abar) * abar ** (route_len - 1)


def _rebuild(alpha: np.ndarray, rho: float, route_len: int) -> tuple[np.ndarray, np.ndarray, float]:
    """One application of the fixed-point map: recursion from alpha_0 = 1, then normalise."""
    abar = float(np.arange(alpha.size) @ alpha)
    su = _scaled_u(alpha, route_len, abar if abar > 0 else 1.0)
    log_ratio = np.log(rho) - np.log(su[1:])
    logs = np.concatenate(([0.0], np.cumsum(log_ratio)))
    new = np.exp(logs - logs.max())
    return new / new.sum(), su, abar


def _initial(problem: MeanFieldProblem, k_max: int) -> np.ndarray:
    k = np.arange(k_max + 1)
    if problem.init == "uniform":
        a = np.ones(k_max + 1)
    else:
        a = (1.0 - problem.rho) * problem.rho ** k.astype(float)
    return a / a.sum()


def _oscillating(step: np.ndarray, prev_step: np.ndarray | None) -> bool:
    """Consecutive updates pointing in nearly opposite directions."""
    if prev_step is None:
        return False
    denom = np.linalg.norm(step) * np.linalg.norm(prev_step)
    return bool(denom > 0 and step @ prev_step < -0.5 * denom)


def _iterate(problem: MeanFieldProblem, alpha: np.ndarray) -> tuple[np.ndarray, int, float]:
    omega = problem.damping
    prev_step = None
    change = math.inf
    for it in range(1, problem.max_iters + 1):
        new, _, _ = _rebuild(alpha, problem.rho, problem.route_len)
        step = new - alpha
        change = float(np.max(np.abs(step)))
        if change < problem.tol:
            return new, it, change
        if _oscillating(step, prev_step) and omega > 1e-3:
            omega *= 0.5
        prev_step = step
        alpha = alpha + omega * step
    raise ConvergenceError(
        f"fixed point not reached after {problem.max_iters} iterations (last change {change:.3e})",
        change,
        problem.max_iters,
    )


def peak_index(solution: MeanFieldSolution) -> int:
    """Largest k > 0 with u_k < rho * abar**(L-1); 0 if there is none."""
    scale = solution.alpha_bar ** (solution.route_len - 1)
    below = np.flatnonzero(solution.u[1:] < solution.rho * scale)
    return int(below[-1]) + 1 if below.size else 0


def fixed_point_residual(alpha: np.ndarray, rho: float, route_len: int) -> float:
    """max_k |alpha_{k+1} u_{k+1} / (rho abar**(L-1)) - alpha_k|."""
    abar = float(np.arange(alpha.size) @ alpha)
    su = _scaled_u(alpha, route_len, abar if abar > 0 else 1.0)
    return float(np.max(np.abs(alpha[1:] * su[1:] / rho - alpha[:-1])))


def fixed_point_solve(problem: MeanFieldProblem) -> MeanFieldSolution:
    """Damped fixed-point iteration, growing the truncation until the tail is negligible."""
    k_max = problem.initial_k_max
    alpha = _initial(problem, k_max)
    total_iters = 0
    while True:
        alpha, iters, _ = _iterate(problem, alpha)
        total_iters += iters
        # geometric extrapolation of the mass beyond k_max
        tail_mass = float(alpha[-1] * problem.rho / (1.0 - problem.rho))
        if tail_mass < 1e-12 or k_max > 10_000_000:
            break
        log.info("tail mass %.2e at k_max=%d, doubling truncation", tail_mass, k_max)
        alpha = np.concatenate([alpha, alpha[-1] * problem.rho ** np.arange(1.0, k_max + 1)])
        alpha /= alpha.sum()
        k_max = alpha.size - 1
    abar = float(np.arange(alpha.size) @ alpha)
    u = compute_u(alpha, problem.route_len)
    sol = MeanFieldSolution(
        rho=problem.rho,
        route_len=problem.route_len,
        alpha=alpha,
        u=u,
        alpha_bar=abar,
        k0=0,
        iterations=total_iters,
        residual=fixed_point_residual(alpha, problem.rho, problem.route_len),
        tail_mass=tail_mass,
    )
    sol.k0 = peak_index(sol)
    if sol.residual > max(problem.tol, 1e-9) * 10:
        raise ConvergenceError(f"fixed-point residual {sol.residual:.3e} above tolerance", sol.residual, total_iters)
    return sol


def mean_transfer_time(solution: MeanFieldSolution, link_arrival_rate: float) -> float:
    """Per-link Little's law: mean occupancy over the per-link arrival intensity."""
    if link_arrival_rate <= 0:
        raise ValidationError("arrival rate must be positive")
    return solution.alpha_bar / link_arrival_rate


# --- asymmetric star -------------------------------------------------------


@dataclass(frozen=True)
class AsymStarProblem:
    rho_in: float
    rho_out: float
    c_ratio: float = 1.0
    k_max: int = 400
    damping: float = 0.5
    tol: float = 1e-10
    max_iters: int = 10_000

    def __post_init__(self) -> None:
        if not (0 < self.rho_in < 1 and 0 < self.rho_out < 1):
            raise ValidationError("rho_in and rho_out must lie in (0, 1)")
        if self.c_ratio <= 0:
            raise ValidationError("c_ratio must be positive")
        if self.k_max < 10:
            raise ValidationError("k_max must be >= 10")


@dataclass
class AsymStarSolution:
    problem: AsymStarProblem
    alpha_in: np.ndarray
    alpha_out: np.ndarray
    u_in: np.ndarray
    u_out: np.ndarray
    alpha_bar_in: float
    alpha_bar_out: float
    iterations: int
    residual: float

    def metadata(self) -> dict:
        return {
            "rho_in": self.problem.rho_in,
            "rho_out": self.problem.rho_out,
            "c_ratio": self.problem.c_ratio,
            "mean_in": self.alpha_bar_in,
            "mean_out": self.alpha_bar_out,
            "iterations": self.iterations,
            "residual": self.residual,
            "k_max": self.alpha_in.size - 1,
        }


def _u_weighted(alpha: np.ndarray, scale_k: float, scale_y: float) -> np.ndarray:
    """v_k = sum_{y>0} alpha_y * min(scale_k * k, scale_y * y), k = 0..k_max."""
    k_max = alpha.size - 1
    ks = scale_k * np.arange(k_max + 1, dtype=float)
    ys = scale_y * np.arange(k_max + 1, dtype=float)
    order = np.argsort(ys[1:], kind="stable") + 1
    y_sorted = ys[order]
    w_sorted = alpha[order]
    cum_w = np.concatenate(([0.0], np.cumsum(w_sorted)))
    cum_wy = np.concatenate(([0.0], np.cumsum(w_sorted * y_sorted)))
    # y values below k contribute their own value, the rest contribute k
    idx = np.searchsorted(y_sorted, ks, side="left")
    return cum_wy[idx] + ks * (cum_w[-1] - cum_w[idx])


def _asym_terms(a_in: np.ndarray, a_out: np.ndarray, c: float):
    k = np.arange(a_in.size, dtype=float)
    u_in = _u_weighted(a_in, 1.0, c)  # sum_y a_in_y min(k, c y)
    u_out = _u_weighted(a_out, c, 1.0)  # sum_y a_out_y min(c k, y)
    return u_in, u_out, float(k @ a_in), float(k @ a_out)


def _recursion(rhs: float, u: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_ratio = np.log(rhs) - np.log(u[1:])
    logs = np.concatenate(([0.0], np.cumsum(log_ratio)))
    new = np.exp(logs - logs.max())
    return new / new.sum()


def _solve_asym_once(problem: AsymStarProblem, k_max: int) -> AsymStarSolution:
    c = problem.c_ratio
    k = np.arange(k_max + 1, dtype=float)
    a_in = (1 - problem.rho_in) * problem.rho_in**k
    a_in /= a_in.sum()
    a_out = (1 - problem.rho_out) * problem.rho_out**k
    a_out /= a_out.sum()
    omega = problem.damping
    prev_step = None
    change = math.inf
    for it in range(1, problem.max_iters + 1):
        u_in, u_out, _, abar_out = _asym_terms(a_in, a_out, c)
        rhs = problem.rho_in * abar_out
        new_in = _recursion(rhs, u_out)
        new_out = _recursion(rhs, u_in)
        step = np.concatenate([new_in - a_in, new_out - a_out])
        change = float(np.max(np.abs(step)))
        if not np.isfinite(change):
            break
        if change < problem.tol:
            u_in, u_out, abar_in, abar_out = _asym_terms(new_in, new_out, c)
            rhs = problem.rho_in * abar_out
            residual = float(
                max(
                    np.max(np.abs(new_in[1:] * u_out[1:] / rhs - new_in[:-1])),
                    np.max(np.abs(new_out[1:] * u_in[1:] / rhs - new_out[:-1])),
                )
            )
            return AsymStarSolution(problem, new_in, new_out, u_in, u_out, abar_in, abar_out, it, residual)
        if _oscillating(step, prev_step) and omega > 1e-3:
            omega *= 0.5
        prev_step = step
        a_in = a_in + omega * (new_in - a_in)
        a_out = a_out + omega * (new_out - a_out)
    raise ConvergenceError(
        f"asymmetric star fixed point not reached (last change {change:.3e})", change, problem.max_iters
    )


def solve_asym_star(problem: AsymStarProblem) -> AsymStarSolution:
    """Coupled fixed point for inbound/outbound occupancies of an asymmetric star.

        alpha_in_{k+1}  u_out_{k+1} = rho_in * abar_out * alpha_in_k
        alpha_out_{k+1} u_in_{k+1}  = rho_in * abar_out * alpha_out_k

    with ``u_in_k = sum_y alpha_in_y min(k, c y)``,
    ``u_out_k = sum_y alpha_out_y min(c k, y)`` and ``c = C_out / C_in``.
    ``rho_out`` only seeds the iteration; it does not enter the equations.

    The truncation is doubled (up to 4 times) while either distribution keeps
    mass at its last index; if that never stops, no normalisable solution
    exists at these parameters and ``ConvergenceError`` is raised.
    """
    k_max = problem.k_max
    for _ in range(5):
        sol = _solve_asym_once(problem, k_max)
        edge = max(sol.alpha_in[-1], sol.alpha_out[-1])
        if edge < 1e-14:
            return sol
        k_max *= 2
    raise ConvergenceError(
        f"mass {edge:.2e} stuck at the truncation edge k_max={sol.alpha_in.size - 1}: "
        "no normalisable solution at these parameters",
        float(edge),
        sol.iterations,
    )

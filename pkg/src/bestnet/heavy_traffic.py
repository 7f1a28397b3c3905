"""Heavy-traffic constant of the two-hop mean-field fixed point.

The constant ``A`` in ``E[X] ~ 1 / ((1 - rho)**2 * A)`` is defined through

    z c'(z) + c(z) v(z) = 0,    z v''(z) + v'(z) = c(z),
    v(0) = 0,  v'(0) = 1,  c(0) = 1,

as ``A = int_0^inf c(z) dz = lim z v'(z)``. The origin is a regular singular
point, so integration starts at a small ``z0`` from the local series

    c = 1 - z + 5/8 z^2,  v = z - z^2/4 + 5/72 z^3,  z v' = z - z^2/2 + 5/24 z^3,

and runs in ``t = log z`` on the state ``(c, v, w = z v')``, where the system
reads ``c' = -c v``, ``v' = w``, ``w' = z c``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson, solve_ivp

C_FLOOR = 1e-12


class IntegrationError(RuntimeError):
    pass


@dataclass
class OdeSolution:
    grid: np.ndarray
    c: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    A_integral: float
    A_limit: float
    step_stats: dict
    dense: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def to_csv(self) -> str:
        lines = ["z,c,v,v_prime"]
        for row in zip(self.grid, self.c, self.v, self.v_prime):
            lines.append(",".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "A_integral": self.A_integral,
            "A_limit": self.A_limit,
            "z_end": float(self.grid[-1]),
            **self.step_stats,
        }

    def v_at(self, z) -> np.ndarray:
        """v at arbitrary points inside the integrated range (series below z0)."""
        z = np.asarray(z, dtype=float)
        z0 = self.grid[0]
        inside = self.dense(np.log(np.maximum(z, z0)))[1]
        s = self.step_stats["c_decay_scale"]
        return np.where(z < z0, z - s * z**2 / 4, inside)


def _series(z: float, s: float) -> list[float]:
    # coefficients from matching powers of z in both equations
    c1 = -s
    v2 = c1 / 4.0
    c2 = -s * (v2 + c1) / 2.0
    v3 = c2 / 9.0
    c = 1.0 + c1 * z + c2 * z**2
    v = z + v2 * z**2 + v3 * z**3
    w = z + 2 * v2 * z**2 + 3 * v3 * z**3
    return [c, v, w]


def solve_cv_system(
    z_end: float = 50.0,
    tol: float = 1e-10,
    z0: float = 1e-8,
    n_grid: int = 4000,
    c_decay_scale: float = 1.0,
) -> OdeSolution:
    """Integrate the (c, v) system from ``z0`` to ``z_end``.

    ``z_end`` is multiplied by 4 until ``c(z_end) <= 1e-12``. The returned grid
    is log-uniform with ``n_grid`` points. ``c_decay_scale`` multiplies the
    ``c v`` term in the first equation; values other than 1 give a deliberately
    wrong trajectory for sensitivity checks.
    """
    if z_end <= 0 or z0 <= 0 or z0 >= z_end:
        raise ValueError("need 0 < z0 < z_end")
    s = c_decay_scale

    def rhs(t, state):
        c, v, w = state
        return [-s * c * v, w, math.exp(t) * c]

    y0 = _series(z0, s)
    for _ in range(12):
        sol = solve_ivp(
            rhs,
            (math.log(z0), math.log(z_end)),
            y0,
            method="DOP853",
            rtol=tol,
            atol=tol * 1e-6,
            dense_output=True,
        )
        if not sol.success:
            raise IntegrationError(f"integration failed: {sol.message}")
        if sol.y[0, -1] <= C_FLOOR:
            break
        z_end *= 4.0
    else:
        raise IntegrationError(f"c(z) still above {C_FLOOR} at z={z_end}")

    t = np.linspace(math.log(z0), math.log(z_end), n_grid)
    c, v, w = sol.sol(t)
    z = np.exp(t)
    steps = np.diff(sol.t)
    stats = {
        "n_steps": int(steps.size),
        "nfev": int(sol.nfev),
        "min_step_log": float(steps.min()),
        "max_step_log": float(steps.max()),
        "rtol": tol,
        "z0": z0,
        "c_decay_scale": s,
    }
    # int_0^z0 c dz from the series, then Simpson in log z (dz = z dt)
    head = z0 - s * z0**2 / 2.0
    body = float(simpson(c * z, x=t))
    tail = _exp_tail(z, c)
    return OdeSolution(
        grid=z,
        c=c,
        v=v,
        v_prime=w / z,
        A_integral=head + body + tail,
        A_limit=float(w[-1]),
        step_stats=stats,
        dense=sol.sol,
    )


def _exp_tail(z: np.ndarray, c: np.ndarray) -> float:
    """Integral of c beyond the grid, extrapolating an exponential decay."""
    if c[-1] <= 0 or c[-2] <= c[-1]:
        return 0.0
    rate = math.log(c[-2] / c[-1]) / (z[-1] - z[-2])
    return float(c[-1] / rate)


def estimate_A(solution: OdeSolution, max_disagreement: float = 0.05) -> float:
    """Average of the integral and limit estimators of ``A``."""
    a, b = solution.A_integral, solution.A_limit
    if abs(a - b) > max_disagreement * max(abs(a), abs(b)):
        raise IntegrationError(f"A estimators disagree: integral {a:.6f} vs limit {b:.6f}")
    return 0.5 * (a + b)


def blasius_residual(
    solution: OdeSolution,
    y_min: float = -4.0,
    y_max: float = 3.0,
    n: int = 2000,
) -> float:
    """max |w''' + w w''| for w(y) = v(e^y) - 1, by central differences.

    ``w`` is resampled on a uniform y-grid from the solution's interpolant.
    """
    if n < 2000:
        raise ValueError("grid too coarse for third differences: need n >= 2000")
    if math.exp(y_max) > solution.grid[-1] or math.exp(y_min) < solution.grid[0]:
        raise ValueError("y-range not covered by the solution")
    y = np.linspace(y_min, y_max, n)
    h = y[1] - y[0]
    w = solution.v_at(np.exp(y)) - 1.0
    w2 = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / h**2
    w3 = (w[4:] - 2.0 * w[3:-1] + 2.0 * w[1:-3] - w[:-4]) / (2.0 * h**3)
    return float(np.max(np.abs(w3 + w[2:-2] * w2[1:-1])))


def heavy_traffic_mean(rho: float, A: float) -> float:
    """Leading-order mean link occupancy 1 / ((1 - rho)^2 A) for two-hop routes."""
    return 1.0 / ((1.0 - rho) ** 2 * A)


def report(solution: OdeSolution) -> str:
    d = solution.summary()
    d["A"] = estimate_A(solution)
    d["blasius_residual"] = blasius_residual(solution)
    return json.dumps(d)

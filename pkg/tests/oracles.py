"""Independent reference computations used by the tests.

Nothing here imports the code paths it is compared against.
"""

from __future__ import annotations

import math

import numpy as np


def waterfill_dense(x: np.ndarray, inc: np.ndarray, capacities: np.ndarray) -> np.ndarray:
    """Textbook progressive filling on a dense incidence matrix.

    All unfrozen rates rise together; the first link to saturate freezes every
    unfrozen route through it.
    """
    x = np.asarray(x, dtype=float)
    inc = np.asarray(inc, dtype=float)
    shares = np.zeros(x.size)
    residual = np.asarray(capacities, dtype=float).copy()
    live = x > 0
    while live.any():
        unfrozen = (x * live) @ inc
        with np.errstate(divide="ignore", invalid="ignore"):
            level = np.where(unfrozen > 0, residual / unfrozen, np.inf)
        ell = int(np.argmin(level))
        fair = float(level[ell])
        frozen = live & (inc[:, ell] > 0)
        shares[frozen] = fair
        residual -= (x * frozen * fair) @ inc
        live &= ~frozen
    return shares


def u_bruteforce(alpha: np.ndarray, route_len: int) -> np.ndarray:
    """u_k = k * sum_{k_2..k_L >= 1} min(1/k, 1/k_2, ...) prod_i k_i alpha_{k_i}.

    Direct evaluation of the multiple sum on a full (L-1)-dimensional grid.
    """
    k_max = alpha.size - 1
    out = np.zeros(k_max + 1)
    ks = np.arange(1, k_max + 1, dtype=float)
    if route_len == 1:
        out[1:] = 1.0
        return out
    grids = np.meshgrid(*([ks] * (route_len - 1)), indexing="ij")
    weight = np.ones_like(grids[0])
    inv = np.full_like(grids[0], np.inf)
    for g in grids:
        weight *= g * alpha[g.astype(int)]
        inv = np.minimum(inv, 1.0 / g)
    for k in range(1, k_max + 1):
        out[k] = k * float(np.sum(np.minimum(inv, 1.0 / k) * weight))
    return out


def ctmc_occupancy(
    routes: list[list[int]],
    n_links: int,
    lam: list[float],
    sigma: list[float],
    horizon: float,
    warmup: float,
    seed: int,
) -> np.ndarray:
    """Time-average link-occupancy histogram of the jump chain under the min policy.

    Uses memoryless resampling: from state x, route r gains a flow at rate
    lam_r and loses one at rate x_r * min_l(1/X_l) / sigma_r (unit capacities).
    """
    rng = np.random.default_rng(seed)
    x = np.zeros(len(routes), dtype=int)
    hist = np.zeros(256)
    t = 0.0
    while t < horizon:
        X = np.zeros(n_links, dtype=int)
        for r, links in enumerate(routes):
            X[links] += x[r]
        rates = []
        for r, links in enumerate(routes):
            rates.append(lam[r])
            share = min(1.0 / X[ell] for ell in links) if x[r] else 0.0
            rates.append(x[r] * share / sigma[r])
        rates = np.array(rates)
        total = rates.sum()
        dt = rng.exponential(1.0 / total)
        lo, hi = max(t, warmup), min(t + dt, horizon)
        if hi > lo:
            for ell in range(n_links):
                hist[X[ell]] += hi - lo
        t += dt
        j = rng.choice(rates.size, p=rates / total)
        x[j // 2] += 1 if j % 2 == 0 else -1
    hist = hist / hist.sum()
    return np.trim_zeros(hist, "b")


def mm1_mean(rho: float) -> float:
    return rho / (1.0 - rho)


def mm1_dist(rho: float, k_max: int) -> np.ndarray:
    k = np.arange(k_max + 1)
    return (1.0 - rho) * rho**k


def hypercube_route_count(d: int, route_len: int) -> int:
    return 2**d * math.comb(d, route_len) * math.factorial(route_len)


def ode_A_direct(z_end: float = 800.0, z0: float = 1e-6) -> tuple[float, float]:
    """(int_0^z_end c dz, z v'(z_end)) from LSODA in the original variable z.

    The state is (c, v, q = z v'), with c' = -c v / z, v' = q / z, q' = c.
    """
    from scipy.integrate import quad, solve_ivp

    def rhs(z, y):
        c, v, q = y
        return [-c * v / z, q / z, c]

    y0 = [1 - z0 + 5 / 8 * z0**2, z0 - z0**2 / 4, z0 - z0**2 / 2]
    sol = solve_ivp(rhs, (z0, z_end), y0, method="LSODA", rtol=1e-11, atol=1e-14, dense_output=True)
    integral = z0 + quad(lambda z: sol.sol(z)[0], z0, z_end, limit=400, epsabs=1e-12)[0]
    return integral, float(sol.y[2, -1])

"""Slow single-provider reference built from the pointwise user model only.

For fixed ``u`` the utility gap to the free option is linear in ``v`` on
``[0, p)`` and on ``[p, V]``, so the participation set on each piece follows
from the gap at the two piece ends.  Usage and charge are constant on each
piece, which leaves one adaptive integral over ``u`` (scipy ``quad``).
"""

import math

from scipy.integrate import quad
from scipy.optimize import brentq

from twopart.model import UserType, charge, free_utility, optimal_usage, optimal_utility


def _gap(u, v, tariff, q, q0):
    user = UserType(u, v)
    return optimal_utility(user, tariff, q) - free_utility(user, q0)


def _piece(u, lo, hi, tariff, q, q0):
    """Sub-interval of ``[lo, hi]`` where the provider wins (gap >= 0)."""
    if hi <= lo:
        return None
    eps = 1e-13 * max(hi, 1.0)
    # evaluate just inside the piece so the usage rule of the piece applies
    a, b = _gap(u, lo, tariff, q, q0), _gap(u, hi - eps, tariff, q, q0)
    if a >= 0 and b >= 0:
        return lo, hi
    if a < 0 and b < 0:
        return None
    root = lo + (hi - eps - lo) * a / (a - b)
    return (root, hi) if b >= 0 else (lo, root)


def inner(u, scenario, q, what):
    pc = scenario.providers[0]
    t, q0 = pc.tariff, scenario.q0
    dist = scenario.distribution
    V, beta = dist.v_max, dist.beta
    F = lambda x: min(max(x / V, 0.0), 1.0) ** beta
    G = lambda x: V * beta / (beta + 1) * min(max(x / V, 0.0), 1.0) ** (beta + 1)
    total = 0.0
    cut = min(t.p, V)
    for lo, hi in ((0.0, cut), (cut, V)):
        iv = _piece(u, lo, hi, t, q, q0)
        if iv is None:
            continue
        mid = 0.5 * (iv[0] + iv[1])
        y = optimal_usage(UserType(u, mid), t, q)
        if what == "load":
            total += y * (F(iv[1]) - F(iv[0]))
        elif what == "revenue":
            total += charge(y, t) * (F(iv[1]) - F(iv[0]))
        else:
            total += y * (G(iv[1]) - G(iv[0]))
    return total


def reference_metric(scenario, q, what="load"):
    dist = scenario.distribution
    U, alpha = dist.u_max, dist.alpha
    t = scenario.providers[0].tariff
    points = [x for x in (t.g * math.exp(q) / U,) if 0 < x < 1]
    # integrate in w = F_u(u) so the density never appears
    pts = [x ** alpha for x in points]
    val, _ = quad(lambda w: inner(U * w ** (1 / alpha), scenario, q, what), 0.0, 1.0,
                  points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-12)
    return dist.mass * val


def reference_equilibrium(scenario):
    pc = scenario.providers[0]
    phi = lambda q: q - reference_metric(scenario, q) / pc.capacity
    d0 = reference_metric(scenario, 0.0)
    if d0 == 0:
        return 0.0
    hi = d0 / pc.capacity
    return brentq(phi, 0.0, min(hi, scenario.q0 * (1 - 1e-12)), xtol=1e-14)

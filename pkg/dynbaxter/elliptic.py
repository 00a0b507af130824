"""Theta functions and the brackets built from them.

Two conventions live here. The nome convention (H, Theta, h) follows the
eight-vertex/SOS literature: half period K, nome p, crossing parameter lambda.
The modular convention (theta_odd, bracket) uses tau in the upper half plane
and the level L of the restricted A chain.
"""

import cmath
import logging
import math
from functools import lru_cache

from . import config
from .exceptions import DomainError

logger = logging.getLogger(__name__)


def euler_phi(p: complex, tol: float = config.SERIES_TOL) -> complex:
    """Euler product prod_{k>=1} (1 - p^k)."""
    p = complex(p)
    if abs(p) >= 1:
        raise DomainError(f"euler_phi needs |p| < 1, got {p}")
    if p == 0:
        return 1.0 + 0j

    result = 1.0 + 0j
    power = p
    for _ in range(config.MAX_TERMS):
        if abs(power) < tol:
            break
        result *= 1 - power
        power *= p
    return result


def normalization_zeta(p: complex) -> complex:
    """zeta = p^{-1/8} phi(p) / phi(p^2)^2."""
    p = complex(p)
    if p == 0:
        raise DomainError("normalization zeta is singular at p = 0")
    return p ** (-0.125) * euler_phi(p) / euler_phi(p * p) ** 2


def _turning_index(p: complex, growth: float) -> float:
    # beyond this index the terms decay monotonically
    log_p = math.log(abs(p))
    return 0.5 + growth / (-log_p)


def jacobi_H(z: complex, params) -> complex:
    """H(z) = 2 sum_{n>=1} (-1)^{n-1} p^{(n-1/2)^2} sin((2n-1) pi z / (2K))."""
    p = complex(params.p)
    if p == 0:
        return 0j
    z = complex(z)
    K = params.K
    growth = math.pi * abs(z.imag) / (2 * K) * 2
    turn = _turning_index(p, growth)

    total = 0j
    running_max = 0.0
    for n in range(1, config.MAX_TERMS + 1):
        term = (-1) ** (n - 1) * p ** ((n - 0.5) ** 2) * cmath.sin((2 * n - 1) * math.pi * z / (2 * K))
        total += term
        mag = abs(term)
        running_max = max(running_max, mag)
        if n > turn and mag <= config.SERIES_TOL * running_max:
            break
    else:
        logger.warning(f"jacobi_H hit the term cap at z={z}")
    return 2 * total


def jacobi_Theta(z: complex, params) -> complex:
    """Theta(z) = 1 + 2 sum_{n>=1} (-1)^n p^{n^2} cos(n pi z / K)."""
    p = complex(params.p)
    if p == 0:
        return 1.0 + 0j
    z = complex(z)
    K = params.K
    growth = math.pi * abs(z.imag) / K
    turn = _turning_index(p, growth)

    total = 0j
    running_max = 1.0
    for n in range(1, config.MAX_TERMS + 1):
        term = (-1) ** n * p ** (n * n) * cmath.cos(n * math.pi * z / K)
        total += term
        mag = abs(term)
        running_max = max(running_max, mag)
        if n > turn and mag <= config.SERIES_TOL * running_max:
            break
    else:
        logger.warning(f"jacobi_Theta hit the term cap at z={z}")
    return 1 + 2 * total


def h(z: complex, params) -> complex:
    """h(z) = zeta H(lambda z) Theta(lambda z)."""
    x = params.lam * complex(z)
    return params.zeta * jacobi_H(x, params) * jacobi_Theta(x, params)


def _theta_window(tau: complex, z: complex, tol: float = 1e-18) -> int:
    """Smallest N whose tail bound exp(-pi Im(tau) (N+1/2)^2 + 2 pi |Im z| (N+1/2)) drops below tol."""
    a = math.pi * tau.imag
    b = 2 * math.pi * abs(z.imag)
    target = -math.log(tol)
    for N in range(config.MAX_TERMS):
        x = N + 0.5
        if a * x * x - b * x > target:
            return N
    raise DomainError(f"theta series does not converge fast enough for tau={tau}")


def theta_odd(z: complex, params) -> complex:
    """Odd theta: -sum_n exp(i pi (n+1/2)^2 tau + 2 pi i (n+1/2)(z+1/2))."""
    tau = complex(params.tau)
    if tau.imag <= 0:
        raise DomainError(f"theta_odd needs Im(tau) > 0, got {tau}")
    z = complex(z)
    N = _theta_window(tau, z)

    total = 0j
    for n in range(-N - 1, N + 1):
        m = n + 0.5
        total += cmath.exp(1j * math.pi * m * m * tau + 2j * math.pi * m * (z + 0.5))
    return -total


@lru_cache(maxsize=64)
def _theta_prime_zero(tau: complex) -> complex:
    N = _theta_window(tau, 0j)
    total = 0j
    for n in range(-N - 1, N + 1):
        m = n + 0.5
        total += 2j * math.pi * m * cmath.exp(1j * math.pi * m * m * tau + 1j * math.pi * m)
    return -total


def theta_prime_zero(params) -> complex:
    """Derivative of theta_odd at 0 from the term-wise differentiated series."""
    tau = complex(params.tau)
    if tau.imag <= 0:
        raise DomainError(f"theta needs Im(tau) > 0, got {tau}")
    return _theta_prime_zero(tau)


def bracket(z: complex, params) -> complex:
    """[z] = theta(z/g, tau) / (theta'(0, tau)/g) with g = 2L-2, so that [z] ~ z near 0."""
    g = 2 * params.L - 2
    derivative = theta_prime_zero(params)
    if abs(derivative) < 1e-12:
        raise DomainError(f"theta'(0) vanishes numerically for tau={params.tau}")
    return theta_odd(complex(z) / g, params) / (derivative / g)


def trig_bracket(z: complex, g: int) -> complex:
    """<z> = sin(pi z / g)."""
    if g < 2:
        raise DomainError(f"trigonometric scale must be at least 2, got {g}")
    return cmath.sin(math.pi * complex(z) / g)

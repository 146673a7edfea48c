"""Composite-Simpson quadrature with interval doubling.

Shared by the noise statistics and filter-function integrals: the integrand
is always smooth on the requested interval, so composite Simpson with grid
doubling until successive values agree to a relative tolerance is both
simple and reliable, and the doubling comparison doubles as an a
posteriori error check.
"""

import numpy as np
from scipy.integrate import simpson


def adaptive_simpson(f, a, b, n0=1025, rel_tol=1e-9, max_doublings=14):
    """Integrate ``f`` over ``[a, b]`` by composite Simpson with doubling.

    Parameters
    ----------
    f : callable
        Vectorized integrand, ``f(x) -> ndarray``.
    a, b : float
        Integration limits.
    n0 : int
        Initial number of nodes (forced odd, at least 5).
    rel_tol : float
        Stop once successive refinements agree to this relative tolerance.
    max_doublings : int
        Cap on the number of grid doublings.

    Returns
    -------
    value : float
    rel_err : float
        Relative change in the last doubling (a posteriori error estimate).
    """
    if b <= a:
        return 0.0, 0.0
    n = max(int(n0), 5)
    if n % 2 == 0:
        n += 1
    x = np.linspace(a, b, n)
    prev = simpson(f(x), x=x)
    for _ in range(max_doublings):
        n = 2 * n - 1
        x = np.linspace(a, b, n)
        cur = simpson(f(x), x=x)
        scale = max(abs(cur), abs(prev), 1e-300)
        rel = abs(cur - prev) / scale
        prev = cur
        if rel < rel_tol:
            return cur, rel
    return prev, rel

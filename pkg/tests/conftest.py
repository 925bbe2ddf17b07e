import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from martonlab.probcore import BroadcastChannel

# property tests are seeded so every run sees the same examples
settings.register_profile("repro", derandomize=True, deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repro")


def dense_channel(rng, x_size=2, y_size=None, z_size=None, floor=0.02):
    """Random channel with every transition probability at least ``floor``."""
    def mat(cols):
        w = rng.dirichlet(np.ones(cols), size=x_size)
        return (1 - floor * cols) * w + floor

    y_size = y_size or int(rng.integers(2, 4))
    z_size = z_size or int(rng.integers(2, 4))
    return BroadcastChannel(mat(y_size), mat(z_size))


def binary_entropy(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    return np.nan_to_num(h)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


AND_MAP = np.array([[0, 0], [0, 1]])


def random_and_coupling(rng, floor=0.05):
    """Dense 2x2 coupling for the AND map (fiber of 0 = three cells)."""
    p = rng.dirichlet(np.ones(4)) * (1 - 4 * floor) + floor
    return p.reshape(2, 2)


def stationary_and_coupling(ch, rng, tries=20):
    """Root-find an interior coupling where the AND map's fiber-0 partials coincide.

    Returns None if no dense root is found.
    """
    from scipy.optimize import root

    from martonlab.tmax import CouplingWithMap, gradient_J

    p1 = rng.uniform(0.15, 0.5)

    def build(z):
        a, b = np.exp(z)
        rest = 1.0 - p1
        s = 1.0 + a + b
        return np.array([[rest / s, rest * a / s], [rest * b / s, p1]])

    def eqs(z):
        c = CouplingWithMap(build(z), AND_MAP, 2)
        g = gradient_J(c, ch, c.x_marginal())
        return [g[0, 1] - g[0, 0], g[1, 0] - g[0, 0]]

    for _ in range(tries):
        sol = root(eqs, rng.normal(size=2), method="hybr", options={"xtol": 1e-13})
        if sol.success and np.max(np.abs(eqs(sol.x))) < 1e-9:
            p = build(sol.x)
            if p.min() > 1e-4:
                return p
    return None


def grid_oracle(ch, alpha, n):
    """Direct joint-table evaluation of the weighted Marton expression on an n-grid."""
    def H(p):
        safe = np.where(p > 0, p, 1.0)
        return -(p * np.log2(safe)).sum(axis=-1)

    s = np.linspace(0, 1, n + 1)
    A, B = np.meshgrid(s, s, indexing="ij")
    A, B = A.ravel(), B.ravel()
    px_a = np.stack([1 - A, A], -1)
    px_b = np.stack([1 - B, B], -1)
    ya, yb = px_a @ ch.y_given_x, px_b @ ch.y_given_x
    za, zb = px_a @ ch.z_given_x, px_b @ ch.z_given_x
    hy_x = H(ch.y_given_x)
    hz_x = H(ch.z_given_x)
    best = -np.inf
    for t in s:
        iwy = H(t * ya + (1 - t) * yb) - t * H(ya) - (1 - t) * H(yb)
        iwz = H(t * za + (1 - t) * zb) - t * H(za) - (1 - t) * H(zb)
        ixy0 = H(ya) - px_a @ hy_x
        ixz1 = H(zb) - px_b @ hz_x
        v = np.minimum(iwy, iwz) + (alpha - 1) * iwy + alpha * t * ixy0 + (1 - t) * ixz1
        best = max(best, float(v.max()))
    return best

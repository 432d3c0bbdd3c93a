"""Smooth compactly supported profiles and cutoffs.

Everything here is C-infinity with hand-coded derivatives, so downstream
modules can evaluate gradients and Laplacians of test fields in closed form
instead of finite-differencing them.
"""

import numpy as np
from scipy.integrate import quad


def _expm1_inv(t):
    # exp(-1/t) for t > 0, exactly 0 for t <= 0, overflow-free
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 1e-12
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly monotone between."""
    a = _expm1_inv(t)
    b = _expm1_inv(1.0 - np.asarray(t, dtype=float))
    return a / (a + b + 1e-300)


def smoothstep_d(t):
    """Derivative of smoothstep (vanishes to all orders at t = 0, 1)."""
    t = np.asarray(t, dtype=float)
    a = _expm1_inv(t)
    b = _expm1_inv(1.0 - t)
    s = a + b + 1e-300
    inner = (t > 1e-12) & (t < 1.0 - 1e-12)
    da = np.zeros_like(t)
    db = np.zeros_like(t)
    da[inner] = a[inner] / t[inner] ** 2
    db[inner] = -b[inner] / (1.0 - t[inner]) ** 2
    return (da * b - a * db) / s**2 * inner


def bump_profile(q):
    """f(q) = exp(-1/(1-q)) for q < 1, 0 for q >= 1.

    Used as a radial profile in the squared variable q = |x|^2 / R^2, which
    keeps the composition smooth through the origin.
    """
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    m = q < 1.0 - 1e-12
    out[m] = np.exp(-1.0 / (1.0 - q[m]))
    return out


def bump_profile_d(q):
    """f'(q) = -f(q) / (1-q)^2 on q < 1."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    m = q < 1.0 - 1e-12
    om = 1.0 - q[m]
    out[m] = -np.exp(-1.0 / om) / om**2
    return out


def bump_profile_dd(q):
    """f''(q) = f(q) (1/(1-q)^4 - 2/(1-q)^3) on q < 1."""
    q = np.asarray(q, dtype=float)
    out = np.zeros_like(q)
    m = q < 1.0 - 1e-12
    om = 1.0 - q[m]
    out[m] = np.exp(-1.0 / om) * (1.0 / om**4 - 2.0 / om**3)
    return out


# normalization for the standard mollifier chi(x) = c3 * f(|x|^2) on the unit
# ball of R^3, with integral 1
_MOLLIFIER_NORM = None


def mollifier_norm():
    global _MOLLIFIER_NORM
    if _MOLLIFIER_NORM is None:
        val, _ = quad(lambda r: bump_profile(r * r) * 4.0 * np.pi * r * r, 0.0, 1.0)
        _MOLLIFIER_NORM = 1.0 / val
    return _MOLLIFIER_NORM


def mollifier(points, delta):
    """chi_delta(x) = delta^-3 chi(x/delta), chi the normalized unit-ball bump.

    points: (..., 3) array. Returns values with the leading shape of points.
    """
    pts = np.asarray(points, dtype=float)
    q = np.sum(pts * pts, axis=-1) / delta**2
    return mollifier_norm() * bump_profile(q) / delta**3


def mollifier_symbol(kappa):
    """Fourier factor M(kappa) = int chi(y) cos(kappa e.y) dy of the unit mollifier.

    Radial formula: M(k) = (4 pi / k) int_0^1 c3 f(r^2) r sin(k r) dr. Scaling:
    mollifying sin(k.x) at scale delta multiplies it by M(delta |k|).
    """
    kappa = float(kappa)
    c3 = mollifier_norm()
    if abs(kappa) < 1e-9:
        return 1.0
    val, _ = quad(
        lambda r: c3 * bump_profile(r * r) * 4.0 * np.pi * r * np.sin(kappa * r) / kappa,
        0.0,
        1.0,
        limit=200,
    )
    return val


class RadialBump:
    """A e^{-1/(1-q)} bump with q = |x-c|^2/R^2: value, gradient, hessian, laplacian."""

    def __init__(self, center, radius, amplitude=1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.amplitude = float(amplitude)

    def value(self, points):
        d = np.asarray(points, dtype=float) - self.center
        q = np.sum(d * d, axis=-1) / self.radius**2
        return self.amplitude * bump_profile(q)

    def gradient(self, points):
        d = np.asarray(points, dtype=float) - self.center
        q = np.sum(d * d, axis=-1) / self.radius**2
        fp = bump_profile_d(q)
        return self.amplitude * (2.0 / self.radius**2) * fp[..., None] * d

    def laplacian(self, points):
        d = np.asarray(points, dtype=float) - self.center
        r2 = np.sum(d * d, axis=-1)
        q = r2 / self.radius**2
        fp = bump_profile_d(q)
        fpp = bump_profile_dd(q)
        return self.amplitude * (4.0 * r2 / self.radius**4 * fpp + 6.0 / self.radius**2 * fp)

    def hessian(self, points):
        d = np.asarray(points, dtype=float) - self.center
        q = np.sum(d * d, axis=-1) / self.radius**2
        fp = bump_profile_d(q)
        fpp = bump_profile_dd(q)
        eye = np.eye(3)
        outer = d[..., :, None] * d[..., None, :]
        return self.amplitude * (
            (2.0 / self.radius**2) * fp[..., None, None] * eye
            + (4.0 / self.radius**4) * fpp[..., None, None] * outer
        )

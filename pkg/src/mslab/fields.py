"""Coefficient fields W, V and synthetic presets.

Vector fields expose value(points) -> (..., 3) and divergence(points); the
presets used as reconstruction ground truth also expose curl(points). All
derivatives are hand-coded (chain rule on the bump profile or trig identities)
so that oracles never depend on grid differencing.
"""

import numpy as np
from scipy.ndimage import map_coordinates

from .bumps import RadialBump, mollifier_symbol


class VectorField:
    def value(self, points):
        raise NotImplementedError

    def divergence(self, points):
        raise NotImplementedError

    def __call__(self, points):
        return self.value(points)

    def __add__(self, other):
        return SumVector(self, other)

    def __mul__(self, scalar):
        return ScaledVector(self, scalar)

    __rmul__ = __mul__


class SumVector(VectorField):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def value(self, points):
        return self.a.value(points) + self.b.value(points)

    def divergence(self, points):
        return self.a.divergence(points) + self.b.divergence(points)

    def curl(self, points):
        return self.a.curl(points) + self.b.curl(points)


class ScaledVector(VectorField):
    def __init__(self, f, c):
        self.f, self.c = f, c

    def value(self, points):
        return self.c * self.f.value(points)

    def divergence(self, points):
        return self.c * self.f.divergence(points)

    def curl(self, points):
        return self.c * self.f.curl(points)


class ConstantVector(VectorField):
    def __init__(self, vec):
        self.vec = np.asarray(vec)

    def value(self, points):
        shape = np.asarray(points).shape[:-1]
        return np.broadcast_to(self.vec, shape + (3,)).copy()

    def divergence(self, points):
        return np.zeros(np.asarray(points).shape[:-1], dtype=self.vec.dtype)

    def curl(self, points):
        return np.zeros(np.asarray(points).shape[:-1] + (3,), dtype=self.vec.dtype)

    def jacobian(self, points):
        return np.zeros(np.asarray(points).shape[:-1] + (3, 3), dtype=self.vec.dtype)

    def div_gradient(self, points):
        return np.zeros(np.asarray(points).shape[:-1] + (3,), dtype=self.vec.dtype)


class ZeroVector(ConstantVector):
    def __init__(self):
        super().__init__(np.zeros(3))


class TrigVector(VectorField):
    """Sum of plane waves: W(x) = sum_m amp[m] * sin(k[m].x + phase[m]) * e[m].

    amp may be complex. Divergence and curl are exact trig identities, and
    mollification against chi_delta has the closed form amp -> amp*M(delta|k|).
    """

    def __init__(self, amps, kvecs, phases, directions):
        self.amps = np.asarray(amps)
        self.kvecs = np.asarray(kvecs, dtype=float)
        self.phases = np.asarray(phases, dtype=float)
        self.dirs = np.asarray(directions, dtype=float)

    @classmethod
    def random(cls, n_modes=4, kmax=2.0, seed=0, complex_amps=False):
        rng = np.random.default_rng(seed)
        amps = rng.uniform(0.3, 1.0, n_modes)
        if complex_amps:
            amps = amps * np.exp(1j * rng.uniform(0, 2 * np.pi, n_modes))
        kvecs = rng.uniform(-kmax, kmax, (n_modes, 3))
        phases = rng.uniform(0, 2 * np.pi, n_modes)
        dirs = rng.normal(size=(n_modes, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return cls(amps, kvecs, phases, dirs)

    def _angles(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.kvecs.T + self.phases  # (..., m)

    def value(self, points):
        s = np.sin(self._angles(points))
        return np.tensordot(s, self.amps[:, None] * self.dirs, axes=(-1, 0))

    def divergence(self, points):
        c = np.cos(self._angles(points))
        kd = np.sum(self.kvecs * self.dirs, axis=1)
        return np.tensordot(c, self.amps * kd, axes=(-1, 0))

    def curl(self, points):
        c = np.cos(self._angles(points))
        kxd = np.cross(self.kvecs, self.dirs)
        return np.tensordot(c, self.amps[:, None] * kxd, axes=(-1, 0))

    def jacobian(self, points):
        """J[..., j, i] = dW_j / dx_i."""
        c = np.cos(self._angles(points))
        dk = self.dirs[:, :, None] * self.kvecs[:, None, :]  # (m, j, i)
        return np.tensordot(c, self.amps[:, None, None] * dk, axes=(-1, 0))

    def div_gradient(self, points):
        """grad of div W."""
        s = np.sin(self._angles(points))
        kd = np.sum(self.kvecs * self.dirs, axis=1)
        return np.tensordot(s, -self.amps[:, None] * kd[:, None] * self.kvecs, axes=(-1, 0))

    def mollified(self, delta):
        """Exact convolution with chi_delta (plane waves are eigenfunctions)."""
        factors = np.array([mollifier_symbol(delta * np.linalg.norm(k)) for k in self.kvecs])
        return TrigVector(self.amps * factors, self.kvecs, self.phases, self.dirs)


class LacunaryVector(VectorField):
    """Hoelder-eps rough field: sum_j ratio^{-eps j} sin(k0 ratio^j u_j . x + phi_j) e_j.

    Geometric frequencies with amplitude freq^{-eps} give nominal C^eps
    regularity (Weierstrass type). ratio=2 is the classic dyadic ladder; a
    ratio close to 1 packs frequencies densely enough that mollification at
    scale delta shows the delta^(eps-1) derivative law over narrow delta
    ranges. mollified(delta) is closed form like TrigVector.
    """

    def __init__(self, eps, n_scales=9, k0=1.0, seed=0, ratio=2.0):
        rng = np.random.default_rng(seed)
        amps, kvecs, phases, dirs = [], [], [], []
        for k in range(n_scales):
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            amps.append(ratio ** (-eps * k))
            kvecs.append(k0 * ratio**k * u)
            phases.append(rng.uniform(0, 2 * np.pi))
            d = rng.normal(size=3)
            dirs.append(d / np.linalg.norm(d))
        self.eps = eps
        self._trig = TrigVector(amps, kvecs, phases, dirs)

    def value(self, points):
        return self._trig.value(points)

    def divergence(self, points):
        return self._trig.divergence(points)

    def curl(self, points):
        return self._trig.curl(points)

    def jacobian(self, points):
        return self._trig.jacobian(points)

    def div_gradient(self, points):
        return self._trig.div_gradient(points)

    def mollified(self, delta):
        return self._trig.mollified(delta)


class SolenoidalBumps(VectorField):
    """W = sum_i grad(eta_i) x v_i: exactly divergence free, compact support."""

    def __init__(self, bumps, vecs):
        self.bumps = list(bumps)
        self.vecs = [np.asarray(v, dtype=float) for v in vecs]

    @classmethod
    def random(cls, centers, radius, seed=0, scale=1.0):
        rng = np.random.default_rng(seed)
        bumps = [RadialBump(c, radius, scale) for c in centers]
        vecs = [rng.normal(size=3) for _ in centers]
        return cls(bumps, vecs)

    def value(self, points):
        out = 0.0
        for b, v in zip(self.bumps, self.vecs):
            out = out + np.cross(b.gradient(points), np.broadcast_to(v, np.shape(points)))
        return out

    def divergence(self, points):
        return np.zeros(np.asarray(points).shape[:-1])

    def curl(self, points):
        # curl(grad eta x v) = -v lap(eta) + Hess(eta) v for constant v
        out = 0.0
        for b, v in zip(self.bumps, self.vecs):
            lap = b.laplacian(points)
            hv = b.hessian(points) @ v
            out = out + hv - lap[..., None] * v
        return out


class GradientField(VectorField):
    """W = grad p for p a sum of interior radial bumps (so p = 0 on the boundary)."""

    def __init__(self, bumps):
        self.bumps = list(bumps)

    def potential(self, points):
        return sum(b.value(points) for b in self.bumps)

    def value(self, points):
        return sum(b.gradient(points) for b in self.bumps)

    def divergence(self, points):
        return sum(b.laplacian(points) for b in self.bumps)

    def curl(self, points):
        return np.zeros(np.asarray(points).shape[:-1] + (3,))


class CurlProbe(VectorField):
    """W = A b(x) (-(x2-c2), x1-c1, 0): a bump-localized constant-direction curl."""

    def __init__(self, center, radius, amplitude=1.0):
        self.bump = RadialBump(center, radius, 1.0)
        self.center = np.asarray(center, dtype=float)
        self.amplitude = float(amplitude)

    def _spin(self, points):
        d = np.asarray(points, dtype=float) - self.center
        out = np.zeros_like(d)
        out[..., 0] = -d[..., 1]
        out[..., 1] = d[..., 0]
        return out

    def value(self, points):
        return self.amplitude * self.bump.value(points)[..., None] * self._spin(points)

    def divergence(self, points):
        # div(bF) = grad b . F, and grad b is radial while F is tangential
        g = self.bump.gradient(points)
        return self.amplitude * np.sum(g * self._spin(points), axis=-1)

    def curl(self, points):
        b = self.bump.value(points)
        g = self.bump.gradient(points)
        f = self._spin(points)
        ez = np.zeros(np.asarray(points).shape[:-1] + (3,))
        ez[..., 2] = 2.0 * b
        return self.amplitude * (np.cross(g, f) + ez)


class ScalarField:
    def value(self, points):
        raise NotImplementedError

    def __call__(self, points):
        return self.value(points)


class ZeroScalar(ScalarField):
    def value(self, points):
        return np.zeros(np.asarray(points).shape[:-1])


class GaussianScalar(ScalarField):
    """V(x) = A exp(-|x-c|^2 / (2 tau^2)); plane integrals are closed form."""

    def __init__(self, center, tau, amplitude=1.0):
        self.center = np.asarray(center, dtype=float)
        self.tau = float(tau)
        self.amplitude = float(amplitude)

    def value(self, points):
        d = np.asarray(points, dtype=float) - self.center
        return self.amplitude * np.exp(-np.sum(d * d, axis=-1) / (2.0 * self.tau**2))

    def plane_integral(self, normal, offset):
        """Integral over the full plane {x . n = s}: 2 pi tau^2 A exp(-d^2/2tau^2)."""
        d = offset - float(np.dot(normal, self.center))
        return 2.0 * np.pi * self.tau**2 * self.amplitude * np.exp(-(d**2) / (2.0 * self.tau**2))


class BumpScalar(ScalarField):
    def __init__(self, center, radius, amplitude=1.0):
        self.bump = RadialBump(center, radius, amplitude)

    def value(self, points):
        return self.bump.value(points)

    def gradient(self, points):
        return self.bump.gradient(points)

    def laplacian(self, points):
        return self.bump.laplacian(points)


class GridVectorField(VectorField):
    """Vector field sampled on a Grid3, evaluated off-grid by cubic splines."""

    def __init__(self, grid, values):
        self.grid = grid
        self.values = np.asarray(values)  # (nx, ny, nz, 3)
        self._div = None

    def _coords(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return [(pts[:, i] - self.grid.axes[i][0]) / self.grid.spacing[i] for i in range(3)]

    def _interp(self, arr, points):
        coords = self._coords(points)
        if np.iscomplexobj(arr):
            re = map_coordinates(arr.real, coords, order=3, mode="nearest")
            im = map_coordinates(arr.imag, coords, order=3, mode="nearest")
            return re + 1j * im
        return map_coordinates(arr, coords, order=3, mode="nearest")

    def value(self, points):
        shape = np.asarray(points).shape[:-1]
        out = np.stack([self._interp(self.values[..., c], points) for c in range(3)], axis=-1)
        return out.reshape(shape + (3,))

    def divergence(self, points):
        if self._div is None:
            h = self.grid.spacing
            self._div = sum(
                np.gradient(self.values[..., c], h[c], axis=c, edge_order=2) for c in range(3)
            )
        shape = np.asarray(points).shape[:-1]
        return self._interp(self._div, points).reshape(shape)

import numpy as np
import pytest
from scipy.integrate import quad

from mslab import bumps
from mslab.fields import (
    ConstantVector,
    CurlProbe,
    GradientField,
    LacunaryVector,
    SolenoidalBumps,
    TrigVector,
)


def fd_vec(fn, pts, h=1e-6):
    out = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out.append((fn(pts + e) - fn(pts - e)) / (2 * h))
    return np.stack(out, axis=-1)


def test_smoothstep_endpoints_and_derivative():
    t = np.linspace(-0.5, 1.5, 201)
    s = bumps.smoothstep(t)
    assert np.all(s[t <= 0] == 0)
    assert np.all(s[t >= 1] == 1)
    assert np.all(np.diff(s[(t > 0.1) & (t < 0.9)]) > 0)
    assert np.all(np.diff(s[(t > 0) & (t < 1)]) >= 0)
    tt = np.linspace(0.05, 0.95, 37)
    fd = (bumps.smoothstep(tt + 1e-6) - bumps.smoothstep(tt - 1e-6)) / 2e-6
    assert np.abs(fd - bumps.smoothstep_d(tt)).max() < 1e-6


def test_mollifier_normalized():
    val, _ = quad(lambda r: bumps.mollifier_norm() * bumps.bump_profile(r * r) * 4 * np.pi * r * r, 0, 1)
    assert abs(val - 1.0) < 1e-10
    assert abs(bumps.mollifier_symbol(0.0) - 1.0) < 1e-12
    # decays with frequency
    assert bumps.mollifier_symbol(8.0) < bumps.mollifier_symbol(2.0) < 1.0


def test_radial_bump_calculus():
    rng = np.random.default_rng(0)
    b = bumps.RadialBump((0.2, -0.1, 2.0), 0.8, amplitude=1.7)
    pts = rng.uniform(-0.4, 0.4, (50, 3)) + np.array([0.2, -0.1, 2.0])
    g_fd = fd_vec(b.value, pts)
    assert np.abs(g_fd - b.gradient(pts)).max() < 1e-5
    lap_fd = sum(
        (b.value(pts + 1e-4 * e) - 2 * b.value(pts) + b.value(pts - 1e-4 * e)) / 1e-8
        for e in np.eye(3)
    )
    assert np.abs(lap_fd - b.laplacian(pts)).max() < 1e-4
    h_fd = fd_vec(b.gradient, pts)
    assert np.abs(h_fd - b.hessian(pts)).max() < 1e-4


@pytest.mark.parametrize("W", [
    TrigVector.random(4, seed=1),
    TrigVector.random(3, seed=2, complex_amps=True),
    LacunaryVector(0.3, n_scales=5, seed=3),
    SolenoidalBumps.random([(0, 0, 2.0), (0.3, 0.1, 1.8)], 0.7, seed=4),
    CurlProbe((0, 0, 2.0), 0.9, 1.3),
    GradientField([bumps.RadialBump((0, 0, 2.0), 0.7)]),
])
def test_vector_field_calculus(W):
    rng = np.random.default_rng(7)
    pts = rng.uniform(-0.5, 0.5, (40, 3)) + np.array([0, 0, 2.0])
    div_fd = sum(fd_vec(lambda p: W.value(p)[..., j], pts)[..., j] for j in range(3))
    assert np.abs(div_fd - W.divergence(pts)).max() < 2e-5
    if hasattr(W, "curl"):
        g = [fd_vec(lambda p: W.value(p)[..., j], pts) for j in range(3)]
        curl_fd = np.stack(
            [g[2][:, 1] - g[1][:, 2], g[0][:, 2] - g[2][:, 0], g[1][:, 0] - g[0][:, 1]],
            axis=-1,
        )
        assert np.abs(curl_fd - W.curl(pts)).max() < 2e-5


def test_trig_jacobian_and_divgrad():
    W = TrigVector.random(4, seed=5, complex_amps=True)
    rng = np.random.default_rng(8)
    pts = rng.uniform(-1, 1, (30, 3))
    jac_fd = np.stack([fd_vec(lambda p: W.value(p)[..., j], pts) for j in range(3)], axis=1)
    assert np.abs(jac_fd - W.jacobian(pts)).max() < 1e-5
    dg_fd = fd_vec(W.divergence, pts)
    assert np.abs(dg_fd - W.div_gradient(pts)).max() < 1e-5


def test_solenoidal_exactly_divergence_free():
    W = SolenoidalBumps.random([(0, 0, 2.0)], 0.8, seed=9)
    pts = np.random.default_rng(1).uniform(-0.5, 0.5, (100, 3)) + np.array([0, 0, 2.0])
    assert np.abs(W.divergence(pts)).max() == 0.0


def test_trig_mollified_matches_quadrature_oracle():
    # closed-form mollification of a plane wave vs direct 3D quadrature
    W = TrigVector([1.0], [[0.0, 1.3, 0.0]], [0.4], [[1.0, 0.0, 0.0]])
    delta = 0.5
    Wm = W.mollified(delta)
    x0 = np.array([[0.2, 0.5, 1.9]])
    # oracle: radial quadrature of the mollifier against the shifted wave
    from scipy.integrate import tplquad

    val, _ = tplquad(
        lambda z, y, x: bumps.mollifier(np.array([x, y, z]), delta)
        * np.sin(1.3 * (0.5 - y) + 0.4),
        -delta, delta, -delta, delta, -delta, delta, epsabs=1e-10,
    )
    assert abs(Wm.value(x0)[0, 0] - val) < 1e-6


def test_constant_field_trivia():
    W = ConstantVector((1.0, 2.0, -1.0))
    pts = np.zeros((5, 3))
    assert np.all(W.value(pts) == np.array([1.0, 2.0, -1.0]))
    assert np.all(W.divergence(pts) == 0)

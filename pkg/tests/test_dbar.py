import numpy as np
import pytest
from scipy.integrate import dblquad

from mslab import dbar


def _quad_cell(x0, x1, y0, y1):
    re = dblquad(lambda y, x: x / (x * x + y * y), x0, x1, y0, y1, epsabs=1e-12)[0]
    im = dblquad(lambda y, x: -y / (x * x + y * y), x0, x1, y0, y1, epsabs=1e-12)[0]
    return re + 1j * im


def test_cell_integral_vs_quadrature():
    rng = np.random.default_rng(1)
    for _ in range(4):
        x0, y0 = rng.uniform(-2, 1.5, 2)
        x1, y1 = x0 + rng.uniform(0.1, 1.0), y0 + rng.uniform(0.1, 1.0)
        got = dbar.rect_inv_z_integral(x0, x1, y0, y1)
        assert abs(got - _quad_cell(x0, x1, y0, y1)) < 1e-12


def test_cell_integral_branch_cut_straddle():
    got = dbar.rect_inv_z_integral(-1.6, -1.3, -0.1, 0.2)
    assert abs(got - _quad_cell(-1.6, -1.3, -0.1, 0.2)) < 1e-12


def test_cell_integral_singular_cell():
    # symmetric singular cell vanishes by antisymmetry of 1/z
    assert abs(dbar.rect_inv_z_integral(-0.3, 0.3, -0.2, 0.2)) < 1e-14
    # off-center cell containing 0: check against the sum of 4 corner pieces,
    # each with the singularity at a rectangle corner (integrable for dblquad)
    x0, x1, y0, y1 = -0.11, 0.31, -0.23, 0.17
    parts = (
        _quad_cell(x0, 0, y0, 0) + _quad_cell(0, x1, y0, 0)
        + _quad_cell(x0, 0, 0, y1) + _quad_cell(0, x1, 0, y1)
    )
    assert abs(dbar.rect_inv_z_integral(x0, x1, y0, y1) - parts) < 1e-9


def _manufactured(n, box=6.0):
    g = dbar.ComplexGrid2.from_box((-box, box), (-box, box), n, n)
    zz = g.zz
    f = (1 - np.abs(zz) ** 2) * np.exp(-np.abs(zz) ** 2)
    f[np.abs(zz) > box - 0.5] = 0.0
    exact = np.conj(zz) * np.exp(-np.abs(zz) ** 2)
    return dbar.ComplexGrid2(g.x, g.y, f), exact


def test_cauchy_solve_zero():
    f = dbar.ComplexGrid2.from_box((-1, 1), (-1, 1), 32, 32)
    u = dbar.cauchy_solve(f)
    assert np.abs(u.values).max() == 0.0


def test_cauchy_solve_manufactured_and_order():
    errs = {}
    for n in (128, 256, 512):
        f, exact = _manufactured(n)
        u = dbar.cauchy_solve(f)
        errs[n] = np.linalg.norm(u.values - exact) / np.linalg.norm(exact)
    assert errs[256] < 2e-2
    assert errs[256] < 0.6 * errs[128]
    order = np.log(errs[128] / errs[512]) / np.log(4.0)
    assert order >= 1.5


def test_cauchy_solve_spectral_accuracy():
    f, exact = _manufactured(128)
    u = dbar.cauchy_solve_spectral(f)
    assert np.linalg.norm(u.values - exact) / np.linalg.norm(exact) < 1e-10


def test_cauchy_solve_dbar_consistency():
    # forward-difference check: dbar(u) recovers a smoothed disk source
    n = 256
    g = dbar.ComplexGrid2.from_box((-3, 3), (-3, 3), n, n)
    zz = g.zz
    f = (1.0 / (1.0 + np.exp((np.abs(zz) - 1.0) / 0.1))).astype(complex)
    f[np.abs(zz) > 2.5] = 0.0
    u = dbar.cauchy_solve(dbar.ComplexGrid2(g.x, g.y, f))
    res = u.dbar() - f
    inner = np.abs(zz) < 2.0
    assert np.abs(res[inner]).max() < 2e-2


def test_cauchy_solve_support_guard():
    g = dbar.ComplexGrid2.from_box((-1, 1), (-1, 1), 32, 32)
    vals = np.ones((32, 32), complex)
    with pytest.raises(dbar.DbarError):
        dbar.cauchy_solve(dbar.ComplexGrid2(g.x, g.y, vals))


def test_cauchy_solve_linearity():
    f1, _ = _manufactured(64)
    g = dbar.ComplexGrid2(f1.x, f1.y, 1j * f1.values**2)
    u1 = dbar.cauchy_solve(f1).values
    u2 = dbar.cauchy_solve(g).values
    comb = dbar.ComplexGrid2(f1.x, f1.y, 2.0 * f1.values + g.values)
    u12 = dbar.cauchy_solve(comb).values
    assert np.abs(u12 - 2 * u1 - u2).max() < 1e-10 * max(1, np.abs(u12).max())


def test_cauchy_integral_cauchy_formula():
    c = dbar.Contour.circle(0, 1.0, 512)
    one = np.ones(len(c))
    assert abs(dbar.cauchy_integral(c, one, 0.0) - 1.0) < 1e-12
    assert abs(dbar.cauchy_integral(c, one, 2.0)) < 1e-12
    assert abs(dbar.cauchy_integral(c, c.nodes**2, 0.3) - 0.09) < 1e-6
    # wbar = 1/w on |w|=1: integral picks the z-independent coefficient 0
    assert abs(dbar.cauchy_integral(c, np.conj(c.nodes), 0.0)) < 1e-12


def test_cauchy_integral_proximity_guard():
    c = dbar.Contour.circle(0, 1.0, 64)
    with pytest.raises(dbar.DbarError):
        dbar.cauchy_integral(c, np.ones(len(c)), 0.999)


def test_plemelj_interior_limit():
    # holomorphic data: for f holomorphic, f/2 + PV = f, so the interior
    # limit of the Cauchy integral approaches the boundary value
    c = dbar.Contour.circle(0, 1.0, 1024)
    f = c.nodes**2
    w0 = np.exp(1j * 0.7)
    errs = []
    for k in (24, 12, 6, 3):
        z = (1.0 - k * c.spacing) * w0
        F = dbar.cauchy_integral(c, f, z)
        assert abs(F - z**2) < 1e-8  # quadrature exact away from the contour
        errs.append(abs(F - w0**2))
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.05


def test_winding_and_log():
    c = dbar.Contour.circle(0, 1.0, 256)
    w, d, L = dbar.winding_and_log(c, c.nodes)
    assert w == 1 and d < 1e-10 and L is None
    w, d, L = dbar.winding_and_log(c, np.full(len(c), 5.0 + 0j))
    assert w == 0 and np.abs(np.exp(L) - 5.0).max() < 1e-8
    # homotopy family F = exp(i s Phi): winding 0 along the sweep
    phi = np.sin(3 * np.angle(c.nodes)) + 0.5 * np.cos(np.angle(c.nodes))
    for s in np.linspace(0, 1, 6):
        w, d, L = dbar.winding_and_log(c, np.exp(1j * s * phi))
        assert w == 0
        assert np.abs(np.exp(L) - np.exp(1j * s * phi)).max() < 1e-8


def test_winding_refinement_guard():
    c = dbar.Contour.circle(0, 1.0, 6)
    with pytest.raises(dbar.DbarError):
        dbar.winding_and_log(c, c.nodes**3)


def test_winding_vanishing_guard():
    c = dbar.Contour.circle(0, 1.0, 64)
    vals = c.nodes - 1.0  # hits 0 at angle 0
    with pytest.raises(dbar.DbarError):
        dbar.winding_and_log(c, vals)


def test_argument_principle_zero_counts():
    c = dbar.Contour.circle(0, 1.0, 512)
    assert dbar.argument_principle_zeros([c], [c.nodes - 0.3]) == 1
    G = np.exp(0.3 * c.nodes + 0.1j)
    assert dbar.argument_principle_zeros([c], [G]) == 0
    # annulus: outer CCW + inner CW, F = 1 + 0.1 z has no zeros inside
    outer = dbar.Contour.circle(0, 1.0, 512)
    inner = dbar.Contour.circle(0, 0.4, 512).reversed()
    F = [1 + 0.1 * outer.nodes, 1 + 0.1 * inner.nodes]
    assert dbar.argument_principle_zeros([outer, inner], F) == 0
    # oracle: the only root of 1 + 0.1 z is z = -10, outside the annulus
    assert not (0.4 < abs(-10.0) < 1.0)


def test_contour_winding_number_geometry():
    c = dbar.Contour.circle(0.5, 1.0, 128)
    assert c.winding_number(0.5) == 1
    assert c.winding_number(3.0) == 0
    assert c.reversed().winding_number(0.5) == -1


def test_grid_dump_roundtrip(tmp_path):
    import json

    f, _ = _manufactured(32)
    path = tmp_path / "grid.bin"
    dbar.dump_grid(f, path)
    side = json.loads((tmp_path / "grid.bin.json").read_text())
    assert side["nx"] == 32 and side["ny"] == 32
    raw = np.fromfile(path, dtype=np.complex128, offset=16).reshape(32, 32)
    assert np.abs(raw - f.values).max() == 0.0

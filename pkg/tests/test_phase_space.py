import numpy as np
import pytest

from mslab import phase_space as ps
from mslab.fields import LacunaryVector, TrigVector, ZeroVector


def sample_U(n, delta=0.05, seed=0, st=0.5):
    rng = np.random.default_rng(seed)
    y1 = rng.uniform(-delta, delta, n)
    y2 = 1.0 + rng.uniform(-delta, delta, n)
    c1 = rng.uniform(0.55, 1.25, n)
    c2 = rng.uniform(-0.35, 0.35, n)
    s = rng.uniform(-st, st, n)
    t = rng.uniform(-st, st, n)
    return ps.flow_coords_inv(y1, y2, c1, c2, s, t)


def test_symbol_identities():
    x, xi = sample_U(200)
    m = np.sum(x * x, -1)
    a = ps.SYMBOLS["a"](x, xi)
    b = ps.SYMBOLS["b"](x, xi)
    ma = ps.SYMBOLS["ma"](x, xi)
    mb = ps.SYMBOLS["mb"](x, xi)
    assert np.abs(m * a - ma).max() < 1e-12
    assert np.abs(m * b - mb).max() < 1e-12
    assert np.abs(ma - (m * np.sum(xi * xi, -1) - 1.0)).max() < 1e-12
    assert np.abs(mb - 2 * np.sum(x * xi, -1)).max() < 1e-12


def test_symbol_gradients_vs_fd():
    x, xi = sample_U(40, seed=3)
    for name in ("a", "b", "ma", "mb"):
        sym = ps.SYMBOLS[name]
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1e-6
            fd_x = (sym(x + e, xi) - sym(x - e, xi)) / 2e-6
            fd_xi = (sym(x, xi + e) - sym(x, xi - e)) / 2e-6
            assert np.abs(fd_x - sym.grad_x(x, xi)[:, k]).max() < 1e-5
            assert np.abs(fd_xi - sym.grad_xi(x, xi)[:, k]).max() < 1e-5


def test_flow_identity_at_zero():
    x, xi = sample_U(50, seed=1)
    xa, xia = ps.flow_ma(0.0, x, xi)
    assert np.abs(xa - x).max() < 1e-14 and np.abs(xia - xi).max() < 1e-14
    xb, xib = ps.flow_mb(0.0, x, xi)
    assert np.abs(xb - x).max() < 1e-14 and np.abs(xib - xi).max() < 1e-14


def test_flow_mb_example():
    x, xi = np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]])
    xb, xib = ps.flow_mb(np.log(2.0) / 2.0, x, xi)
    assert np.abs(xb - [[0, 0, 2.0]]).max() < 1e-14
    assert np.abs(xib - [[0.5, 0, 0]]).max() < 1e-14


def test_flow_invariants():
    x, xi = sample_U(1000, seed=2)
    s = np.random.default_rng(5).uniform(-1, 1, 1000)
    xa, xia = ps.flow_ma(s, x, xi)
    y1 = np.sum(x * xi, -1)
    y2 = np.linalg.norm(x, axis=1) * np.linalg.norm(xi, axis=1)
    assert np.abs(np.sum(xa * xia, -1) - y1).max() < 1e-10
    assert np.abs(np.linalg.norm(xa, axis=1) * np.linalg.norm(xia, axis=1) - y2).max() < 1e-10
    n0 = np.cross(x, xi)
    n0 /= np.linalg.norm(n0, axis=1, keepdims=True)
    n1 = np.cross(xa, xia)
    n1 /= np.linalg.norm(n1, axis=1, keepdims=True)
    assert np.abs(n0 - n1).max() < 1e-10


def _rk4(field, x, xi, s_target, nstep):
    h = s_target / nstep
    for _ in range(nstep):
        k1 = field(x, xi)
        k2 = field(x + h / 2 * k1[0], xi + h / 2 * k1[1])
        k3 = field(x + h / 2 * k2[0], xi + h / 2 * k2[1])
        k4 = field(x + h * k3[0], xi + h * k3[1])
        x = x + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        xi = xi + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return x, xi


def test_flows_match_rk4():
    x, xi = sample_U(40, seed=4)
    xr, xir = _rk4(ps.hamilton_ma, x, xi, 0.8, 800)
    xc, xic = ps.flow_ma(0.8, x, xi)
    assert max(np.abs(xr - xc).max(), np.abs(xir - xic).max()) < 1e-6
    xr, xir = _rk4(ps.hamilton_mb, x, xi, 0.6, 600)
    xc, xic = ps.flow_mb(0.6, x, xi)
    assert max(np.abs(xr - xc).max(), np.abs(xir - xic).max()) < 1e-6


def test_flow_ode_consistency():
    # finite-difference time derivative of the closed form matches H_ma
    x, xi = sample_U(30, seed=6)
    eps = 1e-5
    xp, xip = ps.flow_ma(eps, x, xi)
    xm, xim = ps.flow_ma(-eps, x, xi)
    vx, vxi = ps.hamilton_ma(x, xi)
    assert np.abs((xp - xm) / (2 * eps) - vx).max() < 1e-6
    assert np.abs((xip - xim) / (2 * eps) - vxi).max() < 1e-6


def test_flows_commute():
    x, xi = sample_U(200, seed=7)
    a = ps.flow_ma(0.3, *ps.flow_mb(0.2, x, xi))
    b = ps.flow_mb(0.2, *ps.flow_ma(0.3, x, xi))
    assert np.abs(a[0] - b[0]).max() < 1e-8
    assert np.abs(a[1] - b[1]).max() < 1e-8


def test_flow_degenerate_plane_error():
    x = np.array([[0.0, 0.0, 1.0]])
    with pytest.raises(ps.DegeneratePlaneError):
        ps.flow_ma(0.1, x, 2.0 * x)


def test_flow_coords_roundtrip():
    rng = np.random.default_rng(8)
    n = 1000
    y = (
        rng.uniform(-0.05, 0.05, n),
        1 + rng.uniform(-0.05, 0.05, n),
        rng.uniform(0.55, 1.25, n),
        rng.uniform(-0.35, 0.35, n),
        rng.uniform(-0.5, 0.5, n),
        rng.uniform(-0.5, 0.5, n),
    )
    x, xi = ps.flow_coords_inv(*y)
    back = ps.flow_coords(x, xi)
    for want, got in zip(y, back):
        assert np.abs(want - got).max() < 1e-9


def test_flow_coords_base_point():
    x, xi = ps.flow_coords_inv(0.02, 1.01, 0.8, 0.1, 0.0, 0.0)
    y = ps.flow_coords(x[None], xi[None])
    assert abs(y[4][0]) < 1e-12 and abs(y[5][0]) < 1e-12


def test_same_leaf_same_labels():
    # two points joined by random flows share (y1, y2, chart)
    x, xi = sample_U(100, seed=9)
    rng = np.random.default_rng(10)
    xa, xia = ps.flow_ma(rng.uniform(-0.3, 0.3, 100), x, xi)
    xa, xia = ps.flow_mb(rng.uniform(-0.3, 0.3, 100), xa, xia)
    y0 = ps.flow_coords(x, xi)
    y1 = ps.flow_coords(xa, xia)
    for k in range(4):
        assert np.abs(y0[k] - y1[k]).max() < 1e-9
    assert np.abs(np.stack(y0[4:]) - np.stack(y1[4:])).max() > 1e-3


def test_sigma_characterization():
    n = 100
    rng = np.random.default_rng(11)
    x, xi = ps.flow_coords_inv(
        np.zeros(n), np.ones(n), rng.uniform(0.55, 1.25, n),
        rng.uniform(-0.35, 0.35, n), rng.uniform(-0.5, 0.5, n), rng.uniform(-0.5, 0.5, n)
    )
    a = ps.SYMBOLS["a"](x, xi)
    b = ps.SYMBOLS["b"](x, xi)
    assert (np.abs(a) + np.abs(b)).max() < 1e-10
    # conversely: a = b = 0 forces y1 = 0, y2 = 1
    xg, xig = sample_U(500, seed=12)
    ag = ps.SYMBOLS["a"](xg, xig)
    bg = ps.SYMBOLS["b"](xg, xig)
    on_sigma = (np.abs(ag) + np.abs(bg)) < 1e-10
    y1 = np.sum(xg * xig, -1)
    y2 = np.linalg.norm(xg, axis=1) * np.linalg.norm(xig, axis=1)
    assert np.all(np.abs(y1[on_sigma]) < 1e-9)
    assert np.all(np.abs(y2[on_sigma] - 1) < 1e-9)


def test_poisson_brackets():
    x, xi = sample_U(1000, seed=13)
    br = ps.poisson_bracket(ps.SYMBOLS["ma"], ps.SYMBOLS["mb"], x, xi)
    assert np.abs(br).max() < 1e-12
    # finite-difference route
    br_fd = ps.poisson_bracket(
        lambda a, b: ps.SYMBOLS["ma"](a, b), lambda a, b: ps.SYMBOLS["mb"](a, b), x[:200], xi[:200]
    )
    assert np.abs(br_fd).max() < 1e-6
    # {a, b} on Sigma
    n = 200
    rng = np.random.default_rng(14)
    xs, xis = ps.flow_coords_inv(
        np.zeros(n), np.ones(n), rng.uniform(0.55, 1.25, n),
        rng.uniform(-0.35, 0.35, n), rng.uniform(-0.4, 0.4, n), rng.uniform(-0.4, 0.4, n)
    )
    bab = ps.poisson_bracket(ps.SYMBOLS["a"], ps.SYMBOLS["b"], xs, xis)
    assert np.abs(bab).max() < 1e-6
    # antisymmetry
    baa = ps.poisson_bracket(ps.SYMBOLS["a"], ps.SYMBOLS["a"], x, xi)
    assert np.abs(baa).max() == 0.0


GRID = ps.LeafGrid(delta=0.05, shape=(4, 4, 3, 3, 64, 64))


def test_solve_hmp_zero():
    u = ps.solve_hmp(lambda x, xi: np.zeros(x.shape[:-1]), grid=GRID)
    assert np.abs(u.values).max() == 0.0


def test_solve_hmp_f_one_residual():
    rep = {}
    ps.solve_hmp(lambda x, xi: np.ones(x.shape[:-1]), grid=GRID, report=rep)
    assert rep["max_residual_flat"] < 1e-3


def test_solve_hmp_manufactured():
    def f_man(x, xi):
        m = np.sum(x * x, -1)
        return (2 * m * xi[..., 0] + 2j * x[..., 0]) / m

    uf = ps.solve_hmp(f_man, grid=GRID)
    X, XI = GRID.points()
    Y1, Y2, C1, C2, S, T = GRID.coord_mesh()
    cutoff = ps.FlowCutoff(0.05, GRID.st_box)
    chi = cutoff.value(Y1, Y2, S, T)
    res = ps.PhaseField(GRID, uf.values - X[..., 0]).dst()
    m = np.sum(X * X, -1)
    target = (chi - 1.0) * m * f_man(X, XI)
    err = np.abs(res - target)
    assert err[cutoff.flat_mask(Y1, Y2, S, T)].max() < 1e-3


def test_solve_hmp_linearity():
    def f1(x, xi):
        return np.sin(x[..., 0]) * xi[..., 1]

    def f2(x, xi):
        return np.exp(1j * x[..., 2])

    u1 = ps.solve_hmp(f1, grid=GRID).values
    u2 = ps.solve_hmp(f2, grid=GRID).values
    u12 = ps.solve_hmp(lambda x, xi: 2.5 * f1(x, xi) + f2(x, xi), grid=GRID).values
    scale = np.abs(u12).max()
    assert np.abs(u12 - 2.5 * u1 - u2).max() < 1e-10 * max(1.0, scale)


def test_solve_hmp_derivative_bounds():
    # |d^alpha u| <= C ||f||_W^{k,inf}: report the constant, require finiteness
    def f_man(x, xi):
        return np.sin(x[..., 0] * xi[..., 1])

    u = ps.solve_hmp(f_man, grid=GRID)
    du = ps._fd_axis(u.values, GRID.hs, axis=4)
    d2u = ps._fd_axis(du, GRID.hs, axis=4)
    # ||f||_{W^2,inf} ~ (1 + |x xi|)^2 ~ O(10) on U; C stays desk-scale
    assert np.abs(u.values).max() < 50
    assert np.abs(du).max() < 200
    assert np.abs(d2u).max() < 2000


def test_conj_symbol_trivial():
    cs = ps.conj_symbol(ZeroVector(), h=0.05, sigma=0.25)
    x, xi = cs.sample_points(4, seed=1)
    out = cs.eval(x, xi)
    assert np.abs(out["phi"]).max() == 0.0
    assert np.abs(out["c"] - 1.0).max() == 0.0
    assert np.abs(out["l"]).max() == 0.0


def test_conj_symbol_residual_smooth():
    W = TrigVector.random(n_modes=3, kmax=1.5, seed=3)
    cs = ps.conj_symbol(W.mollified(0.05**0.25), h=0.05, sigma=0.25)
    rep = cs.residual_report(n=20, seed=2)
    assert rep["max_residual"] < 1e-3
    assert rep["min_abs_c"] > 0.5


def test_conj_symbol_sigma_guard():
    with pytest.raises(ValueError):
        ps.conj_symbol(ZeroVector(), h=0.1, sigma=0.7)


def test_conj_symbol_class_bound_and_source_growth():
    # |d_x c| obeys the h^-sigma class bound; the mollified source saturates
    # the h^{-sigma(1-eps)} law (the leaf transport gains one power of the
    # mollification scale, so phi's first derivatives stay bounded)
    sigma = 0.4
    W = LacunaryVector(eps=0.1, n_scales=14, k0=1.2, seed=5, ratio=1.25)
    cs = ps.ConjSymbol(W.mollified(0.2**sigma), 0.2, sigma)
    hs = [0.2, 0.1, 0.05]
    sups, slope = cs.derivative_growth(W, hs, n=12, seed=7)
    assert slope >= -sigma - 0.15  # no growth beyond the symbol class
    # source-side saturation: sup |dW_sharp| ~ h^{-sigma(1-eps)}
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (4000, 3))
    pts[:, 2] += 2.0
    src = [np.abs(W.mollified(h**sigma).jacobian(pts)).max() for h in hs]
    src_slope = np.polyfit(np.log(hs), np.log(src), 1)[0]
    assert abs(src_slope - (-sigma * (1 - 0.1))) < 0.1
    assert abs(src_slope - (-sigma)) < 0.15


def test_ellipticity_thresholds():
    W = TrigVector.random(n_modes=3, kmax=1.5, seed=3)
    mins_c, mins_ct = [], []
    for h in (0.1, 0.05, 0.02):
        cs = ps.conj_symbol(W.mollified(h**0.25), h=h, sigma=0.25)
        rep = cs.residual_report(n=10, seed=4)
        mins_c.append(rep["min_abs_c"])
        mins_ct.append(rep["min_abs_c_tilde"])
    assert min(mins_c) > 0.5
    assert mins_ct[-1] > 0.5  # c_tilde = c + h l is elliptic for small h

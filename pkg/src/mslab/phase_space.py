"""Phase-space machinery of the logarithmic limiting weight phi = log|x|.

Symbols (canonical frame, base point at the origin):

    a = xi^2 - 1/|x|^2,  b = 2 x.xi / |x|^2,  m = |x|^2,
    ma = |x|^2 |xi|^2 - 1,  mb = 2 x.xi.

The Hamilton flows of ma and mb commute and have closed forms; their joint
orbits (leaves) are labelled by y1 = x.xi, y2 = |x||xi| and the oriented plane
span(x, xi). Flow coordinates (y1, y2, plane chart, s, t) turn H_mp = H_ma +
i H_mb into d/ds + i d/dt, which the dbar module inverts per leaf.
"""

import numpy as np
from scipy.signal import fftconvolve

from . import dbar
from .bumps import smoothstep, smoothstep_d


class DegeneratePlaneError(ValueError):
    pass


class ChartError(ValueError):
    pass


def _norm(v):
    return np.linalg.norm(v, axis=-1)


def _dot(u, v):
    return np.sum(u * v, axis=-1)


def _unit(v):
    return v / _norm(v)[..., None]


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------

class Symbol:
    """A phase-space function with closed-form gradients."""

    def __init__(self, fn, grad_x, grad_xi, name=""):
        self.fn = fn
        self.grad_x = grad_x
        self.grad_xi = grad_xi
        self.name = name

    def __call__(self, x, xi):
        return self.fn(x, xi)


def _sym_a():
    return Symbol(
        lambda x, xi: _dot(xi, xi) - 1.0 / _dot(x, x),
        lambda x, xi: 2.0 * x / _dot(x, x)[..., None] ** 2,
        lambda x, xi: 2.0 * xi,
        "a",
    )


def _sym_b():
    def g_x(x, xi):
        r2 = _dot(x, x)[..., None]
        return 2.0 * xi / r2 - 4.0 * _dot(x, xi)[..., None] * x / r2**2

    return Symbol(
        lambda x, xi: 2.0 * _dot(x, xi) / _dot(x, x),
        g_x,
        lambda x, xi: 2.0 * x / _dot(x, x)[..., None],
        "b",
    )


def _sym_ma():
    return Symbol(
        lambda x, xi: _dot(x, x) * _dot(xi, xi) - 1.0,
        lambda x, xi: 2.0 * _dot(xi, xi)[..., None] * x,
        lambda x, xi: 2.0 * _dot(x, x)[..., None] * xi,
        "ma",
    )


def _sym_mb():
    return Symbol(
        lambda x, xi: 2.0 * _dot(x, xi),
        lambda x, xi: 2.0 * xi,
        lambda x, xi: 2.0 * x,
        "mb",
    )


SYMBOLS = {"a": _sym_a(), "b": _sym_b(), "ma": _sym_ma(), "mb": _sym_mb()}


def poisson_bracket(f, g, x, xi, step=1e-5):
    """{f, g} = grad_xi f . grad_x g - grad_x f . grad_xi g.

    f, g are Symbol objects (closed-form gradients) or plain callables
    f(x, xi), differentiated by central differences with the given step.
    """

    def grads(fun):
        if isinstance(fun, Symbol):
            return fun.grad_x(x, xi), fun.grad_xi(x, xi)
        gx = np.empty(np.shape(x), dtype=complex)
        gxi = np.empty(np.shape(x), dtype=complex)
        for k in range(3):
            e = np.zeros(3)
            e[k] = step
            gx[..., k] = (fun(x + e, xi) - fun(x - e, xi)) / (2 * step)
            gxi[..., k] = (fun(x, xi + e) - fun(x, xi - e)) / (2 * step)
        if not (np.iscomplexobj(gx)):
            gx, gxi = gx.real, gxi.real
        return gx, gxi

    fx, fxi = grads(f)
    gx, gxi = grads(g)
    return _dot(fxi, gx) - _dot(fx, gxi)


def in_U(x, xi, delta):
    y1 = _dot(x, xi)
    y2 = _norm(x) * _norm(xi)
    return (np.abs(y1) < delta) & (np.abs(y2 - 1.0) < delta)


# ---------------------------------------------------------------------------
# closed-form flows
# ---------------------------------------------------------------------------

def _plane_basis(x, xi, tol=1e-10):
    """Orthonormal oriented basis (xhat, xitilde) of span(x, xi)."""
    xhat = _unit(x)
    xi_perp = xi - _dot(xi, xhat)[..., None] * xhat
    npv = _norm(xi_perp)
    if np.any(npv < tol * np.maximum(_norm(xi), 1e-300)):
        raise DegeneratePlaneError("x and xi are (numerically) parallel: no oriented plane")
    return xhat, xi_perp / npv[..., None]


def _J(z, xhat, xit):
    # rotation by +90 degrees inside the oriented plane (xhat, xit)
    return -_dot(z, xit)[..., None] * xhat + _dot(z, xhat)[..., None] * xit


def flow_ma(s, x, xi):
    """Closed-form flow of H_ma = 2(|x|^2 xi.grad_x - |xi|^2 x.grad_xi)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    xhat, xit = _plane_basis(x, xi)
    y1 = _dot(x, xi)
    y2 = _norm(x) * _norm(xi)
    k = 2.0 * np.sqrt(np.maximum(y2**2 - y1**2, 0.0))
    cs = np.cos(k * s)[..., None]
    sn = np.sin(k * s)[..., None]
    ex = np.exp(2.0 * y1 * s)[..., None]
    xihat = _unit(xi)
    xnew = ex * _norm(x)[..., None] * (cs * xhat + sn * _J(xhat, xhat, xit))
    xinew = (1.0 / ex) * _norm(xi)[..., None] * (cs * xihat + sn * _J(xihat, xhat, xit))
    return xnew, xinew


def flow_mb(t, x, xi):
    """Flow of H_mb = 2(x.grad_x - xi.grad_xi): pure scaling."""
    e = np.exp(2.0 * t)
    e = np.asarray(e)[..., None] if np.ndim(t) else e
    return np.asarray(x) * e, np.asarray(xi) / e


def hamilton_ma(x, xi):
    """Vector field of H_ma, for independent ODE integration."""
    r2 = _dot(x, x)[..., None]
    k2 = _dot(xi, xi)[..., None]
    return 2.0 * r2 * xi, -2.0 * k2 * x


def hamilton_mb(x, xi):
    return 2.0 * np.asarray(x), -2.0 * np.asarray(xi)


# ---------------------------------------------------------------------------
# flow coordinates
# ---------------------------------------------------------------------------

def _stereographic(n):
    denom = 1.0 - n[..., 2]
    if np.any(np.abs(denom) < 1e-12):
        raise ChartError("plane lies in {x3 = 0}: stereographic chart undefined")
    return n[..., 0] / denom, n[..., 1] / denom


def _stereographic_inv(c1, c2):
    q = c1**2 + c2**2
    n = np.stack([2 * c1, 2 * c2, q - 1.0], axis=-1) / (q + 1.0)[..., None]
    return n


def flow_coords(x, xi, branch_tol=1e-9):
    """(x, xi) -> (y1, y2, c1, c2, s, t): leaf labels plus flow times.

    The plane chart (c1, c2) is the stereographic image of the oriented unit
    normal of span(x, xi); s comes from the principal-branch angle of the
    base-point rotation, so points with that angle at +-pi raise ChartError.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    xhat, xit = _plane_basis(x, xi)
    y1 = _dot(x, xi)
    y2 = _norm(x) * _norm(xi)
    n = np.cross(xhat, xit)
    c1, c2 = _stereographic(n)
    mu = np.hypot(xhat[..., 2], xit[..., 2])
    if np.any(mu < 1e-12):
        raise ChartError("plane lies in {x3 = 0}: w undefined")
    w = (xhat[..., 2:3] * xhat + xit[..., 2:3] * xit) / mu[..., None]
    Jw = np.cross(n, w)
    k = 2.0 * np.sqrt(y2**2 - y1**2)
    ang = np.arctan2(_dot(xhat, Jw), _dot(xhat, w))
    if np.any(np.pi - np.abs(ang) < branch_tol):
        raise ChartError("flow angle at the principal-branch edge: leaving the chart")
    s = ang / k
    t = 0.5 * np.log(_norm(x)) - y1 * s
    return y1, y2, c1, c2, s, t


def flow_coords_inv(y1, y2, c1, c2, s, t):
    """Inverse chart: apply theta_mb(t) . theta_ma(s) to the leaf base point."""
    y1, y2, c1, c2, s, t = np.broadcast_arrays(
        *[np.asarray(v, dtype=float) for v in (y1, y2, c1, c2, s, t)]
    )
    n = _stereographic_inv(c1, c2)
    w = np.zeros(n.shape)
    w[..., 2] = 1.0
    w = w - n[..., 2:3] * n
    wn = _norm(w)
    if np.any(wn < 1e-12):
        raise ChartError("plane lies in {x3 = 0}: base point undefined")
    w = w / wn[..., None]
    Jw = np.cross(n, w)
    root = np.sqrt(np.maximum(y2**2 - y1**2, 0.0))
    zeta = y1[..., None] * w + root[..., None] * Jw
    k = 2.0 * root
    cs, sn = np.cos(k * s)[..., None], np.sin(k * s)[..., None]
    ex = np.exp(2.0 * y1 * s)[..., None]
    xnew = ex * (cs * w + sn * Jw)
    zhat = zeta / y2[..., None]
    Jzhat = (y1[..., None] * Jw - root[..., None] * w) / y2[..., None]
    xinew = (y2[..., None] / ex) * (cs * zhat + sn * Jzhat)
    et = np.exp(2.0 * t)[..., None]
    return xnew * et, xinew / et


# ---------------------------------------------------------------------------
# leaf grids and the H_mp solver
# ---------------------------------------------------------------------------

class LeafGrid:
    """Product grid in flow coordinates over U(delta)-shaped boxes.

    Axes: y1 in (-ey, ey), y2 in (1-ey, 1+ey) with ey slightly beyond delta
    (the cutoff needs room to roll off), chart box, and (s, t) box.

    Admissible plane normals avoid +-e3 (horizontal planes never meet the
    upper cone), so the stereographic chart values live in an annulus around
    the origin; the default chart box is a rectangle inside that annulus.
    """

    def __init__(self, delta=0.05, shape=(8, 8, 4, 4, 48, 48),
                 chart_box=((0.45, 1.35), (-0.45, 0.45)),
                 st_box=(-0.8, 0.8), y_ext=2.0, t_center=0.0):
        self.delta = float(delta)
        self.shape = tuple(shape)
        ey = y_ext * delta
        n1, n2, nc1, nc2, ns, nt = self.shape
        self.y1_ax = np.linspace(-ey, ey, n1)
        self.y2_ax = np.linspace(1.0 - ey, 1.0 + ey, n2)
        self.c1_ax = np.linspace(chart_box[0][0], chart_box[0][1], nc1)
        self.c2_ax = np.linspace(chart_box[1][0], chart_box[1][1], nc2)
        self.s_ax = np.linspace(st_box[0], st_box[1], ns)
        self.t_ax = t_center + np.linspace(st_box[0], st_box[1], nt)
        self.st_box = st_box
        self.t_center = t_center

    @property
    def hs(self):
        return self.s_ax[1] - self.s_ax[0]

    @property
    def ht(self):
        return self.t_ax[1] - self.t_ax[0]

    def coord_mesh(self):
        return np.meshgrid(self.y1_ax, self.y2_ax, self.c1_ax, self.c2_ax,
                           self.s_ax, self.t_ax, indexing="ij")

    def points(self):
        Y1, Y2, C1, C2, S, T = self.coord_mesh()
        return flow_coords_inv(Y1, Y2, C1, C2, S, T)

    def leaf_st_points(self, y1, y2, c1, c2):
        S, T = np.meshgrid(self.s_ax, self.t_ax, indexing="ij")
        o = np.ones_like(S)
        return flow_coords_inv(y1 * o, y2 * o, c1 * o, c2 * o, S, T)


class FlowCutoff:
    """chi = beta(y1) beta(y2 - 1) gamma(s) gamma(t) in flow coordinates.

    The y-profile is the exactly compactly supported exp-bump step: 1 for
    |y| <= y_flat*delta, 0 beyond y_supp*delta. The solver cutoff uses
    (y_flat, y_supp) = (1, 2) (one on U(delta), support in U(2 delta)); the
    conjugation cutoff uses (1/2, 1). The (s, t) roll-off gamma is an erf
    profile: |p| is a function of (y1, y2) alone, so the division guards never
    involve the (s, t) directions, while the analytic profile keeps the high
    derivatives small enough for finite-difference residual checks. Its
    sub-1e-12 tails are windowed to zero at 0.93 of the box.

    H_mp chi = (d_s + i d_t) chi is closed form because y1, y2 are flow
    invariants.
    """

    def __init__(self, delta, st_box, mid=0.6, width=0.12, y_flat=1.0, y_supp=2.0,
                 window=0.93, t_center=0.0):
        self.delta = delta
        self.y_flat = y_flat
        self.y_supp = y_supp
        self.s_mid = mid * st_box[1]
        self.s_w = width * st_box[1]
        self.s_window = window * st_box[1]
        self.t_center = t_center

    def _beta(self, y):
        half = self.y_flat / self.y_supp
        u = np.abs(y) / (self.y_supp * self.delta)
        return smoothstep((1.0 - u) / (1.0 - half))

    def _gamma(self, s):
        from scipy.special import erf

        g = 0.5 * (1.0 - erf((np.abs(s) - self.s_mid) / self.s_w))
        return np.where(np.abs(s) <= self.s_window, g, 0.0)

    def _gamma_d(self, s):
        gd = -np.sign(s) * np.exp(-(((np.abs(s) - self.s_mid) / self.s_w) ** 2)) / (
            self.s_w * np.sqrt(np.pi)
        )
        return np.where(np.abs(s) <= self.s_window, gd, 0.0)

    def value(self, y1, y2, s, t):
        return (self._beta(y1) * self._beta(y2 - 1.0) * self._gamma(s)
                * self._gamma(t - self.t_center))

    def flat_mask(self, y1, y2, s, t, level=0.999):
        return self.value(y1, y2, s, t) > level

    def hmp(self, y1, y2, s, t):
        """(d_s + i d_t) chi."""
        by = self._beta(y1) * self._beta(y2 - 1.0)
        tc = t - self.t_center
        return by * (
            self._gamma_d(s) * self._gamma(tc) + 1j * self._gamma(s) * self._gamma_d(tc)
        )

    def grad_y(self, y1, y2, s, t):
        """(d_y1 chi, d_y2 chi): closed-form y-profile derivatives."""
        g_st = self._gamma(s) * self._gamma(t - self.t_center)
        return (
            self._beta_d(y1) * self._beta(y2 - 1.0) * g_st,
            self._beta(y1) * self._beta_d(y2 - 1.0) * g_st,
        )

    def _beta_d(self, y):
        half = self.y_flat / self.y_supp
        u = np.abs(y) / (self.y_supp * self.delta)
        return (
            smoothstep_d((1.0 - u) / (1.0 - half))
            * (-np.sign(y) / (self.y_supp * self.delta))
            / (1.0 - half)
        )


def _batched_cauchy(rhs, hs, ht, chunk=96):
    """Spectral Cauchy transform over a batch of (ns, nt) grids, chunked."""
    from scipy.fft import fft2, ifft2

    L, ns, nt = rhs.shape
    mx, my, sym = dbar._spectral_kernel_symbol(ns, nt, hs, ht)
    out = np.empty(rhs.shape, dtype=complex)
    for a in range(0, L, chunk):
        b = min(a + chunk, L)
        big = np.zeros((b - a, mx, my), dtype=complex)
        big[:, :ns, :nt] = rhs[a:b]
        out[a:b] = ifft2(fft2(big, axes=(1, 2)) * sym[None], axes=(1, 2))[:, :ns, :nt]
    return out


class PhaseField:
    """A function on a LeafGrid: 6D complex values plus flow-space calculus."""

    def __init__(self, grid, values):
        self.grid = grid
        self.values = np.asarray(values, dtype=complex)

    def dst(self):
        """(d_s + i d_t) by 4th-order central differences (2nd order at edges)."""
        ds = _fd_axis(self.values, self.grid.hs, axis=4)
        dt = _fd_axis(self.values, self.grid.ht, axis=5)
        return ds + 1j * dt

    def interp(self, y):
        from scipy.interpolate import RegularGridInterpolator

        if not hasattr(self, "_itp"):
            axes = (self.grid.y1_ax, self.grid.y2_ax, self.grid.c1_ax,
                    self.grid.c2_ax, self.grid.s_ax, self.grid.t_ax)
            self._itp = RegularGridInterpolator(axes, self.values, method="linear",
                                                bounds_error=False, fill_value=0.0)
        return self._itp(y)


def _fd_axis(v, h, axis):
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    # 4th-order interior
    out[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[1] = (v[2] - v[0]) / (2 * h)
    out[-2] = (v[-1] - v[-3]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def solve_hmp(f, delta=0.05, grid=None, cutoff=None, report=None):
    """Solve H_mp u = m f near the characteristic set, leaf by leaf.

    f(x, xi) is sampled on the flow-coordinate grid; on each leaf the equation
    becomes (d_s + i d_t) u = chi m f, inverted by the Cauchy transform. The
    returned PhaseField carries the solution; pass a dict as `report` to
    collect the max residual of the discrete equation over the chi = 1 region.
    """
    grid = grid or LeafGrid(delta=delta)
    cutoff = cutoff or FlowCutoff(delta, grid.st_box, t_center=grid.t_center)
    X, XI = grid.points()
    Y1, Y2, C1, C2, S, T = grid.coord_mesh()
    m = _dot(X, X)
    rhs = cutoff.value(Y1, Y2, S, T) * m * f(X, XI)
    n1, n2, nc1, nc2, ns, nt = grid.shape
    flat = rhs.reshape(-1, ns, nt)
    # (d_s + i d_t) = 2 d/d(conj(z)) for z = s + i t, so invert dbar on rhs/2
    u = _batched_cauchy(flat / 2.0, grid.hs, grid.ht).reshape(rhs.shape)
    field = PhaseField(grid, u)
    if report is not None:
        res = field.dst() - rhs
        flatmask = cutoff.flat_mask(Y1, Y2, S, T)
        report["max_residual_flat"] = float(np.abs(res)[flatmask].max()) if flatmask.any() else np.nan
        report["max_residual"] = float(np.abs(res).max())
    return field


# ---------------------------------------------------------------------------
# symbol-level pseudodifferential conjugation
# ---------------------------------------------------------------------------

def _chart_jacobian(x, xi, step=1e-6):
    """d(y1, y2, c1, c2, s, t) / d(x, xi) by central differences of the chart."""
    n = x.shape[0]
    J = np.empty((n, 6, 6))
    for k in range(6):
        dx = np.zeros((1, 3))
        dxi = np.zeros((1, 3))
        if k < 3:
            dx[0, k] = step
        else:
            dxi[0, k - 3] = step
        yp = np.stack(flow_coords(x + dx, xi + dxi), axis=-1)
        ym = np.stack(flow_coords(x - dx, xi - dxi), axis=-1)
        J[:, :, k] = (yp - ym) / (2 * step)
    return J


class ConjSymbol:
    """Conjugating symbol c = e^{i chi phi} for P + h Q-sharp, at symbol level.

    phi solves H_mp phi = -m q_sharp leaf by leaf; chi is the conjugation
    cutoff (one on the U(delta/2) band, supported in the U(delta) band). The
    lower-order symbol

        l = psi [ (1-chi)/p q_sharp + (H_mp chi) phi / (m p)
                  - H_m(chi phi) / m ] c

    makes psi((1/i) H_p c + q_sharp c) - l p vanish up to the phi-solve and
    finite-difference errors; residual_report measures that defect at sampled
    points of U(delta). All (s, t) derivatives of phi are evaluated as leaf
    solves of the flow-differentiated source (the Cauchy transform commutes
    with the flows), transversal derivatives by small-step solve clusters.

    W_sharp must provide value/divergence/jacobian/div_gradient (smooth
    mollified fields do).
    """

    def __init__(self, W_sharp, h, sigma, delta=0.05, ns=64, st_box=(-0.8, 0.8),
                 t_center=0.35, psi=None, cluster_step=1e-4):
        self.W = W_sharp
        self.h = float(h)
        self.sigma = float(sigma)
        self.delta = float(delta)
        self.ns = int(ns)
        self.st_box = st_box
        self.t_center = float(t_center)
        self.psi = psi
        self.eps = cluster_step
        self.solve_cut = FlowCutoff(delta, st_box, y_flat=1.0, y_supp=2.0,
                                    t_center=t_center)
        self.chi = FlowCutoff(delta, st_box, mid=0.45, width=0.10,
                              y_flat=0.5, y_supp=1.0, t_center=t_center)
        self.s_ax0 = np.linspace(st_box[0], st_box[1], ns)
        self.t_ax0 = t_center + np.linspace(st_box[0], st_box[1], ns)

    # -- symbol pieces ------------------------------------------------------

    def q_sharp(self, x, xi):
        A = self.W.value(x)
        m = _dot(x, x)
        return (2.0 * _dot(A, xi) + 2j * _dot(A, x) / m
                + 1j * self.h * self.W.divergence(x))

    def _mq(self, x, xi):
        return _dot(x, x) * self.q_sharp(x, xi)

    def _grad_mq(self, x, xi):
        """(grad_x, grad_xi) of m q_sharp, closed form from the field jacobian."""
        A = self.W.value(x)
        m = _dot(x, x)[..., None]
        J = self.W.jacobian(x)  # (..., j, i)
        divA = self.W.divergence(x)[..., None]
        gdiv = self.W.div_gradient(x)
        Jt_xi = np.einsum("...ji,...j->...i", J, xi + 0j)
        Jt_x = np.einsum("...ji,...j->...i", J, x + 0j)
        # m q = 2 m (A.xi) + 2i (A.x) + i h m div A
        gx = 4.0 * x * _dot(A, xi)[..., None] + 2.0 * m * Jt_xi
        gx = gx + 2j * (Jt_x + A)
        gx = gx + 1j * self.h * (2.0 * x * divA + m * gdiv)
        gxi = 2.0 * m * A
        return gx, gxi

    def _hma_mq(self, x, xi):
        gx, gxi = self._grad_mq(x, xi)
        m = _dot(x, x)
        return 2.0 * (m * _dot(xi + 0j, gx) - _dot(xi, xi) * _dot(x + 0j, gxi))

    def _hmb_mq(self, x, xi):
        gx, gxi = self._grad_mq(x, xi)
        return 2.0 * (_dot(x + 0j, gx) - _dot(xi + 0j, gxi))

    # -- leaf solves --------------------------------------------------------

    def _leaf_rhs(self, X, XI, Y1, Y2, S, T, mode):
        chi_s = self.solve_cut
        if mode == "val":
            return -chi_s.value(Y1, Y2, S, T) * self._mq(X, XI)
        g_st = chi_s._gamma(S) * chi_s._gamma(T - chi_s.t_center)
        by = chi_s._beta(Y1) * chi_s._beta(Y2 - 1.0)
        if mode == "ds":
            dchi = by * chi_s._gamma_d(S) * chi_s._gamma(T - chi_s.t_center)
            return -(dchi * self._mq(X, XI) + chi_s.value(Y1, Y2, S, T) * self._hma_mq(X, XI))
        if mode == "dt":
            dchi = by * chi_s._gamma(S) * chi_s._gamma_d(T - chi_s.t_center)
            return -(dchi * self._mq(X, XI) + chi_s.value(Y1, Y2, S, T) * self._hmb_mq(X, XI))
        raise ValueError(mode)

    def _solve_batch(self, leaves, s_ax, t_ax, modes):
        """Solve phi-leaves for each (y1, y2, c1, c2) in `leaves` and each mode."""
        S, T = np.meshgrid(s_ax, t_ax, indexing="ij")
        rhs = []
        for (y1, y2, c1, c2) in leaves:
            o = np.ones_like(S)
            X, XI = flow_coords_inv(y1 * o, y2 * o, c1 * o, c2 * o, S, T)
            Y1, Y2 = y1 * o, y2 * o
            for mode in modes:
                rhs.append(self._leaf_rhs(X, XI, Y1, Y2, S, T, mode))
        rhs = np.array(rhs) / 2.0
        hs, ht = s_ax[1] - s_ax[0], t_ax[1] - t_ax[0]
        out = _batched_cauchy(rhs, hs, ht)
        return out.reshape(len(leaves), len(modes), len(s_ax), len(t_ax))

    # -- pointwise evaluation ----------------------------------------------

    def eval(self, x, xi, derivs=True):
        """Evaluate phi, c, l, c-tilde (and the conjugation residual) at points.

        Returns a dict of arrays over the input points. With derivs=False only
        phi, chi, c are computed (single leaf solve per point).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        n = x.shape[0]
        y1, y2, c1, c2, s, t = flow_coords(x, xi)
        out = {k: np.zeros(n, dtype=complex) for k in
               ("phi", "c", "l", "c_tilde", "residual", "q")}
        out["chi"] = np.zeros(n)
        out["grad_x_G"] = np.zeros((n, 3), dtype=complex)
        out["grad_xi_G"] = np.zeros((n, 3), dtype=complex)
        eps = self.eps
        for i in range(n):
            # axes shifted so the sample sits exactly on a grid node
            s_ax = self.s_ax0 + (s[i] - self.s_ax0[np.argmin(np.abs(self.s_ax0 - s[i]))])
            t_ax = self.t_ax0 + (t[i] - self.t_ax0[np.argmin(np.abs(self.t_ax0 - t[i]))])
            i_s = int(np.argmin(np.abs(s_ax - s[i])))
            i_t = int(np.argmin(np.abs(t_ax - t[i])))
            base = (y1[i], y2[i], c1[i], c2[i])
            if not derivs:
                phi = self._solve_batch([base], s_ax, t_ax, ("val",))[0, 0]
                out["phi"][i] = phi[i_s, i_t]
                ch = self.chi.value(y1[i], y2[i], s[i], t[i])
                out["chi"][i] = ch
                out["c"][i] = np.exp(1j * ch * phi[i_s, i_t])
                continue
            leaves = [base]
            for k, e in [(0, eps), (0, -eps), (1, eps), (1, -eps),
                         (2, eps), (2, -eps), (3, eps), (3, -eps)]:
                pert = list(base)
                pert[k] += e
                leaves.append(tuple(pert))
            sol = self._solve_batch(leaves, s_ax, t_ax, ("val", "ds", "dt"))
            phi_v = sol[0, 0, i_s, i_t]
            dphi_s = sol[0, 1, i_s, i_t]
            dphi_t = sol[0, 2, i_s, i_t]
            dphi_y = np.array([
                (sol[1 + 2 * k, 0, i_s, i_t] - sol[2 + 2 * k, 0, i_s, i_t]) / (2 * eps)
                for k in range(4)
            ])
            ch = self.chi.value(y1[i], y2[i], s[i], t[i])
            dch_y1, dch_y2 = self.chi.grad_y(y1[i], y2[i], s[i], t[i])
            hmp_chi = self.chi.hmp(y1[i], y2[i], s[i], t[i])
            by = self.chi._beta(y1[i]) * self.chi._beta(y2[i] - 1.0)
            dch_s = by * self.chi._gamma_d(s[i]) * self.chi._gamma(t[i] - self.chi.t_center)
            dch_t = by * self.chi._gamma(s[i]) * self.chi._gamma_d(t[i] - self.chi.t_center)
            # grad of G = chi phi in flow coordinates (y1, y2, c1, c2, s, t)
            gG = np.array([
                dch_y1 * phi_v + ch * dphi_y[0],
                dch_y2 * phi_v + ch * dphi_y[1],
                ch * dphi_y[2],
                ch * dphi_y[3],
                dch_s * phi_v + ch * dphi_s,
                dch_t * phi_v + ch * dphi_t,
            ])
            J = _chart_jacobian(x[i : i + 1], xi[i : i + 1])[0]
            gxxi = J.T @ gG
            gx_G, gxi_G = gxxi[:3], gxxi[3:]
            # residual of the conjugation identity
            xx, xxi = x[i], xi[i]
            m = float(xx @ xx)
            pa = float(xxi @ xxi) - 1.0 / m
            pb = 2.0 * float(xx @ xxi) / m
            p = pa + 1j * pb
            ga_x = 2.0 * xx / m**2
            ga_xi = 2.0 * xxi
            gb_x = 2.0 * xxi / m - 4.0 * float(xx @ xxi) * xx / m**2
            gb_xi = 2.0 * xx / m
            gp_x = ga_x + 1j * gb_x
            gp_xi = ga_xi + 1j * gb_xi
            HpG = gp_xi @ gx_G - gp_x @ gxi_G
            HmG = -2.0 * (xx + 0j) @ gxi_G
            q = self.q_sharp(xx[None], xxi[None])[0]
            cval = np.exp(1j * ch * phi_v)
            psival = 1.0 if self.psi is None else float(self.psi(xx[None])[0])
            if psival * (1.0 - ch) > 1e-10 and abs(p) < 1e-8:
                raise ChartError(
                    "|p| < 1e-8 where the conjugation cutoff is not 1: "
                    "reject these chart/cutoff parameters"
                )
            lval = psival * ((1.0 - ch) / p * q + hmp_chi * phi_v / (m * p)
                             - HmG / m) * cval
            res = psival * (cval * HpG + q * cval) - lval * p
            out["phi"][i] = phi_v
            out["chi"][i] = ch
            out["c"][i] = cval
            out["l"][i] = lval
            out["c_tilde"][i] = cval + self.h * lval
            out["residual"][i] = res
            out["q"][i] = q
            out["grad_x_G"][i] = gx_G
            out["grad_xi_G"][i] = gxi_G
        return out

    def sample_points(self, n, seed=0, y_frac=0.95, st_frac=0.3, support_only=True):
        """Random U(delta) sample points inside the chart patch.

        y_frac <= 0.45 together with st_frac <= 0.15 places samples in the
        chi = 1 core, where c = e^{i phi} and derivative-growth measurements
        see the mollified field alone.
        """
        rng = np.random.default_rng(seed)
        d = self.delta
        pts_x, pts_xi = [], []
        while len(pts_x) < n:
            y1 = rng.uniform(-y_frac * d, y_frac * d)
            y2 = 1.0 + rng.uniform(-y_frac * d, y_frac * d)
            c1 = rng.uniform(0.55, 1.25)
            c2 = rng.uniform(-0.35, 0.35)
            s = rng.uniform(-st_frac * self.st_box[1], st_frac * self.st_box[1])
            t = self.t_center + rng.uniform(-st_frac * self.st_box[1], st_frac * self.st_box[1])
            if support_only and self.chi.value(y1, y2, s, t) < 1e-3:
                continue
            xx, xxi = flow_coords_inv(y1, y2, c1, c2, s, t)
            pts_x.append(xx)
            pts_xi.append(xxi)
        return np.array(pts_x), np.array(pts_xi)

    def derivative_growth(self, W_rough, h_list, n=16, seed=7):
        """sup |grad_x (chi phi)| at chi = 1 core samples, per h in h_list.

        W_rough must expose mollified(delta); each h uses delta = h^sigma.
        Returns (sups, fitted log-log slope d log sup / d log h).
        """
        sups = []
        for h in h_list:
            cs = ConjSymbol(W_rough.mollified(h**self.sigma), h, self.sigma,
                            delta=self.delta, ns=self.ns, st_box=self.st_box,
                            t_center=self.t_center, psi=self.psi)
            x, xi = cs.sample_points(n, seed=seed, y_frac=0.42, st_frac=0.14)
            out = cs.eval(x, xi, derivs=True)
            sups.append(float(np.abs(out["grad_x_G"]).max()))
        slope = float(np.polyfit(np.log(h_list), np.log(sups), 1)[0])
        return sups, slope

    def residual_report(self, n=64, seed=0):
        x, xi = self.sample_points(n, seed=seed)
        out = self.eval(x, xi, derivs=True)
        return {
            "max_residual": float(np.abs(out["residual"]).max()),
            "min_abs_c": float(np.abs(out["c"]).min()),
            "min_abs_c_tilde": float(np.abs(out["c_tilde"]).min()),
            "sup_grad_x_G": float(np.abs(out["grad_x_G"]).max()),
            "n_samples": n,
        }


def conj_symbol(W_sharp, h, sigma, delta=0.05, **kw):
    """Build the conjugating symbol data for the mollified field W_sharp.

    Returns a ConjSymbol; see its residual_report for the verification of the
    symbol identity and the ellipticity of c and c-tilde.
    """
    if not (0 <= sigma < 0.5):
        raise ValueError("sigma must lie in [0, 1/2)")
    return ConjSymbol(W_sharp, h, sigma, delta=delta, **kw)

"""Implicit-surface domains, boundary quadrature, the front face, the
cylindrical coordinate map Psi, half-plane slicing, and Morse slicing angles.

Conventions: weight-dependent code works in a canonical frame with the weight
base point at the origin, the weight direction along e1, and the domain inside
the upper cone {x3 > c |x|}. CanonicalFrame performs the rotation and checks
its hypotheses loudly.
"""

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, cKDTree
from skimage import measure

from .bumps import smoothstep


class GeometryError(ValueError):
    pass


class Grid3:
    """Uniform Cartesian grid over a box; axes indexed [ix, iy, iz]."""

    def __init__(self, bbox, n):
        self.bbox = np.asarray(bbox, dtype=float)  # (3, 2)
        self.n = int(n)
        self.axes = [np.linspace(self.bbox[i, 0], self.bbox[i, 1], self.n) for i in range(3)]
        self.spacing = np.array([ax[1] - ax[0] for ax in self.axes])
        self.shape = (self.n, self.n, self.n)

    def points(self):
        X, Y, Z = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def flat_points(self):
        return self.points().reshape(-1, 3)


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

class _Ball:
    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def levelset(self, pts):
        d = np.asarray(pts, dtype=float) - self.center
        return np.linalg.norm(d, axis=-1) - self.radius

    def gradient(self, pts):
        d = np.asarray(pts, dtype=float) - self.center
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / np.maximum(r, 1e-300)

    def bounds(self):
        return np.stack([self.center - self.radius, self.center + self.radius], axis=1)

    def quadrature(self, nu=160, nv=320):
        return _ellipsoid_quadrature(self.center, np.full(3, self.radius), nu, nv)


class _Ellipsoid:
    def __init__(self, center, axes):
        self.center = np.asarray(center, dtype=float)
        self.axes_len = np.asarray(axes, dtype=float)

    def levelset(self, pts):
        d = (np.asarray(pts, dtype=float) - self.center) / self.axes_len
        return np.linalg.norm(d, axis=-1) - 1.0

    def gradient(self, pts):
        d = (np.asarray(pts, dtype=float) - self.center) / self.axes_len
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / self.axes_len / np.maximum(r, 1e-300)

    def bounds(self):
        return np.stack([self.center - self.axes_len, self.center + self.axes_len], axis=1)

    def quadrature(self, nu=160, nv=320):
        return _ellipsoid_quadrature(self.center, self.axes_len, nu, nv)


def _ellipsoid_quadrature(center, axes_len, nu, nv):
    # Gauss-Legendre in the polar angle, midpoint (spectral) in azimuth
    unodes, uweights = np.polynomial.legendre.leggauss(nu)
    u = 0.5 * np.pi * (unodes + 1.0)
    wu = 0.5 * np.pi * uweights
    v = (np.arange(nv) + 0.5) * (2 * np.pi / nv)
    wv = 2 * np.pi / nv
    U, V = np.meshgrid(u, v, indexing="ij")
    a1, a2, a3 = axes_len
    pts = np.stack(
        [
            a1 * np.sin(U) * np.cos(V),
            a2 * np.sin(U) * np.sin(V),
            a3 * np.cos(U),
        ],
        axis=-1,
    )
    xu = np.stack(
        [a1 * np.cos(U) * np.cos(V), a2 * np.cos(U) * np.sin(V), -a3 * np.sin(U)], axis=-1
    )
    xv = np.stack([-a1 * np.sin(U) * np.sin(V), a2 * np.sin(U) * np.cos(V), 0.0 * U], axis=-1)
    cr = np.cross(xu, xv)
    area_el = np.linalg.norm(cr, axis=-1)
    w = (area_el * wu[:, None] * wv).ravel()
    points = (center + pts).reshape(-1, 3)
    normals = np.stack(
        [
            np.sin(U) * np.cos(V) / a1,
            np.sin(U) * np.sin(V) / a2,
            np.cos(U) / a3,
        ],
        axis=-1,
    ).reshape(-1, 3)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return points, normals, w


class _Bean:
    """Tube of varying radius around a circular arc in the {x2 = 0} plane.

    The arc bends around the x1-axis direction, so half-plane slices through
    the x1-axis can cut the two arms in disjoint pieces: the tube is thicker
    (in angular extent) near the arc tips than at the top.
    """

    def __init__(self, center, r_arc=0.9, tube=0.28, alpha0=1.15, taper_w=0.35,
                 floor=0.3, beta=0.25, asym=0.08):
        self.center = np.asarray(center, dtype=float)
        self.ring_c = self.center - np.array([0.0, 0.0, 0.4])
        self.r_arc = r_arc
        self.tube = tube
        self.alpha0 = alpha0
        self.taper_w = taper_w
        self.floor = floor
        self.beta = beta
        self.asym = asym

    def levelset(self, pts):
        p = np.asarray(pts, dtype=float) - self.ring_c
        q = np.hypot(p[..., 0], p[..., 2])
        qs = np.maximum(q, 1e-12)
        cosa = p[..., 2] / qs
        sina = p[..., 0] / qs
        d2 = (q - self.r_arc) ** 2 + p[..., 1] ** 2
        T = smoothstep((cosa - np.cos(self.alpha0) + self.taper_w) / self.taper_w)
        rho2 = self.tube**2 * (1.0 - self.beta * cosa + self.asym * sina)
        return d2 - (T * rho2 - (1.0 - T) * self.floor**2)

    def gradient(self, pts, h=1e-6):
        pts = np.asarray(pts, dtype=float)
        g = np.empty_like(pts)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            g[..., k] = (self.levelset(pts + e) - self.levelset(pts - e)) / (2 * h)
        return g

    def bounds(self):
        r = self.r_arc + self.tube + 0.15
        lo = self.ring_c - np.array([r, self.tube + 0.15, r])
        hi = self.ring_c + np.array([r, self.tube + 0.15, r])
        return np.stack([lo, hi], axis=1)

    def quadrature(self, n_mc=176):
        b = self.bounds()
        axes = [np.linspace(b[i, 0], b[i, 1], n_mc) for i in range(3)]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        vol = self.levelset(np.stack([X, Y, Z], axis=-1))
        spacing = tuple(ax[1] - ax[0] for ax in axes)
        verts, faces, _, _ = measure.marching_cubes(vol, 0.0, spacing=spacing)
        verts = verts + b[:, 0]
        tri = verts[faces]
        cent = tri.mean(axis=1)
        cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        area = 0.5 * np.linalg.norm(cr, axis=1)
        normals = self.gradient(cent)
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return cent, normals, area


class Domain:
    """Implicit levelset domain Omega = {Phi < 0} with boundary quadrature."""

    def __init__(self, shape, params, levelset, gradient, bbox, grid_n, quad):
        self.shape_name = shape
        self.params = params
        self.levelset = levelset
        self.levelset_gradient = gradient
        self.bbox = np.asarray(bbox, dtype=float)
        self.grid_n = grid_n
        self.quad_points, self.quad_normals, self.quad_weights = quad
        self._grid = None
        self._hull = None
        self._cache = {}

    @property
    def grid(self):
        if self._grid is None:
            self._grid = Grid3(self.bbox, self.grid_n)
        return self._grid

    def area(self):
        return float(self.quad_weights.sum())

    def contains(self, pts):
        return self.levelset(pts) < 0.0

    def interior_mask(self):
        return self.levelset(self.grid.points()) < 0.0

    def normal(self, pts):
        g = self.levelset_gradient(pts)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def centroid(self):
        return np.average(self.quad_points, axis=0, weights=self.quad_weights)

    def hull_contains(self, x):
        if self._hull is None:
            sub = self.quad_points[:: max(1, len(self.quad_points) // 4000)]
            self._hull = ConvexHull(sub)
        eq = self._hull.equations
        return bool(np.all(eq[:, :3] @ np.asarray(x) + eq[:, 3] <= 1e-10))


def make_domain(shape, grid_n=48, pad=0.35, **params):
    """Build a named domain: ball, ellipsoid, or bean.

    ball:      radius, center
    ellipsoid: axes (3 lengths), center
    bean:      center plus optional tube-shape parameters
    """
    if grid_n < 16:
        raise GeometryError("grid_n < 16 is too coarse for any supported computation")
    if shape == "ball":
        radius = params.get("radius", 1.0)
        center = params.get("center", (0.0, 0.0, 2.0))
        if radius <= 0:
            raise GeometryError("ball radius must be positive")
        body = _Ball(center, radius)
        quad = body.quadrature()
    elif shape == "ellipsoid":
        axes = np.asarray(params.get("axes", (1.0, 0.7, 0.5)), dtype=float)
        center = params.get("center", (0.0, 0.0, 2.0))
        if np.any(axes <= 0):
            raise GeometryError("ellipsoid axes must all be positive")
        body = _Ellipsoid(center, axes)
        quad = body.quadrature()
    elif shape == "bean":
        center = params.get("center", (0.0, 0.0, 2.0))
        keys = {k: v for k, v in params.items() if k != "center"}
        body = _Bean(center, **keys)
        quad = body.quadrature()
    else:
        raise GeometryError(f"unknown shape '{shape}'")
    bounds = body.bounds()
    bbox = bounds + np.array([-pad, pad])
    return Domain(shape, dict(params), body.levelset, body.gradient, bbox, grid_n, quad)


def domain_from_config(cfg):
    cfg = dict(cfg)
    shape = cfg.pop("shape")
    return make_domain(shape, **cfg)


# ---------------------------------------------------------------------------
# front face
# ---------------------------------------------------------------------------

class BoundaryRegion:
    """Per-quadrature-point mask marking (an enlargement of) the front face."""

    def __init__(self, mask, margin, x0):
        self.mask = np.asarray(mask, dtype=bool)
        self.margin = float(margin)
        self.x0 = np.asarray(x0, dtype=float)

    def area_fraction(self, weights):
        return float(weights[self.mask].sum() / weights.sum())


def front_face(d, x0, margin=0.0):
    """Quadrature mask of {x in bdry : (x-x0).nu <= sin(margin) |x-x0|}.

    margin = 0 gives the exact front face; margin > 0 enlarges it by an
    angular slack. x0 must lie outside the closed convex hull of the domain.
    """
    x0 = np.asarray(x0, dtype=float)
    if margin < 0:
        raise GeometryError("margin must be nonnegative")
    if d.hull_contains(x0):
        raise GeometryError(
            "base point lies inside the convex hull of the domain; the front "
            "face is only defined for exterior base points"
        )
    rel = d.quad_points - x0
    dots = np.sum(rel * d.quad_normals, axis=1)
    mask = dots <= np.sin(margin) * np.linalg.norm(rel, axis=1)
    return BoundaryRegion(mask, margin, x0)


# ---------------------------------------------------------------------------
# canonical frame and the map Psi
# ---------------------------------------------------------------------------

class CanonicalFrame:
    """Rotation/translation taking x0 to the origin and omega to e1, with the
    domain in the upper cone {x3 > c |x|}."""

    def __init__(self, d, x0, omega):
        x0 = np.asarray(x0, dtype=float)
        omega = np.asarray(omega, dtype=float)
        if abs(np.linalg.norm(omega) - 1.0) > 1e-8:
            raise GeometryError("omega must be a unit vector")
        if d.hull_contains(x0):
            raise GeometryError("x0 inside the convex hull: weight is not admissible")
        up = d.centroid() - x0
        up = up - (up @ omega) * omega
        nu = np.linalg.norm(up)
        if nu < 1e-10:
            raise GeometryError("omega points straight at the domain; perturb omega")
        e3 = up / nu
        e2 = np.cross(e3, omega)
        self.Q = np.stack([omega, e2, e3])  # rows
        self.x0 = x0
        self.omega = omega
        P = self.to_frame(d.quad_points)
        if np.any(P[:, 2] <= 0):
            raise GeometryError("domain not contained in the upper half-space of the frame")
        r = np.linalg.norm(P, axis=1)
        ang = np.arccos(np.clip(P[:, 0] / r, -1, 1))
        if ang.max() > np.pi - 0.1:
            raise GeometryError("domain approaches the antipode of omega; psi not smooth")
        self.cone_c = float((P[:, 2] / r).min())
        self.radial_range = (float(r.min()), float(r.max()))

    def to_frame(self, pts):
        return (np.asarray(pts, dtype=float) - self.x0) @ self.Q.T

    def from_frame(self, pts):
        return np.asarray(pts, dtype=float) @ self.Q + self.x0

    def rotate(self, vecs):
        return np.asarray(vecs, dtype=float) @ self.Q.T

    def unrotate(self, vecs):
        return np.asarray(vecs, dtype=float) @ self.Q


def frame_for(d, x0, omega):
    key = ("frame", tuple(np.round(x0, 12)), tuple(np.round(omega, 12)))
    if key not in d._cache:
        d._cache[key] = CanonicalFrame(d, x0, omega)
    return d._cache[key]


def psi_map(x, axis_tol=1e-12):
    """Canonical-frame coordinates x = (x1, x') -> (z, theta), z = x1 + i|x'|.

    Undefined on the axis |x'| = 0.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    r = np.hypot(pts[:, 1], pts[:, 2])
    if np.any(r <= axis_tol):
        raise GeometryError("psi_map undefined on the axis x' = 0")
    z = pts[:, 0] + 1j * r
    theta = np.arctan2(pts[:, 2], pts[:, 1])
    if single:
        return z[0], theta[0]
    return z, theta


def psi_map_inv(z, theta):
    z = np.asarray(z, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    r = z.imag
    out = np.stack([z.real, r * np.cos(theta), r * np.sin(theta)], axis=-1)
    return out


# ---------------------------------------------------------------------------
# half-plane slices
# ---------------------------------------------------------------------------

def _point_in_polygon(z, poly):
    # crossing-number test for complex polygon nodes (closed)
    x, y = z.real, z.imag
    px, py = poly.real, poly.imag
    x0s, y0s, x1s, y1s = px[:-1], py[:-1], px[1:], py[1:]
    cond = (y0s <= y) != (y1s <= y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xin = x0s + (y - y0s) / (y1s - y0s) * (x1s - x0s)
    return bool(np.sum(cond & (xin > x)) % 2)


class SliceRegion:
    """One half-plane slice Omega_theta in the z = x1 + i r chart."""

    def __init__(self, theta, x_axis, r_axis, phi_vals, indicator, weights, contours, frame):
        self.theta = float(theta)
        self.x_axis = x_axis
        self.r_axis = r_axis
        self.phi_vals = phi_vals
        self.indicator = indicator
        self.weights = weights  # partial-cell area weights for quadrature
        self.contours = contours  # list of complex node arrays, oriented
        self.frame = frame

    @property
    def zz(self):
        return self.x_axis[:, None] + 1j * self.r_axis[None, :]

    @property
    def cell_area(self):
        return (self.x_axis[1] - self.x_axis[0]) * (self.r_axis[1] - self.r_axis[0])

    def points3d(self):
        """Canonical-frame 3D points of the slice grid."""
        zz = self.zz
        return psi_map_inv(zz, np.full(zz.shape, self.theta))

    def integrate(self, vals):
        """Slice quadrature sum with partial boundary-cell weights."""
        return np.sum(vals * self.weights) * self.cell_area

    def enclosed_area(self):
        return float(np.sum(self.weights) * self.cell_area)


def _slice_box(d, frame, pad):
    key = ("slice_box", id(frame), pad)
    if key not in d._cache:
        P = frame.to_frame(d.quad_points)
        r = np.hypot(P[:, 1], P[:, 2])
        x1lo, x1hi = P[:, 0].min() - pad, P[:, 0].max() + pad
        rlo = max(0.05, r.min() - pad)
        rhi = r.max() + pad
        d._cache[key] = (x1lo, x1hi, rlo, rhi)
    return d._cache[key]


def slice_domain(d, x0, omega, theta, n=256, pad=0.3, crit_tol=5e-3,
                 check_critical=True, with_contours=True):
    """Extract Omega_theta = Omega cap P_theta by marching squares.

    theta must stay clear of the Morse critical values (checked unless
    check_critical=False, which is used by the amplitude builder whose
    dbar solves do not care about slice topology).
    """
    frame = frame_for(d, x0, omega)
    if check_critical:
        crit = morse_critical_values(d, x0, omega)
        if len(crit) and np.min(np.abs(np.asarray(crit) - theta)) < crit_tol:
            nearest = crit[int(np.argmin(np.abs(np.asarray(crit) - theta)))]
            raise GeometryError(
                f"theta={theta:.6f} is within {crit_tol} of the Morse critical value "
                f"{nearest:.6f}; slice topology is unstable there"
            )
    x1lo, x1hi, rlo, rhi = _slice_box(d, frame, pad)
    x_axis = np.linspace(x1lo, x1hi, n)
    r_axis = np.linspace(rlo, rhi, n)
    zz = x_axis[:, None] + 1j * r_axis[None, :]
    pts3 = psi_map_inv(zz, np.full(zz.shape, theta))
    phi = d.levelset(frame.from_frame(pts3.reshape(-1, 3))).reshape(zz.shape)
    indicator = phi < 0.0

    # partial-cell weights: smeared Heaviside of the approximate signed distance
    hx = x_axis[1] - x_axis[0]
    gx, gy = np.gradient(phi, x_axis, r_axis)
    gn = np.maximum(np.hypot(gx, gy), 1e-12)
    sd = phi / gn
    eps = 1.5 * hx
    t = np.clip(0.5 - sd / (2 * eps), 0.0, 1.0)
    weights = t * t * (3 - 2 * t)

    contours = []
    if with_contours:
        raw = measure.find_contours(phi, 0.0)
        for c in raw:
            if np.linalg.norm(c[0] - c[-1]) > 1e-9:
                raise GeometryError(
                    "open slice contour: slice region touches the chart box; increase pad"
                )
            znodes = np.interp(c[:, 0], np.arange(n), x_axis) + 1j * np.interp(
                c[:, 1], np.arange(n), r_axis
            )
            # orient: +1 winding about interior (levelset < 0) sample points
            probe = None
            mid = len(znodes) // 2
            tang = znodes[mid + 1] - znodes[mid]
            nrm = 1j * tang / abs(tang)
            for s in (+1, -1):
                cand = znodes[mid] + s * nrm * 2.0 * hx
                if _point_in_polygon(cand, znodes):
                    probe = cand
                    break
            if probe is None:
                continue
            p3 = psi_map_inv(np.array([probe]), np.array([theta]))
            inside = d.levelset(frame.from_frame(p3))[0] < 0
            x, y = znodes.real, znodes.imag
            signed_area = 0.5 * np.sum(x[:-1] * y[1:] - x[1:] * y[:-1])
            ccw = signed_area > 0
            want_ccw = bool(inside)
            if ccw != want_ccw:
                znodes = znodes[::-1]
            contours.append(znodes)
    return SliceRegion(theta, x_axis, r_axis, phi, indicator, weights, contours, frame)


def slice_components(sl):
    """Number of outer contours (+1 orientation) in a slice."""
    return sum(1 for c in sl.contours if 0.5 * np.sum(
        c[:-1].real * c[1:].imag - c[1:].real * c[:-1].imag) > 0)


def slices_to_csv(slices, path):
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["theta", "contour_id", "re_z", "im_z"])
        for sl in slices:
            for ci, c in enumerate(sl.contours):
                for z in c:
                    wr.writerow([f"{sl.theta:.12g}", ci, f"{z.real:.12g}", f"{z.imag:.12g}"])


# ---------------------------------------------------------------------------
# Morse critical values of the slicing angle
# ---------------------------------------------------------------------------

def _theta_of(P):
    return np.arctan2(P[..., 2], P[..., 1])


def _project_to_surface(d, x, max_iter=40):
    # Newton along the levelset gradient
    x = np.array(x, dtype=float)
    for _ in range(max_iter):
        f = float(d.levelset(x[None])[0])
        g = d.levelset_gradient(x[None])[0]
        gn2 = float(g @ g)
        if gn2 < 1e-18:
            break
        x = x - f * g / gn2
        if abs(f) < 1e-13:
            break
    return x


def _crit_objective(d, frame):
    def F(x):
        nu = d.normal(x[None])[0]
        nu_f = frame.rotate(nu)
        th = _theta_of(frame.to_frame(x[None]))[0]
        ur = np.array([0.0, np.cos(th), np.sin(th)])
        return nu_f[0] ** 2 + float(nu_f @ ur) ** 2

    return F


def _gaussian_curvature(d, x, h=1e-4):
    g = d.levelset_gradient(x[None])[0]
    H = np.empty((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        H[:, k] = (d.levelset_gradient((x + e)[None])[0] - d.levelset_gradient((x - e)[None])[0]) / (2 * h)
    H = 0.5 * (H + H.T)
    adj = _adjugate(H)
    gn = np.linalg.norm(g)
    return float(g @ adj @ g) / gn**4


def _adjugate(H):
    c = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            m = np.delete(np.delete(H, i, axis=0), j, axis=1)
            c[i, j] = (-1) ** (i + j) * np.linalg.det(m)
    return c.T


def morse_critical_values(d, x0, omega, curvature_tol=1e-6, refresh=False):
    """Critical values of the slicing angle Theta on the boundary.

    Critical points are where the outward normal is orthogonal to the slicing
    half-plane: nu . omega = nu . u_r(theta) = 0. Candidates come from the
    dense boundary quadrature, get clustered, and are polished by a
    tangent-plane descent with surface reprojection. A critical point with
    near-zero Gaussian curvature is reported as degenerate (the slicing angle
    is then not a Morse function; perturb x0 or omega).
    """
    key = ("morse", tuple(np.round(x0, 12)), tuple(np.round(omega, 12)))
    if key in d._cache and not refresh:
        return d._cache[key]
    frame = frame_for(d, x0, omega)
    P = frame.to_frame(d.quad_points)
    nu_f = frame.rotate(d.quad_normals)
    th = _theta_of(P)
    ur = np.stack([np.zeros_like(th), np.cos(th), np.sin(th)], axis=-1)
    F = nu_f[:, 0] ** 2 + np.sum(nu_f * ur, axis=1) ** 2

    # candidate gathering: all small values of F; the threshold must admit
    # quadrature points a few spacings away from a tangency point. Low-F
    # points form connected "silhouette" strips along the boundary, so seeds
    # are the local minima of F at quadrature scale, not spatial clusters.
    thresh = max(F.min() * 50.0, 5e-2)
    cand = np.where(F < thresh)[0]
    if len(cand) == 0:
        cand = np.array([int(np.argmin(F))])
    pts = d.quad_points[cand]
    tree = cKDTree(pts)
    spacing = np.sqrt(np.median(d.quad_weights))
    seeds = []
    for i in range(len(cand)):
        nbrs = tree.query_ball_point(pts[i], 6.0 * spacing)
        if F[cand[i]] <= F[cand[nbrs]].min() + 1e-15:
            seeds.append(cand[i])

    obj = _crit_objective(d, frame)
    results = []
    for best in seeds:
        x = d.quad_points[best].copy()
        # 2D descent in the tangent plane with reprojection onto the surface;
        # the simplex must start at the quadrature-spacing scale, then shrink
        step = 4.0 * spacing
        for _ in range(4):
            nu = d.normal(x[None])[0]
            t1 = np.cross(nu, np.array([1.0, 0.0, 0.0]))
            if np.linalg.norm(t1) < 1e-6:
                t1 = np.cross(nu, np.array([0.0, 1.0, 0.0]))
            t1 /= np.linalg.norm(t1)
            t2 = np.cross(nu, t1)

            def local(s):
                return obj(_project_to_surface(d, x + s[0] * t1 + s[1] * t2))

            simplex = np.array([[0.0, 0.0], [step, 0.0], [0.0, step]])
            res = minimize(local, np.zeros(2), method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-18, "maxiter": 600,
                                    "initial_simplex": simplex})
            x = _project_to_surface(d, x + res.x[0] * t1 + res.x[1] * t2)
            step = max(step * 0.1, 1e-6)
        val = obj(x)
        if val > 1e-8:
            continue
        K = _gaussian_curvature(d, x)
        if abs(K) < curvature_tol:
            raise GeometryError(
                f"degenerate critical point (|K| = {abs(K):.2e} < {curvature_tol}) at "
                f"theta = {_theta_of(frame.to_frame(x[None]))[0]:.6f}; perturb (x0, omega)"
            )
        results.append(float(_theta_of(frame.to_frame(x[None]))[0]))

    vals = sorted(results)
    merged = []
    for v in vals:
        if not merged or abs(v - merged[-1]) > 1e-5:
            merged.append(v)
    d._cache[key] = merged
    return merged

import numpy as np
import pytest

from mslab import geometry as geo

X0 = np.zeros(3)
OM = np.array([1.0, 0.0, 0.0])


@pytest.fixture(scope="module")
def ball():
    return geo.make_domain("ball", radius=1.0, center=(0, 0, 2.0))


@pytest.fixture(scope="module")
def ellipsoid():
    return geo.make_domain("ellipsoid", axes=(1.0, 0.7, 0.5), center=(0, 0, 2.0))


@pytest.fixture(scope="module")
def bean():
    return geo.make_domain("bean", center=(0, 0, 2.0))


def test_ball_area(ball):
    assert abs(ball.area() - 4 * np.pi) / (4 * np.pi) < 0.02


def test_ellipsoid_area_vs_dense_oracle(ellipsoid):
    # oracle: much denser surface sampling of the same parametrization
    from mslab.geometry import _ellipsoid_quadrature

    _, _, w = _ellipsoid_quadrature(np.array([0, 0, 2.0]), np.array([1.0, 0.7, 0.5]), 400, 800)
    assert abs(ellipsoid.area() - w.sum()) / w.sum() < 0.02


def test_normals_unit(ball, ellipsoid, bean):
    for d in (ball, ellipsoid, bean):
        assert np.abs(np.linalg.norm(d.quad_normals, axis=1) - 1.0).max() < 1e-12


def test_make_domain_errors():
    with pytest.raises(geo.GeometryError):
        geo.make_domain("ellipsoid", axes=(1.0, 0.7, 0.0))
    with pytest.raises(geo.GeometryError):
        geo.make_domain("ball", radius=-1.0)
    with pytest.raises(geo.GeometryError):
        geo.make_domain("ball", grid_n=8)
    with pytest.raises(geo.GeometryError):
        geo.make_domain("torus")


def test_bean_connected_but_sliceable(bean):
    # interior grid flood fill: one connected component
    from scipy import ndimage

    mask = bean.interior_mask()
    _, n = ndimage.label(mask)
    assert n == 1


def test_front_face_sign_test(ball):
    ff = geo.front_face(ball, X0, 0.0)
    rel = ball.quad_points - X0
    manual = np.sum(rel * ball.quad_normals, axis=1) <= 0.0
    assert np.array_equal(ff.mask, manual)


def test_front_face_ball_fraction(ball):
    # closed form for a sphere of radius R seen from distance D:
    # the sign test holds on the cap with area fraction (1 - R/D)/2
    ff = geo.front_face(ball, X0, 0.0)
    frac = ff.area_fraction(ball.quad_weights)
    assert abs(frac - (1 - 0.5) / 2) < 0.02 * 0.25 + 0.005


def test_front_face_margin_monotone(ball):
    f0 = geo.front_face(ball, X0, 0.0).area_fraction(ball.quad_weights)
    f1 = geo.front_face(ball, X0, 0.2).area_fraction(ball.quad_weights)
    assert f1 > f0


def test_front_face_hull_error(ball):
    with pytest.raises(geo.GeometryError):
        geo.front_face(ball, np.array([0.0, 0.0, 2.0]), 0.0)


def test_psi_map_examples():
    z, th = geo.psi_map(np.array([1.0, 1.0, 0.0]))
    assert abs(z - (1 + 1j)) < 1e-14 and abs(th) < 1e-14
    with pytest.raises(geo.GeometryError):
        geo.psi_map(np.array([1.0, 0.0, 0.0]))


def test_psi_map_roundtrip():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (1000, 3))
    pts[:, 2] += 2.5  # keep off the axis
    z, th = geo.psi_map(pts)
    back = geo.psi_map_inv(z, th)
    assert np.abs(back - pts).max() < 1e-12


def test_ball_slice_is_disk(ball):
    sl = geo.slice_domain(ball, X0, OM, np.pi / 2)
    assert len(sl.contours) == 1
    # the slice of the ball at theta = pi/2 is the full great disk
    assert abs(sl.enclosed_area() - np.pi) / np.pi < 0.02


def test_slice_winding_orientation(ball):
    sl = geo.slice_domain(ball, X0, OM, np.pi / 2 + 0.2)
    from mslab.dbar import Contour

    c = Contour(sl.contours[0])
    zc = sl.contours[0].mean()
    assert c.winding_number(zc) == 1
    assert c.winding_number(zc + 10.0) == 0


def test_slice_indicator_consistency(ball):
    # contour-enclosed region equals the indicator region to one cell
    sl = geo.slice_domain(ball, X0, OM, np.pi / 2 - 0.15)
    from mslab.dbar import Contour

    c = Contour(sl.contours[0])
    zz = sl.zz
    hx = sl.x_axis[1] - sl.x_axis[0]
    sample = sl.indicator & (np.abs(zz - zz.mean()) >= 0)
    idx = np.argwhere(sample)[::47]
    for i, j in idx:
        d = np.abs(sl.contours[0] - zz[i, j]).min()
        if d > 2.0 * hx:
            assert c.winding_number(zz[i, j]) == 1


def test_bean_two_components(bean):
    sl = geo.slice_domain(bean, X0, OM, np.pi / 2 + 0.11)
    assert geo.slice_components(sl) == 2
    # 2D flood-fill oracle on the indicator
    from scipy import ndimage

    _, n = ndimage.label(sl.indicator)
    assert n == 2


def test_slice_critical_value_error(bean):
    crit = geo.morse_critical_values(bean, X0, OM)
    with pytest.raises(geo.GeometryError) as exc:
        geo.slice_domain(bean, X0, OM, crit[0] + 1e-4)
    assert f"{crit[0]:.6f}"[:6] in str(exc.value)


def test_morse_ball_closed_form(ball):
    crit = geo.morse_critical_values(ball, X0, OM)
    dev = np.arcsin(1.0 / 2.0)
    want = [np.pi / 2 - dev, np.pi / 2 + dev]
    assert len(crit) == 2
    assert np.abs(np.array(crit) - want).max() < 1e-6


def test_morse_ellipsoid_vs_dense_sampling(ellipsoid):
    crit = geo.morse_critical_values(ellipsoid, X0, OM)
    assert len(crit) == 2
    # dense-sampling oracle: ~1e6 boundary points
    from mslab.geometry import _ellipsoid_quadrature, frame_for

    pts, _, _ = _ellipsoid_quadrature(np.array([0, 0, 2.0]), np.array([1.0, 0.7, 0.5]), 700, 1400)
    P = frame_for(ellipsoid, X0, OM).to_frame(pts)
    th = np.arctan2(P[:, 2], P[:, 1])
    assert abs(crit[0] - th.min()) < 1e-4
    assert abs(crit[-1] - th.max()) < 1e-4


def test_morse_bean_and_component_sweep(bean):
    crit = geo.morse_critical_values(bean, X0, OM)
    assert len(crit) >= 4
    edges = np.concatenate([[crit[0] - 0.02], crit, [crit[-1] + 0.02]])
    for a, b in zip(edges[:-1], edges[1:]):
        counts = set()
        for th in np.linspace(a, b, 9)[1:-1]:
            sl = geo.slice_domain(bean, X0, OM, th, check_critical=False)
            counts.add(geo.slice_components(sl))
        assert len(counts) == 1


def test_frame_checks(ball):
    fr = geo.frame_for(ball, X0, OM)
    assert fr.cone_c > 0.3
    P = fr.to_frame(ball.quad_points)
    assert P[:, 2].min() > 0
    back = fr.from_frame(P)
    assert np.abs(back - ball.quad_points).max() < 1e-12
    with pytest.raises(geo.GeometryError):
        geo.CanonicalFrame(ball, X0, np.array([0.0, 0.0, 1.0]))  # omega at the domain


def test_slices_csv_export(ball, tmp_path):
    sls = [geo.slice_domain(ball, X0, OM, th) for th in (np.pi / 2, np.pi / 2 + 0.1)]
    path = tmp_path / "slices.csv"
    geo.slices_to_csv(sls, path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "theta,contour_id,re_z,im_z"
    assert len(rows) > 100

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgbench.geometry import (BallDomain, ScalarField, ball_measure, dump_field, integral, l2_average, levelset_measure,
                              load_field, rescale_truncate, sphere_measure, truncate_shift)


def test_measures():
    assert ball_measure(2) == pytest.approx(math.pi)
    assert ball_measure(3, 2.0) == pytest.approx(32 * math.pi / 3)
    assert sphere_measure(2) == pytest.approx(2 * math.pi)
    assert sphere_measure(3) == pytest.approx(4 * math.pi)
    with pytest.raises(ValueError):
        ball_measure(4)


# lattice-point counts |{i in Z^n : |i| < R}|, brute-forced independently
@pytest.mark.parametrize("n,h,count", [(2, 1 / 32, 3205), (3, 1 / 8, 2103)])
def test_mask_matches_lattice_count(n, h, count):
    dom = BallDomain(n, 1.0, h)
    assert int(dom.mask.sum()) == count
    assert dom.mask_volume == pytest.approx(count * h**n)


def test_mask_volume_converges():
    errs = [abs(BallDomain(2, 1.0, h).mask_volume - math.pi) for h in (1 / 16, 1 / 64)]
    assert errs[1] < errs[0] and errs[1] < 0.01


def test_layer_surrounds_mask():
    dom = BallDomain(2, 1.0, 1 / 16)
    assert not np.any(dom.layer & dom.mask)
    assert np.array_equal(dom.support, dom.layer | dom.mask)
    # every layer cell touches the mask through a face, edge or corner
    from scipy import ndimage

    grown = ndimage.binary_dilation(dom.mask, np.ones((3, 3), bool))
    assert np.array_equal(grown & ~dom.mask, dom.layer)


def test_resolution_floor():
    with pytest.raises(ValueError):
        BallDomain(2, 1.0, 0.2)
    dom = BallDomain(2, 1.0, 1 / 16)
    with pytest.raises(ValueError):
        dom.sub(0.25)


def test_sub_ball_on_parent_grid():
    dom = BallDomain(2, 1.0, 1 / 32)
    half = dom.sub(0.5)
    m = half.mask_on(dom)
    x = dom.coords()
    assert np.array_equal(m, (x[0] ** 2 + x[1] ** 2 < 0.25) & dom.mask)


def test_field_is_zero_outside_support_and_read_only(disk):
    u = ScalarField.from_function(disk, lambda x: 1.0 + x[0])
    assert np.all(u.data[~disk.support] == 0)
    with pytest.raises(ValueError):
        u.data[0, 0] = 1.0
    with pytest.raises(ValueError):
        ScalarField(disk, np.full(disk.shape, np.nan))


def test_gradient_of_linear_field(disk):
    u = ScalarField.from_function(disk, lambda x: 3 * x[0] - 2 * x[1])
    g = u.gradient()
    act = disk.element_ball_mask(0.9)
    assert np.allclose(g[0][act], 3.0) and np.allclose(g[1][act], -2.0)


def test_integrals_of_constants(disk):
    one = ScalarField.constant(disk, 1.0)
    assert integral(one) == pytest.approx(disk.mask_volume)
    assert l2_average(ScalarField.constant(disk, -2.5)) == pytest.approx(2.5)


def test_levelset_half_plane(disk):
    u = ScalarField.from_function(disk, lambda x: x[0])
    ls = levelset_measure(u, None, "gt", 0.0)
    # cells with i > 0 inside the disk: half of those off the axis
    x = disk.coords()
    assert ls.count == int((disk.mask & (x[0] > 0)).sum())
    assert ls.count == (disk.mask.sum() - (disk.mask & (np.abs(x[0]) < 1e-12)).sum()) // 2
    with pytest.raises(ValueError):
        levelset_measure(u, None, "between", 0.0)


def test_truncations(disk):
    u = ScalarField.from_function(disk, lambda x: 0.5 + 0.5 * x[0])
    v = truncate_shift(u, 0.5)
    assert np.allclose(v.values, np.maximum(u.values - 0.5, 0))
    w = rescale_truncate(u, 2)
    assert np.allclose(w.values, np.clip(4 * (u.values - 0.75), 0, 1))
    with pytest.raises(ValueError):
        rescale_truncate(ScalarField.constant(disk, 1.5), 1)


def test_dump_roundtrip(tmp_path, disk):
    u = ScalarField.from_function(disk, lambda x: np.sin(3 * x[0]) * x[1] + 1e-17)
    dump_field(u, tmp_path / "f", "sine")
    v = load_field(tmp_path / "f")
    assert v.domain == disk
    assert np.array_equal(u.data, v.data)


values = st.floats(-5, 5, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-100)


@settings(max_examples=30, deadline=None)
@given(a=values, b=values, t=values)
def test_levelsets_partition(a, b, t):
    dom = BallDomain(2, 1.0, 1 / 16)
    u = ScalarField.from_function(dom, lambda x: a * x[0] + b * x[1] ** 2)
    le = levelset_measure(u, None, "le", t).count
    gt = levelset_measure(u, None, "gt", t).count
    assert le + gt == dom.mask.sum()


@settings(max_examples=30, deadline=None)
@given(a=values, c=st.floats(0, 2))
def test_l2_average_homogeneous(a, c):
    dom = BallDomain(2, 1.0, 1 / 16)
    u = ScalarField.from_function(dom, lambda x: np.cos(x[0]) + c * x[1])
    assert l2_average(u * a) == pytest.approx(abs(a) * l2_average(u), rel=1e-12, abs=1e-300)

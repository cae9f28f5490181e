import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgbench.geometry import BallDomain
from dgbench.harness import oracle_check, random_blobs
from dgbench.shadow import (CellSet, DirectionSample, angular_union_measure, build_trees_example, default_directions,
                            direction_set_measure, dump_cellset, find_shooting_direction, load_cellset, min_shadow,
                            projection_measure, verify_l2)


def _disk_set(dom, c, r):
    return CellSet.from_predicate(dom, lambda x: (x[0] - c[0]) ** 2 + (x[1] - c[1]) ** 2 < r * r)


@pytest.mark.parametrize("n,M", [(2, 360), (3, 500)])
def test_direction_sample(n, M):
    D = DirectionSample(n, M, seed=3)
    assert D.vectors.shape == (M, n)
    assert np.allclose(np.linalg.norm(D.vectors, axis=1), 1)
    assert np.array_equal(D.vectors, DirectionSample(n, M, seed=3).vectors)
    assert not np.array_equal(D.vectors, DirectionSample(n, M, seed=4).vectors)
    # balanced sample: the mean direction is near zero
    assert np.linalg.norm(D.vectors.mean(axis=0)) < 0.02
    assert D.weight * M == pytest.approx(2 * math.pi if n == 2 else 4 * math.pi)


def test_disk_seen_from_origin(disk):
    # [DERIVED] a disk of radius rho at distance d subtends 2 asin(rho/d)
    E = _disk_set(disk, (0.5, 0.0), 0.125)
    exact = angular_union_measure(E, (0.0, 0.0))
    continuum = 2 * math.asin(0.125 / 0.5)
    assert exact == pytest.approx(continuum, abs=2 * disk.h / 0.5)
    val, se = direction_set_measure(E, (0.0, 0.0), default_directions(2, 0, 3600), with_error=True)
    assert abs(val - exact) <= 3 * se


def test_angular_union_single_cell():
    dom = BallDomain(2, 1.0, 1 / 8)
    cells = np.zeros(dom.shape, bool)
    cells[dom.offset + 4, dom.offset] = True  # center (0.5, 0)
    E = CellSet(dom, cells)
    # a square of side h seen face-on from distance d: 2 atan(h / (2 d - h))
    assert angular_union_measure(E, (0.0, 0.0)) == pytest.approx(2 * math.atan(0.0625 / 0.4375), rel=1e-12)
    assert angular_union_measure(E, (0.5, 0.0)) == pytest.approx(2 * math.pi)


def test_full_set_is_seen_everywhere(disk):
    E = CellSet(disk, disk.mask.copy())
    assert direction_set_measure(E, (0.3, 0.2), default_directions(2, 0, 180)) == pytest.approx(2 * math.pi)


def test_l2_lower_bound(disk, rng):
    D = default_directions(2, 1, 720)
    for _ in range(5):
        E = random_blobs(disk, rng)
        assert verify_l2(E, (0.0, 0.0), D).ok


def test_point_outside_ball_rejected(disk):
    E = _disk_set(disk, (0.0, 0.0), 0.2)
    with pytest.raises(ValueError):
        direction_set_measure(E, (1.0, 0.0), default_directions(2))


def test_shooting_direction(disk):
    E1 = _disk_set(disk, (0.0, 0.6), 0.2)
    E2 = _disk_set(disk, (0.0, -0.5), 0.2)
    shot = find_shooting_direction(E1, E2, default_directions(2, 0, 360))
    assert shot.report.ok
    # straight up is the best direction; every E2 point then sees E1
    assert shot.sigma0[1] > 0.99
    assert shot.E3.count == E2.count
    assert shot.E3.subset_of(E2)


def test_shooting_rejects_overlap(disk):
    E = _disk_set(disk, (0.0, 0.0), 0.2)
    with pytest.raises(ValueError):
        find_shooting_direction(E, E, default_directions(2, 0, 90))


def test_projection_of_disk(disk):
    E = _disk_set(disk, (0.1, -0.2), 0.25)
    assert projection_measure(E, (1.0, 0.0)) == pytest.approx(0.5, abs=2 * disk.h)
    assert projection_measure(E, (1.0, 1.0)) == pytest.approx(0.5, abs=3 * disk.h)


def test_min_shadow_of_central_disk(disk):
    E = _disk_set(disk, (0.0, 0.0), 0.25)
    S, rep = min_shadow(E, default_directions(2, 0, 720))
    # farthest viewpoints sit on the unit circle: 2 asin(1/4)
    assert S == pytest.approx(2 * math.asin(0.25), abs=0.03)
    assert rep.ok


def test_trees_configuration():
    ex = build_trees_example(0.125, 1 / 32)
    assert ex.expectations["trees"] == 4
    assert len(ex.tree_centers) == 4
    # centers sit on lattice points; |{i in Z^2: |i| < 4}| = 45 cells per tree
    h = ex.E1.domain.h
    assert ex.E2.count == 4 * sum(1 for i in range(-4, 5) for j in range(-4, 5) if i * i + j * j < 16)
    assert ex.E2.measure == pytest.approx(4 * 45 * h * h)
    with pytest.raises(ValueError):
        build_trees_example(0.125, 1 / 32, h=1 / 64)


def test_pixel_sets_bias_shrinks_with_step(rng):
    # isolated pixels are clipped at their corners by a finite march step
    dom = BallDomain(2, 1.0, 1 / 32)
    cells = dom.mask & (rng.uniform(size=dom.shape) < 0.01)
    E = CellSet(dom, cells)
    D = default_directions(2, 0, 3600)
    x = (0.0, 0.0)
    exact = angular_union_measure(E, x)
    errs = [abs(direction_set_measure(E, x, D, step=dom.h / k) - exact) for k in (2, 8)]
    assert errs[1] <= errs[0]


def test_oracle_on_blobs(disk, rng):
    D = default_directions(2, 2, 720)
    for i in range(3):
        E = random_blobs(disk, rng)
        assert oracle_check(E, (0.0, -0.95), D, i).ok


def test_cellset_roundtrip(tmp_path, disk):
    E = _disk_set(disk, (0.2, 0.1), 0.3)
    dump_cellset(E, tmp_path / "E")
    F = load_cellset(tmp_path / "E")
    assert np.array_equal(E.cells, F.cells)


@settings(max_examples=20, deadline=None)
@given(cx=st.floats(-0.5, 0.5), cy=st.floats(-0.5, 0.5), r=st.floats(0.05, 0.3), t=st.floats(0, 2 * math.pi))
def test_sigma_is_monotone_under_inclusion(cx, cy, r, t):
    dom = BallDomain(2, 1.0, 1 / 16)
    small = _disk_set(dom, (cx, cy), r)
    big = _disk_set(dom, (cx, cy), r + 0.1)
    x = (0.9 * math.cos(t), 0.9 * math.sin(t))
    D = default_directions(2, 0, 180)
    assert direction_set_measure(small, x, D) <= direction_set_measure(big, x, D)
    assert angular_union_measure(small, x) <= angular_union_measure(big, x) + 1e-12

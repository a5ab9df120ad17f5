"""Domain-path tests: motion evaluation, freezing, gap measurement, margin check."""
import numpy as np
import pytest

from rbsde.domains import (
    AdaptedBall,
    DiscretizedDomainPath,
    MovingBall,
    MovingPolytope,
    StaticDomain,
    discretization_gap,
    discretize,
    verify_h4,
)
from rbsde.geometry import Ball, Box, Polytope


def unit_ball_path(T=1.0):
    return StaticDomain(Ball([0.0, 0.0], 1.0), horizon=T, interior=[0.0, 0.0])


def rolling_ball_path(T=1.0, interior=None):
    if interior is None:
        interior = lambda t: np.array([t, 0.0])
    return MovingBall(center=lambda t: np.array([t, 0.0]), radius=1.0,
                      horizon=T, interior=interior, lipschitz=1.0)


def test_at_static_and_moving():
    path = unit_ball_path()
    body = path.at(0.3)
    assert isinstance(body, Ball) and body.radius == 1.0
    mb = rolling_ball_path()
    b = mb.at(0.5)
    np.testing.assert_allclose(b.center, [0.5, 0.0])
    assert b.radius == 1.0


def test_at_rejects_times_outside_horizon():
    path = unit_ball_path(T=1.0)
    with pytest.raises(ValueError):
        path.at(-0.5)
    with pytest.raises(ValueError):
        path.at(1.5)


def test_adapted_ball_evaluation():
    path = AdaptedBall(base=lambda t: np.array([0.0, 0.0]),
                       modulation=[[0.1], [0.0]], radius=2.0,
                       horizon=1.0, interior=lambda t, w: np.array([0.1 * w[0], 0.0]))
    hist = (np.array([0.0, 0.4]), np.array([[0.0], [1.0]]))
    body = path.at(0.4, history=hist)
    np.testing.assert_allclose(body.center, [0.1, 0.0])
    assert body.radius == 2.0
    with pytest.raises(ValueError):
        path.at(0.4)  # no history
    with pytest.raises(ValueError):
        path.at(0.7, history=hist)  # history stops at 0.4


def test_adapted_ball_non_anticipative():
    path = AdaptedBall(base=[0.0, 0.0], modulation=[[0.5], [0.0]], radius=1.0,
                       horizon=1.0, interior=[0.0, 0.0])
    t_hist = np.array([0.0, 0.25, 0.5, 0.75])
    w_a = np.array([[0.0], [1.0], [-0.5], [3.0]])
    w_b = w_a.copy()
    w_b[3] = [-9.0]  # differs only after t=0.5
    b_a = path.at(0.5, history=(t_hist, w_a))
    b_b = path.at(0.5, history=(t_hist, w_b))
    np.testing.assert_array_equal(b_a.center, b_b.center)
    assert b_a.radius == b_b.radius


def test_discretize_static():
    disc = discretize(unit_ball_path(T=1.0), j=4)
    np.testing.assert_allclose(disc.breakpoints, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert all(b is disc.bodies[0] for b in disc.bodies)


def test_discretize_moving_ball_left_freeze():
    disc = discretize(rolling_ball_path(T=1.0), j=2)
    np.testing.assert_allclose(disc.breakpoints, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(disc.bodies[0].center, [0.0, 0.0])
    np.testing.assert_allclose(disc.bodies[1].center, [0.5, 0.0])
    # interval membership: [0, 0.5) uses the first body, [0.5, 1] the second
    assert disc.at(0.49) is disc.bodies[0]
    assert disc.at(0.5) is disc.bodies[1]
    assert disc.at(1.0) is disc.bodies[1]


def test_discretize_with_widths():
    disc = discretize(rolling_ball_path(T=1.0), j=3, widths=[0.4, 0.4, 0.2])
    np.testing.assert_allclose(disc.breakpoints, [0.0, 0.4, 0.8, 1.0])
    with pytest.raises(ValueError):
        discretize(rolling_ball_path(T=1.0), j=3, widths=[0.1, 0.8])  # 0.1 < 1/3
    with pytest.raises(ValueError):
        discretize(rolling_ball_path(T=1.0), j=3, widths=[0.4, 0.4])  # stops short


def test_freezing_consistency():
    path = rolling_ball_path(T=1.0)
    disc = discretize(path, j=4)
    for left in disc.breakpoints[:-1]:
        assert disc.at(left) is path.at(left)


def test_discretization_gap_static_zero():
    path = unit_ball_path()
    disc = discretize(path, j=4)
    assert discretization_gap(path, disc, np.linspace(0, 1, 101)) == 0.0


def test_discretization_gap_moving_ball():
    path = rolling_ball_path(T=1.0)
    grid = np.linspace(0.0, 1.0, 101)
    gap2 = discretization_gap(path, discretize(path, j=2), grid)
    assert gap2 <= 0.5 + 1e-9
    # worst point is the horizon itself: frozen centre 0.5, true centre 1.0
    assert gap2 == pytest.approx(0.5, abs=1e-12)
    gaps = [discretization_gap(path, discretize(path, j=j), grid) for j in (2, 4, 8, 16)]
    for a, b in zip(gaps, gaps[1:]):
        assert b <= a + 1e-12  # monotone refinement
        assert abs(a / b - 2.0) <= 0.2  # halves within 10%


def test_moving_polytope_path():
    sq2 = np.sqrt(2.0)
    path = MovingPolytope(
        normals=[[1 / sq2, 1 / sq2], [-1.0, 0.0], [0.0, -1.0]],
        offsets=lambda t: np.array([1 / sq2 + t, 2.0, 2.0]),
        horizon=1.0, interior=[0.0, 0.0], lipschitz=sq2)
    b0 = path.at(0.0)
    b1 = path.at(1.0)
    assert isinstance(b0, Polytope)
    assert b1.offsets[0] > b0.offsets[0]
    disc = discretize(path, j=2)
    gap = discretization_gap(path, disc, np.linspace(0, 1, 51))
    # the far vertex slides at speed sqrt(2) when the face offset grows at rate 1
    assert gap == pytest.approx(0.5 * sq2, rel=1e-9)


def test_verify_h4_reports():
    rep = verify_h4(unit_ball_path(), np.linspace(0, 1, 11))
    assert rep.passed and rep.min_margin == pytest.approx(1.0)
    rep = verify_h4(rolling_ball_path(), np.linspace(0, 1, 11))
    assert rep.passed and rep.min_margin == pytest.approx(1.0)


def test_verify_h4_boundary_touch_rejected():
    path = rolling_ball_path(T=1.0, interior=[0.0, 0.0])
    rep = verify_h4(path, np.linspace(0, 1, 11))
    assert not rep.passed
    assert rep.min_margin == pytest.approx(0.0, abs=1e-12)
    assert rep.argmin_time == pytest.approx(1.0)


def test_verify_h4_outside_raises():
    path = MovingBall(center=lambda t: np.array([2.0 * t, 0.0]), radius=1.0,
                      horizon=1.0, interior=[0.0, 0.0])
    with pytest.raises(ValueError):
        verify_h4(path, np.linspace(0, 1, 11))


def test_discretize_rejects_adapted():
    path = AdaptedBall(base=[0.0], modulation=[[1.0]], radius=1.0,
                       horizon=1.0, interior=[0.0])
    with pytest.raises(NotImplementedError):
        discretize(path, j=2)


def test_static_box_path_margin():
    path = StaticDomain(Box([-0.5], [0.5]), horizon=2.0, interior=[0.0])
    rep = verify_h4(path, np.linspace(0, 2, 9))
    assert rep.passed and rep.min_margin == pytest.approx(0.5)

import numpy as np
import pytest
from scipy.linalg import expm

from koopman_lyap.dynamics import (
    BlowUpError,
    DynamicsError,
    EquilibriumError,
    SpectrumError,
    integrate_flow,
    jacobian_exprs,
    linearize,
    nonlinear_part,
    rk4_step,
)
from koopman_lyap.expr import parse_vector_field


@pytest.fixture
def cubic_field():
    # decoupled system with a quadratic coupling term in the second row
    return parse_vector_field(["-2*x1", "-3*(x2 - x1^2)"])


@pytest.fixture
def duffing_field():
    return parse_vector_field(["x2", "-3*x2 - 1*x1 - 1*x1^3"])


def test_linearize_cubic_field(cubic_field):
    lin = linearize(cubic_field)
    np.testing.assert_allclose(lin.E, [[-2.0, 0.0], [0.0, -3.0]], atol=1e-14)
    np.testing.assert_allclose(lin.eigenvalues, [-2.0, -3.0], atol=1e-14)
    np.testing.assert_allclose(
        lin.left_eigenvectors, [[1.0, 0.0], [0.0, 1.0]], atol=1e-14
    )
    assert lin.dim == 2


def test_linearize_duffing(duffing_field):
    lin = linearize(duffing_field)
    np.testing.assert_allclose(lin.E, [[0.0, 1.0], [-1.0, -3.0]], atol=1e-14)
    expected = np.array([(-3 + np.sqrt(5)) / 2, (-3 - np.sqrt(5)) / 2])
    np.testing.assert_allclose(lin.eigenvalues, expected, atol=1e-12)
    # descending order, slow mode first
    assert lin.eigenvalues[0] > lin.eigenvalues[1]


def test_left_eigenvector_identity(duffing_field):
    lin = linearize(duffing_field)
    for lam, w in zip(lin.eigenvalues, lin.left_eigenvectors):
        np.testing.assert_allclose(w @ lin.E, lam * w, atol=1e-12)
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
        assert w[np.argmax(np.abs(w))] > 0


def test_linearize_rejects_non_equilibrium():
    fld = parse_vector_field(["x2 + 1", "-3*x2 - x1"])
    with pytest.raises(EquilibriumError, match="not an equilibrium"):
        linearize(fld)


def test_linearize_rejects_complex_spectrum():
    # light damping makes the origin a spiral
    fld = parse_vector_field(["x2", "-0.5*x2 - 1*x1 - 1*x1^3"])
    with pytest.raises(SpectrumError, match="complex"):
        linearize(fld)


def test_linearize_rejects_repeated_eigenvalues():
    fld = parse_vector_field(["-1*x1", "-1*x2"])
    with pytest.raises(SpectrumError, match="repeated"):
        linearize(fld)


def test_linearize_rejects_non_hurwitz():
    fld = parse_vector_field(["x1", "-1*x2"])
    with pytest.raises(SpectrumError, match="Hurwitz"):
        linearize(fld)


def test_linearize_ignores_higher_order_terms(cubic_field):
    perturbed = parse_vector_field(
        ["-2*x1 + 5*x1^2*x2", "-3*(x2 - x1^2) - 7*x2^3"]
    )
    lin0 = linearize(cubic_field)
    lin1 = linearize(perturbed)
    np.testing.assert_allclose(lin1.E, lin0.E, atol=1e-12)


def test_jacobian_exprs_entries(cubic_field):
    rows = jacobian_exprs(cubic_field)
    vals = np.array([[e.evaluate((1.0, 2.0)) for e in row] for row in rows])
    np.testing.assert_allclose(vals, [[-2.0, 0.0], [6.0, -3.0]], atol=1e-14)


def test_nonlinear_part_values(cubic_field):
    lin = linearize(cubic_field)
    np.testing.assert_allclose(
        nonlinear_part(cubic_field, lin, np.array([1.0, 1.0])), [0.0, 3.0]
    )
    np.testing.assert_allclose(
        nonlinear_part(cubic_field, lin, np.zeros(2)), [0.0, 0.0]
    )


def test_nonlinear_part_duffing(duffing_field):
    lin = linearize(duffing_field)
    pts = np.random.default_rng(0).uniform(-2, 2, size=(25, 2))
    for p in pts:
        np.testing.assert_allclose(
            nonlinear_part(duffing_field, lin, p),
            [0.0, -p[0] ** 3],
            atol=1e-12,
        )


def test_nonlinear_part_batch(cubic_field):
    lin = linearize(cubic_field)
    pts = np.random.default_rng(1).uniform(-2, 2, size=(30, 2))
    batch = nonlinear_part(cubic_field, lin, pts.T)
    assert batch.shape == (2, 30)
    for j, p in enumerate(pts):
        np.testing.assert_allclose(
            batch[:, j], nonlinear_part(cubic_field, lin, p), atol=1e-14
        )


def test_nonlinear_part_is_second_order(cubic_field, duffing_field):
    # ||G(x)|| = O(||x||^2) near the origin
    rng = np.random.default_rng(2)
    for fld in (cubic_field, duffing_field):
        lin = linearize(fld)
        for _ in range(50):
            x = rng.uniform(-1e-3, 1e-3, size=2)
            g = nonlinear_part(fld, lin, x)
            assert np.linalg.norm(g) <= 10.0 * np.linalg.norm(x) ** 2


# --- integration -------------------------------------------------------------


def test_zero_field_is_stationary():
    fld = parse_vector_field(["0*x1", "0*x2"])
    x0 = np.array([0.3, -0.7])
    traj = integrate_flow(fld, x0, t_end=1.0, dt=0.1)
    np.testing.assert_array_equal(traj.states[-1], x0)
    assert traj.times[0] == 0.0
    assert traj.times[-1] == 1.0


def test_scalar_decay_reaches_exp_minus_two():
    fld = parse_vector_field(["-2*x1", "-3*x2"])
    traj = integrate_flow(fld, np.array([1.0, 0.0]), t_end=1.0, dt=1e-3)
    assert traj.states[-1, 0] == pytest.approx(np.exp(-2.0), abs=1e-6)


def test_flow_matches_matrix_exponential(duffing_field):
    # on the linear part alone, RK4 must track expm to 1e-6 over [0, 5]
    lin = linearize(duffing_field)
    fld = parse_vector_field(["x2", "-3*x2 - 1*x1"])
    x0 = np.array([1.0, -0.5])
    traj = integrate_flow(fld, x0, t_end=5.0, dt=1e-3)
    for t, x in zip(traj.times[::500], traj.states[::500]):
        np.testing.assert_allclose(x, expm(lin.E * t) @ x0, atol=1e-6)


def test_trajectory_decays_to_origin(cubic_field):
    traj = integrate_flow(cubic_field, np.array([1.5, -2.0]), t_end=10.0, dt=1e-3)
    assert np.linalg.norm(traj.states[-1]) <= 1e-6


def test_dt_is_nudged_to_divide_t_end():
    fld = parse_vector_field(["-1*x1", "-1*x2"])
    traj = integrate_flow(fld, np.array([1.0, 1.0]), t_end=1.0, dt=0.3)
    assert traj.times[-1] == 1.0
    steps = np.diff(traj.times)
    np.testing.assert_allclose(steps, steps[0], rtol=1e-12)


def test_blow_up_raises():
    fld = parse_vector_field(["x1^2 - 0*x2", "0*x1 + x2"])
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(BlowUpError, match="blew up") as exc:
            integrate_flow(fld, np.array([2.0, 0.0]), t_end=5.0, dt=1e-3)
    assert 0.0 < exc.value.t <= 5.0


def test_integrate_flow_argument_validation(cubic_field):
    with pytest.raises(DynamicsError, match="positive"):
        integrate_flow(cubic_field, np.zeros(2), t_end=-1.0, dt=0.1)
    with pytest.raises(DynamicsError, match="positive"):
        integrate_flow(cubic_field, np.zeros(2), t_end=1.0, dt=0.0)
    with pytest.raises(DynamicsError, match="shape"):
        integrate_flow(cubic_field, np.zeros(3), t_end=1.0, dt=0.1)


def test_rk4_step_order():
    # single RK4 step on x' = -x has local error O(dt^5)
    fld = parse_vector_field(["-1*x1"])
    x = np.array([1.0])
    for dt in (0.1, 0.05):
        err = abs(rk4_step(fld, x, dt)[0] - np.exp(-dt))
        assert err <= dt**5

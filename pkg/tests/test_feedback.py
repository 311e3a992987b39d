import numpy as np
import pytest

from memstab.feedback import (
    FeedbackGains,
    build_device_matrices,
    feedback_matrix,
    injection_matrix,
    observer_initial_state,
    orthogonal_projection,
    static_output_gain,
)
from memstab.fem import assemble_mass, h_norm
from memstab.mesh import DeviceLayout, build_mesh, chessboard_layout
from memstab.problems import initial_state


@pytest.fixture(scope="module")
def setup():
    mesh = build_mesh(2, 0, 4)
    layout = chessboard_layout(2, 0.5)
    M = assemble_mass(mesh)
    dm = build_device_matrices(mesh, layout, M)
    return mesh, layout, M, dm


def test_gains_validation():
    FeedbackGains(0.0, 0.0)
    with pytest.raises(ValueError):
        FeedbackGains(-1.0, 0.0)


def test_device_counts(setup):
    _, _, _, dm = setup
    assert dm.U.shape[1] == 2
    assert dm.W.shape[1] == 2


def test_gram_matrices_spd_and_diagonal(setup):
    _, _, _, dm = setup
    for V in (dm.VU, dm.VW):
        assert np.allclose(V, V.T)
        assert np.all(np.linalg.eigvalsh(V) > 0)
        assert np.abs(V - np.diag(np.diag(V))).max() == 0.0  # disjoint supports


def test_gram_diagonal_approaches_support_area():
    """Nodal-indicator quadrature inflates the support mass by O(h)."""
    area = 0.25**2
    layout = chessboard_layout(2, 0.5)
    errors = []
    for rf in (0, 1, 2, 3):
        mesh = build_mesh(2, rf, 4)
        M = assemble_mass(mesh)
        dm = build_device_matrices(mesh, layout, M)
        errors.append(abs(dm.VU[0, 0] - area))
    assert all(e1 < e0 / 1.8 for e0, e1 in zip(errors, errors[1:]))
    assert errors[-1] < 0.1 * area


def test_feedback_matrix_zero_gain(setup):
    _, _, M, dm = setup
    assert np.abs(feedback_matrix(dm, M, 0.0)).max() == 0.0
    assert np.abs(injection_matrix(dm, M, 0.0)).max() == 0.0
    assert np.abs(static_output_gain(dm, 0.0)).max() == 0.0


def test_feedback_scaling_linearity(setup):
    _, _, M, dm = setup
    rng = np.random.default_rng(0)
    y = rng.normal(size=M.shape[0])
    K1 = feedback_matrix(dm, M, 100.0)
    K2 = feedback_matrix(dm, M, 200.0)
    assert np.allclose(K2 @ y, 2.0 * (K1 @ y), rtol=1e-13)


def test_feedback_of_constant_is_support_average():
    """For constant states the input is -lambda1 times the support-weighted
    mean, which tends to the constant itself as the mesh is refined."""
    layout = chessboard_layout(2, 0.5)
    c, lam = 3.0, 1.0
    ratios = []
    for rf in (0, 2, 3):
        mesh = build_mesh(2, rf, 4)
        M = assemble_mass(mesh)
        dm = build_device_matrices(mesh, layout, M)
        K = feedback_matrix(dm, M, lam)
        u = K @ np.full(mesh.n_nodes, c)
        # exact discrete identity: the weighted mean of the indicator masses
        ones = np.ones(mesh.n_nodes)
        for jcol in range(dm.U.shape[1]):
            col = dm.U[:, jcol].toarray().ravel()
            expected = -lam * c * (col @ (M @ ones)) / dm.VU[jcol, jcol]
            assert u[jcol] == pytest.approx(expected, rel=1e-12)
        ratios.append(abs(u[0] / (-lam * c) - 1.0))
    assert ratios[1] < ratios[0] / 3 and ratios[2] < ratios[1] / 1.8


def test_feedback_ignores_states_away_from_actuators(setup):
    """States supported outside the actuator M-neighborhoods produce no input."""
    mesh, layout, M, dm = setup
    v = np.zeros(mesh.n_nodes)
    # nonzero only where every actuator indicator (and its mass coupling) is zero
    reach = np.abs(M @ dm.U.sum(axis=1).A.ravel() if hasattr(dm.U.sum(axis=1), "A")
                   else M @ np.asarray(dm.U.sum(axis=1)).ravel())
    far = np.flatnonzero(reach == 0.0)
    assert far.size > 0
    v[far] = np.random.default_rng(5).normal(size=far.size)
    K = feedback_matrix(dm, M, 200.0)
    assert np.abs(K @ v).max() < 1e-14


def test_injection_column_support(setup):
    """Column j of L lives in the M-neighborhood of sensor j's support."""
    mesh, layout, M, dm = setup
    L = injection_matrix(dm, M, 150.0)
    for jcol in range(dm.W.shape[1]):
        col_pattern = np.abs(
            (M @ dm.W[:, jcol]).toarray().ravel()) > 0
        outside = np.flatnonzero(~col_pattern)
        assert np.abs(L[outside, jcol]).max() == 0.0


def test_projection_idempotent_and_reproduces_span(setup):
    mesh, _, M, dm = setup
    rng = np.random.default_rng(1)
    for side, cols in (("actuators", dm.U), ("sensors", dm.W)):
        v = rng.normal(size=mesh.n_nodes)
        Pv = orthogonal_projection(dm, M, side, v)
        PPv = orthogonal_projection(dm, M, side, Pv)
        assert np.abs(PPv - Pv).max() < 1e-12
        span_vec = cols @ rng.normal(size=cols.shape[1])
        assert np.abs(
            orthogonal_projection(dm, M, side, span_vec) - span_vec
        ).max() < 1e-12


def test_projection_kills_orthogonal_complement(setup):
    mesh, _, M, dm = setup
    rng = np.random.default_rng(2)
    v = rng.normal(size=mesh.n_nodes)
    v = v - orthogonal_projection(dm, M, "actuators", v)
    # v now has zero M-inner product against every actuator indicator
    assert np.abs(dm.U.T @ (M @ v)).max() < 1e-13
    assert np.abs(orthogonal_projection(dm, M, "actuators", v)).max() < 1e-12


def test_projection_rejects_unknown_side(setup):
    _, _, M, dm = setup
    with pytest.raises(ValueError):
        orthogonal_projection(dm, M, "emitters", np.zeros(M.shape[0]))


def test_observer_initial_state_contraction(setup):
    mesh, _, M, dm = setup
    assert np.abs(observer_initial_state(dm, M, np.zeros(mesh.n_nodes))).max() == 0.0
    y0 = initial_state(mesh.nodes[:, 0], mesh.nodes[:, 1])
    yhat0 = observer_initial_state(dm, M, y0)
    assert h_norm(M, yhat0 - y0) <= h_norm(M, y0) + 1e-14
    # constructible from the output alone
    w0 = dm.W.T @ (M @ y0)
    import scipy.linalg as la
    rebuilt = dm.W @ la.cho_solve(dm.VW_chol, w0)
    assert np.allclose(rebuilt, yhat0, rtol=1e-13, atol=1e-15)


def test_static_gain_equals_state_feedback(setup):
    mesh, _, M, dm = setup
    rng = np.random.default_rng(9)
    K = feedback_matrix(dm, M, 200.0)
    K_stat = static_output_gain(dm, 200.0)
    for _ in range(5):
        y = rng.normal(size=mesh.n_nodes)
        w = dm.U.T @ (M @ y)
        assert np.abs(K_stat @ w - K @ y).max() < 1e-13 * max(
            1.0, np.abs(K @ y).max())


def test_static_gain_diagonal_for_disjoint_supports(setup):
    _, _, M, dm = setup
    lam = 37.0
    K_stat = static_output_gain(dm, lam)
    expected = -lam * np.diag(1.0 / np.diag(dm.VU))
    assert np.allclose(K_stat, expected, rtol=1e-13)


def test_degenerate_layout_rejected():
    mesh = build_mesh(2, 0, 4)
    M = assemble_mass(mesh)
    rect = chessboard_layout(2, 0.5).actuator_supports[0]
    bad = DeviceLayout(
        ell=2, support_fraction=0.5,
        actuator_cells=((0, 0), (0, 0)),
        sensor_cells=((1, 0),),
        actuator_supports=(rect, rect),  # duplicated column -> singular Gram
        sensor_supports=(chessboard_layout(2, 0.5).sensor_supports[0],),
    )
    with pytest.raises(ValueError):
        build_device_matrices(mesh, bad, M)

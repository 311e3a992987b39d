import numpy as np
import pytest
import scipy.sparse.linalg as spla

from memstab.fem import CoefficientField
from memstab.feedback import observer_initial_state
from memstab.memory import EXPONENTIAL, RIESZ, KernelSpec
from memstab.mesh import build_mesh, chessboard_layout
from memstab.problems import (
    default_field,
    exact_neg_laplacian,
    exact_solution,
    initial_state,
    manufactured_forcing,
)
from memstab.timestepper import (
    CoupledScheme,
    NormSeries,
    PlantScheme,
    SolverError,
    assemble_system,
    decay_rate_fit,
    run_coupled,
    run_manufactured,
    run_plant,
)


def heat_field(nu=0.1):
    zero = lambda x1, x2, t: np.zeros_like(x1)
    return CoefficientField(
        a=zero, b=lambda x1, x2, t: (np.zeros_like(x1), np.zeros_like(x1)),
        nu=nu, time_dependent=False)


@pytest.fixture(scope="module")
def small_setup():
    mesh = build_mesh(2, 0, 4)
    layout = chessboard_layout(2, 0.5)
    return mesh, layout


def test_pure_crank_nicolson_oracle(small_setup):
    """With zero coefficients and gains one step is plain CN heat stepping."""
    mesh, layout = small_setup
    k = 1e-3
    system = assemble_system(mesh, heat_field(), k, layout=layout,
                             kernel=KernelSpec(EXPONENTIAL, 1.0))
    y0 = initial_state(system.x1, system.x2)
    scheme = CoupledScheme(system, y0, y0.copy())
    scheme.step()
    # independent CN solve on the same matrices
    A_plus = (2.0 * system.M + k * system.S_nu).tocsc()
    rhs = (2.0 * system.M - k * system.S_nu) @ y0
    expected = spla.spsolve(A_plus, rhs)
    assert np.abs(scheme.y_curr - expected).max() < 1e-12
    assert np.abs(scheme.yhat_curr - expected).max() < 1e-12


def test_equal_initial_states_keep_observer_on_plant(small_setup):
    """y1 = yhat1 makes the error dynamics identically zero, any lambda2."""
    mesh, layout = small_setup
    system = assemble_system(mesh, default_field(eta=0.01), 4e-4,
                             kernel=KernelSpec(EXPONENTIAL, 1.0),
                             layout=layout, lambda1=150.0, lambda2=321.0)
    y0 = initial_state(system.x1, system.x2)
    scheme = CoupledScheme(system, y0, y0.copy())
    for _ in range(40):
        scheme.step()
        scale = max(np.abs(scheme.y_curr).max(), 1.0)
        assert np.abs(scheme.yhat_curr - scheme.y_curr).max() < 1e-11 * scale


def test_ghost_first_step_hand_check(small_setup):
    """First step against the hand-expanded ghost formulas.

    With y_0 := y_1, C_0 := C_1 and F_0 := F_1 the extrapolated terms collapse
    to twice their time-t_1 values.
    """
    mesh, layout = small_setup
    k = 4e-4
    field = default_field(eta=0.05)
    kernel = KernelSpec(EXPONENTIAL, 1.0)
    system = assemble_system(mesh, field, k, kernel=kernel, layout=layout,
                             lambda1=200.0, lambda2=100.0)
    M = system.M
    y1 = initial_state(system.x1, system.x2)
    yhat1 = observer_initial_state(system.devices, M, y1)

    scheme = CoupledScheme(system, y1, yhat1)
    scheme.step()

    # hand expansion
    from memstab.fem import assemble_convection, assemble_reaction
    R1 = assemble_reaction(mesh, field, 0.0)
    R2 = assemble_reaction(mesh, field, k)
    C1 = assemble_convection(mesh, field, 0.0)
    X_plus = (2.0 * M + k * system.S_nu + k * R2).tocsc()
    X_minus = (2.0 * M - k * system.S_nu - k * R1).tocsr()
    fb1 = system.MU @ (system.K @ yhat1)
    inj1 = system.L @ (system.WtM @ (yhat1 - y1))
    # memory vanishes at the first two time indices
    rhs_y = X_minus @ y1 - k * (2.0 * (C1 @ y1)) + k * (2.0 * fb1)
    rhs_yhat = (X_minus @ yhat1 - k * (2.0 * (C1 @ yhat1))
                + k * (2.0 * fb1) + k * (2.0 * inj1))
    lu = spla.splu(X_plus)
    y2 = lu.solve(rhs_y)
    yhat2 = lu.solve(rhs_yhat)
    assert np.abs(scheme.y_curr - y2).max() < 1e-13
    assert np.abs(scheme.yhat_curr - yhat2).max() < 1e-13


def test_free_run_linearity(small_setup):
    """Free coupled dynamics is linear: run(alpha y0) = alpha run(y0)."""
    mesh, layout = small_setup
    system = assemble_system(mesh, default_field(eta=0.1), 1e-3,
                             kernel=KernelSpec(RIESZ, 0.5), layout=layout)
    y0 = initial_state(system.x1, system.x2)
    yhat0 = observer_initial_state(system.devices, system.M, y0)
    alpha = -2.5
    a = CoupledScheme(system, y0, yhat0)
    b = CoupledScheme(system, alpha * y0, alpha * yhat0)
    for _ in range(25):
        a.step()
        b.step()
        scale = max(np.abs(b.y_curr).max(), 1e-12)
        assert np.abs(b.y_curr - alpha * a.y_curr).max() < 1e-11 * scale


def test_memoryless_runs_ignore_kernel_family(small_setup):
    """eta = 0 must produce bitwise-identical output for either kernel."""
    mesh, layout = small_setup
    y0 = initial_state(mesh.nodes[:, 0], mesh.nodes[:, 1])
    out = []
    for kernel in (KernelSpec(EXPONENTIAL, 1.0), KernelSpec(RIESZ, 0.5)):
        system = assemble_system(mesh, default_field(eta=0.0), 1e-3,
                                 kernel=kernel, layout=layout,
                                 lambda1=200.0, lambda2=200.0)
        yhat0 = observer_initial_state(system.devices, system.M, y0)
        out.append(run_coupled(system, y0, yhat0, 30))
    assert np.array_equal(out[0].norm_y, out[1].norm_y)
    assert np.array_equal(out[0].norm_err, out[1].norm_err)


def test_constant_coefficients_allow_cached_factorization(small_setup):
    """Static and per-step factorizations give identical trajectories."""
    mesh, layout = small_setup
    const = CoefficientField(
        a=lambda x1, x2, t: np.full_like(x1, -1.2),
        b=lambda x1, x2, t: (x1, np.zeros_like(x1)),
        nu=0.1, eta=0.0, time_dependent=False)
    varying = CoefficientField(a=const.a, b=const.b, nu=0.1, eta=0.0,
                               time_dependent=True)
    y0 = initial_state(mesh.nodes[:, 0], mesh.nodes[:, 1])
    series = []
    for field in (const, varying):
        system = assemble_system(mesh, field, 1e-3, layout=layout,
                                 lambda1=50.0, lambda2=50.0)
        yhat0 = observer_initial_state(system.devices, system.M, y0)
        series.append(run_coupled(system, y0, yhat0, 25))
    assert np.array_equal(series[0].norm_y, series[1].norm_y)
    assert np.array_equal(series[0].norm_err, series[1].norm_err)


def test_direct_and_cg_solvers_agree(small_setup):
    mesh, layout = small_setup
    y0 = initial_state(mesh.nodes[:, 0], mesh.nodes[:, 1])
    norms = []
    for solver in ("direct", "cg"):
        system = assemble_system(mesh, default_field(eta=0.01), 1e-3,
                                 kernel=KernelSpec(EXPONENTIAL, 1.0),
                                 layout=layout, lambda1=200.0, lambda2=200.0,
                                 solver=solver)
        yhat0 = observer_initial_state(system.devices, system.M, y0)
        norms.append(run_coupled(system, y0, yhat0, 50).norm_y)
    assert np.abs(norms[0] - norms[1]).max() < 1e-8


def test_static_matches_state_feedback_stepwise(small_setup):
    """The static output loop reproduces full-state feedback trajectories."""
    mesh, layout = small_setup
    system = assemble_system(mesh, default_field(eta=0.01), 4e-4,
                             kernel=KernelSpec(EXPONENTIAL, 1.0),
                             layout=layout, lambda1=200.0)
    y0 = initial_state(system.x1, system.x2)
    a = PlantScheme(system, y0, feedback="state")
    b = PlantScheme(system, y0, feedback="static")
    for _ in range(60):
        a.step()
        b.step()
        scale = max(np.abs(a.y_curr).max(), 1e-12)
        assert np.abs(a.y_curr - b.y_curr).max() <= 1e-12 * scale


def test_plant_feedback_requires_devices(small_setup):
    mesh, _ = small_setup
    system = assemble_system(mesh, heat_field(), 1e-3)
    with pytest.raises(ValueError):
        PlantScheme(system, np.zeros(system.n_dofs), feedback="state")
    with pytest.raises(ValueError):
        PlantScheme(system, np.zeros(system.n_dofs), feedback="bogus")


def test_manufactured_initial_error_zero_and_decreasing_under_refinement():
    errors = []
    for rf in (0, 1):
        mesh = build_mesh(2, rf, 4)
        field = default_field(eta=0.1)
        k = 4e-4 * 0.5**rf
        system = assemble_system(mesh, field, k, kernel=KernelSpec(RIESZ, 0.5))
        result = run_manufactured(system, int(round(0.05 / k)))
        assert result.errors[0] == 0.0
        errors.append(result.max_error)
    assert errors[1] < errors[0] / 2.5


def test_manufactured_forcing_matches_finite_differences():
    """Independent check: the forcing equals the strong-form residual of the
    benchmark solution, evaluated with finite differences."""
    field = default_field(eta=0.3)
    kernel = KernelSpec(RIESZ, 0.5)
    forcing = manufactured_forcing(field, kernel)
    x1, x2, t = 0.4375, 0.3125, 0.7
    h = 1e-5

    def y(a, b):
        return exact_solution(np.asarray(a), np.asarray(b))

    lap_fd = -(y(x1 + h, x2) + y(x1 - h, x2) + y(x1, x2 + h) + y(x1, x2 - h)
               - 4 * y(x1, x2)) / h**2
    g1_fd = (y(x1 + h, x2) - y(x1 - h, x2)) / (2 * h)
    g2_fd = (y(x1, x2 + h) - y(x1, x2 - h)) / (2 * h)
    b1, b2 = field.b(np.asarray(x1), np.asarray(x2), t)
    # kernel history integral for a steady profile: quadrature oracle
    from scipy.integrate import quad
    hist, _ = quad(lambda s: (t - s) ** (kernel.gamma - 1.0), 0.0, t,
                   epsabs=1e-13, epsrel=1e-12)
    expected = (field.nu * lap_fd
                + (1.0 + field.a(np.asarray(x1), np.asarray(x2), t)) * y(x1, x2)
                + b1 * g1_fd + b2 * g2_fd
                + field.eta * hist * lap_fd)
    got = forcing(np.asarray(x1), np.asarray(x2), t)
    assert got == pytest.approx(expected, rel=1e-7)
    assert exact_neg_laplacian(np.asarray(x1), np.asarray(x2)) == pytest.approx(
        lap_fd, rel=1e-5)


def test_run_plant_free_matches_coupled_plant_when_uncontrolled(small_setup):
    mesh, layout = small_setup
    field = default_field(eta=0.0)
    y0 = initial_state(mesh.nodes[:, 0], mesh.nodes[:, 1])
    sys_plant = assemble_system(mesh, field, 1e-3)
    sys_coupled = assemble_system(mesh, field, 1e-3, layout=layout)
    a = run_plant(sys_plant, y0, 20)
    yhat0 = observer_initial_state(sys_coupled.devices, sys_coupled.M, y0)
    b = run_coupled(sys_coupled, y0, yhat0, 20)
    assert np.allclose(a.norm_y, b.norm_y, rtol=1e-13)


def test_cg_failure_raises_solver_error(small_setup):
    mesh, _ = small_setup
    system = assemble_system(mesh, default_field(), 1e-3, solver="cg")
    scheme = PlantScheme(system, np.ones(system.n_dofs))
    # cripple the solver: one unpreconditioned iteration cannot hit 1e-10
    n = system.n_dofs
    scheme.ops._cg.maxiter = 1
    scheme.ops._cg._prec = spla.LinearOperator((n, n), matvec=lambda v: v)
    with pytest.raises(SolverError):
        scheme.step()


def synthetic_series(rate):
    t = np.linspace(0.0, 2.0, 101)
    n = np.exp(-rate * t)
    return NormSeries(times=t, norm_y=n, norm_err=n.copy(),
                      norm_yhat=n.copy(), norm_input=np.zeros_like(t))


def test_decay_rate_fit_exact_log_linear_data():
    rate, intercept = decay_rate_fit(synthetic_series(2.0), "y")
    assert rate == pytest.approx(2.0, abs=1e-10)
    assert intercept == pytest.approx(0.0, abs=1e-10)
    rate, _ = decay_rate_fit(synthetic_series(-0.5), "y")
    assert rate == pytest.approx(-0.5, abs=1e-10)
    rate, _ = decay_rate_fit(synthetic_series(0.0), "y")
    assert abs(rate) < 1e-12


def test_decay_rate_fit_window_and_errors():
    series = synthetic_series(1.0)
    rate, _ = decay_rate_fit(series, "y", window=(0.5, 1.5))
    assert rate == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        decay_rate_fit(series, "nonsense")
    with pytest.raises(ValueError):
        decay_rate_fit(series, "y", window=(1.999, 5.0))  # single sample
    bad = synthetic_series(1.0)
    bad.norm_y[-3] = 0.0
    with pytest.raises(ValueError):
        decay_rate_fit(bad, "y")


def test_assemble_system_validation(small_setup):
    mesh, _ = small_setup
    with pytest.raises(ValueError):
        assemble_system(mesh, heat_field(), 0.0)
    with pytest.raises(ValueError):
        assemble_system(mesh, heat_field(), 1e-3, solver="bogus")
    with pytest.raises(ValueError):
        assemble_system(mesh, default_field(eta=0.1), 1e-3)  # eta needs kernel

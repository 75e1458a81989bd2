"""Quasi-static stepping: Newton, active set, linear solve, marching."""
from __future__ import annotations

import numpy as np
import pytest

from faultmech.constitutive import ElasticMaterial, FrictionLaw, tau_max
from faultmech.contact import OPEN, SLIP, STICK, kkt_report
from faultmech.mesh import AxisSegment, DomainSpec, FaultSpec, build_structured_domain
from faultmech.pressure import PressureField
from faultmech.solver import ContactSolver, SolverConfig, SolverError, load_checkpoint

MAT = ElasticMaterial("rock", 2400.0, 10.0e9, 0.25)
STRONG = FrictionLaw("constant", 0.6, 0.6, 1.0, 2.0e6)
WEAK = FrictionLaw("constant", 0.1, 0.1, 1.0, 1.0e3)


def _mesh_two_columns(nz=4, h=1.0):
    spec = DomainSpec(
        x_segments=[AxisSegment(0.0, 1.0, "uniform", h), AxisSegment(1.0, 2.0, "uniform", h)],
        y_segments=[AxisSegment(0.0, 1.0, "uniform", h)],
        z_segments=[AxisSegment(-nz * h, 0.0, "uniform", h)],
        faults=[FaultSpec("F", "x", 1.0, 0.0, 1.0, -nz * h, 0.0)],
    )
    return build_structured_domain(spec)


def _uniform_t0(mesh, t_n=-10.0e6, t_t=0.0):
    m = mesh.interfaces.count
    t0 = np.zeros((m, 3))
    t0[:, 0] = t_n
    t0[:, 2] = t_t
    return t0


class StepsPressure:
    """Duck-typed pressure source driven by explicit per-step cell values."""

    def __init__(self, mesh, series, fault_dp=None):
        self.series = [np.zeros(mesh.n_cells)] + [np.asarray(s, dtype=float) for s in series]
        self.times = np.arange(len(self.series), dtype=float)
        self.m = mesh.interfaces.count
        self.fault_dp = fault_dp

    @property
    def n_steps(self):
        return len(self.series) - 1

    def field_at(self, step):
        fdp = np.zeros(self.m) if self.fault_dp is None else self.fault_dp[step]
        return PressureField(self.series[step], fdp)


def test_zero_pressure_step_keeps_state():
    mesh = _mesh_two_columns()
    solver = ContactSolver(mesh, [MAT], STRONG, _uniform_t0(mesh))
    s0 = solver.initial_state()
    s1, info = solver.solve_step(s0, np.zeros(mesh.n_cells), np.zeros(mesh.interfaces.count))
    assert np.array_equal(s1.u, s0.u)
    assert np.array_equal(s1.t_loc, s0.t_loc)
    assert np.array_equal(s1.status, s0.status)
    assert info.newton_iters[-1] == 0


def test_oedometer_patch_uniform_depletion():
    # uniform depletion with roller walls: exact 1D vertical strain,
    # undisturbed by a pass-through vertical fault
    mesh = _mesh_two_columns(nz=3)
    solver = ContactSolver(mesh, [MAT], STRONG, _uniform_t0(mesh))
    dp = -1.0e6
    s0 = solver.initial_state()
    s1, info = solver.solve_step(
        s0, np.full(mesh.n_cells, dp), np.zeros(mesh.interfaces.count)
    )
    lam, g = MAT.lame_lambda, MAT.shear_modulus
    eps_zz = MAT.biot * dp / (lam + 2.0 * g)
    z0 = mesh.bounds[0][2]
    u = s1.u.reshape(-1, 3)
    expected_uz = eps_zz * (mesh.points[:, 2] - z0)
    np.testing.assert_allclose(u[:, 2], expected_uz, rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(u[:, :2], 0.0, atol=1e-12)
    # fault stays fully bonded with the exact traction increment
    assert np.all(s1.status == STICK)
    assert np.all(s1.slip_acc == 0.0)
    # sealing fault: traction change is the total-stress change sigma'_xx - biot*dp
    dt_n = lam * eps_zz - MAT.biot * dp
    np.testing.assert_allclose(s1.t_loc[:, 0] - s0.t_loc[:, 0], dt_n, rtol=1e-8)
    np.testing.assert_allclose(s1.t_loc[:, 1:], 0.0, atol=1.0)
    assert np.max(np.abs(s1.g_n_book)) <= 1e-10


def test_differential_depletion_slips_weak_fault():
    mesh = _mesh_two_columns(nz=4)
    left = mesh.cell_centroids()[:, 0] < 1.0
    dp_cells = np.where(left, -5.0e6, 0.0)

    strong = ContactSolver(mesh, [MAT], STRONG, _uniform_t0(mesh))
    st1 = strong.march(StepsPressure(mesh, [dp_cells])).final
    assert np.all(st1.status == STICK)

    weak = ContactSolver(mesh, [MAT], WEAK, _uniform_t0(mesh))
    s1 = weak.march(StepsPressure(mesh, [dp_cells])).final
    slipping = s1.status == SLIP
    assert slipping.any()
    assert np.all(s1.slip_acc[slipping] > 0.0)
    # depleted (bottom) side settles: the fault's net jump points up and
    # the top element, where the relative motion is largest, moves up
    assert s1.dg_t[slipping, 1].sum() > 0.0
    assert slipping[-1] and s1.dg_t[-1, 1] > 0.0
    # sliding friction opposes the motion on whichever side it ends up
    moved = slipping & (np.hypot(s1.dg_t[:, 0], s1.dg_t[:, 1]) > 1e-12)
    assert np.all(np.sign(s1.t_loc[moved, 2]) == np.sign(s1.dg_t[moved, 1]))
    # capacity equality on sliding elements
    cap = tau_max(WEAK, s1.t_loc[slipping, 0], s1.slip_acc[slipping])
    tt = np.hypot(s1.t_loc[slipping, 1], s1.t_loc[slipping, 2])
    np.testing.assert_allclose(tt, cap, rtol=1e-8)
    # sticking elements stay inside the cone
    if (~slipping).any():
        caps = tau_max(WEAK, s1.t_loc[~slipping, 0], s1.slip_acc[~slipping])
        tts = np.hypot(s1.t_loc[~slipping, 1], s1.t_loc[~slipping, 2])
        assert np.all(tts <= caps * (1.0 + 1e-8))


def test_kkt_clean_after_slip():
    mesh = _mesh_two_columns(nz=4)
    left = mesh.cell_centroids()[:, 0] < 1.0
    solver = ContactSolver(mesh, [MAT], WEAK, _uniform_t0(mesh))
    s1 = solver.march(StepsPressure(mesh, [np.where(left, -5.0e6, 0.0)])).final
    rep = kkt_report(
        s1.status, s1.t_loc, s1.g_n_book, s1.dg_t, s1.slip_acc_start, WEAK, solver.tols
    )
    assert rep.ok(1e-2, 1e-10, 1e-6, 1e-6, 1e-8), rep


def test_newton_quadratic_tail():
    mesh = _mesh_two_columns(nz=4)
    left = mesh.cell_centroids()[:, 0] < 1.0
    solver = ContactSolver(mesh, [MAT], WEAK, _uniform_t0(mesh))
    hist = solver.march(StepsPressure(mesh, [np.where(left, -5.0e6, 0.0)]))
    norms = hist.records[-1].info.newton_residuals[-1]
    assert len(norms) >= 2
    # superlinear contraction at the end of the sequence
    assert norms[-1] <= 1e-2 * norms[-2] or norms[-1] == 0.0


def test_march_records_and_determinism():
    mesh = _mesh_two_columns(nz=3)
    left = mesh.cell_centroids()[:, 0] < 1.0
    series = [np.where(left, f * -2.0e6, 0.0) for f in (0.5, 1.0, 1.5)]
    pressure = StepsPressure(mesh, series)

    def run():
        solver = ContactSolver(mesh, [MAT], WEAK, _uniform_t0(mesh))
        return solver.march(pressure)

    h1, h2 = run(), run()
    assert len(h1.records) == 4  # initial state + three steps
    assert h1.records[0].time == 0.0
    for a, b in zip(h1.records, h2.records):
        assert np.array_equal(a.u, b.u)
        assert np.array_equal(a.t_loc, b.t_loc)
        assert np.array_equal(a.status, b.status)
        assert np.array_equal(a.slip_acc, b.slip_acc)


def test_march_slip_monotone_under_growing_load():
    mesh = _mesh_two_columns(nz=4)
    left = mesh.cell_centroids()[:, 0] < 1.0
    series = [np.where(left, f * -2.0e6, 0.0) for f in (1.0, 2.0, 3.0)]
    solver = ContactSolver(mesh, [MAT], WEAK, _uniform_t0(mesh))
    hist = solver.march(StepsPressure(mesh, series))
    tot = [r.slip_acc.sum() for r in hist.records]
    assert tot[0] == 0.0
    assert all(b >= a - 1e-15 for a, b in zip(tot, tot[1:]))
    assert tot[-1] > 0.0


def test_checkpoint_restart_matches_straight_run(tmp_path):
    mesh = _mesh_two_columns(nz=3)
    left = mesh.cell_centroids()[:, 0] < 1.0
    series = [np.where(left, f * -2.0e6, 0.0) for f in (1.0, 2.0, 3.0, 4.0)]
    pressure = StepsPressure(mesh, series)

    solver = ContactSolver(mesh, [MAT], WEAK, _uniform_t0(mesh))
    full = solver.march(pressure)

    ck = tmp_path / "state.npz"
    s2 = ContactSolver(mesh, [MAT], WEAK, _uniform_t0(mesh))
    part = s2.march(pressure, checkpoint=str(ck), stop_after=2)
    assert part.records[-1].step == 2
    resumed_state = load_checkpoint(str(ck))
    assert resumed_state.step == 2
    s3 = ContactSolver(mesh, [MAT], WEAK, _uniform_t0(mesh))
    rest = s3.march(pressure, start_state=resumed_state)
    np.testing.assert_allclose(rest.records[-1].u, full.records[-1].u, rtol=0, atol=1e-12)
    np.testing.assert_allclose(rest.records[-1].t_loc, full.records[-1].t_loc, rtol=0, atol=1e-6)
    np.testing.assert_allclose(rest.records[-1].slip_acc, full.records[-1].slip_acc, atol=1e-15)


def test_failure_mentions_step_and_writes_checkpoint(tmp_path):
    mesh = _mesh_two_columns(nz=3)
    left = mesh.cell_centroids()[:, 0] < 1.0
    series = [np.where(left, -2.0e6, 0.0), np.where(left, -4.0e6, 0.0)]
    cfg = SolverConfig(newton_max=0)  # guaranteed nonconvergence on a loaded step
    solver = ContactSolver(mesh, [MAT], WEAK, _uniform_t0(mesh), config=cfg)
    ck = tmp_path / "fail.npz"
    with pytest.raises(SolverError, match=r"step"):
        solver.march(StepsPressure(mesh, series), checkpoint=str(ck))
    assert ck.exists()  # last good state saved for restart


def test_solver_config_defaults():
    cfg = SolverConfig()
    assert cfg.newton_tol == 1e-6
    assert cfg.newton_max == 25
    assert cfg.activeset_max == 20
    assert cfg.linear_tol == 1e-10
    assert cfg.backtrack_factor == 0.5
    assert cfg.backtrack_max == 8

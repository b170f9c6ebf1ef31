"""Tests for Christoffel-Darboux recovery, branch reconstruction and the pipelines."""

import logging

import numpy as np
import pytest

from symocp.assembly import Kind, assemble, oracle_vector
from symocp.benchmarks import integrator_moment_tables, integrator_problem, qubit_problem
from symocp.poly import Polynomial, VarLayout
from symocp.recovery import (
    MAX_BRANCH_SITES,
    CDModel,
    Mode,
    Outcome,
    RecoveredCurve,
    RecoveryConfig,
    RecoveryError,
    Variant,
    cd_basis,
    cd_beta,
    cd_recover,
    curve_moment_matrix,
    feasibility_test,
    invariant_curve_moments,
    l1_error,
    recover_curve,
    run_algorithm,
    sqrt_branch_reconstruct,
    switch_times,
    trajectory_moments,
    variable_radii,
)


def square_moments(s, a):
    """Moments of the curve y(t) = t^2 on [0, 1]."""
    return 1.0 / (s + 2 * a + 1)


def oracle_sequence(k=4):
    inst = assemble(Kind.SYMMETRIC, integrator_problem(), k)
    return inst.moments.with_values(oracle_vector(inst, *integrator_moment_tables(2 * k)))


class TestCD:
    def test_basis_and_beta(self):
        assert cd_basis(2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        assert cd_beta(4) == pytest.approx(2.0)
        assert cd_beta(9) == pytest.approx(1.0)

    def test_curve_moment_matrix(self):
        mat = curve_moment_matrix(square_moments, 1)
        assert mat == pytest.approx(np.array([
            [1.0, 1 / 2, 1 / 3],
            [1 / 2, 1 / 3, 1 / 4],
            [1 / 3, 1 / 4, 1 / 5],
        ]))

    def test_recovers_a_parabola(self):
        k = 4
        model = CDModel.from_moments(curve_moment_matrix(square_moments, k), k,
                                     ybox=(-0.1, 1.1), beta=1e-4)
        curve = cd_recover(model, tgrid=101, ygrid=601, label="t^2")
        assert len(curve) == 101
        assert curve.label == "t^2"
        assert l1_error(curve, lambda t: t ** 2) <= 0.03

    def test_default_beta(self):
        model = CDModel.from_moments(curve_moment_matrix(square_moments, 3), 3, (0.0, 1.0))
        assert model.beta == pytest.approx(cd_beta(3))
        assert model.order == 3
        values = model.evaluate(0.5, np.linspace(0.0, 1.0, 5))
        assert np.all(values > 0)

    def test_bad_inputs(self):
        mat = curve_moment_matrix(square_moments, 2)
        with pytest.raises(ValueError):
            CDModel.from_moments(mat, 2, (1.0, 1.0))
        with pytest.raises(ValueError):
            CDModel.from_moments(mat, 3, (0.0, 1.0))
        with pytest.raises(RecoveryError):
            CDModel.from_moments(-10.0 * np.eye(len(cd_basis(2))), 2, (0.0, 1.0), beta=1e-3)


class TestCurveMoments:
    def test_trajectory_moments(self):
        layout = VarLayout(1, 1)
        nodes, weights = np.polynomial.legendre.leggauss(6)
        s = (nodes + 1) / 2
        z, y = trajectory_moments(layout, s, weights / 2, s, controls=np.ones_like(s),
                                  terminal=np.array([1.0]), max_degree=3)
        assert z[(0, 0, 0)] == pytest.approx(1.0)
        assert z[(1, 1, 0)] == pytest.approx(1 / 3)
        assert z[(0, 1, 2)] == pytest.approx(1 / 2)
        assert y[(0, 3, 0)] == 1.0

    def test_without_controls_or_terminal(self):
        layout = VarLayout(1, 1)
        z, y = trajectory_moments(layout, np.array([0.5]), np.array([1.0]), np.array([0.2]),
                                  max_degree=1)
        assert set(z) == {(0, 0, 0), (1, 0, 0), (0, 1, 0)}
        assert y == {}

    def test_invariant_curve_moments_match_the_oracle(self):
        z = oracle_sequence(4)
        layout = z.layout
        x = Polynomial.variable(1, layout)
        mat = invariant_curve_moments(z, x * x, 2)
        assert mat == pytest.approx(curve_moment_matrix(square_moments, 2))

    def test_order_limit(self):
        z = oracle_sequence(4)
        x = Polynomial.variable(1, z.layout)
        with pytest.raises(RecoveryError, match="up to 2"):
            invariant_curve_moments(z, x * x, 3)

    def test_variable_radii(self):
        assert variable_radii(integrator_problem()) == {1: 1.0, 2: 2.0, 3: 1.0}
        assert variable_radii(qubit_problem(tmax=3.0)) == {1: 1.0, 2: 1.0, 3: 1.0, 4: 3.0, 5: 1.0}

    def test_recover_curve_from_a_sequence(self):
        z = oracle_sequence(4)
        x = Polynomial.variable(1, z.layout)
        curve = recover_curve(z, x * x, "x^2", RecoveryConfig(tgrid=40, ygrid=200),
                              radii=variable_radii(integrator_problem()))
        assert len(curve) == 40
        assert curve.label == "x^2"
        assert np.all(np.abs(curve.values) <= 1.1 + 1e-12)

    def test_short_sequence(self):
        z = oracle_sequence(1)
        x = Polynomial.variable(1, z.layout)
        with pytest.raises(RecoveryError):
            recover_curve(z, x * x * x * x, "x^4", RecoveryConfig())


class TestCurveUtilities:
    grid = np.linspace(0.0, 1.0, 401)

    def test_l1_error(self):
        curve = RecoveredCurve(self.grid, self.grid.copy())
        assert l1_error(curve, lambda t: t) == pytest.approx(0.0)
        assert l1_error(curve, lambda t: np.zeros_like(t)) == pytest.approx(0.5)
        assert l1_error(curve, -curve) == pytest.approx(1.0)

    def test_switch_times(self):
        curve = RecoveredCurve(self.grid, np.sign(self.grid - 0.3))
        times = switch_times(curve)
        assert len(times) == 1
        assert times[0] == pytest.approx(0.3, abs=1 / 400)

    def test_at(self):
        curve = RecoveredCurve(self.grid, self.grid ** 2)
        assert curve.at(np.array([0.5]))[0] == pytest.approx(0.25)

    def test_at_picks_the_nearest_sample(self):
        curve = RecoveredCurve(np.array([0.0, 0.5, 1.0]), np.array([1.0, 2.0, 3.0]))
        t = np.array([-0.2, 0.1, 0.24, 0.25, 0.26, 0.9, 1.3])
        assert list(curve.at(t)) == [1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 3.0]


class TestBranches:
    grid = np.linspace(0.0, 1.0, 401)

    def test_one_interior_zero(self):
        y = RecoveredCurve(self.grid, (self.grid - 0.5) ** 2, "x^2")
        candidates = sqrt_branch_reconstruct(y)
        assert len(candidates) == 4
        errors = [l1_error(c, lambda t: t - 0.5) for c in candidates]
        assert min(errors) <= 1e-12
        assert candidates[0].label == "sqrt(x^2)[++]"

    def test_no_interior_zero(self):
        y = RecoveredCurve(self.grid, self.grid ** 2, "x^2")
        candidates = sqrt_branch_reconstruct(y)
        assert len(candidates) == 2
        assert l1_error(candidates[0], lambda t: t) <= 1e-12
        assert l1_error(candidates[1], lambda t: -t) <= 1e-12

    def test_zero_curve(self):
        y = RecoveredCurve(self.grid, np.zeros_like(self.grid), "x^2")
        candidates = sqrt_branch_reconstruct(y)
        assert len(candidates) == 1
        assert not np.any(candidates[0].values)

    def test_hints_add_sites(self):
        y = RecoveredCurve(self.grid, np.ones_like(self.grid), "u^2")
        candidates = sqrt_branch_reconstruct(y, switch_hints=[0.25])
        assert len(candidates) == 4
        assert any(switch_times(c) == [pytest.approx(0.25, abs=1 / 400)] for c in candidates)

    def test_negative_values_are_clipped(self):
        y = RecoveredCurve(self.grid, self.grid ** 2 - 1e-6, "x^2")
        candidates = sqrt_branch_reconstruct(y)
        assert np.all(np.isfinite(candidates[0].values))

    def test_site_cap(self, caplog):
        y = RecoveredCurve(self.grid, np.sin(20 * np.pi * self.grid) ** 2, "x^2")
        with caplog.at_level(logging.WARNING, logger="symocp.recovery"):
            candidates = sqrt_branch_reconstruct(y)
        assert len(candidates) == 2 ** (MAX_BRANCH_SITES + 1)
        assert "candidate switch sites" in caplog.text


class TestPipeline:
    cfg = RecoveryConfig(tgrid=30, ygrid=120, seed=0)

    def test_a1_p1_symmetric(self):
        report = run_algorithm(Variant.A1, integrator_problem(), 2, Mode.P1, self.cfg)
        assert [s.name for s in report.stages] == ["Q_k^G"]
        assert set(report.curves) == {"x1^2", "T", "u1^2"}
        assert set(report.candidates) == {"x1"}
        assert report.final_time == pytest.approx(report.bound, abs=1e-5)
        assert -1e-6 <= report.bound <= 1.0 + 1e-6
        assert all(len(c) == 30 for c in report.curves.values())

    def test_p1_branches_only_states(self):
        report = run_algorithm(Variant.A1, qubit_problem(), 2, Mode.P1, self.cfg)
        assert "u1^2" in report.curves
        assert set(report.candidates) == {"x1", "x2"}

    def test_a2_adds_selection(self):
        report = run_algorithm("A2", integrator_problem(), 2, "P1", self.cfg)
        assert [s.name for s in report.stages] == ["Q_k^G", "Z_k^G"]
        assert report.stages[1].status["status"] == "Optimal"

    def test_dense_pipeline(self):
        report = run_algorithm(Variant.A1, integrator_problem(), 2, Mode.P1, self.cfg,
                               kind=Kind.DENSE)
        assert [s.name for s in report.stages] == ["Q_k", "Z_k"]
        assert set(report.curves) == {"x1", "T", "u1"}
        assert report.candidates == {}

    def test_seeded_runs_are_deterministic(self):
        first = run_algorithm(Variant.A2, integrator_problem(), 2, Mode.P1, self.cfg)
        second = run_algorithm(Variant.A2, integrator_problem(), 2, Mode.P1, self.cfg)
        for label, curve in first.curves.items():
            assert np.array_equal(curve.values, second.curves[label].values)

    def test_report_dict(self):
        report = run_algorithm(Variant.A1, integrator_problem(), 2, Mode.P1, self.cfg)
        data = report.to_dict()
        assert data["d"] == 4
        assert data["stages"][0]["status"] == "Optimal"
        assert data["candidates"]["x1"][0].startswith("sqrt(x1^2)")


class TestFeasibility:
    def _curve(self, scale, degree):
        nodes, weights = np.polynomial.legendre.leggauss(degree + 2)
        s = (nodes + 1) / 2
        states = np.column_stack([scale * s, np.ones_like(s)])
        return trajectory_moments(VarLayout(2, 1), s, weights / 2, states,
                                  terminal=np.array([scale, 1.0]), max_degree=degree)

    def test_true_curve_accepted(self):
        z, y = self._curve(1.0, 4)
        verdict = feasibility_test(integrator_problem(), 2, z, y, eps=1e-5)
        assert verdict.outcome is Outcome.ACCEPT
        assert verdict.gap >= -1e-4
        assert verdict.to_dict()["outcome"] == "Accept"

    def test_curve_missing_the_target_rejected(self):
        z, y = self._curve(0.5, 4)
        verdict = feasibility_test(integrator_problem(), 2, z, y, eps=1e-5, bound=0.5)
        assert verdict.outcome is Outcome.REJECT
        assert verdict.gap is None

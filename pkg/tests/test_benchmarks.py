"""Tests for the built-in problems and their closed-form optima."""

import math

import numpy as np
import pytest

from symocp.benchmarks import (
    QUBIT_ALPHA,
    QUBIT_KAPPA,
    STRATEGIES,
    OracleError,
    QubitOracle,
    _qubit_parameters,
    builtin_problem,
    candidate_tables,
    integrator_candidate,
    integrator_moment_tables,
    integrator_oracle,
    integrator_problem,
    oracle_tables,
    qubit_problem,
    state_names,
)
from symocp.ocp import FreeTime, validate_symmetry
from symocp.poly import Polynomial, VarLayout


class TestIntegrator:
    def test_problem(self):
        prob = integrator_problem(tmax=3.0)
        assert prob.horizon == FreeTime(3.0)
        assert validate_symmetry(prob).passed
        assert state_names(prob) == ["x1", "T"]

    @pytest.mark.parametrize("s, a, b, expected", [
        (0, 0, 0, 1.0),
        (0, 2, 0, 1 / 3),
        (1, 1, 0, 0.0),
        (0, 1, 1, 1 / 2),
        (2, 0, 4, 1 / 3),
    ])
    def test_oracle(self, s, a, b, expected):
        assert integrator_oracle(s, a, b) == pytest.approx(expected)

    def test_tables(self):
        z, y = integrator_moment_tables(4)
        assert z[(0, 0, 1, 0)] == pytest.approx(1.0)
        assert z[(0, 1, 0, 1)] == pytest.approx(0.5)
        assert y[(0, 2, 0, 0)] == 1.0
        assert y[(0, 1, 0, 0)] == 0.0

    def test_true_candidate(self):
        z, y = integrator_candidate("true", 4)
        assert z[(1, 1, 0, 0)] == pytest.approx(1 / 3)
        assert z[(0, 0, 4, 0)] == pytest.approx(1.0)
        assert y[(0, 1, 0, 0)] == pytest.approx(1.0)
        assert all(mono[3] == 0 for mono in z)

    def test_unknown_candidate(self):
        with pytest.raises(OracleError):
            integrator_candidate("bang", 4)


class TestQubitOracle:
    oracle = QubitOracle()

    def test_constants(self):
        assert QUBIT_KAPPA == pytest.approx(2 * math.sqrt(10))
        assert self.oracle.final_time == pytest.approx(0.9935, abs=1e-4)
        assert self.oracle.switch_angle == pytest.approx(math.pi - math.acos(1 / 9))
        assert sum(self.oracle.switch_fractions) == pytest.approx(1.0)

    @pytest.mark.parametrize("strategy", STRATEGIES)
    def test_strategies_reach_the_south_pole(self, strategy):
        assert self.oracle.terminal_state(strategy) == pytest.approx([0.0, 0.0, -1.0], abs=1e-9)

    @pytest.mark.parametrize("strategy", STRATEGIES)
    def test_states_stay_on_the_sphere(self, strategy):
        states = self.oracle.states(strategy, np.linspace(0.0, 1.0, 21))
        assert np.linalg.norm(states, axis=1) == pytest.approx(np.ones(21), abs=1e-9)

    def test_switch_state_on_the_equator(self):
        first, _ = self.oracle.switch_fractions
        state = self.oracle.states("u1", np.array([first]))[0]
        assert state[2] == pytest.approx(0.0, abs=1e-9)
        assert state[0] == pytest.approx(1 / 3, abs=1e-9)

    def test_controls(self):
        first, second = self.oracle.switch_fractions
        s = np.array([0.0, first / 2, (first + 1) / 2])
        assert list(self.oracle.control("u1", s)) == [1.0, 1.0, -1.0]
        assert list(self.oracle.control("-u1", s)) == [-1.0, -1.0, 1.0]
        assert self.oracle.control("u2", np.array([second + 0.01]))[0] == -1.0

    def test_quadrature_matches_adaptive_integration(self):
        layout = VarLayout(4, 1)
        x3 = Polynomial.variable(3, layout)
        z, _ = self.oracle.moment_tables(2, ("u1",))
        assert z[(0, 0, 0, 2, 0, 0)] == pytest.approx(self.oracle.moment(x3 * x3), abs=1e-8)

    def test_invariant_average(self):
        z, y = self.oracle.moment_tables(2)
        assert z[(0, 1, 0, 0, 0, 0)] == pytest.approx(0.0, abs=1e-12)
        assert z[(0, 0, 0, 0, 0, 1)] == pytest.approx(0.0, abs=1e-12)
        assert z[(0, 0, 0, 0, 1, 0)] == pytest.approx(self.oracle.final_time)
        assert y[(0, 0, 0, 1, 0, 0)] == pytest.approx(-1.0)

    def test_no_switch_candidate(self):
        z, _ = self.oracle.candidate("no-switch-x2", 2)
        assert min(self.oracle.states("u1", np.linspace(0, 1, 11))[:, 1]) < 0
        assert z[(0, 0, 1, 0, 0, 0)] > 0
        assert all(mono[5] == 0 for mono in z)

    def test_alpha_out_of_range(self):
        with pytest.raises(OracleError, match="pi/4"):
            QubitOracle(alpha=0.5)
        with pytest.raises(OracleError):
            QubitOracle(kappa=-1.0)

    def test_unknown_names(self):
        with pytest.raises(OracleError):
            self.oracle.control("u3", np.zeros(1))
        with pytest.raises(OracleError):
            self.oracle.candidate("switch-x3", 2)


class TestRegistry:
    def test_builtin_problem(self):
        prob = builtin_problem("qubit", tmax=1.5)
        assert prob.name == "qubit"
        assert prob.horizon.tmax == 1.5
        assert validate_symmetry(prob).passed
        assert builtin_problem("integrator").horizon.tmax == 2.0

    def test_unknown_problem(self):
        with pytest.raises(ValueError, match="unknown problem"):
            builtin_problem("pendulum")

    def test_qubit_parameters_round_trip(self):
        kappa, alpha = _qubit_parameters(qubit_problem(kappa=5.0, alpha=1.2))
        assert kappa == pytest.approx(5.0)
        assert alpha == pytest.approx(1.2)
        kappa, alpha = _qubit_parameters(qubit_problem())
        assert kappa == pytest.approx(QUBIT_KAPPA)
        assert alpha == pytest.approx(QUBIT_ALPHA)

    def test_tables_by_name(self):
        z, _ = oracle_tables(integrator_problem(), 2)
        assert z == integrator_moment_tables(2)[0]
        cz, cy = candidate_tables(qubit_problem(), "true", 2)
        assert cy[(0, 0, 0, 2, 0, 0)] == pytest.approx(1.0)

    def test_no_oracle_for_file_problems(self):
        from dataclasses import replace
        prob = replace(integrator_problem(), name="custom")
        with pytest.raises(OracleError):
            oracle_tables(prob, 2)
        with pytest.raises(OracleError):
            candidate_tables(prob, "true", 2)

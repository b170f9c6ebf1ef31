"""Published bounds and end-to-end recovery at full relaxation orders.

These solve relaxations with hundreds to thousands of pseudo-moments and
take minutes; run them with ``pytest -m slow``.
"""

import numpy as np
import pytest

from symocp.assembly import (
    Kind,
    assemble,
    assemble_selection,
    oracle_vector,
    random_selection_polynomials,
)
from symocp.benchmarks import (
    QubitOracle,
    candidate_tables,
    integrator_moment_tables,
    integrator_problem,
    qubit_problem,
)
from symocp.ocp import normalize_horizon, simulate
from symocp.poly import Polynomial
from symocp.recovery import (
    CDModel,
    Mode,
    Outcome,
    RecoveryConfig,
    Variant,
    cd_recover,
    curve_moment_matrix,
    feasibility_test,
    invariant_curve_moments,
    l1_error,
    run_algorithm,
    switch_times,
)
from symocp.solver import SolverConfig, extract_moments, solve

pytestmark = pytest.mark.slow

PROBLEMS = {"integrator": integrator_problem, "qubit": qubit_problem}


def bound(kind, prob, k):
    result = solve(assemble(kind, prob, k))
    assert result.ok, result.status.message
    return result.objective


class TestCostBounds:
    @pytest.mark.parametrize("d, dense_value, symmetric_value", [
        (14, 0.9736, 0.9740),
        (16, 0.9740, 0.9748),
    ])
    def test_integrator(self, d, dense_value, symmetric_value):
        prob = integrator_problem()
        dense = bound(Kind.DENSE, prob, d // 2)
        symmetric = bound(Kind.SYMMETRIC, prob, d // 2)
        assert dense == pytest.approx(dense_value, abs=0.01)
        assert symmetric == pytest.approx(symmetric_value, abs=0.01)
        assert abs(dense - symmetric) <= 5e-3

    @pytest.mark.parametrize("kind", [Kind.DENSE, Kind.SYMMETRIC])
    @pytest.mark.parametrize("d, value, tol", [(6, 0.7708, 0.01), (8, 0.8758, 0.01),
                                               (10, 0.9244, 0.02)])
    def test_qubit(self, kind, d, value, tol):
        rho = bound(kind, qubit_problem(), d // 2)
        assert rho == pytest.approx(value, abs=tol)
        assert rho <= QubitOracle().final_time + 1e-3

    @pytest.mark.parametrize("name", sorted(PROBLEMS))
    def test_monotone_in_the_order(self, name):
        prob = PROBLEMS[name]()
        values = [bound(Kind.SYMMETRIC, prob, k) for k in (2, 3, 4, 5)]
        for lower, higher in zip(values, values[1:]):
            assert higher >= lower - 1e-6

    @pytest.mark.parametrize("name", sorted(PROBLEMS))
    def test_substitution_only_matches_block_diagonal(self, name):
        prob = PROBLEMS[name]()
        assert bound(Kind.SUBSTITUTION_ONLY, prob, 4) == pytest.approx(
            bound(Kind.SYMMETRIC, prob, 4), abs=1e-6)

    @pytest.mark.parametrize("name", sorted(PROBLEMS))
    def test_selection_respects_the_cost_cap(self, name):
        prob = PROBLEMS[name]()
        rho = bound(Kind.SYMMETRIC, prob, 3)
        P, Ptilde = random_selection_polynomials(prob, seed=5, symmetric=True)
        inst = assemble_selection(Kind.SYMMETRIC, prob, 3, P, Ptilde, rho, slack=1e-6)
        result = solve(inst)
        assert result.ok
        assert inst.residuals(result.values).inequality <= 1e-6


@pytest.mark.parametrize("kind", list(Kind))
def test_integrator_oracle_at_degree_16(kind):
    inst = assemble(kind, integrator_problem(), 8)
    res = inst.residuals(oracle_vector(inst, *integrator_moment_tables(16)))
    assert res.equality <= 1e-6
    assert res.min_eigenvalue >= -1e-9


class TestCurveRecovery:
    @staticmethod
    def parabola_error(k):
        model = CDModel.from_moments(
            curve_moment_matrix(lambda s, a: 1.0 / (s + 2 * a + 1), k), k, (-1.1, 1.1))
        return l1_error(cd_recover(model, label="x^2"), lambda t: t ** 2)

    def test_parabola_at_order_8(self):
        assert self.parabola_error(8) <= 0.05

    def test_error_does_not_grow(self):
        assert self.parabola_error(8) <= 1.2 * self.parabola_error(6)

    def test_integrator_control_from_the_lift(self):
        report = run_algorithm(Variant.A1, integrator_problem(), 8, Mode.P2,
                               RecoveryConfig(tgrid=200, ygrid=400))
        u = report.curves["u1"]
        assert min(l1_error(u, lambda t: np.full_like(t, sign)) for sign in (-1.0, 1.0)) <= 0.1

    def test_qubit_bang_bang_control(self):
        oracle = QubitOracle()
        report = run_algorithm(Variant.A2, qubit_problem(), 5, Mode.P2,
                               RecoveryConfig(tgrid=200, ygrid=400))
        u = report.curves["u1"]
        switches = switch_times(u)
        assert switches
        first = oracle.switch_fractions[0]
        assert min(abs(s - f) for s in switches for f in (first, 1 - first)) <= 0.1

        norm = normalize_horizon(qubit_problem())
        _, states = simulate(norm, lambda t: [float(np.sign(u.at(np.array([t]))[0]))],
                             free_initial=[oracle.final_time])
        assert np.linalg.norm(states[-1, :3] - np.array([0.0, 0.0, -1.0])) <= 0.15


class TestFeasibilityVerdicts:
    def test_qubit_no_switch_candidate_rejected(self):
        prob = qubit_problem()
        z, y = candidate_tables(prob, "no-switch-x2", 6)
        verdict = feasibility_test(prob, 3, z, y, eps=1e-5)
        assert verdict.outcome is Outcome.REJECT

    def test_qubit_true_candidate_accepted(self):
        prob = qubit_problem()
        z, y = candidate_tables(prob, "true", 6)
        verdict = feasibility_test(prob, 3, z, y, eps=1e-5)
        assert verdict.outcome is Outcome.ACCEPT
        assert verdict.gap == pytest.approx(QubitOracle().final_time - verdict.bound, abs=1e-3)

    @pytest.mark.parametrize("eps", [1e-5, 10.0])
    def test_integrator_true_candidate_accepted(self, eps):
        prob = integrator_problem()
        z, y = candidate_tables(prob, "true", 8)
        verdict = feasibility_test(prob, 4, z, y, eps=eps)
        assert verdict.outcome is Outcome.ACCEPT
        assert verdict.gap >= -1e-4
        if eps < 1:
            assert verdict.gap == pytest.approx(1.0 - verdict.bound, abs=1e-3)


def test_qubit_pipeline_curves():
    report = run_algorithm(Variant.A2, qubit_problem(), 3, Mode.P1,
                           RecoveryConfig(tgrid=100, ygrid=200), SolverConfig())
    assert report.final_time <= QubitOracle().final_time + 1e-3
    assert set(report.candidates) == {"x1", "x2"}
    assert "x1*x2" in report.curves


def test_invariant_moments_agree_between_dense_and_symmetric():
    prob = integrator_problem()
    k = 6
    dense = solve(assemble(Kind.DENSE, prob, k))
    assert dense.ok
    P, Ptilde = random_selection_polynomials(prob, seed=0)
    selected = solve(assemble_selection(Kind.DENSE, prob, k, P, Ptilde, dense.objective))
    symmetric = solve(assemble(Kind.SYMMETRIC, prob, k))
    assert selected.ok and symmetric.ok

    z_dense = extract_moments(selected)
    z_sym = extract_moments(symmetric)
    x = Polynomial.variable(1, z_sym.layout)
    first = invariant_curve_moments(z_dense, x * x, 2)
    second = invariant_curve_moments(z_sym, x * x, 2)
    assert np.max(np.abs(first - second)) <= 5e-2


@pytest.mark.parametrize("name, k", [("integrator", 7), ("integrator", 8), ("qubit", 3),
                                     ("qubit", 4), ("qubit", 5)])
def test_reduction_ratio_at_benchmark_orders(name, k):
    prob = PROBLEMS[name]()
    sym = assemble(Kind.SYMMETRIC, prob, k)
    dense = assemble(Kind.DENSE, prob, k)
    assert sym.num_variables <= 0.55 * dense.num_variables

"""Tests for the solver backends."""

from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from symocp.assembly import Kind, assemble
from symocp.benchmarks import integrator_problem
from symocp.config import ConfigurationManager
from symocp.ipm import smat
from symocp.ocp import FixedUnit, OCProblem, SemialgebraicSet, SetLabel
from symocp.poly import GroupElement, Polynomial, SignGroup, VarLayout
from symocp.solver import (
    CvxpySolver,
    InteriorPointSolver,
    SolveResult,
    SolveStatus,
    SolverConfig,
    StatusCode,
    extract_moments,
    make_solver,
    scaled_violation,
    solve,
)

from .test_ocp import fixed_example


def reach_example():
    """Maximize x(1)^2 for x' = u, |u| <= 1; the optimal value -1 is attained at every order."""
    layout = VarLayout(1, 1)
    x = Polynomial.variable(1, layout)
    u = Polynomial.variable(2, layout)
    return OCProblem(
        n=1,
        m=1,
        f=(u,),
        h=Polynomial.zero(layout),
        H=-(x * x),
        X=SemialgebraicSet.from_constraints(SetLabel.STATE, [1 - x * x]),
        U=SemialgebraicSet.from_constraints(SetLabel.CONTROL, [1 - u * u]),
        K=SemialgebraicSet.from_constraints(SetLabel.TERMINAL, [1 - x * x]),
        x0=(0.0,),
        horizon=FixedUnit(),
        group=SignGroup([GroupElement((-1,), (-1,))]),
        name="reach",
    )


class TestSolverConfig:
    def test_defaults(self):
        config = SolverConfig()
        assert config.backend == "clarabel"
        assert config.tol == 1e-8

    @pytest.mark.parametrize("kwargs", [{"backend": "mosek"}, {"tol": 0.0}, {"max_iter": 0}])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)

    def test_from_manager(self, tmp_path, monkeypatch):
        monkeypatch.delenv("SYMOCP_BACKEND", raising=False)
        manager = ConfigurationManager(str(tmp_path))
        manager.set("tol", 1e-7)
        config = SolverConfig.from_manager(manager, max_iter=50, backend=None)
        assert config.tol == 1e-7
        assert config.max_iter == 50
        assert config.backend == "clarabel"

    def test_environment_backend(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SYMOCP_BACKEND", "ipm")
        config = SolverConfig.from_manager(ConfigurationManager(str(tmp_path)))
        assert isinstance(make_solver(config), InteriorPointSolver)


def test_make_solver_default():
    assert isinstance(make_solver(), CvxpySolver)


def test_conic_form_reproduces_blocks():
    inst = assemble(Kind.SYMMETRIC, fixed_example(), 2)
    c, G, h, dims, A, b = InteriorPointSolver.conic_form(inst)
    z = np.random.default_rng(0).normal(size=inst.num_variables)
    slack = h - G @ z
    assert dims.l == 0
    for block, sl, n in zip(inst.psd_blocks, dims.slices(), dims.s):
        scale = 1.0 / block.max_abs_coefficient()
        assert np.allclose(smat(slack[sl], n), scale * block.matrix(z))


@pytest.mark.parametrize("backend", ["clarabel", "ipm"])
@pytest.mark.parametrize("kind", [Kind.DENSE, Kind.SYMMETRIC, Kind.SUBSTITUTION_ONLY])
def test_reach_bound(backend, kind):
    inst = assemble(kind, reach_example(), 1)
    result = solve(inst, SolverConfig(backend=backend))
    assert result.status.code is StatusCode.OPTIMAL
    assert result.status.backend == backend
    assert result.objective == pytest.approx(-1.0, abs=1e-5)
    res = inst.residuals(result.values)
    assert res.equality <= 1e-6
    assert res.min_eigenvalue >= -1e-6


def test_backends_agree():
    inst = assemble(Kind.SYMMETRIC, fixed_example(), 2)
    first = solve(inst, SolverConfig(backend="clarabel"))
    second = solve(inst, SolverConfig(backend="ipm"))
    assert first.ok and second.ok
    assert first.objective == pytest.approx(second.objective, abs=1e-5)
    assert first.objective == pytest.approx(0.0, abs=1e-5)


def test_extract_moments():
    inst = assemble(Kind.SYMMETRIC, reach_example(), 1)
    result = solve(inst, SolverConfig(backend="ipm"))
    seq = extract_moments(result)
    assert seq.moment("muT", (0, 2, 0)) == pytest.approx(1.0, abs=1e-5)
    assert seq.moment("muT", (0, 1, 0)) == 0.0


def test_extract_moments_without_values():
    inst = assemble(Kind.DENSE, reach_example(), 1)
    failed = SolveResult(inst, SolveStatus(StatusCode.NUMERICAL_TROUBLE))
    with pytest.raises(ValueError):
        extract_moments(failed)


def test_status_to_dict():
    status = SolveStatus(StatusCode.OPTIMAL, 1.0, 1.0 - 1e-9, backend="ipm")
    data = status.to_dict()
    assert data["status"] == "Optimal"
    assert data["backend"] == "ipm"
    assert status.gap == pytest.approx(1e-9)


def contradictory_instance():
    """minimize 0 subject to z0 = 1 and z0 = 2."""
    inst = assemble(Kind.DENSE, reach_example(), 1)
    N = inst.num_variables
    return replace(
        inst,
        psd_blocks=[],
        eq_matrix=sp.csr_matrix(([1.0, 1.0], ([0, 1], [0, 0])), shape=(2, N)),
        eq_rhs=np.array([1.0, 2.0]),
        ineq_matrix=sp.csr_matrix((0, N)),
        ineq_rhs=np.zeros(0),
        objective=np.zeros(N),
        objective_constant=0.0,
    )


@pytest.mark.parametrize("backend", ["clarabel", "ipm"])
def test_contradictory_equalities(backend):
    result = solve(contradictory_instance(), SolverConfig(backend=backend))
    assert result.status.code is StatusCode.PRIMAL_INFEASIBLE
    assert result.values is None


@pytest.mark.parametrize("backend", ["clarabel", "ipm"])
@pytest.mark.parametrize("kind", [Kind.DENSE, Kind.SYMMETRIC])
class TestSolveInvariants:
    def test_weak_duality(self, backend, kind):
        config = SolverConfig(backend=backend)
        for inst in (assemble(kind, reach_example(), 1), assemble(kind, fixed_example(), 2)):
            status = solve(inst, config).status
            p = status.primal_objective
            assert status.ok
            assert status.dual_objective <= p + 1e-6 * (1.0 + abs(p))

    def test_deterministic_objective(self, backend, kind):
        inst = assemble(kind, fixed_example(), 2)
        config = SolverConfig(backend=backend)
        first = solve(inst, config)
        second = solve(inst, config)
        assert first.ok and second.ok
        assert abs(first.objective - second.objective) <= 1e-9

    def test_residuals_within_tolerance(self, backend, kind):
        inst = assemble(kind, reach_example(), 1)
        config = SolverConfig(backend=backend)
        result = solve(inst, config)
        assert result.ok
        assert scaled_violation(inst, result.values) <= config.inaccurate_tol
        assert result.status.dual_residual <= 1e-5


@pytest.mark.parametrize("kind", [Kind.DENSE, Kind.SYMMETRIC, Kind.SUBSTITUTION_ONLY])
def test_integrator_backends_agree(kind):
    inst = assemble(kind, integrator_problem(), 2)
    ipm = solve(inst, SolverConfig(backend="ipm"))
    reference = solve(inst, SolverConfig(backend="clarabel"))
    assert ipm.status.code is StatusCode.OPTIMAL
    assert reference.ok
    assert ipm.objective == pytest.approx(reference.objective, abs=1e-5)
    assert ipm.objective == pytest.approx(0.159665, abs=1e-4)


class TestOptimalPostCondition:
    def test_violation_of_infeasible_point(self):
        inst = assemble(Kind.DENSE, reach_example(), 1)
        assert scaled_violation(inst, np.zeros(inst.num_variables)) > 1e-3

    def test_large_residual_is_numerical_trouble(self, monkeypatch):
        monkeypatch.setattr("symocp.solver.scaled_violation", lambda inst, values: 1e-3)
        result = solve(assemble(Kind.DENSE, reach_example(), 1), SolverConfig())
        assert result.status.code is StatusCode.NUMERICAL_TROUBLE
        assert "scaled residual" in result.status.message

    def test_small_residual_is_accepted_with_note(self, monkeypatch):
        monkeypatch.setattr("symocp.solver.scaled_violation", lambda inst, values: 1e-7)
        result = solve(assemble(Kind.DENSE, reach_example(), 1), SolverConfig(backend="ipm"))
        assert result.ok
        assert "scaled residual 1.00e-07" in result.status.message

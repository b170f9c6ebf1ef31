"""Conic solver backends for assembled SDP instances."""

import logging
import math
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from .assembly import PseudoMomentVector, SDPInstance
from .ipm import ConeDims, IPMStatus, solve_conic

logger = logging.getLogger(__name__)

BACKENDS = ("clarabel", "ipm")


class StatusCode(Enum):
    """Termination status of a solve."""
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITER = "MaxIter"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass
class SolveStatus:
    """Status plus the objective values and residuals reported by the backend."""

    code: StatusCode
    primal_objective: float = math.nan
    dual_objective: float = math.nan
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    iterations: int = 0
    solve_time: float = 0.0
    backend: str = ""
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.code is StatusCode.OPTIMAL

    @property
    def gap(self) -> float:
        return abs(self.primal_objective - self.dual_objective)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.code.value,
            "primal_objective": self.primal_objective,
            "dual_objective": self.dual_objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "iterations": self.iterations,
            "solve_time": self.solve_time,
            "backend": self.backend,
            "message": self.message,
        }


@dataclass
class SolverConfig:
    """Solver settings; see ``symocp.config`` for the persisted defaults."""

    backend: str = "clarabel"
    tol: float = 1e-8
    max_iter: int = 200
    inaccurate_tol: float = 1e-5
    verbose: bool = False

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; choose from {', '.join(BACKENDS)}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @classmethod
    def from_manager(cls, config: Any, **overrides: Any) -> "SolverConfig":
        """Build from a ConfigurationManager, letting non-None overrides win."""
        values = {
            "backend": config.get_backend(),
            "tol": config.get_tol(),
            "max_iter": config.get_max_iter(),
            "inaccurate_tol": config.get("inaccurate_tol", 1e-5),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class SolveResult:
    instance: SDPInstance
    status: SolveStatus
    values: Optional[np.ndarray] = None

    @property
    def ok(self) -> bool:
        return self.status.ok

    @property
    def objective(self) -> float:
        return self.status.primal_objective


class ConicSolver(ABC):
    """Backend interface: one solve call per assembled instance."""

    name = "abstract"

    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or SolverConfig(backend=self.name)

    @abstractmethod
    def _solve(self, inst: SDPInstance) -> SolveResult:
        ...

    def solve(self, inst: SDPInstance) -> SolveResult:
        logger.info("solving %s (%s, k=%d) with %s: %d variables, %d PSD blocks",
                    inst.metadata.get("program", "SDP"), inst.name, inst.order, self.name,
                    inst.num_variables, len(inst.psd_blocks))
        started = time.perf_counter()
        result = self._solve(inst)
        if not result.status.solve_time:
            result.status.solve_time = time.perf_counter() - started
        result.status.backend = self.name
        logger.info("%s finished: %s, objective %.9g (%.2fs)", self.name,
                    result.status.code.value, result.status.primal_objective,
                    result.status.solve_time)
        return result


def _block_scales(inst: SDPInstance) -> List[float]:
    scales = []
    for block in inst.psd_blocks:
        top = block.max_abs_coefficient()
        scales.append(1.0 / top if top > 0 else 1.0)
    return scales


def scaled_violation(inst: SDPInstance, values: np.ndarray) -> float:
    """Largest constraint violation of ``values`` relative to the size of the terms.

    Linear rows are measured against 1 + max(|rhs|, |A| |z|) and PSD blocks
    against 1 + trace, so the value compares directly with a solver tolerance.
    """
    values = np.asarray(values, dtype=float)
    res = inst.residuals(values)
    worst = -res.min_eigenvalue / (1.0 + res.trace_scale)
    for matrix, rhs, violation in ((inst.eq_matrix, inst.eq_rhs, res.equality),
                                   (inst.ineq_matrix, inst.ineq_rhs, res.inequality)):
        if not matrix.shape[0]:
            continue
        terms = abs(matrix) @ np.abs(values)
        scale = 1.0 + max(float(np.max(np.abs(rhs))), float(np.max(terms)))
        worst = max(worst, violation / scale)
    return max(worst, 0.0)


def _checked(inst: SDPInstance, values: np.ndarray, config: "SolverConfig",
             message: str, inaccurate: bool = False):
    """Status code and message for a solution the backend reported as optimal."""
    violation = scaled_violation(inst, values)
    if violation <= config.tol and not inaccurate:
        return StatusCode.OPTIMAL, message
    if violation <= config.inaccurate_tol:
        logger.warning("accepting inaccurate solution (scaled residual %.2e)", violation)
        return StatusCode.OPTIMAL, f"{message}; scaled residual {violation:.2e}"
    return StatusCode.NUMERICAL_TROUBLE, f"inaccurate solution, scaled residual {violation:.2e}"


class CvxpySolver(ConicSolver):
    """Clarabel through cvxpy; SCS when Clarabel is not installed."""

    name = "clarabel"

    def _problem(self, inst: SDPInstance):
        """The cvxpy problem, its variable and (constraint, D) pairs.

        Each constraint enters the Lagrangian as dual'(D z + const), so the
        stationarity residual is c + sum D' dual.
        """
        import cvxpy as cp

        z = cp.Variable(inst.num_variables, name="z")
        constraints = []
        jacobians = []
        if inst.eq_matrix.shape[0]:
            constraints.append(inst.eq_matrix @ z == inst.eq_rhs)
            jacobians.append(inst.eq_matrix)
        if inst.ineq_matrix.shape[0]:
            constraints.append(inst.ineq_matrix @ z <= inst.ineq_rhs)
            jacobians.append(inst.ineq_matrix)
        for block, scale in zip(inst.psd_blocks, _block_scales(inst)):
            op = block.operator(inst.num_variables) * scale
            const = block.constant * scale
            if block.size == 1:
                constraints.append(op @ z + const >= 0)
            else:
                S = cp.Variable((block.size, block.size), PSD=True)
                rows, cols = np.triu_indices(block.size)
                flat = rows + cols * block.size
                constraints.append(
                    cp.reshape(S, (block.size ** 2,), order="F")[flat] == op @ z + const)
            jacobians.append(-op)
        objective = cp.Minimize(inst.objective @ z + inst.objective_constant)
        return cp.Problem(objective, constraints), z, list(zip(constraints, jacobians))

    @staticmethod
    def _dual_residual(inst: SDPInstance, pairs) -> float:
        grad = np.array(inst.objective, dtype=float)
        for constraint, jac in pairs:
            dual = constraint.dual_value
            if dual is None:
                return math.nan
            grad = grad + jac.T @ np.atleast_1d(np.asarray(dual, dtype=float)).ravel()
        return float(np.linalg.norm(grad) / max(1.0, np.linalg.norm(inst.objective)))

    def _solver_args(self) -> Dict[str, Any]:
        import cvxpy as cp

        cfg = self.config
        if "CLARABEL" in cp.installed_solvers():
            return {
                "solver": cp.CLARABEL,
                "tol_feas": cfg.tol,
                "tol_gap_abs": cfg.tol,
                "tol_gap_rel": cfg.tol,
                "max_iter": cfg.max_iter,
            }
        logger.warning("Clarabel is not installed; falling back to SCS")
        return {"solver": cp.SCS, "eps": cfg.tol, "max_iters": cfg.max_iter * 100}

    def _solve(self, inst: SDPInstance) -> SolveResult:
        import cvxpy as cp

        problem, z, pairs = self._problem(inst)
        try:
            problem.solve(verbose=self.config.verbose, **self._solver_args())
        except cp.error.SolverError as err:
            return SolveResult(inst, SolveStatus(StatusCode.NUMERICAL_TROUBLE, message=str(err)))

        stats = problem.solver_stats
        iterations = int(getattr(stats, "num_iters", 0) or 0)
        solve_time = float(getattr(stats, "solve_time", 0.0) or 0.0)
        status = problem.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SolveResult(inst, SolveStatus(StatusCode.PRIMAL_INFEASIBLE,
                                                 iterations=iterations, solve_time=solve_time,
                                                 message=status))
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return SolveResult(inst, SolveStatus(StatusCode.DUAL_INFEASIBLE,
                                                 iterations=iterations, solve_time=solve_time,
                                                 message=status))
        if status == cp.USER_LIMIT or z.value is None:
            return SolveResult(inst, SolveStatus(StatusCode.MAX_ITER, iterations=iterations,
                                                 solve_time=solve_time, message=str(status)))

        values = np.asarray(z.value, dtype=float)
        pcost = inst.objective_value(values)
        dual = getattr(stats.extra_stats, "obj_val_dual", None)
        dcost = float(dual) + inst.objective_constant if dual is not None else pcost
        code, message = _checked(inst, values, self.config, status,
                                 inaccurate=status == cp.OPTIMAL_INACCURATE)
        status_obj = SolveStatus(code, pcost, dcost, inst.residuals(values).primal,
                                 self._dual_residual(inst, pairs),
                                 iterations, solve_time, message=message)
        return SolveResult(inst, status_obj, values)


class InteriorPointSolver(ConicSolver):
    """The built-in dense interior-point method (small instances only)."""

    name = "ipm"

    _STATUS = {
        IPMStatus.OPTIMAL: StatusCode.OPTIMAL,
        IPMStatus.PRIMAL_INFEASIBLE: StatusCode.PRIMAL_INFEASIBLE,
        IPMStatus.DUAL_INFEASIBLE: StatusCode.DUAL_INFEASIBLE,
        IPMStatus.MAX_ITER: StatusCode.MAX_ITER,
        IPMStatus.NUMERICAL_TROUBLE: StatusCode.NUMERICAL_TROUBLE,
    }

    @staticmethod
    def conic_form(inst: SDPInstance):
        """(c, G, h, dims, A, b) with the PSD blocks as svec slacks."""
        N = inst.num_variables
        G_parts = [inst.ineq_matrix]
        h_parts = [inst.ineq_rhs]
        for block, scale in zip(inst.psd_blocks, _block_scales(inst)):
            rows, cols = np.triu_indices(block.size)
            weight = np.where(rows == cols, 1.0, math.sqrt(2.0)) * scale
            D = sp.diags(weight)
            G_parts.append(-(D @ block.operator(N)))
            h_parts.append(weight * block.constant)
        G = sp.vstack(G_parts).tocsr()
        h = np.concatenate(h_parts)
        dims = ConeDims(l=inst.ineq_matrix.shape[0], s=[b.size for b in inst.psd_blocks])
        return inst.objective, G, h, dims, inst.eq_matrix, inst.eq_rhs

    def _solve(self, inst: SDPInstance) -> SolveResult:
        c, G, h, dims, A, b = self.conic_form(inst)
        out = solve_conic(c, G, h, dims, A, b, tol=self.config.tol,
                          max_iter=self.config.max_iter)
        code = self._STATUS[out.status]
        message = out.message or out.status.value
        values = out.x if code in (StatusCode.OPTIMAL, StatusCode.MAX_ITER) else None
        if code is StatusCode.OPTIMAL:
            code, message = _checked(inst, values, self.config, message,
                                     inaccurate=out.reduced_accuracy)
        status = SolveStatus(
            code,
            out.primal_objective + inst.objective_constant,
            out.dual_objective + inst.objective_constant,
            out.primal_residual,
            out.dual_residual,
            out.iterations,
            out.solve_time,
            message=message,
        )
        return SolveResult(inst, status, values)


def make_solver(config: Optional[SolverConfig] = None) -> ConicSolver:
    config = config or SolverConfig()
    if config.backend == "ipm":
        return InteriorPointSolver(config)
    return CvxpySolver(config)


def solve(inst: SDPInstance, config: Optional[SolverConfig] = None) -> SolveResult:
    """Solve an assembled instance with the configured backend."""
    return make_solver(config).solve(inst)


def extract_moments(result: SolveResult) -> PseudoMomentVector:
    """The instance's pseudo-moment vector carrying the solved values."""
    if result.values is None:
        raise ValueError(f"no solution to extract: {result.status.code.value}")
    if not result.ok:
        logger.warning("extracting moments from a %s solve", result.status.code.value)
    return result.instance.moments.with_values(result.values)

"""Polynomial optimal control problems with sign symmetries."""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from .poly import (
    DimensionError,
    GroupElement,
    Polynomial,
    SignGroup,
    VarLayout,
    apply_group,
)

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
MEMBERSHIP_TOL = 1e-10


class OrderError(ValueError):
    """Raised for relaxation orders below k0 or odd d."""


class SetLabel(Enum):
    """Role of a semialgebraic set in the problem."""
    STATE = "X"
    CONTROL = "U"
    TERMINAL = "K"


@dataclass(frozen=True)
class SemialgebraicSet:
    """{p_j >= 0 for all j}; an equality p = 0 is the pair (p, -p)."""

    inequalities: Tuple[Polynomial, ...]
    label: SetLabel

    def __post_init__(self) -> None:
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        for p in self.inequalities:
            allowed = (
                p.layout.control_indices
                if self.label is SetLabel.CONTROL
                else p.layout.state_indices
            )
            if not p.depends_only_on(allowed):
                raise ValueError(
                    f"{self.label.value}-constraint {p.to_string()!r} uses variables "
                    f"outside {'u' if self.label is SetLabel.CONTROL else 'x'}"
                )

    @classmethod
    def from_constraints(cls, label: SetLabel, inequalities: Sequence[Polynomial] = (),
                         equalities: Sequence[Polynomial] = ()) -> "SemialgebraicSet":
        ineqs = list(inequalities)
        for p in equalities:
            ineqs.extend([p, -p])
        return cls(tuple(ineqs), label)

    @property
    def degree(self) -> int:
        return max((p.degree for p in self.inequalities), default=0)

    def contains(self, point: Sequence[float], tol: float = MEMBERSHIP_TOL) -> bool:
        return all(p.evaluate(point) >= -tol for p in self.inequalities)

    def embed(self, target: VarLayout) -> "SemialgebraicSet":
        return SemialgebraicSet(tuple(p.embed(target) for p in self.inequalities), self.label)

    def extended(self, extra: Sequence[Polynomial]) -> "SemialgebraicSet":
        return SemialgebraicSet(self.inequalities + tuple(extra), self.label)


@dataclass(frozen=True)
class FixedUnit:
    """Fixed final time, normalized to T = 1."""

    def __str__(self) -> str:
        return "fixed"


@dataclass(frozen=True)
class FreeTime:
    """Free final time bounded by ``tmax``."""

    tmax: float

    def __post_init__(self) -> None:
        if not self.tmax > 0:
            raise ValueError(f"tmax must be positive, got {self.tmax}")

    def __str__(self) -> str:
        return f"free(tmax={self.tmax:g})"


Horizon = Union[FixedUnit, FreeTime]


@dataclass(frozen=True)
class OCProblem:
    """G-invariant polynomial optimal control problem.

    ``x0`` entries may be ``None`` for states whose initial value is free but
    constant along trajectories (the final time after horizon normalization);
    such coordinates take their initial distribution from the terminal measure.
    K being a subset of X is the caller's responsibility.
    """

    n: int
    m: int
    f: Tuple[Polynomial, ...]
    h: Polynomial
    H: Polynomial
    X: SemialgebraicSet
    U: SemialgebraicSet
    K: SemialgebraicSet
    x0: Tuple[Optional[float], ...]
    horizon: Horizon
    group: SignGroup
    name: str = "problem"
    final_time_index: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "f", tuple(self.f))
        object.__setattr__(
            self, "x0", tuple(None if v is None else float(v) for v in self.x0)
        )
        layout = self.layout
        if len(self.f) != self.n:
            raise DimensionError(f"{len(self.f)} dynamics components for n={self.n}")
        if len(self.x0) != self.n:
            raise DimensionError(f"x0 has length {len(self.x0)}, expected {self.n}")
        polys = list(self.f) + [self.h, self.H]
        polys += list(self.X.inequalities) + list(self.U.inequalities) + list(self.K.inequalities)
        for p in polys:
            if p.layout != layout:
                raise DimensionError(f"polynomial {p.to_string()!r} is not over {layout}")
        if self.group.layout != layout:
            raise DimensionError(f"group acts on {self.group.layout}, problem is {layout}")
        xu = layout.select("xu")
        for i, fi in enumerate(self.f):
            if not fi.depends_only_on(xu):
                raise ValueError(f"dynamics component {i + 1} depends on t")
        if not self.H.depends_only_on(layout.state_indices):
            raise ValueError("terminal cost must depend on x only")
        if self.X.label is not SetLabel.STATE or self.U.label is not SetLabel.CONTROL \
                or self.K.label is not SetLabel.TERMINAL:
            raise ValueError("sets must be labelled X, U, K respectively")
        self._check_initial_state()

    def _check_initial_state(self) -> None:
        point = [0.0] + [0.0 if v is None else v for v in self.x0] + [0.0] * self.m
        free = {1 + i for i in self.free_initial}
        for p in self.X.inequalities:
            if free & set(p.variables()):
                continue
            value = p.evaluate(point)
            if value < -MEMBERSHIP_TOL:
                raise ValueError(
                    f"x0 violates the state constraint {p.to_string()!r} ({value:.3g} < 0)"
                )

    @property
    def layout(self) -> VarLayout:
        return VarLayout(self.n, self.m)

    @property
    def free_initial(self) -> Tuple[int, ...]:
        """State positions (0-based) whose initial value is not prescribed."""
        return tuple(i for i, v in enumerate(self.x0) if v is None)

    @property
    def deg_f(self) -> int:
        return max((fi.degree for fi in self.f), default=0)

    @property
    def set_degree(self) -> int:
        return max(self.X.degree, self.U.degree, self.K.degree)

    @property
    def k0(self) -> int:
        top = max(self.deg_f, self.h.degree, self.H.degree, self.set_degree)
        return max(1, math.ceil(top / 2))

    @property
    def is_fixed(self) -> bool:
        return isinstance(self.horizon, FixedUnit)

    def initial_value(self, phi: Polynomial) -> Polynomial:
        """phi(0, x0) as a polynomial in the free initial coordinates (a constant otherwise)."""
        values: Dict[int, float] = {0: 0.0}
        for i, v in enumerate(self.x0):
            if v is not None:
                values[1 + i] = v
        return phi.substitute_values(values)

    def initial_point(self, free_values: Optional[Sequence[float]] = None) -> np.ndarray:
        free_values = list(free_values or [])
        point = []
        for v in self.x0:
            if v is None:
                if not free_values:
                    raise ValueError("missing value for a free initial coordinate")
                point.append(float(free_values.pop(0)))
            else:
                point.append(v)
        return np.array(point)

    def with_group(self, group: SignGroup) -> "OCProblem":
        return replace(self, group=group)


@dataclass(frozen=True)
class RelaxationOrder:
    """Relaxation order k; matrices are indexed by monomials of degree <= k."""

    k: int

    @property
    def d(self) -> int:
        return 2 * self.k

    @classmethod
    def for_problem(cls, k: int, prob: OCProblem) -> "RelaxationOrder":
        if k < prob.k0:
            raise OrderError(f"relaxation order k={k} is below k0={prob.k0} for {prob.name}")
        return cls(k)

    @classmethod
    def from_d(cls, d: int, prob: OCProblem) -> "RelaxationOrder":
        if d % 2:
            raise OrderError(f"relaxation degree d={d} must be even")
        return cls.for_problem(d // 2, prob)


# --- symmetry validation ---------------------------------------------------------


@dataclass
class ElementCheck:
    """Mismatches of one group element against every symmetry hypothesis."""

    element: GroupElement
    dynamics_mismatch: float
    running_cost_mismatch: float
    terminal_cost_mismatch: float
    x0_mismatch: float
    set_mismatch: Dict[str, float] = field(default_factory=dict)

    def failures(self, tol: float) -> List[str]:
        tag = f"g=(dx={list(self.element.dx)}, du={list(self.element.du)})"
        problems = []
        if self.dynamics_mismatch > tol:
            problems.append(f"{tag}: dynamics not equivariant (mismatch {self.dynamics_mismatch:.3g})")
        if self.running_cost_mismatch > tol:
            problems.append(f"{tag}: running cost not invariant (mismatch {self.running_cost_mismatch:.3g})")
        if self.terminal_cost_mismatch > tol:
            problems.append(f"{tag}: terminal cost not invariant (mismatch {self.terminal_cost_mismatch:.3g})")
        if self.x0_mismatch > tol:
            problems.append(f"{tag}: x0 not fixed (mismatch {self.x0_mismatch:.3g})")
        for label, mismatch in self.set_mismatch.items():
            if mismatch > tol:
                problems.append(f"{tag}: {label} not permuted onto itself (mismatch {mismatch:.3g})")
        return problems


@dataclass
class ValidationReport:
    """Outcome of validate_symmetry; ``passed`` iff every mismatch is within ``tol``."""

    tol: float
    checks: List[ElementCheck]

    def failures(self) -> List[str]:
        return [msg for check in self.checks for msg in check.failures(self.tol)]

    @property
    def passed(self) -> bool:
        return not self.failures()


def _set_permutation_mismatch(ineqs: Sequence[Polynomial], g: GroupElement) -> float:
    """Largest coefficient mismatch when matching g(S)'s inequalities onto S's."""
    unused = list(range(len(ineqs)))
    worst = 0.0
    for p in ineqs:
        image = apply_group(p, g)
        best_j, best = None, math.inf
        for j in unused:
            diff = image.max_abs_difference(ineqs[j])
            if diff < best:
                best_j, best = j, diff
        if best_j is None:
            return math.inf
        unused.remove(best_j)
        worst = max(worst, best)
    return worst


def validate_symmetry(prob: OCProblem, tol: float = SYMMETRY_TOL) -> ValidationReport:
    """Check every group element against the invariance hypotheses of the problem."""
    if prob.group.layout != prob.layout:
        raise DimensionError("group and problem dimensions differ")
    checks = []
    for g in prob.group.elements:
        dyn = 0.0
        for i, fi in enumerate(prob.f):
            # f_i(g x, tau(g) u) must equal dx_i * f_i(x, u)
            dyn = max(dyn, apply_group(fi, g).max_abs_difference(fi.scale(g.dx[i])))
        x0_err = max(
            (abs(d * v - v) for d, v in zip(g.dx, prob.x0) if v is not None), default=0.0
        )
        checks.append(ElementCheck(
            element=g,
            dynamics_mismatch=dyn,
            running_cost_mismatch=apply_group(prob.h, g).max_abs_difference(prob.h),
            terminal_cost_mismatch=apply_group(prob.H, g).max_abs_difference(prob.H),
            x0_mismatch=x0_err,
            set_mismatch={
                s.label.value: _set_permutation_mismatch(s.inequalities, g)
                for s in (prob.X, prob.U, prob.K)
            },
        ))
    report = ValidationReport(tol, checks)
    if not report.passed:
        logger.info("symmetry validation failed for %s: %s", prob.name, "; ".join(report.failures()))
    return report


# --- horizon ----------------------------------------------------------------------


def normalize_horizon(prob: OCProblem) -> OCProblem:
    """Rescale a free-final-time problem to s in [0, 1] with T as a constant extra state.

    No-op for fixed-horizon problems.
    """
    if isinstance(prob.horizon, FixedUnit):
        return prob
    tmax = prob.horizon.tmax
    layout = prob.layout.with_states(1)
    t_index = 1 + prob.n
    T = Polynomial.variable(t_index, layout)
    s = Polynomial.variable(layout.time_index, layout)

    dynamics = [T * fi.embed(layout) for fi in prob.f] + [Polynomial.zero(layout)]
    h = prob.h.embed(layout)
    if layout.time_index in h.variables():
        h = h.substitute(layout.time_index, T * s)
    bounds = [T, tmax - T]
    return OCProblem(
        n=prob.n + 1,
        m=prob.m,
        f=tuple(dynamics),
        h=T * h,
        H=prob.H.embed(layout),
        X=prob.X.embed(layout).extended(bounds),
        U=prob.U.embed(layout),
        K=prob.K.embed(layout).extended(bounds),
        x0=prob.x0 + (None,),
        horizon=FixedUnit(),
        group=prob.group.extend_states(1),
        name=prob.name,
        final_time_index=prob.n,
    )


# --- simulation ---------------------------------------------------------------------


def simulate(prob: OCProblem, control: Callable[[float], Sequence[float]],
             free_initial: Sequence[float] = (), num: int = 201,
             max_step: float = 1e-3) -> Tuple[np.ndarray, np.ndarray]:
    """Integrate a fixed-horizon problem's dynamics on [0, 1] under ``control``.

    Args:
        prob: Fixed-horizon (possibly normalized) problem
        control: Map from time to a control vector of length m
        free_initial: Initial values for the free coordinates of x0
        num: Number of output samples
        max_step: Integrator step bound (controls may be discontinuous)

    Returns:
        Tuple of (time samples, states with shape (num, n))
    """
    if not prob.is_fixed:
        prob = normalize_horizon(prob)
    x_init = prob.initial_point(free_initial)

    def rhs(t: float, x: np.ndarray) -> np.ndarray:
        u = list(control(t))
        point = [t] + list(x) + u
        return np.array([fi.evaluate(point) for fi in prob.f])

    samples = np.linspace(0.0, 1.0, num)
    sol = solve_ivp(rhs, (0.0, 1.0), x_init, t_eval=samples, max_step=max_step,
                    rtol=1e-9, atol=1e-11)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    return sol.t, sol.y.T

"""Built-in benchmark problems and closed-form oracles for their optimal trajectories.

Both problems are minimal-time problems; after horizon normalization the
layout is (s, x_1..x_n, T, u) with s in [0, 1] and T the constant final time.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm

from .ocp import FreeTime, OCProblem, SemialgebraicSet, SetLabel, normalize_horizon
from .poly import GroupElement, Monomial, Polynomial, SignGroup, VarLayout, monomials_up_to
from .recovery import trajectory_moments

logger = logging.getLogger(__name__)

DEFAULT_TMAX = 2.0
QUBIT_ALPHA = math.atan(3.0)
# 2 pi / kappa is the minimal time; this kappa gives T_f = pi / sqrt(10) ~ 0.9935
QUBIT_KAPPA = 2.0 * math.sqrt(10.0)

MomentTable = Dict[Monomial, float]


class OracleError(ValueError):
    """Raised when no closed-form optimal solution is known for the parameters."""


# --- integrator: x' = u ---------------------------------------------------------------


def integrator_problem(tmax: float = DEFAULT_TMAX) -> OCProblem:
    """x' = u on [-1, 1], x(0) = 0, x(T)^2 = 1, minimal T; symmetric under (x, u) -> (-x, -u)."""
    layout = VarLayout(1, 1)
    x = Polynomial.variable(1, layout)
    u = Polynomial.variable(2, layout)
    return OCProblem(
        n=1,
        m=1,
        f=(u,),
        h=Polynomial.constant(1.0, layout),
        H=Polynomial.zero(layout),
        X=SemialgebraicSet.from_constraints(SetLabel.STATE, [1 - x * x]),
        U=SemialgebraicSet.from_constraints(SetLabel.CONTROL, [1 - u * u]),
        K=SemialgebraicSet.from_constraints(SetLabel.TERMINAL, [], [1 - x * x]),
        x0=(0.0,),
        horizon=FreeTime(tmax),
        group=SignGroup([GroupElement((-1,), (-1,))]),
        name="integrator",
    )


def integrator_oracle(s: int, a: int, b: int) -> float:
    """Moment of t^s x^a u^b under the invariant optimal occupation measure (T = 1)."""
    return (1 + (-1) ** (a + b)) / (2 * (s + a + 1))


def integrator_terminal_oracle(a: int) -> float:
    return (1 + (-1) ** a) / 2


def integrator_moment_tables(max_degree: int) -> Tuple[MomentTable, MomentTable]:
    """Oracle tables over the normalized layout (s, x, T, u); T = 1 on the optimum."""
    layout = VarLayout(2, 1)
    z = {
        mono: integrator_oracle(mono[0], mono[1], mono[3])
        for mono in monomials_up_to(max_degree, layout.select("txu"), layout)
    }
    y = {
        mono: integrator_terminal_oracle(mono[1])
        for mono in monomials_up_to(max_degree, layout.state_indices, layout)
    }
    return z, y


def integrator_candidate(name: str, max_degree: int) -> Tuple[MomentTable, MomentTable]:
    """State-curve moments of named integrator candidates ("true": x = t, T = 1)."""
    if name != "true":
        raise OracleError(f"unknown integrator candidate {name!r}; available: true")
    nodes, weights = np.polynomial.legendre.leggauss(max_degree + 2)
    s = (nodes + 1) / 2
    states = np.column_stack([s, np.ones_like(s)])
    return trajectory_moments(VarLayout(2, 1), s, weights / 2, states,
                              terminal=np.array([1.0, 1.0]), max_degree=max_degree)


# --- qubit on the Bloch sphere --------------------------------------------------------------


def qubit_matrices(kappa: float = QUBIT_KAPPA,
                   alpha: float = QUBIT_ALPHA) -> Tuple[np.ndarray, np.ndarray]:
    """Drift and control generators; both antisymmetric."""
    c, s = kappa * math.cos(alpha), kappa * math.sin(alpha)
    A0 = np.array([[0.0, -c, 0.0], [c, 0.0, 0.0], [0.0, 0.0, 0.0]])
    A1 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -s], [0.0, s, 0.0]])
    return A0, A1


def qubit_problem(kappa: float = QUBIT_KAPPA, alpha: float = QUBIT_ALPHA,
                  tmax: float = DEFAULT_TMAX) -> OCProblem:
    """Minimal-time inversion x' = (A0 + u A1) x from (0, 0, 1) to (0, 0, -1) on the sphere."""
    layout = VarLayout(3, 1)
    x1, x2, x3 = (Polynomial.variable(i, layout) for i in (1, 2, 3))
    u = Polynomial.variable(4, layout)
    c, s = kappa * math.cos(alpha), kappa * math.sin(alpha)
    sphere = x1 * x1 + x2 * x2 + x3 * x3 - 1
    return OCProblem(
        n=3,
        m=1,
        f=(x2 * (-c), x1 * c - u * x3 * s, u * x2 * s),
        h=Polynomial.constant(1.0, layout),
        H=Polynomial.zero(layout),
        X=SemialgebraicSet.from_constraints(SetLabel.STATE, [], [sphere]),
        U=SemialgebraicSet.from_constraints(SetLabel.CONTROL, [1 - u * u]),
        # {(0, 0, -1)} through invariant polynomials only
        K=SemialgebraicSet.from_constraints(
            SetLabel.TERMINAL, [-(x1 * x1), -(x2 * x2)], [x3 + 1]),
        x0=(0.0, 0.0, 1.0),
        horizon=FreeTime(tmax),
        group=SignGroup([GroupElement((-1, -1, 1), (-1,))]),
        name="qubit",
    )


STRATEGIES = ("u1", "-u1", "u2", "-u2")


@dataclass(frozen=True)
class QubitOracle:
    """Bang-bang optimal trajectories of the qubit problem for alpha >= pi/4.

    Each strategy has two arcs with u = +-1, rotating about fixed axes at rate
    kappa; the switch happens on the equator. Times are normalized: s = t / T_f.
    """

    kappa: float = QUBIT_KAPPA
    alpha: float = QUBIT_ALPHA

    def __post_init__(self) -> None:
        if not math.pi / 4 <= self.alpha < math.pi / 2:
            raise OracleError(
                f"alpha={self.alpha:.4g} is outside [pi/4, pi/2); the optimal strategies are unknown"
            )
        if not self.kappa > 0:
            raise OracleError("kappa must be positive")

    @property
    def switch_angle(self) -> float:
        return math.pi - math.acos(1.0 / math.tan(self.alpha) ** 2)

    @property
    def final_time(self) -> float:
        return 2 * math.pi / self.kappa

    @property
    def switch_time(self) -> float:
        return self.switch_angle / self.kappa

    @property
    def switch_fractions(self) -> Tuple[float, float]:
        """Normalized switch times of strategies u1 and u2."""
        first = self.switch_angle / (2 * math.pi)
        return first, 1.0 - first

    def _arcs(self, strategy: str) -> Tuple[float, float, float]:
        """(first control value, normalized switch time, sign applied to x1 and x2)."""
        if strategy not in STRATEGIES:
            raise OracleError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
        flip = -1.0 if strategy.startswith("-") else 1.0
        fraction = self.switch_fractions[0 if strategy.endswith("u1") else 1]
        return 1.0, fraction, flip

    def control(self, strategy: str, s: np.ndarray) -> np.ndarray:
        first, fraction, flip = self._arcs(strategy)
        s = np.asarray(s, dtype=float)
        return flip * np.where(s <= fraction, first, -first)

    def _switch_state(self, strategy: str) -> np.ndarray:
        A0, A1 = qubit_matrices(self.kappa, self.alpha)
        _, fraction, _ = self._arcs(strategy)
        return expm((A0 + A1) * fraction * self.final_time) @ np.array([0.0, 0.0, 1.0])

    def states(self, strategy: str, s: np.ndarray) -> np.ndarray:
        """States at normalized times ``s`` (shape (len(s), 3))."""
        A0, A1 = qubit_matrices(self.kappa, self.alpha)
        _, fraction, flip = self._arcs(strategy)
        start = np.array([0.0, 0.0, 1.0])
        middle = self._switch_state(strategy)
        T = self.final_time
        out = []
        for value in np.atleast_1d(np.asarray(s, dtype=float)):
            if value <= fraction:
                x = expm((A0 + A1) * value * T) @ start
            else:
                x = expm((A0 - A1) * (value - fraction) * T) @ middle
            out.append(x)
        states = np.array(out)
        states[:, :2] *= flip
        return states

    def terminal_state(self, strategy: str = "u1") -> np.ndarray:
        return self.states(strategy, np.array([1.0]))[0]

    def _nodes(self, strategy: str, per_arc: int) -> Tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre nodes and weights on each smooth arc of [0, 1]."""
        _, fraction, _ = self._arcs(strategy)
        nodes, weights = np.polynomial.legendre.leggauss(per_arc)
        pieces_s, pieces_w = [], []
        for a, b in ((0.0, fraction), (fraction, 1.0)):
            pieces_s.append(a + (b - a) * (nodes + 1) / 2)
            pieces_w.append(weights * (b - a) / 2)
        return np.concatenate(pieces_s), np.concatenate(pieces_w)

    def moment(self, poly: Polynomial, strategy: str = "u1") -> float:
        """Integral over s in [0, 1] of poly(s, x(s), T_f, u(s)) by adaptive quadrature.

        ``poly`` lives in the normalized layout (s, x1, x2, x3, T, u).
        """
        _, fraction, _ = self._arcs(strategy)

        def integrand(value: float) -> float:
            x = self.states(strategy, np.array([value]))[0]
            u = float(self.control(strategy, np.array([value]))[0])
            return poly.evaluate([value, *x, self.final_time, u])

        total = 0.0
        for a, b in ((0.0, fraction), (fraction, 1.0)):
            part, _ = quad(integrand, a, b, epsabs=1e-11, epsrel=1e-11, limit=200)
            total += part
        return total

    def moment_tables(self, max_degree: int, strategies: Tuple[str, ...] = STRATEGIES,
                      per_arc: int = 64) -> Tuple[MomentTable, MomentTable]:
        """Averaged occupation and terminal moments over the given strategies.

        The default average over all four strategies is the G-invariant optimum.
        """
        return _qubit_tables(self.kappa, self.alpha, max_degree, tuple(strategies), per_arc)

    def candidate(self, name: str, max_degree: int,
                  per_arc: int = 64) -> Tuple[MomentTable, MomentTable]:
        """State-curve moments of a named candidate ("true" or "no-switch-x2")."""
        if name == "true":
            return self.moment_tables(max_degree, ("u1",), per_arc)
        if name == "no-switch-x2":
            s, w = self._nodes("u1", per_arc)
            states = self.states("u1", s)
            states[:, 1] = np.abs(states[:, 1])
            terminal = self.terminal_state("u1")
            terminal[1] = abs(terminal[1])
            terminal = np.append(terminal, self.final_time)
            full = np.column_stack([states, np.full(len(s), self.final_time)])
            return trajectory_moments(VarLayout(4, 1), s, w, full, terminal=terminal,
                                      max_degree=max_degree)
        raise OracleError(f"unknown qubit candidate {name!r}; available: true, no-switch-x2")


@lru_cache(maxsize=16)
def _qubit_tables(kappa: float, alpha: float, max_degree: int, strategies: Tuple[str, ...],
                  per_arc: int) -> Tuple[MomentTable, MomentTable]:
    oracle = QubitOracle(kappa, alpha)
    layout = VarLayout(4, 1)
    z_total: MomentTable = {}
    y_total: MomentTable = {}
    for strategy in strategies:
        s, w = oracle._nodes(strategy, per_arc)
        states = np.column_stack([oracle.states(strategy, s), np.full(len(s), oracle.final_time)])
        terminal = np.append(oracle.terminal_state(strategy), oracle.final_time)
        z, y = trajectory_moments(layout, s, w, states, controls=oracle.control(strategy, s)[:, None],
                                  terminal=terminal, max_degree=max_degree)
        for table, total in ((z, z_total), (y, y_total)):
            for mono, value in table.items():
                total[mono] = total.get(mono, 0.0) + value / len(strategies)
    return z_total, y_total


# --- registry --------------------------------------------------------------------------------


BUILTIN_PROBLEMS: Dict[str, Callable[..., OCProblem]] = {
    "integrator": integrator_problem,
    "qubit": qubit_problem,
}


def builtin_problem(name: str, kappa: Optional[float] = None, alpha: Optional[float] = None,
                    tmax: Optional[float] = None) -> OCProblem:
    if name not in BUILTIN_PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; available: {', '.join(BUILTIN_PROBLEMS)}")
    kwargs = {"tmax": tmax if tmax is not None else DEFAULT_TMAX}
    if name == "qubit":
        kwargs["kappa"] = kappa if kappa is not None else QUBIT_KAPPA
        kwargs["alpha"] = alpha if alpha is not None else QUBIT_ALPHA
    return BUILTIN_PROBLEMS[name](**kwargs)


def oracle_tables(prob: OCProblem, max_degree: int) -> Tuple[MomentTable, MomentTable]:
    """Invariant optimal moments of a built-in problem in its normalized layout."""
    if prob.name == "integrator":
        return integrator_moment_tables(max_degree)
    if prob.name == "qubit":
        kappa, alpha = _qubit_parameters(prob)
        return QubitOracle(kappa, alpha).moment_tables(max_degree)
    raise OracleError(f"no oracle for problem {prob.name!r}")


def candidate_tables(prob: OCProblem, candidate: str,
                     max_degree: int) -> Tuple[MomentTable, MomentTable]:
    """Moments of a named candidate state curve of a built-in problem."""
    if prob.name == "integrator":
        return integrator_candidate(candidate, max_degree)
    if prob.name == "qubit":
        kappa, alpha = _qubit_parameters(prob)
        return QubitOracle(kappa, alpha).candidate(candidate, max_degree)
    raise OracleError(f"no candidate curves for problem {prob.name!r}")


def _qubit_parameters(prob: OCProblem) -> Tuple[float, float]:
    """Recover (kappa, alpha) from the qubit dynamics coefficients."""
    layout = prob.layout
    c = prob.f[1].coefficient(layout.unit(1))
    mono = [0] * layout.size
    mono[3] = 1
    mono[layout.control_indices[0]] = 1
    s = -prob.f[1].coefficient(tuple(mono))
    return math.hypot(c, s), math.atan2(s, c)


def normalized_layout(prob: OCProblem) -> VarLayout:
    return normalize_horizon(prob).layout


def state_names(prob: OCProblem) -> List[str]:
    names = [f"x{i + 1}" for i in range(prob.n)]
    if not prob.is_fixed:
        names.append("T")
    return names

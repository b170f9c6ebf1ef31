"""Trajectory recovery from solved pseudo-moments.

Scalar curves y(t) are rebuilt one at a time with a regularized
Christoffel-Darboux polynomial; sign-symmetric components are rebuilt from
their squares by choosing square-root branches.
"""

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
from scipy.integrate import trapezoid
from numpy.polynomial import Legendre
from numpy.polynomial import Polynomial as PowerSeries

from .assembly import (
    DEFAULT_EPS,
    DEFAULT_SLACK,
    MU,
    Kind,
    PseudoMomentVector,
    assemble,
    assemble_feasibility,
    assemble_lift,
    assemble_selection,
    invariant_generators,
    random_selection_polynomials,
)
from .ocp import OCProblem, normalize_horizon
from .poly import Monomial, Polynomial, VarLayout, monomials_up_to
from .solver import SolveResult, SolverConfig, StatusCode, extract_moments, solve

logger = logging.getLogger(__name__)

MAX_BRANCH_SITES = 8


class RecoveryError(RuntimeError):
    """Raised when a recovery pipeline stage cannot complete."""


class Variant(Enum):
    A1 = "A1"
    A2 = "A2"


class Mode(Enum):
    P1 = "P1"
    P2 = "P2"


@dataclass
class RecoveryConfig:
    tgrid: int = 400
    ygrid: int = 1000
    seed: int = 0
    slack: float = DEFAULT_SLACK
    eps: float = DEFAULT_EPS
    branch_tol: float = 0.05
    cd_order: Optional[int] = None

    @classmethod
    def from_manager(cls, config: Any, **overrides: Any) -> "RecoveryConfig":
        values = {
            "tgrid": config.get_tgrid(),
            "ygrid": config.get_ygrid(),
            "seed": config.get_seed(),
            "slack": config.get_slack(),
            "eps": config.get_eps(),
            "branch_tol": config.get("branch_tol", 0.05),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


# --- curve moments ------------------------------------------------------------------------


def trajectory_moments(layout: VarLayout, times: np.ndarray, weights: np.ndarray,
                       states: np.ndarray, controls: Optional[np.ndarray] = None,
                       terminal: Optional[np.ndarray] = None,
                       max_degree: int = 2) -> Tuple[Dict[Monomial, float], Dict[Monomial, float]]:
    """Quadrature moments of a sampled curve s -> (x(s), u(s)) on [0, 1].

    Returns the occupation table over (t, x[, u]) and the terminal table over x
    (point mass at ``terminal``; empty when it is not given).
    """
    times = np.asarray(times, dtype=float)
    weights = np.asarray(weights, dtype=float)
    states = np.asarray(states, dtype=float).reshape(len(times), layout.n)
    columns = [times[:, None], states]
    groups = "tx"
    if controls is not None:
        columns.append(np.asarray(controls, dtype=float).reshape(len(times), layout.m))
        groups = "txu"
    else:
        columns.append(np.zeros((len(times), layout.m)))
    samples = np.hstack(columns)
    z_table = {}
    for mono in monomials_up_to(max_degree, layout.select(groups), layout):
        z_table[mono] = float(weights @ np.prod(samples ** np.array(mono), axis=1))
    y_table = {}
    if terminal is not None:
        point = np.concatenate([[0.0], np.asarray(terminal, dtype=float), np.zeros(layout.m)])
        for mono in monomials_up_to(max_degree, layout.state_indices, layout):
            y_table[mono] = float(np.prod(point ** np.array(mono)))
    return z_table, y_table


def curve_moment_matrix(moment: Any, k: int) -> np.ndarray:
    """Moment matrix over the (t, y) monomials of degree <= k.

    ``moment(s, a)`` returns the integral of t^s y(t)^a over [0, 1].
    """
    basis = cd_basis(k)
    size = len(basis)
    mat = np.empty((size, size))
    for i, (s1, a1) in enumerate(basis):
        for j in range(i, size):
            s2, a2 = basis[j]
            mat[i, j] = mat[j, i] = moment(s1 + s2, a1 + a2)
    return mat


def invariant_curve_moments(z: PseudoMomentVector, P: Polynomial, k: int,
                            V: Optional[Polynomial] = None) -> np.ndarray:
    """(t, y) moment matrix of the pushforward curve y(t) = P(x(t)) V(u(t)).

    Entries are L_z(t^s (P V)^a) evaluated on the solved sequence.
    """
    layout = z.layout
    Y = _fit_layout(P, layout)
    if V is not None:
        Y = Y * _fit_layout(V, layout)
    degree = max(1, Y.degree)
    usable = z.max_degree // (2 * degree)
    if k > usable:
        raise RecoveryError(
            f"CD order {k} needs moments of degree {2 * k * degree}; "
            f"the solved sequence supports CD orders up to {usable}"
        )
    t = Polynomial.variable(layout.time_index, layout)
    powers = [Polynomial.constant(1.0, layout)]
    for _ in range(2 * k):
        powers.append(powers[-1] * Y)
    cache: Dict[Tuple[int, int], float] = {}

    def moment(s: int, a: int) -> float:
        if (s, a) not in cache:
            cache[(s, a)] = z.functional(MU, (t ** s) * powers[a])
        return cache[(s, a)]

    return curve_moment_matrix(moment, k)


def _fit_layout(poly: Polynomial, layout: VarLayout) -> Polynomial:
    if poly.layout == layout:
        return poly
    if poly.layout.m == layout.m and poly.layout.n < layout.n:
        return poly.embed(layout)
    raise RecoveryError(f"polynomial over {poly.layout} does not fit layout {layout}")


# --- Christoffel-Darboux reconstruction ---------------------------------------------------------


def cd_basis(k: int) -> List[Tuple[int, int]]:
    """Exponent pairs (s, a) of t^s y^a with s + a <= k, graded with t first."""
    return [(degree - a, a) for degree in range(k + 1) for a in range(degree + 1)]


def cd_beta(k: int) -> float:
    return 2.0 ** (3.0 - math.sqrt(k))


def _orthonormal_change(k: int, ybox: Tuple[float, float]) -> np.ndarray:
    """Rows: power-basis coefficients of products of orthonormal Legendre
    polynomials on [0, 1] x ybox (uniform probability measure), same ordering
    as cd_basis."""
    basis = cd_basis(k)
    index = {pair: i for i, pair in enumerate(basis)}
    lo, hi = ybox

    def coefficients(degree: int, domain: Tuple[float, float]) -> np.ndarray:
        series = Legendre.basis(degree, domain=list(domain)).convert(kind=PowerSeries)
        coef = np.zeros(degree + 1)
        coef[: len(series.coef)] = series.coef
        return coef * math.sqrt(2 * degree + 1)

    change = np.zeros((len(basis), len(basis)))
    for row, (i, j) in enumerate(basis):
        ct = coefficients(i, (0.0, 1.0))
        cy = coefficients(j, (lo, hi))
        for s, a in itertools.product(range(i + 1), range(j + 1)):
            change[row, index[(s, a)]] += ct[s] * cy[a]
    return change


@dataclass
class CDModel:
    """Regularized CD polynomial q(t, y) = b' (M + beta I)^{-1} b.

    ``b`` is the orthonormal Legendre basis of the box [0, 1] x ybox; the raw
    moment matrix is kept in the power basis of ``basis``.
    """

    basis: List[Tuple[int, int]]
    moment_matrix: np.ndarray
    beta: float
    ybox: Tuple[float, float]
    kernel: np.ndarray

    @classmethod
    def from_moments(cls, moment_matrix: np.ndarray, k: int, ybox: Tuple[float, float],
                     beta: Optional[float] = None) -> "CDModel":
        lo, hi = ybox
        if not hi > lo:
            raise ValueError(f"empty range box {ybox}")
        basis = cd_basis(k)
        mat = np.asarray(moment_matrix, dtype=float)
        if mat.shape != (len(basis), len(basis)):
            raise ValueError(f"moment matrix of shape {mat.shape} for CD order {k}")
        mat = (mat + mat.T) / 2
        beta = cd_beta(k) if beta is None else beta
        change = _orthonormal_change(k, ybox)
        ortho = change @ mat @ change.T
        try:
            factor = la.cho_factor(ortho + beta * np.eye(len(basis)))
        except la.LinAlgError as e:
            raise RecoveryError(f"regularized CD matrix is not positive definite: {e}") from e
        kernel = change.T @ la.cho_solve(factor, change)
        return cls(basis, mat, beta, (float(lo), float(hi)), kernel)

    @property
    def order(self) -> int:
        return max(s + a for s, a in self.basis)

    def _power_basis(self, t: float, ys: np.ndarray) -> np.ndarray:
        return np.array([t ** s * ys ** a for s, a in self.basis])

    def evaluate(self, t: float, ys: np.ndarray) -> np.ndarray:
        """q(t, y) for every y in ``ys``."""
        b = self._power_basis(t, np.asarray(ys, dtype=float))
        return np.einsum("ij,ij->j", b, self.kernel @ b)


@dataclass
class RecoveredCurve:
    grid: np.ndarray
    values: np.ndarray
    label: str = "y"

    def __len__(self) -> int:
        return len(self.grid)

    def __neg__(self) -> "RecoveredCurve":
        return RecoveredCurve(self.grid, -self.values, self.label)

    def at(self, t: np.ndarray) -> np.ndarray:
        """Piecewise-constant evaluation at the nearest grid sample (ties go left)."""
        t = np.asarray(t, dtype=float)
        right = np.clip(np.searchsorted(self.grid, t), 1, len(self.grid) - 1)
        left = right - 1
        nearer_left = np.abs(t - self.grid[left]) <= np.abs(self.grid[right] - t)
        idx = np.where(nearer_left, left, right)
        return self.values[idx]


def cd_recover(model: CDModel, ybox: Optional[Tuple[float, float]] = None,
               tgrid: int = 400, ygrid: int = 1000, label: str = "y") -> RecoveredCurve:
    """f(t) = smallest minimizer of q(t, .) over a uniform grid of the box."""
    lo, hi = ybox or model.ybox
    ts = np.linspace(0.0, 1.0, tgrid)
    ys = np.linspace(lo, hi, ygrid)
    values = np.empty(tgrid)
    for i, t in enumerate(ts):
        # argmin returns the first hit, i.e. the smallest grid value
        values[i] = ys[int(np.argmin(model.evaluate(t, ys)))]
    return RecoveredCurve(ts, values, label)


def l1_error(curve: RecoveredCurve, reference: Any) -> float:
    """Trapezoidal L1([0, 1]) distance to a callable or to another curve."""
    target = reference.at(curve.grid) if isinstance(reference, RecoveredCurve) \
        else np.asarray(reference(curve.grid), dtype=float)
    return float(trapezoid(np.abs(curve.values - target), curve.grid))


def switch_times(curve: RecoveredCurve) -> List[float]:
    """Midpoints between consecutive samples where the curve changes sign."""
    signs = np.sign(curve.values)
    times = []
    last = None
    for i, sign in enumerate(signs):
        if sign == 0:
            continue
        if last is not None and sign != signs[last]:
            times.append(float((curve.grid[last] + curve.grid[i]) / 2))
        last = i
    return times


# --- square-root branches -----------------------------------------------------------------------


def _near_zero_sites(root: np.ndarray, tol: float) -> List[int]:
    spread = float(root.max() - root.min())
    if spread <= 0:
        return []
    low = root <= tol * spread
    sites = []
    for is_low, run in itertools.groupby(enumerate(low), key=lambda item: item[1]):
        if not is_low:
            continue
        idx = [i for i, _ in run]
        if idx[0] == 0 or idx[-1] == len(root) - 1:
            continue
        sites.append(idx[int(np.argmin(root[idx]))])
    return sites


def sqrt_branch_reconstruct(y_curve: RecoveredCurve, switch_hints: Sequence[float] = (),
                            branch_tol: float = 0.05) -> List[RecoveredCurve]:
    """Candidate signed curves c with c^2 = y, changing sign only where sqrt(y) is near zero.

    Sign changes are allowed at interior near-zero runs of sqrt(y) and at the
    explicit ``switch_hints``; both global signs are returned.
    """
    root = np.sqrt(np.clip(y_curve.values, 0.0, None))
    if not np.any(root > 0):
        return [RecoveredCurve(y_curve.grid, np.zeros_like(root), f"sqrt({y_curve.label})")]
    sites = set(_near_zero_sites(root, branch_tol))
    for hint in switch_hints:
        idx = int(np.clip(np.searchsorted(y_curve.grid, hint), 1, len(root) - 1))
        sites.add(idx)
    sites = sorted(sites)
    if len(sites) > MAX_BRANCH_SITES:
        logger.warning("%d candidate switch sites for %s; keeping the %d lowest",
                       len(sites), y_curve.label, MAX_BRANCH_SITES)
        sites = sorted(sorted(sites, key=lambda i: root[i])[:MAX_BRANCH_SITES])

    candidates = []
    for pattern in itertools.product((1.0, -1.0), repeat=len(sites) + 1):
        signs = np.empty_like(root)
        bounds = [0] + sites + [len(root)]
        for sign, start, end in zip(pattern, bounds[:-1], bounds[1:]):
            signs[start:end] = sign
        tag = "".join("+" if p > 0 else "-" for p in pattern)
        candidates.append(RecoveredCurve(y_curve.grid, signs * root,
                                         f"sqrt({y_curve.label})[{tag}]"))
    return candidates


# --- pipelines ----------------------------------------------------------------------------------


@dataclass
class StageRecord:
    name: str
    status: Dict[str, Any]
    variables: int
    seconds: float


@dataclass
class RecoveryReport:
    """Everything produced by one recovery run."""

    problem: str
    variant: str
    mode: str
    k: int
    seed: int
    bound: float = math.nan
    stages: List[StageRecord] = field(default_factory=list)
    curves: Dict[str, RecoveredCurve] = field(default_factory=dict)
    candidates: Dict[str, List[RecoveredCurve]] = field(default_factory=dict)
    final_time: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "problem": self.problem,
            "variant": self.variant,
            "mode": self.mode,
            "k": self.k,
            "d": 2 * self.k,
            "seed": self.seed,
            "bound": self.bound,
            "final_time": self.final_time,
            "stages": [
                {"name": s.name, "variables": s.variables, "seconds": round(s.seconds, 3),
                 **s.status}
                for s in self.stages
            ],
            "curves": sorted(self.curves),
            "candidates": {key: [c.label for c in value]
                           for key, value in sorted(self.candidates.items())},
        }


def _run_stage(report: RecoveryReport, name: str, inst: Any,
               solver_config: Optional[SolverConfig]) -> SolveResult:
    started = time.perf_counter()
    result = solve(inst, solver_config)
    report.stages.append(StageRecord(name, result.status.to_dict(), inst.num_variables,
                                     time.perf_counter() - started))
    if not result.ok:
        raise RecoveryError(f"stage {name} ended with status {result.status.code.value}: "
                            f"{result.status.message}")
    return result


def variable_radii(prob: OCProblem) -> Dict[int, float]:
    """Bounds |v| <= r read off the constraints of X and U.

    Recognized shapes: c + a v >= 0 pairs on one variable, and c - sum a_i v_i^2 >= 0
    with c, a_i > 0 (which covers boxes, balls and spheres given as equality pairs).
    """
    norm = normalize_horizon(prob)
    layout = norm.layout
    lower: Dict[int, float] = {}
    upper: Dict[int, float] = {}
    radii: Dict[int, float] = {}
    for g in norm.X.inequalities + norm.U.inequalities:
        c = g.coefficient(layout.zero())
        rest = [(mono, coef) for mono, coef in g.items() if any(mono)]
        if len(rest) == 1 and sum(rest[0][0]) == 1:
            mono, a = rest[0]
            i = mono.index(1)
            if a < 0:
                upper[i] = min(upper.get(i, math.inf), c / -a)
            else:
                lower[i] = max(lower.get(i, -math.inf), -c / a)
            continue
        if c > 0 and rest and all(coef < 0 and sorted(mono)[-1] == 2 and sum(mono) == 2
                                  for mono, coef in rest):
            for mono, coef in rest:
                i = mono.index(2)
                radii[i] = min(radii.get(i, math.inf), math.sqrt(c / -coef))
    for i in set(lower) & set(upper):
        radii[i] = min(radii.get(i, math.inf), max(abs(lower[i]), abs(upper[i])))
    return radii


def _curve_box(z: PseudoMomentVector, Y: Polynomial,
               radii: Optional[Mapping[int, float]] = None) -> Tuple[float, float]:
    """Symmetric range box of y widened by 10%.

    Bounded variables give |Y| <= sum |c| prod r^e; otherwise the largest
    available even moment of y stands in for its sup norm.
    """
    layout = z.layout
    if radii is not None:
        bounds = {layout.time_index: 1.0, **radii}
        if all(i in bounds for i in Y.variables()):
            radius = sum(abs(coef) * math.prod(bounds[i] ** e for i, e in enumerate(mono) if e)
                         for mono, coef in Y.items())
            if radius > 0:
                return -1.1 * radius, 1.1 * radius
    degree = max(1, Y.degree)
    radius = 0.0
    power = Polynomial.constant(1.0, layout)
    for j in range(1, z.max_degree // (2 * degree) + 1):
        power = power * Y * Y
        value = z.functional(MU, power)
        if value > 0:
            radius = max(radius, value ** (1.0 / (2 * j)))
    radius = 1.1 * radius if radius > 0 else 1.0
    return -radius, radius


def recover_curve(z: PseudoMomentVector, Y: Polynomial, label: str, cfg: RecoveryConfig,
                  ybox: Optional[Tuple[float, float]] = None,
                  radii: Optional[Mapping[int, float]] = None) -> RecoveredCurve:
    """CD reconstruction of y(t) = Y(x(t), u(t)) at the highest usable (or configured) order.

    Without an explicit ``ybox`` the box comes from ``radii`` (see variable_radii).
    """
    Y = _fit_layout(Y, z.layout)
    usable = z.max_degree // (2 * max(1, Y.degree))
    k = min(cfg.cd_order, usable) if cfg.cd_order else usable
    if k < 1:
        raise RecoveryError(f"sequence of degree {z.max_degree} is too short to recover {label}")
    mat = invariant_curve_moments(z, Y, k)
    model = CDModel.from_moments(mat, k, ybox or _curve_box(z, Y, radii))
    logger.debug("CD recovery of %s at order %d, box %s", label, k, model.ybox)
    return cd_recover(model, tgrid=cfg.tgrid, ygrid=cfg.ygrid, label=label)


def _label(poly: Polynomial, names: Sequence[str]) -> str:
    text = poly.to_string()
    for default, name in zip(poly.layout.names, names):
        if default != name:
            text = text.replace(default, name)
    return text


def _names(prob: OCProblem) -> List[str]:
    """Flat variable names of the normalized layout (T for the final-time state)."""
    layout = prob.layout
    names = list(layout.names)
    if prob.final_time_index is not None:
        names[1 + prob.final_time_index] = "T"
    return names


def run_algorithm(variant: Variant, prob: OCProblem, k: int, mode: Mode,
                  cfg: Optional[RecoveryConfig] = None,
                  solver_config: Optional[SolverConfig] = None,
                  kind: Kind = Kind.SYMMETRIC) -> RecoveryReport:
    """Lower bound, optional extreme-point selection, then curve recovery.

    P1 recovers the invariant curves P_q(x(t)), V_r(u(t)) and the square-root
    branches of squared coordinates; P2 solves the lift R_k and recovers each
    coordinate of x and u directly. ``kind=Kind.DENSE`` runs the pipeline
    without exploiting symmetry.
    """
    cfg = cfg or RecoveryConfig()
    variant, mode = Variant(variant), Mode(mode)
    norm = normalize_horizon(prob)
    layout = norm.layout
    symmetric = kind is not Kind.DENSE and not norm.group.is_trivial
    bound_kind = kind if symmetric else Kind.DENSE
    report = RecoveryReport(prob.name, variant.value, mode.value, k, cfg.seed)

    bound = _run_stage(report, "Q_k^G" if symmetric else "Q_k",
                       assemble(bound_kind, prob, k), solver_config)
    report.bound = bound.objective
    z = extract_moments(bound)

    if variant is Variant.A2 or not symmetric:
        P, Ptilde = random_selection_polynomials(prob, cfg.seed, symmetric=symmetric)
        inst = assemble_selection(bound_kind, prob, k, P, Ptilde, report.bound, cfg.slack)
        z = extract_moments(_run_stage(report, "Z_k^G" if symmetric else "Z_k", inst,
                                       solver_config))

    names = _names(norm)
    radii = variable_radii(prob)
    if norm.final_time_index is not None:
        T = Polynomial.variable(1 + norm.final_time_index, layout)
        report.final_time = z.functional(MU, T)

    if mode is Mode.P1 or not symmetric:
        targets: List[Polynomial] = []
        if symmetric:
            P_family, V_family = invariant_generators(norm.group)
            targets = P_family + V_family
        else:
            targets = [Polynomial.variable(i, layout) for i in layout.select("xu")]
        for Y in targets:
            label = _label(Y, names)
            curve = recover_curve(z, Y, label, cfg, radii=radii)
            report.curves[label] = curve
            mono = next(iter(Y.terms))
            squared = [i for i, e in enumerate(mono) if e == 2]
            # controls are recovered from the lift in P2
            if (symmetric and len(Y.terms) == 1 and squared and sum(mono) == 2
                    and squared[0] in layout.state_indices):
                report.candidates[names[squared[0]]] = sqrt_branch_reconstruct(
                    curve, branch_tol=cfg.branch_tol)
        return report

    P, Ptilde = random_selection_polynomials(prob, cfg.seed + 1)
    lift = assemble_lift(prob, k, z, z, report.bound, P, Ptilde, cfg.slack)
    zl = extract_moments(_run_stage(report, "R_k", lift, solver_config))
    for i in layout.select("xu"):
        Y = Polynomial.variable(i, layout)
        report.curves[names[i]] = recover_curve(zl, Y, names[i], cfg, radii=radii)
    return report


# --- feasibility test ----------------------------------------------------------------------------


class Outcome(Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class FeasibilityVerdict:
    outcome: Outcome
    gap: Optional[float]
    bound: float
    status: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {"outcome": self.outcome.value, "gap": self.gap, "bound": self.bound,
                "status": self.status}


def feasibility_test(prob: OCProblem, k: int, candidate_z: Mapping[Monomial, float],
                     candidate_y: Mapping[Monomial, float], eps: float = DEFAULT_EPS,
                     bound: Optional[float] = None,
                     solver_config: Optional[SolverConfig] = None) -> FeasibilityVerdict:
    """Check a candidate state curve against the relaxation Q_k^u.

    Infeasibility rejects the curve. Otherwise the gap between the candidate
    cost and the lower bound measures how far from optimal it is; ``bound``
    defaults to the symmetric (or dense, without symmetry) bound at order k.
    """
    norm = normalize_horizon(prob)
    if bound is None:
        kind = Kind.DENSE if norm.group.is_trivial else Kind.SYMMETRIC
        result = solve(assemble(kind, prob, k), solver_config)
        if not result.ok:
            raise RecoveryError(f"stage bound ended with status {result.status.code.value}")
        bound = result.objective
    result = solve(assemble_feasibility(prob, k, candidate_z, candidate_y, eps), solver_config)
    code = result.status.code
    if code is StatusCode.PRIMAL_INFEASIBLE:
        return FeasibilityVerdict(Outcome.REJECT, None, bound, result.status.to_dict())
    if code is not StatusCode.OPTIMAL:
        return FeasibilityVerdict(Outcome.INCONCLUSIVE, None, bound, result.status.to_dict())
    terminal = sum(coef * candidate_y.get(mono, 0.0) for mono, coef in norm.H.terms.items())
    gap = result.objective + terminal - bound
    return FeasibilityVerdict(Outcome.ACCEPT, gap, bound, result.status.to_dict())

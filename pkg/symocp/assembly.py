"""Moment relaxations of the control problem as explicit conic programs.

Every SDP here works on pseudo-moment variables of two measures: the occupation
measure ``mu`` on (t, x, u) and the terminal measure ``muT`` on x. A program is
a list of PSD blocks whose entries are affine in the variables, linear
equalities, linear inequalities (``A z <= b``) and a linear objective.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .ocp import (
    OCProblem,
    RelaxationOrder,
    SYMMETRY_TOL,
    normalize_horizon,
    validate_symmetry,
)
from .poly import (
    Monomial,
    Polynomial,
    SignGroup,
    VarLayout,
    basis_blocks,
    grlex_key,
    is_invariant,
    monomial_product,
    monomials_up_to,
    parity_class,
    reynolds,
)

logger = logging.getLogger(__name__)

MU = "mu"
MU_T = "muT"

DEFAULT_SLACK = 1e-6
DEFAULT_EPS = 1e-5

Form = Dict[int, float]


class AssemblyError(ValueError):
    """Raised when an SDP cannot be assembled as requested."""


class Kind(Enum):
    """Relaxation flavour."""
    DENSE = "dense"
    SYMMETRIC = "symmetric"
    SUBSTITUTION_ONLY = "subonly"

    @property
    def eliminates(self) -> bool:
        return self is not Kind.DENSE

    @property
    def blocked(self) -> bool:
        return self is Kind.SYMMETRIC


# --- pseudo-moment vectors -----------------------------------------------------------


@dataclass
class PseudoMomentVector:
    """Map from (measure tag, monomial) to variable id, with values after a solve.

    When ``eliminate`` is set, monomials outside the invariant parity class of
    ``group`` are not declared; their moments are exactly zero.
    """

    layout: VarLayout
    max_degree: int
    group: SignGroup
    eliminate: bool
    keys: List[Tuple[str, Monomial]]
    entries: Dict[Tuple[str, Monomial], int]
    values: Optional[np.ndarray] = None

    @classmethod
    def declare(cls, layout: VarLayout, k: int, group: SignGroup,
                eliminate: bool) -> "PseudoMomentVector":
        keys: List[Tuple[str, Monomial]] = []
        for tag, variables in ((MU, layout.select("txu")), (MU_T, layout.state_indices)):
            for mono in monomials_up_to(2 * k, variables, layout):
                if eliminate and not parity_class(mono, group).is_invariant:
                    continue
                keys.append((tag, mono))
        entries = {key: i for i, key in enumerate(keys)}
        return cls(layout, 2 * k, group, eliminate, keys, entries)

    @property
    def size(self) -> int:
        return len(self.keys)

    def covers(self, tag: str, mono: Monomial) -> bool:
        if sum(mono) > self.max_degree:
            return False
        if tag == MU_T:
            return mono[0] == 0 and not any(mono[i] for i in self.layout.control_indices)
        return True

    def is_eliminated(self, tag: str, mono: Monomial) -> bool:
        return (
            self.eliminate
            and self.covers(tag, mono)
            and not parity_class(mono, self.group).is_invariant
        )

    def index(self, tag: str, mono: Monomial) -> Optional[int]:
        """Variable id of a moment; None when the moment is eliminated (zero)."""
        key = (tag, tuple(mono))
        idx = self.entries.get(key)
        if idx is not None:
            return idx
        if self.is_eliminated(tag, mono):
            return None
        raise AssemblyError(
            f"moment {tag}{tuple(mono)} of degree {sum(mono)} is not covered by a "
            f"sequence of degree {self.max_degree}"
        )

    def linear_form(self, tag: str, poly: Polynomial) -> Form:
        """Coefficients of L(poly) in the variables."""
        form: Form = {}
        for mono, coef in poly.terms.items():
            idx = self.index(tag, mono)
            if idx is not None:
                form[idx] = form.get(idx, 0.0) + coef
        return {i: c for i, c in form.items() if c != 0.0}

    def with_values(self, values: np.ndarray) -> "PseudoMomentVector":
        values = np.asarray(values, dtype=float)
        if values.shape != (self.size,):
            raise ValueError(f"expected {self.size} values, got shape {values.shape}")
        return replace(self, values=values)

    def moment(self, tag: str, mono: Monomial) -> float:
        if self.values is None:
            raise ValueError("pseudo-moment vector has no values; solve first")
        idx = self.index(tag, mono)
        return 0.0 if idx is None else float(self.values[idx])

    def functional(self, tag: str, poly: Polynomial) -> float:
        """L(poly) on the solved sequence."""
        return sum(coef * self.moment(tag, mono) for mono, coef in poly.terms.items())

    def as_dict(self, tag: str) -> Dict[Monomial, float]:
        if self.values is None:
            raise ValueError("pseudo-moment vector has no values; solve first")
        return {mono: float(self.values[i]) for i, (t, mono) in enumerate(self.keys) if t == tag}


# --- program containers ---------------------------------------------------------------


@dataclass
class PSDBlock:
    """Symmetric matrix with affine entries; only the upper triangle is stored.

    Triangle position ``p`` is the p-th pair of ``np.triu_indices(size)`` (row-major).
    Entry (i, j) and (j, i) share the same affine form.
    """

    label: str
    size: int
    positions: np.ndarray
    variables: np.ndarray
    coefficients: np.ndarray
    constant: np.ndarray
    basis: Tuple[Monomial, ...] = ()

    @property
    def triangle_size(self) -> int:
        return self.size * (self.size + 1) // 2

    def operator(self, num_variables: int) -> sp.csr_matrix:
        """Sparse map from variables to the stacked upper triangle (without the constant)."""
        return sp.csr_matrix(
            (self.coefficients, (self.positions, self.variables)),
            shape=(self.triangle_size, num_variables),
        )

    def matrix(self, values: np.ndarray) -> np.ndarray:
        tri = self.operator(len(values)) @ values + self.constant
        rows, cols = np.triu_indices(self.size)
        mat = np.zeros((self.size, self.size))
        mat[rows, cols] = tri
        mat[cols, rows] = tri
        return mat

    def max_abs_coefficient(self) -> float:
        candidates = [np.max(np.abs(self.coefficients))] if self.coefficients.size else []
        if np.any(self.constant):
            candidates.append(np.max(np.abs(self.constant)))
        return float(max(candidates)) if candidates else 0.0


@dataclass
class Residuals:
    """Constraint violations of a candidate variable vector."""

    equality: float
    inequality: float
    min_eigenvalues: List[float]
    trace_scale: float

    @property
    def min_eigenvalue(self) -> float:
        return min(self.min_eigenvalues, default=0.0)

    @property
    def primal(self) -> float:
        return max(self.equality, self.inequality, -self.min_eigenvalue, 0.0)


@dataclass
class SDPInstance:
    """Conic program: min c'z + c0 s.t. PSD blocks, A_eq z = b_eq, A_in z <= b_in."""

    kind: Kind
    name: str
    order: int
    moments: PseudoMomentVector
    psd_blocks: List[PSDBlock]
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    ineq_matrix: sp.csr_matrix
    ineq_rhs: np.ndarray
    objective: np.ndarray
    objective_constant: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def num_variables(self) -> int:
        return self.moments.size

    @property
    def block_sizes(self) -> List[int]:
        return [b.size for b in self.psd_blocks]

    def blocks_labelled(self, prefix: str) -> List[PSDBlock]:
        return [b for b in self.psd_blocks if b.label.startswith(prefix)]

    def objective_value(self, values: np.ndarray) -> float:
        return float(self.objective @ values + self.objective_constant)

    def residuals(self, values: np.ndarray) -> Residuals:
        values = np.asarray(values, dtype=float)
        eq = np.abs(self.eq_matrix @ values - self.eq_rhs)
        ineq = self.ineq_matrix @ values - self.ineq_rhs
        eigs = []
        trace = 0.0
        for block in self.psd_blocks:
            mat = block.matrix(values)
            eigs.append(float(np.linalg.eigvalsh(mat)[0]))
            trace = max(trace, abs(float(np.trace(mat))))
        return Residuals(
            equality=float(eq.max()) if eq.size else 0.0,
            inequality=float(max(ineq.max(), 0.0)) if ineq.size else 0.0,
            min_eigenvalues=eigs,
            trace_scale=trace,
        )

    def dump(self) -> str:
        """Deterministic plain-text dump (sparse triplets) for cross-checking."""
        lines = [
            "# symocp conic program",
            f"name {self.name}",
            f"kind {self.kind.value}",
            f"order {self.order}",
            f"variables {self.num_variables}",
        ]
        for i, (tag, mono) in enumerate(self.moments.keys):
            lines.append(f"var {i} {tag} " + " ".join(str(e) for e in mono))
        lines.append(f"objective {self.objective_constant!r}")
        for i in np.flatnonzero(self.objective):
            lines.append(f"c {i} {self.objective[i]!r}")
        for block in self.psd_blocks:
            lines.append(f"block {block.label} {block.size}")
            rows, cols = np.triu_indices(block.size)
            for p in np.flatnonzero(block.constant):
                lines.append(f"e {rows[p]} {cols[p]} -1 {block.constant[p]!r}")
            op = block.operator(self.num_variables).tocoo()
            order = np.lexsort((op.col, op.row))
            for r, c, v in zip(op.row[order], op.col[order], op.data[order]):
                lines.append(f"e {rows[r]} {cols[r]} {c} {v!r}")
        for label, mat, rhs in (("eq", self.eq_matrix, self.eq_rhs),
                                ("ineq", self.ineq_matrix, self.ineq_rhs)):
            mat = mat.tocsr()
            for r in range(mat.shape[0]):
                lines.append(f"{label} {r} {rhs[r]!r}")
                start, end = mat.indptr[r], mat.indptr[r + 1]
                cols = mat.indices[start:end]
                vals = mat.data[start:end]
                for idx in np.argsort(cols):
                    lines.append(f"a {cols[idx]} {vals[idx]!r}")
        return "\n".join(lines) + "\n"


class _Builder:
    """Accumulates blocks and linear constraints over one PseudoMomentVector."""

    def __init__(self, moments: PseudoMomentVector):
        self.moments = moments
        self.blocks: List[PSDBlock] = []
        self.eq_rows: List[Form] = []
        self.eq_rhs: List[float] = []
        self.ineq_rows: List[Form] = []
        self.ineq_rhs: List[float] = []

    def add_blocks(self, blocks: Iterable[PSDBlock]) -> None:
        self.blocks.extend(blocks)

    def add_equality(self, form: Form, rhs: float) -> None:
        if not form and rhs == 0.0:
            return
        self.eq_rows.append(form)
        self.eq_rhs.append(float(rhs))

    def add_inequality(self, form: Form, rhs: float) -> None:
        self.ineq_rows.append(form)
        self.ineq_rhs.append(float(rhs))

    def _matrix(self, rows: List[Form]) -> sp.csr_matrix:
        r, c, v = [], [], []
        for i, form in enumerate(rows):
            for j, coef in sorted(form.items()):
                r.append(i)
                c.append(j)
                v.append(coef)
        return sp.csr_matrix((v, (r, c)), shape=(len(rows), self.moments.size))

    def build(self, kind: Kind, name: str, order: int, objective: Form,
              metadata: Dict[str, Any]) -> SDPInstance:
        c = np.zeros(self.moments.size)
        for j, coef in objective.items():
            c[j] += coef
        metadata = dict(metadata)
        metadata.setdefault("variables", self.moments.size)
        metadata.setdefault("block_sizes", [b.size for b in self.blocks])
        return SDPInstance(
            kind=kind,
            name=name,
            order=order,
            moments=self.moments,
            psd_blocks=self.blocks,
            eq_matrix=self._matrix(self.eq_rows),
            eq_rhs=np.array(self.eq_rhs, dtype=float),
            ineq_matrix=self._matrix(self.ineq_rows),
            ineq_rhs=np.array(self.ineq_rhs, dtype=float),
            objective=c,
            metadata=metadata,
        )


def _merge(dst: Form, src: Form, scale: float = 1.0) -> Form:
    for j, coef in src.items():
        dst[j] = dst.get(j, 0.0) + scale * coef
    return dst


def _clean(form: Form) -> Form:
    return {j: c for j, c in form.items() if c != 0.0}


# --- moment and localizing matrices ----------------------------------------------------


def localizing_matrix(seq: PseudoMomentVector, q: Polynomial, k: int,
                      variables: Sequence[int], group: Optional[SignGroup] = None,
                      tag: str = MU, label: str = "L") -> List[PSDBlock]:
    """Blocks of M_{k - ceil(deg q / 2)}(q z) over monomials in ``variables``.

    With a nontrivial ``group`` the basis is split by parity class and ``q``
    must be invariant; entries are sum_delta q_delta z_{delta + u + v}.
    """
    order = k - math.ceil(q.degree / 2)
    if order < 0:
        raise AssemblyError(f"constraint {q.to_string()!r} has degree above 2k={2 * k}")
    if group is not None and not group.is_trivial:
        if not is_invariant(q, group, SYMMETRY_TOL):
            raise AssemblyError(
                f"localizing polynomial {q.to_string()!r} is not invariant under {group}"
            )
        blocks = basis_blocks(order, variables, group)
    else:
        blocks = {None: monomials_up_to(order, variables, seq.layout)}

    q_terms = list(q.terms.items())
    result = []
    for cls, basis in blocks.items():
        size = len(basis)
        positions, variables_, coefs = [], [], []
        constant = np.zeros(size * (size + 1) // 2)
        pos = 0
        for i in range(size):
            for j in range(i, size):
                uv = monomial_product(basis[i], basis[j])
                entry: Form = {}
                for delta, coef in q_terms:
                    idx = seq.index(tag, monomial_product(delta, uv))
                    if idx is not None:
                        entry[idx] = entry.get(idx, 0.0) + coef
                for idx in sorted(entry):
                    if entry[idx] != 0.0:
                        positions.append(pos)
                        variables_.append(idx)
                        coefs.append(entry[idx])
                pos += 1
        suffix = "" if cls is None else str(cls)
        result.append(PSDBlock(
            label=f"{label}{suffix}",
            size=size,
            positions=np.array(positions, dtype=int),
            variables=np.array(variables_, dtype=int),
            coefficients=np.array(coefs, dtype=float),
            constant=constant,
            basis=tuple(basis),
        ))
    return result


def moment_matrix(seq: PseudoMomentVector, k: int, variables: Sequence[int],
                  group: Optional[SignGroup] = None, tag: str = MU,
                  label: str = "M") -> List[PSDBlock]:
    """Blocks of M_k(z): one dense block, or one block per parity class."""
    one = Polynomial.constant(1.0, seq.layout)
    return localizing_matrix(seq, one, k, variables, group, tag, label)


# --- Liouville constraints ---------------------------------------------------------------


def liouville_test_functions(prob: OCProblem, k: int) -> List[Monomial]:
    """phi = t^s x^alpha with s + |alpha| <= 2k + 1 - deg f; always contains phi = 1."""
    layout = prob.layout
    top = 2 * k + 1 - prob.deg_f
    if top < 0:
        raise AssemblyError(f"order k={k} too small for dynamics of degree {prob.deg_f}")
    return monomials_up_to(top, layout.select("tx"), layout)


def liouville_equalities(prob: OCProblem, k: int,
                         seq: PseudoMomentVector) -> List[Tuple[Form, float]]:
    """L_y(phi(1, .)) - L_z(d phi/dt + <grad_x phi, f>) = phi(0, x0) per test function.

    Free initial coordinates leave a polynomial right-hand side, which is moved to
    the left and evaluated on the terminal measure.
    """
    layout = prob.layout
    rows = []
    for phi_mono in liouville_test_functions(prob, k):
        phi = Polynomial.monomial(phi_mono, layout)
        flow = phi.partial_derivative(layout.time_index)
        for i, index in enumerate(layout.state_indices):
            if phi_mono[index]:
                flow = flow + phi.partial_derivative(index) * prob.f[i]
        terminal = phi.substitute_values({layout.time_index: 1.0})
        initial = prob.initial_value(phi)
        rhs = initial.coefficient(layout.zero())
        initial_free = initial - rhs

        form: Form = {}
        _merge(form, seq.linear_form(MU_T, terminal))
        _merge(form, seq.linear_form(MU, flow), -1.0)
        _merge(form, seq.linear_form(MU_T, initial_free), -1.0)
        rows.append((_clean(form), rhs))
    return rows


# --- hierarchy assembly -------------------------------------------------------------------


def _prepare(prob: OCProblem, k: int, kind: Kind) -> OCProblem:
    prob = normalize_horizon(prob)
    RelaxationOrder.for_problem(k, prob)
    if kind.eliminates and not prob.group.is_trivial:
        report = validate_symmetry(prob)
        if not report.passed:
            raise AssemblyError(
                "symmetric relaxations need a validated symmetry: " + "; ".join(report.failures())
            )
    return prob


def _feasible_set(prob: OCProblem, k: int, kind: Kind) -> _Builder:
    """PSD blocks and Liouville equalities shared by every hierarchy."""
    layout = prob.layout
    group = prob.group
    moments = PseudoMomentVector.declare(layout, k, group, kind.eliminates)
    block_group = group if kind.blocked else None
    b = _Builder(moments)

    txu = layout.select("txu")
    xs = layout.state_indices
    us = layout.control_indices
    b.add_blocks(moment_matrix(moments, k, txu, block_group, MU, "M(z)"))
    b.add_blocks(moment_matrix(moments, k, xs, block_group, MU_T, "M(y)"))
    for j, v in enumerate(prob.X.inequalities):
        b.add_blocks(localizing_matrix(moments, v, k, xs, block_group, MU, f"L(v{j + 1} z)"))
    for j, w in enumerate(prob.U.inequalities):
        b.add_blocks(localizing_matrix(moments, w, k, us, block_group, MU, f"L(w{j + 1} z)"))
    for j, theta in enumerate(prob.K.inequalities):
        b.add_blocks(localizing_matrix(moments, theta, k, xs, block_group, MU_T,
                                       f"L(theta{j + 1} y)"))
    t = Polynomial.variable(layout.time_index, layout)
    b.add_blocks(localizing_matrix(moments, t - t * t, k, (layout.time_index,), block_group,
                                   MU, "L(t(1-t) z)"))
    for form, rhs in liouville_equalities(prob, k, moments):
        b.add_equality(form, rhs)
    return b


def _cost_form(prob: OCProblem, moments: PseudoMomentVector) -> Form:
    form = moments.linear_form(MU, prob.h)
    return _clean(_merge(form, moments.linear_form(MU_T, prob.H)))


def _metadata(prob: OCProblem, k: int, kind: Kind, program: str) -> Dict[str, Any]:
    return {
        "program": program,
        "problem": prob.name,
        "kind": kind.value,
        "k": k,
        "d": 2 * k,
        "group_order": prob.group.order,
    }


def assemble(kind: Kind, prob: OCProblem, k: int) -> SDPInstance:
    """Q_k (dense), Q_k^G (symmetric, blocked) or Q_k^I (substitution only).

    Free-time problems are normalized first.
    """
    prob = _prepare(prob, k, kind)
    b = _feasible_set(prob, k, kind)
    program = {Kind.DENSE: "Q_k", Kind.SYMMETRIC: "Q_k^G",
               Kind.SUBSTITUTION_ONLY: "Q_k^I"}[kind]
    inst = b.build(kind, prob.name, k, _cost_form(prob, b.moments),
                   _metadata(prob, k, kind, program))
    logger.debug("assembled %s for %s at k=%d: %d variables, blocks %s",
                 program, prob.name, k, inst.num_variables, inst.block_sizes)
    return inst


def _as_layout(poly: Polynomial, layout: VarLayout) -> Polynomial:
    if poly.layout == layout:
        return poly
    if poly.layout.m == layout.m and poly.layout.n < layout.n:
        return poly.embed(layout)
    raise AssemblyError(f"polynomial over {poly.layout} does not fit problem layout {layout}")


def _cost_cap(b: _Builder, prob: OCProblem, rho: float, slack: float) -> None:
    b.add_inequality(_cost_form(prob, b.moments), rho * (1.0 + slack) + slack)


def assemble_selection(kind: Kind, prob: OCProblem, k: int, P: Polynomial,
                       Ptilde: Polynomial, rho_k: float,
                       slack: float = DEFAULT_SLACK) -> SDPInstance:
    """Z_k / Z_k^G: the feasible set of assemble() with the cost capped at rho_k.

    The objective L_z(P) + L_y(Ptilde) picks an extreme point of the optimal set.
    """
    prob = _prepare(prob, k, kind)
    layout = prob.layout
    P = _as_layout(P, layout)
    Ptilde = _as_layout(Ptilde, layout)
    if not Ptilde.depends_only_on(layout.state_indices):
        raise AssemblyError("the terminal selection polynomial must depend on x only")
    if kind.eliminates and not prob.group.is_trivial:
        for label, poly in (("P", P), ("Ptilde", Ptilde)):
            projected = reynolds(poly, prob.group)
            if projected != poly:
                logger.warning("selection polynomial %s is not G-invariant; "
                               "using its Reynolds projection", label)
        P = reynolds(P, prob.group)
        Ptilde = reynolds(Ptilde, prob.group)
    b = _feasible_set(prob, k, kind)
    _cost_cap(b, prob, rho_k, slack)
    objective = _merge(b.moments.linear_form(MU, P), b.moments.linear_form(MU_T, Ptilde))
    meta = _metadata(prob, k, kind, "Z_k" if kind is Kind.DENSE else "Z_k^G")
    meta.update({"rho": rho_k, "slack": slack})
    return b.build(kind, prob.name, k, _clean(objective), meta)


def random_selection_polynomials(prob: OCProblem, seed: int,
                                 symmetric: bool = False) -> Tuple[Polynomial, Polynomial]:
    """Generic P (degree <= 2 in t, x, u) and Ptilde (degree <= 2 in x).

    Coefficients are i.i.d. uniform on [-1, 1] from a seeded generator; with
    ``symmetric`` both are projected onto invariants.
    """
    prob = normalize_horizon(prob)
    layout = prob.layout
    rng = np.random.default_rng(seed)
    monos = monomials_up_to(2, layout.select("txu"), layout)
    P = Polynomial(dict(zip(monos, rng.uniform(-1.0, 1.0, len(monos)))), layout)
    monos_x = monomials_up_to(2, layout.state_indices, layout)
    Ptilde = Polynomial(dict(zip(monos_x, rng.uniform(-1.0, 1.0, len(monos_x)))), layout)
    if symmetric:
        P = reynolds(P, prob.group)
        Ptilde = reynolds(Ptilde, prob.group)
    return P, Ptilde


# --- lift R_k -------------------------------------------------------------------------------


def invariant_generators(group: SignGroup) -> Tuple[List[Polynomial], List[Polynomial]]:
    """Generating families {P_q} of R[x]^G and {V_r} of R[u]^G for a sign group.

    Unflipped coordinates enter linearly; flipped coordinates enter through the
    products x_i x_j (squares included) of coordinates flipped by exactly the
    same generators.
    """
    layout = group.layout

    def family(indices: Sequence[int]) -> List[Polynomial]:
        signature = {i: tuple(g.signs[i] for g in group.generators) for i in indices}
        monos = []
        for i in indices:
            if all(s > 0 for s in signature[i]):
                monos.append(layout.unit(i))
        for i, j in itertools.combinations_with_replacement(indices, 2):
            if any(s < 0 for s in signature[i]) and signature[i] == signature[j]:
                monos.append(monomial_product(layout.unit(i), layout.unit(j)))
        monos.sort(key=grlex_key)
        return [Polynomial.monomial(mono, layout) for mono in monos]

    return family(layout.state_indices), family(layout.control_indices)


def _products(family: Sequence[Polynomial], base: Polynomial,
              max_degree: int) -> List[Polynomial]:
    """base * prod_q family[q]^{a_q} for every exponent vector a within max_degree.

    Terms above max_degree are dropped from each product.
    """
    results = [base]
    frontier = [(base, 0)]
    while frontier:
        nxt = []
        for poly, start in frontier:
            for q in range(start, len(family)):
                gen = family[q]
                if gen.degree == 0 or poly.degree + gen.degree > max_degree:
                    continue
                product = poly * gen
                product = Polynomial(
                    {m: c for m, c in product.terms.items() if sum(m) <= max_degree},
                    product.layout,
                )
                results.append(product)
                nxt.append((product, q))
        frontier = nxt
    return results


def lift_substitutions(prob: OCProblem, k: int,
                       families: Optional[Tuple[List[Polynomial], List[Polynomial]]] = None
                       ) -> Tuple[List[Polynomial], List[Polynomial]]:
    """Distinct polynomials t^s P^a V^b (for mu) and P^a (for muT) of degree <= 2k."""
    prob = normalize_horizon(prob)
    layout = prob.layout
    P_family, V_family = families or invariant_generators(prob.group)
    top = 2 * k
    one = Polynomial.constant(1.0, layout)
    t = Polynomial.variable(layout.time_index, layout)

    def unique(polys: Iterable[Polynomial]) -> List[Polynomial]:
        seen = {}
        for poly in polys:
            if not poly.is_zero():
                seen.setdefault(poly, None)
        return list(seen)

    state_products = _products(P_family, one, top)
    z_polys = []
    for poly in _products(V_family, one, top):
        for mixed in _products(P_family, poly, top):
            for s in range(top - mixed.degree + 1):
                z_polys.append((t ** s) * mixed)
    return unique(z_polys), unique(state_products)


def assemble_lift(prob: OCProblem, k: int, zstar: PseudoMomentVector,
                  ystar: PseudoMomentVector, rhoG: float, P: Polynomial,
                  Ptilde: Polynomial, slack: float = DEFAULT_SLACK,
                  families: Optional[Tuple[List[Polynomial], List[Polynomial]]] = None
                  ) -> SDPInstance:
    """R_k: dense Q_k with the cost cap and every invariant moment pinned to the
    symmetric solution ``zstar`` / ``ystar`` (the same vector may serve for both)."""
    prob = _prepare(prob, k, Kind.DENSE)
    layout = prob.layout
    P = _as_layout(P, layout)
    Ptilde = _as_layout(Ptilde, layout)
    b = _feasible_set(prob, k, Kind.DENSE)
    _cost_cap(b, prob, rhoG, slack)
    z_polys, y_polys = lift_substitutions(prob, k, families)
    for poly in z_polys:
        b.add_equality(b.moments.linear_form(MU, poly), zstar.functional(MU, poly))
    for poly in y_polys:
        b.add_equality(b.moments.linear_form(MU_T, poly), ystar.functional(MU_T, poly))
    objective = _merge(b.moments.linear_form(MU, P), b.moments.linear_form(MU_T, Ptilde))
    meta = _metadata(prob, k, Kind.DENSE, "R_k")
    meta.update({"rho": rhoG, "slack": slack, "pinned_mu": len(z_polys),
                 "pinned_muT": len(y_polys)})
    return b.build(Kind.DENSE, prob.name, k, _clean(objective), meta)


# --- feasibility test Q_k^u -------------------------------------------------------------------


def assemble_feasibility(prob: OCProblem, k: int, traj_moments_z: Mapping[Monomial, float],
                         traj_moments_y: Mapping[Monomial, float],
                         eps: float = DEFAULT_EPS) -> SDPInstance:
    """Q_k^u: dense Q_k with |L_z(t^s x^a) - m| <= eps and |L_y(x^a) - m| <= eps.

    Infeasibility certifies that the candidate state curve is not admissible.
    """
    prob = _prepare(prob, k, Kind.DENSE)
    layout = prob.layout
    b = _feasible_set(prob, k, Kind.DENSE)
    for tag, variables, table in ((MU, layout.select("tx"), traj_moments_z),
                                  (MU_T, layout.state_indices, traj_moments_y)):
        for mono in monomials_up_to(2 * k, variables, layout):
            if mono not in table:
                raise AssemblyError(f"candidate moment {tag}{mono} is missing")
            idx = b.moments.index(tag, mono)
            value = float(table[mono])
            b.add_inequality({idx: 1.0}, value + eps)
            b.add_inequality({idx: -1.0}, -value + eps)
    meta = _metadata(prob, k, Kind.DENSE, "Q_k^u")
    meta["eps"] = eps
    return b.build(Kind.DENSE, prob.name, k, b.moments.linear_form(MU, prob.h), meta)


def oracle_vector(inst: SDPInstance, z_moments: Mapping[Monomial, float],
                  y_moments: Mapping[Monomial, float]) -> np.ndarray:
    """Variable vector of an instance filled from closed-form moment tables."""
    values = np.zeros(inst.num_variables)
    for i, (tag, mono) in enumerate(inst.moments.keys):
        table = z_moments if tag == MU else y_moments
        if mono not in table:
            raise AssemblyError(f"oracle moment {tag}{mono} is missing")
        values[i] = table[mono]
    return values

"""Sparse multivariate polynomials over (t, x, u) and sign-group actions on them."""

import itertools
import numbers
from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

Monomial = Tuple[int, ...]


class DimensionError(ValueError):
    """Raised when operands do not share variable counts."""


def grlex_key(mono: Monomial) -> Tuple[int, Tuple[int, ...]]:
    """Sort key for the graded lexicographic order with t before x before u."""
    return sum(mono), tuple(-e for e in mono)


def monomial_product(a: Monomial, b: Monomial) -> Monomial:
    return tuple(i + j for i, j in zip(a, b))


@dataclass(frozen=True)
class VarLayout:
    """Variable counts of the ordered tuple (t, x_1..x_n, u_1..u_m)."""

    n: int
    m: int

    def __post_init__(self) -> None:
        if self.n < 0 or self.m < 0:
            raise DimensionError(f"invalid variable counts n={self.n}, m={self.m}")

    @property
    def size(self) -> int:
        return 1 + self.n + self.m

    @property
    def time_index(self) -> int:
        return 0

    @property
    def state_indices(self) -> Tuple[int, ...]:
        return tuple(range(1, 1 + self.n))

    @property
    def control_indices(self) -> Tuple[int, ...]:
        return tuple(range(1 + self.n, 1 + self.n + self.m))

    @property
    def names(self) -> Tuple[str, ...]:
        return (
            ("t",)
            + tuple(f"x{i + 1}" for i in range(self.n))
            + tuple(f"u{j + 1}" for j in range(self.m))
        )

    def select(self, groups: str) -> Tuple[int, ...]:
        """Flat indices of the variable groups named in ``groups`` (a subset of "txu")."""
        unknown = set(groups) - set("txu")
        if unknown:
            raise ValueError(f"unknown variable groups: {sorted(unknown)}")
        indices: List[int] = []
        if "t" in groups:
            indices.append(self.time_index)
        if "x" in groups:
            indices.extend(self.state_indices)
        if "u" in groups:
            indices.extend(self.control_indices)
        return tuple(indices)

    def zero(self) -> Monomial:
        return (0,) * self.size

    def unit(self, index: int) -> Monomial:
        exps = [0] * self.size
        exps[index] = 1
        return tuple(exps)

    def with_states(self, extra: int) -> "VarLayout":
        return VarLayout(self.n + extra, self.m)

    def embed_monomial(self, mono: Monomial, target: "VarLayout") -> Monomial:
        """Re-index a monomial into a layout with extra states appended after x_n."""
        if target.n < self.n or target.m != self.m:
            raise DimensionError(f"cannot embed layout {self} into {target}")
        pad = (0,) * (target.n - self.n)
        return mono[: 1 + self.n] + pad + mono[1 + self.n:]


@dataclass(frozen=True)
class MultiIndex:
    """Exponent triple (s, alpha, beta) of the monomial t^s x^alpha u^beta."""

    s: int
    alpha: Tuple[int, ...]
    beta: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.s < 0 or any(a < 0 for a in self.alpha) or any(b < 0 for b in self.beta):
            raise ValueError(f"negative exponent in {self}")

    @classmethod
    def from_exponents(cls, exps: Monomial, layout: VarLayout) -> "MultiIndex":
        if len(exps) != layout.size:
            raise DimensionError(f"monomial {exps} does not match layout {layout}")
        return cls(exps[0], tuple(exps[1:1 + layout.n]), tuple(exps[1 + layout.n:]))

    @property
    def layout(self) -> VarLayout:
        return VarLayout(len(self.alpha), len(self.beta))

    @property
    def exponents(self) -> Monomial:
        return (self.s,) + self.alpha + self.beta

    @property
    def degree(self) -> int:
        return self.s + sum(self.alpha) + sum(self.beta)

    def __mul__(self, other: "MultiIndex") -> "MultiIndex":
        if self.layout != other.layout:
            raise DimensionError("multi-indices over different variable counts")
        return MultiIndex.from_exponents(
            monomial_product(self.exponents, other.exponents), self.layout
        )

    def sort_key(self) -> Tuple[int, Tuple[int, ...]]:
        return grlex_key(self.exponents)


Scalar = Union[int, float]


class Polynomial:
    """Immutable sparse polynomial keyed by flat exponent tuples (t, x..., u...).

    Coefficients are 64-bit floats; only exact zeros are pruned.
    """

    __slots__ = ("_terms", "_layout")

    def __init__(self, terms: Mapping[Monomial, float], layout: VarLayout):
        cleaned: Dict[Monomial, float] = {}
        for mono, coef in terms.items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != layout.size:
                raise DimensionError(f"monomial {mono} does not match layout {layout}")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in {mono}")
            coef = float(coef)
            if coef != 0.0:
                cleaned[mono] = coef
        self._terms = cleaned
        self._layout = layout

    # construction helpers

    @classmethod
    def zero(cls, layout: VarLayout) -> "Polynomial":
        return cls({}, layout)

    @classmethod
    def constant(cls, value: float, layout: VarLayout) -> "Polynomial":
        return cls({layout.zero(): value}, layout)

    @classmethod
    def variable(cls, index: int, layout: VarLayout) -> "Polynomial":
        return cls({layout.unit(index): 1.0}, layout)

    @classmethod
    def monomial(cls, mono: Monomial, layout: VarLayout, coef: float = 1.0) -> "Polynomial":
        return cls({mono: coef}, layout)

    @classmethod
    def from_multi_index(cls, index: MultiIndex, coef: float = 1.0) -> "Polynomial":
        return cls({index.exponents: coef}, index.layout)

    # inspection

    @property
    def layout(self) -> VarLayout:
        return self._layout

    @property
    def nvars(self) -> Tuple[int, int, int]:
        return 1, self._layout.n, self._layout.m

    @property
    def terms(self) -> Mapping[Monomial, float]:
        return MappingProxyType(self._terms)

    @property
    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(sum(mono) for mono in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, mono: Monomial) -> float:
        return self._terms.get(tuple(mono), 0.0)

    def monomials(self) -> List[Monomial]:
        return sorted(self._terms, key=grlex_key)

    def items(self) -> Iterator[Tuple[Monomial, float]]:
        for mono in self.monomials():
            yield mono, self._terms[mono]

    def variables(self) -> Tuple[int, ...]:
        """Flat indices of the variables that occur with a positive power."""
        used = set()
        for mono in self._terms:
            used.update(i for i, e in enumerate(mono) if e)
        return tuple(sorted(used))

    def depends_only_on(self, indices: Iterable[int]) -> bool:
        return set(self.variables()) <= set(indices)

    # arithmetic

    def _check(self, other: "Polynomial") -> None:
        if self._layout != other._layout:
            raise DimensionError(
                f"variable counts differ: {self.nvars} vs {other.nvars}"
            )

    def _coerce(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, numbers.Real):
            return Polynomial.constant(float(other), self._layout)
        return NotImplemented

    def __add__(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self._terms)
        for mono, coef in other._terms.items():
            terms[mono] = terms.get(mono, 0.0) + coef
        return Polynomial(terms, self._layout)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({mono: -coef for mono, coef in self._terms.items()}, self._layout)

    def __sub__(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other: Scalar) -> "Polynomial":
        return (-self) + other

    def scale(self, factor: float) -> "Polynomial":
        factor = float(factor)
        return Polynomial(
            {mono: coef * factor for mono, coef in self._terms.items()}, self._layout
        )

    def __mul__(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        if isinstance(other, numbers.Real):
            return self.scale(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        terms: Dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                mono = monomial_product(m1, m2)
                terms[mono] = terms.get(mono, 0.0) + c1 * c2
        return Polynomial(terms, self._layout)

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "Polynomial":
        if not isinstance(exponent, int) or exponent < 0:
            raise ValueError("polynomial powers must be nonnegative integers")
        result = Polynomial.constant(1.0, self._layout)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def partial_derivative(self, index: int) -> "Polynomial":
        """Derivative with respect to the flat variable ``index`` (power rule)."""
        if not 0 <= index < self._layout.size:
            raise DimensionError(f"variable index {index} outside layout {self._layout}")
        terms: Dict[Monomial, float] = {}
        for mono, coef in self._terms.items():
            power = mono[index]
            if power == 0:
                continue
            lowered = mono[:index] + (power - 1,) + mono[index + 1:]
            terms[lowered] = terms.get(lowered, 0.0) + coef * power
        return Polynomial(terms, self._layout)

    # evaluation and substitution

    def evaluate(self, point: Sequence[float]) -> float:
        if len(point) != self._layout.size:
            raise DimensionError(
                f"point of length {len(point)} for layout of size {self._layout.size}"
            )
        total = 0.0
        for mono, coef in self._terms.items():
            value = coef
            for base, power in zip(point, mono):
                if power:
                    value *= base ** power
            total += value
        return total

    def substitute_values(self, values: Mapping[int, float]) -> "Polynomial":
        """Partially evaluate: replace each variable in ``values`` by a number."""
        terms: Dict[Monomial, float] = {}
        for mono, coef in self._terms.items():
            reduced = list(mono)
            for index, value in values.items():
                power = mono[index]
                if power:
                    coef *= value ** power
                    reduced[index] = 0
            key = tuple(reduced)
            terms[key] = terms.get(key, 0.0) + coef
        return Polynomial(terms, self._layout)

    def substitute(self, index: int, replacement: "Polynomial") -> "Polynomial":
        """Replace the variable ``index`` by the polynomial ``replacement``."""
        self._check(replacement)
        powers: Dict[int, Polynomial] = {}
        result = Polynomial.zero(self._layout)
        for mono, coef in self._terms.items():
            power = mono[index]
            rest = Polynomial.monomial(mono[:index] + (0,) + mono[index + 1:], self._layout, coef)
            if power == 0:
                result = result + rest
                continue
            if power not in powers:
                powers[power] = replacement ** power
            result = result + rest * powers[power]
        return result

    def embed(self, target: VarLayout) -> "Polynomial":
        """Same polynomial viewed in a layout with extra trailing states."""
        return Polynomial(
            {self._layout.embed_monomial(mono, target): coef for mono, coef in self._terms.items()},
            target,
        )

    def max_abs_difference(self, other: "Polynomial") -> float:
        self._check(other)
        monos = set(self._terms) | set(other._terms)
        if not monos:
            return 0.0
        return max(abs(self.coefficient(m) - other.coefficient(m)) for m in monos)

    # dunder plumbing

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._layout == other._layout and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self._layout, frozenset(self._terms.items())))

    def to_string(self) -> str:
        if not self._terms:
            return "0"
        names = self._layout.names
        pieces = []
        for mono, coef in self.items():
            factors = [
                name if power == 1 else f"{name}^{power}"
                for name, power in zip(names, mono)
                if power
            ]
            if not factors:
                pieces.append(repr(coef))
            elif coef == 1.0:
                pieces.append("*".join(factors))
            elif coef == -1.0:
                pieces.append("-" + "*".join(factors))
            else:
                pieces.append(repr(coef) + "*" + "*".join(factors))
        return " + ".join(pieces).replace("+ -", "- ")

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string()!r}, n={self._layout.n}, m={self._layout.m})"


# --- sign-group actions -------------------------------------------------------


@dataclass(frozen=True)
class GroupElement:
    """Diagonal +-1 action on x (``dx``) together with its image under tau on u (``du``)."""

    dx: Tuple[int, ...]
    du: Tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "dx", tuple(int(v) for v in self.dx))
        object.__setattr__(self, "du", tuple(int(v) for v in self.du))
        if any(v not in (1, -1) for v in self.dx + self.du):
            raise ValueError(f"group element entries must be +1 or -1: {self}")

    @classmethod
    def identity(cls, n: int, m: int) -> "GroupElement":
        return cls((1,) * n, (1,) * m)

    @property
    def layout(self) -> VarLayout:
        return VarLayout(len(self.dx), len(self.du))

    @property
    def signs(self) -> Tuple[int, ...]:
        """Sign per flat variable; time is never flipped."""
        return (1,) + self.dx + self.du

    @property
    def is_identity(self) -> bool:
        return all(v == 1 for v in self.dx + self.du)

    def compose(self, other: "GroupElement") -> "GroupElement":
        if self.layout != other.layout:
            raise DimensionError("composing group elements of different dimensions")
        return GroupElement(
            tuple(a * b for a, b in zip(self.dx, other.dx)),
            tuple(a * b for a, b in zip(self.du, other.du)),
        )

    __mul__ = compose

    def inverse(self) -> "GroupElement":
        return self

    def sign_of(self, mono: Monomial) -> int:
        sign = 1
        for s, power in zip(self.signs, mono):
            if s < 0 and power % 2:
                sign = -sign
        return sign

    def act_on_state(self, x: Sequence[float]) -> Tuple[float, ...]:
        return tuple(d * v for d, v in zip(self.dx, x))

    def extend_states(self, extra: int) -> "GroupElement":
        return GroupElement(self.dx + (1,) * extra, self.du)


@dataclass(frozen=True, order=True)
class ParityClass:
    """Parity bit of a monomial under each generator of a sign group."""

    chi: Tuple[int, ...]

    def __xor__(self, other: "ParityClass") -> "ParityClass":
        if len(self.chi) != len(other.chi):
            raise DimensionError("parity classes of different groups")
        return ParityClass(tuple(a ^ b for a, b in zip(self.chi, other.chi)))

    @property
    def is_invariant(self) -> bool:
        return not any(self.chi)

    def __str__(self) -> str:
        return "[" + ",".join(str(b) for b in self.chi) + "]"


class SignGroup:
    """Finite group generated by diagonal +-1 actions on (x, u)."""

    def __init__(self, generators: Sequence[GroupElement], n: Optional[int] = None,
                 m: Optional[int] = None):
        generators = tuple(generators)
        if generators:
            layout = generators[0].layout
            if any(g.layout != layout for g in generators):
                raise DimensionError("generators act on different dimensions")
            if (n is not None and n != layout.n) or (m is not None and m != layout.m):
                raise DimensionError("generators do not match the declared dimensions")
        else:
            if n is None or m is None:
                raise ValueError("a group without generators needs explicit n and m")
            layout = VarLayout(n, m)
        self._layout = layout
        self._generators = generators
        self._elements = self._close(generators, layout)

    @staticmethod
    def _close(generators: Tuple[GroupElement, ...], layout: VarLayout) -> Tuple[GroupElement, ...]:
        identity = GroupElement.identity(layout.n, layout.m)
        seen = {identity: None}
        frontier = [identity]
        while frontier:
            nxt = []
            for element in frontier:
                for gen in generators:
                    product = element.compose(gen)
                    if product not in seen:
                        seen[product] = None
                        nxt.append(product)
            frontier = nxt
        return tuple(seen)

    @classmethod
    def trivial(cls, n: int, m: int) -> "SignGroup":
        return cls((), n, m)

    @property
    def layout(self) -> VarLayout:
        return self._layout

    @property
    def generators(self) -> Tuple[GroupElement, ...]:
        return self._generators

    @property
    def elements(self) -> Tuple[GroupElement, ...]:
        return self._elements

    @property
    def order(self) -> int:
        return len(self._elements)

    @property
    def is_trivial(self) -> bool:
        return self.order == 1

    def extend_states(self, extra: int) -> "SignGroup":
        """Same group acting trivially on ``extra`` appended states."""
        return SignGroup(
            tuple(g.extend_states(extra) for g in self._generators),
            self._layout.n + extra,
            self._layout.m,
        )

    def flipped_indices(self) -> Tuple[int, ...]:
        """Flat indices flipped by at least one generator."""
        return tuple(
            i for i in range(self._layout.size)
            if any(g.signs[i] < 0 for g in self._generators)
        )

    def __len__(self) -> int:
        return self.order

    def __iter__(self) -> Iterator[GroupElement]:
        return iter(self._elements)

    def __repr__(self) -> str:
        gens = ", ".join(f"(dx={g.dx}, du={g.du})" for g in self._generators)
        return f"SignGroup([{gens}], order={self.order})"


def _check_group_layout(layout: VarLayout, group_layout: VarLayout) -> None:
    if layout != group_layout:
        raise DimensionError(f"polynomial layout {layout} does not match group layout {group_layout}")


def apply_group(poly: Polynomial, g: GroupElement) -> Polynomial:
    """P^g: evaluate P at (t, g(x), tau(g)(u)); monomials keep their place, signs flip."""
    _check_group_layout(poly.layout, g.layout)
    return Polynomial(
        {mono: coef * g.sign_of(mono) for mono, coef in poly.terms.items()}, poly.layout
    )


def reynolds(poly: Polynomial, group: SignGroup) -> Polynomial:
    """Group average (1/|G|) sum_g P^g, the projection onto G-invariant polynomials."""
    _check_group_layout(poly.layout, group.layout)
    terms: Dict[Monomial, float] = {}
    for mono, coef in poly.terms.items():
        total = sum(g.sign_of(mono) for g in group.elements)
        if total:
            # |G| is a power of two, so the ratio is exact
            terms[mono] = coef * (total / group.order)
    return Polynomial(terms, poly.layout)


def is_invariant(poly: Polynomial, group: SignGroup, tol: float = 0.0) -> bool:
    return all(apply_group(poly, g).max_abs_difference(poly) <= tol for g in group.generators)


def parity_class(mono: Union[Monomial, MultiIndex], group: SignGroup) -> ParityClass:
    exps = mono.exponents if isinstance(mono, MultiIndex) else tuple(mono)
    if len(exps) != group.layout.size:
        raise DimensionError(f"monomial {exps} does not match group layout {group.layout}")
    bits = []
    for gen in group.generators:
        parity = 0
        for s, power in zip(gen.signs, exps):
            if s < 0:
                parity ^= power & 1
        bits.append(parity)
    return ParityClass(tuple(bits))


def monomials_up_to(k: int, variables: Sequence[int], layout: VarLayout) -> List[Monomial]:
    """All monomials of total degree <= k in the selected flat variables, grlex order."""
    if k < 0:
        raise ValueError("degree must be nonnegative")
    result = []
    for degree in range(k + 1):
        for combo in itertools.combinations_with_replacement(variables, degree):
            exps = [0] * layout.size
            for index in combo:
                exps[index] += 1
            result.append(tuple(exps))
    result.sort(key=grlex_key)
    return result


def basis_blocks(k: int, variables: Sequence[int],
                 group: SignGroup) -> Dict[ParityClass, List[Monomial]]:
    """Partition the degree-<=k monomial basis in ``variables`` by parity class.

    Classes are ordered with the invariant class first; each list is grlex ordered.
    """
    blocks: Dict[ParityClass, List[Monomial]] = {}
    for mono in monomials_up_to(k, variables, group.layout):
        blocks.setdefault(parity_class(mono, group), []).append(mono)
    return {cls: blocks[cls] for cls in sorted(blocks)}

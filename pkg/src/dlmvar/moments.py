"""Exact moment calculus for squares of linear forms in the DLM innovations.

Innovations are keyed ``(j, t)`` with component ``j`` in ``{1, 2, 3}``
(observation, level, trend) and integer time ``t``.  Under the second-order
exchangeable decomposition ``Y_jt**2 = V_j + S_jt`` every fourth moment of the
innovations reduces to the atoms

* ``VarV(i)``   -- Var(V_i)
* ``VarS(i)``   -- Var(S_it), time constant
* ``EVEV(i,j)`` -- E(V_i) E(V_j), ``i <= j``
* ``EV(i)``     -- E(V_i), only produced by :func:`quadratic_mean`

All arithmetic is carried out on :class:`fractions.Fraction`.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Iterable, Mapping, Union

Rational = Union[int, Fraction]
Key = tuple[int, int]
Atom = tuple

COMPONENTS = (1, 2, 3)


def VarV(i: int) -> Atom:
    return ("VarV", i)


def VarS(i: int) -> Atom:
    return ("VarS", i)


def EVEV(i: int, j: int) -> Atom:
    i, j = sorted((i, j))
    return ("EVEV", i, j)


def EV(i: int) -> Atom:
    return ("EV", i)


_KIND_ORDER = {"VarS": 0, "VarV": 1, "EVEV": 2, "EV": 3}


def _atom_sort_key(atom: Atom):
    return (_KIND_ORDER[atom[0]],) + tuple(-x for x in atom[1:])


def _format_atom(atom: Atom) -> str:
    kind = atom[0]
    if kind == "VarV":
        return f"Var(V{atom[1]})"
    if kind == "VarS":
        return f"Var(S{atom[1]})"
    if kind == "EV":
        return f"E(V{atom[1]})"
    i, j = atom[1], atom[2]
    if i == j:
        return f"E(V{i})^2"
    return f"E(V{j})E(V{i})"


@dataclass(frozen=True)
class LinearForm:
    """A finite linear combination ``sum c * Y_jt`` with rational coefficients."""

    terms: tuple[tuple[Key, Fraction], ...]

    def __init__(self, terms: Mapping[Key, Rational] | Iterable[tuple[Key, Rational]] = ()):
        acc: dict[Key, Fraction] = defaultdict(Fraction)
        items = terms.items() if isinstance(terms, Mapping) else terms
        for (j, t), c in items:
            if j not in COMPONENTS:
                raise ValueError(f"innovation component must be 1, 2 or 3, got {j}")
            acc[(int(j), int(t))] += Fraction(c)
        canon = tuple(sorted((k, c) for k, c in acc.items() if c != 0))
        object.__setattr__(self, "terms", canon)

    def as_dict(self) -> dict[Key, Fraction]:
        return dict(self.terms)

    def shift(self, offset: int) -> "LinearForm":
        return LinearForm({(j, t + offset): c for (j, t), c in self.terms})

    def scale(self, c: Rational) -> "LinearForm":
        return LinearForm({k: v * Fraction(c) for k, v in self.terms})

    def times(self) -> set[int]:
        return {t for (_, t), _ in self.terms}

    def __add__(self, other: "LinearForm") -> "LinearForm":
        return LinearForm(list(self.terms) + list(other.terms))

    def __len__(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class MomentPolynomial:
    """Canonical rational linear combination of moment atoms.

    Equality is structural: two polynomials are equal iff they carry the same
    atoms with the same exact coefficients.
    """

    coeffs: tuple[tuple[Atom, Fraction], ...]

    def __init__(self, coeffs: Mapping[Atom, Rational] | Iterable[tuple[Atom, Rational]] = ()):
        acc: dict[Atom, Fraction] = defaultdict(Fraction)
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        for atom, c in items:
            if atom[0] not in _KIND_ORDER:
                raise ValueError(f"unknown moment atom {atom!r}")
            acc[atom] += Fraction(c)
        canon = tuple(
            sorted(((a, c) for a, c in acc.items() if c != 0), key=lambda ac: _atom_sort_key(ac[0]))
        )
        object.__setattr__(self, "coeffs", canon)

    def as_dict(self) -> dict[Atom, Fraction]:
        return dict(self.coeffs)

    def __getitem__(self, atom: Atom) -> Fraction:
        return self.as_dict().get(atom, Fraction(0))

    def __add__(self, other: "MomentPolynomial") -> "MomentPolynomial":
        return MomentPolynomial(list(self.coeffs) + list(other.coeffs))

    def __sub__(self, other: "MomentPolynomial") -> "MomentPolynomial":
        return self + other * -1

    def __mul__(self, c: Rational) -> "MomentPolynomial":
        c = Fraction(c)
        return MomentPolynomial([(a, v * c) for a, v in self.coeffs])

    __rmul__ = __mul__

    def atoms(self) -> set[Atom]:
        return {a for a, _ in self.coeffs}

    def is_zero(self) -> bool:
        return not self.coeffs

    def evaluate(self, values: Mapping[Atom, Rational]) -> Fraction:
        """Exact value given rational values for every atom present."""
        total = Fraction(0)
        for atom, c in self.coeffs:
            try:
                total += c * Fraction(values[atom])
            except KeyError:
                raise KeyError(f"no value supplied for atom {_format_atom(atom)}") from None
        return total

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for atom, c in self.coeffs:
            mag = abs(c)
            coef = "" if mag == 1 else str(mag)
            parts.append(("-" if c < 0 else "+", f"{coef}{_format_atom(atom)}"))
        head_sign, head = parts[0]
        text = ("-" if head_sign == "-" else "") + head
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text


def atom_values(mean_V, var_V, var_S) -> dict[Atom, Fraction]:
    """Exact atom values from numeric prior moments (floats converted exactly)."""
    ev = [Fraction(x) for x in mean_V]
    vals: dict[Atom, Fraction] = {}
    for i in COMPONENTS:
        vals[VarV(i)] = Fraction(var_V[i - 1])
        vals[VarS(i)] = Fraction(var_S[i - 1])
        vals[EV(i)] = ev[i - 1]
    for i, j in combinations_with_replacement(COMPONENTS, 2):
        vals[EVEV(i, j)] = ev[i - 1] * ev[j - 1]
    return vals


def differenced_form(n: int, t: int) -> LinearForm:
    """Innovation form of the n-step difference of the first differences at time t.

    ``X'_t - X'_{t-n}`` for ``n >= 1``; ``n = 1`` is the second difference.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    terms: list[tuple[Key, int]] = [((3, t - k), 1) for k in range(n)]
    terms += [((2, t), 1), ((2, t - n), -1)]
    terms += [((1, t), 1), ((1, t - 1), -1), ((1, t - n), -1), ((1, t - n - 1), 1)]
    return LinearForm(terms)


# -- moment rules ----------------------------------------------------------


def _quartic_expectation(keys: tuple[Key, Key, Key, Key]) -> dict[Atom, int]:
    """E[Y_p Y_q Y_r Y_s] for innovation keys; zero unless the keys pair up."""
    counts = Counter(keys)
    if any(m % 2 for m in counts.values()):
        return {}
    if len(counts) == 1:
        (j, _), = counts
        return {VarV(j): 1, VarS(j): 1, EVEV(j, j): 1}
    (i, _), (j, _) = counts
    if i == j:
        return {VarV(j): 1, EVEV(j, j): 1}
    return {EVEV(i, j): 1}


def _square_monomials(a: LinearForm) -> dict[tuple[Key, Key], Fraction]:
    """Expand A**2 into unordered monomials Y_p Y_q with p <= q."""
    items = a.terms
    out: dict[tuple[Key, Key], Fraction] = {}
    for idx, (p, cp) in enumerate(items):
        out[(p, p)] = cp * cp
        for q, cq in items[idx + 1:]:
            out[(p, q)] = 2 * cp * cq
    return out


def _square_mean_by_component(a: LinearForm) -> dict[int, Fraction]:
    acc: dict[int, Fraction] = defaultdict(Fraction)
    for (j, _), c in a.terms:
        acc[j] += c * c
    return acc


def quadratic_mean(a: LinearForm) -> MomentPolynomial:
    """E[A**2] over the first-moment atoms ``EV(i)``."""
    return MomentPolynomial({EV(j): c for j, c in _square_mean_by_component(a).items()})


def quadratic_covariance(a: LinearForm, b: LinearForm) -> MomentPolynomial:
    """Cov(A**2, B**2) as an exact :class:`MomentPolynomial`.

    Both squares are expanded into monomials ``Y_p Y_q``; every pair of
    monomials contributes its fourth-order expectation under the pairing
    rules, and the product of the two means is subtracted.
    """
    acc: dict[Atom, Fraction] = defaultdict(Fraction)
    mono_a = _square_monomials(a)
    mono_b = _square_monomials(b)
    for (p, q), ca in mono_a.items():
        for (r, s), cb in mono_b.items():
            for atom, m in _quartic_expectation((p, q, r, s)).items():
                acc[atom] += ca * cb * m
    ma = _square_mean_by_component(a)
    mb = _square_mean_by_component(b)
    for i, ci in ma.items():
        for j, cj in mb.items():
            acc[EVEV(i, j)] -= ci * cj
    return MomentPolynomial(acc)

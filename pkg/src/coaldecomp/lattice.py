"""
Finite-poset combinatorics and fast transforms over the power set of inputs.

Coalitions A of D = {1, ..., d} are encoded as integer bit masks: input ``i``
(1-based) lives on bit ``i - 1``. Every dense table in this package is indexed
by that mask, so ``table[0b101]`` is the entry of coalition {1, 3}.

Note on the zeta function: the identity element of the incidence algebra
(1 iff x == y) is exposed as :func:`delta`. The function whose convolution
inverse is the Möbius function is the standard zeta (1 iff x <= y), exposed
as :func:`zeta_standard`. The two are kept under distinct names on purpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Any, Callable, Hashable, Iterator, Sequence

import numpy as np

MAX_DIMENSION = 24


# ---------------------------------------------------------------------------
# Subset masks
# ---------------------------------------------------------------------------

def check_mask(mask: int, d: int) -> int:
    if not 1 <= d <= MAX_DIMENSION:
        raise ValueError(f"dimension d={d} outside [1, {MAX_DIMENSION}]")
    if not 0 <= mask < (1 << d):
        raise ValueError(f"mask {mask} is not a subset of a {d}-element set")
    return mask


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def full_mask(d: int) -> int:
    return (1 << d) - 1


def is_subset(b: int, a: int) -> bool:
    """True when coalition ``b`` is contained in coalition ``a``."""
    return b & ~a == 0


def mask_from_indices(indices: Sequence[int]) -> int:
    """Build a mask from 1-based input indices."""
    mask = 0
    for i in indices:
        if i < 1:
            raise ValueError(f"input indices are 1-based, got {i}")
        mask |= 1 << (i - 1)
    return mask


def indices_from_mask(mask: int) -> list[int]:
    """Ascending 1-based input indices of a mask."""
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def bit_positions(mask: int) -> list[int]:
    """Ascending 0-based column positions of a mask."""
    return [i - 1 for i in indices_from_mask(mask)]


def iter_subsets(mask: int) -> Iterator[int]:
    """All submasks of ``mask``, including 0 and ``mask`` itself."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def format_subset(mask: int) -> str:
    return ",".join(str(i) for i in indices_from_mask(mask))


# ---------------------------------------------------------------------------
# General finite posets and their incidence algebra
# ---------------------------------------------------------------------------

_AXIOM_CHECK_LIMIT = 12


class FinitePoset:
    """
    A finite partially ordered set given by its elements and an order predicate.

    Parameters
    ----------
    elements
        Hashable node identifiers.
    leq
        ``leq(x, y)`` is True iff x <= y.

    The order axioms are verified on construction when there are at most 12
    elements; larger posets are trusted.
    """

    def __init__(self, elements: Sequence[Hashable], leq: Callable[[Any, Any], bool]):
        elements = list(elements)
        if not elements:
            raise ValueError("a poset needs at least one element")
        if len(set(elements)) != len(elements):
            raise ValueError("poset elements must be distinct")
        self.elements = elements
        self.leq = leq
        self._mu: dict[tuple[Hashable, Hashable], int] = {}
        if len(elements) <= _AXIOM_CHECK_LIMIT:
            self._check_axioms()

    def _check_axioms(self) -> None:
        els = self.elements
        for x in els:
            if not self.leq(x, x):
                raise ValueError(f"order is not reflexive at {x!r}")
        for x, y in product(els, repeat=2):
            if x != y and self.leq(x, y) and self.leq(y, x):
                raise ValueError(f"order is not antisymmetric on {x!r}, {y!r}")
        for x, y, z in product(els, repeat=3):
            if self.leq(x, y) and self.leq(y, z) and not self.leq(x, z):
                raise ValueError(f"order is not transitive on {x!r} <= {y!r} <= {z!r}")

    def __contains__(self, x) -> bool:
        return x in self.elements

    def segment(self, x, z) -> list:
        """The closed interval {y : x <= y <= z}."""
        return [y for y in self.elements if self.leq(x, y) and self.leq(y, z)]

    def mobius(self, x, y) -> int:
        """Möbius function by the defining recursion, memoized per poset."""
        if x not in self or y not in self:
            raise KeyError(f"({x!r}, {y!r}) not both in the poset")
        if not self.leq(x, y):
            raise ValueError(f"mobius({x!r}, {y!r}) undefined: {x!r} is not <= {y!r}")
        return self._mobius(x, y)

    def _mobius(self, x, y) -> int:
        key = (x, y)
        cached = self._mu.get(key)
        if cached is not None:
            return cached
        if x == y:
            value = 1
        else:
            value = -sum(self._mobius(x, z) for z in self.segment(x, y) if z != y)
        self._mu[key] = value
        return value


def boolean_lattice(d: int) -> FinitePoset:
    """The power set of a d-element set ordered by inclusion, on masks."""
    check_mask(0, d)
    return FinitePoset(range(1 << d), is_subset)


def chain(n: int) -> FinitePoset:
    """The total order 0 < 1 < ... < n-1."""
    return FinitePoset(range(n), lambda x, y: x <= y)


def mobius_recursive(poset: FinitePoset, x, y) -> int:
    return poset.mobius(x, y)


def mobius_boolean(b: int, a: int) -> int:
    """Closed-form Möbius function of the Boolean lattice, (-1)^|A \\ B|."""
    if b < 0 or a < 0:
        raise ValueError("masks are nonnegative")
    if not is_subset(b, a):
        raise ValueError(f"{{{format_subset(b)}}} is not a subset of {{{format_subset(a)}}}")
    return -1 if (popcount(a) - popcount(b)) & 1 else 1


@dataclass
class IncidenceFunction:
    """
    Element of the incidence algebra of a finite poset.

    ``values`` holds f(x, y) for the pairs with x <= y; absent pairs read as 0.
    """

    poset: FinitePoset
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for x, y in self.values:
            if not self.poset.leq(x, y):
                raise ValueError(f"incidence value given at ({x!r}, {y!r}) with x not <= y")

    def __call__(self, x, y):
        return self.values.get((x, y), 0)

    def pairs(self) -> Iterator[tuple]:
        for x, y in product(self.poset.elements, repeat=2):
            if self.poset.leq(x, y):
                yield x, y

    def is_delta(self) -> bool:
        return all(self(x, y) == (1 if x == y else 0) for x, y in self.pairs())


def delta(poset: FinitePoset) -> IncidenceFunction:
    """Convolution identity: 1 on the diagonal, 0 elsewhere."""
    return IncidenceFunction(poset, {(x, x): 1 for x in poset.elements})


def zeta_standard(poset: FinitePoset) -> IncidenceFunction:
    """Standard zeta function: 1 whenever x <= y."""
    f = IncidenceFunction(poset)
    f.values = {pair: 1 for pair in f.pairs()}
    return f


def mobius_function(poset: FinitePoset) -> IncidenceFunction:
    f = IncidenceFunction(poset)
    f.values = {(x, y): poset.mobius(x, y) for x, y in f.pairs()}
    return f


def convolve(f: IncidenceFunction, g: IncidenceFunction) -> IncidenceFunction:
    """(f * g)(x, z) = sum over x <= y <= z of f(x, y) g(y, z)."""
    if f.poset is not g.poset:
        raise ValueError("cannot convolve incidence functions over different posets")
    poset = f.poset
    out = IncidenceFunction(poset)
    values = {}
    for x, z in out.pairs():
        values[(x, z)] = sum(f(x, y) * g(y, z) for y in poset.segment(x, z))
    out.values = values
    return out


# ---------------------------------------------------------------------------
# Dense set-function tables and fast transforms
# ---------------------------------------------------------------------------

class SetFunctionTable:
    """
    Dense map from every coalition of {1, ..., d} to a ring value.

    ``values`` has shape ``(2**d, *value_shape)``: scalars give a 1-D array,
    k x k Hadamard matrices give shape ``(2**d, k, k)``. Integer and object
    dtypes are supported for exact arithmetic.
    """

    def __init__(self, d: int, values):
        check_mask(0, d)
        values = np.asarray(values)
        if values.ndim == 0 or values.shape[0] != 1 << d:
            raise ValueError(f"expected {1 << d} entries for d={d}, got shape {values.shape}")
        self.d = d
        self.values = values

    @classmethod
    def from_ring_values(cls, d: int, entries: Sequence) -> "SetFunctionTable":
        from .rings import as_array, check_same_domain

        entries = list(entries)
        check_same_domain(entries)
        return cls(d, np.stack([as_array(e) for e in entries]))

    @classmethod
    def zeros(cls, d: int, value_shape: tuple = (), dtype=float) -> "SetFunctionTable":
        return cls(d, np.zeros((1 << d,) + tuple(value_shape), dtype=dtype))

    @property
    def value_shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def full(self) -> int:
        return full_mask(self.d)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, mask: int):
        return self.values[mask]

    def ring_value(self, mask: int):
        from .rings import from_array

        return from_array(self.values[mask])

    def copy(self) -> "SetFunctionTable":
        return SetFunctionTable(self.d, self.values.copy())

    def __repr__(self) -> str:
        return f"SetFunctionTable(d={self.d}, value_shape={self.value_shape}, dtype={self.values.dtype})"


def _subset_sum_inplace(t: np.ndarray, d: int, sign: int) -> None:
    # for each coordinate i: t[A] += sign * t[A \ {i}] over all A containing i
    tail = t.shape[1:]
    for i in range(d):
        view = t.reshape((1 << (d - 1 - i), 2, 1 << i) + tail)
        if sign > 0:
            view[:, 1] += view[:, 0]
        else:
            view[:, 1] -= view[:, 0]


def mobius_transform(phi: SetFunctionTable) -> SetFunctionTable:
    """
    Möbius inverse of a set function on the power set.

    Returns psi with psi[A] = sum over B subset of A of (-1)^|A \\ B| phi[B],
    computed in O(d 2^d) ring operations.
    """
    t = phi.values.copy()
    _subset_sum_inplace(t, phi.d, -1)
    return SetFunctionTable(phi.d, t)


def zeta_transform(psi: SetFunctionTable) -> SetFunctionTable:
    """Subset sums: phi[A] = sum over B subset of A of psi[B], in O(d 2^d)."""
    t = psi.values.copy()
    _subset_sum_inplace(t, psi.d, +1)
    return SetFunctionTable(psi.d, t)

"""Finite Clifford probability space on a uniform time grid.

One self-adjoint anticommuting generator ``e_g`` (g = 1..n) is attached to each
grid cell ``[t_{g-1}, t_g]``; the normalized noise increment over that cell is
``sqrt(dt) * e_g``.  Elements are stored as dense coefficient vectors over the
2^n blade basis, with blades encoded as bitmasks (bit g-1 set <=> generator g
present).  The trace state is the coefficient of the empty blade, under which
the blades are orthonormal, so the L2 geometry of coefficient space coincides
with the noncommutative L2 geometry of the algebra.

Conventions used throughout:

- blade product: ``e_S e_T = sign(S, T) e_{S xor T}`` with
  ``sign(S, T) = (-1)**#{(i, j): i in S, j in T, i > j}`` and ``e_g**2 = I``;
- star involution: conjugate coefficients, blades picking up the reversal
  sign ``(-1)**(|S|(|S|-1)/2)``;
- parity: blades scale by ``(-1)**|S|``;
- inner product ``<a, b> = m(star(a) b)``, conjugate-linear in the first slot;
- an element is adapted at step k iff every blade mask is ``< 2**k``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import AlgebraMismatchError, CapacityError, SupportError

DEFAULT_GENERATOR_CAP = 12

__all__ = [
    "CliffordAlgebra",
    "CliffordElement",
    "AdaptedProcess",
    "SuperOperator",
    "make_algebra",
    "multiply",
    "multiply_batch",
    "star",
    "state_m",
    "inner",
    "norm2",
    "parity",
    "conditional_expectation",
    "brownian_increment",
    "martingale_coefficient",
]


class CliffordAlgebra:
    """Immutable algebra context: n generators over the grid [t0, T].

    Multiplication tables are built lazily and cached; all cached arrays are
    read-only, so a single instance can be shared freely.
    """

    def __init__(self, n_generators: int, t0: float, T: float,
                 cap: int = DEFAULT_GENERATOR_CAP):
        if n_generators < 1:
            raise ValueError(f"need at least one generator, got {n_generators}")
        if n_generators > cap:
            raise CapacityError(
                f"n_generators={n_generators} exceeds cap {cap} "
                f"(coefficient space would have 2**{n_generators} dimensions)")
        if not T > t0:
            raise ValueError(f"need T > t0, got t0={t0}, T={T}")
        self.n = int(n_generators)
        self.t0 = float(t0)
        self.T = float(T)
        self.dt = (self.T - self.t0) / self.n
        self.dim = 1 << self.n
        self._masks = np.arange(self.dim, dtype=np.int64)
        grades = np.bitwise_count(self._masks).astype(np.int64)
        self.grades = grades
        self.parity_signs = np.where(grades & 1, -1.0, 1.0)
        self.reversal_signs = np.where((grades * (grades - 1) // 2) & 1, -1.0, 1.0)
        self._sign_table = None
        self._gen_sign_cache: dict[tuple[str, int], np.ndarray] = {}
        for arr in (self._masks, self.grades, self.parity_signs, self.reversal_signs):
            arr.flags.writeable = False

    def time(self, k: int) -> float:
        """Grid time t_k = t0 + k*dt."""
        return self.t0 + k * self.dt

    def adapted_mask(self, k: int) -> np.ndarray:
        """Boolean mask selecting blades supported in generators 1..k."""
        if not 0 <= k <= self.n:
            raise ValueError(f"step index {k} outside 0..{self.n}")
        return self._masks < (1 << k)

    @property
    def sign_table(self) -> np.ndarray:
        """Full (dim, dim) product sign table, sign_table[S, T] = sign(S, T)."""
        if self._sign_table is None:
            bits = ((self._masks[:, None] >> np.arange(self.n)) & 1).astype(np.int16)
            # above[S, b] = #{i in S : i > b+1-th generator} = popcount(S >> (b+1))
            above = np.bitwise_count(
                self._masks[:, None] >> (np.arange(self.n) + 1)).astype(np.int16)
            swaps = above @ bits.T
            table = np.where(swaps & 1, np.int8(-1), np.int8(1))
            table.flags.writeable = False
            self._sign_table = table
        return self._sign_table

    def _gen_signs(self, side: str, g: int) -> np.ndarray:
        """Sign vector for one-generator products.

        ``right``: a e_g picks up (-1)**#{i in S: i > g};
        ``left``:  e_g a picks up (-1)**#{i in S: i < g}.
        """
        key = (side, g)
        cached = self._gen_sign_cache.get(key)
        if cached is not None:
            return cached
        if side == "right":
            count = np.bitwise_count(self._masks >> g)
        else:
            count = np.bitwise_count(self._masks & ((1 << (g - 1)) - 1))
        signs = np.where(count & 1, -1.0, 1.0)
        signs.flags.writeable = False
        self._gen_sign_cache[key] = signs
        return signs

    def __repr__(self):
        return f"CliffordAlgebra(n={self.n}, t0={self.t0}, T={self.T})"


def make_algebra(n: int, t0: float, T: float,
                 cap: int = DEFAULT_GENERATOR_CAP) -> CliffordAlgebra:
    """Build the n-step algebra context on [t0, T]."""
    return CliffordAlgebra(n, t0, T, cap=cap)


@dataclass(frozen=True)
class CliffordElement:
    """Dense blade-coefficient vector over an algebra's 2^n basis."""

    algebra: CliffordAlgebra
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != (self.algebra.dim,):
            raise ValueError(f"coefficient vector must have shape ({self.algebra.dim},)")
        object.__setattr__(self, "coeffs", c)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(algebra: CliffordAlgebra) -> "CliffordElement":
        return CliffordElement(algebra, np.zeros(algebra.dim, dtype=np.complex128))

    @staticmethod
    def unit(algebra: CliffordAlgebra) -> "CliffordElement":
        c = np.zeros(algebra.dim, dtype=np.complex128)
        c[0] = 1.0
        return CliffordElement(algebra, c)

    @staticmethod
    def blade(algebra: CliffordAlgebra, mask: int, coeff: complex = 1.0) -> "CliffordElement":
        if not 0 <= mask < algebra.dim:
            raise ValueError(f"blade mask {mask} outside 0..{algebra.dim - 1}")
        c = np.zeros(algebra.dim, dtype=np.complex128)
        c[mask] = coeff
        return CliffordElement(algebra, c)

    @staticmethod
    def generator(algebra: CliffordAlgebra, g: int) -> "CliffordElement":
        if not 1 <= g <= algebra.n:
            raise ValueError(f"generator index {g} outside 1..{algebra.n}")
        return CliffordElement.blade(algebra, 1 << (g - 1))

    @staticmethod
    def from_terms(algebra: CliffordAlgebra,
                   terms: Mapping[int, complex] | Iterable[tuple[int, complex]]) -> "CliffordElement":
        """Build from a sparse {mask: coefficient} map; omitted blades are zero."""
        c = np.zeros(algebra.dim, dtype=np.complex128)
        items = terms.items() if isinstance(terms, Mapping) else terms
        for mask, coeff in items:
            if not 0 <= int(mask) < algebra.dim:
                raise ValueError(f"blade mask {mask} outside 0..{algebra.dim - 1}")
            c[int(mask)] += coeff
        return CliffordElement(algebra, c)

    # -- linear structure --------------------------------------------------

    def _check_same(self, other: "CliffordElement"):
        if self.algebra is not other.algebra:
            raise AlgebraMismatchError("operands belong to different algebra contexts")

    def __add__(self, other):
        self._check_same(other)
        return CliffordElement(self.algebra, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same(other)
        return CliffordElement(self.algebra, self.coeffs - other.coeffs)

    def __neg__(self):
        return CliffordElement(self.algebra, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, CliffordElement):
            return multiply(self, other)
        return CliffordElement(self.algebra, self.coeffs * complex(other))

    def __rmul__(self, scalar):
        return CliffordElement(self.algebra, self.coeffs * complex(scalar))

    def __eq__(self, other):
        if not isinstance(other, CliffordElement):
            return NotImplemented
        return self.algebra is other.algebra and np.array_equal(self.coeffs, other.coeffs)

    # -- queries -----------------------------------------------------------

    def support_bound(self) -> int:
        """Smallest k such that self is adapted at step k."""
        nz = np.nonzero(self.coeffs)[0]
        if nz.size == 0:
            return 0
        return int(nz.max()).bit_length()

    def is_adapted(self, k: int, tol: float = 0.0) -> bool:
        outside = self.coeffs[~self.algebra.adapted_mask(k)]
        if outside.size == 0:
            return True
        return float(np.max(np.abs(outside))) <= tol

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __repr__(self):
        nz = np.nonzero(self.coeffs)[0][:6]
        body = ", ".join(f"{int(m):#06b}: {self.coeffs[m]:.4g}" for m in nz)
        return f"CliffordElement({body}{'...' if np.count_nonzero(self.coeffs) > 6 else ''})"


# -- algebra operations ----------------------------------------------------

def multiply(a: CliffordElement, b: CliffordElement) -> CliffordElement:
    """Clifford product a b.

    Iterates over the nonzero blades of the sparser factor; each blade S of
    ``a`` contributes ``a_S * sign(S, .) * b`` scattered to masks ``S ^ .``,
    and the scatter targets are distinct for fixed S, so no accumulation
    conflicts arise.
    """
    a._check_same(b)
    alg = a.algebra
    table = alg.sign_table
    out = np.zeros(alg.dim, dtype=np.complex128)
    av, bv = a.coeffs, b.coeffs
    if np.count_nonzero(bv) < np.count_nonzero(av):
        # e_S e_T = sign(S,T) e_{S^T}; fold over T instead when b is sparser.
        for t in np.nonzero(bv)[0]:
            out[alg._masks ^ t] += (av * table[:, t]) * bv[t]
        return CliffordElement(alg, out)
    for s in np.nonzero(av)[0]:
        out[s ^ alg._masks] += av[s] * (table[s] * bv)
    return CliffordElement(alg, out)


def multiply_batch(alg: CliffordAlgebra, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise Clifford product of coefficient batches, shape (batch, dim).

    Used by the bulk law-verification suites; semantically identical to
    ``multiply`` row by row.  Iterates over the factor with fewer live blade
    columns, so batches sharing a sparse support multiply cheaply.
    """
    A = np.asarray(A, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    if A.shape != B.shape or A.ndim != 2 or A.shape[1] != alg.dim:
        raise ValueError("batches must share shape (batch, dim)")
    table = alg.sign_table
    out = np.zeros_like(A)
    live_a = np.nonzero(np.any(A, axis=0))[0]
    live_b = np.nonzero(np.any(B, axis=0))[0]
    if live_b.size < live_a.size:
        for t in live_b:
            out[:, alg._masks ^ t] += (A * table[:, t]) * B[:, t][:, None]
        return out
    for s in live_a:
        out[:, s ^ alg._masks] += A[:, s][:, None] * (table[s] * B)
    return out


def star(a: CliffordElement) -> CliffordElement:
    """Adjoint involution: conjugate-linear, fixes generators, reverses blades."""
    return CliffordElement(a.algebra, np.conj(a.coeffs) * a.algebra.reversal_signs)


def state_m(a: CliffordElement) -> complex:
    """Trace state: coefficient of the empty blade."""
    return complex(a.coeffs[0])


def inner(a: CliffordElement, b: CliffordElement) -> complex:
    """L2 inner product m(star(a) b); blades are orthonormal."""
    a._check_same(b)
    return complex(np.vdot(a.coeffs, b.coeffs))


def norm2(a: CliffordElement) -> float:
    """L2 norm induced by the trace state."""
    return a.norm()


def parity(a: CliffordElement) -> CliffordElement:
    """Grading automorphism: blades scale by (-1)**grade."""
    return CliffordElement(a.algebra, a.coeffs * a.algebra.parity_signs)


def conditional_expectation(a: CliffordElement, k: int) -> CliffordElement:
    """Trace-preserving projection onto the subalgebra of the first k generators."""
    keep = a.algebra.adapted_mask(k)
    return CliffordElement(a.algebra, np.where(keep, a.coeffs, 0.0))


def brownian_increment(alg: CliffordAlgebra, k: int) -> CliffordElement:
    """Noise increment over the k-th cell: sqrt(dt) e_k, so its square is dt*I."""
    if not 1 <= k <= alg.n:
        raise ValueError(f"increment index {k} outside 1..{alg.n}")
    return CliffordElement.blade(alg, 1 << (k - 1), np.sqrt(alg.dt))


def mul_generator_right(a: CliffordElement, g: int) -> CliffordElement:
    """Fast path for a e_g."""
    alg = a.algebra
    if not 1 <= g <= alg.n:
        raise ValueError(f"generator index {g} outside 1..{alg.n}")
    out = np.empty(alg.dim, dtype=np.complex128)
    out[alg._masks ^ (1 << (g - 1))] = a.coeffs * alg._gen_signs("right", g)
    return CliffordElement(alg, out)


def mul_generator_left(a: CliffordElement, g: int) -> CliffordElement:
    """Fast path for e_g a."""
    alg = a.algebra
    if not 1 <= g <= alg.n:
        raise ValueError(f"generator index {g} outside 1..{alg.n}")
    out = np.empty(alg.dim, dtype=np.complex128)
    out[(1 << (g - 1)) ^ alg._masks] = a.coeffs * alg._gen_signs("left", g)
    return CliffordElement(alg, out)


def mul_dw_right(a: CliffordElement, k: int) -> CliffordElement:
    """a * dW_k without materializing the increment element."""
    out = mul_generator_right(a, k)
    return CliffordElement(a.algebra, out.coeffs * np.sqrt(a.algebra.dt))


def mul_dw_left(a: CliffordElement, k: int) -> CliffordElement:
    """dW_k * a without materializing the increment element."""
    out = mul_generator_left(a, k)
    return CliffordElement(a.algebra, out.coeffs * np.sqrt(a.algebra.dt))


def martingale_coefficient(f: CliffordElement, k: int) -> CliffordElement:
    """Unique adapted Y with f = E_k f + Y dW_{k+1}, for f supported in 1..k+1.

    Blade S containing generator k+1 contributes coeff(S)/sqrt(dt) to blade
    S \\ {k+1}; appending the top generator inside the product costs no sign.
    """
    alg = f.algebra
    if not 0 <= k <= alg.n - 1:
        raise ValueError(f"step index {k} outside 0..{alg.n - 1}")
    if not f.is_adapted(k + 1):
        raise SupportError(f"element not supported in generators 1..{k + 1}")
    bit = 1 << k
    out = np.zeros(alg.dim, dtype=np.complex128)
    src = np.nonzero((alg._masks & bit) != 0)[0]
    out[src ^ bit] = f.coeffs[src] / np.sqrt(alg.dt)
    return CliffordElement(alg, out)


# -- processes -------------------------------------------------------------

class AdaptedProcess:
    """Time-indexed element sequence with value at t_k adapted at step k.

    ``offset`` shifts the adaptedness requirement: values[i] must be adapted
    at step offset + i.  The state and adjoint processes use offset 0; the
    martingale-integrand process of the first adjoint also uses offset 0
    (its k-th value is adapted at k although it refers to cell k+1).
    """

    def __init__(self, algebra: CliffordAlgebra, values: Iterable[CliffordElement],
                 offset: int = 0, validate: bool = True, tol: float = 0.0):
        self.algebra = algebra
        self.values = list(values)
        self.offset = offset
        if validate:
            for i, v in enumerate(self.values):
                if v.algebra is not algebra:
                    raise AlgebraMismatchError(f"value {i} on a different algebra")
                if not v.is_adapted(min(offset + i, algebra.n), tol):
                    raise SupportError(f"value {i} not adapted at step {offset + i}")

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i) -> CliffordElement:
        return self.values[i]

    def __iter__(self):
        return iter(self.values)

    def sup_norm(self) -> float:
        return max(v.norm() for v in self.values)


# -- superoperators --------------------------------------------------------

@dataclass
class SuperOperator:
    """Real-linear operator on coefficient space: v -> lin v + antilin conj(v).

    Operators coming from sesquilinear forms are plain complex matrices
    (``antilin is None``).  Second derivatives of quadratic-in-state
    coefficient maps are complex-bilinear rather than sesquilinear, and those
    materialize with a pure conjugation block.
    """

    algebra: CliffordAlgebra
    lin: np.ndarray
    antilin: np.ndarray | None = None

    def __post_init__(self):
        d = self.algebra.dim
        self.lin = np.asarray(self.lin, dtype=np.complex128)
        if self.lin.shape != (d, d):
            raise ValueError(f"matrix must have shape ({d}, {d})")
        if self.antilin is not None:
            self.antilin = np.asarray(self.antilin, dtype=np.complex128)
            if self.antilin.shape != (d, d):
                raise ValueError(f"conjugation block must have shape ({d}, {d})")

    @staticmethod
    def zero(algebra: CliffordAlgebra) -> "SuperOperator":
        d = algebra.dim
        return SuperOperator(algebra, np.zeros((d, d), dtype=np.complex128))

    @staticmethod
    def identity(algebra: CliffordAlgebra, scale: complex = 1.0) -> "SuperOperator":
        return SuperOperator(algebra, scale * np.eye(algebra.dim, dtype=np.complex128))

    def apply_vec(self, v: np.ndarray) -> np.ndarray:
        out = self.lin @ v
        if self.antilin is not None:
            out = out + self.antilin @ np.conj(v)
        return out

    def apply(self, a: CliffordElement) -> CliffordElement:
        if a.algebra is not self.algebra:
            raise AlgebraMismatchError("element on a different algebra")
        return CliffordElement(self.algebra, self.apply_vec(a.coeffs))

    def pair(self, v: CliffordElement, w: CliffordElement) -> complex:
        """Complex pairing <P v, w>."""
        return complex(np.vdot(self.apply_vec(v.coeffs), w.coeffs))

    def re_pair(self, v: CliffordElement, w: CliffordElement) -> float:
        return self.pair(v, w).real

    def __add__(self, other: "SuperOperator") -> "SuperOperator":
        anti = None
        if self.antilin is not None or other.antilin is not None:
            a = self.antilin if self.antilin is not None else 0.0
            b = other.antilin if other.antilin is not None else 0.0
            anti = a + b
        return SuperOperator(self.algebra, self.lin + other.lin, anti)

    def scaled(self, c: float) -> "SuperOperator":
        anti = None if self.antilin is None else c * self.antilin
        return SuperOperator(self.algebra, c * self.lin, anti)

    def conjugated_by(self, t: np.ndarray) -> "SuperOperator":
        """Return T^dagger P T for a complex-linear T given as a matrix."""
        td = t.conj().T
        lin = td @ self.lin @ t
        anti = None if self.antilin is None else td @ self.antilin @ np.conj(t)
        return SuperOperator(self.algebra, lin, anti)

    def projected(self, k: int) -> "SuperOperator":
        """Compress to the step-k adapted subspace: E_k P E_k."""
        keep = self.algebra.adapted_mask(k)
        sel = np.outer(keep, keep)
        lin = np.where(sel, self.lin, 0.0)
        anti = None if self.antilin is None else np.where(sel, self.antilin, 0.0)
        return SuperOperator(self.algebra, lin, anti)


def superop_from_pairing(alg: CliffordAlgebra, pair, mask: np.ndarray | None = None,
                         ) -> SuperOperator:
    """Materialize the operator M with <M v, w> = pair(v, w).

    ``pair`` must be additive and real-homogeneous in each slot (any mix of
    sesquilinear and bilinear parts is fine).  Probing each basis blade and its
    i-multiple splits the action into the complex-linear block and the
    conjugation block; a conjugation block that comes out identically zero is
    dropped.  With ``mask`` given, rows and columns outside the masked
    subspace stay zero.
    """
    d = alg.dim
    idxs = np.nonzero(mask)[0] if mask is not None else np.arange(d)
    lin = np.zeros((d, d), dtype=np.complex128)
    anti = np.zeros((d, d), dtype=np.complex128)
    for r in idxs:
        er = CliffordElement.blade(alg, int(r))
        ier = CliffordElement.blade(alg, int(r), 1j)
        col = np.zeros(d, dtype=np.complex128)
        col_i = np.zeros(d, dtype=np.complex128)
        for s in idxs:
            es = CliffordElement.blade(alg, int(s))
            col[s] = np.conj(pair(er, es))
            col_i[s] = np.conj(pair(ier, es))
        lin[:, r] = 0.5 * (col - 1j * col_i)
        anti[:, r] = 0.5 * (col + 1j * col_i)
    if not np.any(anti):
        return SuperOperator(alg, lin)
    return SuperOperator(alg, lin, anti)


def superop_from_columns(alg: CliffordAlgebra, apply_fn, mask: np.ndarray | None = None,
                         ) -> SuperOperator:
    """Materialize a real-linear operator from its action on basis blades.

    ``apply_fn`` maps an element to an element and need only be correct on the
    masked subspace; outputs are truncated to it.
    """
    d = alg.dim
    idxs = np.nonzero(mask)[0] if mask is not None else np.arange(d)
    keep = np.zeros(d, dtype=bool)
    keep[idxs] = True
    lin = np.zeros((d, d), dtype=np.complex128)
    anti = np.zeros((d, d), dtype=np.complex128)
    for r in idxs:
        col = apply_fn(CliffordElement.blade(alg, int(r))).coeffs
        col_i = apply_fn(CliffordElement.blade(alg, int(r), 1j)).coeffs
        col = np.where(keep, col, 0.0)
        col_i = np.where(keep, col_i, 0.0)
        lin[:, r] = 0.5 * (col - 1j * col_i)
        anti[:, r] = 0.5 * (col + 1j * col_i)
    if not np.any(anti):
        return SuperOperator(alg, lin)
    return SuperOperator(alg, lin, anti)

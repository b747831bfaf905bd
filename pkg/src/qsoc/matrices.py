"""Explicit matrix realization of the generators (verification oracle).

Generators map to Pauli strings Z^(g-1) (x) X (x) I^(n-g); the trace state is
the normalized matrix trace.  This gives a second, independent route to every
algebra operation and backs the oracle-equivalence checks.  Dense matrices are
2^n x 2^n, so the oracle is only used at small n.
"""

from __future__ import annotations

import numpy as np

from .clifford import CliffordAlgebra, CliffordElement

_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)
_I2 = np.eye(2, dtype=np.complex128)

ORACLE_MAX_GENERATORS = 8


class MatrixRealization:
    """Cacheable bundle of generator and blade matrices for one algebra size."""

    def __init__(self, n: int):
        if n > ORACLE_MAX_GENERATORS:
            raise ValueError(f"matrix oracle limited to n <= {ORACLE_MAX_GENERATORS}")
        self.n = n
        self.size = 1 << n
        self.generators = [self._generator(g) for g in range(1, n + 1)]
        self._blades: dict[int, np.ndarray] = {0: np.eye(self.size, dtype=np.complex128)}

    def _generator(self, g: int) -> np.ndarray:
        mat = np.ones((1, 1), dtype=np.complex128)
        for site in range(1, self.n + 1):
            if site < g:
                factor = _Z
            elif site == g:
                factor = _X
            else:
                factor = _I2
            mat = np.kron(mat, factor)
        return mat

    def blade(self, mask: int) -> np.ndarray:
        cached = self._blades.get(mask)
        if cached is not None:
            return cached
        low = mask & -mask
        rest = self.blade(mask ^ low)
        g = low.bit_length()
        # canonical blade order is ascending, so the lowest generator is leftmost
        out = self.generators[g - 1] @ rest
        self._blades[mask] = out
        return out

    def to_matrix(self, a: CliffordElement) -> np.ndarray:
        out = np.zeros((self.size, self.size), dtype=np.complex128)
        for mask in np.nonzero(a.coeffs)[0]:
            out += a.coeffs[mask] * self.blade(int(mask))
        return out

    def from_matrix(self, alg: CliffordAlgebra, mat: np.ndarray) -> CliffordElement:
        """Invert to_matrix using blade orthonormality under the trace."""
        coeffs = np.empty(alg.dim, dtype=np.complex128)
        for mask in range(alg.dim):
            b = self.blade(mask)
            coeffs[mask] = np.trace(b.conj().T @ mat) / self.size
        return CliffordElement(alg, coeffs)

    def state(self, mat: np.ndarray) -> complex:
        return complex(np.trace(mat) / self.size)

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(np.trace(a.conj().T @ b) / self.size)

    def parity_matrix(self) -> np.ndarray:
        mat = np.ones((1, 1), dtype=np.complex128)
        for _ in range(self.n):
            mat = np.kron(mat, _Z)
        return mat


def realization_for(alg: CliffordAlgebra) -> MatrixRealization:
    return MatrixRealization(alg.n)

"""su(2) spin algebra: operators, LMG Hamiltonian, coherent states.

Conventions used throughout the package:

* hbar = 1.
* The spin-S Hilbert space has dimension d = 2S + 1 and is spanned by
  the Sz eigenbasis ordered by descending magnetic number,
  m = S, S-1, ..., -S.  Basis index i corresponds to m = S - i.
* Collective operators satisfy [Sx, Sy] = i Sz and cyclic permutations.
* The LMG Hamiltonian is H = Omega * Sz - (2/N) * Sx**2 with N = 2S.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

HERM_TOL = 1e-12


def hermiticity_defect(mat: np.ndarray) -> float:
    """Largest entrywise deviation of ``mat`` from its conjugate transpose."""
    return float(np.max(np.abs(mat - mat.conj().T))) if mat.size else 0.0


class HermitianOperator:
    """Dense Hermitian matrix, checked at construction.

    The hermiticity defect must not exceed ``herm_tol`` relative to the
    largest entry magnitude (with a floor of 1 so that the check stays
    meaningful for near-zero matrices).
    """

    def __init__(self, mat, herm_tol: float = HERM_TOL):
        mat = np.asarray(mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {mat.shape}")
        scale = max(1.0, float(np.max(np.abs(mat))) if mat.size else 0.0)
        defect = hermiticity_defect(mat)
        if defect > herm_tol * scale:
            raise ValueError(
                f"hermiticity defect {defect:.3e} exceeds tolerance "
                f"{herm_tol * scale:.3e}"
            )
        # store the exactly Hermitian part so downstream algebra is clean
        self.mat = 0.5 * (mat + mat.conj().T)
        self.dim = mat.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.array(self.mat, dtype=dtype) if dtype else np.array(self.mat)

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


def as_matrix(op) -> np.ndarray:
    """Return the ndarray behind an operator-like object."""
    if isinstance(op, HermitianOperator):
        return op.mat
    return np.asarray(op, dtype=complex)


@dataclass(frozen=True)
class SpinSpec:
    """Collective spin of size S (integer or half-integer, S >= 0)."""

    S: float

    def __post_init__(self):
        two_s = 2.0 * self.S
        if self.S < 0 or abs(two_s - round(two_s)) > 1e-12:
            raise ValueError(f"S must be a non-negative half-integer, got {self.S}")

    @property
    def dim(self) -> int:
        return int(round(2 * self.S)) + 1


@dataclass(frozen=True)
class CoherentState:
    """SU(2) coherent state |zeta> with amplitudes in the descending-m basis."""

    zeta: complex
    S: float
    amplitudes: np.ndarray = field(repr=False)


def spin_operators(spec: SpinSpec):
    """Return (Sx, Sy, Sz) for the given spin.

    Built from the ladder operator S+ with matrix elements
    sqrt(S(S+1) - m(m+1)) connecting m -> m+1 in the descending-m basis.
    """
    S = spec.S
    d = spec.dim
    m = S - np.arange(d)  # m_i = S - i
    sz = np.diag(m.astype(complex))
    # S+ e_i = sqrt(S(S+1) - m_i (m_i + 1)) e_{i-1}
    coeff = np.sqrt(S * (S + 1) - m[1:] * (m[1:] + 1))
    sp = np.zeros((d, d), dtype=complex)
    sp[np.arange(d - 1), np.arange(1, d)] = coeff
    sm = sp.conj().T
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    return (
        HermitianOperator(sx),
        HermitianOperator(sy),
        HermitianOperator(sz),
    )


def lmg_hamiltonian(spec: SpinSpec, Omega: float) -> HermitianOperator:
    """LMG Hamiltonian H = Omega * Sz - (2/N) * Sx**2, N = 2S."""
    if spec.S <= 0:
        raise ValueError("LMG Hamiltonian needs S > 0 (N = 2S particles)")
    sx, _, sz = spin_operators(spec)
    n_part = 2.0 * spec.S
    h = Omega * sz.mat - (2.0 / n_part) * (sx.mat @ sx.mat)
    return HermitianOperator(h)


def su2_coherent_state(spec: SpinSpec, zeta: complex) -> CoherentState:
    """Normalized SU(2) coherent state |zeta> ~ exp(zeta S+) |S, -S>.

    Amplitude on |S, -S+k> is sqrt(binom(2S, k)) zeta^k / (1+|zeta|^2)^S.
    Computed in log space so large S and extreme |zeta| stay finite.
    """
    S = spec.S
    d = spec.dim
    two_s = d - 1
    amps = np.zeros(d, dtype=complex)
    if zeta == 0:
        amps[-1] = 1.0  # lowest weight |S, -S> sits at basis index 2S
        return CoherentState(zeta=complex(zeta), S=S, amplitudes=amps)
    k = np.arange(d)
    log_binom = gammaln(two_s + 1) - gammaln(k + 1) - gammaln(two_s - k + 1)
    log_mag = 0.5 * log_binom + k * np.log(abs(zeta)) - S * np.log1p(abs(zeta) ** 2)
    phase = k * np.angle(zeta)
    c_k = np.exp(log_mag + 1j * phase)
    amps[two_s - k] = c_k  # |S, -S+k> has basis index 2S - k
    return CoherentState(zeta=complex(zeta), S=S, amplitudes=amps)


def hs_inner(A, B, spec: SpinSpec) -> complex:
    """Normalized Hilbert-Schmidt inner product (A, B).

    (A, B) = 3 Tr(A^dag B) / (S(S+1)(2S+1)), which makes the spin
    components orthonormal: (Si, Sj) = delta_ij.
    """
    S = spec.S
    a = as_matrix(A)
    b = as_matrix(B)
    norm = 3.0 / (S * (S + 1) * (2 * S + 1))
    return complex(norm * np.trace(a.conj().T @ b))

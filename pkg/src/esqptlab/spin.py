"""Collective-spin linear algebra in the Dicke basis.

Basis convention used throughout: |S,m> with m = -S..S *ascending*, so
basis index i corresponds to m = i - S.  Two-spin product states are
ordered system-outer / environment-inner, k = i_s * d + i_e with
d = 2S + 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "SpinOperators",
    "ParityMap",
    "two_s_of",
    "dicke_dim",
    "m_values",
    "ladder_coefficients",
    "spin_matrices",
    "embed",
    "apply_embedded",
    "coherent_state",
    "parity_map",
]


def two_s_of(S) -> int:
    """Validate a spin size and return 2S as an integer.

    S must be a positive integer or half-integer.
    """
    two_s = round(2 * S)
    if abs(2 * S - two_s) > 1e-9 or two_s < 1:
        raise ValueError(f"spin size must be a positive half-integer, got S={S}")
    return int(two_s)


def dicke_dim(S) -> int:
    """Hilbert-space dimension 2S+1 of a single collective spin."""
    return two_s_of(S) + 1


def m_values(S) -> np.ndarray:
    """Magnetic quantum numbers m = -S..S, ascending (exact in binary)."""
    two_s = two_s_of(S)
    return (np.arange(two_s + 1) - two_s / 2.0).astype(float)


def ladder_coefficients(S) -> np.ndarray:
    """Raising-operator matrix elements sqrt(S(S+1) - m(m+1)) for m = -S..S-1."""
    m = m_values(S)[:-1]
    return np.sqrt(S * (S + 1) - m * (m + 1))


@dataclass(frozen=True)
class SpinOperators:
    """Dense spin matrices for one collective spin of size S."""

    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    dim: int


def spin_matrices(S) -> SpinOperators:
    """Build dense S^x, S^y, S^z for a collective spin of size S.

    S^z is diagonal with entries -S..S; S^x, S^y come from the standard
    ladder construction, so [S^x, S^y] = i S^z.
    """
    d = dicke_dim(S)
    m = m_values(S)
    c = ladder_coefficients(S)
    sp = np.zeros((d, d))
    sp[np.arange(1, d), np.arange(d - 1)] = c  # S+ raises m by one
    sx = (sp + sp.T) / 2.0
    sy = (sp - sp.T) / 2j
    sz = np.diag(m)
    return SpinOperators(sx=sx, sy=sy, sz=sz, dim=d)


def embed(op: np.ndarray, slot: str, S) -> np.ndarray:
    """Embed a single-spin operator into the two-spin product space.

    slot "system" gives op (x) 1, slot "environment" gives 1 (x) op, in
    the system-outer product ordering.
    """
    d = dicke_dim(S)
    op = np.asarray(op)
    if op.shape != (d, d):
        raise ValueError(f"operator shape {op.shape} does not match dimension {d} for S={S}")
    eye = np.eye(d)
    if slot == "system":
        return np.kron(op, eye)
    if slot == "environment":
        return np.kron(eye, op)
    raise ValueError(f"slot must be 'system' or 'environment', got {slot!r}")


def apply_embedded(op: np.ndarray, slot: str, vec: np.ndarray) -> np.ndarray:
    """Apply op (x) 1 or 1 (x) op to product-space vectors without forming the D x D matrix.

    vec may be a single vector of length d^2 or a (d^2, k) stack of columns.
    """
    d = op.shape[0]
    v = np.asarray(vec)
    single = v.ndim == 1
    if single:
        v = v[:, None]
    if v.shape[0] != d * d:
        raise ValueError(f"vector length {v.shape[0]} does not match product dimension {d * d}")
    k = v.shape[1]
    vr = v.reshape(d, d, k)
    if slot == "system":
        out = np.tensordot(op, vr, axes=([1], [0]))
    elif slot == "environment":
        out = np.einsum("ab,ibk->iak", op, vr, optimize=True)
    else:
        raise ValueError(f"slot must be 'system' or 'environment', got {slot!r}")
    out = out.reshape(d * d, k)
    return out[:, 0] if single else out


def coherent_state(phi: float, z: float, S) -> np.ndarray:
    """Spin coherent state pointing along (phi, z).

    Returns the ground state of -h.S where the unit vector is
    h = (sqrt(1-z^2) cos phi, sqrt(1-z^2) sin phi, z), i.e. the state
    fully polarized along h with <S^z> = S z and <S^x> = S sqrt(1-z^2) cos phi.

    The generator is gauge-rotated by exp(-i phi S^z) into a real symmetric
    tridiagonal matrix, its ground state is extracted, and the phases
    exp(-i m phi) are restored.  The global phase is fixed so the
    largest-magnitude amplitude is real positive (bit-reproducible).
    """
    if abs(z) > 1:
        raise ValueError(f"polar coordinate z must satisfy |z| <= 1, got {z}")
    m = m_values(S)
    nt = np.sqrt(max(0.0, 1.0 - z * z))
    # ground state of -(nt*Sx + z*Sz), real symmetric tridiagonal
    diag = -z * m
    off = -nt * ladder_coefficients(S) / 2.0
    _, vec = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    psi = vec[:, 0] * np.exp(-1j * m * phi)
    k = int(np.argmax(np.abs(psi)))
    psi *= np.conj(psi[k]) / np.abs(psi[k])
    psi /= np.linalg.norm(psi)
    return psi


@dataclass(frozen=True)
class ParityMap:
    """Z2 parity as the pure basis permutation m -> -m.

    For slots="both" the permutation acts on the product index,
    (m_s, m_e) -> (-m_s, -m_e); for slots="single" on one spin.  Even and
    odd sectors are spanned by the normalized symmetric / antisymmetric
    combinations of basis-state pairs (k, p(k)); self-paired states are even.
    """

    dim: int
    permutation: np.ndarray  # involution p with p[p[k]] = k
    pair_lo: np.ndarray = field(repr=False)  # k < p(k)
    pair_hi: np.ndarray = field(repr=False)  # p(k) for each pair
    fixed: np.ndarray = field(repr=False)  # k == p(k)

    @property
    def even_dim(self) -> int:
        return len(self.pair_lo) + len(self.fixed)

    @property
    def odd_dim(self) -> int:
        return len(self.pair_lo)

    def sector_dim(self, sector: str) -> int:
        if sector == "even":
            return self.even_dim
        if sector == "odd":
            return self.odd_dim
        raise ValueError(f"sector must be 'even' or 'odd', got {sector!r}")

    def matrix(self) -> np.ndarray:
        """Dense permutation operator U with U|k> = |p(k)>."""
        u = np.zeros((self.dim, self.dim))
        u[self.permutation, np.arange(self.dim)] = 1.0
        return u

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """U acting on a vector (or stack of column vectors)."""
        return np.asarray(vec)[self.permutation]

    def conjugate(self, op: np.ndarray) -> np.ndarray:
        """U op U^-1 via index arithmetic (no matmul)."""
        p = self.permutation
        return np.asarray(op)[np.ix_(p, p)]

    def commutes_with(self, op: np.ndarray, tol: float = 1e-10) -> bool:
        op = np.asarray(op)
        scale = np.linalg.norm(op)
        return np.linalg.norm(self.conjugate(op) - op) <= tol * max(1.0, scale)

    def sector_basis(self, sector: str) -> np.ndarray:
        """Orthonormal sector basis as dense columns in the full basis.

        Column order: pairs by ascending lower index, then (even only)
        the self-paired states.
        """
        n = self.sector_dim(sector)
        b = np.zeros((self.dim, n))
        npair = len(self.pair_lo)
        r = 1.0 / np.sqrt(2.0)
        cols = np.arange(npair)
        b[self.pair_lo, cols] = r
        b[self.pair_hi, cols] = r if sector == "even" else -r
        if sector == "even" and len(self.fixed):
            b[self.fixed, npair + np.arange(len(self.fixed))] = 1.0
        return b

    def projector(self, sector: str) -> np.ndarray:
        """Dense projector onto the requested sector, (1 +/- U)/2."""
        sign = {"even": 1.0, "odd": -1.0}[sector]
        return (np.eye(self.dim) + sign * self.matrix()) / 2.0

    def project_operator(self, op: np.ndarray, sector: str) -> np.ndarray:
        """Congruence-transform a parity-commuting operator into one sector block."""
        lo, hi, f = self.pair_lo, self.pair_hi, self.fixed
        sign = {"even": 1.0, "odd": -1.0}[sector]
        pp = (
            op[np.ix_(lo, lo)]
            + op[np.ix_(hi, hi)]
            + sign * (op[np.ix_(lo, hi)] + op[np.ix_(hi, lo)])
        ) / 2.0
        if sector == "odd":
            return pp
        return _block(pp, op, lo, hi, f)

    def lift(self, sector_vecs: np.ndarray, sector: str) -> np.ndarray:
        """Map sector-basis coordinates back to full-basis vectors."""
        v = np.asarray(sector_vecs)
        single = v.ndim == 1
        if single:
            v = v[:, None]
        if v.shape[0] != self.sector_dim(sector):
            raise ValueError("sector coordinate length mismatch")
        out = np.zeros((self.dim, v.shape[1]), dtype=v.dtype)
        npair = len(self.pair_lo)
        r = 1.0 / np.sqrt(2.0)
        out[self.pair_lo] = r * v[:npair]
        out[self.pair_hi] = (r if sector == "even" else -r) * v[:npair]
        if sector == "even" and len(self.fixed):
            out[self.fixed] = v[npair:]
        return out[:, 0] if single else out

    def restrict(self, vecs: np.ndarray, sector: str) -> np.ndarray:
        """Project full-basis vectors onto the sector and express them in sector coordinates."""
        v = np.asarray(vecs)
        single = v.ndim == 1
        if single:
            v = v[:, None]
        r = 1.0 / np.sqrt(2.0)
        sign = 1.0 if sector == "even" else -1.0
        top = r * (v[self.pair_lo] + sign * v[self.pair_hi])
        if sector == "even" and len(self.fixed):
            top = np.vstack([top, v[self.fixed]])
        return top[:, 0] if single else top


def _block(pp: np.ndarray, op: np.ndarray, lo, hi, f) -> np.ndarray:
    # assemble [pair-pair, pair-fixed; fixed-pair, fixed-fixed] (even sector)
    if len(f) == 0:
        return pp
    r = 1.0 / np.sqrt(2.0)
    pf = r * (op[np.ix_(lo, f)] + op[np.ix_(hi, f)])
    fp = r * (op[np.ix_(f, lo)] + op[np.ix_(f, hi)])
    ff = op[np.ix_(f, f)]
    return np.block([[pp, pf], [fp, ff]])


def parity_map(S, slots: str = "both") -> ParityMap:
    """Z2 parity permutation m -> -m on one spin or on both spins jointly.

    In the ascending-m convention this is index reversal, k -> dim-1-k,
    for either slot choice.
    """
    d = dicke_dim(S)
    if slots == "single":
        dim = d
    elif slots == "both":
        dim = d * d
    else:
        raise ValueError(f"slots must be 'single' or 'both', got {slots!r}")
    perm = np.arange(dim)[::-1].copy()
    k = np.arange(dim)
    lo = k[k < perm]
    fixed = k[k == perm]
    return ParityMap(dim=dim, permutation=perm, pair_lo=lo, pair_hi=perm[lo], fixed=fixed)

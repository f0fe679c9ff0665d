"""Quantum Hamiltonians and the classical energy surface of the coupled collective-spin model.

Two collective spins of size S = N/2 in a transverse field h (the unit of
energy), with a self-interaction Lambda = lambda_s * h on the system spin and
a z-z coupling V = v * h to the environment spin:

    H = -h S^x_s - h S^x_e + (Lambda/N) (S^z_s)^2 + (V/2N) S^z_s S^z_e

The classical limit per spin (energies divided by h*S) gives the surface

    E(phi, z)   = (lambda_s/2) z^2 - sqrt(1-z^2) cos phi           (system only)
    h_tot       = E(phi_s, z_s) - sqrt(1-z_e^2) cos phi_e + (v/4) z_s z_e

with the unstable fixed point at (phi, z) = (pi, 0) and the separatrix on the
contour E = 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .spin import dicke_dim, ladder_coefficients, m_values, spin_matrices, two_s_of

__all__ = [
    "ModelParams",
    "ClassicalState",
    "MemoryBudgetError",
    "DEFAULT_MEMORY_BUDGET",
    "build_hamiltonian",
    "build_system_hamiltonian",
    "classical_energy",
    "total_classical_energy",
    "total_energy_cartesian",
    "angles_to_vector",
    "vector_to_angles",
    "separatrix_z",
    "z_at_energy",
]

# refuse to allocate product-space matrices beyond this (bytes)
DEFAULT_MEMORY_BUDGET = 4 * 1024**3


class MemoryBudgetError(RuntimeError):
    """Requested dense matrix exceeds the configured memory budget."""


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: spin size S, field h, and rescaled couplings.

    lambda_s = Lambda/h (fixed to 10 in all production runs) and v = V/h.
    N = 2S is the number of spins per subsystem.
    """

    S: float
    lambda_s: float = 10.0
    v: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        two_s_of(self.S)
        if self.lambda_s < 0:
            raise ValueError(f"lambda_s must be >= 0, got {self.lambda_s}")
        if self.v < 0:
            raise ValueError(f"v must be >= 0, got {self.v}")
        if self.h <= 0:
            raise ValueError(f"h must be > 0, got {self.h}")

    @property
    def N(self) -> int:
        return two_s_of(self.S)

    @property
    def dim(self) -> int:
        return dicke_dim(self.S)

    @property
    def dim_product(self) -> int:
        return self.dim**2


@dataclass(frozen=True)
class ClassicalState:
    """Phase-space point of the two collective spins in canonical (phi, z) form."""

    phi_s: float
    z_s: float
    phi_e: float = 0.0
    z_e: float = 0.0

    def __post_init__(self):
        if abs(self.z_s) > 1 or abs(self.z_e) > 1:
            raise ValueError("canonical z coordinates must satisfy |z| <= 1")

    def cartesian(self) -> np.ndarray:
        """Unit-vector form (m_s, m_e) flattened to a length-6 array."""
        return np.concatenate(
            [angles_to_vector(self.phi_s, self.z_s), angles_to_vector(self.phi_e, self.z_e)]
        )

    @classmethod
    def from_cartesian(cls, y: np.ndarray) -> "ClassicalState":
        y = np.asarray(y, dtype=float)
        if y.shape != (6,):
            raise ValueError(f"expected a length-6 cartesian state, got shape {y.shape}")
        for v3 in (y[:3], y[3:]):
            if abs(np.linalg.norm(v3) - 1.0) > 1e-6:
                raise ValueError("cartesian spin vectors must have unit length")
        ps, zs = vector_to_angles(y[:3])
        pe, ze = vector_to_angles(y[3:])
        return cls(phi_s=ps, z_s=zs, phi_e=pe, z_e=ze)


def angles_to_vector(phi: float, z: float) -> np.ndarray:
    rho = np.sqrt(max(0.0, 1.0 - z * z))
    return np.array([rho * np.cos(phi), rho * np.sin(phi), z])


def vector_to_angles(m: np.ndarray) -> tuple[float, float]:
    return float(np.arctan2(m[1], m[0])), float(np.clip(m[2], -1.0, 1.0))


def build_hamiltonian(params: ModelParams, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> np.ndarray:
    """Dense two-spin Hamiltonian in the product Dicke basis (real symmetric).

    H = -h (S^x_s + S^x_e) + (Lambda/N)(S^z_s)^2 + (V/2N) S^z_s S^z_e with
    Lambda = lambda_s h, V = v h, N = 2S.  Filled in place (no Kronecker
    temporaries) so the peak allocation is the matrix itself.
    """
    d = params.dim
    D = d * d
    nbytes = 8 * D * D
    if nbytes > memory_budget:
        raise MemoryBudgetError(
            f"product-space matrix needs {nbytes / 1e9:.2f} GB > budget {memory_budget / 1e9:.2f} GB"
        )
    h = params.h
    m = m_values(params.S)
    c = ladder_coefficients(params.S)
    k = np.arange(D)
    ms = m[k // d]
    me = m[k % d]
    H = np.zeros((D, D))
    H[k, k] = (params.lambda_s * h / params.N) * ms**2 + (params.v * h / (2 * params.N)) * ms * me
    # environment field: couples (i_s, i_e) <-> (i_s, i_e + 1)
    r = k[k % d != d - 1]
    ce = h * c[r % d] / 2.0
    H[r + 1, r] -= ce
    H[r, r + 1] -= ce
    # system field: couples (i_s, i_e) <-> (i_s + 1, i_e)
    q = k[k // d != d - 1]
    cs = h * c[q // d] / 2.0
    H[q + d, q] -= cs
    H[q, q + d] -= cs
    return H


def build_system_hamiltonian(S, lambda_s: float, h: float = 1.0) -> np.ndarray:
    """Single-spin Hamiltonian H_s = -h S^x + (Lambda/N) (S^z)^2 (real symmetric)."""
    ops = spin_matrices(S)
    N = two_s_of(S)
    return -h * ops.sx + (lambda_s * h / N) * (ops.sz @ ops.sz)


def classical_energy(phi, z, lambda_s: float = 10.0):
    """System energy surface E = (lambda_s/2) z^2 - sqrt(1-z^2) cos phi (accepts arrays)."""
    z = np.asarray(z, dtype=float)
    return lambda_s / 2.0 * z**2 - np.sqrt(1.0 - z**2) * np.cos(phi)


def total_classical_energy(state: ClassicalState, params: ModelParams) -> float:
    """Total classical energy per spin, H_cl/(h S), of a two-spin phase-space point."""
    e_sys = classical_energy(state.phi_s, state.z_s, params.lambda_s)
    e_env = -np.sqrt(1.0 - state.z_e**2) * np.cos(state.phi_e)
    return float(e_sys + e_env + params.v / 4.0 * state.z_s * state.z_e)


def total_energy_cartesian(y: np.ndarray, lambda_s: float, v: float):
    """Same energy evaluated on cartesian states; y has shape (..., 6)."""
    y = np.asarray(y)
    return (
        lambda_s / 2.0 * y[..., 2] ** 2
        - y[..., 0]
        - y[..., 3]
        + v / 4.0 * y[..., 2] * y[..., 5]
    )


def z_at_energy(phi: float, energy: float, lambda_s: float = 10.0) -> float:
    """Non-negative z with E(phi, z) = energy, by bracketed root-finding on [0, 1].

    Raises ValueError when no root exists in the bracket (energy outside
    [-cos phi, lambda_s/2]).
    """
    def f(z):
        return classical_energy(phi, z, lambda_s) - energy

    f0, f1 = f(0.0), f(1.0)
    if f0 == 0.0:
        return 0.0
    if f1 == 0.0:
        return 1.0
    if f0 > 0 or f1 < 0:
        raise ValueError(
            f"no z in [0,1] with E(phi={phi}, z) = {energy} at lambda_s={lambda_s}"
        )
    return brentq(f, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16)


def separatrix_z(phi: float, lambda_s: float = 10.0) -> float:
    """Separatrix branch z >= 0 solving E(phi, z) = 1 (requires lambda_s > 1)."""
    if lambda_s <= 1:
        raise ValueError("the unstable fixed point requires lambda_s > 1")
    return z_at_energy(phi, 1.0, lambda_s)

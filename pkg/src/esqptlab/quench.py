"""Quench protocol: separatrix product states, exact evolution, degeneracy-aware
diagonal-ensemble averages, memory curves, and the memory quantifier.

The long-time average of an observable after a quench is computed from the
diagonal ensemble, generalized to near-degenerate blocks: eigenvalues closer
than a tolerance are grouped transitively and the average includes the
within-block coherences,

    O_bar = sum_b <psi| P_b O P_b |psi>,

which reduces to sum_n |c_n|^2 <n|O|n> when every block is a singleton and
correctly keeps the contribution of symmetry-broken doublets that are
degenerate at numerical precision.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, build_hamiltonian, build_system_hamiltonian, separatrix_z
from .spectral import SpectralCache, SpectralData, eigensolve, eigenstate_expectation
from .spin import apply_embedded, coherent_state, embed, spin_matrices

__all__ = [
    "QuenchSpec",
    "MemoryCurve",
    "DEFAULT_OBSERVABLES",
    "DEFAULT_PHI_GRID",
    "observable_applier",
    "observable_matrix",
    "initial_product_state",
    "initial_system_state",
    "overlaps",
    "degeneracy_blocks",
    "default_degeneracy_tol",
    "diagonal_ensemble_average",
    "evolve_expectation",
    "memory_curve",
    "memory_curves",
    "memory_quantifier",
]

log = logging.getLogger(__name__)

DEFAULT_OBSERVABLES = ("sx_s", "sz_s", "sx_e", "sz_e")
DEFAULT_PHI_GRID = tuple(np.linspace(0.0, np.pi, 9))

_COMPONENTS = {"x", "y", "z"}
_SLOTS = {"s": "system", "e": "environment"}


@dataclass(frozen=True)
class QuenchSpec:
    """One quench: model parameters plus the initial system phase phi0.

    The initial z-polarization is implied by the separatrix constraint
    E(phi0, z0) = 1 and never stored independently.  env_polarization "+x"
    starts the environment in its ground state (the energy-consistent
    reading); "-x" restores the literal opposite orientation.
    """

    params: ModelParams
    phi0: float
    observables: tuple = DEFAULT_OBSERVABLES
    times: np.ndarray | None = None
    env_polarization: str = "+x"

    def __post_init__(self):
        if not 0.0 <= self.phi0 <= np.pi + 1e-12:
            raise ValueError(f"phi0 must lie in [0, pi], got {self.phi0}")
        if self.env_polarization not in ("+x", "-x"):
            raise ValueError("env_polarization must be '+x' or '-x'")

    @property
    def z0(self) -> float:
        return separatrix_z(self.phi0, self.params.lambda_s)


def _parse_observable(name: str, mode: str) -> tuple[str, str]:
    try:
        comp, slot = name.split("_")
        assert comp[0] == "s" and comp[1] in _COMPONENTS and slot in _SLOTS and len(comp) == 2
    except (ValueError, AssertionError, IndexError):
        raise ValueError(f"unknown observable {name!r}; expected e.g. 'sx_s', 'sz_e'") from None
    if mode == "system" and slot == "e":
        raise ValueError(f"environment observable {name!r} not available in system-only mode")
    return comp[1], _SLOTS[slot]


def observable_applier(name: str, S, mode: str = "two-spin"):
    """Callable computing O @ vecs for a named collective observable.

    z-components multiply by the diagonal; x/y-components apply the small
    single-spin matrix along the proper tensor slot, so the dense D x D
    operator is never materialized.
    """
    comp, slot = _parse_observable(name, mode)
    ops = spin_matrices(S)
    if mode == "system":
        op = {"x": ops.sx, "y": ops.sy, "z": ops.sz}[comp]
        return lambda vecs: op @ vecs
    if comp == "z":
        d = ops.dim
        m = np.diag(ops.sz)
        w = np.repeat(m, d) if slot == "system" else np.tile(m, d)
        return lambda vecs: vecs * (w[:, None] if np.ndim(vecs) == 2 else w)
    op = ops.sx if comp == "x" else ops.sy
    return lambda vecs: apply_embedded(op, slot, vecs)


def observable_matrix(name: str, S, mode: str = "two-spin") -> np.ndarray:
    """Dense matrix for a named observable (small-S tests and cross-checks)."""
    comp, slot = _parse_observable(name, mode)
    ops = spin_matrices(S)
    op = {"x": ops.sx, "y": ops.sy, "z": ops.sz}[comp]
    if mode == "system":
        return op
    return embed(op, slot, S)


def initial_product_state(spec: QuenchSpec) -> np.ndarray:
    """Separatrix system coherent state tensored with the x-polarized environment."""
    p = spec.params
    sys_state = coherent_state(spec.phi0, spec.z0, p.S)
    env_phi = 0.0 if spec.env_polarization == "+x" else np.pi
    env_state = coherent_state(env_phi, 0.0, p.S)
    return np.kron(sys_state, env_state)


def initial_system_state(phi0: float, S, lambda_s: float = 10.0) -> np.ndarray:
    """System-only separatrix state (single collective spin, dimension 2S+1)."""
    if not 0.0 <= phi0 <= np.pi + 1e-12:
        raise ValueError(f"phi0 must lie in [0, pi], got {phi0}")
    return coherent_state(phi0, separatrix_z(phi0, lambda_s), S)


def overlaps(psi: np.ndarray, sd: SpectralData) -> np.ndarray:
    """Eigenbasis amplitudes c_n = <n|psi> against a full-spectrum decomposition."""
    if sd.sector != "full":
        raise ValueError("overlaps require a full-spectrum SpectralData")
    psi = np.asarray(psi)
    V = sd.eigenvectors
    if psi.shape != (V.shape[0],):
        raise ValueError(f"state dimension {psi.shape} does not match spectrum ({V.shape[0]})")
    c = V.conj().T @ psi
    norm = np.sum(np.abs(c) ** 2)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"overlap normalization sum |c|^2 = {norm} deviates from 1")
    return c


def default_degeneracy_tol(sd: SpectralData) -> float:
    s = sd.params.S if sd.params is not None else 1.0
    h = sd.params.h if sd.params is not None else 1.0
    return 1e-10 * h * max(1.0, s)


def degeneracy_blocks(eigenvalues: np.ndarray, tol: float) -> np.ndarray:
    """Block boundaries grouping eigenvalues transitively by adjacent gaps < tol.

    Returns `starts` such that block b spans indices [starts[b], starts[b+1]).
    """
    e = np.asarray(eigenvalues)
    cut = np.flatnonzero(np.diff(e) >= tol) + 1
    return np.concatenate(([0], cut, [len(e)]))


def diagonal_ensemble_average(
    c: np.ndarray,
    sd: SpectralData,
    op,
    degeneracy_tol: float | None = None,
    eigen_diagonal: np.ndarray | None = None,
) -> float:
    """Infinite-time average of an observable in the degeneracy-aware diagonal ensemble.

    `op` is a dense matrix or an applier callable.  `eigen_diagonal` may carry
    precomputed <n|O|n> to amortize the dominant cost across many initial
    states (it must belong to the same sd/op pair).
    """
    if degeneracy_tol is None:
        degeneracy_tol = default_degeneracy_tol(sd)
    if degeneracy_tol < 0:
        raise ValueError("degeneracy tolerance must be >= 0")
    apply_op = op if callable(op) else (lambda vecs: np.asarray(op) @ vecs)
    if eigen_diagonal is None:
        _, eigen_diagonal = eigenstate_expectation(sd, op)
    starts = degeneracy_blocks(sd.eigenvalues, degeneracy_tol)
    sizes = np.diff(starts)
    w = np.abs(c) ** 2
    if np.all(sizes == 1):
        return float(w @ eigen_diagonal)
    single_idx = starts[:-1][sizes == 1]
    total = float(w[single_idx] @ eigen_diagonal[single_idx])
    V = sd.product_eigenvectors()
    multi = np.flatnonzero(sizes > 1)
    X = np.empty((V.shape[0], len(multi)), dtype=complex)
    for j, b in enumerate(multi):
        a, z = starts[b], starts[b + 1]
        X[:, j] = V[:, a:z] @ c[a:z]
    OX = apply_op(X)
    total += float(np.real(np.einsum("ij,ij->", X.conj(), OX)))
    return total


def evolve_expectation(
    psi: np.ndarray,
    sd: SpectralData,
    op,
    times: np.ndarray,
    chunk: int = 512,
) -> np.ndarray:
    """Exact time series <psi(t)|O|psi(t)> via eigenbasis rotation.

    Evaluates O(t) = sum_nm c_n* c_m exp(i(e_n-e_m)t) O_nm by reconstructing
    |psi(t)> in chunks of time points (bounded memory at large dimension).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    c = overlaps(psi, sd)
    V = sd.eigenvectors
    e = sd.eigenvalues
    apply_op = op if callable(op) else (lambda vecs: np.asarray(op) @ vecs)
    out = np.empty(len(times))
    v_real = not np.iscomplexobj(V)
    for a in range(0, len(times), chunk):
        t = times[a : a + chunk]
        A = c[:, None] * np.exp(-1j * e[:, None] * t[None, :])
        if v_real:
            psi_t = V @ A.real + 1j * (V @ A.imag)
        else:
            psi_t = V @ A
        vals = np.einsum("it,it->t", psi_t.conj(), apply_op(psi_t), optimize=True)
        out[a : a + len(t)] = vals.real
    return out


@dataclass(frozen=True)
class MemoryCurve:
    """Long-time average of one observable versus the initial phase phi0."""

    observable: str
    phi0: np.ndarray
    averages: np.ndarray
    energies: np.ndarray  # <H> per initial state, for audit
    params: ModelParams
    mode: str = "two-spin"


def memory_quantifier(curve: MemoryCurve) -> float:
    """Memory quantifier: (max over phi0 - min over phi0) of O_bar, divided by S."""
    if len(curve.averages) == 0:
        raise ValueError("memory quantifier of an empty curve")
    return float((np.max(curve.averages) - np.min(curve.averages)) / curve.params.S)


def _resolve_spectrum(params, mode, sd, cache) -> SpectralData:
    if sd is not None:
        if sd.sector != "full":
            raise ValueError("memory curves need the full spectrum")
        return sd
    kind = "two-spin" if mode == "two-spin" else "system"
    if cache is not None:
        return cache.fetch(params, "full", kind)
    if mode == "two-spin":
        return eigensolve(build_hamiltonian(params), params=params, overwrite=True)
    return eigensolve(build_system_hamiltonian(params.S, params.lambda_s, params.h),
                      params=params, overwrite=True)


def memory_curves(
    params: ModelParams,
    phi_grid=DEFAULT_PHI_GRID,
    observables=DEFAULT_OBSERVABLES,
    mode: str = "two-spin",
    sd: SpectralData | None = None,
    cache: SpectralCache | None = None,
    env_polarization: str = "+x",
    degeneracy_tol: float | None = None,
) -> tuple[dict[str, MemoryCurve], list[dict]]:
    """Memory curves for several observables sharing one eigendecomposition.

    Returns the curves keyed by observable name plus per-initial-state records
    (phi0, <H>, every observable average, block-count diagnostics).
    """
    if mode not in ("two-spin", "system"):
        raise ValueError(f"mode must be 'two-spin' or 'system', got {mode!r}")
    phi_grid = np.asarray(sorted(phi_grid), dtype=float)
    sd = _resolve_spectrum(params, mode, sd, cache)
    if degeneracy_tol is None:
        degeneracy_tol = default_degeneracy_tol(sd)
    appliers = {name: observable_applier(name, params.S, mode) for name in observables}
    diagonals = {}
    for name, f in appliers.items():
        _, diagonals[name] = eigenstate_expectation(sd, f)
    starts = degeneracy_blocks(sd.eigenvalues, degeneracy_tol)
    sizes = np.diff(starts)
    records = []
    for phi0 in phi_grid:
        if mode == "two-spin":
            psi = initial_product_state(
                QuenchSpec(params=params, phi0=float(phi0), env_polarization=env_polarization)
            )
        else:
            psi = initial_system_state(float(phi0), params.S, params.lambda_s)
        c = overlaps(psi, sd)
        rec = {
            "phi0": float(phi0),
            "energy": float(np.abs(c) ** 2 @ sd.eigenvalues),
            "n_blocks": int(len(sizes)),
            "n_multi_blocks": int(np.count_nonzero(sizes > 1)),
            "averages": {},
        }
        for name, f in appliers.items():
            rec["averages"][name] = diagonal_ensemble_average(
                c, sd, f, degeneracy_tol=degeneracy_tol, eigen_diagonal=diagonals[name]
            )
        records.append(rec)
        log.debug("quench phi0=%.4f <H>=%.6g blocks=%d", phi0, rec["energy"], rec["n_blocks"])
    curves = {}
    for name in observables:
        curves[name] = MemoryCurve(
            observable=name,
            phi0=phi_grid.copy(),
            averages=np.array([r["averages"][name] for r in records]),
            energies=np.array([r["energy"] for r in records]),
            params=params,
            mode=mode,
        )
    return curves, records


def memory_curve(
    params: ModelParams,
    phi_grid,
    observable: str,
    **kwargs,
) -> MemoryCurve:
    """Single-observable convenience wrapper around memory_curves."""
    curves, _ = memory_curves(params, phi_grid, (observable,), **kwargs)
    return curves[observable]

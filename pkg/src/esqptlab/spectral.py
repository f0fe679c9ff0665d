"""Dense Hermitian eigendecomposition, parity-sector spectra, level statistics,
degeneracy scans, and a persistent spectral cache.
"""
from __future__ import annotations

import hashlib
import logging
import os
import struct
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .model import ModelParams, build_hamiltonian, build_system_hamiltonian
from .spin import ParityMap, parity_map

__all__ = [
    "SpectralData",
    "LevelStats",
    "eigensolve",
    "level_spacing_ratios",
    "degeneracy_scan",
    "eigenstate_expectation",
    "SpectralCache",
]

log = logging.getLogger(__name__)

SECTORS = ("full", "even", "odd")


@dataclass
class SpectralData:
    """Eigenvalues and eigenvectors of one Hamiltonian (optionally one parity sector).

    Eigenvalues are ascending, in units of h.  Eigenvectors are columns in the
    sector basis; for sector "full" that coincides with the product Dicke
    basis.  `product_eigenvectors` maps sector coordinates back to the full
    basis.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sector: str = "full"
    params: ModelParams | None = None
    parity: ParityMap | None = None
    _product_vectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_levels(self) -> int:
        return len(self.eigenvalues)

    def product_eigenvectors(self) -> np.ndarray:
        if self.sector == "full":
            return self.eigenvectors
        if self._product_vectors is None:
            if self.parity is None:
                raise ValueError("sector-restricted SpectralData needs its ParityMap to lift vectors")
            self._product_vectors = self.parity.lift(self.eigenvectors, self.sector)
        return self._product_vectors

    def residuals(self, H: np.ndarray) -> tuple[float, float]:
        """Relative eigen-residual and orthonormality defect (verification helper)."""
        V = self.eigenvectors
        if self.sector != "full":
            H = self.parity.project_operator(np.asarray(H), self.sector)
        r = np.linalg.norm(H @ V - V * self.eigenvalues) / max(np.linalg.norm(H), 1e-300)
        g = np.linalg.norm(V.conj().T @ V - np.eye(V.shape[1]))
        return float(r), float(g)


def _check_hermitian(H: np.ndarray, rtol: float = 1e-12):
    scale = np.linalg.norm(H)
    if np.linalg.norm(H - H.conj().T) > rtol * max(scale, 1.0):
        raise ValueError("matrix is not Hermitian within tolerance")


def eigensolve(
    H: np.ndarray,
    sector: str = "full",
    parity: ParityMap | None = None,
    params: ModelParams | None = None,
    overwrite: bool = False,
) -> SpectralData:
    """Full or parity-sector eigendecomposition of a Hermitian matrix.

    For sector "even"/"odd" the matrix is first congruence-transformed into
    the symmetric/antisymmetric pair basis of `parity` (it must commute with
    the parity permutation), and the block is diagonalized.
    """
    H = np.asarray(H)
    if sector not in SECTORS:
        raise ValueError(f"sector must be one of {SECTORS}, got {sector!r}")
    _check_hermitian(H)
    if sector == "full":
        w, V = scipy.linalg.eigh(H, driver="evd", overwrite_a=overwrite)
        return SpectralData(eigenvalues=w, eigenvectors=V, sector="full", params=params)
    if parity is None:
        raise ValueError("sector-restricted eigensolve requires a ParityMap")
    if not parity.commutes_with(H):
        raise ValueError("Hamiltonian does not commute with the parity map; no sector structure")
    block = parity.project_operator(H, sector)
    w, V = scipy.linalg.eigh(block, driver="evd", overwrite_a=True)
    return SpectralData(eigenvalues=w, eigenvectors=V, sector=sector, params=params, parity=parity)


@dataclass(frozen=True)
class LevelStats:
    """Consecutive level-spacing ratios r_n = min(s_n, s_n-1)/max(s_n, s_n-1)."""

    ratios: np.ndarray
    mean: float
    n_zero_spacings: int

    @property
    def n_levels(self) -> int:
        return len(self.ratios) + 2


def level_spacing_ratios(eigenvalues: np.ndarray) -> LevelStats:
    """Spacing-ratio statistics of an ascending spectrum.

    Exact zero spacings give r_n = 0 (degenerate pairs are physics, not
    noise); their count is reported and logged rather than dropped.
    """
    e = np.asarray(eigenvalues, dtype=float)
    if e.ndim != 1 or len(e) < 3:
        raise ValueError("level statistics need at least 3 levels")
    s = np.diff(e)
    if np.any(s < 0):
        raise ValueError("eigenvalues must be ascending")
    lo = np.minimum(s[:-1], s[1:])
    hi = np.maximum(s[:-1], s[1:])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(hi > 0, lo / np.where(hi > 0, hi, 1.0), 0.0)
    nz = int(np.count_nonzero(s == 0))
    if nz:
        log.info("level_spacing_ratios: %d exact zero spacings among %d levels", nz, len(e))
    return LevelStats(ratios=r, mean=float(np.mean(r)), n_zero_spacings=nz)


def degeneracy_scan(eigenvalues: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    """Energies of adjacent near-degenerate pairs, |e_{n+1} - e_n| < tol.

    Reports the lower member of each pair.  Meant for the *full* spectrum:
    symmetry-broken doublets straddle parity sectors.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    e = np.asarray(eigenvalues, dtype=float)
    gaps = np.diff(e)
    return e[:-1][np.abs(gaps) < tol]


def eigenstate_expectation(sd: SpectralData, op) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal matrix elements <n|O|n> paired with the eigenvalues e_n.

    `op` is a dense Hermitian matrix in the basis the eigenvectors live in
    (product basis; sector data is lifted first), or a callable applying it
    to a stack of column vectors.
    """
    V = sd.product_eigenvectors()
    if callable(op):
        OV = op(V)
    else:
        op = np.asarray(op)
        if op.shape != (V.shape[0], V.shape[0]):
            raise ValueError(f"operator shape {op.shape} does not match dimension {V.shape[0]}")
        OV = op @ V
    diag = np.einsum("in,in->n", V.conj(), OV, optimize=True)
    if np.abs(diag.imag).max(initial=0.0) > 1e-9 * max(1.0, np.abs(diag.real).max(initial=0.0)):
        raise ValueError("operator has non-real eigenstate diagonal; is it Hermitian?")
    return sd.eigenvalues.copy(), diag.real.copy()


# ---------------------------------------------------------------------------
# persistent cache
# ---------------------------------------------------------------------------

_MAGIC = b"ESQPTSPC"
_FORMAT_VERSION = 1
_KINDS = ("two-spin", "system")
_HEADER = struct.Struct("<8sIBBIddQQ32s")  # magic, version, kind, sector, 2S, lambda, v, dim, nlev, sha256


class SpectralCache:
    """Load-or-compute store for SpectralData, one binary file per key.

    Key = (kind, 2S, lambda_s, v, sector); the file name is a deterministic
    hash of the key tuple.  Files carry a versioned header and a payload
    checksum; corrupt or mismatched files are treated as misses and
    overwritten.  Writes go to a temp file followed by an atomic rename, and
    an in-process lock per key keeps to the single-writer contract.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self.computes = 0
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- key handling -------------------------------------------------------

    @staticmethod
    def _key(params: ModelParams, sector: str, kind: str) -> tuple:
        if kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
        if sector not in SECTORS:
            raise ValueError(f"sector must be one of {SECTORS}, got {sector!r}")
        v = 0.0 if kind == "system" else float(params.v)
        return (kind, int(round(2 * params.S)), float(params.lambda_s), v, sector)

    def path_for(self, params: ModelParams, sector: str = "full", kind: str = "two-spin") -> Path:
        key = self._key(params, sector, kind)
        text = "|".join(repr(x) for x in key)
        digest = hashlib.sha256(text.encode()).hexdigest()[:24]
        return self.root / f"spec_{digest}.bin"

    def _lock_for(self, path: Path) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(str(path), threading.Lock())

    # -- public API ----------------------------------------------------------

    def fetch(self, params: ModelParams, sector: str = "full", kind: str = "two-spin") -> SpectralData:
        """Return cached SpectralData for the key, computing and persisting on miss."""
        key = self._key(params, sector, kind)
        path = self.path_for(params, sector, kind)
        par = self._parity(params, kind)
        with self._lock_for(path):
            sd = self._load(path, key, params, par)
            if sd is not None:
                self.hits += 1
                log.debug("spectral cache hit: %s", path.name)
                return sd
            self.misses += 1
            sd = self._compute(params, sector, kind, par)
            self._store(path, key, sd)
            return sd

    # -- internals -----------------------------------------------------------

    @staticmethod
    def _parity(params: ModelParams, kind: str) -> ParityMap:
        return parity_map(params.S, "both" if kind == "two-spin" else "single")

    def _compute(self, params: ModelParams, sector: str, kind: str, par: ParityMap) -> SpectralData:
        self.computes += 1
        if kind == "two-spin":
            H = build_hamiltonian(params)
        else:
            H = build_system_hamiltonian(params.S, params.lambda_s, params.h)
        log.info("eigensolve %s S=%g sector=%s dim=%d", kind, params.S, sector, H.shape[0])
        return eigensolve(H, sector=sector, parity=par if sector != "full" else None,
                          params=params, overwrite=True)

    @staticmethod
    def _pack_header(key: tuple, dim: int, nlev: int, digest: bytes) -> bytes:
        kind, two_s, lam, v, sector = key
        return _HEADER.pack(
            _MAGIC, _FORMAT_VERSION, _KINDS.index(kind), SECTORS.index(sector),
            two_s, lam, v, dim, nlev, digest,
        )

    def _store(self, path: Path, key: tuple, sd: SpectralData):
        if np.iscomplexobj(sd.eigenvectors):
            raise ValueError("cache stores real symmetric spectra only")
        values = np.ascontiguousarray(sd.eigenvalues, dtype="<f8").tobytes()
        vectors = np.asarray(sd.eigenvectors, dtype="<f8").tobytes(order="F")
        digest = hashlib.sha256(values + vectors).digest()
        header = self._pack_header(key, sd.eigenvectors.shape[0], sd.n_levels, digest)
        tmp = path.with_name(f"{path.name}.{uuid.uuid4().hex}.tmp")
        try:
            with open(tmp, "wb") as fh:
                fh.write(header)
                fh.write(values)
                fh.write(vectors)
            os.replace(tmp, path)
        finally:
            if tmp.exists():
                tmp.unlink()

    def _load(self, path: Path, key: tuple, params: ModelParams, par: ParityMap) -> SpectralData | None:
        if not path.exists():
            return None
        try:
            with open(path, "rb") as fh:
                head = fh.read(_HEADER.size)
                if len(head) != _HEADER.size:
                    raise ValueError("truncated header")
                magic, version, kind_i, sector_i, two_s, lam, v, dim, nlev, digest = _HEADER.unpack(head)
                if magic != _MAGIC or version != _FORMAT_VERSION:
                    raise ValueError("bad magic or format version")
                stored_key = (_KINDS[kind_i], two_s, lam, v, SECTORS[sector_i])
                if stored_key != key:
                    raise ValueError(f"header key {stored_key} does not match requested {key}")
                payload = fh.read()
            expect = 8 * nlev * (1 + dim)
            if len(payload) != expect:
                raise ValueError("truncated payload")
            if hashlib.sha256(payload).digest() != digest:
                raise ValueError("checksum mismatch")
            values = np.frombuffer(payload[: 8 * nlev], dtype="<f8").copy()
            vectors = np.frombuffer(payload[8 * nlev:], dtype="<f8").reshape((dim, nlev), order="F").copy()
        except (ValueError, OSError) as exc:
            log.warning("spectral cache: discarding %s (%s)", path.name, exc)
            return None
        sector = key[4]
        return SpectralData(
            eigenvalues=values, eigenvectors=vectors, sector=sector, params=params,
            parity=par if sector != "full" else None,
        )

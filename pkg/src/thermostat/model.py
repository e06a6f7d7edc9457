"""Model description, composite basis layout and local operators.

A model is a few-level system S coupled to an environment made of energy
bands.  Band ``a`` holds ``N_a`` equidistant levels ``E_a + width * n / N_a``
for ``n = 1..N_a``.  The composite basis is system-major::

    k = i * N_E + offset(a) + (n - 1)

Units: hbar = 1, energies in u, times in hbar/u.  System levels and bands
are indexed from zero in the Python API.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import SpecificationError


@dataclass(frozen=True)
class SystemSpec:
    levels: tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(e) for e in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise SpecificationError("system needs at least one level")
        if not all(math.isfinite(e) for e in levels):
            raise SpecificationError("system energies must be finite")
        if any(b < a for a, b in zip(levels, levels[1:])):
            raise SpecificationError("system energies must be non-decreasing")

    @property
    def dim(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class BandSpec:
    mean_energy: float
    width: float
    level_count: int

    def __post_init__(self):
        object.__setattr__(self, "mean_energy", float(self.mean_energy))
        object.__setattr__(self, "width", float(self.width))
        if not math.isfinite(self.mean_energy):
            raise SpecificationError("band energy must be finite")
        if not (self.width > 0 and math.isfinite(self.width)):
            raise SpecificationError(f"band width must be positive, got {self.width}")
        if int(self.level_count) != self.level_count or self.level_count < 1:
            raise SpecificationError(f"band level count must be a positive integer, got {self.level_count}")
        object.__setattr__(self, "level_count", int(self.level_count))

    def level_energies(self) -> np.ndarray:
        n = np.arange(1, self.level_count + 1)
        return self.mean_energy + self.width * n / self.level_count


@dataclass(frozen=True)
class CouplingBlockSpec:
    """One coupling block ``C_{ij,ab}`` with ``i <= j``.

    The adjoint block ``C_{ji,ba}`` is implied.  For ``i == j`` the pair
    ``(a, b)`` and ``(b, a)`` describe the same Hermitian pair, so ``a <= b``
    is enforced.
    """

    system_pair: tuple[int, int]
    band_pair: tuple[int, int]
    strength: float

    def __post_init__(self):
        i, j = (int(x) for x in self.system_pair)
        a, b = (int(x) for x in self.band_pair)
        if i > j:
            i, j, a, b = j, i, b, a
        if i == j and a > b:
            a, b = b, a
        object.__setattr__(self, "system_pair", (i, j))
        object.__setattr__(self, "band_pair", (a, b))
        object.__setattr__(self, "strength", float(self.strength))
        if min(i, j, a, b) < 0:
            raise SpecificationError("block indices must be non-negative")
        if not (self.strength >= 0 and math.isfinite(self.strength)):
            raise SpecificationError(f"coupling strength must be >= 0, got {self.strength}")

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (*self.system_pair, *self.band_pair)

    @property
    def kind(self) -> str:
        i, j = self.system_pair
        return "microcanonical" if i == j else "canonical"

    @property
    def is_hermitian_diagonal(self) -> bool:
        """True for ``i == j`` and ``a == b``: the block is its own adjoint."""
        return self.system_pair[0] == self.system_pair[1] and self.band_pair[0] == self.band_pair[1]


@dataclass(frozen=True)
class ModelSpec:
    system: SystemSpec
    bands: tuple[BandSpec, ...]
    blocks: tuple[CouplingBlockSpec, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.bands:
            raise SpecificationError("model needs at least one environment band")
        seen = set()
        for blk in self.blocks:
            i, j, a, b = blk.key
            if j >= self.system.dim:
                raise SpecificationError(f"block {blk.key}: system level out of range")
            if max(a, b) >= len(self.bands):
                raise SpecificationError(f"block {blk.key}: band out of range")
            if blk.key in seen:
                raise SpecificationError(f"duplicate coupling block {blk.key}")
            seen.add(blk.key)

    @property
    def n_system(self) -> int:
        return self.system.dim

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def band_sizes(self) -> tuple[int, ...]:
        return tuple(b.level_count for b in self.bands)

    @property
    def n_environment(self) -> int:
        return sum(self.band_sizes)

    @property
    def dim(self) -> int:
        return self.n_system * self.n_environment

    @cached_property
    def layout(self) -> "BasisLayout":
        return BasisLayout(self.n_system, self.band_sizes)

    def block(self, key) -> CouplingBlockSpec | None:
        key = CouplingBlockSpec(key[:2], key[2:], 0.0).key
        for blk in self.blocks:
            if blk.key == key:
                return blk
        return None

    def digest(self) -> str:
        """Stable short hash of the model content (for run manifests)."""
        from .config import format_model

        return hashlib.sha256(format_model(self).encode()).hexdigest()[:16]


class BasisIndex(NamedTuple):
    level: int
    band: int
    n: int  # 1-based level number inside the band


class BasisLayout:
    """System-major flat indexing of the composite basis ``(i, a, n_a)``."""

    def __init__(self, n_system: int, band_sizes: Sequence[int]):
        self.n_system = int(n_system)
        self.band_sizes = tuple(int(n) for n in band_sizes)
        self.offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.band_sizes)[:-1]]))
        self.n_environment = int(sum(self.band_sizes))
        self.dim = self.n_system * self.n_environment

    def __eq__(self, other):
        return (isinstance(other, BasisLayout) and self.n_system == other.n_system
                and self.band_sizes == other.band_sizes)

    def __repr__(self):
        return f"BasisLayout(n_system={self.n_system}, band_sizes={self.band_sizes})"

    @property
    def n_bands(self) -> int:
        return len(self.band_sizes)

    def encode(self, level: int, band: int, n: int) -> int:
        if not (0 <= level < self.n_system and 0 <= band < self.n_bands
                and 1 <= n <= self.band_sizes[band]):
            raise IndexError(f"basis label ({level}, {band}, {n}) out of range")
        return level * self.n_environment + self.offsets[band] + n - 1

    def decode(self, k: int) -> BasisIndex:
        if not 0 <= k < self.dim:
            raise IndexError(f"flat index {k} out of range")
        level, rest = divmod(int(k), self.n_environment)
        band = int(np.searchsorted(self.offsets, rest, side="right")) - 1
        return BasisIndex(level, band, rest - self.offsets[band] + 1)

    def sector(self, level: int, band: int) -> slice:
        """Flat index range of the ``(level, band)`` sector."""
        start = level * self.n_environment + self.offsets[band]
        return slice(start, start + self.band_sizes[band])

    def sectors(self) -> Iterator[tuple[int, int, slice]]:
        for i in range(self.n_system):
            for a in range(self.n_bands):
                yield i, a, self.sector(i, a)


def environment_energies(spec: ModelSpec) -> np.ndarray:
    return np.concatenate([b.level_energies() for b in spec.bands])


def build_local_hamiltonian(spec: ModelSpec) -> np.ndarray:
    """Diagonal of ``H_loc = H_S x 1 + 1 x H_E`` in the composite basis."""
    env = environment_energies(spec)
    return (np.asarray(spec.system.levels)[:, None] + env[None, :]).ravel()


def composite_projector(layout: BasisLayout, i: int, j: int, a: int) -> sp.csr_matrix:
    """Sparse ``|i><j| x Pi_a``: ones from column ``(j, a, n)`` to row ``(i, a, n)``."""
    if not (0 <= i < layout.n_system and 0 <= j < layout.n_system):
        raise IndexError(f"system levels ({i}, {j}) out of range")
    if not 0 <= a < layout.n_bands:
        raise IndexError(f"band {a} out of range")
    rows = np.arange(layout.sector(i, a).start, layout.sector(i, a).stop)
    cols = np.arange(layout.sector(j, a).start, layout.sector(j, a).stop)
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)), shape=(layout.dim, layout.dim))


def band_projector(layout: BasisLayout, a: int) -> sp.csr_matrix:
    """``1_S x Pi_a`` on the composite space."""
    return sum(composite_projector(layout, i, i, a) for i in range(layout.n_system))


def environment_band_projector(layout: BasisLayout, a: int) -> sp.csr_matrix:
    """``Pi_a`` on the environment space alone."""
    diag = np.zeros(layout.n_environment)
    diag[layout.offsets[a]:layout.offsets[a] + layout.band_sizes[a]] = 1.0
    return sp.diags(diag, format="csr")


@dataclass(frozen=True)
class BlockClass:
    block: CouplingBlockSpec
    detuning: float
    resonant: bool

    @property
    def kind(self) -> str:
        return self.block.kind


def block_detuning(spec: ModelSpec, key) -> float:
    i, j, a, b = key
    levels = spec.system.levels
    return levels[i] + spec.bands[a].mean_energy - levels[j] - spec.bands[b].mean_energy


def classify_blocks(spec: ModelSpec, tolerance: float | None = None) -> list[BlockClass]:
    """Flag every block as resonant iff ``|E_i + E_a - E_j - E_b| <= tolerance``.

    The default tolerance is the larger width of the two bands involved.
    """
    if tolerance is not None and tolerance < 0:
        raise SpecificationError("resonance tolerance must be >= 0")
    out = []
    for blk in spec.blocks:
        i, j, a, b = blk.key
        tol = tolerance if tolerance is not None else max(spec.bands[a].width, spec.bands[b].width)
        det = block_detuning(spec, blk.key)
        out.append(BlockClass(blk, det, abs(det) <= tol))
    return out


def energy_shells(spec: ModelSpec, tolerance: float | None = None) -> list[list[tuple[int, int]]]:
    """Group ``(level, band)`` sectors by approximate total energy ``E_i + E_a``.

    Sectors whose total energies chain together within ``tolerance``
    (default: largest band width) form one shell.  Shells are returned in
    increasing energy order.
    """
    tol = tolerance if tolerance is not None else max(b.width for b in spec.bands)
    items = sorted(
        ((spec.system.levels[i] + spec.bands[a].mean_energy, i, a)
         for i in range(spec.n_system) for a in range(spec.n_bands)),
    )
    shells: list[list[tuple[int, int]]] = []
    last = None
    for energy, i, a in items:
        if last is None or energy - last > tol:
            shells.append([])
        shells[-1].append((i, a))
        last = energy
    return shells

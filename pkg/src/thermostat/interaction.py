"""Block random interaction matrices ``V = sum_ij |i><j| x C_ij``.

Sampling algorithm (fixed so ensembles can be replayed):

* every stored block ``(i, j, a, b)`` gets its own generator seeded by
  ``numpy.random.SeedSequence(seed mod 2**64, spawn_key=(i, j, a, b))``
  driving PCG64, so a block's content does not depend on which other blocks
  exist or in which order they are listed;
* complex Gaussians come from Box-Muller on the uniform doubles of that
  stream: ``sqrt(-2 ln(1 - u1)) * exp(2 pi i u2)``;
* off-diagonal entries get real and imaginary variance ``lambda**2 / 2``;
  self-adjoint blocks (``i == j``, ``a == b``) are GUE-like with real
  diagonal of variance ``lambda**2``;
* each block is finally rescaled so that its empirical coupling strength
  ``sqrt(tr(C_ij,ab C_ji,ba) / (N_a N_b))`` equals the requested value.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np

from .exceptions import SpecificationError
from .model import BasisLayout, CouplingBlockSpec, ModelSpec

_MAGIC = b"THERMOSTAT-V 1\n"
_U64 = (1 << 64) - 1


def block_rng(seed: int, key: tuple[int, int, int, int]) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & _U64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    """Complex standard normals (unit variance per real component)."""
    u1 = rng.random(shape)
    u2 = rng.random(shape)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.exp(2j * np.pi * u2)


def _draw_block(blk: CouplingBlockSpec, rows: int, cols: int, seed: int) -> np.ndarray:
    if rows == 0 or cols == 0:
        raise SpecificationError(f"block {blk.key} is zero-dimensional")
    lam = blk.strength
    if lam == 0:
        return np.zeros((rows, cols), dtype=complex)
    z = box_muller(block_rng(seed, blk.key), (rows, cols))
    if blk.is_hermitian_diagonal:
        upper = np.triu(z, k=1) * (lam / np.sqrt(2.0))
        c = upper + upper.conj().T + np.diag(lam * z.real.diagonal())
    else:
        c = z * (lam / np.sqrt(2.0))
    empirical = np.sqrt(np.vdot(c, c).real / (rows * cols))
    return c * (lam / empirical)


@dataclass
class InteractionMatrix:
    """Hermitian block-sparse interaction on the composite basis.

    Only the blocks listed in the model are stored (canonical key with
    ``i <= j``); adjoints are produced on access.
    """

    layout: BasisLayout
    system_levels: int
    blocks: dict[tuple[int, int, int, int], np.ndarray] = field(default_factory=dict)
    seed: int | None = None

    def view(self, i: int, j: int, a: int, b: int) -> np.ndarray | None:
        """``C_{ij,ab}`` as an ``N_a x N_b`` array, or ``None`` if absent."""
        if (i, j, a, b) in self.blocks:
            return self.blocks[(i, j, a, b)]
        if (j, i, b, a) in self.blocks:
            return self.blocks[(j, i, b, a)].conj().T
        return None

    def views(self) -> dict[tuple[int, int, int, int], np.ndarray]:
        out = {}
        for (i, j, a, b), c in self.blocks.items():
            out[(i, j, a, b)] = c
            out[(j, i, b, a)] = c.conj().T
        return out

    def to_dense(self) -> np.ndarray:
        lay = self.layout
        v = np.zeros((lay.dim, lay.dim), dtype=complex)
        for (i, j, a, b), c in self.views().items():
            v[lay.sector(i, a), lay.sector(j, b)] = c
        return v

    def hermiticity_error(self) -> float:
        v = self.to_dense()
        return float(np.max(np.abs(v - v.conj().T))) if v.size else 0.0

    def dump(self, path: str | Path) -> None:
        """Write the blocks: magic line, JSON header line, then raw complex128
        little-endian row-major data of each block in header order."""
        keys = sorted(self.blocks)
        header = {
            "seed": self.seed,
            "n_system": self.system_levels,
            "band_sizes": list(self.layout.band_sizes),
            "blocks": [{"key": list(k), "shape": list(self.blocks[k].shape)} for k in keys],
        }
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(json.dumps(header).encode() + b"\n")
            for k in keys:
                fh.write(np.ascontiguousarray(self.blocks[k], dtype="<c16").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "InteractionMatrix":
        with open(path, "rb") as fh:
            if fh.readline() != _MAGIC:
                raise SpecificationError(f"{path}: not an interaction dump")
            header = json.loads(fh.readline())
            blocks = {}
            for entry in header["blocks"]:
                rows, cols = entry["shape"]
                raw = fh.read(16 * rows * cols)
                if len(raw) != 16 * rows * cols:
                    raise SpecificationError(f"{path}: truncated block data")
                blocks[tuple(entry["key"])] = np.frombuffer(raw, dtype="<c16").reshape(rows, cols).astype(complex)
        layout = BasisLayout(header["n_system"], header["band_sizes"])
        return cls(layout, header["n_system"], blocks, header["seed"])


def sample_interaction(spec: ModelSpec, seed: int) -> InteractionMatrix:
    sizes = spec.band_sizes
    blocks = {}
    for blk in spec.blocks:
        _, _, a, b = blk.key
        blocks[blk.key] = _draw_block(blk, sizes[a], sizes[b], seed)
    return InteractionMatrix(spec.layout, spec.n_system, blocks, seed)


def empirical_coupling(v: InteractionMatrix, block) -> float:
    """``sqrt(tr(C_{ij,ab} C_{ji,ba}) / (N_a N_b))``; zero for absent blocks."""
    i, j, a, b = block
    c = v.view(i, j, a, b)
    if c is None:
        return 0.0
    return float(np.sqrt(np.vdot(c, c).real / c.size))


@dataclass
class DecorrelationReport:
    entries: list[tuple[tuple, tuple, float]]

    @property
    def max_correlation(self) -> float:
        return max((e[2] for e in self.entries), default=0.0)

    def __bool__(self):
        return bool(self.entries)


def decorrelation_report(v: InteractionMatrix) -> DecorrelationReport:
    """Normalized cross traces ``|tr(C C')| / (lambda lambda' N_a N_b)``.

    Covers every unordered pair of block views whose product has a band
    trace (``C_{ij,ab}`` with ``C_{kl,ba}``) except a block with its own
    adjoint.  Gaussian blocks give values of order ``1/sqrt(N_a N_b)``.
    """
    views = v.views()
    strength = {k: empirical_coupling(v, k) for k in views}
    entries = []
    for x, y in combinations_with_replacement(sorted(views), 2):
        i, j, a, b = x
        k, l, c, d = y
        if (c, d) != (b, a):
            continue
        if (k, l) == (j, i):
            continue  # adjoint pair
        if strength[x] == 0 or strength[y] == 0:
            continue
        cross = np.sum(views[x] * views[y].T)
        entries.append((x, y, float(abs(cross) / (strength[x] * strength[y] * views[x].size))))
    return DecorrelationReport(entries)

"""Exact Schrodinger evolution of the composite pure state.

``H = H_loc + V`` is time independent, so it is diagonalized once and states
are propagated by applying phases in the eigenbasis.  ``H`` is block
diagonal over the connected components of the (level, band) sectors linked
by non-zero coupling blocks; each component is diagonalized separately,
which is exact and much cheaper than one dense eigendecomposition.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix

from .exceptions import DimensionCapError, SpecificationError
from .interaction import InteractionMatrix
from .model import BasisLayout

DEFAULT_DIMENSION_CAP = 5000


@dataclass(frozen=True)
class Component:
    indices: np.ndarray   # flat basis indices, sorted
    energies: np.ndarray
    vectors: np.ndarray   # columns are eigenvectors (identity for uncoupled sectors)


@dataclass(frozen=True)
class EigenSystem:
    dim: int
    components: tuple[Component, ...]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.sort(np.concatenate([c.energies for c in self.components]))

    def hamiltonian(self) -> np.ndarray:
        """Dense ``U diag(E) U^dagger`` (for checks on small systems)."""
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for c in self.components:
            h[np.ix_(c.indices, c.indices)] = (c.vectors * c.energies) @ c.vectors.conj().T
        return h


def _sector_components(layout: BasisLayout, v: InteractionMatrix) -> list[list[tuple[int, int]]]:
    nb = layout.n_bands
    nsec = layout.n_system * nb
    rows, cols = [], []
    for (i, j, a, b), c in v.blocks.items():
        if np.any(c):
            rows.append(i * nb + a)
            cols.append(j * nb + b)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(nsec, nsec))
    n, labels = connected_components(graph, directed=False)
    groups = [[] for _ in range(n)]
    for s, lab in enumerate(labels):
        groups[lab].append(divmod(s, nb))
    return groups


def diagonalize(h_loc: np.ndarray, v: InteractionMatrix, cap: int = DEFAULT_DIMENSION_CAP) -> EigenSystem:
    """Full eigendecomposition of ``diag(h_loc) + V``, component by component."""
    layout = v.layout
    if len(h_loc) != layout.dim:
        raise SpecificationError("H_loc and V live on different bases")
    if layout.dim > cap:
        raise DimensionCapError(
            f"composite dimension {layout.dim} exceeds the dense-diagonalization cap {cap}; "
            "reduce band sizes or raise the cap explicitly")
    views = v.views()
    components = []
    for group in _sector_components(layout, v):
        slices = [layout.sector(i, a) for i, a in group]
        idx = np.concatenate([np.arange(s.start, s.stop) for s in slices])
        pos, start = {}, 0
        for sec, s in zip(group, slices):
            pos[sec] = slice(start, start + (s.stop - s.start))
            start += s.stop - s.start
        order = np.argsort(idx)
        h = np.diag(h_loc[idx]).astype(complex)
        coupled = False
        for (i, j, a, b), c in views.items():
            if (i, a) in pos and (j, b) in pos:
                h[pos[(i, a)], pos[(j, b)]] += c
                coupled = coupled or bool(np.any(c))
        if coupled:
            if not np.allclose(h, h.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(h).max())):
                raise RuntimeError("Hamiltonian block is not Hermitian")
            energies, vectors = sla.eigh(h, driver="evd", overwrite_a=True)
        else:
            energies, vectors = h.diagonal().real.copy(), np.eye(len(idx), dtype=complex)
        # store rows in increasing flat-index order
        components.append(Component(idx[order], energies, vectors[order]))
    return EigenSystem(layout.dim, tuple(components))


def _evolve_columns(eig: EigenSystem, psi0: np.ndarray, times: np.ndarray) -> np.ndarray:
    out = np.zeros((eig.dim, len(times)), dtype=complex)
    for comp in eig.components:
        sub = psi0[comp.indices]
        if not np.any(sub):
            continue
        coef = comp.vectors.conj().T @ sub
        phases = np.exp(-1j * np.outer(comp.energies, times))
        out[comp.indices] = comp.vectors @ (phases * coef[:, None])
    return out


def evolve(eig: EigenSystem, psi0: np.ndarray, t: float) -> np.ndarray:
    """``psi(t) = U exp(-i E t) U^dagger psi0`` (Schrodinger picture, hbar = 1)."""
    if t < 0:
        raise SpecificationError("evolution time must be >= 0")
    return _evolve_columns(eig, np.asarray(psi0, dtype=complex), np.array([float(t)]))[:, 0]


@dataclass(frozen=True)
class ObservableSet:
    """``P[i, j, a] = <psi| |i><j| x Pi_a |psi>`` at one instant."""

    P: np.ndarray
    time: float = 0.0

    @property
    def rho(self) -> np.ndarray:
        """Reduced density matrix ``rho_ij = sum_a P_ij,a``."""
        return self.P.sum(axis=-1)

    @property
    def populations(self) -> np.ndarray:
        """``P_ii,a`` as an ``(N_S, N_B)`` real array."""
        return np.real(np.einsum("iia->ia", self.P))

    def check(self, atol: float = 1e-8) -> None:
        if not np.allclose(self.P, np.conj(np.swapaxes(self.P, 0, 1)), atol=atol):
            raise SpecificationError("P is not Hermiticity-consistent")
        if abs(self.populations.sum() - 1.0) > atol:
            raise SpecificationError("populations do not sum to one")


def _measure_columns(psi: np.ndarray, layout: BasisLayout) -> np.ndarray:
    """``P`` with shape ``(T, S, S, B)`` for state columns ``psi`` of shape ``(dim, T)``."""
    psi = psi.reshape(layout.n_system, layout.n_environment, -1)
    P = np.empty((psi.shape[-1], layout.n_system, layout.n_system, layout.n_bands), dtype=complex)
    for a, (off, size) in enumerate(zip(layout.offsets, layout.band_sizes)):
        blk = psi[:, off:off + size, :]
        P[..., a] = np.einsum("int,jnt->tij", blk.conj(), blk)
    return P


def measure(psi: np.ndarray, layout: BasisLayout, time: float = 0.0) -> ObservableSet:
    return ObservableSet(_measure_columns(np.asarray(psi, dtype=complex)[:, None], layout)[0], time)


@dataclass(frozen=True)
class InitialRecipe:
    """Weights of the initial state over ``(level, band)`` sectors.

    With ``shared_environment`` all components sit in one band and share a
    single random environment vector, giving a product state
    ``(sum_i sqrt(w_i)|i>) x |phi>``; otherwise every component gets its own
    independent Haar vector (a correlated state).
    """

    components: tuple[tuple[int, int, float], ...]
    shared_environment: bool = False

    def __post_init__(self):
        comps = tuple((int(i), int(a), float(w)) for i, a, w in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise SpecificationError("initial recipe is empty")
        if any(w < 0 for _, _, w in comps):
            raise SpecificationError("recipe weights must be non-negative")
        if abs(sum(w for _, _, w in comps) - 1.0) > 1e-12:
            raise SpecificationError("recipe weights must sum to one")
        if len({(i, a) for i, a, _ in comps}) != len(comps):
            raise SpecificationError("recipe lists a sector twice")
        if self.shared_environment and len({a for _, a, _ in comps}) != 1:
            raise SpecificationError("a shared environment vector needs all components in one band")


def haar_vector(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return z / np.linalg.norm(z)


def sample_initial_state(recipe: InitialRecipe, seed: int, layout: BasisLayout) -> np.ndarray:
    psi = np.zeros(layout.dim, dtype=complex)
    seed = int(seed) & ((1 << 64) - 1)
    for i, a, _ in recipe.components:
        if not (0 <= i < layout.n_system and 0 <= a < layout.n_bands):
            raise SpecificationError(f"recipe sector ({i}, {a}) out of range")
    if recipe.shared_environment:
        band = recipe.components[0][1]
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(band,)))
        phi = haar_vector(rng, layout.band_sizes[band])
        for i, a, w in recipe.components:
            psi[layout.sector(i, a)] = np.sqrt(w) * phi
    else:
        for i, a, w in recipe.components:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i, a)))
            psi[layout.sector(i, a)] = np.sqrt(w) * haar_vector(rng, layout.band_sizes[a])
    return psi / np.linalg.norm(psi)


def von_neumann_entropy(rho: np.ndarray) -> np.ndarray:
    """Entropy (natural log) of one density matrix or a stack of them."""
    w = np.linalg.eigvalsh(rho)
    w = np.clip(w, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, -w * np.log(w), 0.0)
    return terms.sum(axis=-1)


@dataclass
class Trajectory:
    """Observables on a time grid.

    ``P`` has shape ``(T, S, S, B)`` when the engine resolves bands; the
    closed-form engine only provides ``rho``.
    """

    times: np.ndarray
    rho: np.ndarray
    P: np.ndarray | None = None
    engine: str = "exact"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise SpecificationError("trajectory times must be strictly increasing")

    @classmethod
    def from_P(cls, times, P, engine: str, provenance: dict | None = None) -> "Trajectory":
        return cls(times, P.sum(axis=-1), P, engine, dict(provenance or {}))

    @property
    def n_system(self) -> int:
        return self.rho.shape[1]

    def rho_diag(self, i: int) -> np.ndarray:
        return self.rho[:, i, i].real

    @property
    def rho_11(self) -> np.ndarray:
        return self.rho_diag(1)

    def abs_rho_sq(self, i: int = 0, j: int = 1) -> np.ndarray:
        return np.abs(self.rho[:, i, j]) ** 2

    def entropy(self) -> np.ndarray:
        rho = 0.5 * (self.rho + np.conj(np.swapaxes(self.rho, 1, 2)))
        return von_neumann_entropy(rho)

    def observables(self, k: int) -> ObservableSet:
        if self.P is None:
            raise ValueError(f"{self.engine} trajectory carries no band-resolved P")
        return ObservableSet(self.P[k], float(self.times[k]))

    def columns(self) -> tuple[list[str], np.ndarray]:
        s = self.n_system
        names, cols = ["t"], [self.times]
        if self.P is not None:
            nb = self.P.shape[-1]
            for a in range(nb):
                for i in range(s):
                    names.append(f"P_{i}{i}_{a + 1}")
                    cols.append(self.P[:, i, i, a].real)
            for a in range(nb):
                for i in range(s):
                    for j in range(i + 1, s):
                        names += [f"Re_P_{i}{j}_{a + 1}", f"Im_P_{i}{j}_{a + 1}"]
                        cols += [self.P[:, i, j, a].real, self.P[:, i, j, a].imag]
        for i in range(1, s):
            names.append(f"rho_{i}{i}")
            cols.append(self.rho_diag(i))
        for i in range(s):
            for j in range(i + 1, s):
                names.append(f"abs_rho_{i}{j}_sq")
                cols.append(self.abs_rho_sq(i, j))
        names.append("S_vN")
        cols.append(self.entropy())
        return names, np.column_stack(cols)

    def to_csv(self, path: str | Path) -> None:
        names, data = self.columns()
        with open(path, "w", newline="") as fh:
            fh.write(f"# engine = {self.engine}\n")
            for key, value in sorted(self.provenance.items()):
                fh.write(f"# {key} = {value}\n")
            writer = csv.writer(fh)
            writer.writerow(names)
            writer.writerows(data.tolist())


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a trajectory CSV keyed by header name."""
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    data = np.array([[float(x) for x in row] for row in reader if row])
    return {name: data[:, k] for k, name in enumerate(header)}


def propagate(eig: EigenSystem, psi0: np.ndarray, times: Sequence[float], layout: BasisLayout,
              provenance: dict | None = None, chunk: int = 256) -> Trajectory:
    """Exact trajectory of all ``P_ij,a`` on ``times``."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise SpecificationError("evolution times must be >= 0")
    psi0 = np.asarray(psi0, dtype=complex)
    P = np.empty((len(times), layout.n_system, layout.n_system, layout.n_bands), dtype=complex)
    for start in range(0, len(times), chunk):
        sl = slice(start, start + chunk)
        P[sl] = _measure_columns(_evolve_columns(eig, psi0, times[sl]), layout)
    return Trajectory.from_P(times, P, "exact", provenance)


def uniform_grid(t_max: float, dt: float) -> np.ndarray:
    if not (t_max > 0 and dt > 0):
        raise SpecificationError("time grid needs positive t_max and step")
    n = int(round(t_max / dt))
    return np.linspace(0.0, n * dt, n + 1)

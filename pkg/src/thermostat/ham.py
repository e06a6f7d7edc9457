"""Hilbert-space-average (HAM) predictions.

Golden-rule rate tables, the rate equations for ``P_ii,a`` and
``|P_ij,a|^2``, the discrete iteration they come from, the closed form for
the three-band model, the canonical reduction to ``rho_ii`` alone and the
Hilbert-average state ``alpha``.

Rate convention: ``gamma[i, m, a, b]`` is the rate *into* ``(i, a)`` *from*
``(m, b)``; the total rate out of ``(i, a)`` is ``sum_mb gamma[m, i, b, a]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import ReductionError, SpecificationError
from .model import BasisLayout, ModelSpec, classify_blocks, energy_shells
from .propagator import ObservableSet, Trajectory


@dataclass(frozen=True)
class RateTable:
    gamma: np.ndarray             # (S, S, B, B)
    band_sizes: tuple[int, ...]
    shells: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def n_system(self) -> int:
        return self.gamma.shape[0]

    @property
    def n_bands(self) -> int:
        return self.gamma.shape[2]

    @property
    def out_rates(self) -> np.ndarray:
        """Total decay rate of each ``(i, a)`` sector, shape ``(S, B)``."""
        return np.einsum("miba->ia", self.gamma)

    @property
    def f_slopes(self) -> np.ndarray:
        """``d Re f_im,ab / d tau = gamma_im,ab N_b / 2`` in the linear regime."""
        return 0.5 * self.gamma * np.asarray(self.band_sizes, dtype=float)[None, None, None, :]

    def shell_rates(self, shell) -> np.ndarray:
        """``gamma_im^E`` restricted to the sectors of one shell, indexed by member."""
        return np.array([[self.gamma[i, m, a, b] for (m, b) in shell] for (i, a) in shell])

    def shell_of(self, i: int, a: int) -> int:
        for k, shell in enumerate(self.shells):
            if (i, a) in shell:
                return k
        raise KeyError((i, a))

    def detailed_balance_error(self) -> float:
        n = np.asarray(self.band_sizes, dtype=float)
        lhs = self.gamma * n[None, None, None, :]
        rhs = np.transpose(self.gamma, (1, 0, 3, 2)) * n[None, None, :, None]
        scale = max(np.abs(lhs).max(), 1e-300)
        return float(np.abs(lhs - rhs).max() / scale)


def golden_rates(spec: ModelSpec, tolerance: float | None = None) -> RateTable:
    """``gamma_im,ab = 2 pi lambda^2 N_a / width`` for resonant blocks, else 0.

    ``width`` is the mean width of the two bands (the common width in the
    equal-width case), which keeps ``gamma_im,ab N_b = gamma_mi,ba N_a``.
    """
    s, nb = spec.n_system, spec.n_bands
    sizes = spec.band_sizes
    gamma = np.zeros((s, s, nb, nb))
    for cls in classify_blocks(spec, tolerance):
        i, j, a, b = cls.block.key
        width = 0.5 * (spec.bands[a].width + spec.bands[b].width)
        if width <= 0:
            raise SpecificationError("band width must be positive for a golden-rule rate")
        if not cls.resonant:
            continue
        lam2 = cls.block.strength ** 2
        gamma[i, j, a, b] = 2 * math.pi * lam2 * sizes[a] / width
        gamma[j, i, b, a] = 2 * math.pi * lam2 * sizes[b] / width
    shells = tuple(tuple(sh) for sh in energy_shells(spec, tolerance))
    return RateTable(gamma, sizes, shells)


def _split(P0: ObservableSet):
    P = np.asarray(P0.P, dtype=complex)
    pops = np.real(np.einsum("iia->ia", P)).copy()
    coh = np.abs(P) ** 2
    return P, pops, coh


def _assemble(P0: np.ndarray, pops: np.ndarray, coh: np.ndarray, coh0: np.ndarray) -> np.ndarray:
    """Band-resolved ``P`` from evolved populations and ``|P_ij,a|^2``.

    HAM fixes only magnitudes; the phase is held at its initial value.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(coh0 > 0, coh / np.where(coh0 > 0, coh0, 1.0), 0.0)
    P = P0[None] * np.sqrt(np.clip(ratio, 0.0, None))
    s = P0.shape[0]
    idx = np.arange(s)
    P[:, idx, idx, :] = pops
    return P


def _rhs(rates: RateTable):
    gamma = rates.gamma
    out = rates.out_rates
    s = rates.n_system
    offdiag = ~np.eye(s, dtype=bool)[:, :, None]

    def f(pops, coh):
        dpops = np.einsum("imab,mb->ia", gamma, pops) - out * pops
        dcoh = -coh * (out[:, None, :] + out[None, :, :]) * offdiag
        return dpops, dcoh

    return f


def integrate_rates(rates: RateTable, P0: ObservableSet, grid, max_step: float | None = None,
                    positivity_tol: float = 1e-9) -> Trajectory:
    """Classic fixed-step RK4 for the populations and squared coherences.

    The step is at most the grid spacing and ``1 / (50 * largest out-rate)``.
    """
    if np.any(rates.gamma < 0):
        raise RuntimeError("negative rate in rate table")
    grid = np.asarray(grid, dtype=float)
    P0c, pops, coh = _split(P0)
    if abs(pops.sum() - 1.0) > 1e-8:
        raise SpecificationError("initial populations must sum to one")
    coh0 = coh.copy()
    f = _rhs(rates)
    rmax = rates.out_rates.max()
    h_cap = 1.0 / (50.0 * rmax) if rmax > 0 else np.inf
    if max_step is not None:
        h_cap = min(h_cap, max_step)
    pops_out = np.empty((len(grid),) + pops.shape)
    coh_out = np.empty((len(grid),) + coh.shape)
    t = grid[0]
    pops_out[0], coh_out[0] = pops, coh
    for k in range(1, len(grid)):
        span = grid[k] - t
        n = max(1, int(math.ceil(span / h_cap - 1e-12)))
        h = span / n
        for _ in range(n):
            k1 = f(pops, coh)
            k2 = f(pops + 0.5 * h * k1[0], coh + 0.5 * h * k1[1])
            k3 = f(pops + 0.5 * h * k2[0], coh + 0.5 * h * k2[1])
            k4 = f(pops + h * k3[0], coh + h * k3[1])
            pops = pops + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            coh = coh + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if pops.min() < -positivity_tol or pops.max() > 1 + positivity_tol:
                raise RuntimeError("rate integration left [0, 1]; step too large")
        t = grid[k]
        pops_out[k], coh_out[k] = pops, coh
    P = _assemble(P0c, pops_out, coh_out, coh0)
    return Trajectory.from_P(grid, P, "ham-ode")


def iterate_map(rates: RateTable, P0: ObservableSet, tau: float, steps: int,
                correlation_time: float | None = None) -> Trajectory:
    """Iterate the finite-step HAM map with step ``tau``.

    Populations::

        P_ii,a += sum_mb 2 Re f_im,ab(tau) (P_mm,b / N_b - P_ii,a / N_a)

    Squared coherences::

        |P_ij,a|^2 *= 1 - (2 / N_a) sum_mb (Re f_jm,ab(tau) + Re f_im,ab(tau))

    with ``Re f(tau)`` from the rate table's linear slopes.  ``tau`` outside
    ``(tau_c, tau_d)`` only triggers a warning.
    """
    if not tau > 0:
        raise SpecificationError("iteration step tau must be positive")
    from .diagnostics import truncation_validity

    if correlation_time is not None and tau <= correlation_time:
        warnings.warn(f"tau = {tau:g} is not above the correlation time {correlation_time:g}", stacklevel=2)
    P0c, pops, coh = _split(P0)
    horizon = truncation_validity(rates, P0).min_horizon
    if tau > horizon:
        warnings.warn(f"tau = {tau:g} exceeds the Dyson truncation horizon {horizon:g}", stacklevel=2)
    coh0 = coh.copy()
    n = np.asarray(rates.band_sizes, dtype=float)
    re_f = rates.f_slopes * tau                      # (i, m, a, b)
    loss_pop = np.einsum("imab->ia", 2 * re_f) / n[None, :]
    decay = 2.0 / n[None, :] * np.einsum("imab->ia", re_f)   # (i, a): sum_mb Re f_im,ab * 2 / N_a
    s = rates.n_system
    offdiag = ~np.eye(s, dtype=bool)[:, :, None]
    pops_out = [pops]
    coh_out = [coh]
    for _ in range(int(steps)):
        gain = np.einsum("imab,mb->ia", 2 * re_f / n[None, None, None, :], pops)
        pops = pops + gain - loss_pop * pops
        coh = coh * (1.0 - (decay[:, None, :] + decay[None, :, :]) * offdiag)
        pops_out.append(pops)
        coh_out.append(coh)
    times = tau * np.arange(int(steps) + 1)
    P = _assemble(P0c, np.array(pops_out), np.array(coh_out), coh0)
    return Trajectory.from_P(times, P, "ham-map")


@dataclass(frozen=True)
class ThreeBandParams:
    """Parameters of the three-band decoherence model."""

    lam_can: float
    lam_mic: float = 0.0
    N: int = 500
    width: float = 0.5
    beta: float = 0.0

    def __post_init__(self):
        if not self.lam_can > 0:
            raise SpecificationError("canonical coupling must be positive")
        if self.N < 1 or self.lam_mic < 0 or self.width <= 0:
            raise SpecificationError("invalid three-band parameters")

    @property
    def xi(self) -> float:
        return self.lam_mic / self.lam_can

    @property
    def thermalization_time(self) -> float:
        return self.width / (4 * math.pi * self.lam_can ** 2 * self.N)

    @property
    def decoherence_time(self) -> float:
        return 2 * self.thermalization_time / (1 + self.xi ** 2)


def closed_form_three_band(p: ThreeBandParams, rho0, grid) -> tuple[Trajectory, float, float]:
    """Exponential solutions: population difference decays with ``T_th``,
    ``|rho_10|`` with ``T_dec = 2 T_th / (1 + xi^2)``."""
    rho0 = np.asarray(rho0, dtype=complex)
    grid = np.asarray(grid, dtype=float)
    t_th, t_dec = p.thermalization_time, p.decoherence_time
    rho = np.empty((len(grid), 2, 2), dtype=complex)
    r11 = 0.5 + (rho0[1, 1].real - 0.5) * np.exp(-grid / t_th)
    r10 = rho0[1, 0] * np.exp(-grid / t_dec)
    rho[:, 1, 1] = r11
    rho[:, 0, 0] = 1 - r11
    rho[:, 1, 0] = r10
    rho[:, 0, 1] = np.conj(r10)
    traj = Trajectory(grid, rho, None, "closed-form",
                      {"T_th": t_th, "T_dec": t_dec, "xi": p.xi})
    return traj, t_th, t_dec


@dataclass(frozen=True)
class ReducedRates:
    """Closed rate equations for the system populations alone::

        d rho_ii / dt = sum_m [forward[i, m] rho_mm - backward[i, m] rho_ii]
    """

    forward: np.ndarray
    backward: np.ndarray
    beta: float | None
    reason: str

    def generator(self) -> np.ndarray:
        return self.forward - np.diag(self.backward.sum(axis=1))

    def rhs(self, rho_diag) -> np.ndarray:
        return self.generator() @ np.asarray(rho_diag, dtype=float)

    def equilibrium(self) -> np.ndarray:
        w, v = np.linalg.eig(self.generator())
        k = int(np.argmin(np.abs(w)))
        p = np.real(v[:, k])
        return p / p.sum()


def _occupied_shells(rates: RateTable, P: ObservableSet, tol: float = 1e-12) -> list[int]:
    pops = P.populations
    return [k for k, shell in enumerate(rates.shells) if sum(pops[i, a] for i, a in shell) > tol]


def reduce_canonical(rates: RateTable, band_energies, system_energies, beta: float = 0.0,
                     band_dims=None, occupied: ObservableSet | None = None,
                     rtol: float = 1e-6) -> ReducedRates:
    """Close the rate equations on ``rho_ii``.

    Valid if only one energy shell is occupied, or if the shell rates
    ``gamma_im^E`` do not depend on ``E`` and ``N_a`` is proportional to
    ``exp(beta E_a)``.  Otherwise :class:`ReductionError` names the failed
    condition.
    """
    s = rates.n_system
    dims = np.asarray(band_dims if band_dims is not None else rates.band_sizes, dtype=float)
    band_energies = np.asarray(band_energies, dtype=float)
    system_energies = np.asarray(system_energies, dtype=float)

    def shell_matrix(shell):
        g = np.zeros((s, s))
        for (i, a) in shell:
            for (m, b) in shell:
                if i != m:
                    g[i, m] += rates.gamma[i, m, a, b]
        return g

    if occupied is not None:
        occ = _occupied_shells(rates, occupied)
        if len(occ) == 1:
            g = shell_matrix(rates.shells[occ[0]])
            return ReducedRates(g, g.T.copy(), None, "single occupied energy shell")

    log_n = np.log(dims) - beta * band_energies
    if np.ptp(log_n) > rtol * max(1.0, np.abs(np.log(dims)).max()):
        raise ReductionError(
            "band dimensions are not proportional to exp(beta * E_a) "
            f"(beta = {beta:g}); more than one energy shell is occupied")
    common = np.zeros((s, s))
    for i in range(s):
        for m in range(s):
            if i == m:
                continue
            values = []
            for shell in rates.shells:
                lv = {lvl for lvl, _ in shell}
                if i in lv and m in lv:
                    values.append(shell_matrix(shell)[i, m])
            if values:
                ref = max(abs(x) for x in values)
                if ref > 0 and max(values) - min(values) > rtol * ref:
                    raise ReductionError(
                        f"rates gamma_{i}{m}^E depend on the shell energy E "
                        f"(range {min(values):.6g} .. {max(values):.6g})")
                common[i, m] = values[0]
    backward = np.exp(beta * (system_energies[:, None] - system_energies[None, :])) * common
    return ReducedRates(common, backward, beta, "E-independent rates with exponential band dimensions")


def hilbert_average_state(P: ObservableSet, layout: BasisLayout) -> sp.csr_matrix:
    """``alpha = sum_ija (P_ji,a / N_a) |i><j| x Pi_a``."""
    Pm = np.asarray(P.P)
    rows, cols, vals = [], [], []
    s = layout.n_system
    for a, size in enumerate(layout.band_sizes):
        for i in range(s):
            ri = np.arange(layout.sector(i, a).start, layout.sector(i, a).stop)
            for j in range(s):
                coeff = Pm[j, i, a] / size
                if coeff == 0:
                    continue
                rj = np.arange(layout.sector(j, a).start, layout.sector(j, a).stop)
                rows.append(ri)
                cols.append(rj)
                vals.append(np.full(size, coeff, dtype=complex))
    if not rows:
        return sp.csr_matrix((layout.dim, layout.dim), dtype=complex)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(layout.dim, layout.dim))


def hilbert_average(S, P: ObservableSet, layout: BasisLayout) -> complex:
    """HAM guess ``tr(S alpha)`` for an operator ``S`` (dense or sparse)."""
    alpha = hilbert_average_state(P, layout)
    prod = alpha @ S if sp.issparse(S) else alpha @ np.asarray(S)
    return complex(prod.diagonal().sum())

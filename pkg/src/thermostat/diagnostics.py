"""Validity checks for the HAM reduction.

Bath correlation functions, the Dyson truncation horizon, the unrestricted
Hilbert-space variance, the HAM-vs-exact deviation ``D^2`` and a brute-force
check of the second-order trace identities on tiny models.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid, simpson, trapezoid

from .exceptions import SpecificationError
from .ham import RateTable
from .interaction import InteractionMatrix, sample_interaction
from .model import ModelSpec, build_local_hamiltonian, composite_projector
from .propagator import ObservableSet, Trajectory

TAU_C_THRESHOLD = 0.05
TAU_C_HOLD = 1.0


@dataclass
class CorrelationCurve:
    block: tuple[int, int, int, int]
    taus: np.ndarray
    g: np.ndarray
    g_spectral: np.ndarray
    coupling_sq_sum: float           # lambda^2 N_a N_b
    detuning: float
    width: float
    tau_c: float = math.nan
    f: np.ndarray | None = None
    slope: float = math.nan
    fit_window: tuple[float, float] | None = None

    @property
    def expected_slope(self) -> float:
        """Golden-rule slope ``pi lambda^2 N_a N_b / width`` of ``Re f``."""
        return math.pi * self.coupling_sq_sum / self.width

    @property
    def spectral_mismatch(self) -> float:
        return float(np.max(np.abs(self.g - self.g_spectral)) / max(abs(self.g[0]), 1e-300))


def _block_frequencies(spec: ModelSpec, block):
    i, j, a, b = block
    ea = spec.bands[a].level_energies()
    eb = spec.bands[b].level_energies()
    shift = spec.system.levels[i] - spec.system.levels[j]
    return ea, eb, shift


def extract_correlation_time(taus, g, threshold: float = TAU_C_THRESHOLD, hold: float = TAU_C_HOLD) -> float:
    """First ``tau`` after which ``|g| < threshold * |g(0)|`` for at least ``hold`` more time."""
    if abs(g[0]) == 0:
        return math.nan
    mag = np.abs(g) / abs(g[0])
    below = mag < threshold
    for k in np.flatnonzero(below):
        end = taus[k] + hold
        if end > taus[-1]:
            break
        window = (taus >= taus[k]) & (taus <= end)
        if below[window].all():
            return float(taus[k])
    return math.nan


def correlation_g(v: InteractionMatrix, spec: ModelSpec, block, taus) -> CorrelationCurve:
    """``g_ij,ab(tau) = tr_E{C_ij,ab(tau) C_ji,ba}`` computed two ways.

    The time-domain route sandwiches ``|C|^2`` between the diagonal band
    phase vectors; the spectral route groups the weights ``|<n_a|C|n_b>|^2``
    by transition frequency and sums ``W exp(i omega tau)``.
    """
    taus = np.asarray(taus, dtype=float)
    i, j, a, b = block
    c = v.view(i, j, a, b)
    ea, eb, shift = _block_frequencies(spec, block)
    if c is None:
        c = np.zeros((len(ea), len(eb)), dtype=complex)
    w = np.abs(c) ** 2
    # time domain: tr(e^{iH_a t} C e^{-iH_b t} C^dagger) e^{i(E_i - E_j) t}
    left = np.exp(1j * np.outer(taus, ea))
    right = np.exp(-1j * np.outer(taus, eb))
    g_time = np.einsum("tn,tn->t", left @ w, right) * np.exp(1j * shift * taus)
    # spectral sum over distinct frequencies
    omega = (shift + ea[:, None] - eb[None, :]).ravel()
    keys, inverse = np.unique(np.round(omega, 10), return_inverse=True)
    weights = np.bincount(inverse, weights=w.ravel(), minlength=len(keys))
    freq = np.bincount(inverse, weights=omega, minlength=len(keys)) / np.bincount(inverse, minlength=len(keys))
    g_spec = np.exp(1j * np.outer(taus, freq)) @ weights
    det = shift + spec.bands[a].mean_energy - spec.bands[b].mean_energy
    width = 0.5 * (spec.bands[a].width + spec.bands[b].width)
    curve = CorrelationCurve(tuple(block), taus, g_time, g_spec, float(w.sum()), det, width)
    curve.tau_c = extract_correlation_time(taus, g_time)
    return curve


def double_integral(taus, g) -> np.ndarray:
    """``f(tau) = int_0^tau dtau' int_0^tau' g`` by cumulative trapezoid."""
    inner = cumulative_trapezoid(g, taus, initial=0.0)
    return cumulative_trapezoid(inner, taus, initial=0.0)


def correlation_f(curve: CorrelationCurve, tau_c: float | None = None, fit: bool = True) -> CorrelationCurve:
    """Attach ``f`` and the least-squares slope of ``Re f`` over ``[2 tau_c, 10 tau_c]``."""
    taus = curve.taus
    curve.f = double_integral(taus, curve.g)
    if not fit:
        return curve
    tc = curve.tau_c if tau_c is None else tau_c
    if not math.isfinite(tc):
        raise SpecificationError("no correlation time available for the fit window")
    lo, hi = 2 * tc, 10 * tc
    if hi > taus[-1] + 1e-12:
        raise SpecificationError(f"fit window [{lo:g}, {hi:g}] exceeds the sampled range {taus[-1]:g}")
    step = np.max(np.diff(taus))
    if step > tc / 20 + 1e-12:
        raise SpecificationError(f"g sampled too coarsely (step {step:g} > tau_c / 20)")
    sel = (taus >= lo) & (taus <= hi)
    curve.slope = float(np.polyfit(taus[sel], curve.f[sel].real, 1)[0])
    curve.fit_window = (lo, hi)
    return curve


@dataclass
class TruncationReport:
    shells: list[tuple]
    total_rates: list[float]
    occupations: list[float]
    horizons: list[float]
    delta_slope: float
    correlation_time: float

    @property
    def min_horizon(self) -> float:
        occ = [h for h, p in zip(self.horizons, self.occupations) if p > 0]
        return min(occ, default=math.inf)

    @property
    def valid(self) -> bool:
        return all(h > self.correlation_time for h, p in zip(self.horizons, self.occupations) if p > 0)


def truncation_validity(rates: RateTable, P: ObservableSet, correlation_time: float = 0.0) -> TruncationReport:
    """Growth ``Delta(t, tau) / tau`` of the Dyson deviation and the
    per-shell horizon ``tau_d^E = N_S / sum_mi gamma_mi^E``."""
    pops = P.populations
    out = rates.out_rates
    totals, occs, horizons = [], [], []
    for shell in rates.shells:
        total = float(sum(out[i, a] for i, a in shell))
        occ = float(sum(pops[i, a] for i, a in shell))
        totals.append(total)
        occs.append(occ if occ > 1e-15 else 0.0)
        horizons.append(rates.n_system / total if total > 0 else math.inf)
    slope = float(np.sum(pops * out))
    return TruncationReport(list(rates.shells), totals, occs, horizons, slope, correlation_time)


def hilbert_variance(S) -> float:
    """Unrestricted Hilbert-space variance of ``<psi|S|psi>``:
    ``(tr(S^2)/N - (tr S / N)^2) / (N + 1)``."""
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("operator must be square")
    if not np.allclose(S, S.conj().T, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError("operator is not Hermitian")
    n = S.shape[0]
    tr = np.trace(S).real
    tr2 = np.vdot(S, S).real
    return float((tr2 / n - (tr / n) ** 2) / (n + 1))


def haar_variance_estimate(S, samples: int, rng: np.random.Generator, batch: int = 10000):
    """Monte Carlo variance of ``<psi|S|psi>`` over Haar states and its standard error."""
    S = np.asarray(S)
    n = S.shape[0]
    values = []
    for start in range(0, samples, batch):
        m = min(batch, samples - start)
        z = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        values.append(np.einsum("ki,ij,kj->k", z.conj(), S, z).real)
    x = np.concatenate(values)
    var = float(np.var(x, ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    se = math.sqrt(max(m4 - var ** 2 * (samples - 3) / (samples - 1), 0.0) / samples)
    return var, se


def _series(traj, observable):
    if isinstance(traj, Trajectory):
        return traj.times, observable(traj)
    times, values = traj
    return np.asarray(times, dtype=float), np.asarray(values, dtype=float)


def deviation_D2(exact, predicted, T1: float, nu: int = 3, observable=lambda tr: tr.rho_11) -> float:
    """Time-averaged squared deviation over ``[0, nu T1]`` (trapezoid rule).

    Arguments are trajectories or ``(times, values)`` pairs; differing grids
    are merged and both series interpolated linearly.
    """
    t_end = nu * T1
    if not t_end > 0:
        raise SpecificationError("averaging window must be positive")
    ta, ya = _series(exact, observable)
    tb, yb = _series(predicted, observable)
    for t in (ta, tb):
        if t[0] > 1e-12 or t[-1] < t_end * (1 - 1e-12):
            raise SpecificationError(f"trajectory does not cover [0, {t_end:g}]")
    if len(ta) == len(tb) and np.array_equal(ta, tb):
        grid = ta[ta <= t_end]
    else:
        grid = np.union1d(ta[ta <= t_end], tb[tb <= t_end])
    if grid[-1] < t_end:
        grid = np.append(grid, t_end)
    diff = np.interp(grid, ta, ya) - np.interp(grid, tb, yb)
    return float(trapezoid(diff ** 2, grid) / t_end)


@dataclass
class DysonReport:
    dims: tuple[int, ...]
    zeroth_order_exact: bool
    first_order_ratio: float
    second_order_residual: float
    converged: bool
    steps: int
    table: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.zeroth_order_exact and self.converged

    def summary(self) -> str:
        return "\n".join([
            f"model dims (N_S, N_a...): {self.dims}",
            f"[{'PASS' if self.zeroth_order_exact else 'FAIL'}] zeroth order equals delta_{{i'j}} delta_{{j'i}} delta_{{aa'}} N_a",
            f"[INFO] max |S1| / N_a = {self.first_order_ratio:.3e}",
            f"[INFO] second-order residual (relative) = {self.second_order_residual:.3e}",
            f"[{'PASS' if self.converged else 'FAIL'}] quadrature converged with {self.steps} Simpson intervals",
        ])


def _interaction_picture_integrals(h: np.ndarray, v: np.ndarray, t: float, tau: float, n: int):
    s = np.linspace(t, t + tau, n + 1)
    omega = h[:, None] - h[None, :]
    vt = v[None] * np.exp(1j * omega[None] * s[:, None, None])
    u1 = simpson(vt, x=s, axis=0)
    # cumulative_simpson drops imaginary parts, so integrate them separately
    w = (cumulative_simpson(vt.real, x=s, axis=0, initial=0.0)
         + 1j * cumulative_simpson(vt.imag, x=s, axis=0, initial=0.0))
    u2 = simpson(vt @ w, x=s, axis=0)
    return u1, u2


def _f_value(v: InteractionMatrix, spec: ModelSpec, block, tau: float, step: float) -> complex:
    if v.view(*block) is None:
        return 0.0
    n = max(2, int(math.ceil(tau / step)))
    taus = np.linspace(0.0, tau, n + 1)
    curve = correlation_f(correlation_g(v, spec, block, taus), fit=False)
    return complex(curve.f[-1])


def verify_dyson_trace(spec: ModelSpec, seed: int, t: float, tau: float,
                       quad_tol: float = 1e-5, max_dim: int = 64) -> DysonReport:
    """Brute-force ``tr(D2^dagger P_ij^a D2 P_i'j'^a')`` against the closed form.

    ``U1`` and the time-ordered ``U2`` come from Simpson quadrature of the
    interaction-picture ``V(s)`` on ``[t, t + tau]``; the step starts at
    ``min(tau_c / 50, period_min / 20)`` and is halved once to confirm
    convergence.
    """
    if spec.dim > max_dim:
        raise SpecificationError(f"brute-force check limited to dimension {max_dim}")
    v = sample_interaction(spec, seed)
    vd = v.to_dense()
    h = build_local_hamiltonian(spec)
    layout = spec.layout
    tau_c = 1.0 / min(b.width for b in spec.bands)
    omega_max = float(np.ptp(h)) or 1.0
    step = min(tau_c / 50, 2 * math.pi / omega_max / 20)
    n = 2 * max(1, int(math.ceil(tau / step / 2)))
    u1, u2 = _interaction_picture_integrals(h, vd, t, tau, n)
    u1b, u2b = _interaction_picture_integrals(h, vd, t, tau, 2 * n)
    converged = all(np.abs(x - y).max() <= quad_tol * np.abs(y).max() for x, y in ((u1, u1b), (u2, u2b)))
    u1, u2 = u1b, u2b

    S, B = spec.n_system, spec.n_bands
    labels = [(i, j, a) for a in range(B) for i in range(S) for j in range(S)]
    proj = {lab: composite_projector(layout, *lab).toarray() for lab in labels}
    fstep = step / 10  # trapezoid error in f stays far below the statistical residual
    fcache = {}

    def f(i, j, a, b):
        key = (i, j, a, b)
        if key not in fcache:
            fcache[key] = _f_value(v, spec, key, tau, fstep)
        return fcache[key]

    zeroth_ok = True
    s1_max = 0.0
    resid, s2_scale = 0.0, 0.0
    table = []
    sizes = spec.band_sizes
    for (i, j, a) in labels:
        p = proj[(i, j, a)]
        first = 1j * (u1 @ p - p @ u1)
        second = u1 @ p @ u1 - u2.conj().T @ p - p @ u2
        for (ip, jp, ap) in labels:
            pp = proj[(ip, jp, ap)]
            s0 = np.trace(p @ pp)
            s0_pred = sizes[a] if (ip == j and jp == i and ap == a) else 0
            zeroth_ok = zeroth_ok and s0 == s0_pred
            s1 = np.trace(first @ pp)
            s2 = np.trace(second @ pp)
            pred = 0.0
            if i == j and ip == jp:
                pred += 2 * f(i, ip, a, ap).real
            if jp == i and j == ip and ap == a:
                pred -= sum(np.conj(f(i, m, a, b)) + f(j, m, a, b) for m in range(S) for b in range(B))
            s1_max = max(s1_max, abs(s1) / sizes[a])
            resid = max(resid, abs(s2 - pred))
            s2_scale = max(s2_scale, abs(pred))
            table.append({"ij_a": (i, j, a), "ij_a_prime": (ip, jp, ap), "S0": float(s0.real),
                          "S1": complex(s1), "S2": complex(s2), "S2_closed_form": complex(pred)})
    rel = resid / s2_scale if s2_scale > 0 else (0.0 if resid == 0 else math.inf)
    return DysonReport((S,) + sizes, bool(zeroth_ok), s1_max, rel, converged, 2 * n, table)

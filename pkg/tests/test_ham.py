import math
import warnings

import numpy as np
import pytest

from thermostat.exceptions import ReductionError, SpecificationError
from thermostat.ham import (RateTable, ThreeBandParams, closed_form_three_band, golden_rates, hilbert_average,
                            hilbert_average_state, integrate_rates, iterate_map, reduce_canonical)
from thermostat.model import BandSpec, CouplingBlockSpec, ModelSpec, SystemSpec, composite_projector
from thermostat.presets import NINETY_TEN, three_band_model, two_band_model
from thermostat.propagator import InitialRecipe, ObservableSet, measure, sample_initial_state, uniform_grid

GAMMA_FIG1 = 1.5707963267948967e-3   # 2 pi (5e-4)^2 500 / 0.5, by hand
T_TH = 318.30988618379064           # 0.5 / (4 pi 2.5e-7 500), by hand


def populations_P(spec, pops, coh=None):
    S, B = spec.n_system, spec.n_bands
    P = np.zeros((S, S, B), dtype=complex)
    for (i, a), w in pops.items():
        P[i, i, a] = w
    for (i, j, a), c in (coh or {}).items():
        P[i, j, a] = c
        P[j, i, a] = np.conj(c)
    return ObservableSet(P)


def test_fig1_rate_value():
    rates = golden_rates(two_band_model())
    assert rates.gamma[0, 1, 1, 0] == pytest.approx(GAMMA_FIG1, rel=1e-12)
    assert rates.gamma[1, 0, 0, 1] == pytest.approx(GAMMA_FIG1, rel=1e-12)
    assert rates.gamma[0, 1, 0, 0] == 0 and rates.gamma[0, 1, 0, 1] == 0  # off-resonant blocks
    assert rates.detailed_balance_error() == 0


def test_rate_ratio_unequal_bands():
    spec = ModelSpec(SystemSpec((0.0, 25.0)), (BandSpec(0, 0.5, 250), BandSpec(25, 0.5, 500)),
                     (CouplingBlockSpec((0, 1), (1, 0), 1e-3),))
    g = golden_rates(spec).gamma
    assert g[1, 0, 0, 1] / g[0, 1, 1, 0] == pytest.approx(250 / 500)
    assert golden_rates(spec).detailed_balance_error() < 1e-15


def test_f_slopes_relation():
    rates = golden_rates(two_band_model())
    assert rates.f_slopes[0, 1, 1, 0] == pytest.approx(math.pi * 5e-4 ** 2 * 500 * 500 / 0.5)


def test_integrate_fig1_equilibrium_and_conservation():
    spec = two_band_model()
    rates = golden_rates(spec)
    P0 = populations_P(spec, {(1, 0): 1.0})
    tr = integrate_rates(rates, P0, uniform_grid(10 * T_TH, T_TH / 20))
    assert tr.rho_11[-1] == pytest.approx(0.5, abs=1e-4)
    np.testing.assert_allclose(np.einsum("tiia->t", tr.P).real, 1.0, atol=1e-8)
    # populations relax with the thermalization time
    k = np.searchsorted(tr.times, T_TH)
    assert tr.rho_11[k] - 0.5 == pytest.approx(0.5 * math.exp(-1), rel=1e-6)


def test_integrate_equilibrium_proportional_to_dimension():
    spec = ModelSpec(SystemSpec((0.0, 25.0)), (BandSpec(0, 0.5, 250), BandSpec(25, 0.5, 500)),
                     (CouplingBlockSpec((0, 1), (1, 0), 1e-3),))
    P0 = populations_P(spec, {(1, 0): 1.0})
    tr = integrate_rates(golden_rates(spec), P0, uniform_grid(5000, 10))
    assert tr.P[-1, 1, 1, 0].real == pytest.approx(250 / 750, abs=1e-6)
    assert tr.P[-1, 0, 0, 1].real == pytest.approx(500 / 750, abs=1e-6)


def test_zero_rates_constant():
    spec = two_band_model(lam=0.0, N=10, full_canonical=False)
    P0 = populations_P(spec, {(1, 0): 0.5, (0, 0): 0.5}, {(0, 1, 0): 0.5})
    tr = integrate_rates(golden_rates(spec), P0, uniform_grid(100, 1))
    np.testing.assert_array_equal(tr.P, np.broadcast_to(P0.P, tr.P.shape))
    mp = iterate_map(golden_rates(spec), P0, 1.0, 10)
    np.testing.assert_allclose(mp.abs_rho_sq(), 0.25)


def test_negative_rates_rejected():
    P0 = ObservableSet(np.array([[[1.0]]], dtype=complex))
    bad = RateTable(-np.ones((1, 1, 1, 1)), (1,), (((0, 0),),))
    with pytest.raises(RuntimeError):
        integrate_rates(bad, P0, [0.0, 1.0])


def test_coherence_monotone_and_phase_kept():
    spec = two_band_model()
    P0 = populations_P(spec, {(0, 0): 0.5, (1, 0): 0.5}, {(0, 1, 0): 0.5j})
    tr = integrate_rates(golden_rates(spec), P0, uniform_grid(3 * T_TH, 5))
    c = tr.abs_rho_sq()
    assert np.all(np.diff(c) <= 0)
    assert c[-1] == pytest.approx(0.25 * math.exp(-GAMMA_FIG1 * tr.times[-1]), rel=1e-8)
    assert np.allclose(tr.P[1:, 0, 1, 0].real, 0) and np.all(tr.P[1:, 0, 1, 0].imag > 0)


def test_map_agrees_with_ode():
    spec = three_band_model(1.0)
    rates = golden_rates(spec)
    P0 = measure(sample_initial_state(NINETY_TEN, 1, spec.layout), spec.layout)
    tau = T_TH / 100
    mp = iterate_map(rates, P0, tau, 500)
    ode = integrate_rates(rates, P0, mp.times)
    # the map evolves populations and squared coherence magnitudes
    sq = np.abs(mp.P[:, 0, 1]) ** 2 - np.abs(ode.P[:, 0, 1]) ** 2
    assert np.abs(sq).max() <= 1e-3
    assert np.abs(np.einsum("tiia->tia", mp.P - ode.P)).max() <= 1e-3


def test_map_fixed_point():
    spec = ModelSpec(SystemSpec((0.0, 25.0)), (BandSpec(0, 0.5, 250), BandSpec(25, 0.5, 500)),
                     (CouplingBlockSpec((0, 1), (1, 0), 1e-3),))
    P0 = populations_P(spec, {(1, 0): 1 / 3, (0, 1): 2 / 3})  # P / N equal across the shell
    mp = iterate_map(golden_rates(spec), P0, 5.0, 20)
    np.testing.assert_allclose(mp.P, np.broadcast_to(P0.P, mp.P.shape), atol=1e-15)


def test_map_validates_tau():
    spec = two_band_model(N=10, full_canonical=False)
    rates = golden_rates(spec)
    P0 = populations_P(spec, {(1, 0): 1.0})
    with pytest.raises(SpecificationError):
        iterate_map(rates, P0, 0.0, 3)
    with pytest.warns(UserWarning, match="correlation time"):
        iterate_map(rates, P0, 1.0, 3, correlation_time=2.0)
    with pytest.warns(UserWarning, match="horizon"):
        iterate_map(rates, P0, 1e6, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        iterate_map(rates, P0, 10.0, 3, correlation_time=2.0)


def test_closed_form_times():
    p = ThreeBandParams(5e-4)
    assert p.thermalization_time == pytest.approx(T_TH, rel=1e-12)
    assert p.decoherence_time == pytest.approx(2 * T_TH, rel=1e-12)
    assert ThreeBandParams(5e-4, 5e-4).decoherence_time == pytest.approx(T_TH, rel=1e-12)
    with pytest.raises(SpecificationError):
        ThreeBandParams(0.0)


@pytest.mark.parametrize("xi", [0.0, 1.0, 3.0])
def test_closed_form_matches_rate_equations(xi):
    spec = three_band_model(xi)
    P0 = measure(sample_initial_state(NINETY_TEN, 2, spec.layout), spec.layout)
    p = ThreeBandParams(5e-4, xi * 5e-4)
    grid = uniform_grid(6 * p.decoherence_time, p.decoherence_time / 50)
    cf, t_th, t_dec = closed_form_three_band(p, P0.rho, grid)
    ode = integrate_rates(golden_rates(spec), P0, grid)
    assert np.abs(cf.rho_11 - ode.rho_11).max() <= 1e-6
    assert np.abs(np.abs(cf.rho[:, 1, 0]) - np.abs(ode.rho[:, 1, 0])).max() <= 1e-6


def exponential_model():
    beta = math.log(2) / 25
    sizes = (100, 200, 400)
    bands = tuple(BandSpec(25.0 * k, 0.5, n) for k, n in enumerate(sizes))
    c = 1e-4
    blocks = (CouplingBlockSpec((0, 1), (1, 0), math.sqrt(c / sizes[1])),
              CouplingBlockSpec((0, 1), (2, 1), math.sqrt(c / sizes[2])))
    return ModelSpec(SystemSpec((0.0, 25.0)), bands, blocks), beta


def test_reduce_canonical_beta_zero():
    spec = two_band_model(N=50, full_canonical=False)
    red = reduce_canonical(golden_rates(spec), [0, 25], [0, 25], beta=0.0)
    assert red.equilibrium()[1] == pytest.approx(0.5)


def test_reduce_canonical_exponential_dimensions():
    spec, beta = exponential_model()
    red = reduce_canonical(golden_rates(spec), [0, 25, 50], [0, 25], beta=beta)
    eq = red.equilibrium()
    assert eq[1] / eq[0] == pytest.approx(0.5, rel=1e-9)
    np.testing.assert_allclose(red.rhs(eq), 0, atol=1e-15)


def test_reduce_canonical_refusals():
    spec, beta = exponential_model()
    with pytest.raises(ReductionError, match="proportional"):
        reduce_canonical(golden_rates(spec), [0, 25, 50], [0, 25], beta=0.0)
    flat = ModelSpec(spec.system, spec.bands, tuple(CouplingBlockSpec(b.system_pair, b.band_pair, 1e-3)
                                                    for b in spec.blocks))
    with pytest.raises(ReductionError, match="depend on the shell"):
        reduce_canonical(golden_rates(flat), [0, 25, 50], [0, 25], beta=beta)


def test_reduce_single_shell_always_valid():
    spec, _ = exponential_model()
    P = populations_P(spec, {(1, 0): 1.0})
    red = reduce_canonical(golden_rates(spec), [0, 25, 50], [0, 25], beta=5.0, occupied=P)
    assert "single" in red.reason
    assert red.equilibrium()[1] == pytest.approx(100 / 300)


def random_consistent_P(rng, S, B):
    X = rng.standard_normal((S, S, B)) + 1j * rng.standard_normal((S, S, B))
    P = X + np.conj(np.swapaxes(X, 0, 1))
    return P / np.einsum("iia->", P).real


def test_alpha_single_constraint(small_model):
    lay = small_model.layout
    P = np.zeros((2, 2, 2), dtype=complex)
    P[0, 0, 0] = 1
    alpha = hilbert_average_state(ObservableSet(P), lay)
    np.testing.assert_allclose(alpha.toarray(), composite_projector(lay, 0, 0, 0).toarray() / 6)
    assert alpha.diagonal().sum() == pytest.approx(1.0)


def test_alpha_round_trip_and_hermiticity(small_model, rng):
    lay = small_model.layout
    P = random_consistent_P(rng, 2, 2)
    alpha = hilbert_average_state(ObservableSet(P), lay).toarray()
    np.testing.assert_allclose(alpha, alpha.conj().T, atol=1e-15)
    for i in range(2):
        for j in range(2):
            for a in range(2):
                val = np.trace(alpha @ composite_projector(lay, i, j, a).toarray())
                assert abs(val - P[i, j, a]) < 1e-12
    assert np.trace(alpha) == pytest.approx(np.einsum("iia->", P))


def test_hilbert_average_formula(small_model, rng):
    lay = small_model.layout
    P = random_consistent_P(rng, 2, 2)
    S = rng.standard_normal((lay.dim, lay.dim))
    expected = sum(P[j, i, a] / lay.band_sizes[a] * np.trace(S @ composite_projector(lay, i, j, a).toarray())
                   for i in range(2) for j in range(2) for a in range(2))
    assert hilbert_average(S, ObservableSet(P), lay) == pytest.approx(expected, rel=1e-12)

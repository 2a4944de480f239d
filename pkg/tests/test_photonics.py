import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swingup.core import IntegratorSettings
from swingup.photonics import (
    ConvergenceError,
    EmissionMetrics,
    PulseTrainSpec,
    correlation_table,
    decay_superop,
    delta_train_count,
    emission_metrics,
    g1_two_time,
    g2_hom_two_time,
    g2_two_time,
    period_model,
    periodic_steady_state,
    photon_output,
)
from swingup.pulses import DeltaPulse, FmGaussian, TwoColor, mev

PI = math.pi

# [DERIVED] tests/oracles/oracle_photonics.py: dense Lindblad ODE with all
# correlation integrals carried along, Gauss-Legendre outer quadrature.
# gamma = 0.05 /ps, period 200 ps, Gaussian pulses with sigma = 1 ps.
ORACLE = {
    "resonant_pi": (FmGaussian(PI, 1.0, 0.0), (0.966300558190, 0.967028460739, 1.016694796286)),
    "detuned_3pi": (FmGaussian(3 * PI, 1.0, 0.8), (0.903938456550, 0.914840605537, 0.701532921881)),
}
ORACLE_TOL = 1e-8


def train(pulse, gamma=0.05, period=200.0, **kw):
    return PulseTrainSpec(pulse, period, gamma, **kw)


@pytest.mark.parametrize("name", sorted(ORACLE))
def test_figures_match_brute_force_oracle(name):
    pulse, (p, i, o) = ORACLE[name]
    m = emission_metrics(train(pulse))
    assert m.purity == pytest.approx(p, abs=ORACLE_TOL)
    assert m.indistinguishability == pytest.approx(i, abs=ORACLE_TOL)
    assert m.photon_output == pytest.approx(o, abs=ORACLE_TOL)


@given(st.floats(1e-3, 0.1), st.floats(100.0, 2e4))
def test_delta_train_is_ideal(gamma, period):
    # [TRIVIAL] instantaneous pi pulses: one perfect photon per excitation
    if gamma * period < 8:
        period = 9.0 / gamma
    m = emission_metrics(train(DeltaPulse(), gamma, period))
    assert m.purity == pytest.approx(1.0, abs=1e-12)
    assert m.indistinguishability == pytest.approx(1.0, abs=1e-12)
    assert m.photon_output == pytest.approx(1.0, abs=1e-12)


def test_delta_train_count_closed_form():
    # [TRIVIAL] rho_xx jumps to 1 - e^{-gT} after the kick then decays
    g, T = 0.01, 1000.0
    e = math.exp(-g * T)
    assert delta_train_count(g, T) == pytest.approx((1 - e) / (1 + e))
    m = emission_metrics(train(DeltaPulse(), g, T))
    assert m.raw["photons_per_period"] == pytest.approx(delta_train_count(g, T), rel=1e-12)


def test_delta_train_converges_in_few_periods():
    m = emission_metrics(train(DeltaPulse(), 1e-3, 1e4))
    assert m.raw["periods"] <= 3


def test_zero_delay_correlations():
    tr = train(FmGaussian(1.3 * PI, 1.0, 0.3))
    model = period_model(tr)
    for t in (-3.0, -0.7, 0.0, 1.1, 5.0, 40.0):
        # [TRIVIAL] no two photons at once; g1 at zero delay is the population
        assert g2_two_time(tr, t, 0.0) == pytest.approx(0.0, abs=1e-15)
        assert g1_two_time(tr, t, 0.0) == pytest.approx(model.state_at(t)[3].real, abs=1e-15)


def test_hom_correlation_at_zero_delay_vanishes():
    tr = train(FmGaussian(PI, 1.0))
    for t in (-1.0, 0.0, 2.0, 30.0):
        assert g2_hom_two_time(tr, t, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_far_delay_factorises():
    # pairs one period apart are uncorrelated once the coherence, which
    # decays at gamma / 2, is gone: G2(t, T) = rho_xx(t)^2
    tr = train(FmGaussian(PI, 1.0, 0.2), gamma=0.1, period=400.0)
    model = period_model(tr)
    for t in (-0.5, 0.0, 3.0):
        r = model.state_at(t)[3].real
        assert g2_two_time(tr, t, tr.period) == pytest.approx(r * r, rel=1e-6)


def test_period_model_is_periodic_and_physical():
    tr = train(FmGaussian(3 * PI, 1.0, 0.8))
    model = period_model(tr)
    assert model.trace_error < 1e-12
    assert model.min_eigenvalue > -1e-12
    x_next = model.propagate(model.x0, model.a, tr.period)
    assert np.max(np.abs(x_next - model.x0)) < 1e-10
    rho = periodic_steady_state(tr)
    assert rho.trace == pytest.approx(1.0, abs=1e-12)


def test_state_after_window_decays_freely():
    tr = train(FmGaussian(PI, 1.0))
    model = period_model(tr)
    end = model.states[-1]
    got = model.state_at(model.b + 17.0)
    assert np.allclose(got, decay_superop(tr.gamma, 17.0) @ end, atol=1e-15)


def test_propagate_many_matches_single_steps():
    tr = train(FmGaussian(2 * PI, 1.0, 0.5))
    model = period_model(tr)
    t = -1.3
    taus = np.array([0.0, 0.4, 3.0, 25.0, 199.0, 203.0, 410.0])
    x = model.state_at(t)
    many = model.propagate_many(x, t, taus)
    for k, tau in enumerate(taus):
        assert np.allclose(many[k], model.propagate(x, t, tau), atol=1e-13)


def test_no_convergence_raises():
    with pytest.raises(ConvergenceError):
        emission_metrics(train(DeltaPulse(), 1e-3, 1e4, max_periods=2))


def test_train_validation():
    with pytest.raises(ValueError, match="relax"):
        PulseTrainSpec(FmGaussian(PI, 1.0), 100.0, 0.01)
    with pytest.raises(ValueError, match="window"):
        PulseTrainSpec(FmGaussian(PI, 20.0), 300.0, 0.05)
    with pytest.raises(ValueError, match="positive"):
        PulseTrainSpec(FmGaussian(PI, 1.0), 300.0, 0.0)
    with pytest.raises(ValueError):
        PulseTrainSpec(FmGaussian(PI, 1.0), 300.0, 0.05, warmup_periods=5, max_periods=3)


def test_undriven_emitter_is_rejected():
    with pytest.raises(ValueError, match="does not excite"):
        emission_metrics(train(FmGaussian(0.0, 1.0)))


def test_metrics_containers():
    m = emission_metrics(train(FmGaussian(PI, 1.0)))
    assert isinstance(m, EmissionMetrics)
    d = m.as_dict()
    assert set(d) == {"purity", "indistinguishability", "photon_output", "raw"}
    pct = m.percent()
    assert pct["purity_percent"] == pytest.approx(100 * m.purity)
    assert photon_output(train(FmGaussian(PI, 1.0))) == m.photon_output


def test_results_converge_with_step():
    # halving the step barely moves the figures
    pulse = FmGaussian(3 * PI, 1.0, 0.8)
    a = emission_metrics(train(pulse, settings=IntegratorSettings(step=2e-3)))
    b = emission_metrics(train(pulse, settings=IntegratorSettings(step=1e-3)))
    assert abs(a.purity - b.purity) < 1e-7
    assert abs(a.indistinguishability - b.indistinguishability) < 1e-7


def test_correlation_table_shape_and_peaks():
    tr = train(FmGaussian(PI, 1.0))
    taus = np.array([0.0, 1.0, 5.0, 100.0, 200.0, 201.0])
    tab = correlation_table(tr, taus, stride=200, n_tail=40)
    assert tab.g2.shape == (6,) and tab.g2_hom.shape == (6,)
    assert tab.g2[0] == pytest.approx(0.0, abs=1e-15)
    # the side peak at one period dwarfs the zero-delay region
    assert tab.g2[4] > 10 * tab.g2[1]
    assert np.all(tab.g2 >= 0)
    with pytest.raises(ValueError):
        correlation_table(tr, [-1.0])


def test_correlation_table_export(tmp_path):
    tr = train(DeltaPulse())
    tab = correlation_table(tr, [0.0, 200.0], n_tail=20)
    tab.to_csv(tmp_path / "g.csv")
    tab.to_json(tmp_path / "g.json")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "tau [ps],G2,G2_HOM"
    assert len(lines) == 3


def test_figures_insensitive_to_period_once_relaxed():
    # gamma * T >= 8 leaves the figures unchanged at the 1e-5 level
    pulse = FmGaussian(PI, 2.4, 0.0)
    ref = emission_metrics(train(pulse, 1e-3, 4e4))
    for gT in (8, 10, 20):
        m = emission_metrics(train(pulse, 1e-3, gT * 1e3))
        assert abs(m.purity - ref.purity) < 3e-5
        assert abs(m.indistinguishability - ref.indistinguishability) < 3e-5
        assert abs(m.photon_output - ref.photon_output) < 1e-6


def test_two_color_train_relaxes_between_pulses():
    # gamma T = 10: the period starts in the ground state up to 1e-4
    pulse = TwoColor(22.65 * PI, 2.4, mev(-8), 19.29 * PI, 3.04, mev(-19.163), -0.73)
    model = period_model(train(pulse, 1e-3, 1e4))
    assert np.max(np.abs(model.x0 - np.array([1, 0, 0, 0]))) < 1e-4
    # the coherence left at the end of a period decays only at gamma / 2, so
    # a 1e-10 change between periods is first seen after the fourth one
    assert model.n_periods == 4
    assert model.residual < 1e-10


def test_side_peak_of_delta_train_is_count_squared():
    m = emission_metrics(train(DeltaPulse(), 1e-3, 1e4))
    assert m.raw["g2_side"] == pytest.approx(m.raw["count"] ** 2, rel=1e-4)
    assert m.raw["g2_central"] == pytest.approx(0.0, abs=1e-12 * m.raw["g2_side"])

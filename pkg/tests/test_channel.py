import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from manakov_nfdm.channel import (PropagationConfig, PropagationInstabilityError, ase_psd, edfa,
                                  measure_osnr_db, noise_loading, polarization_derotate,
                                  polarization_rotate, propagate_normalized, random_unitary,
                                  split_step, ssfm_manakov, transmit)
from manakov_nfdm.core import (PHYSICAL, DualPolSignal, FiberLink, TimeGrid, denormalize,
                               make_normalization, normalize, relative_l2)
from manakov_nfdm.darboux import one_soliton, synthesize
from manakov_nfdm.nft import find_eigenvalues


def physical_pulse(n=4096, width=2e-9, power=1e-3, seed=0):
    g = TimeGrid.centered(n, width)
    env = np.exp(-(g.t / 50e-12) ** 2) * np.sqrt(power)
    return DualPolSignal(g, env, 0.5j * env, PHYSICAL)


def test_lossless_energy_conserved():
    s = physical_pulse(power=50e-3)
    out = ssfm_manakov(s, FiberLink(alpha=0.0), distance=100.0)
    assert abs(out.energy() / s.energy() - 1) < 1e-10


def test_loss_matches_span_loss():
    s = physical_pulse()
    link = FiberLink()
    out = ssfm_manakov(s, link)
    db = 10 * np.log10(s.energy() / out.energy())
    assert abs(db - 8.0925) < 1e-9


def test_dispersion_only_keeps_spectrum_magnitude():
    s = physical_pulse(power=1e-12)
    out = ssfm_manakov(s, FiberLink(alpha=0.0), distance=300.0)
    assert np.allclose(np.abs(np.fft.fft(out.q1)), np.abs(np.fft.fft(s.q1)), atol=1e-12)
    # but the pulse did spread (dispersion length is about 113 km)
    assert np.abs(out.q1).max() < 0.5 * np.abs(s.q1).max()


def test_dispersion_matches_analytic_gaussian():
    # a Gaussian of width T broadens to T sqrt(1 + (beta2 z / T^2)^2)
    link = FiberLink(alpha=0.0)
    T = 20e-12
    g = TimeGrid.centered(8192, 2e-9)
    s = DualPolSignal(g, np.exp(-g.t ** 2 / (2 * T ** 2)) * 1e-9, np.zeros(8192), PHYSICAL)
    z = 30e3
    out = ssfm_manakov(s, link, distance=z / 1e3)
    widen = np.sqrt(1 + (link.beta2 * z / T ** 2) ** 2)
    p = np.abs(out.q1) ** 2
    rms = np.sqrt(np.sum(g.t ** 2 * p) / np.sum(p))
    assert np.isclose(rms, T * widen / np.sqrt(2), rtol=1e-6)


def test_fundamental_soliton_is_stationary():
    g = TimeGrid.centered(1024, 40.0)
    q1, q2 = one_soliton(g.t, 0.5j, 1.0, 1j)
    s = DualPolSignal(g, q1, q2)
    out = propagate_normalized(s, 2.0, 800)
    assert relative_l2(np.abs(out.q1), np.abs(s.q1)) < 1e-4
    # phase advances by 4 eta^2 z
    k = 512
    assert abs(np.angle(out.q1[k] / s.q1[k]) - np.angle(np.exp(1j * 4 * 0.25 * 2.0))) < 1e-3


def test_split_step_second_order(default_symbol):
    s = synthesize(default_symbol, TimeGrid.centered(2048, 60.0))
    ref = propagate_normalized(s, 0.5, 1600)
    errs = [relative_l2(propagate_normalized(s, 0.5, n).q1, ref.q1) for n in (25, 50, 100)]
    for e1, e2 in zip(errs, errs[1:]):
        assert 3 <= e1 / e2 <= 5


def test_physical_and_normalized_agree(plan, default_symbol):
    link = FiberLink(alpha=0.0)
    m = make_normalization(link, plan.T0)
    s = synthesize(default_symbol, TimeGrid.centered(1024, 40.0))
    d = 20.0
    cfg = PropagationConfig(step_size=d * 1e3 / 100, step_control="fixed")
    out = normalize(ssfm_manakov(denormalize(s, m), link, cfg, distance=d), m)
    ref = propagate_normalized(s, d * 1e3 / m.L0, 100)
    assert relative_l2(out.q1, ref.q1) < 1e-9 and relative_l2(out.q2, ref.q2) < 1e-9


def test_eigenvalues_survive_propagation(default_symbol):
    s = synthesize(default_symbol, TimeGrid.centered(4096, 60.0))
    out = propagate_normalized(s, 0.5, 800)
    r0 = find_eigenvalues(s, [0.3j, 0.6j])
    r1 = find_eigenvalues(out, [0.3j, 0.6j])
    assert np.allclose(r0, r1, atol=1e-4)


def test_instability_reported():
    g = TimeGrid.centered(64, 1.0)
    q = np.ones(64, complex)
    # enormous step with a negative "dispersion" that amplifies: forced blow up
    with pytest.raises(PropagationInstabilityError):
        split_step(q, q, g.dt, 1.0, 1, disp_coef=1j, nl_coef=0.0)


def test_step_counts():
    c = PropagationConfig(steps_per_span=100)
    assert c.n_steps(41.5e3, 41.5e3) == 100
    assert c.n_steps(83e3, 41.5e3) == 200
    f = PropagationConfig(step_size=1000.0, step_control="fixed")
    assert f.n_steps(41.5e3, 41.5e3) == 42
    with pytest.raises(ValueError):
        PropagationConfig(step_control="adaptive")


def test_ase_psd_values():
    hnu = 6.62607015e-34 * 2.99792458e8 / 1550e-9
    psd = ase_psd(20.0, 5.0, 2.99792458e8 / 1550e-9)
    assert np.isclose(psd, (10 ** 0.5 * 100 - 1) * hnu / 2)
    # NF G < 1 is unphysical: clip rather than subtract noise
    assert ase_psd(0.0, -100.0, 1.9e14) == 0.0


def test_edfa_gain_and_noise_statistics():
    g = TimeGrid(200000, 1e-12, 0.0)
    s = DualPolSignal.zeros(g, PHYSICAL)
    out = edfa(s, 20.0, 5.0, seed=3)
    var = np.mean(np.abs(out.q1) ** 2)
    want = ase_psd(20.0, 5.0, 2.99792458e8 / 1550e-9) / g.dt
    assert np.isclose(var, want, rtol=0.02)
    sig = physical_pulse()
    quiet = edfa(sig, 10.0, -200.0, seed=1)
    assert np.allclose(quiet.q1, sig.q1 * 10 ** 0.5)


def test_edfa_noise_scales_with_bandwidth():
    s1 = DualPolSignal.zeros(TimeGrid(100000, 2e-12, 0.0), PHYSICAL)
    s2 = DualPolSignal.zeros(TimeGrid(100000, 1e-12, 0.0), PHYSICAL)
    v1 = np.var(edfa(s1, 15.0, 5.0, seed=0).q1)
    v2 = np.var(edfa(s2, 15.0, 5.0, seed=0).q1)
    assert np.isclose(v2 / v1, 2.0, rtol=0.03)


def test_edfa_deterministic():
    s = physical_pulse()
    a, b = edfa(s, 10, 5, seed=7), edfa(s, 10, 5, seed=7)
    assert np.array_equal(a.q1, b.q1)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 30.0), st.integers(0, 1000))
def test_noise_loading_hits_target(osnr, seed):
    s = physical_pulse(n=1 << 16, width=2e-8)
    noisy = noise_loading(s, osnr, seed=seed)
    assert abs(measure_osnr_db(s, noisy) - osnr) < 0.1


def test_noise_loading_edge_cases():
    s = physical_pulse()
    assert noise_loading(s, np.inf) is s
    a = noise_loading(s, 10.0, seed=1)
    b = noise_loading(s, 10.0 - 10 * np.log10(2), seed=1)
    na = np.mean(np.abs(a.q1 - s.q1) ** 2)
    nb = np.mean(np.abs(b.q1 - s.q1) ** 2)
    assert np.isclose(nb / na, 2.0)
    with pytest.raises(ValueError):
        noise_loading(DualPolSignal.zeros(s.grid, PHYSICAL), 10.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_polarization_round_trip(seed):
    s = physical_pulse(n=256)
    U = random_unitary(seed)
    r = polarization_rotate(s, U)
    assert np.isclose(r.energy(), s.energy(), rtol=1e-12)
    back = polarization_derotate(r, U)
    assert relative_l2(back.q1, s.q1) < 1e-12 and relative_l2(back.q2, s.q2) < 1e-12


def test_non_unitary_rejected():
    with pytest.raises(ValueError):
        polarization_rotate(physical_pulse(n=16), np.array([[1, 0], [0, 2]]))


def test_rotation_commutes_with_propagation(default_symbol):
    # the Manakov system is invariant under constant unitary rotations
    s = synthesize(default_symbol, TimeGrid.centered(1024, 40.0))
    U = random_unitary(5)
    a = propagate_normalized(polarization_rotate(s, U), 0.3, 100)
    b = polarization_rotate(propagate_normalized(s, 0.3, 100), U)
    assert relative_l2(a.q1, b.q1) < 1e-12


def test_transmit_restores_power():
    link = FiberLink()
    s = physical_pulse(power=1e-6)
    out = transmit(s, link, 2, PropagationConfig(steps_per_span=20), noise_figure_db=-200)
    assert np.isclose(out.energy(), s.energy(), rtol=1e-9)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from manakov_nfdm import _accel
from manakov_nfdm._kernels import march, march_numba, march_numpy
from manakov_nfdm.channel import propagate_normalized
from manakov_nfdm.core import PHYSICAL, DiscreteSpectrum, DualPolSignal, SpectralEntry, TimeGrid
from manakov_nfdm.darboux import one_soliton, synthesize
from manakov_nfdm.nft import (find_eigenvalues, scatter, scatter_a, scatter_forward_only)
from manakov_nfdm.transceiver import map_bits

needs_numba = pytest.mark.skipif(not _accel.numba_installed, reason="numba not installed")


def soliton_signal(lam=0.5j, b1=1.0, b2=0.0, n=2048, width=40.0):
    g = TimeGrid.centered(n, width)
    q1, q2 = one_soliton(g.t, lam, b1, b2)
    return DualPolSignal(g, q1, q2)


def test_zero_field_is_transparent():
    s = DualPolSignal.zeros(TimeGrid.centered(300, 30.0))
    for lam in (0.3j, 1 + 0.1j, -0.5 + 2j):
        a, ap = scatter_a(s, lam)
        assert abs(a - 1) < 1e-13 and abs(ap) < 1e-12
        assert scatter_forward_only(s, lam) == (0, 0)


def test_soliton_eigenvalue_and_coefficients():
    s = soliton_signal(0.1 + 0.5j, np.exp(0.4j), 0.5j, n=8192)
    (lam,) = find_eigenvalues(s, [0.6j])
    assert abs(lam - (0.1 + 0.5j)) < 1e-6
    r = scatter(s, lam)
    assert abs(r.a) < 1e-9
    assert abs(r.b1 - np.exp(0.4j)) < 1e-4 and abs(r.b2 - 0.5j) < 1e-4


def test_a_prime_matches_finite_difference():
    s = soliton_signal(n=512)
    lam, h = 0.4 + 0.3j, 1e-6
    a, ap = scatter_a(s, lam)
    fd = (scatter_a(s, lam + h)[0] - scatter_a(s, lam - h)[0]) / (2 * h)
    assert abs(ap - fd) < 1e-6 * max(1, abs(ap))


def test_second_order_convergence():
    errs = []
    for n in (512, 1024, 2048, 4096):
        (lam,) = find_eigenvalues(soliton_signal(n=n), [0.55j], tol=1e-13)
        errs.append(abs(lam - 0.5j))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.8) & (ratios < 4.2))


def test_forward_backward_beats_forward_only(default_symbol):
    # wide window: the single forward march loses b to the growing mode
    g = TimeGrid.centered(6400, 100.0)
    s = synthesize(default_symbol, g)
    roots = find_eigenvalues(s, default_symbol.eigenvalues, tol=1e-12)
    lam = roots[1]
    want = default_symbol[1].b1
    fb = scatter(s, lam).b1
    fo = scatter_forward_only(s, lam)[0]
    assert abs(fb - want) < 1e-4
    assert abs(fo - want) > 10 * abs(fb - want)


def test_no_eigenvalues_in_weak_pulse():
    g = TimeGrid.centered(1024, 40.0)
    # area well below pi/2 carries no discrete spectrum
    s = DualPolSignal(g, 0.1 / np.cosh(g.t), np.zeros(1024))
    assert find_eigenvalues(s, [0.3j, 0.6j]) == []


def test_collided_pair_found_from_nominal_guesses():
    # two eigenvalues that left the imaginary axis, searched from on-axis guesses
    spec = DiscreteSpectrum((SpectralEntry(0.12 + 0.433j, np.exp(0.3j), 1j),
                             SpectralEntry(-0.12 + 0.433j, -1, np.exp(2j))))
    s = synthesize(spec, TimeGrid.centered(2048, 40.0))
    roots = find_eigenvalues(s, [0.3j, 0.6j])
    assert len(roots) == 2
    for e in spec:
        assert min(abs(r - e.lam) for r in roots) < 1e-3


def test_bad_inputs():
    s = soliton_signal(n=64)
    with pytest.raises(ValueError):
        find_eigenvalues(s, [-0.5j])
    with pytest.raises(ValueError):
        find_eigenvalues(s, [0.5j], tol=0)
    with pytest.raises(ValueError):
        scatter(s.replace(units=PHYSICAL), 0.5j)


@needs_numba
@settings(max_examples=20, deadline=None)
@given(st.integers(2, 400), st.floats(-1, 1), st.floats(0.05, 1.5), st.integers(0, 2 ** 31),
       st.booleans())
def test_backends_agree(n, re, im, seed, backwards):
    r = np.random.default_rng(seed)
    q1 = r.normal(size=n) + 1j * r.normal(size=n)
    q2 = r.normal(size=n) + 1j * r.normal(size=n)
    lam = complex(re, im)
    psi = r.normal(size=3) + 1j * r.normal(size=3)
    start, stop = (n - 1, 0) if backwards else (0, n - 1)
    args = (q1, q2, 0.05, lam, psi, np.zeros(3, complex), start, stop, True)
    p1, d1, s1 = march_numba(*args)
    p2, d2, s2 = march_numpy(*args)
    v1, v2 = p1 * np.exp(s1), p2 * np.exp(s2)
    w1, w2 = d1 * np.exp(s1), d2 * np.exp(s2)
    assert np.allclose(v1, v2, rtol=1e-9, atol=1e-12 * np.abs(v1).max())
    assert np.allclose(w1, w2, rtol=1e-8, atol=1e-10 * max(np.abs(w1).max(), 1e-300))


@needs_numba
def test_backends_agree_on_eigenvalues(default_symbol):
    s = synthesize(default_symbol, TimeGrid.centered(1024, 32.0))
    a = find_eigenvalues(s, [0.3j, 0.6j], use_numba=True)
    b = find_eigenvalues(s, [0.3j, 0.6j], use_numba=False)
    assert np.allclose(a, b, atol=1e-10)
    ra, rb = scatter(s, a[1], use_numba=True), scatter(s, a[1], use_numba=False)
    assert abs(ra.b1 - rb.b1) < 1e-8 and abs(ra.b2 - rb.b2) < 1e-8


def test_empty_march_is_identity():
    psi = np.array([1, 2, 3], dtype=complex)
    out, d, s = march(np.zeros(4), np.zeros(4), 0.1, 0.5j, psi, start=2, stop=2)
    assert np.array_equal(out * np.exp(s), psi)


@pytest.mark.parametrize("bits", [[0] * 8, [1, 1, 0, 1, 1, 0, 0, 1]])
def test_b_phase_evolves_linearly(plan, bits):
    sig = synthesize(map_bits(np.array(bits), plan), TimeGrid.centered(4096, 60.0))
    ref = [scatter(sig, lam) for lam in plan.eigenvalues]
    zs = np.array([0.1, 0.2, 0.3])
    phases = []
    for z in zs:
        out = propagate_normalized(sig, z, int(2000 * z))
        roots = find_eigenvalues(out, plan.eigenvalues, tol=1e-12)
        phases.append([np.angle(scatter(out, r).b1 / r0.b1) for r, r0 in zip(roots, ref)]
                      + [np.angle(scatter(out, r).b2 / r0.b2) for r, r0 in zip(roots, ref)])
    phases = np.unwrap(np.array(phases), axis=0)
    # measured law: b(z) = b(0) exp(4 i lam^2 z), i.e. slope -4 eta^2
    eta = np.imag(plan.eigenvalues)
    expected = -4 * np.concatenate([eta, eta]) ** 2
    for j in range(4):
        slope, icpt = np.polyfit(zs, phases[:, j], 1)
        assert abs(slope - expected[j]) < 1e-3
        assert np.max(np.abs(phases[:, j] - (slope * zs + icpt))) < 1e-4

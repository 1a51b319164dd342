import math

import numpy as np
import pytest

from _models import cavity, coupled_cavities
from u1corr.amplitude import (
    SQRT_2PI,
    AmplitudeRequest,
    Resolvent,
    amplitude_general,
    amplitude_multi_drive_kernel,
    amplitude_same_channel,
    amplitude_single_drive,
    engine_for,
    multi_drive_harmonics,
    resolvent_solve,
    single_drive_chain,
)
from u1corr.errors import GuardError, ModelError, SingularResolventError
from u1corr.model import ChannelSpec, CouplingTerm, DriveSpec, OperatorTerm, SiteSpec, SystemModel
from u1corr.space import h_eff_block


def kerr_pair():
    """Two coupled modes, one with a Kerr shift, four distinct ports."""
    return SystemModel(
        sites=(SiteSpec("a", "boson", 0.2), SiteSpec("b", "boson", -0.4)),
        couplings=(CouplingTerm("a", "b", 0.5 + 0.2j),),
        channels=(ChannelSpec("p", (("a", 0.6),)), ChannelSpec("q", (("b", 0.8),)),
                  ChannelSpec("r", (("a", 0.3), ("b", 0.4j))), ChannelSpec("s", (("b", 0.5),))),
        extra_terms=(OperatorTerm(0.9, ("a", "a"), ("a", "a")),),
    )


# -- resolvent -----------------------------------------------------------------

def test_scalar_resolvent_of_empty_cavity():
    wc, kappa, w, eps = 0.3, 1.0, -0.45, 1e-13
    K = Resolvent(np.array([[wc - 0.5j * kappa]]), w, eps)
    x = resolvent_solve(K, np.array([1.0]))
    assert x[0] == pytest.approx(1 / (-1j * (wc - 0.5j * kappa - w - 1j * eps)), rel=1e-15)


def test_hermitian_block_at_zero_frequency():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    H = A + A.conj().T + 6 * np.eye(4)
    rhs = rng.normal(size=4) + 1j * rng.normal(size=4)
    x = resolvent_solve(Resolvent(H, 0.0, 1e-15), rhs)
    np.testing.assert_allclose(x, 1j * np.linalg.solve(H, rhs), rtol=1e-12)


def test_jc_single_excitation_inverse_by_adjugate(jc):
    w = 0.37
    H = h_eff_block(jc, 1).data
    K = Resolvent(H, w, 1e-13)
    M = K.matrix()
    adj = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / (M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    cols = np.column_stack([resolvent_solve(K, e) for e in np.eye(2)])
    np.testing.assert_allclose(cols, adj, rtol=1e-12, atol=0)


def test_resolvent_solve_checks_dimension(jc):
    with pytest.raises(ModelError, match="dimension"):
        resolvent_solve(Resolvent(h_eff_block(jc, 1).data, 0.0, 1e-13), np.ones(3))


def test_singular_resolvent_is_reported_with_condition_estimate():
    # an undamped mode exactly on resonance with a negligible regulariser
    K = Resolvent(np.diag([1.0 - 0.5j, 0.0]), 0.0, 1e-30)
    with pytest.raises(SingularResolventError) as info:
        resolvent_solve(K, np.ones(2))
    assert info.value.rcond < 1e-15
    assert "reciprocal condition" in str(info.value)


def test_default_regulariser_keeps_dark_resonance_solvable():
    model = SystemModel(sites=(SiteSpec("a"), SiteSpec("d")),
                        channels=(ChannelSpec("in", (("a", 1.0),)), ChannelSpec("out", (("a", 1.0),))))
    # the mode "d" is dark and sits at omega = 0
    assert abs(amplitude_single_drive(model, 1, 0.0, "in", "out")) > 0


def test_regulariser_must_be_positive():
    with pytest.raises(ValueError):
        Resolvent(np.eye(2), 0.0, 0.0)


def test_epsilon_precedence(jc):
    eng = engine_for(jc)
    assert eng.epsilon(1, None) == pytest.approx(1e-13 * np.abs(h_eff_block(jc, 1).data).sum(axis=1).max())
    assert eng.epsilon(1, 3e-11) == 3e-11
    assert engine_for(jc.replace(epsilon=2e-12)).epsilon(1, None) == 2e-12


# -- amplitudes ----------------------------------------------------------------

def test_zero_photons_gives_unit_amplitude(jc):
    assert amplitude_general(jc, AmplitudeRequest((), ())) == 1
    assert amplitude_single_drive(jc, 0, 0.3, "cb", "cc") == 1


def test_request_length_mismatch():
    with pytest.raises(ModelError):
        AmplitudeRequest((("a", 0.0),), ())


@pytest.mark.parametrize("perm_in, perm_out", [((1, 0), (0, 1)), ((0, 1), (1, 0)), ((1, 0), (1, 0))])
def test_two_photon_permutation_symmetry(perm_in, perm_out):
    m = kerr_pair()
    inputs = (("p", 0.1), ("r", -0.3))
    outputs = ("q", "s")
    ref = amplitude_general(m, AmplitudeRequest(inputs, outputs))
    got = amplitude_general(m, AmplitudeRequest([inputs[i] for i in perm_in], [outputs[i] for i in perm_out]))
    assert abs(got - ref) <= 1e-12 * abs(ref)


def test_three_photon_permutation_symmetry_with_shared_channels():
    import itertools

    m = kerr_pair()
    inputs = (("p", 0.1), ("q", -0.3), ("p", 0.25))
    outputs = ("q", "s", "p")
    ref = amplitude_general(m, AmplitudeRequest(inputs, outputs))
    assert abs(ref) > 1e-6
    for pi in itertools.permutations(range(3)):
        for po in itertools.permutations(range(3)):
            got = amplitude_general(m, AmplitudeRequest([inputs[i] for i in pi], [outputs[i] for i in po]))
            assert abs(got - ref) <= 1e-12 * abs(ref)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_general_path_reduces_to_single_drive_chain(n):
    m = kerr_pair()
    w = 0.17
    general = amplitude_general(m, AmplitudeRequest([("p", w)] * n, ["q"] * n))
    chain = single_drive_chain(m, n, w, "p", "q")
    assert abs(general - math.factorial(n) * chain / SQRT_2PI**n) <= 1e-12 * abs(general)
    assert abs(amplitude_single_drive(m, n, w, "p", "q") - general) <= 1e-12 * abs(general)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_same_channel_path_matches_general(n):
    m = kerr_pair()
    general = amplitude_general(m, AmplitudeRequest([("r", -0.2)] * n, ["r"] * n))
    assert abs(amplitude_same_channel(m, n, -0.2, "r") - general) <= 1e-12 * abs(general)


@pytest.mark.parametrize("delta", [-2.0, 0.0, 0.4, 3.0])
def test_one_sided_cavity_reflects_everything(delta):
    model = SystemModel(sites=(SiteSpec("a", "boson", delta),), channels=(ChannelSpec("c", (("a", 1.0),)),))
    r = SQRT_2PI * amplitude_same_channel(model, 1, 0.0, "c")
    expected = (delta + 0.5j) / (delta - 0.5j)
    assert r == pytest.approx(expected, rel=1e-12)


def test_linear_cavity_amplitude_factorises():
    m = cavity(0.3, 0.7, omega=0.2)
    p1 = amplitude_single_drive(m, 1, -0.1, "in", "out")
    for n in range(2, 6):
        pn = amplitude_single_drive(m, n, -0.1, "in", "out")
        assert pn / math.factorial(n) == pytest.approx(p1**n, rel=1e-12)


def test_eps_stability_away_from_resonances():
    m = kerr_pair()
    for w in (-1.3, 0.05, 0.9):
        a = amplitude_general(m, AmplitudeRequest([("p", w), ("r", w)], ["q", "s"]), epsilon=1e-8)
        b = amplitude_general(m, AmplitudeRequest([("p", w), ("r", w)], ["q", "s"]), epsilon=1e-10)
        assert abs(a - b) < 1e-6 * abs(b)


def test_static_amplitude_modulus_is_time_independent():
    m = kerr_pair()
    mods = [abs(amplitude_general(m, AmplitudeRequest([("p", 0.3), ("q", 0.3)], ["r", "s"], time=t)))
            for t in (0.0, 0.7, 5.3)]
    np.testing.assert_allclose(mods, mods[0], rtol=1e-14)


# -- several drives ------------------------------------------------------------

def test_single_multi_drive_equals_single_drive_chain(jc):
    for n in (1, 2, 3):
        k = amplitude_multi_drive_kernel(jc, n, [DriveSpec("cb", 1.0, 0.4)], "cc", t=0.0)
        assert k == pytest.approx(single_drive_chain(jc, n, 0.4, "cb", "cc"), rel=1e-13)


def test_equal_frequency_drives_superpose_like_one_port(jc):
    """Two in-phase drives act like a single port with summed, weighted couplings."""
    eta = 0.7 - 0.4j
    xb, xe = math.sqrt(0.5), math.sqrt(0.1)
    # O^dagger conjugates channel weights, so eta enters conjugated
    probe = ChannelSpec("mix", (("a", xb), ("s", np.conj(eta) * xe)), contributes_decay=False)
    model = jc.replace(channels=jc.channels + (probe,))
    drives = [DriveSpec("cb", 1.0, 0.2), DriveSpec("eb", eta, 0.2)]
    for n in (1, 2, 3):
        k = amplitude_multi_drive_kernel(model, n, drives, "cc")
        assert k == pytest.approx(single_drive_chain(model, n, 0.2, "mix", "cc"), rel=1e-12)


def test_harmonics_are_grouped_by_total_frequency(jc):
    omegas, weights = multi_drive_harmonics(jc, 2, [DriveSpec("cb", 1, -0.5), DriveSpec("eb", 1, 0.5)], "cc")
    np.testing.assert_allclose(np.sort(omegas), [-1.0, 0.0, 1.0], atol=1e-15)
    assert weights.shape == (3,)


# -- guards ----------------------------------------------------------------------

def test_order_guards():
    m = cavity().replace(max_photons=12)
    with pytest.raises(GuardError, match="guard of 6"):
        amplitude_general(m, AmplitudeRequest([("in", 0.0)] * 7, ["out"] * 7))
    with pytest.raises(GuardError, match="guard of 10"):
        amplitude_single_drive(m, 11, 0.0, "in", "out")
    with pytest.raises(GuardError, match="max_photons"):
        amplitude_single_drive(cavity().replace(max_photons=3), 4, 0.0, "in", "out")


def test_multi_drive_term_limit(jc):
    drives = [DriveSpec("cb", 1, 0.0), DriveSpec("eb", 1, 1.0)]
    with pytest.raises(GuardError, match="term limit"):
        multi_drive_harmonics(jc, 3, drives, "cc", term_limit=7)


def test_unknown_and_coinciding_channels(jc):
    with pytest.raises(ModelError, match="unknown channel"):
        amplitude_single_drive(jc, 2, 0.0, "cb", "zz")
    with pytest.raises(ModelError, match="coincide"):
        amplitude_single_drive(jc, 2, 0.0, "cb", "cb")
    with pytest.raises(ModelError, match="unknown channel"):
        amplitude_general(jc, AmplitudeRequest([("zz", 0.0)], ["cc"]))


def test_coupled_cavity_transmission_by_hand():
    m = coupled_cavities(J=0.7, kappa=1.0, detuning=0.3)
    w = 0.1
    da, db = 0.0 - 0.5j - w, 0.3 - 0.5j - w
    # input on a, output on b, each port sqrt(kappa/2)
    expected = 0.5 * 1j * (-0.7) / (da * db - 0.49)
    assert SQRT_2PI * amplitude_single_drive(m, 1, w, "in", "out") == pytest.approx(expected, rel=1e-12)

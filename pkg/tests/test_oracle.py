import math

import numpy as np
import pytest

from _models import cavity, two_level
from u1corr import oracle
from u1corr.correlators import etcf, etcf_multi, etcf_same_channel
from u1corr.errors import CutoffError, ModelError, OracleError
from u1corr.library import dimer_jc_chain, jc_drives, jc_model, waveguide_dimer_chain
from u1corr.model import ChannelSpec, DriveSpec, OperatorTerm, SiteSpec, SystemModel
from u1corr.oracle import (
    FockCutoff,
    OutputField,
    build_liouvillian,
    correlator_from_state,
    evolve,
    oracle_g,
    slowest_decay_time,
    steady_state,
)


def driven_cavity(omega=0.0):
    return cavity(0.5, 0.5, omega).replace(drives=(DriveSpec("in", 1.0, 0.0),))


def kerr_cavity(U, delta):
    return SystemModel(
        sites=(SiteSpec("a", "boson", delta),),
        channels=(ChannelSpec("in", (("a", math.sqrt(0.5)),)), ChannelSpec("out", (("a", math.sqrt(0.5)),))),
        drives=(DriveSpec("in", 1.0, 0.0),),
        extra_terms=(OperatorTerm(U, ("a", "a"), ("a", "a")),),
    )


# -- steady state ----------------------------------------------------------------

def test_state_is_a_density_matrix():
    m = jc_model().replace(drives=jc_drives(jc_model(), "ce", 0.4, 2.0))
    rho = steady_state(build_liouvillian(m, 0.05, 4)).matrix()
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-13)
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-15)
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_linear_cavity_output_is_coherent():
    rho_g = oracle_g(driven_cavity(0.3), "out", 2, drive_amplitude=1e-3, cutoff=6)
    assert rho_g.value == pytest.approx(1.0, abs=1e-10)


def test_coherent_amplitude_matches_linear_response():
    # <a> = -i Omega sqrt(kappa_in) / (i (omega - w) + kappa / 2) in the drive frame
    Omega, delta = 2e-3, 0.3
    m = driven_cavity(delta)
    L = build_liouvillian(m, Omega, 6)
    rho = steady_state(L).matrix()
    a = L.space.lowering[0].toarray()
    expected = -1j * Omega * math.sqrt(0.5) / (1j * delta + 0.5)
    assert np.trace(a @ rho) == pytest.approx(expected, rel=1e-6)


def test_undriven_model_is_vacuum_and_undefined():
    m = cavity()
    L = build_liouvillian(m, 1e-3, 4, drives=())
    rho = steady_state(L)
    assert rho.matrix()[0, 0].real == pytest.approx(1.0)
    assert correlator_from_state(rho, L, m, "out", 2, drives=()).undefined


def test_two_level_output_is_antibunched():
    m = two_level().replace(drives=(DriveSpec("in", 1.0, 0.2),))
    res = oracle_g(m, "out", 2, drive_amplitude=1e-3)
    assert res.value == pytest.approx(0.0, abs=1e-14)


def test_non_unique_steady_state_is_reported():
    # a dark, undriven qubit keeps any initial population forever
    m = SystemModel(sites=(SiteSpec("a"), SiteSpec("q", "qubit")),
                    channels=(ChannelSpec("c", (("a", 1.0),)),), drives=(DriveSpec("c", 1.0, 0.0),))
    with pytest.raises(OracleError, match="not unique"):
        steady_state(build_liouvillian(m, 1e-2, 3))


def test_time_dependent_generator_has_no_steady_state(jc):
    L = build_liouvillian(jc, 1e-3, 4, drives=[DriveSpec("cb", 1, 0.0), DriveSpec("eb", 1, 0.5)])
    assert L.harmonics
    with pytest.raises(OracleError, match="static"):
        steady_state(L)


def test_non_positive_drive_amplitude_is_rejected(jc):
    with pytest.raises(ModelError):
        build_liouvillian(jc, -1e-3, 4)


# -- truncation ------------------------------------------------------------------

def test_cutoff_margin_check():
    with pytest.raises(CutoffError, match="below order"):
        FockCutoff(3).check_order(jc_model(), 2)
    FockCutoff(4).check_order(jc_model(), 2)
    assert FockCutoff(1).smallest(two_level()) == math.inf
    assert FockCutoff({"a": 7, "b": 3}, total=5).smallest(
        SystemModel(sites=(SiteSpec("a"), SiteSpec("b")))) == 3


def test_strong_drive_hits_the_truncation_edge():
    with pytest.raises(CutoffError, match="truncation edge"):
        steady_state(build_liouvillian(driven_cavity(), 3.0, 4))


def test_total_cutoff_restricts_the_space():
    m = dimer_jc_chain(2)
    full = oracle.FockSpace(m, FockCutoff(3))
    capped = oracle.FockSpace(m, FockCutoff(3, total=3))
    assert full.dim == 4 * 4 * 2
    assert capped.dim == sum(1 for s in full.states if s.sum() <= 3)
    assert capped.edge.sum() == sum(1 for s in capped.states if s.sum() == 3 or 3 in s[:2])


# -- agreement with the resolvent engine ----------------------------------------

@pytest.mark.parametrize("U, delta", [(0.4, 0.0), (-1.2, 0.7), (2.0, -0.3)])
def test_kerr_cavity_against_closed_form(U, delta):
    # H = delta a^+ a + U a^+ a^+ a a: g2 = |delta - i k/2|^2 / |delta + U - i k/2|^2
    m = kerr_cavity(U, delta)
    closed = abs(delta - 0.5j) ** 2 / abs(delta + U - 0.5j) ** 2
    assert etcf(m, 2, 0.0, "in", "out").value == pytest.approx(closed, rel=1e-12)
    assert oracle_g(m, "out", 2, drive_amplitude=1e-4, cutoff=5).value == pytest.approx(closed, rel=1e-6)


@pytest.mark.parametrize("scheme", ["c", "e", "ce"])
def test_jc_oracle_matches_engine(scheme):
    m = jc_model()
    for w in (-1.0, 0.0, 0.8):
        drives = jc_drives(m, scheme, w, 3.0)
        ref = (etcf(m, 2, w, drives[0].channel, "cc") if len(drives) == 1 else etcf_multi(m, 2, drives, "cc")).value
        got = oracle_g(m, "cc", 2, drive_amplitude=1e-4, cutoff=4, drives=drives).value
        assert got == pytest.approx(ref, rel=1e-5)


def test_weak_drive_error_scales_quadratically():
    m = jc_model()
    drives = jc_drives(m, "c", 0.0)
    ref = etcf(m, 2, 0.0, "cb", "cc").value
    errs = [abs(oracle_g(m, "cc", 2, drive_amplitude=a, cutoff=5, drives=drives).value - ref) / ref
            for a in (1e-2, 1e-3)]
    assert math.log10(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


def test_third_order_and_cross_correlation(jc):
    drives = jc_drives(jc, "c", 0.5)
    assert oracle_g(jc, "cc", 3, drive_amplitude=1e-4, cutoff=5, drives=drives).value == pytest.approx(
        etcf(jc, 3, 0.5, "cb", "cc").value, rel=1e-5)
    from u1corr.correlators import cross_correlation
    got = oracle_g(jc, ["cc", "ec"], drive_amplitude=1e-4, cutoff=4, drives=drives).value
    assert got == pytest.approx(cross_correlation(jc, ["cc", "ec"], 0.5, "cb").value, rel=1e-5)


@pytest.mark.parametrize("n_atoms, delta", [(1, 0.7), (2, -0.4), (3, 1.3)])
def test_waveguide_same_channel_includes_the_drive(n_atoms, delta):
    model, _ = waveguide_dimer_chain(n_atoms, d1=0.2, omega_d=delta)
    ref = etcf_same_channel(model, 2, delta, "R").value
    got = oracle_g(model, OutputField("R", include_drive=True), 2, drive_amplitude=1e-4).value
    assert got == pytest.approx(ref, rel=1e-5)


def test_dimer_chain_oracle_point():
    m = dimer_jc_chain(4)
    w = 0.3
    m = m.replace(drives=(DriveSpec(m.drives[0].channel, 1.0, w),))
    ref = etcf(m, 2, w, "loss_a1", "loss_a3").value
    got = oracle_g(m, "loss_a3", 2, drive_amplitude=1e-4, cutoff=FockCutoff(4, total=4)).value
    assert got == pytest.approx(ref, rel=1e-5)


def test_krylov_path_matches_dense(monkeypatch):
    m = dimer_jc_chain(2).replace(drives=(DriveSpec("loss_a1", 1.0, 0.2),))
    L = build_liouvillian(m, 1e-2, FockCutoff(4, total=4))
    dense = steady_state(L).matrix()
    monkeypatch.setattr(oracle, "DENSE_LIMIT", 0)
    krylov = steady_state(L).matrix()
    np.testing.assert_allclose(krylov, dense, rtol=0, atol=1e-13)


# -- time evolution ----------------------------------------------------------------

def test_evolution_relaxes_to_the_steady_state():
    m = jc_model().replace(drives=jc_drives(jc_model(), "c", 0.3))
    L = build_liouvillian(m, 1e-2, 4)
    tau = slowest_decay_time(m)
    states = evolve(L, None, [5 * tau, 40 * tau])
    for st in states:
        assert np.trace(st.matrix()).real == pytest.approx(1.0, abs=1e-8)
        assert np.real(np.diag(st.scaled) * st.weights**2).sum() == pytest.approx(st.norm)
    np.testing.assert_allclose(states[-1].matrix(), steady_state(L).matrix(), atol=1e-10)


def test_evolve_rejects_unsorted_grid(jc):
    with pytest.raises(ModelError):
        evolve(build_liouvillian(jc, 1e-3, 4), None, [2.0, 1.0])


def test_undamped_mode_has_no_relaxation_time():
    with pytest.raises(OracleError, match="undamped"):
        slowest_decay_time(SystemModel(sites=(SiteSpec("a"),)))


def test_two_frequency_evolution_follows_the_periodic_series(jc):
    from u1corr.correlators import multi_drive_series

    w1, w2 = math.pi / 4, -math.pi / 4
    drives = jc_drives(jc, "ce", w1, 1.0, w2)
    series = multi_drive_series(jc, 2, drives, "cc")
    L = build_liouvillian(jc, 1e-3, 4, drives=drives)
    t0 = 30 * slowest_decay_time(jc)
    t = t0 + np.linspace(0.0, series.period, 9)
    states = evolve(L, None, t, rtol=1e-11, atol=1e-13)
    got = np.array([correlator_from_state(st, L, jc, "cc", 2, drives=drives).value for st in states])
    np.testing.assert_allclose(got, series.values(t), rtol=1e-3)

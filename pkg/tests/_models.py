"""Small hand-checkable models shared by the test modules."""
import numpy as np

from u1corr.model import ChannelSpec, CouplingTerm, SiteSpec, SystemModel


def cavity(kappa_in=0.5, kappa_out=0.5, omega=0.0):
    """One linear cavity with separate drive and readout ports."""
    return SystemModel(
        sites=(SiteSpec("a", "boson", omega),),
        channels=(ChannelSpec("in", (("a", np.sqrt(kappa_in)),)), ChannelSpec("out", (("a", np.sqrt(kappa_out)),))),
    )


def two_level(gamma_in=0.5, gamma_out=0.5, omega=0.0):
    return SystemModel(
        sites=(SiteSpec("q", "qubit", omega),),
        channels=(ChannelSpec("in", (("q", np.sqrt(gamma_in)),)), ChannelSpec("out", (("q", np.sqrt(gamma_out)),))),
    )


def coupled_cavities(J=0.7, kappa=1.0, detuning=0.3):
    return SystemModel(
        sites=(SiteSpec("a", "boson", 0.0), SiteSpec("b", "boson", detuning)),
        couplings=(CouplingTerm("a", "b", J),),
        channels=(ChannelSpec("in", (("a", np.sqrt(kappa / 2)),)), ChannelSpec("out", (("b", np.sqrt(kappa / 2)),)),
                  ChannelSpec("la", (("a", np.sqrt(kappa / 2)),)), ChannelSpec("lb", (("b", np.sqrt(kappa / 2)),))),
    )

"""Photon correlations of weakly driven, excitation-conserving open systems.

The analytic path builds effective-Hamiltonian blocks per excitation number
(:mod:`u1corr.space`), chains resolvent solves into n-photon amplitudes
(:mod:`u1corr.amplitude`) and forms correlators from them
(:mod:`u1corr.correlators`). :mod:`u1corr.oracle` is an independent
master-equation reference and :mod:`u1corr.library` holds ready-made models.
"""
__version__ = "0.1.0"

from .errors import CutoffError, GuardError, ModelError, OracleError, SingularResolventError, U1CorrError
from .model import (
    ChannelSpec,
    CouplingTerm,
    DriveSpec,
    OperatorTerm,
    SiteSpec,
    SystemModel,
    load_model,
    dump_model,
    model_hash,
    validate_u1,
)
from .space import channel_lowering_block, enumerate_basis, h_eff_block, site_lowering_block
from .amplitude import (
    AmplitudeRequest,
    Resolvent,
    amplitude_general,
    amplitude_multi_drive_kernel,
    amplitude_same_channel,
    amplitude_single_drive,
    resolvent_solve,
)
from .correlators import (
    CorrelatorResult,
    cross_correlation,
    etcf,
    etcf_multi,
    etcf_same_channel,
    transmission,
    transmission_multi,
    transmission_same,
)

__all__ = [
    "__version__",
    "U1CorrError", "ModelError", "GuardError", "SingularResolventError", "CutoffError", "OracleError",
    "SiteSpec", "CouplingTerm", "ChannelSpec", "DriveSpec", "OperatorTerm", "SystemModel",
    "load_model", "dump_model", "model_hash", "validate_u1",
    "enumerate_basis", "site_lowering_block", "channel_lowering_block", "h_eff_block",
    "Resolvent", "resolvent_solve", "AmplitudeRequest", "amplitude_general", "amplitude_single_drive",
    "amplitude_multi_drive_kernel", "amplitude_same_channel",
    "CorrelatorResult", "etcf", "transmission", "etcf_multi", "transmission_multi", "cross_correlation",
    "etcf_same_channel", "transmission_same",
]

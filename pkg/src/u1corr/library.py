"""Prebuilt models and closed-form references.

Jaynes-Cummings
    One cavity ``a`` and one emitter ``s``. The cavity loss ``kappa`` is split
    between a drive port ``cb`` and a readout port ``cc``; the emitter loss
    ``gamma`` between ``eb`` and ``ec``. Drive ratios are quoted as ratios of
    Rabi amplitudes ``eta = Omega_e / Omega_c``; :func:`jc_drives` converts them
    into channel amplitudes.

Dimer JC chain
    ``N_c`` cavities with alternating hoppings 1 (inside a cell) and ``t``
    (between cells); emitter ``j`` sits on cavity ``2j - 1``. The switch ``s``
    picks the driven end: ``s = 1`` drives cavity 1, so counted from the drive
    the emitters occupy the odd cavities; ``s = 0`` drives cavity N_c, where
    they occupy the even ones. Every site has a local loss channel named
    ``loss_<site>``.

Emitter chain on a waveguide
    Two-level emitters side-coupled to a bidirectional waveguide with
    alternating spacings ``d1, d2`` (in wavelengths). Right- and left-moving
    channels ``R`` and ``L``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ModelError
from .model import (
    ChannelSpec,
    CouplingTerm,
    DriveSpec,
    SiteSpec,
    SystemModel,
    waveguide_from_geometry,
)

JC_SCHEMES = ("c", "e", "ce")


# ---------------------------------------------------------------------------
# Jaynes-Cummings
# ---------------------------------------------------------------------------

def jc_model(omega_c: float = 0.0, omega_e: float = 1.0, g: float = 0.6, kappa: float = 1.0,
             gamma: float = 0.2, kappa_split: float = 0.5, gamma_split: float = 0.5,
             max_photons: int = 6, drives: tuple[DriveSpec, ...] = ()) -> SystemModel:
    """``kappa_split`` is the fraction of ``kappa`` in the drive port (likewise for gamma)."""
    for name, v in (("kappa_split", kappa_split), ("gamma_split", gamma_split)):
        if not 0.0 < v < 1.0:
            raise ModelError(f"{name} must lie strictly between 0 and 1")
    if kappa <= 0 or gamma <= 0:
        raise ModelError("decay rates must be positive")
    return SystemModel(
        sites=(SiteSpec("a", "boson", omega_c), SiteSpec("s", "qubit", omega_e)),
        couplings=(CouplingTerm("a", "s", g),) if g != 0 else (),
        channels=(
            ChannelSpec("cb", (("a", math.sqrt(kappa * kappa_split)),)),
            ChannelSpec("cc", (("a", math.sqrt(kappa * (1 - kappa_split))),)),
            ChannelSpec("eb", (("s", math.sqrt(gamma * gamma_split)),)),
            ChannelSpec("ec", (("s", math.sqrt(gamma * (1 - gamma_split))),)),
        ),
        drives=tuple(drives),
        max_photons=max_photons,
    )


def _port_weight(model: SystemModel, channel: str) -> float:
    return abs(model.channel(channel).weights[0][1])


def jc_drives(model: SystemModel, scheme: str, omega_1: float, eta: float = 1.0,
              omega_2: float | None = None) -> tuple[DriveSpec, ...]:
    """Drives for the cavity (``c``), emitter (``e``) or combined (``ce``) scheme.

    ``eta`` is the Rabi-amplitude ratio emitter/cavity; since a port of weight
    ``xi`` turns channel amplitude ``alpha`` into ``Omega = xi * alpha`` the
    emitter channel amplitude is ``eta * xi_cb / xi_eb``.
    """
    if scheme not in JC_SCHEMES:
        raise ModelError(f"scheme must be one of {JC_SCHEMES}")
    omega_2 = omega_1 if omega_2 is None else omega_2
    cav = DriveSpec("cb", 1.0, omega_1)
    if scheme == "c":
        return (cav,)
    if scheme == "e":
        return (DriveSpec("eb", 1.0, omega_1),)
    ratio = eta * _port_weight(model, "cb") / _port_weight(model, "eb")
    return (cav, DriveSpec("eb", ratio, omega_2))


@dataclass(frozen=True)
class JcParams:
    omega_c: float = 0.0
    omega_e: float = 1.0
    g: float = 0.6
    kappa: float = 1.0
    gamma: float = 0.2
    eta: float = 3.0


@dataclass(frozen=True)
class JcClosedForm:
    """Complex detunings ``D_x = omega_x - i rate_x / 2 - omega_drive`` for two drive
    frequencies and the six coefficients of the two-frequency ``g^(2)(t)``."""

    dc1: complex
    de1: complex
    dc2: complex
    de2: complex
    g: float
    eta: float
    delta: float

    @classmethod
    def from_params(cls, p: JcParams, omega_1: float, omega_2: float) -> "JcClosedForm":
        wc = p.omega_c - 0.5j * p.kappa
        we = p.omega_e - 0.5j * p.gamma
        return cls(wc - omega_1, we - omega_1, wc - omega_2, we - omega_2, p.g, p.eta, omega_2 - omega_1)

    @property
    def dc_bar(self) -> complex:
        return 0.5 * (self.dc1 + self.dc2)

    @property
    def de_bar(self) -> complex:
        return 0.5 * (self.de1 + self.de2)

    def coefficients(self) -> tuple[complex, ...]:
        g2, eta, g = self.g**2, self.eta, self.g
        dc1, de1, dc2, de2 = self.dc1, self.de1, self.dc2, self.de2
        one1 = de1 * dc1 - g2
        one2 = de2 * dc2 - g2
        # two-excitation determinants at 2 w1, 2 w2 and w1 + w2
        two1 = dc1 * (dc1 + de1) - g2
        two2 = dc2 * (dc2 + de2) - g2
        mix = self.dc_bar * (self.dc_bar + self.de_bar) - g2
        c1 = (de1 * (de1 + dc1) + g2) / (one1 * two1)
        c2 = eta**2 * g2 / (one2 * two2)
        c3 = -eta * g * de1 / (one1 * mix)
        c4 = -eta * g * (2 * dc2 + de1) / (one2 * mix)
        c5 = de1 / one1
        c6 = -eta * g / one2
        return c1, c2, c3, c4, c5, c6


def jc_g2_closed(scheme: str, params: JcParams, omega_d):
    """Second-order correlation of the cavity output for a single drive frequency."""
    if scheme not in JC_SCHEMES:
        raise ModelError(f"scheme must be one of {JC_SCHEMES}")
    w = np.asarray(omega_d, dtype=float)
    dc = params.omega_c - 0.5j * params.kappa - w
    de = params.omega_e - 0.5j * params.gamma - w
    g2, g, eta = params.g**2, params.g, params.eta
    ge = np.abs(dc * de - g2) ** 2 / np.abs(dc * (dc + de) - g2) ** 2
    if scheme == "e":
        out = ge
    elif scheme == "c":
        out = ge * np.abs(de * (dc + de) + g2) ** 2 / np.abs(de) ** 4
    else:
        out = ge * np.abs(g2 - dc * (dc + de) + (dc + de - eta * g) ** 2) ** 2 / np.abs(de - eta * g) ** 4
    return out[()] if np.ndim(out) == 0 else out


def jc_g2_dynamical_closed(params: JcParams, omega_1: float, omega_2: float, t):
    """Two-frequency ``g^(2)(t)`` of the cavity output (cavity at ``omega_1``, emitter at ``omega_2``)."""
    cf = JcClosedForm.from_params(params, omega_1, omega_2)
    c1, c2, c3, c4, c5, c6 = cf.coefficients()
    ph = np.exp(-1j * cf.delta * np.asarray(t, dtype=float))
    out = np.abs(c1 + c2 * ph**2 + c3 * ph + c4 * ph) ** 2 / np.abs(c5 + c6 * ph) ** 4
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# dimer JC chain
# ---------------------------------------------------------------------------

def dimer_jc_chain(n_cavities: int = 8, t_hop: float = 0.5, s: int = 1, omega_c: float = 0.0,
                   omega_e: float = 0.0, g: float = 0.6, kappa: float = 1.0, gamma: float = 0.8,
                   omega_d: float = 0.0, drive_cavity: int | None = None, attach: int = 1,
                   max_photons: int = 6) -> SystemModel:
    """Cavities ``a1..aN`` and emitters ``q1..q{N/2}``; emitter j couples to cavity ``2j - attach``.

    The drive enters through the loss port of cavity 1 (``s = 1``) or cavity N
    (``s = 0``) unless ``drive_cavity`` overrides it. Use :func:`chain_ports` for
    the matching readout channel.
    """
    N = int(n_cavities)
    if N < 2 or N % 2:
        raise ModelError("the number of cavities must be even and at least 2")
    if s not in (0, 1) or attach not in (0, 1):
        raise ModelError("s and attach must be 0 or 1")
    cav = [f"a{j}" for j in range(1, N + 1)]
    atoms = [f"q{j}" for j in range(1, N // 2 + 1)]
    sites = [SiteSpec(c, "boson", omega_c) for c in cav] + [SiteSpec(q, "qubit", omega_e) for q in atoms]
    couplings = []
    for j in range(1, N // 2 + 1):
        couplings.append(CouplingTerm(f"a{2 * j - 1}", f"a{2 * j}", 1.0))
        if j < N // 2 and t_hop != 0:
            couplings.append(CouplingTerm(f"a{2 * j}", f"a{2 * j + 1}", t_hop))
        if g != 0:
            couplings.append(CouplingTerm(f"a{2 * j - attach}", f"q{j}", g))
    channels = [ChannelSpec(f"loss_{c}", ((c, math.sqrt(kappa)),)) for c in cav]
    channels += [ChannelSpec(f"loss_{q}", ((q, math.sqrt(gamma)),)) for q in atoms]
    din, _ = chain_ports(N, s)
    if drive_cavity is not None:
        din = f"loss_a{int(drive_cavity)}"
    return SystemModel(
        sites=tuple(sites), couplings=tuple(couplings), channels=tuple(channels),
        drives=(DriveSpec(din, 1.0, omega_d),), max_photons=max_photons,
    )


def chain_ports(n_cavities: int, s: int) -> tuple[str, str]:
    """(drive channel, readout channel): cavity 1 and N-1 for s=1, cavity N and 2 for s=0."""
    if s == 1:
        return "loss_a1", f"loss_a{n_cavities - 1}"
    return f"loss_a{n_cavities}", "loss_a2"


# ---------------------------------------------------------------------------
# emitter chain on a waveguide
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveguideGeometry:
    n_atoms: int
    d1: float
    d2: float
    gamma: float
    wavelength: float = 1.0

    @property
    def k(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def positions(self) -> np.ndarray:
        steps = [self.d1 if j % 2 == 0 else self.d2 for j in range(self.n_atoms - 1)]
        return np.concatenate([[0.0], np.cumsum(steps)]) * self.wavelength

    @property
    def closed_cells(self) -> bool:
        return math.isclose(self.d1 + self.d2, 1.0, rel_tol=0, abs_tol=1e-12)


def waveguide_dimer_chain(n_atoms: int = 20, d1: float = 0.25, d2: float | None = None, gamma: float = 1.0,
                          omega_e: float = 0.0, omega_d: float = 0.0, wavelength: float = 1.0,
                          max_photons: int = 6) -> tuple[SystemModel, WaveguideGeometry]:
    """Emitters ``q1..qN`` at alternating spacings ``d1, d2`` (in wavelengths), driven from the left."""
    if n_atoms < 1:
        raise ModelError("need at least one emitter")
    d2 = 1.0 - d1 if d2 is None else d2
    geo = WaveguideGeometry(int(n_atoms), float(d1), float(d2), float(gamma), float(wavelength))
    ids = [f"q{j}" for j in range(1, geo.n_atoms + 1)]
    wg = waveguide_from_geometry(geo.positions, geo.gamma, geo.k, ids)
    model = SystemModel(
        sites=tuple(SiteSpec(q, "qubit", omega_e) for q in ids),
        couplings=wg.couplings,
        channels=(wg.right, wg.left),
        drives=(DriveSpec("R", 1.0, omega_d),),
        max_photons=max_photons,
    )
    return model, geo


def waveguide_spectrum(geo: WaveguideGeometry) -> np.ndarray:
    """Single-excitation energies (relative to the emitter frequency) of the
    coherent exchange Hamiltonian when each unit cell spans one wavelength."""
    if not geo.closed_cells:
        raise ModelError("the band formula requires d1 + d2 = 1 wavelength")
    if geo.n_atoms % 2:
        raise ModelError("the band formula requires an even number of emitters")
    N = geo.n_atoms
    amp = geo.gamma * math.sin(geo.k * geo.d1 * geo.wavelength)
    m = np.arange(1, N, 2)
    e = np.abs(amp / (1 - np.exp(2j * np.pi * m / N)))
    return np.sort(np.concatenate([-e, e]))


# ---------------------------------------------------------------------------
# by-name construction (JSON "library" key, CLI)
# ---------------------------------------------------------------------------

def _build_jc(params: Mapping[str, Any]) -> SystemModel:
    p = dict(params)
    scheme = p.pop("scheme", None)
    omega_d = p.pop("omega_d", 0.0)
    eta = p.pop("eta", 1.0)
    omega_2 = p.pop("omega_2", None)
    model = jc_model(**p)
    if scheme is None:
        return model
    return model.replace(drives=jc_drives(model, scheme, omega_d, eta, omega_2))


def _build_waveguide(params: Mapping[str, Any]) -> SystemModel:
    return waveguide_dimer_chain(**params)[0]


_BUILDERS = {
    "jc": _build_jc,
    "dimer_jc_chain": lambda p: dimer_jc_chain(**p),
    "waveguide_dimer_chain": _build_waveguide,
}


def build_named(name: str, params: Mapping[str, Any] | None = None) -> SystemModel:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ModelError(f"unknown library model {name!r}; choose from {sorted(_BUILDERS)}") from None
    try:
        return builder(dict(params or {}))
    except TypeError as exc:
        raise ModelError(f"bad parameters for library model {name!r}: {exc}") from None


def library_names() -> list[str]:
    return sorted(_BUILDERS)

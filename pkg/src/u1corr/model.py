"""Declarative description of a U(1)-symmetric driven-dissipative system.

A model lists local sites (bosonic modes or two-level emitters), exchange
couplings between them, the channels (one-dimensional baths) that couple to
linear combinations of site lowering operators, and the coherent drives that
enter through those channels. Rates and frequencies share one user-chosen unit.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ModelError

SITE_KINDS = ("boson", "qubit")


@dataclass(frozen=True)
class SiteSpec:
    id: str
    kind: str = "boson"
    frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in SITE_KINDS:
            raise ModelError(f"site {self.id!r}: kind must be one of {SITE_KINDS}, got {self.kind!r}")
        if not math.isfinite(self.frequency):
            raise ModelError(f"site {self.id!r}: frequency must be finite")
        object.__setattr__(self, "frequency", float(self.frequency))


@dataclass(frozen=True)
class CouplingTerm:
    """``amplitude * o_i^dagger o_j + h.c.``"""

    site_i: str
    site_j: str
    amplitude: complex

    def __post_init__(self):
        if self.site_i == self.site_j:
            raise ModelError(f"coupling {self.site_i!r}-{self.site_j!r}: sites must differ")
        object.__setattr__(self, "amplitude", complex(self.amplitude))


@dataclass(frozen=True)
class ChannelSpec:
    """A bath coupled to ``o_ch = sum_j xi_j o_j``; ``xi`` is in sqrt-rate units,
    so a local channel of rate kappa on site k has weights ``((k, sqrt(kappa)),)``."""

    id: str
    weights: tuple[tuple[str, complex], ...]
    contributes_decay: bool = True

    def __post_init__(self):
        weights = tuple((str(s), complex(x)) for s, x in self.weights)
        if not weights:
            raise ModelError(f"channel {self.id!r} has no weights")
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class DriveSpec:
    channel: str
    relative_amplitude: complex = 1.0
    frequency: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "relative_amplitude", complex(self.relative_amplitude))
        object.__setattr__(self, "frequency", float(self.frequency))


@dataclass(frozen=True)
class OperatorTerm:
    """Normal-ordered product ``coefficient * prod(o_r^dagger) * prod(o_l)``.

    Extension hook for Hamiltonian terms beyond on-site energies and exchange
    couplings (Kerr terms, for instance). With ``add_conjugate`` the Hermitian
    conjugate is added as well; otherwise the term must be self-adjoint.
    """

    coefficient: complex
    raising: tuple[str, ...]
    lowering: tuple[str, ...]
    add_conjugate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "coefficient", complex(self.coefficient))
        object.__setattr__(self, "raising", tuple(self.raising))
        object.__setattr__(self, "lowering", tuple(self.lowering))
        if not self.add_conjugate:
            if sorted(self.raising) != sorted(self.lowering) or self.coefficient.imag != 0.0:
                raise ModelError(
                    "operator term without add_conjugate must be self-adjoint "
                    "(same raised and lowered sites, real coefficient)"
                )

    @property
    def excitation_change(self) -> int:
        return len(self.raising) - len(self.lowering)


@dataclass(frozen=True)
class SystemModel:
    sites: tuple[SiteSpec, ...]
    couplings: tuple[CouplingTerm, ...] = ()
    channels: tuple[ChannelSpec, ...] = ()
    drives: tuple[DriveSpec, ...] = ()
    max_photons: int = 6
    epsilon: float | None = None
    extra_terms: tuple[OperatorTerm, ...] = field(default=())

    def __post_init__(self):
        for name in ("sites", "couplings", "channels", "drives", "extra_terms"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        ids = [s.id for s in self.sites]
        if len(set(ids)) != len(ids):
            raise ModelError("site ids must be unique")
        known = set(ids)
        for c in self.couplings:
            for s in (c.site_i, c.site_j):
                if s not in known:
                    raise ModelError(f"coupling refers to unknown site {s!r}")
        ch_ids = [c.id for c in self.channels]
        if len(set(ch_ids)) != len(ch_ids):
            raise ModelError("channel ids must be unique")
        for ch in self.channels:
            for s, _ in ch.weights:
                if s not in known:
                    raise ModelError(f"channel {ch.id!r} refers to unknown site {s!r}")
        for d in self.drives:
            if d.channel not in ch_ids:
                raise ModelError(f"drive refers to unknown channel {d.channel!r}")
        for t in self.extra_terms:
            for s in t.raising + t.lowering:
                if s not in known:
                    raise ModelError(f"operator term refers to unknown site {s!r}")
        if int(self.max_photons) < 0:
            raise ModelError("max_photons must be non-negative")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ModelError("epsilon must be positive")

    # -- lookups -----------------------------------------------------------
    @property
    def site_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sites)

    def site_index(self, site_id: str) -> int:
        try:
            return self.site_ids.index(site_id)
        except ValueError:
            raise ModelError(f"unknown site {site_id!r}") from None

    def channel(self, channel_id: str) -> ChannelSpec:
        for ch in self.channels:
            if ch.id == channel_id:
                return ch
        raise ModelError(f"unknown channel {channel_id!r}")

    @property
    def is_qubit(self) -> np.ndarray:
        return np.array([s.kind == "qubit" for s in self.sites], dtype=bool)

    def replace(self, **changes) -> "SystemModel":
        from dataclasses import replace

        return replace(self, **changes)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def validate_u1(model: SystemModel) -> list[str]:
    """Return the Hamiltonian terms that break excitation-number conservation.

    On-site energies and exchange couplings conserve N by construction, so only
    the extension terms can appear in the report. An empty list means the model
    is U(1) symmetric.
    """
    violations = []
    for t in model.extra_terms:
        if t.excitation_change != 0:
            lhs = " ".join([f"{s}^+" for s in t.raising] + list(t.lowering))
            violations.append(f"{t.coefficient:g} * {lhs} changes N by {t.excitation_change:+d}")
    return violations


def require_u1(model: SystemModel) -> None:
    bad = validate_u1(model)
    if bad:
        raise ModelError("model breaks U(1) symmetry: " + "; ".join(bad))


def channel_lowering_coefficients(model: SystemModel, channel_id: str) -> list[tuple[int, complex]]:
    """Weights of ``o_ch`` resolved to site indices, merged and in site order."""
    ch = model.channel(channel_id)
    if not ch.weights:
        raise ModelError(f"channel {channel_id!r} has no weights")
    acc: dict[int, complex] = {}
    for s, xi in ch.weights:
        k = model.site_index(s)
        acc[k] = acc.get(k, 0j) + xi
    return sorted(acc.items())


def channel_weight_vector(model: SystemModel, channel_id: str) -> np.ndarray:
    vec = np.zeros(len(model.sites), dtype=complex)
    for k, xi in channel_lowering_coefficients(model, channel_id):
        vec[k] = xi
    return vec


def dissipation_matrix(model: SystemModel) -> np.ndarray:
    """``D[i, j] = sum_ch conj(xi_i) xi_j`` over decaying channels, so that the
    non-Hermitian part of the effective Hamiltonian is ``-i/2 sum_ij D_ij o_i^+ o_j``.
    Its diagonal holds the total decay rate of each site."""
    S = len(model.sites)
    D = np.zeros((S, S), dtype=complex)
    for ch in model.channels:
        if ch.contributes_decay:
            w = channel_weight_vector(model, ch.id)
            D += np.outer(w.conj(), w)
    return D


def total_decay_rates(model: SystemModel) -> np.ndarray:
    return dissipation_matrix(model).diagonal().real.copy()


@dataclass(frozen=True)
class WaveguideTerms:
    couplings: tuple[CouplingTerm, ...]
    right: ChannelSpec
    left: ChannelSpec
    decay_matrix: np.ndarray = field(compare=False)
    coherent_matrix: np.ndarray = field(compare=False)


def waveguide_from_geometry(positions: Sequence[float], gamma: float, k: float,
                            site_ids: Sequence[str] | None = None,
                            channel_ids: tuple[str, str] = ("R", "L")) -> WaveguideTerms:
    """Markovian couplings for emitters side-coupled to a bidirectional waveguide.

    Each emitter decays at ``gamma/2`` into each direction. The exchange part is
    ``(gamma/2) sin(k|x_i - x_j|)`` and the collective dissipation kernel is
    ``gamma cos(k|x_i - x_j|)``; the right/left channels carry phases
    ``exp(-+ i k x_j)``.
    """
    if not gamma > 0:
        raise ModelError("waveguide decay rate gamma must be positive")
    x = np.asarray(positions, dtype=float)
    N = x.size
    ids = list(site_ids) if site_ids is not None else [f"q{j + 1}" for j in range(N)]
    if len(ids) != N:
        raise ModelError("need one site id per position")
    sep = np.abs(x[:, None] - x[None, :])
    coherent = 0.5 * gamma * np.sin(k * sep)
    np.fill_diagonal(coherent, 0.0)
    decay = gamma * np.cos(k * sep)
    couplings = tuple(
        CouplingTerm(ids[i], ids[j], coherent[i, j])
        for i in range(N) for j in range(i + 1, N) if coherent[i, j] != 0.0
    )
    half = math.sqrt(gamma / 2)
    right = ChannelSpec(channel_ids[0], tuple((ids[j], half * np.exp(-1j * k * x[j])) for j in range(N)))
    left = ChannelSpec(channel_ids[1], tuple((ids[j], half * np.exp(1j * k * x[j])) for j in range(N)))
    return WaveguideTerms(couplings, right, left, decay, coherent)


# ---------------------------------------------------------------------------
# JSON model files
# ---------------------------------------------------------------------------

_COMPLEX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}

MODEL_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "oneOf": [
        {"required": ["sites"], "not": {"required": ["library"]}},
        {"required": ["library"], "not": {"required": ["sites"]}},
    ],
    "additionalProperties": False,
    "properties": {
        "sites": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "kind": {"enum": list(SITE_KINDS)},
                    "frequency": {"type": "number"},
                },
            },
        },
        "couplings": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["sites", "amplitude"],
                "additionalProperties": False,
                "properties": {
                    "sites": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                    "amplitude": _COMPLEX,
                },
            },
        },
        "channels": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "weights"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "weights": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "array",
                            "prefixItems": [{"type": "string"}, _COMPLEX],
                            "minItems": 2,
                            "maxItems": 2,
                        },
                    },
                    "contributes_decay": {"type": "boolean"},
                },
            },
        },
        "drives": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["channel"],
                "additionalProperties": False,
                "properties": {
                    "channel": {"type": "string"},
                    "amplitude": _COMPLEX,
                    "frequency": {"type": "number"},
                },
            },
        },
        "terms": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["coefficient", "raising", "lowering"],
                "additionalProperties": False,
                "properties": {
                    "coefficient": _COMPLEX,
                    "raising": {"type": "array", "items": {"type": "string"}},
                    "lowering": {"type": "array", "items": {"type": "string"}},
                    "add_conjugate": {"type": "boolean"},
                },
            },
        },
        "options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_photons": {"type": "integer", "minimum": 0},
                "epsilon": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "library": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
        },
    },
}


def _cx(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def _cx_out(z: complex):
    z = complex(z)
    return [z.real, z.imag]


def model_to_dict(model: SystemModel) -> dict[str, Any]:
    out: dict[str, Any] = {
        "sites": [{"id": s.id, "kind": s.kind, "frequency": s.frequency} for s in model.sites],
        "couplings": [{"sites": [c.site_i, c.site_j], "amplitude": _cx_out(c.amplitude)} for c in model.couplings],
        "channels": [
            {"id": ch.id, "weights": [[s, _cx_out(x)] for s, x in ch.weights], "contributes_decay": ch.contributes_decay}
            for ch in model.channels
        ],
        "drives": [
            {"channel": d.channel, "amplitude": _cx_out(d.relative_amplitude), "frequency": d.frequency}
            for d in model.drives
        ],
        "options": {"max_photons": int(model.max_photons), "epsilon": model.epsilon},
    }
    if model.extra_terms:
        out["terms"] = [
            {"coefficient": _cx_out(t.coefficient), "raising": list(t.raising),
             "lowering": list(t.lowering), "add_conjugate": t.add_conjugate}
            for t in model.extra_terms
        ]
    return out


def schema_errors(data: Any) -> list[str]:
    """Schema violations of a parsed model document, each prefixed by its JSON path."""
    import jsonschema

    validator = jsonschema.Draft202012Validator(MODEL_SCHEMA)
    return [f"{e.json_path}: {e.message}" for e in sorted(validator.iter_errors(data), key=lambda e: e.json_path)]


def model_from_dict(data: dict[str, Any]) -> SystemModel:
    errors = schema_errors(data)
    if errors:
        raise ModelError("invalid model document:\n  " + "\n  ".join(errors))
    if "library" in data:
        from . import library

        return library.build_named(data["library"]["name"], data["library"].get("params", {}))
    opts = data.get("options", {})
    return SystemModel(
        sites=tuple(SiteSpec(s["id"], s.get("kind", "boson"), s.get("frequency", 0.0)) for s in data["sites"]),
        couplings=tuple(CouplingTerm(c["sites"][0], c["sites"][1], _cx(c["amplitude"])) for c in data.get("couplings", [])),
        channels=tuple(
            ChannelSpec(ch["id"], tuple((w[0], _cx(w[1])) for w in ch["weights"]), ch.get("contributes_decay", True))
            for ch in data.get("channels", [])
        ),
        drives=tuple(
            DriveSpec(d["channel"], _cx(d.get("amplitude", 1.0)), d.get("frequency", 0.0)) for d in data.get("drives", [])
        ),
        max_photons=opts.get("max_photons", 6),
        epsilon=opts.get("epsilon"),
        extra_terms=tuple(
            OperatorTerm(_cx(t["coefficient"]), tuple(t["raising"]), tuple(t["lowering"]), t.get("add_conjugate", False))
            for t in data.get("terms", [])
        ),
    )


def load_model(path) -> SystemModel:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(data)


def dump_model(model: SystemModel, path=None) -> str:
    text = json.dumps(model_to_dict(model), indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


def model_hash(model: SystemModel) -> str:
    canon = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def iter_drives(model: SystemModel, drives: Iterable[DriveSpec] | None = None) -> tuple[DriveSpec, ...]:
    drives = tuple(model.drives if drives is None else drives)
    for d in drives:
        model.channel(d.channel)
    return drives

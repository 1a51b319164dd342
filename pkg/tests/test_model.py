import json
import math

import numpy as np
import pytest

from u1corr.errors import ModelError
from u1corr.library import jc_model
from u1corr.model import (
    ChannelSpec,
    CouplingTerm,
    DriveSpec,
    OperatorTerm,
    SiteSpec,
    SystemModel,
    channel_lowering_coefficients,
    dissipation_matrix,
    dump_model,
    load_model,
    model_from_dict,
    model_hash,
    model_to_dict,
    require_u1,
    schema_errors,
    total_decay_rates,
    validate_u1,
    waveguide_from_geometry,
)
from u1corr.space import blocks_for


def test_jc_is_u1_symmetric(jc):
    assert validate_u1(jc) == []


def test_empty_model_is_vacuously_symmetric():
    assert validate_u1(SystemModel(sites=())) == []


def test_pair_creation_term_is_reported():
    model = SystemModel(
        sites=(SiteSpec("a"), SiteSpec("b")),
        extra_terms=(OperatorTerm(0.1, (), ("a", "b"), add_conjugate=True),),
    )
    report = validate_u1(model)
    assert len(report) == 1 and "changes N by -2" in report[0]
    with pytest.raises(ModelError, match="U\\(1\\)"):
        require_u1(model)
    with pytest.raises(ModelError):
        blocks_for(model).h_sys(1)


def test_kerr_term_conserves_excitations():
    model = SystemModel(sites=(SiteSpec("a"),), extra_terms=(OperatorTerm(0.3, ("a", "a"), ("a", "a")),))
    assert validate_u1(model) == []
    # U a^+ a^+ a a on |n> gives U n (n - 1)
    assert blocks_for(model).h_sys(3).data[0, 0] == pytest.approx(0.3 * 6)


@pytest.mark.parametrize("build, message", [
    (lambda: SystemModel(sites=(SiteSpec("a"), SiteSpec("a"))), "unique"),
    (lambda: SiteSpec("a", "spin"), "kind"),
    (lambda: SiteSpec("a", "boson", math.inf), "finite"),
    (lambda: CouplingTerm("a", "a", 1.0), "differ"),
    (lambda: SystemModel(sites=(SiteSpec("a"),), couplings=(CouplingTerm("a", "b", 1.0),)), "unknown site"),
    (lambda: ChannelSpec("c", ()), "no weights"),
    (lambda: SystemModel(sites=(SiteSpec("a"),), channels=(ChannelSpec("c", (("z", 1.0),)),)), "unknown site"),
    (lambda: SystemModel(sites=(SiteSpec("a"),), drives=(DriveSpec("nope"),)), "unknown channel"),
    (lambda: SystemModel(sites=(SiteSpec("a"),), epsilon=0.0), "positive"),
    (lambda: OperatorTerm(1j, ("a",), ("a",)), "self-adjoint"),
])
def test_structural_errors(build, message):
    with pytest.raises(ModelError, match=message):
        build()


def test_channel_weights_merge_per_site():
    model = SystemModel(sites=(SiteSpec("a"), SiteSpec("b")),
                        channels=(ChannelSpec("c", (("b", 0.5), ("a", 1.0), ("b", 0.25j))),))
    assert channel_lowering_coefficients(model, "c") == [(0, 1.0), (1, 0.5 + 0.25j)]


def test_local_channel_weight_is_root_rate(jc):
    # kappa = 1 split evenly, gamma = 0.2 split evenly
    np.testing.assert_allclose(total_decay_rates(jc), [1.0, 0.2], rtol=1e-15)


def test_probe_channels_do_not_decay():
    model = SystemModel(sites=(SiteSpec("a"),),
                        channels=(ChannelSpec("p", (("a", 2.0),), contributes_decay=False),))
    assert total_decay_rates(model)[0] == 0.0


def test_json_round_trip_preserves_model_and_hash(tmp_path, jc):
    model = jc.replace(drives=(DriveSpec("cb", 1.0, 0.3), DriveSpec("eb", 2 - 1j, 0.3)), epsilon=1e-12,
                       extra_terms=(OperatorTerm(0.2, ("a", "a"), ("a", "a")),))
    path = tmp_path / "m.json"
    dump_model(model, path)
    again = load_model(path)
    assert again == model
    assert model_hash(again) == model_hash(model)
    assert model_to_dict(again) == model_to_dict(model)


def test_hash_changes_with_content(jc):
    assert model_hash(jc) != model_hash(jc.replace(max_photons=5))


def test_minimal_document_defaults():
    model = model_from_dict({"sites": [{"id": "a"}], "channels": [{"id": "c", "weights": [["a", 1]]}]})
    assert model.sites[0].kind == "boson" and model.sites[0].frequency == 0.0
    assert model.max_photons == 6 and model.epsilon is None
    assert model.channels[0].contributes_decay is True


@pytest.mark.parametrize("doc, path", [
    ({"sites": [{"id": 3}]}, "$.sites[0].id"),
    ({"sites": [{"id": "a", "kind": "fermion"}]}, "$.sites[0].kind"),
    ({"sites": [{"id": "a"}], "channels": [{"id": "c", "weights": [["a", [1, 2, 3]]]}]}, "$.channels[0].weights[0][1]"),
    ({"sites": [{"id": "a"}], "options": {"max_photons": -1}}, "$.options.max_photons"),
    ({"sites": [], "bogus": 1}, "$"),
    ({"couplings": []}, "$"),
])
def test_schema_errors_carry_json_path(doc, path):
    errors = schema_errors(doc)
    assert errors and any(e.startswith(path + ":") for e in errors)
    with pytest.raises(ModelError, match="invalid model document"):
        model_from_dict(doc)


def test_library_document_builds_named_model():
    model = model_from_dict({"library": {"name": "jc", "params": {"scheme": "c", "omega_d": 0.5}}})
    assert [d.channel for d in model.drives] == ["cb"]
    assert model.drives[0].frequency == 0.5


def test_load_model_rejects_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ModelError, match="not valid JSON"):
        load_model(p)


@pytest.mark.parametrize("spacing", [0.1, 0.25, 0.37])
def test_waveguide_terms_invariants(spacing):
    x = np.array([0.0, spacing, 1.0, 1.0 + spacing, 2.3])
    terms = waveguide_from_geometry(x, 0.8, 2 * np.pi)
    D, C = terms.decay_matrix, terms.coherent_matrix
    assert np.array_equal(C, C.T) and np.array_equal(D, D.T)
    assert np.linalg.eigvalsh(D).min() > -1e-12
    model = SystemModel(sites=tuple(SiteSpec(f"q{j + 1}", "qubit") for j in range(len(x))),
                        couplings=terms.couplings, channels=(terms.right, terms.left))
    # the two directional channels rebuild the cos kernel
    np.testing.assert_allclose(dissipation_matrix(model), D, rtol=0, atol=1e-14)
    np.testing.assert_allclose(total_decay_rates(model), 0.8, rtol=1e-14)


def test_waveguide_rejects_non_positive_rate():
    with pytest.raises(ModelError):
        waveguide_from_geometry([0.0, 0.5], 0.0, 1.0)


def test_models_are_hashable_values(jc):
    assert jc == jc_model()
    assert len({jc, jc_model()}) == 1
    json.dumps(model_to_dict(jc))

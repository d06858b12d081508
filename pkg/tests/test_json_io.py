import json
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qthermo.common.errors import NotNormalized, SchemaError
from qthermo.common.opalg import Tolerances
from qthermo.data_io import generators, json_io
from qthermo.maps import qmaps
from qthermo.measure import measurements, processes
from qthermo.measure.hierarchy import Membership

SHARE_DIR = os.path.dirname(os.path.dirname(json_io.SCHEMA_PATH))


def test_bundled_documents_are_valid():
    for name, kind in (
        ("depolarize_to_pure", "cp_map"),
        ("rank_drop_d3", "cp_map"),
        ("qutrit_remark_instrument", "instrument"),
    ):
        path = os.path.join(SHARE_DIR, "data", name + ".json")
        obj = json_io.load(path, expected_kind=kind)
        built = generators.build(name)
        if kind == "cp_map":
            assert qmaps.maps_close(obj, built)
        else:
            for label, op in obj.items():
                assert qmaps.maps_close(op, built.operation(label))


def test_missing_field_reports_path():
    doc = {"kind": "cp_map", "dim_in": 2, "dim_out": 2}
    with pytest.raises(SchemaError) as info:
        json_io.parse(doc)
    assert info.value.path == "/"


def test_bad_complex_entry_reports_path():
    doc = json_io.serialize(qmaps.identity_map(2))
    doc["kraus"][0][1][0] = [0.0, 0.0, 1.0]
    with pytest.raises(SchemaError) as info:
        json_io.parse(doc)
    assert info.value.path == "/kraus/0/1/0"


def test_unknown_kind_and_wrong_expected_kind():
    with pytest.raises(SchemaError) as info:
        json_io.parse({"kind": "banana"})
    assert info.value.path == "/kind"
    doc = json_io.serialize(qmaps.identity_map(2))
    with pytest.raises(SchemaError):
        json_io.parse(doc, expected_kind="instrument")


def test_extra_fields_are_rejected():
    doc = json_io.serialize(qmaps.identity_map(2))
    doc["comment"] = "not allowed"
    with pytest.raises(SchemaError):
        json_io.validate_document(doc)


def test_ragged_matrix_is_a_schema_error():
    with pytest.raises(SchemaError):
        json_io.decode_matrix([[[1, 0]], [[0, 0], [1, 0]]], path="/xi")


def test_semantic_errors_pass_through_decoding():
    doc = json_io.serialize(
        measurements.Observable(("0", "1"), (np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    )
    doc["effects"][1] = json_io.encode_matrix(np.diag([0.0, 0.5]))
    with pytest.raises(NotNormalized):
        json_io.parse(doc)


def _round_trip(obj):
    return json_io.parse(json.loads(json_io.dumps(json_io.serialize(obj))))


@pytest.mark.parametrize("seed", range(8))
def test_random_corpus_round_trip(seed):
    ch = generators.random_channel(seed=seed, dim=2 + seed % 2, kraus_rank=1 + seed % 3)
    assert qmaps.maps_close(_round_trip(ch), ch)

    inst = generators.random_instrument(
        seed=seed, outcomes=2 + seed % 2, dim=2, kraus_rank=1 + seed % 2
    )
    back = _round_trip(inst)
    assert back.labels == inst.labels
    for label, op in inst.items():
        assert qmaps.maps_close(back.operation(label), op)

    for p in (processes.dilate_weak_third(inst), processes.stinespring_process(inst)):
        back = _round_trip(p)
        assert back.labels == p.labels
        assert_allclose(back.xi, p.xi, atol=1e-15)
        assert qmaps.maps_close(back.interaction, p.interaction)
        for label in p.labels:
            assert qmaps.maps_close(
                processes.induced_operation(back, label), processes.induced_operation(p, label)
            )

    rng = np.random.default_rng(seed)
    tol = Tolerances(**{name: 10 ** rng.uniform(-12, -4) for name in Tolerances().to_dict()})
    assert _round_trip(tol) == tol


def test_process_document_round_trip():
    p = processes.swap_process(np.full((2, 2), 0.5), np.diag([0.6, 0.4]))
    back = json_io.parse(json.loads(json_io.dumps(json_io.serialize(p, name="swap"))))
    assert back.labels == p.labels
    assert_allclose(back.xi, p.xi)
    assert qmaps.maps_close(processes.induced_operation(back, "1"), processes.induced_operation(p, "1"))


def test_tolerances_document():
    tol = Tolerances(ds_eps=1e-8)
    back = json_io.parse(json_io.serialize(tol))
    assert back == tol


def test_write_and_load(tmp_path, qutrit_instrument):
    path = tmp_path / "inst.json"
    json_io.write_json(str(path), qutrit_instrument)
    back = json_io.load(str(path), expected_kind=("instrument",))
    assert back.labels == ("+", "-")
    assert path.read_text().endswith("\n")


def test_invalid_json_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"kind": "cp_map",\n  "dim_in": }')
    with pytest.raises(SchemaError) as info:
        json_io.read_json(str(path))
    assert info.value.path.startswith("line 2")


def test_to_jsonable_handles_report_values():
    out = json_io.to_jsonable(
        {
            "membership": Membership.IN_CLASS,
            "complex": 1 + 2j,
            "flag": np.bool_(True),
            "inf": float("inf"),
            "real": np.diag([1.0, 2.0]),
            "fn": len,
        }
    )
    assert out == {
        "membership": "InClass",
        "complex": [1.0, 2.0],
        "flag": True,
        "inf": "inf",
        "real": [[1.0, 0.0], [0.0, 2.0]],
        "fn": None,
    }


def test_report_documents_are_returned_as_is():
    doc = {
        "kind": "report",
        "command": "audit",
        "tolerances": json_io.encode_tolerances(Tolerances()),
        "conflicts": [],
    }
    assert json_io.parse(doc, expected_kind="report") is doc

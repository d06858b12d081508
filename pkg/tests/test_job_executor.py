import json
import logging
import os

import pandas as pd
import pytest

from qthermo.common.errors import QThermoError, SchemaError
from qthermo.job import job_executor, job_utils
from qthermo.measure import measurements

DATA_DIR = os.path.join(job_utils.SHARE_DIR, "data")


def _executor(tmp_path, **overrides):
    executor = job_executor.job_executor()
    executor.get_config()
    settings = dict(output_dir=str(tmp_path), versioned_output=False)
    settings.update(overrides)
    executor.set_overrides(**settings)
    return executor


def _read(path):
    with open(path) as in_file:
        return json.load(in_file)


def test_exit_codes():
    assert job_utils.exit_code_for(None) == 0
    assert job_utils.exit_code_for(SchemaError("bad", path="/")) == 2
    assert job_utils.exit_code_for(OSError("missing")) == 2
    assert job_utils.exit_code_for(QThermoError("domain")) == 1
    assert job_utils.exit_code_for(ValueError("value")) == 1
    assert job_utils.exit_code_for(KeyError("bug")) == 1
    assert job_utils.exit_code_for(TypeError("bug")) == 1


def test_cfg_path_lookup():
    assert job_utils.get_valid_cfg_path("default.ini").endswith(os.path.join("share", "default.ini"))
    assert job_utils.get_valid_cfg_path("audit_qutrit.ini").endswith("audit_qutrit.ini")
    with pytest.raises(OSError):
        job_utils.get_valid_cfg_path("no_such_job.ini")


def test_ini_include_chain(tmp_path):
    ini = tmp_path / "job.ini"
    ini.write_text(
        "[config]\ninclude = default.ini\n\n"
        "[job]\ncommand = audit\n"
        'input_paths = ["share/data/qutrit_remark_instrument.json"]\n\n'
        "[tolerances]\nds_eps = 1e-8\n"
    )
    executor = job_executor.job_executor(str(ini))
    executor.get_config()
    assert executor.command == "audit"
    assert executor.max_iter == 10000
    cfg = executor.analysis_config()
    assert cfg.tol.ds_eps == 1e-8
    assert cfg.tol.span_tol == 1e-8


def test_classify_map_job(tmp_path):
    executor = _executor(
        tmp_path,
        command="classify-map",
        input_paths=[
            os.path.join(DATA_DIR, "depolarize_to_pure.json"),
            os.path.join(DATA_DIR, "rank_drop_d3.json"),
        ],
    )
    assert executor.execute_jobs() == 0
    table = pd.read_csv(tmp_path / "summary.csv")
    assert list(table["exit_code"]) == [0, 0]
    assert list(table["class_II"]) == ["InClass", "NotInClass"]
    report = _read(tmp_path / "depolarize_to_pure_classify_map.json")
    assert report["kind"] == "report"
    assert report["verdict"] == {
        "class_I": "InClass",
        "class_II": "InClass",
        "class_III": "NotInClass",
    }
    assert report["tolerances"]["ds_eps"] == 1e-6


def test_audit_job(tmp_path):
    executor = _executor(
        tmp_path,
        command="audit",
        input_paths=[os.path.join(DATA_DIR, "qutrit_remark_instrument.json")],
    )
    assert executor.execute_jobs() == 0
    report = _read(tmp_path / "qutrit_remark_instrument_audit.json")
    assert report["conflicts"] == []
    assert report["disturbance"]["nogo_conflicts"] == []
    assert report["first_kind"] and report["ideal"]
    assert not report["repeatable"]


def test_dilate_job_with_interior_point(tmp_path):
    executor = _executor(
        tmp_path,
        command="dilate",
        dilation="stinespring",
        interior_eps=1e-3,
        input_paths=[os.path.join(DATA_DIR, "qutrit_remark_instrument.json")],
    )
    assert executor.execute_jobs() == 0
    report = _read(tmp_path / "qutrit_remark_instrument_dilate.json")
    assert report["process"]["kind"] == "process"
    assert max(report["round_trip_error"].values()) < 1e-9
    assert report["interior_process_class"]["admissible_tiers"] == ["I", "II", "III"]


def test_decompose_job(tmp_path):
    executor = _executor(
        tmp_path,
        command="decompose",
        input_paths=[os.path.join(DATA_DIR, "depolarize_to_pure.json")],
    )
    assert executor.execute_jobs() == 0
    table = pd.read_csv(tmp_path / "summary.csv")
    assert table["fixed_point_dimension"][0] == 1
    assert not table["strictly_positive_fixed_state"][0]


def test_domain_error_gives_exit_one(tmp_path):
    doc = {
        "kind": "cp_map",
        "dim_in": 1,
        "dim_out": 1,
        "kraus": [[[[1.5, 0.0]]]],
    }
    path = tmp_path / "superunital.json"
    path.write_text(json.dumps(doc))
    executor = _executor(tmp_path / "out", command="classify-map", input_paths=[str(path)])
    assert executor.execute_jobs() == 1
    error = _read(tmp_path / "out" / "superunital_classify_map.json")
    assert error["error"]["type"] == "NotSubunital"


def test_malformed_document_gives_exit_two(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"kind": "cp_map", "dim_in": 2}))
    executor = _executor(tmp_path / "out", command="classify-map", input_paths=[str(path)])
    assert executor.execute_jobs() == 2
    error = _read(tmp_path / "out" / "broken_classify_map.json")
    assert error["error"]["type"] == "SchemaError"
    assert error["error"]["details"]["path"] == "/"


def test_wrong_document_kind_gives_exit_two(tmp_path):
    executor = _executor(
        tmp_path,
        command="audit",
        input_paths=[os.path.join(DATA_DIR, "depolarize_to_pure.json")],
    )
    assert executor.execute_jobs() == 2


def test_missing_input_gives_exit_two(tmp_path):
    executor = _executor(
        tmp_path, command="classify-map", input_paths=[str(tmp_path / "nothing_*.json")]
    )
    with pytest.warns(UserWarning):
        assert executor.execute_jobs() == 2


def test_invalid_configuration(tmp_path):
    assert _executor(tmp_path, command="teleport").execute_jobs() == 2
    assert _executor(tmp_path, command="classify-map").execute_jobs() == 2
    assert _executor(tmp_path, command="demo").execute_jobs() == 2


def test_unknown_generator_gives_exit_one(tmp_path):
    executor = _executor(tmp_path, command="demo", generator="perpetuum_mobile")
    assert executor.execute_jobs() == 1


def test_demo_is_reproducible(tmp_path):
    outputs = []
    for run in ("a", "b"):
        executor = _executor(
            tmp_path / run, command="demo", generator="qutrit-instrument"
        )
        assert executor.execute_jobs() == 0
        outputs.append((tmp_path / run / "qutrit_instrument.json").read_bytes())
    assert outputs[0] == outputs[1]
    doc = json.loads(outputs[0])
    assert doc["kind"] == "instrument"


def test_versioned_output_folders(tmp_path):
    paths = []
    for _ in range(2):
        executor = _executor(
            tmp_path, command="demo", generator="identity", versioned_output=True, job_name="ident"
        )
        assert executor.execute_jobs() == 0
        paths.append(executor.save_sub_dir)
    assert paths[0].endswith("_ident_v00")
    assert paths[1].endswith("_ident_v01")


def test_pdf_report(tmp_path):
    executor = _executor(
        tmp_path,
        command="classify-instrument",
        save_pdf_report=True,
        input_paths=[os.path.join(DATA_DIR, "qutrit_remark_instrument.json")],
    )
    assert executor.execute_jobs() == 0
    assert any(name.endswith(".pdf") for name in os.listdir(tmp_path))


def test_parallel_batch(tmp_path):
    executor = _executor(
        tmp_path,
        command="classify-map",
        parallel=2,
        input_paths=[os.path.join(DATA_DIR, "*.json")],
    )
    assert executor.execute_jobs() == 2
    table = pd.read_csv(tmp_path / "summary.csv")
    assert sorted(table["exit_code"]) == [0, 0, 2]


def test_audit_conflicts_are_kept_in_the_disturbance_report(monkeypatch, qutrit_instrument, cfg):
    monkeypatch.setattr(measurements, "nogo_audit", lambda *args, **kwargs: ["class-II-ideal"])
    body, summary = job_executor.audit_report(qutrit_instrument, cfg)
    assert body["conflicts"] == ["class-II-ideal"]
    assert body["disturbance"].nogo_conflicts == ("class-II-ideal",)
    assert summary["conflicts"] == "class-II-ideal"


def test_unexpected_error_writes_error_document(monkeypatch, tmp_path, cfg):
    def broken(inst, cfg):
        raise KeyError("missing label")

    monkeypatch.setattr(job_executor, "audit_report", broken)
    report_path = str(tmp_path / "audit.json")
    row = job_executor.run_input(
        "audit",
        os.path.join(DATA_DIR, "qutrit_remark_instrument.json"),
        report_path,
        cfg,
        {},
    )
    assert row["exit_code"] == 1
    assert row["error"] == "KeyError"
    assert _read(report_path)["error"]["type"] == "KeyError"


def test_batch_continues_after_unexpected_error(monkeypatch, tmp_path):
    calls = []

    def flaky(inst, cfg):
        calls.append(inst)
        if len(calls) == 1:
            raise TypeError("bad input")
        return {}, {}

    monkeypatch.setattr(job_executor, "audit_report", flaky)
    source = os.path.join(DATA_DIR, "qutrit_remark_instrument.json")
    inputs = []
    for name in ("first.json", "second.json"):
        path = tmp_path / name
        with open(source) as in_file:
            path.write_text(in_file.read())
        inputs.append(str(path))
    executor = _executor(tmp_path / "out", command="audit", input_paths=inputs, parallel=1)
    assert executor.execute_jobs() == 1
    assert len(calls) == 2


def test_verbose_ini_key_enables_debug_logging(tmp_path):
    package_logger = logging.getLogger("qthermo")
    level = package_logger.level
    try:
        executor = _executor(tmp_path, command="demo", generator="identity", verbose=True)
        assert executor.execute_jobs() == 0
        assert package_logger.level == logging.DEBUG
    finally:
        package_logger.setLevel(level)

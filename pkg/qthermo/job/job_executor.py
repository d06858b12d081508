import dataclasses
import datetime
import json
import logging
import os
import platform
import re
import time
from concurrent.futures import ProcessPoolExecutor
from configparser import ConfigParser

from reportlab.lib import colors
from reportlab.lib.enums import TA_JUSTIFY
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from qthermo.common import common_utils, opalg
from qthermo.common.errors import FactorizationFailed, QThermoError, SchemaError
from qthermo.data_io import generators, json_io
from qthermo.job import job_utils
from qthermo.maps import fixedpoints, qmaps
from qthermo.measure import hierarchy, measurements, processes

logger = logging.getLogger(__name__)

COMMANDS = ("classify-map", "classify-instrument", "dilate", "audit", "decompose", "demo")
DILATIONS = ("weak", "strong", "stinespring")
TOLERANCE_NAMES = (
    "herm_tol",
    "psd_tol",
    "trace_tol",
    "proj_tol",
    "span_tol",
    "rank_tol",
    "fixed_tol",
    "ds_eps",
    "eff_tol",
)
SCALING_NAMES = (
    "max_iter",
    "samples_per_rank",
    "max_structured_subsets",
    "max_kraus_bases",
    "seed",
)


class job_executor(object):
    """Core class to execute a qthermo job based on given cfg file."""

    def __init__(self, input_path=None):
        """Initialize executor."""
        # general
        self.job_create_time = str(datetime.datetime.now())
        self.datestr = datetime.date.today().strftime("%Y-%m-%d")
        self.cfg_path = input_path
        self.cfg_is_collected = False
        # Initialize [job] section
        self.job_name = None
        self.command = None
        self.input_paths = []
        self.output_dir = None
        self.versioned_output = True
        self.generator = None
        self.generator_params = {}
        self.parallel = 1
        # Initialize [tolerances] section
        for name in TOLERANCE_NAMES:
            setattr(self, name, None)
        # Initialize [scaling] section
        for name in SCALING_NAMES:
            setattr(self, name, None)
        # Initialize [dilate] section
        self.dilation = "weak"
        self.interior_eps = None
        # Initialize [report] section
        self.save_csv_summary = True
        self.save_pdf_report = False
        self.verbose = False
        # results
        self.save_sub_dir = None
        self.summary_rows = []
        self.exit_code = None
        self.job_execute_time = -1

    def get_config(self, path=None):
        """Retrieves configurations from ini file."""
        # Set parser
        if path is None:
            ini_path = self.cfg_path
        else:
            ini_path = path
        if ini_path is None:
            self.cfg_is_collected = True
            return
        ini_path = job_utils.get_valid_cfg_path(ini_path)
        config = ConfigParser()
        config.read(ini_path)
        # Check whether need to import other (default) ini file first
        default_ini_path = None
        if config.has_option("config", "include"):
            default_ini_path = config.get("config", "include")
        if default_ini_path is not None:
            logger.debug("Including: %s", default_ini_path)
            self.get_config(default_ini_path)
        # Load [job] section
        self.try_parse_str("job_name", config, "job", "job_name")
        self.try_parse_str("command", config, "job", "command")
        self.try_parse_list("input_paths", config, "job", "input_paths")
        self.try_parse_str("output_dir", config, "job", "output_dir")
        self.try_parse_bool("versioned_output", config, "job", "versioned_output")
        self.try_parse_str("generator", config, "job", "generator")
        self.try_parse_dict("generator_params", config, "job", "generator_params")
        self.try_parse_int("parallel", config, "job", "parallel")
        # Load [tolerances] section
        for name in TOLERANCE_NAMES:
            self.try_parse_float(name, config, "tolerances", name)
        # Load [scaling] section
        for name in SCALING_NAMES:
            self.try_parse_int(name, config, "scaling", name)
        # Load [dilate] section
        self.try_parse_str("dilation", config, "dilate", "dilation")
        self.try_parse_float("interior_eps", config, "dilate", "interior_eps")
        # Load [report] section
        self.try_parse_bool("save_csv_summary", config, "report", "save_csv_summary")
        self.try_parse_bool("save_pdf_report", config, "report", "save_pdf_report")
        self.try_parse_bool("verbose", config, "report", "verbose")
        self.cfg_is_collected = True

    def set_overrides(self, **overrides):
        """Command line values win over ini values, None means not given."""
        for key, value in overrides.items():
            if value is None:
                continue
            if not hasattr(self, key):
                raise ValueError("unknown job setting {}".format(key))
            setattr(self, key, value)

    def analysis_config(self):
        tol = opalg.Tolerances().replace(
            **{name: getattr(self, name) for name in TOLERANCE_NAMES}
        )
        return opalg.AnalysisConfig(tol=tol).replace(
            **{name: getattr(self, name) for name in SCALING_NAMES}
        )

    def check_config(self):
        if self.command not in COMMANDS:
            raise SchemaError(
                "command must be one of {}, got {!r}".format(", ".join(COMMANDS), self.command),
                path="[job] command",
            )
        if self.command == "demo" and not self.generator:
            raise SchemaError("demo requires a generator name", path="[job] generator")
        if self.command != "demo" and not self.input_paths:
            raise SchemaError("{} requires input_paths".format(self.command), path="[job] input_paths")
        if self.dilation not in DILATIONS:
            raise SchemaError(
                "dilation must be one of {}".format(", ".join(DILATIONS)), path="[dilate] dilation"
            )
        if common_utils.has_none([self.output_dir]):
            self.output_dir = "qthermo_output"
        if common_utils.has_none([self.job_name]):
            self.job_name = self.command.replace("-", "_")

    def execute_jobs(self):
        """Execute all planned jobs, returns the worst exit code."""
        try:
            # Get config
            if not self.cfg_is_collected:
                self.get_config()
            self.check_config()
            cfg = self.analysis_config()
        except (QThermoError, ValueError, OSError) as err:
            logger.error("invalid job configuration: %s", err)
            self.exit_code = job_utils.exit_code_for(err)
            return self.exit_code
        if self.verbose:
            logging.getLogger("qthermo").setLevel(logging.DEBUG)
        # Set save sub-directory for this task
        if self.versioned_output:
            dir_pattern = os.path.join(
                self.output_dir, self.datestr + "_" + self.job_name + "_v{}"
            )
            self.save_sub_dir = common_utils.get_newest_file_version(dir_pattern)["path"]
        else:
            self.save_sub_dir = self.output_dir
        common_utils.create_folders([self.save_sub_dir], parent_path="./")
        job_start_time = time.perf_counter()
        if self.command == "demo":
            self.exit_code = self.execute_demo()
        else:
            self.exit_code = self.execute_batch(cfg)
        self.job_execute_time = time.perf_counter() - job_start_time
        if self.save_csv_summary and self.summary_rows:
            job_utils.make_table(self.summary_rows, self.save_sub_dir)
        if self.save_pdf_report:
            self.generate_report()
        return self.exit_code

    def execute_demo(self):
        """Writes the document of one catalog object."""
        name = str(self.generator).replace("-", "_")
        save_path = os.path.join(self.save_sub_dir, name + ".json")
        try:
            obj = generators.build(self.generator, **(self.generator_params or {}))
            json_io.write_json(save_path, json_io.serialize(obj, name=name))
            code = job_utils.EXIT_OK
            row = {"input": name, "output": save_path, "exit_code": code}
        except Exception as err:
            code = job_utils.exit_code_for(err)
            json_io.write_json(save_path, job_utils.error_document(err))
            row = {"input": name, "output": save_path, "exit_code": code, "error": type(err).__name__}
        self.summary_rows = [row]
        print("Demo document written to:", save_path)
        return code

    def execute_batch(self, cfg):
        """Runs the command over every input, optionally in worker processes."""
        patterns = [job_utils.get_valid_input_pattern(p) for p in self.input_paths]
        paths = common_utils.expand_input_paths(patterns)
        if not paths:
            return job_utils.EXIT_IO_ERROR
        settings = {
            "dilation": self.dilation,
            "interior_eps": self.interior_eps,
            "created": self.job_create_time,
        }
        tasks = [
            (self.command, path, self._report_path(path), cfg, settings) for path in paths
        ]
        if self.parallel and self.parallel > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.parallel) as pool:
                rows = list(pool.map(run_input, *zip(*tasks)))
        else:
            rows = [run_input(*task) for task in tasks]
        self.summary_rows = rows
        for row in rows:
            print("*", row["input"], "->", row["output"], "(exit {})".format(row["exit_code"]))
        return max(row["exit_code"] for row in rows)

    def _report_path(self, input_path):
        stem = os.path.splitext(os.path.basename(input_path))[0]
        return os.path.join(
            self.save_sub_dir, "{}_{}.json".format(stem, self.command.replace("-", "_"))
        )

    def generate_report(self, pdf_save_path=None):
        """Generate a brief report with job metadata and per-input verdicts."""
        # Initalize
        if pdf_save_path is None:
            pdf_save_path = os.path.join(
                self.save_sub_dir, self.job_name + "_report_" + self.datestr + ".pdf"
            )
        doc = SimpleDocTemplate(
            pdf_save_path,
            pagesize=letter,
            rightMargin=72,
            leftMargin=72,
            topMargin=72,
            bottomMargin=18,
        )
        styles = getSampleStyleSheet()
        styles.add(ParagraphStyle(name="Justify", alignment=TA_JUSTIFY))
        reports = []
        # head
        for ptext in (
            "JOB NAME: " + self.job_name,
            "COMMAND: " + self.command,
            "DATE TIME: " + self.job_create_time,
            "JOB EXECUTE TIME (s): {:.2f}".format(self.job_execute_time),
        ):
            reports.append(Paragraph(ptext, styles["Justify"]))
        reports.append(Spacer(1, 12))
        # machine info
        reports.append(Paragraph("MACHINE INFO:", styles["Justify"]))
        reports.append(Paragraph("-" * 80, styles["Justify"]))
        for ptext in (
            "machine:" + platform.machine(),
            "platform:" + platform.platform(),
            "system:" + platform.system(),
            "processor:" + platform.processor(),
        ):
            reports.append(Paragraph(ptext, styles["Justify"]))
        reports.append(Spacer(1, 12))
        # parameters
        reports.append(Paragraph("KEY PARAMETERS:", styles["Justify"]))
        reports.append(Paragraph("-" * 80, styles["Justify"]))
        if self.cfg_path is not None:
            ptext = "config file location: " + re.sub(r"[\s+]", "", self.cfg_path)
            reports.append(Paragraph(ptext, styles["Justify"]))
        cfg_dict = self.analysis_config().to_dict()
        for key, value in sorted(cfg_dict.pop("tol").items()):
            reports.append(Paragraph("{:<24}: {}".format(key, value), styles["Justify"]))
        for key, value in sorted(cfg_dict.items()):
            reports.append(Paragraph("{:<24}: {}".format(key, value), styles["Justify"]))
        reports.append(Spacer(1, 12))
        # per input table
        reports.append(Paragraph("RESULTS:", styles["Justify"]))
        reports.append(Paragraph("-" * 80, styles["Justify"]))
        if self.summary_rows:
            columns = []
            for row in self.summary_rows:
                for key in row:
                    if key not in columns and key != "output":
                        columns.append(key)
            data = [columns] + [
                [str(row.get(col, "")) for col in columns] for row in self.summary_rows
            ]
            table = Table(data, repeatRows=1)
            table.setStyle(
                TableStyle(
                    [
                        ("BACKGROUND", (0, 0), (-1, 0), colors.lightgrey),
                        ("GRID", (0, 0), (-1, -1), 0.25, colors.grey),
                        ("FONTSIZE", (0, 0), (-1, -1), 7),
                    ]
                )
            )
            reports.append(table)
        # build/save
        doc.build(reports)
        return pdf_save_path

    def try_parse_bool(self, parsed_val, config_parse, section, val_name):
        if not config_parse.has_option(section, val_name):
            return None
        value = config_parse.getboolean(section, val_name)
        setattr(self, parsed_val, value)
        return value

    def try_parse_float(self, parsed_val, config_parser, section, val_name):
        if not config_parser.has_option(section, val_name):
            return None
        value = config_parser.getfloat(section, val_name)
        setattr(self, parsed_val, value)
        return value

    def try_parse_int(self, parsed_val, config_parser, section, val_name):
        if not config_parser.has_option(section, val_name):
            return None
        value = config_parser.getint(section, val_name)
        setattr(self, parsed_val, value)
        return value

    def try_parse_str(self, parsed_val, config_parser, section, val_name):
        if not config_parser.has_option(section, val_name):
            return None
        value = config_parser.get(section, val_name)
        setattr(self, parsed_val, value)
        return value

    def try_parse_list(self, parsed_val, config_parser, section, val_name):
        if not config_parser.has_option(section, val_name):
            return None
        value = json.loads(config_parser.get(section, val_name))
        if not isinstance(value, list):
            value = [value]
        setattr(self, parsed_val, value)
        return value

    def try_parse_dict(self, parsed_val, config_parser, section, val_name):
        if not config_parser.has_option(section, val_name):
            return None
        value = json.loads(config_parser.get(section, val_name))
        if not isinstance(value, dict):
            raise SchemaError("{} must be a JSON object".format(val_name), path="[{}] {}".format(section, val_name))
        setattr(self, parsed_val, value)
        return value


################################################################################
# Per-input work, module level so worker processes can pickle it
################################################################################


def _verdict_summary(verdict):
    return {
        "class_I": verdict.class_I.value,
        "class_II": verdict.class_II.value,
        "class_III": verdict.class_III.value,
    }


def classify_map_report(cp_map, cfg):
    mc = qmaps.classify_map(cp_map, cfg.tol)
    if mc.trace_preserving:
        verdict = hierarchy.channel_hierarchy(cp_map, cfg)
    else:
        verdict = hierarchy.operation_hierarchy(cp_map, cfg)
    summary = _verdict_summary(verdict)
    report = {
        "verdict": summary,
        "classification": mc,
        "certificates": verdict.certificates,
        "witness_revalidated": hierarchy.revalidate_witness(cp_map, verdict, cfg),
    }
    return report, dict(summary, trace_preserving=mc.trace_preserving)


def classify_instrument_report(inst, cfg):
    verdict = hierarchy.instrument_hierarchy(inst, cfg)
    summary = _verdict_summary(verdict)
    report = {
        "verdict": summary,
        "per_operation": {
            label: _verdict_summary(v) for label, v in zip(inst.labels, verdict.per_operation)
        },
        "certificates": verdict.certificates,
        "per_operation_certificates": {
            label: v.certificates for label, v in zip(inst.labels, verdict.per_operation)
        },
    }
    return report, summary


def dilate_report(inst, cfg, dilation="weak", interior_eps=None):
    if dilation == "weak":
        process = processes.dilate_weak_third(inst, cfg.tol)
    elif dilation == "strong":
        process = processes.dilate_strong_third(inst, cfg)
    else:
        process = processes.stinespring_process(inst, cfg.tol)
    class_report = processes.validate_process_class(process, cfg)
    errors = {
        label: qmaps.maps_distance(processes.induced_operation(process, label, cfg.tol), op)
        for label, op in inst.items()
    }
    report = {
        "dilation": dilation,
        "process": process,
        "process_class": class_report,
        "round_trip_error": errors,
    }
    if interior_eps is not None and dilation == "stinespring":
        mixed, _ = processes.interior_approximation(process, interior_eps, tol=cfg.tol)
        report["interior_process"] = mixed
        report["interior_process_class"] = processes.validate_process_class(mixed, cfg)
        report["interior_round_trip_error"] = {
            label: qmaps.maps_distance(processes.induced_operation(mixed, label, cfg.tol), op)
            for label, op in inst.items()
        }
    summary = {
        "dilation": dilation,
        "admissible_tiers": ",".join(class_report.admissible_tiers),
        "max_round_trip_error": max(errors.values()),
    }
    return report, summary


def audit_report(inst, cfg):
    tol = cfg.tol
    disturbance = measurements.disturbance_report(inst, tol)
    verdict = hierarchy.instrument_hierarchy(inst, cfg)
    conflicts = measurements.nogo_audit(inst, verdict.per_operation, disturbance, tol)
    disturbance = dataclasses.replace(disturbance, nogo_conflicts=tuple(conflicts))
    obs = measurements.compatible_observable(inst, tol)
    flags = {
        "repeatable": disturbance.repeatable.holds,
        "first_kind": disturbance.first_kind.holds,
        "value_reproducible": disturbance.value_reproducible.holds,
        "ideal": disturbance.ideal.holds,
    }
    report = dict(
        flags,
        observable=obs,
        observable_class=measurements.classify_observable(obs, tol),
        disturbance=disturbance,
        verdict=_verdict_summary(verdict),
        per_operation={
            label: _verdict_summary(v) for label, v in zip(inst.labels, verdict.per_operation)
        },
        conflicts=conflicts,
    )
    return report, dict(flags, conflicts=";".join(conflicts))


def decompose_report(ch, cfg):
    tol = cfg.tol
    basis = fixedpoints.fixed_point_basis(ch, tol)
    min_support = fixedpoints.minimal_support_projection(ch, tol)
    diagnosis = fixedpoints.fixed_state_diagnosis(ch, tol=tol)
    report = {
        "fixed_point_dimension": basis.size,
        "fixed_point_basis": basis,
        "minimal_support_projection": min_support,
        "diagnosis": diagnosis,
    }
    try:
        blocks = fixedpoints.kraus_block_decomposition(ch, tol)
    except QThermoError as err:
        blocks = getattr(err, "decomposition", None)
        report["block_error"] = str(err)
    if blocks is not None:
        report["blocks"] = {
            "projections": blocks.projections,
            "fixed_states": blocks.per_block_fixed_states,
            "classical_actions": [a.t_matrix for a in blocks.per_block_actions],
            "irreducible": [fixedpoints.is_irreducible(a, tol) for a in blocks.per_block_actions],
            "commutation_residual": blocks.commutation_residual,
        }
    try:
        structure = fixedpoints.fixed_algebra_decomposition(ch, tol)
        report["fixed_algebra"] = {
            "central_projections": structure.central_projections,
            "factor_dims": structure.factor_dims,
            "block_states": structure.block_states,
            "reconstruction_error": structure.reconstruction_error,
        }
    except FactorizationFailed as err:
        report["fixed_algebra_error"] = {"message": str(err), "details": err.details}
    summary = {
        "fixed_point_dimension": basis.size,
        "min_support_rank": diagnosis.min_support_rank,
        "strictly_positive_fixed_state": diagnosis.state is not None,
    }
    return report, summary


def run_input(command, input_path, report_path, cfg, settings):
    """Runs one command on one input document and writes its report.

    Returns:
        dict, the summary row of this input.
    """
    row = {"input": input_path, "output": report_path}
    try:
        if command in ("classify-map", "decompose"):
            target = json_io.load(input_path, expected_kind="cp_map")
        else:
            target = json_io.load(input_path, expected_kind="instrument")
        if command == "classify-map":
            body, summary = classify_map_report(target, cfg)
        elif command == "classify-instrument":
            body, summary = classify_instrument_report(target, cfg)
        elif command == "dilate":
            body, summary = dilate_report(
                target, cfg, settings.get("dilation", "weak"), settings.get("interior_eps")
            )
        elif command == "audit":
            body, summary = audit_report(target, cfg)
        else:
            body, summary = decompose_report(target, cfg)
    except Exception as err:
        code = job_utils.exit_code_for(err)
        logger.error("%s failed on %s: %s", command, input_path, err)
        json_io.write_json(report_path, job_utils.error_document(err, input_path))
        row.update(exit_code=code, error=type(err).__name__)
        return row
    report = dict(
        body,
        kind="report",
        command=command,
        input=os.path.basename(input_path),
        tolerances=json_io.encode_tolerances(cfg.tol),
        config=cfg.to_dict(),
        created=settings.get("created", ""),
    )
    json_io.write_json(report_path, report)
    row.update(summary)
    row["exit_code"] = job_utils.EXIT_OK
    return row

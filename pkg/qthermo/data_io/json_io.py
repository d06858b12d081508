"""JSON interchange for maps, observables, instruments and processes.

Complex numbers are written as [re, im] pairs and matrices as row-major
nested arrays. Every document carries a ``kind`` field and is validated
against the shipped schema before it is decoded.
"""

import dataclasses
import enum
import json
import logging
import os

import numpy as np
from jsonschema import Draft202012Validator

from qthermo.common.errors import SchemaError
from qthermo.common.opalg import AlgebraBasis, Tolerances
from qthermo.maps import qmaps
from qthermo.measure import measurements, processes

logger = logging.getLogger(__name__)

SCHEMA_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))),
    "share",
    "schema",
    "qthermo.schema.json",
)
KINDS = ("cp_map", "observable", "instrument", "process", "tolerances", "report")

_schema_cache = {}


def load_schema(path=SCHEMA_PATH):
    if path not in _schema_cache:
        with open(path, "r") as schema_file:
            _schema_cache[path] = json.load(schema_file)
    return _schema_cache[path]


def validate_document(doc, kind=None, schema=None):
    """Checks a decoded JSON document against the schema of its kind.

    Raises:
        SchemaError: with the JSON path of the first offending field.
    """
    schema = load_schema() if schema is None else schema
    if not isinstance(doc, dict):
        raise SchemaError("document must be a JSON object", path="/")
    kind = doc.get("kind") if kind is None else kind
    if kind not in KINDS:
        raise SchemaError("unknown document kind {!r}".format(kind), path="/kind")
    validator = Draft202012Validator(dict(schema, **{"$ref": "#/$defs/" + kind}))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        path = "/" + "/".join(str(p) for p in first.absolute_path)
        raise SchemaError(
            "{} at {}".format(first.message, path),
            path=path,
            errors=["{}: {}".format(list(e.absolute_path), e.message) for e in errors],
        )


################################################################################
# Matrices
################################################################################


def encode_matrix(matrix):
    arr = np.asarray(matrix, dtype=complex)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def decode_matrix(data, path="/"):
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as err:
        raise SchemaError("matrix is not rectangular: {}".format(err), path=path)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise SchemaError("expected a matrix of [re, im] pairs", path=path)
    return arr[..., 0] + 1j * arr[..., 1]


################################################################################
# Domain objects
################################################################################


def encode_map(cp_map):
    return {
        "kind": "cp_map",
        "dim_in": cp_map.dim_in,
        "dim_out": cp_map.dim_out,
        "kraus": [encode_matrix(k) for k in cp_map.kraus],
    }


def decode_map(doc, path=""):
    kraus = tuple(
        decode_matrix(k, "{}/kraus/{}".format(path, i)) for i, k in enumerate(doc["kraus"])
    )
    return qmaps.CPMap(doc["dim_in"], doc["dim_out"], kraus)


def encode_observable(obs):
    return {
        "kind": "observable",
        "labels": list(obs.labels),
        "effects": [encode_matrix(e) for e in obs.effects],
    }


def decode_observable(doc, path=""):
    effects = tuple(
        decode_matrix(e, "{}/effects/{}".format(path, i)) for i, e in enumerate(doc["effects"])
    )
    return measurements.Observable(tuple(doc["labels"]), effects)


def encode_instrument(inst):
    return {
        "kind": "instrument",
        "labels": list(inst.labels),
        "operations": [encode_map(op) for op in inst.operations],
    }


def decode_instrument(doc, path=""):
    ops = tuple(
        decode_map(op, "{}/operations/{}".format(path, i)) for i, op in enumerate(doc["operations"])
    )
    return measurements.Instrument(tuple(doc["labels"]), ops)


def encode_process(p):
    return {
        "kind": "process",
        "sys_dim": p.sys_dim,
        "app_dim": p.app_dim,
        "xi": encode_matrix(p.xi),
        "interaction": encode_map(p.interaction),
        "pointer": encode_observable(p.pointer),
    }


def decode_process(doc, path=""):
    return processes.MeasurementProcess(
        sys_dim=doc["sys_dim"],
        app_dim=doc["app_dim"],
        xi=decode_matrix(doc["xi"], path + "/xi"),
        interaction=decode_map(doc["interaction"], path + "/interaction"),
        pointer=decode_observable(doc["pointer"], path + "/pointer"),
    )


def encode_tolerances(tol):
    return dict(tol.to_dict(), kind="tolerances")


def decode_tolerances(doc, path=""):
    return Tolerances(**{k: v for k, v in doc.items() if k != "kind"})


_ENCODERS = (
    (qmaps.CPMap, encode_map),
    (measurements.Observable, encode_observable),
    (measurements.Instrument, encode_instrument),
    (processes.MeasurementProcess, encode_process),
    (Tolerances, encode_tolerances),
)
_DECODERS = {
    "cp_map": decode_map,
    "observable": decode_observable,
    "instrument": decode_instrument,
    "process": decode_process,
    "tolerances": decode_tolerances,
}


def serialize(obj, name=None):
    """Document for a domain object, ``name`` is stored alongside."""
    for obj_type, encoder in _ENCODERS:
        if isinstance(obj, obj_type):
            doc = encoder(obj)
            if name is not None:
                doc["name"] = name
            return doc
    raise TypeError("cannot serialize object of type {}".format(type(obj).__name__))


def parse(doc, expected_kind=None):
    """Validates and decodes a document into its domain object."""
    validate_document(doc)
    kind = doc["kind"]
    if isinstance(expected_kind, str):
        expected_kind = (expected_kind,)
    if expected_kind is not None and kind not in expected_kind:
        raise SchemaError(
            "expected a {} document, got {}".format(" or ".join(expected_kind), kind),
            path="/kind",
        )
    if kind == "report":
        return doc
    return _DECODERS[kind](doc)


################################################################################
# Reports
################################################################################


def to_jsonable(obj):
    """Plain JSON structure for verdicts, certificates and reports."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if np.isfinite(value) else str(value)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return encode_matrix(obj) if obj.ndim == 2 else to_jsonable(obj.tolist())
        return obj.tolist()
    if isinstance(obj, enum.Enum):
        return obj.value
    for obj_type, encoder in _ENCODERS:
        if isinstance(obj, obj_type):
            return encoder(obj)
    if isinstance(obj, AlgebraBasis):
        return {"dim": obj.dim, "size": obj.size, "basis": [encode_matrix(b) for b in obj.basis]}
    if dataclasses.is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(key): to_jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [to_jsonable(item) for item in obj]
    if callable(obj):
        return None
    return str(obj)


################################################################################
# Files
################################################################################


def dumps(doc):
    return json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_json(path, doc):
    """Writes a document (domain object or plain structure) to path."""
    if any(isinstance(doc, obj_type) for obj_type, _ in _ENCODERS):
        doc = serialize(doc)
    with open(path, "w") as out_file:
        out_file.write(dumps(doc))
    logger.debug("wrote %s", path)
    return path


def read_json(path):
    try:
        with open(path, "r") as in_file:
            return json.load(in_file)
    except json.JSONDecodeError as err:
        raise SchemaError(
            "{} is not valid JSON: {}".format(path, err.msg),
            path="line {} column {}".format(err.lineno, err.colno),
        )


def load(path, expected_kind=None):
    """Reads, validates and decodes a document file."""
    return parse(read_json(path), expected_kind)

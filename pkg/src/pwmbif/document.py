"""Converter documents (JSON) and CSV/report emitters.

A document either names a preset::

    {"schema_version": 1, "preset": "pd_buck", "overrides": {"vs": 26}}

or spells out every matrix::

    {"schema_version": 1, "N": 2, "T_seconds": 0.0004,
     "A1": [[...], [...]], "A2": ..., "B1": ..., "B2": ...,
     "E1": [...], "E2": [...], "u_volts": [v_s, v_r],
     "stage_roles": {"stage1": "off", "stage2": "on"},
     "control": {"type": "ramp", "C": [...], "D": [...],
                 "V_low_volts": 3.8, "V_high_volts": 8.2}}

Discrete-duty control uses ``{"type": "discrete_duty", "base_duty": 0.3,
"K": [...], "x_ref": [...]}``.
"""

import csv
import hashlib
import io
import json

import jsonschema
import numpy as np

from .errors import DocumentError
from .model import (DEFAULTS, PRESETS, ConverterSpec, DiscreteDutyControl, Ramp, RampControl,
                    preset)

SCHEMA_VERSION = 1
DIGITS = 12

_number = {"type": "number"}
_vector = {"type": "array", "items": _number, "minItems": 1}
_matrix = {"type": "array", "items": _vector, "minItems": 1}

_RAMP = {
    "type": "object",
    "properties": {"type": {"const": "ramp"}, "C": _vector, "D": _vector,
                   "V_low_volts": _number, "V_high_volts": _number},
    "required": ["type", "C", "D", "V_low_volts", "V_high_volts"],
    "additionalProperties": False,
}
_DISCRETE = {
    "type": "object",
    "properties": {"type": {"const": "discrete_duty"}, "base_duty": _number,
                   "K": _vector, "x_ref": _vector},
    "required": ["type", "base_duty", "K", "x_ref"],
    "additionalProperties": False,
}
_ROLE = {"enum": ["on", "off"]}

SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "schema_version": {"const": SCHEMA_VERSION},
                "preset": {"enum": list(PRESETS)},
                "overrides": {"type": "object", "additionalProperties": _number},
            },
            "required": ["schema_version", "preset"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "schema_version": {"const": SCHEMA_VERSION},
                "N": {"type": "integer", "minimum": 1, "maximum": 8},
                "T_seconds": {"type": "number", "exclusiveMinimum": 0},
                "A1": _matrix, "A2": _matrix, "B1": _matrix, "B2": _matrix,
                "E1": _vector, "E2": _vector,
                "u_volts": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
                "stage_roles": {
                    "type": "object",
                    "properties": {"stage1": _ROLE, "stage2": _ROLE},
                    "required": ["stage1", "stage2"],
                    "additionalProperties": False,
                },
                "control": {"oneOf": [_RAMP, _DISCRETE]},
            },
            "required": ["schema_version", "N", "T_seconds", "A1", "A2", "B1", "B2",
                         "E1", "E2", "u_volts", "control"],
            "additionalProperties": False,
        },
    ]
}


def spec_from_document(doc):
    """Validate a parsed document and build the :class:`ConverterSpec`."""
    if not isinstance(doc, dict):
        raise DocumentError("a converter document must be a JSON object")
    # validate against the form the document claims, for pointed messages
    schema = SCHEMA["oneOf"][0 if "preset" in doc else 1]
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "document"
        raise DocumentError(f"invalid converter document at {where}: {exc.message}") from None
    if "preset" in doc:
        overrides = doc.get("overrides", {})
        unknown = set(overrides) - set(DEFAULTS[doc["preset"]])
        if unknown:
            raise DocumentError(f"unknown override(s) for {doc['preset']}: {sorted(unknown)}")
        return preset(doc["preset"], **overrides)
    n = doc["N"]
    shapes = {"A1": (n, n), "A2": (n, n), "B1": (n, 2), "B2": (n, 2)}
    for key, shape in shapes.items():
        if np.shape(doc[key]) != shape:
            raise DocumentError(f"{key} must be {shape[0]}x{shape[1]}")
    for key in ("E1", "E2"):
        if len(doc[key]) != n:
            raise DocumentError(f"{key} must have {n} entries")
    c = doc["control"]
    T = doc["T_seconds"]
    try:
        if c["type"] == "ramp":
            if len(c["C"]) != n or len(c["D"]) != 2:
                raise DocumentError(f"ramp control needs C of length {n} and D of length 2")
            ctl = RampControl(C=c["C"], D=c["D"], ramp=Ramp(c["V_low_volts"], c["V_high_volts"], T))
        else:
            if len(c["K"]) != n or len(c["x_ref"]) != n:
                raise DocumentError(f"discrete_duty control needs K and x_ref of length {n}")
            ctl = DiscreteDutyControl(base_duty=c["base_duty"], K=c["K"], x_ref=c["x_ref"])
        spec = ConverterSpec(A1=doc["A1"], A2=doc["A2"], B1=doc["B1"], B2=doc["B2"],
                             E1=doc["E1"], E2=doc["E2"], u=doc["u_volts"], T=T, control=ctl)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, DocumentError):
            raise
        raise DocumentError(str(exc)) from None
    roles = doc.get("stage_roles")
    if roles is not None:
        if sorted(roles.values()) != ["off", "on"]:
            raise DocumentError("stage_roles must name one 'on' and one 'off' stage")
        declared = 1 if roles["stage1"] == "on" else 2
        try:
            derived = spec.on_stage
        except ValueError as exc:
            raise DocumentError(str(exc)) from None
        if declared != derived:
            raise DocumentError(f"stage_roles says stage {declared} is ON but only stage "
                                f"{derived} connects the source")
    return spec


def _list(a):
    a = np.asarray(a, dtype=float)
    return a.tolist()


def spec_to_document(spec, explicit=False):
    """Serialize a spec.  Preset-built specs become preset documents unless
    ``explicit`` is set."""
    if spec.preset is not None and not explicit:
        defaults = DEFAULTS[spec.preset]
        overrides = {k: v for k, v in spec.params.items() if defaults[k] != v}
        return {"schema_version": SCHEMA_VERSION, "preset": spec.preset, "overrides": overrides}
    ctl = spec.control
    if isinstance(ctl, RampControl):
        control = {"type": "ramp", "C": _list(ctl.C), "D": _list(ctl.D),
                   "V_low_volts": ctl.ramp.v_low, "V_high_volts": ctl.ramp.v_high}
    else:
        control = {"type": "discrete_duty", "base_duty": ctl.base_duty,
                   "K": _list(ctl.K), "x_ref": _list(ctl.x_ref)}
    doc = {"schema_version": SCHEMA_VERSION, "N": spec.N, "T_seconds": spec.T,
           "A1": _list(spec.A1), "A2": _list(spec.A2), "B1": _list(spec.B1),
           "B2": _list(spec.B2), "E1": _list(spec.E1), "E2": _list(spec.E2),
           "u_volts": _list(spec.u)}
    try:
        on = spec.on_stage
        doc["stage_roles"] = {"stage1": "on" if on == 1 else "off",
                              "stage2": "on" if on == 2 else "off"}
    except ValueError:
        pass
    doc["control"] = control
    return doc


def load_document(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"{path}: not valid JSON ({exc})") from None
    return spec_from_document(doc)


def dumps(doc):
    return json.dumps(doc, indent=2) + "\n"


def spec_digest(spec):
    """Short content hash of the explicit form of ``spec``."""
    text = json.dumps(spec_to_document(spec, explicit=True), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# formatting and CSV


def fmt(x):
    """12 significant digits; complex numbers as ``re+imj``."""
    if isinstance(x, (complex, np.complexfloating)):
        x = complex(x)
        sign = "+" if x.imag >= 0 else "-"
        return f"{fmt(x.real)}{sign}{fmt(abs(x.imag))}j"
    if x is None:
        return "none"
    return format(float(x), f".{DIGITS}g")


def fmt_vec(v):
    return "[" + ", ".join(fmt(x) for x in v) + "]"


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def trajectory_csv(spec, samples, fh):
    header = ["t_seconds"] + [f"x{i + 1}" for i in range(spec.N)] + ["v_o_volts", "stage"]
    rows = ([s.t, *map(float, s.x), s.v_o, s.stage] for s in samples)
    _write_rows(fh, header, rows)


def sweep_csv(spec, records, fh, param="vs"):
    n = spec.N
    header = [param]
    for i in range(1, n + 1):
        header += [f"re_lambda{i}", f"im_lambda{i}"]
    header += ["spectral_radius", "duty", "status"]

    def row(r):
        out = [r.param_value]
        eigs = list(r.eigenvalues) + [complex(np.nan, np.nan)] * (n - len(r.eigenvalues))
        for z in eigs:
            out += [float(z.real), float(z.imag)]
        out += [float(r.spectral_radius), float(r.duty), r.status.split(":")[0]]
        return out

    _write_rows(fh, header, (row(r) for r in records))


def bifdiag_csv(samples, fh, param="vs"):
    rows = ([s.param_value, k, float(v)]
            for s in samples for k, v in enumerate(s.stroboscopic_outputs))
    _write_rows(fh, [param, "sample_index", "v_o_volts"], rows)


class Report:
    """Deterministic ``key: value`` report."""

    def __init__(self, command, spec=None):
        self.lines = [("command", command)]
        if spec is not None:
            self.lines.append(("spec_digest", spec_digest(spec)))
        self.warnings = []

    def add(self, key, value):
        if isinstance(value, (list, tuple, np.ndarray)):
            value = fmt_vec(value)
        elif isinstance(value, (float, int, complex, np.floating, np.complexfloating)) \
                and not isinstance(value, bool):
            value = fmt(value)
        self.lines.append((key, str(value)))

    def warn(self, message):
        self.warnings.append(message)

    def render(self):
        out = io.StringIO()
        for k, v in self.lines:
            out.write(f"{k}: {v}\n")
        for w in self.warnings:
            out.write(f"warning: {w}\n")
        return out.getvalue()

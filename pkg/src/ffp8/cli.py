"""Command-line front end for the codec and quantization pipeline.

Reports are canonical JSON: object keys sorted, floats printed with nine
significant digits, non-finite floats as null, no timestamps. Identical
inputs therefore produce byte-identical reports. Every report carries its
kind, the tool version, and SHA-256 digests of the input files.

Exit codes: 0 success, 1 usage error (bad flags), 2 data error (anything
raised as a typed toolkit error while processing inputs).
"""

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__, toynet
from .analysis import coverage, error_metrics, tensor_stats
from .bundle import DTYPE_FFP8, DTYPE_FP32, dequantize_tensor, quantize_tensor, read_bundle, write_bundle
from .errors import EmptyModel, FFP8Error, SchemaViolation
from .formats import (
    FormatSpec,
    decode_array,
    default_bias,
    enumerate_values,
    make_format,
    range_window,
    to_fp32_bits_array,
)
from .search import (
    SearchConfig,
    bias_star,
    layerwise_optimize,
    load_assignment,
    save_assignment,
)
from .toynet import evaluate, make_dataset, train_baseline

CALIBRATION_SAMPLES = 256

REPORT_SCHEMAS = {
    "format_table": {"format", "default_bias", "window", "distinct_values"},
    "coverage": {"format", "tensors"},
    "search_result": {"objective", "config", "records"},
    "assignment": {"records"},
    "eval": {"mode", "accuracy", "dataset"},
}


# --- canonical JSON ----------------------------------------------------------

def _write_json(doc, out: list) -> None:
    if doc is None:
        out.append("null")
    elif isinstance(doc, bool):
        out.append("true" if doc else "false")
    elif isinstance(doc, (int, np.integer)):
        out.append(str(int(doc)))
    elif isinstance(doc, (float, np.floating)):
        v = float(doc)
        out.append(format(v, ".9g") if math.isfinite(v) else "null")
    elif isinstance(doc, str):
        out.append(json.dumps(doc))
    elif isinstance(doc, dict):
        out.append("{")
        for i, key in enumerate(sorted(doc, key=str)):
            if i:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _write_json(doc[key], out)
        out.append("}")
    elif isinstance(doc, (list, tuple, np.ndarray)):
        out.append("[")
        for i, item in enumerate(doc):
            if i:
                out.append(",")
            _write_json(item, out)
        out.append("]")
    else:
        raise SchemaViolation(f"cannot serialize {type(doc).__name__} in a report")


def canonical_json(doc) -> str:
    """Deterministic JSON text for a report document."""
    out = []
    _write_json(doc, out)
    out.append("\n")
    return "".join(out)


def emit_report(kind: str, body: dict, inputs: dict = None) -> bytes:
    """Render one report as canonical JSON bytes, validating its schema."""
    if kind not in REPORT_SCHEMAS:
        raise SchemaViolation(f"unknown report kind {kind!r}")
    if set(body) != REPORT_SCHEMAS[kind]:
        raise SchemaViolation(
            f"{kind} body keys {sorted(body)} != schema {sorted(REPORT_SCHEMAS[kind])}")
    doc = {"kind": kind, "tool_version": __version__,
           "inputs": inputs or {}, "body": body}
    return canonical_json(doc).encode("utf-8")


# --- argument plumbing -------------------------------------------------------

class UsageError(Exception):
    """Flag combination errors detected after argparse has run."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_fmt(text: str):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected x,y,z,b with 4 fields, got {text!r}")
    try:
        x, y, z = (int(p) for p in parts[:3])
    except ValueError:
        raise argparse.ArgumentTypeError(f"x, y, z must be integers in {text!r}")
    if parts[3].strip() == "*":
        return ("*", x, y, z)
    try:
        b = int(parts[3])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bias must be an integer or '*' in {text!r}")
    try:
        return make_format(x, y, z, b)
    except FFP8Error as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _parse_y_range(text: str):
    lo, sep, hi = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}")
    try:
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers in A..B, got {text!r}")
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"need 1 <= A <= B, got {text!r}")
    return (lo, hi)


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text!r}")
    return value


def _resolve_fmt(spec, values) -> FormatSpec:
    """Turn a parsed --fmt into a concrete format for a target tensor.

    A '*' bias anchors to the tensor's largest magnitude; an all-zero
    tensor falls back to the conventional default bias.
    """
    if isinstance(spec, FormatSpec):
        return spec
    _, x, y, z = spec
    mags = np.abs(np.asarray(values, dtype=np.float64))
    mm = float(mags.max()) if mags.size else 0.0
    b = bias_star(y, z, mm) if mm > 0.0 else default_bias(y)
    return make_format(x, y, z, b)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _deliver(report: bytes, out_path) -> None:
    if out_path:
        with open(out_path, "wb") as fh:
            fh.write(report)
    else:
        sys.stdout.buffer.write(report)
        sys.stdout.buffer.flush()


def _diagnose(message: str) -> None:
    color = sys.stderr.isatty() and not os.environ.get("FFP8_NO_COLOR")
    prefix = "\x1b[31merror:\x1b[0m" if color else "error:"
    print(f"{prefix} {message}", file=sys.stderr)


# --- shared helpers ----------------------------------------------------------

def _fmt_doc(fmt: FormatSpec) -> dict:
    return {"x": fmt.x, "y": fmt.y, "z": fmt.z, "b": fmt.b, "n": fmt.n}


def _stats_doc(st) -> dict:
    return {
        "total_count": st.total_count,
        "zero_count": st.zero_count,
        "negative_count": st.negative_count,
        "max_mag": st.max_mag,
        "min_nonzero_mag": st.min_nonzero_mag,
        "log2_hist": [[e, st.log2_hist[e]] for e in sorted(st.log2_hist)],
    }


def _tensor_values(t) -> np.ndarray:
    if t.dtype == DTYPE_FFP8:
        return decode_array(t.fmt, t.payload)
    return np.asarray(t.payload, dtype=np.float64)


def _dataset_from_bundle(model, seed_override):
    meta = model.metadata
    if "dataset.seed" not in meta:
        raise EmptyModel("bundle carries no dataset metadata; cannot rebuild the dataset")
    seed = seed_override if seed_override is not None else int(meta["dataset.seed"])
    return make_dataset(
        n_samples=int(meta["dataset.samples"]),
        n_features=int(meta["dataset.features"]),
        n_classes=int(meta["dataset.classes"]),
        seed=seed,
        separation=float(meta.get("dataset.separation", toynet.CLASS_SEPARATION)),
        noise=float(meta.get("dataset.noise", 0.25)),
        scale=float(meta.get("dataset.scale", 64.0)),
    )


def _dataset_doc(ds) -> dict:
    return {"seed": ds.seed, "samples": len(ds.x_train) + len(ds.x_val),
            "features": ds.n_features, "classes": ds.n_classes}


def _dense_layers(model):
    layers = toynet.dense_layers(model)
    if not layers:
        raise EmptyModel("bundle has no dense layers")
    return layers


# --- subcommands -------------------------------------------------------------

def _cmd_inspect(args) -> int:
    if not isinstance(args.fmt, FormatSpec):
        raise UsageError("--fmt: bias '*' needs a target tensor; give an explicit bias")
    wnd = range_window(args.fmt)
    body = {
        "format": _fmt_doc(args.fmt),
        "default_bias": default_bias(args.fmt.y),
        "window": {"min_subnormal": wnd.min_subnormal,
                   "min_normal": wnd.min_normal, "max": wnd.max},
        "distinct_values": len(enumerate_values(args.fmt)),
    }
    _deliver(emit_report("format_table", body), args.out)
    return 0


def _cmd_analyze(args) -> int:
    digest = {"bundle": _sha256(args.bundle)}
    model = read_bundle(args.bundle)
    rows = []
    for name in sorted(model.tensors):
        t = model.tensors[name]
        values = _tensor_values(t)
        st = tensor_stats(values)
        row = {"name": name, "role": t.role, "dtype": "ffp8" if t.dtype == DTYPE_FFP8 else "fp32",
               "shape": list(t.shape), "stats": _stats_doc(st),
               "format": None, "coverage": None, "error": None}
        if args.fmt is not None:
            fmt = _resolve_fmt(args.fmt, values)
            cov = coverage(st, fmt, values=values)
            rep = error_metrics(values, fmt)
            row["format"] = _fmt_doc(fmt)
            row["coverage"] = {
                "below_window_frac": cov.below_window_frac,
                "in_denorm_frac": cov.in_denorm_frac,
                "in_norm_frac": cov.in_norm_frac,
                "above_window_frac": cov.above_window_frac,
            }
            row["error"] = {"mse": rep.mse, "max_abs_err": rep.max_abs_err,
                            "sqnr_db": rep.sqnr_db}
        rows.append(row)
    top = _fmt_doc(args.fmt) if isinstance(args.fmt, FormatSpec) else None
    _deliver(emit_report("coverage", {"format": top, "tensors": rows}, digest), args.out)
    return 0


def _cmd_search(args) -> int:
    digest = {"bundle": _sha256(args.bundle)}
    model = read_bundle(args.bundle)
    ds = _dataset_from_bundle(model, args.seed)
    try:
        cfg = SearchConfig(y_range=args.y_range, bias_sweep=args.bias_sweep,
                           objective=args.objective)
    except ValueError as exc:
        raise UsageError(str(exc))
    calib = (ds.x_train[:CALIBRATION_SAMPLES], ds.y_train[:CALIBRATION_SAMPLES])
    assignment = layerwise_optimize(model, calib, cfg)
    if args.out:
        save_assignment(assignment, args.out)
    body = {
        "objective": cfg.objective,
        "config": {"n": cfg.n, "y_range": list(cfg.y_range),
                   "bias_sweep": cfg.bias_sweep, "allow_unsigned": cfg.allow_unsigned},
        "records": assignment.to_records(),
    }
    sys.stdout.buffer.write(emit_report("search_result", body, digest))
    sys.stdout.buffer.flush()
    return 0


def _cmd_quantize(args) -> int:
    if (args.assignment is None) == (args.fmt is None):
        raise UsageError("give exactly one of --assignment or --fmt")
    model = read_bundle(args.bundle)
    assignment = load_assignment(args.assignment) if args.assignment else None
    for layer in _dense_layers(model):
        wt = model.tensors[layer.tensors[0]]
        if wt.dtype != DTYPE_FP32:
            continue
        fmt = (assignment.weight_format(layer.name) if assignment
               else _resolve_fmt(args.fmt, wt.payload))
        model.tensors[layer.tensors[0]] = quantize_tensor(wt, fmt)[0]
    write_bundle(model, args.out)
    return 0


def _cmd_dequantize(args) -> int:
    model = read_bundle(args.bundle)
    for name, t in list(model.tensors.items()):
        if t.dtype == DTYPE_FFP8:
            model.tensors[name] = dequantize_tensor(t)
    write_bundle(model, args.out)
    return 0


def _cmd_train(args) -> int:
    ds = make_dataset(seed=args.seed)
    model = train_baseline(ds, seed=args.seed)
    write_bundle(model, args.out)
    body = {"mode": "fp32", "accuracy": evaluate(model, ds), "dataset": _dataset_doc(ds)}
    sys.stdout.buffer.write(emit_report("eval", body))
    sys.stdout.buffer.flush()
    return 0


def _cmd_eval(args) -> int:
    digest = {"bundle": _sha256(args.bundle)}
    model = read_bundle(args.bundle)
    assignment = None
    if args.assignment:
        digest["assignment"] = _sha256(args.assignment)
        assignment = load_assignment(args.assignment)
    ds = _dataset_from_bundle(model, args.seed)
    body = {"mode": "quantized" if assignment else "fp32",
            "accuracy": evaluate(model, ds, assignment),
            "dataset": _dataset_doc(ds)}
    _deliver(emit_report("eval", body, digest), args.out)
    return 0


def _cmd_convert(args) -> int:
    model = read_bundle(args.bundle)
    tensors = {}
    for name in sorted(model.tensors):
        t = model.tensors[name]
        if t.dtype != DTYPE_FFP8:
            continue
        bits = to_fp32_bits_array(t.fmt, t.payload).ravel()
        tensors[name] = {"format": _fmt_doc(t.fmt), "shape": list(t.shape),
                         "fp32_hex": [f"0x{b:08X}" for b in bits]}
    doc = {"bundle_sha256": _sha256(args.bundle), "tensors": tensors}
    _deliver(canonical_json(doc).encode("utf-8"), args.out)
    return 0


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ffp8", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ffp8 {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("inspect", help="describe one format: window, bias, value count")
    p.add_argument("--fmt", type=_parse_fmt, required=True, metavar="x,y,z,b")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("analyze", help="tensor statistics and window coverage for a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--fmt", type=_parse_fmt, metavar="x,y,z,b")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("search", help="derive a per-layer format assignment")
    p.add_argument("--bundle", required=True)
    p.add_argument("--objective", choices=("sqnr", "accuracy"), default="sqnr")
    p.add_argument("--y-range", type=_parse_y_range, default=(1, 6), metavar="A..B")
    p.add_argument("--bias-sweep", type=_nonneg_int, default=8, metavar="K")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write the assignment JSON here")
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("quantize", help="store dense-layer weights as FFP8 codes")
    p.add_argument("--bundle", required=True)
    p.add_argument("--assignment")
    p.add_argument("--fmt", type=_parse_fmt, metavar="x,y,z,b")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_quantize)

    p = sub.add_parser("dequantize", help="decode FFP8 tensors back to FP32")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dequantize)

    p = sub.add_parser("train", help="train the reference classifier and save it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="validation accuracy, FP32 or quantized")
    p.add_argument("--bundle", required=True)
    p.add_argument("--assignment")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("convert", help="dump FP32 bit patterns of stored FFP8 codes")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_convert)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _diagnose(str(exc))
        return 1
    except FFP8Error as exc:
        _diagnose(f"{type(exc).__name__}: {exc}")
        return 2
    except FileNotFoundError as exc:
        _diagnose(f"cannot read {exc.filename}")
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Best-fit format search and layer-wise format assignment.

The search space for a tensor is parameterized by a total width, a range
of exponent widths, and a bias sweep depth. For each exponent width the
anchor bias is the largest bias whose representable window still covers
the tensor's largest magnitude; sweeping a few biases below the anchor
trades headroom for resolution. Candidates that cover the maximum are
preferred over ones that saturate; among those the highest-SQNR format
wins, with deterministic tie-breaking.

Layer-wise optimization refines one global format per role (weight,
activation) into per-layer variants: the bias is re-anchored to each
layer's own magnitude range, the sign bit of provably non-negative
activation tensors is traded for an extra fraction bit, and under the
accuracy objective each refinement must not reduce calibration accuracy
to be kept.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import toynet
from .analysis import TensorStats, error_metrics, tensor_stats
from .bundle import DTYPE_FFP8, ModelBundle
from .errors import (
    EmptyCalibration,
    EmptyCandidates,
    EmptyModel,
    MissingAssignment,
    NonPositiveMax,
)
from .formats import (
    MAX_BIAS,
    MAX_WIDTH,
    MIN_BIAS,
    MIN_WIDTH,
    FormatSpec,
    decode_array,
    default_bias,
    make_format,
    range_window,
)

OBJECTIVES = ("sqnr", "accuracy")


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for the candidate enumeration and selection."""

    n: int = 8
    y_range: tuple = (1, 6)
    bias_sweep: int = 8
    allow_unsigned: bool = True
    objective: str = "sqnr"

    def __post_init__(self):
        if not MIN_WIDTH <= self.n <= MAX_WIDTH:
            raise ValueError(f"total width must be in [{MIN_WIDTH}, {MAX_WIDTH}], got {self.n}")
        lo, hi = self.y_range
        if lo < 1 or hi < lo:
            raise ValueError(f"exponent width range must satisfy 1 <= lo <= hi, got {self.y_range}")
        if self.bias_sweep < 0:
            raise ValueError(f"bias sweep depth must be >= 0, got {self.bias_sweep}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")


def bias_star(y: int, z: int, max_mag: float) -> int:
    """Largest bias whose window max still reaches max_mag, clamped to range.

    Exact for every finite positive input: the comparison between the
    window maximum (2 - 2**-z) * 2**(2**y - 1 - b) and max_mag is done in
    integer arithmetic on the float's significand, so no rounding can
    flip the answer at window boundaries.
    """
    max_mag = float(max_mag)
    if not math.isfinite(max_mag) or max_mag <= 0.0:
        raise NonPositiveMax(f"largest magnitude must be positive and finite, got {max_mag!r}")
    m, e = math.frexp(max_mag)
    mant = int(math.ldexp(m, 53))
    c = (1 << (z + 1)) - 1
    # Window max with top exponent k is c * 2**(k - z); it lies in
    # [2**k, 2**(k+1)), so only k = e - 1 and k = e can straddle max_mag.
    k = e - 1 if (c << (52 - z)) >= mant else e
    b = ((1 << y) - 1) - k
    return min(max(b, MIN_BIAS), MAX_BIAS)


def elide_sign(stats: TensorStats) -> bool:
    """True when the tensor holds no negative value."""
    return stats.negative_count == 0


def candidate_formats(stats: TensorStats, cfg: SearchConfig = None) -> list:
    """Enumerate candidate formats for a tensor with the given stats.

    One sign-bit choice (unsigned only when allowed and provably safe),
    exponent widths ascending through cfg.y_range, and per width the
    anchor bias, cfg.bias_sweep biases below it, plus the conventional
    default bias when distinct. All-zero tensors get only the default
    bias since there is no magnitude to anchor on.
    """
    cfg = cfg or SearchConfig()
    x = 0 if cfg.allow_unsigned and elide_sign(stats) else 1
    out = []
    for y in range(cfg.y_range[0], cfg.y_range[1] + 1):
        z = cfg.n - x - y
        if z < 0:
            continue
        if stats.max_mag > 0.0:
            star = bias_star(y, z, stats.max_mag)
            sweep = [star - i for i in range(cfg.bias_sweep + 1)]
        else:
            sweep = []
        sweep.append(default_bias(y))
        biases = []
        for b in sweep:
            b = min(max(b, MIN_BIAS), MAX_BIAS)
            if b not in biases:
                biases.append(b)
        out.extend(make_format(x, y, z, b, n=cfg.n) for b in biases)
    return out


def _tensor_values(obj) -> np.ndarray:
    if hasattr(obj, "payload"):
        if obj.dtype == DTYPE_FFP8:
            return decode_array(obj.fmt, obj.payload)
        return np.asarray(obj.payload, dtype=np.float64)
    return np.asarray(obj, dtype=np.float64)


def select_format(values, cfg: SearchConfig = None):
    """Pick the best candidate format for a tensor.

    Returns (format, report). Candidates whose window covers the largest
    magnitude are preferred over saturating ones; within the pool the
    selection key is highest SQNR, then narrower exponent, then larger
    bias, then unsigned. That key is a total order over candidates, so
    the winner does not depend on enumeration order. The accuracy
    objective also ranks by SQNR here; accuracy only arbitrates at the
    model level, where it is defined.

    Accepts a raw array or a bundle tensor (FFP8 tensors are decoded).
    """
    cfg = cfg or SearchConfig()
    arr = _tensor_values(values)
    stats = tensor_stats(arr)
    cands = candidate_formats(stats, cfg)
    if not cands:
        raise EmptyCandidates(f"no representable format in {cfg}")
    covering = [f for f in cands if range_window(f).max >= stats.max_mag]
    pool = covering or cands
    reports = {fmt: error_metrics(arr, fmt) for fmt in pool}
    best = max(pool, key=lambda f: (reports[f].sqnr_db, -f.y, f.b, -f.x))
    return best, reports[best]


@dataclass
class Assignment:
    """Formats chosen per layer and role, with global fallbacks.

    Lookups fall back to the global format for the role; a miss with no
    fallback raises MissingAssignment. Global rows serialize under the
    layer name "*".
    """

    weights: dict = field(default_factory=dict)
    activations: dict = field(default_factory=dict)
    global_weight: FormatSpec = None
    global_activation: FormatSpec = None

    @classmethod
    def uniform(cls, fmt: FormatSpec) -> "Assignment":
        """One format for every weight and activation tensor."""
        return cls(global_weight=fmt, global_activation=fmt)

    def weight_format(self, layer: str) -> FormatSpec:
        fmt = self.weights.get(layer, self.global_weight)
        if fmt is None:
            raise MissingAssignment(f"no weight format for layer {layer!r}")
        return fmt

    def activation_format(self, layer: str) -> FormatSpec:
        fmt = self.activations.get(layer, self.global_activation)
        if fmt is None:
            raise MissingAssignment(f"no activation format for layer {layer!r}")
        return fmt

    def to_records(self) -> list:
        rows = []
        if self.global_weight is not None:
            rows.append(("*", "weight", self.global_weight))
        if self.global_activation is not None:
            rows.append(("*", "activation", self.global_activation))
        rows.extend((name, "weight", fmt) for name, fmt in self.weights.items())
        rows.extend((name, "activation", fmt) for name, fmt in self.activations.items())
        rows.sort(key=lambda r: (r[0] != "*", r[0], r[1]))
        return [{"layer": name, "role": role,
                 "x": fmt.x, "y": fmt.y, "z": fmt.z, "b": fmt.b}
                for name, role, fmt in rows]

    @classmethod
    def from_records(cls, records) -> "Assignment":
        out = cls()
        for rec in records:
            fmt = make_format(int(rec["x"]), int(rec["y"]), int(rec["z"]), int(rec["b"]))
            layer, role = rec["layer"], rec["role"]
            if role == "weight":
                if layer == "*":
                    out.global_weight = fmt
                else:
                    out.weights[layer] = fmt
            elif role == "activation":
                if layer == "*":
                    out.global_activation = fmt
                else:
                    out.activations[layer] = fmt
            else:
                raise ValueError(f"unknown role {role!r} in assignment record")
        return out


def save_assignment(assignment: Assignment, path) -> None:
    """Write an assignment as deterministic JSON."""
    doc = {"kind": "assignment", "records": assignment.to_records()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_assignment(path) -> Assignment:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    records = doc["records"] if isinstance(doc, dict) else doc
    return Assignment.from_records(records)


def _refit_bias(base: FormatSpec, values: np.ndarray, n: int) -> FormatSpec:
    mm = float(np.max(np.abs(values))) if values.size else 0.0
    if mm <= 0.0:
        return base
    return make_format(base.x, base.y, base.z, bias_star(base.y, base.z, mm), n=n)


def _calib_arrays(calib):
    if isinstance(calib, toynet.ToyDataset):
        return np.asarray(calib.x_train), np.asarray(calib.y_train)
    if isinstance(calib, tuple):
        x, y = calib
        return np.asarray(x), (None if y is None else np.asarray(y))
    return np.asarray(calib), None


def _accuracy(model: ModelBundle, x, y, assignment: Assignment) -> float:
    logits, _ = toynet.forward(model, x, assignment)
    return float((logits.argmax(axis=1) == y).mean())


def layerwise_optimize(model: ModelBundle, calib, cfg: SearchConfig = None) -> Assignment:
    """Derive a per-layer format assignment from calibration data.

    Stages: run the FP32 network over the calibration batch to collect
    the tensor feeding each dense layer; pick one global format per role
    over the pooled weights and pooled activations; re-anchor the bias of
    each layer's copy to that layer's own maximum; trade the sign bit for
    a fraction bit on activation tensors that are non-negative on the
    calibration batch; and, under the accuracy objective, keep each
    per-layer refinement only if calibration accuracy does not drop
    relative to the running assignment.

    calib may be an array of inputs, an (inputs, labels) tuple, or a
    ToyDataset (its training split is used). Labels are required only by
    the accuracy objective.
    """
    cfg = cfg or SearchConfig()
    x, labels = _calib_arrays(calib)
    if x.size == 0:
        raise EmptyCalibration("calibration batch is empty")
    layers = toynet.dense_layers(model)
    if not layers:
        raise EmptyModel("model has no dense layers")

    _, trace = toynet.forward(model, x)
    feeding = {layers[0].name: np.asarray(trace.inputs, dtype=np.float64)}
    for post, nxt in zip(trace.post_activations, layers[1:]):
        feeding[nxt.name] = np.asarray(post, dtype=np.float64)
    weights = {l.name: _tensor_values(model.tensors[l.tensors[0]]) for l in layers}

    gw, _ = select_format(np.concatenate([np.ravel(v) for v in weights.values()]), cfg)
    ga, _ = select_format(np.concatenate([np.ravel(v) for v in feeding.values()]), cfg)

    wfmt, afmt = {}, {}
    for l in layers:
        wfmt[l.name] = _refit_bias(gw, weights[l.name], cfg.n)
        act = _refit_bias(ga, feeding[l.name], cfg.n)
        if cfg.allow_unsigned and act.x == 1 and not (feeding[l.name] < 0).any():
            act = make_format(0, act.y, act.z + 1, act.b, n=cfg.n)
        afmt[l.name] = act

    if cfg.objective != "accuracy":
        return Assignment(weights=wfmt, activations=afmt,
                          global_weight=gw, global_activation=ga)

    if labels is None:
        raise EmptyCalibration("accuracy objective needs labeled calibration data")
    accepted_w, accepted_a = {}, {}
    best = _accuracy(model, x, labels, Assignment({}, {}, gw, ga))
    for l in layers:
        for role, fmt in (("weight", wfmt[l.name]), ("activation", afmt[l.name])):
            tw, ta = dict(accepted_w), dict(accepted_a)
            (tw if role == "weight" else ta)[l.name] = fmt
            acc = _accuracy(model, x, labels, Assignment(tw, ta, gw, ga))
            if acc >= best:
                best, accepted_w, accepted_a = acc, tw, ta
    return Assignment(accepted_w, accepted_a, gw, ga)

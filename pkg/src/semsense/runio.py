"""Artifact persistence for runs: binary CSI, JSON records, tidy CSVs.

Everything written here is deterministic for a fixed config and seed:
JSON is dumped with sorted keys, floats serialize through ``repr`` (the
shortest round-trip form), and nothing volatile — timestamps, wall-clock
— goes anywhere except ``metadata.json``.  That makes whole run
directories byte-comparable across repeat invocations.
"""

import hashlib
import json
from pathlib import Path
import struct
import time

import numpy as np

from .channel import CsiTensor, PathComponent, PhysicalSemantics, SamplingGrid
from .errors import ConfigError
from .mapper import MapperArch, MapperParams
from .models import ModelParams

SCHEMA_VERSION = 1

_CSI_MAGIC = b"CSIT"
_CSI_VERSION = 1
# magic, format version, (packets, subcarriers, antennas), then
# packet_interval, subcarrier_spacing, carrier_freq, antenna_spacing.
_CSI_HEADER = struct.Struct("<4sI3I4d")


# --- CSI tensors -------------------------------------------------------------

def save_csi(path, csi: CsiTensor):
    """Binary dump: fixed little-endian header + interleaved re/im f64."""
    g = csi.grid
    header = _CSI_HEADER.pack(
        _CSI_MAGIC,
        _CSI_VERSION,
        g.num_packets,
        g.num_subcarriers,
        g.num_antennas,
        g.packet_interval,
        g.subcarrier_spacing,
        g.carrier_freq,
        g.antenna_spacing,
    )
    flat = np.ascontiguousarray(csi.samples, dtype=np.complex128).ravel()
    payload = np.asarray(flat.view(np.float64), dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return Path(path)


def load_csi(path) -> CsiTensor:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _CSI_HEADER.size or blob[:4] != _CSI_MAGIC:
        raise ConfigError(f"{path} is not a CSI tensor file")
    (_, version, n_pkt, n_sub, n_ant, d_t, d_f, f_c, d_b) = \
        _CSI_HEADER.unpack_from(blob)
    if version != _CSI_VERSION:
        raise ConfigError(f"unsupported CSI file version {version}")
    expected = n_pkt * n_sub * n_ant * 16
    if len(blob) - _CSI_HEADER.size != expected:
        raise ConfigError(
            f"CSI payload is {len(blob) - _CSI_HEADER.size} bytes, "
            f"expected {expected}"
        )
    raw = np.frombuffer(blob, dtype="<f8", offset=_CSI_HEADER.size)
    samples = raw.astype(np.float64).view(np.complex128)
    grid = SamplingGrid(n_pkt, n_sub, n_ant, d_t, d_f, f_c, d_b)
    return CsiTensor(samples.reshape(grid.shape).copy(), grid)


def csi_to_csv(path, csi: CsiTensor):
    """Debug-friendly flat export: one row per (packet, subcarrier, antenna)."""
    lines = ["packet,subcarrier,antenna,re,im"]
    n_pkt, n_sub, n_ant = csi.samples.shape
    for a in range(n_pkt):
        for s in range(n_sub):
            for b in range(n_ant):
                v = csi.samples[a, s, b]
                lines.append(
                    f"{a},{s},{b},{float(v.real)!r},{float(v.imag)!r}"
                )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


# --- JSON primitives ---------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def save_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    Path(path).write_text(text + "\n", encoding="utf-8")
    return Path(path)


def load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}")


# --- semantics records -------------------------------------------------------

def _path_record(p: PathComponent) -> dict:
    return {
        "kind": p.kind,
        "amplitude": float(p.amplitude),
        "tof": float(p.tof),
        "aoa": float(p.aoa),
        "dfs": None if p.dfs is None else float(p.dfs),
    }


def semantics_to_dict(sem: PhysicalSemantics) -> dict:
    return {
        "receiver_id": sem.receiver_id,
        "environment_paths": [_path_record(p) for p in sem.environment_paths],
        "gesture_paths": [_path_record(p) for p in sem.gesture_paths],
    }


def semantics_from_dict(data: dict) -> PhysicalSemantics:
    def mk(rec):
        return PathComponent(
            amplitude=rec["amplitude"],
            tof=rec["tof"],
            aoa=rec["aoa"],
            dfs=rec.get("dfs"),
            kind=rec["kind"],
        )

    return PhysicalSemantics(
        environment_paths=tuple(mk(r) for r in data["environment_paths"]),
        gesture_paths=tuple(mk(r) for r in data["gesture_paths"]),
        receiver_id=data.get("receiver_id", ""),
    )


def estimation_meta(result) -> dict:
    """Loop diagnostics worth keeping next to estimated semantics."""
    meta = {
        "sweeps_used": int(result.sweeps_used),
        "converged": bool(result.converged),
        "final_change": float(result.final_change),
    }
    if result.dynamic_residuals:
        meta["final_dynamic_residual"] = float(result.dynamic_residuals[-1])
    if result.static_residuals:
        meta["final_static_residual"] = float(result.static_residuals[-1])
    return meta


def save_semantics(path, semantics: PhysicalSemantics, estimator_meta=None):
    save_json(
        path,
        {
            "schema_version": SCHEMA_VERSION,
            "semantics": semantics_to_dict(semantics),
            "estimator": dict(estimator_meta or {}),
        },
    )
    return Path(path)


def load_semantics(path):
    data = load_json(path)
    return semantics_from_dict(data["semantics"]), data.get("estimator", {})


# --- model and mapper parameters --------------------------------------------

def save_models(path, named_params):
    """``named_params``: list of (receiver_id, ModelParams)."""
    save_json(
        path,
        {
            "schema_version": SCHEMA_VERSION,
            "models": [
                {
                    "receiver_id": rid,
                    "arch": dict(p.arch),
                    "values": np.asarray(p.values).tolist(),
                }
                for rid, p in named_params
            ],
        },
    )
    return Path(path)


def load_models(path):
    data = load_json(path)
    return [
        (rec["receiver_id"], ModelParams(np.array(rec["values"]), rec["arch"]))
        for rec in data["models"]
    ]


def save_mapper(path, mapper: MapperParams):
    save_json(
        path,
        {
            "schema_version": SCHEMA_VERSION,
            "arch": {
                "feature_dim": mapper.arch.feature_dim,
                "hidden": mapper.arch.hidden,
                "embed_dim": mapper.arch.embed_dim,
                "corr_hidden": mapper.arch.corr_hidden,
                "corr_features": mapper.arch.corr_features,
            },
            "embed_params": np.asarray(mapper.embed_params).tolist(),
            "score_params": np.asarray(mapper.score_params).tolist(),
            "center": np.asarray(mapper.center).tolist(),
            "spread": float(mapper.spread),
        },
    )
    return Path(path)


def load_mapper(path) -> MapperParams:
    data = load_json(path)
    arch = MapperArch(**data["arch"])
    return MapperParams(
        embed_params=np.array(data["embed_params"]),
        score_params=np.array(data["score_params"]),
        arch=arch,
        center=np.array(data["center"]),
        spread=data["spread"],
    )


# --- convergence traces ------------------------------------------------------

def trace_to_csv(path, trace):
    """Per-round objective and losses; wall-clock deliberately excluded."""
    if not trace.rounds:
        Path(path).write_text("round,objective\n", encoding="utf-8")
        return Path(path)
    k = len(trace.per_receiver_loss[0])
    cols = ["round", "objective"]
    cols += [f"loss_{i}" for i in range(k)]
    cols += ["mixing_offdiag_min", "mixing_offdiag_max"]
    lines = [",".join(cols)]
    for i, t in enumerate(trace.rounds):
        row = [str(t), repr(float(trace.objective[i]))]
        row += [repr(float(v)) for v in trace.per_receiver_loss[i]]
        row += [
            repr(float(trace.mixing_offdiag_min[i])),
            repr(float(trace.mixing_offdiag_max[i])),
        ]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def transfer_report_to_dict(report) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "source_ids": list(report.source_ids),
        "mean_transferred_accuracy": float(report.mean_transferred_accuracy),
        "mean_oracle_accuracy": float(report.mean_oracle_accuracy),
        "training_gap": float(report.training_gap),
        "outcomes": [
            {
                "target_id": o.target_id,
                "weights": np.asarray(o.weights).tolist(),
                "transferred_loss": float(o.transferred_loss),
                "oracle_loss": float(o.oracle_loss),
                "transfer_error": float(o.transfer_error),
                "transferred_accuracy": float(o.transferred_accuracy),
                "oracle_accuracy": float(o.oracle_accuracy),
                "accuracy_gap": float(o.accuracy_gap),
                "bound_value": None if o.bound_value is None
                else float(o.bound_value),
                "tv_to_sources": [float(v) for v in o.tv_to_sources],
                "bound_report": o.bound_report.as_dict(),
                "transferred_values": np.asarray(o.transferred.values).tolist(),
                "oracle_values": np.asarray(o.oracle.values).tolist(),
            }
            for o in report.outcomes
        ],
    }


# --- hashing and run directories --------------------------------------------

def hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def content_hash(paths) -> str:
    """Order-sensitive digest over input files (name + size + bytes)."""
    h = hashlib.sha256()
    for p in paths:
        p = Path(p)
        blob = p.read_bytes()
        h.update(p.name.encode("utf-8"))
        h.update(b"\0")
        h.update(str(len(blob)).encode("ascii"))
        h.update(b"\0")
        h.update(blob)
    return h.hexdigest()


class RunDirectory:
    """All writes for one run funnel through this single helper.

    ``metadata.json`` is the only file allowed to contain volatile data
    (timestamps); everything else must be a pure function of config and
    seed so repeat runs are byte-identical.
    """

    def __init__(self, root, create=True):
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name) -> Path:
        return self.root / name

    def write_json(self, name, obj) -> Path:
        return save_json(self.path(name), obj)

    def write_text(self, name, text) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return p

    def write_config_echo(self, cfg_dict, seed, input_hash="") -> Path:
        return self.write_json(
            "config_echo.json",
            {
                "schema_version": SCHEMA_VERSION,
                "seed": seed,
                "input_hash": input_hash,
                "config": cfg_dict,
            },
        )

    def write_metadata(self, **extra) -> Path:
        now = time.time()
        payload = {
            "created_unix": now,
            "created_iso": time.strftime(
                "%Y-%m-%dT%H:%M:%SZ", time.gmtime(now)
            ),
        }
        payload.update(extra)
        return self.write_json("metadata.json", payload)


# --- tidy plot data ----------------------------------------------------------

_PLOT_FAMILIES = (
    ("sweep_lambda.json", "lambda_sweep.csv",
     ("lambda", "round", "J", "mean_accuracy")),
    ("sweep_kl.json", "kl_sweep.csv",
     ("k_l", "scenario", "seed", "transfer_accuracy")),
    ("sweep_eb.json", "eb_sweep.csv",
     ("E", "B", "rounds_to_target", "final_J")),
)


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def emit_plotdata(run_dir):
    """Reshape stored sweep results into one tidy CSV per figure family.

    Returns the list of CSV paths written; sweep families the run never
    produced are skipped.
    """
    rd = Path(run_dir)
    if not rd.is_dir():
        raise ConfigError(f"run directory not found: {run_dir}")
    written = []
    for src_name, dst_name, cols in _PLOT_FAMILIES:
        src = rd / src_name
        if not src.exists():
            continue
        rows = load_json(src)["rows"]
        lines = [",".join(cols)]
        for row in rows:
            lines.append(",".join(_csv_cell(row[c]) for c in cols))
        dst = rd / dst_name
        dst.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(dst)
    return written

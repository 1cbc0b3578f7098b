"""File formats: traces, feature datasets, models, manifests.

All binary layouts are little-endian.

Trace file:    magic "AFCI" | u16 version | u32 sample_rate | u64 count |
               count * f32 samples
Feature file:  magic "AFCF" | u16 version | u32 dim | u64 count |
               count*dim f32 rows | count u8 labels
               (JSON sidecar <file>.json carries the FeatureConfig)
Model file:    magic "AFCM" | u16 version | u32 header_len | header JSON |
               concatenated f32 tensor payload (header carries the
               named-tensor index with shapes and offsets)
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FeatureConfig, featurize_frames, segment
from .nn import ArchSpec, Model, Params
from .synth import DatasetManifest, SignalTrace, TraceEntry

TRACE_MAGIC = b"AFCI"
FEATURE_MAGIC = b"AFCF"
MODEL_MAGIC = b"AFCM"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """File does not match the expected binary layout."""


def _canonical_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode()


# ---------------------------------------------------------------------------
# Trace files


def write_trace(path: str | Path, trace: SignalTrace) -> None:
    samples = np.asarray(trace.samples, dtype="<f4")
    header = TRACE_MAGIC + struct.pack("<HIQ", FORMAT_VERSION,
                                       int(trace.sample_rate), len(samples))
    Path(path).write_bytes(header + samples.tobytes())


def read_trace_samples(path: str | Path) -> tuple[np.ndarray, float]:
    """Read (samples, sample_rate) from a trace file."""
    raw = Path(path).read_bytes()
    if len(raw) < 18 or raw[:4] != TRACE_MAGIC:
        raise FormatError(f"{path}: not a trace file (bad magic)")
    version, rate, count = struct.unpack("<HIQ", raw[4:18])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported trace format version {version}")
    expected = 18 + 4 * count
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    samples = np.frombuffer(raw[18:], dtype="<f4").copy()
    return samples, float(rate)


def load_trace(path: str | Path, entry: TraceEntry) -> SignalTrace:
    """Rehydrate a SignalTrace from a trace file plus its manifest entry."""
    samples, rate = read_trace_samples(path)
    if len(samples) != entry.n_samples:
        raise FormatError(f"{path}: sample count does not match manifest")
    return SignalTrace(
        samples=samples,
        sample_rate=rate,
        frame_labels=np.array(entry.frame_labels, dtype=np.uint8),
        profile_id=entry.profile_id,
        category=entry.category,
        frame_len=entry.frame_len,
        onset_index=entry.onset_index,
        trace_id=entry.trace_id,
    )


# ---------------------------------------------------------------------------
# Manifests


def manifest_to_bytes(manifest: DatasetManifest) -> bytes:
    payload = {
        "seed": manifest.seed,
        "per_category_count": manifest.per_category_count,
        "duration": manifest.duration,
        "profile_ids": list(manifest.profile_ids),
        "class_balance": manifest.class_balance(),
        "entries": [
            {**dataclasses.asdict(e), "frame_labels": list(e.frame_labels)}
            for e in manifest.entries
        ],
    }
    return _canonical_json(payload)


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    Path(path).write_bytes(manifest_to_bytes(manifest))


def read_manifest(path: str | Path) -> DatasetManifest:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a manifest ({exc})") from exc
    entries = [
        TraceEntry(
            trace_id=e["trace_id"],
            profile_id=e["profile_id"],
            category=e["category"],
            sub_condition=e["sub_condition"],
            repetition=e["repetition"],
            seed=e["seed"],
            n_samples=e["n_samples"],
            sample_rate=e["sample_rate"],
            frame_len=e["frame_len"],
            onset_index=e["onset_index"],
            frame_labels=tuple(e["frame_labels"]),
            file=e.get("file", ""),
        )
        for e in payload["entries"]
    ]
    return DatasetManifest(
        seed=payload["seed"],
        per_category_count=payload["per_category_count"],
        duration=payload["duration"],
        profile_ids=tuple(payload["profile_ids"]),
        entries=entries,
    )


# ---------------------------------------------------------------------------
# Feature datasets


@dataclass
class FeatureDataset:
    """Featurized frames (n, dim) float32 with parallel uint8 labels."""

    x: np.ndarray
    y: np.ndarray
    config: FeatureConfig

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float32)
        self.y = np.asarray(self.y, dtype=np.uint8)
        if self.x.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x must be (n, dim) with matching labels")

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx: np.ndarray) -> "FeatureDataset":
        return FeatureDataset(self.x[idx], self.y[idx], self.config)

    def concat(self, other: "FeatureDataset") -> "FeatureDataset":
        if other.config != self.config:
            raise ValueError("cannot concat datasets with different configs")
        return FeatureDataset(
            np.concatenate([self.x, other.x]),
            np.concatenate([self.y, other.y]),
            self.config,
        )


def featurize_trace(trace: SignalTrace, config: FeatureConfig) -> FeatureDataset:
    if config.frame_len != trace.frame_len:
        raise ValueError(
            f"config frame_len {config.frame_len} != trace frame_len {trace.frame_len}"
        )
    frames = segment(trace.samples, config)
    x = featurize_frames(frames, config)
    y = trace.frame_labels[: x.shape[0]]
    return FeatureDataset(x, y, config)


def featurize_traces(traces: list[SignalTrace], config: FeatureConfig) -> FeatureDataset:
    parts = [featurize_trace(t, config) for t in traces]
    x = np.concatenate([p.x for p in parts])
    y = np.concatenate([p.y for p in parts])
    return FeatureDataset(x, y, config)


def write_features(path: str | Path, dataset: FeatureDataset) -> None:
    n, dim = dataset.x.shape
    header = FEATURE_MAGIC + struct.pack("<HIQ", FORMAT_VERSION, dim, n)
    body = dataset.x.astype("<f4").tobytes() + dataset.y.astype(np.uint8).tobytes()
    Path(path).write_bytes(header + body)
    sidecar = dataclasses.asdict(dataset.config)
    Path(str(path) + ".json").write_bytes(_canonical_json(sidecar))


def read_features(path: str | Path) -> FeatureDataset:
    raw = Path(path).read_bytes()
    if len(raw) < 18 or raw[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: not a feature file (bad magic)")
    version, dim, n = struct.unpack("<HIQ", raw[4:18])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported feature format version {version}")
    expected = 18 + 4 * dim * n + n
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    x = np.frombuffer(raw[18 : 18 + 4 * dim * n], dtype="<f4").reshape(n, dim).copy()
    y = np.frombuffer(raw[18 + 4 * dim * n :], dtype=np.uint8).copy()
    sidecar = Path(str(path) + ".json")
    if sidecar.exists():
        config = FeatureConfig(**json.loads(sidecar.read_text()))
    else:
        config = FeatureConfig()
    return FeatureDataset(x, y, config)


# ---------------------------------------------------------------------------
# Model files


def model_to_bytes(model: Model) -> bytes:
    names = sorted(model.params)
    tensors = []
    offset = 0
    payload = bytearray()
    for name in names:
        arr = np.asarray(model.params[name], dtype="<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload.extend(arr.tobytes())
        offset += arr.nbytes
    header = _canonical_json(
        {
            "arch": {
                "conv_blocks": [list(b) for b in model.arch.conv_blocks],
                "dropout_p": model.arch.dropout_p,
                "fc_hidden": model.arch.fc_hidden,
                "num_classes": model.arch.num_classes,
                "input_dim": model.arch.input_dim,
            },
            "version_tag": model.version,
            "tensors": tensors,
        }
    )
    return MODEL_MAGIC + struct.pack("<HI", FORMAT_VERSION, len(header)) + header + bytes(payload)


def write_model(path: str | Path, model: Model) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def read_model(path: str | Path) -> Model:
    return model_from_bytes(Path(path).read_bytes(), origin=str(path))


def model_from_bytes(raw: bytes, origin: str = "<bytes>") -> Model:
    if len(raw) < 10 or raw[:4] != MODEL_MAGIC:
        raise FormatError(f"{origin}: not a model file (bad magic)")
    version, header_len = struct.unpack("<HI", raw[4:10])
    if version != FORMAT_VERSION:
        raise FormatError(f"{origin}: unsupported model format version {version}")
    if len(raw) < 10 + header_len:
        raise FormatError(f"{origin}: truncated header")
    header = json.loads(raw[10 : 10 + header_len])
    arch = ArchSpec(
        conv_blocks=tuple(tuple(b) for b in header["arch"]["conv_blocks"]),
        dropout_p=header["arch"]["dropout_p"],
        fc_hidden=header["arch"]["fc_hidden"],
        num_classes=header["arch"]["num_classes"],
        input_dim=header["arch"]["input_dim"],
    )
    payload = raw[10 + header_len :]
    params: Params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = 4 * int(np.prod(shape)) if shape else 4
        chunk = payload[entry["offset"] : entry["offset"] + size]
        if len(chunk) != size:
            raise FormatError(f"{origin}: truncated tensor payload for {entry['name']}")
        params[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
    return Model(arch=arch, params=params, version=header["version_tag"])

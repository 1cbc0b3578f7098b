"""Spectral feature pipeline for current frames.

A raw current trace becomes a sequence of fixed-size log-spectral band
vectors: non-overlapping frames, Hanning window, DFT, DC removal, dB
scaling relative to the frame length, and aggregation of adjacent bins.
Only the first half of the spectrum (real-input half) enters aggregation,
so the output dimension is frame_len / (2 * agg_bins).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_FRAME_LEN = 1024
DEFAULT_AGG_BINS = 2
DEFAULT_DB_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureConfig:
    """Parameters of the framing / spectral band pipeline.

    agg_mode selects how adjacent bins are merged: "sum_db" sums the dB
    values of each group (the default behaviour of the band aggregation
    step), "db_of_sum" sums linear magnitudes first and takes the log
    afterwards (kept as a documented escape hatch, not the default).
    """

    frame_len: int = DEFAULT_FRAME_LEN
    agg_bins: int = DEFAULT_AGG_BINS
    db_floor: float = DEFAULT_DB_FLOOR
    agg_mode: str = "sum_db"

    def __post_init__(self) -> None:
        n = self.frame_len
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"frame_len must be a power of two, got {n}")
        if self.agg_bins < 1 or (n // 2) % self.agg_bins != 0:
            raise ValueError(
                f"agg_bins must divide frame_len/2 ({n // 2}), got {self.agg_bins}"
            )
        if not self.db_floor > 0:
            raise ValueError(f"db_floor must be > 0, got {self.db_floor}")
        if self.agg_mode not in ("sum_db", "db_of_sum"):
            raise ValueError(f"unknown agg_mode {self.agg_mode!r}")

    @property
    def n_bands(self) -> int:
        return self.frame_len // (2 * self.agg_bins)


def segment(samples: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Cut a 1-D sample array into consecutive non-overlapping frames.

    Returns an array of shape (n_frames, frame_len); any trailing samples
    that do not fill a whole frame are discarded.  Raises ValueError when
    the input is shorter than one frame.
    """
    samples = np.asarray(samples)
    if samples.ndim != 1:
        raise ValueError(f"expected 1-D samples, got shape {samples.shape}")
    n = config.frame_len
    if samples.shape[0] < n:
        raise ValueError(
            f"trace has {samples.shape[0]} samples, shorter than one frame ({n})"
        )
    n_frames = samples.shape[0] // n
    return samples[: n_frames * n].reshape(n_frames, n)


def hanning(frame_len: int) -> np.ndarray:
    """Hanning window w[n] = 0.5 * (1 - cos(2*pi*n / (frame_len - 1)))."""
    if frame_len < 2:
        raise ValueError("window needs at least 2 points")
    n = np.arange(frame_len, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / (frame_len - 1)))


def dft(frames: np.ndarray) -> np.ndarray:
    """Full complex DFT along the last axis (fast transform)."""
    return np.fft.fft(np.asarray(frames, dtype=np.float64), axis=-1)


def to_db(spectrum: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """dB-scale bin magnitudes, zeroing the DC bin first.

    Computes 10*log10(max(|X[k]|, db_floor) / frame_len) and keeps only
    the first frame_len/2 bins of the (conjugate-symmetric) spectrum.
    """
    spectrum = np.asarray(spectrum)
    n = config.frame_len
    if spectrum.shape[-1] != n:
        raise ValueError(f"spectrum length {spectrum.shape[-1]} != frame_len {n}")
    mag = np.abs(spectrum[..., : n // 2])
    mag[..., 0] = 0.0  # DC removal before the log
    return 10.0 * np.log10(np.maximum(mag, config.db_floor) / n)


def aggregate(bins_db: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Sum groups of agg_bins adjacent dB values into one band each."""
    bins_db = np.asarray(bins_db)
    width = bins_db.shape[-1]
    if width % config.agg_bins != 0:
        raise ValueError(f"{width} bins not divisible by agg_bins={config.agg_bins}")
    shape = bins_db.shape[:-1] + (width // config.agg_bins, config.agg_bins)
    return bins_db.reshape(shape).sum(axis=-1)


def featurize_frames(frames: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Run the full pipeline on a (n_frames, frame_len) batch.

    Returns float32 band vectors of shape (n_frames, n_bands).  The
    computation is float64 internally and deterministic: identical frames
    and config produce bit-identical vectors.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[-1] != config.frame_len:
        raise ValueError(
            f"frame length {frames.shape[-1]} != config frame_len {config.frame_len}"
        )
    windowed = frames * hanning(config.frame_len)
    spectrum = dft(windowed)
    if config.agg_mode == "sum_db":
        bands = aggregate(to_db(spectrum, config), config)
    else:
        # Escape hatch: aggregate linear magnitudes, then one log per band.
        n = config.frame_len
        mag = np.abs(spectrum[..., : n // 2])
        mag[..., 0] = 0.0
        lin = np.maximum(mag, config.db_floor) / n
        shape = lin.shape[:-1] + (config.n_bands, config.agg_bins)
        bands = 10.0 * np.log10(lin.reshape(shape).sum(axis=-1))
    return bands.astype(np.float32)


def featurize(frame: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Featurize a single frame; returns a (n_bands,) float32 vector."""
    return featurize_frames(np.asarray(frame)[None, :], config)[0]

"""Photodetector sample-stream synthesis for coded-access captures.

Per bit w and sample t the detector current is the sum over pixels of
irradiance x code bit x carrier value, times the detector gain. Square
carriers are ideal 0/1 waves with sample-aligned edges, phase-locked to the
bit boundary (one DMD frame clock), so same-channel contributions add
coherently. The complementary mirror state routes light to the second
detector: during a code-1 bit PD2 sees 1 - carrier, and a parked pixel
(code 0) rests on PD2 for the whole bit. Sine carriers model modulated
active sources and ride on the light itself, so a parked pixel hands its
full modulated signal to PD2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionMismatch, LengthMismatch
from .plan import CodingPlan, Mode
from .scene import DetectorModel, Scene

PD1 = "pd1"
PD2 = "pd2"


@dataclass(frozen=True, eq=False)
class SampleStream:
    """Digitized detector output: length == bits * samples_per_bit."""

    rate: float
    samples: np.ndarray
    bits: int
    samples_per_bit: int
    pd_side: str = PD1
    gain: float = 1.0

    def __post_init__(self):
        if self.samples.ndim != 1:
            raise LengthMismatch("stream samples must be 1-D")
        if self.samples.size != self.bits * self.samples_per_bit:
            raise LengthMismatch(
                f"stream length {self.samples.size} != {self.bits} * {self.samples_per_bit}"
            )

    def per_bit(self) -> np.ndarray:
        """(bits, samples_per_bit) view of the samples."""
        return self.samples.reshape(self.bits, self.samples_per_bit)


@dataclass(frozen=True, eq=False)
class DualStreams:
    pd1: SampleStream
    pd2: SampleStream

    def __post_init__(self):
        if (
            self.pd1.rate != self.pd2.rate
            or self.pd1.samples.size != self.pd2.samples.size
        ):
            raise LengthMismatch("dual streams must share rate and length")


# ---------------------------------------------------------------------------
# Carriers
# ---------------------------------------------------------------------------


def carrier_matrix(plan: CodingPlan) -> np.ndarray:
    """One bit of every channel's unit carrier, shape (channels, F).

    Square: 50% duty 0/1 wave at f_p starting ON at the bit boundary.
    Sine: (1 + sin(2 pi f_p t + phase_p)) / 2 with keyed per-channel phase.
    Plain (waveform "none"): constant 1, the mirror statically on.
    """
    f_count = plan.samples_per_bit
    waveform = plan.frequencies.waveform
    rows = []
    for p, freq in enumerate(plan.frequencies.frequencies):
        cycles = freq * plan.frequencies.bit_duration
        if waveform == "none":
            rows.append(np.ones(f_count))
        elif waveform == "square":
            k = round(cycles)
            if abs(cycles - k) < 1e-9:
                # Integer cycles: exact integer edge test.
                ticks = (k * np.arange(f_count, dtype=np.int64)) % f_count
                rows.append((2 * ticks < f_count).astype(np.float64))
            else:
                phase = (cycles * np.arange(f_count) / f_count) % 1.0
                rows.append((phase < 0.5).astype(np.float64))
        elif waveform == "sine":
            t = np.arange(f_count) / f_count
            rows.append(0.5 * (1.0 + np.sin(2.0 * math.pi * cycles * t + plan.carrier_phases[p])))
        else:
            raise ConfigError(f"unknown waveform {waveform!r}")
    return np.stack(rows)


def carrier_value(plan: CodingPlan, channel: int, sample_index: int) -> float:
    """Value of one channel's carrier at a sample index within a bit (channel 1-based)."""
    return float(carrier_matrix(plan)[channel - 1, sample_index % plan.samples_per_bit])


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _pixel_values(plan: CodingPlan, image: np.ndarray) -> np.ndarray:
    """Per active pixel value, aligned with plan.positions()."""
    pos = np.asarray(plan.positions(), dtype=np.int64)
    return np.asarray(image, dtype=np.float64)[pos[:, 1] - 1, pos[:, 0] - 1]


def _set_codes(plan: CodingPlan) -> np.ndarray:
    """(set_count, W) 0/1 code matrix in set order."""
    if plan.mode is Mode.FM_TDMA:
        return np.eye(plan.set_count, dtype=np.float64)
    return plan.codebook.codes[plan.code_row].astype(np.float64)


def _bit_amplitudes(plan: CodingPlan, scene: Scene, responsivity):
    """Per-bit coherent channel sums.

    Returns (amplitudes, pd2_amplitudes, pd2_constant) where amplitudes is
    (W, channels): the summed irradiance riding each channel slot during each
    bit for PD1. For passive modes pd2_constant carries the parked pixels'
    unmodulated light; for complement-coded modes pd2_amplitudes carries the
    complement sums on the carriers.
    """
    if scene.grid.columns != plan.grid.columns or scene.grid.rows != plan.grid.rows:
        raise DimensionMismatch(
            f"scene grid {scene.grid.columns}x{scene.grid.rows}"
            f" != plan grid {plan.grid.columns}x{plan.grid.rows}"
        )
    w = plan.code_length
    channels = plan.channel_count
    codes = _set_codes(plan)

    if plan.mode is Mode.ACTIVE_OVERLAPPED:
        if scene.per_source is None:
            raise DimensionMismatch("active overlapped capture needs a per-source scene")
        if scene.source_count != channels:
            raise DimensionMismatch(
                f"scene has {scene.source_count} sources, plan has {channels} channels"
            )
        per_pixel = np.stack(
            [_pixel_values(plan, scene.per_source[p]) for p in range(channels)], axis=1
        )  # (Q, channels); pixel order == position order
        by_code = np.zeros_like(per_pixel)
        by_code[plan.set_index] = per_pixel  # reorder into set order
        sums = codes.T @ by_code  # (W, channels) per-source ON sums
        totals = per_pixel.sum(axis=0)  # (channels,)
        pd1 = _apply_hops(plan, sums)
        pd2 = _apply_hops(plan, totals[None, :] - sums)
        return pd1, pd2, np.zeros(w)

    image = scene.effective_irradiance(responsivity)
    values = _pixel_values(plan, image)
    total = float(values.sum())
    member_sums = np.zeros((plan.set_count, channels))
    np.add.at(member_sums, (plan.set_index, plan.member_index), values)
    sums = codes.T @ member_sums  # (W, channels) ON sums per channel slot
    parked = total - sums.sum(axis=1)  # (W,) light resting on PD2
    return _apply_hops(plan, sums), None, parked


def _apply_hops(plan: CodingPlan, member_sums: np.ndarray) -> np.ndarray:
    """Map member-slot sums to carrier channels through the hop schedule."""
    if plan.hop_schedule is None:
        return member_sums
    out = np.zeros_like(member_sums)
    rows = np.arange(member_sums.shape[0])[:, None]
    out[rows, plan.hop_schedule] = member_sums
    return out


def synthesize(
    plan: CodingPlan,
    scene: Scene,
    detector: DetectorModel | None = None,
    pd_side: str = PD1,
    dtype=np.float64,
) -> SampleStream:
    """Noiseless, unquantized encoded stream for one detector side."""
    detector = detector or DetectorModel()
    if pd_side not in (PD1, PD2):
        raise ConfigError(f"pd_side must be {PD1!r} or {PD2!r}")
    pd1_amp, pd2_amp, pd2_const = _bit_amplitudes(plan, scene, detector.responsivity)
    carriers = carrier_matrix(plan)
    w, f_count = plan.code_length, plan.samples_per_bit
    gain = detector.gain

    out = np.empty(w * f_count, dtype=dtype)
    chunk = max(1, int(4_000_000 // max(f_count, 1)))
    for start in range(0, w, chunk):
        stop = min(w, start + chunk)
        if pd_side == PD1:
            block = pd1_amp[start:stop] @ carriers
        elif pd2_amp is not None:  # complement-coded modes
            block = pd2_amp[start:stop] @ carriers
        else:  # passive: complement waveform plus parked light
            block = pd1_amp[start:stop] @ (1.0 - carriers) + pd2_const[start:stop, None]
        out[start * f_count : stop * f_count] = (gain * block).ravel()
    return SampleStream(
        rate=plan.sample_rate,
        samples=out,
        bits=w,
        samples_per_bit=f_count,
        pd_side=pd_side,
        gain=gain,
    )


def synthesize_dual(
    plan: CodingPlan,
    scene: Scene,
    detector: DetectorModel | None = None,
    detector2: DetectorModel | None = None,
    dtype=np.float64,
) -> DualStreams:
    """Both detector sides at once; detector2 defaults to detector."""
    detector = detector or DetectorModel()
    detector2 = detector2 or detector
    return DualStreams(
        pd1=synthesize(plan, scene, detector, PD1, dtype=dtype),
        pd2=synthesize(plan, scene, detector2, PD2, dtype=dtype),
    )


# ---------------------------------------------------------------------------
# Noise and digitization
# ---------------------------------------------------------------------------


def add_noise(stream: SampleStream, detector: DetectorModel, seed) -> SampleStream:
    """Seeded detector noise: white Gaussian, optional shot and 1/f terms."""
    rng = np.random.default_rng(seed)
    samples = stream.samples.astype(np.float64, copy=True)
    n = samples.size
    if detector.noise_sigma > 0:
        samples += rng.normal(0.0, detector.noise_sigma, n)
    if detector.shot_noise:
        # Gaussian approximation: variance proportional to the clean signal.
        sigma = np.sqrt(detector.shot_factor * np.clip(stream.samples, 0.0, None))
        samples += rng.standard_normal(n) * sigma
    if detector.pink_noise is not None:
        amplitude, alpha = detector.pink_noise
        if amplitude > 0 and n > 2:
            spectrum = np.fft.rfft(rng.standard_normal(n))
            shaping = np.zeros(spectrum.size)
            shaping[1:] = np.arange(1, spectrum.size, dtype=np.float64) ** (-alpha / 2.0)
            shaped = np.fft.irfft(spectrum * shaping, n)
            rms = float(np.sqrt(np.mean(shaped**2)))
            if rms > 0:
                samples += shaped * (amplitude / rms)
    return replace(stream, samples=samples.astype(stream.samples.dtype, copy=False))


def apply_adc(stream: SampleStream, detector: DetectorModel) -> SampleStream:
    """Clamp to [0, fullscale] and quantize to adc_bits levels; identity if unset."""
    if detector.adc_bits is None:
        return stream
    step = detector.adc_fullscale / (2**detector.adc_bits - 1)
    clipped = np.clip(stream.samples, 0.0, detector.adc_fullscale)
    quantized = np.round(clipped / step) * step
    return replace(stream, samples=quantized.astype(stream.samples.dtype, copy=False))


def capture(
    plan: CodingPlan,
    scene: Scene,
    detector: DetectorModel | None = None,
    seed=0,
    pd_side: str = PD1,
    dtype=np.float64,
) -> SampleStream:
    """synthesize -> add_noise -> adc, the full single-detector chain."""
    detector = detector or DetectorModel()
    stream = synthesize(plan, scene, detector, pd_side, dtype=dtype)
    stream = add_noise(stream, detector, seed)
    return apply_adc(stream, detector)


def capture_dual(
    plan: CodingPlan,
    scene: Scene,
    detector: DetectorModel | None = None,
    detector2: DetectorModel | None = None,
    seed=0,
    dtype=np.float64,
) -> DualStreams:
    """Dual capture with independent noise draws per detector."""
    detector = detector or DetectorModel()
    detector2 = detector2 or detector
    seeds = np.random.SeedSequence(seed).spawn(2)
    pd1 = apply_adc(
        add_noise(synthesize(plan, scene, detector, PD1, dtype=dtype), detector, seeds[0]),
        detector,
    )
    pd2 = apply_adc(
        add_noise(synthesize(plan, scene, detector2, PD2, dtype=dtype), detector2, seeds[1]),
        detector2,
    )
    return DualStreams(pd1=pd1, pd2=pd2)


# ---------------------------------------------------------------------------
# Stream files: raw little-endian float32 plus a JSON sidecar
# ---------------------------------------------------------------------------

_STREAM_FORMAT = "caossim-stream"
_STREAM_VERSION = 1


def stream_paths(base):
    import os

    base = os.fspath(base)
    if base.endswith(".f32"):
        base = base[:-4]
    return base + ".f32", base + ".json"


def write_stream(stream: SampleStream, base) -> tuple[str, str]:
    raw_path, meta_path = stream_paths(base)
    stream.samples.astype("<f4").tofile(raw_path)
    meta = {
        "format": _STREAM_FORMAT,
        "version": _STREAM_VERSION,
        "rate": stream.rate,
        "length": int(stream.samples.size),
        "bits": stream.bits,
        "samples_per_bit": stream.samples_per_bit,
        "pd_side": stream.pd_side,
        "gain": stream.gain,
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return raw_path, meta_path


def read_stream(base) -> SampleStream:
    raw_path, meta_path = stream_paths(base)
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format") != _STREAM_FORMAT or meta.get("version") != _STREAM_VERSION:
        raise ConfigError("not a caossim stream sidecar")
    samples = np.fromfile(raw_path, dtype="<f4").astype(np.float64)
    if samples.size != meta["length"]:
        raise LengthMismatch(
            f"raw file has {samples.size} samples, sidecar declares {meta['length']}"
        )
    return SampleStream(
        rate=float(meta["rate"]),
        samples=samples,
        bits=int(meta["bits"]),
        samples_per_bit=int(meta["samples_per_bit"]),
        pd_side=meta["pd_side"],
        gain=float(meta["gain"]),
    )

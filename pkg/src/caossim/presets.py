"""Experiment presets: end-to-end desk-scale captures with pass/fail summaries.

Four presets mirror the three demonstration captures of the FDMA-CDMA
camera:

  exp1-hdr      passive 4-channel capture of a 6-patch 64 dB HDR target
  exp1-fmcdma   single-channel comparator on the same target and noise
  exp2-dualband broadband fiber spot decoded on two detector bands at once
  exp3-active   3-source modulated illumination of a two-hole filter target

Default timing is scaled (bit rates raised) so a preset runs in seconds;
full_scale=True restores the hardware bit rates, which changes only the
simulated duration, not the decoded values. All randomness is seeded, so a
preset reproduces bit-identical outputs on every run.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import decode as decode_mod
from . import metrics as metrics_mod
from . import plan as plan_mod
from . import scene as scene_mod
from . import sensor as sensor_mod
from .errors import ConfigError
from .plan import Mode, PixelGrid
from .scene import DetectorModel, Scene

HDR_LEVELS_DB = (0.0, 20.0, 30.0, 48.0, 58.0, 64.0)

#: White-noise sigma for the experiment-1 presets, frozen by the calibration
#: sweep (`caossim calibrate`): the sigma at which the single-channel
#: comparator's 48 dB patch decodes at SNR ~= 3. Both experiment-1 presets
#: share it so their noise floors are directly comparable.
HDR_NOISE_SIGMA = 0.091876

#: Active-source LEDs as (center nm, fwhm nm) keyed by carrier order:
#: green on the first carrier, red on the second, blue on the third.
ACTIVE_SOURCES = ((530.0, 35.0), (625.0, 17.0), (455.0, 18.0))
FILTER_BANDS = {"blue": (450.0, 40.0), "green": (550.0, 40.0), "red": (620.0, 10.0)}

PRESET_NAMES = ("exp1-hdr", "exp1-fmcdma", "exp2-dualband", "exp3-active")

_RESPONSIVITIES = {
    "flat": 1.0,
    "si-band": scene_mod.si_band_responsivity,
    "ge-band": scene_mod.ge_band_responsivity,
}


@dataclass
class DetectorConfig:
    gain: float = 1.0
    noise_sigma: float = 0.0
    shot_noise: bool = False
    shot_factor: float = 1.0
    pink_noise: list | None = None
    adc_bits: int | None = None
    adc_fullscale: float = 1.0
    responsivity: str = "flat"

    def build(self) -> DetectorModel:
        resp = _RESPONSIVITIES.get(self.responsivity)
        if resp is None:
            raise ConfigError(f"unknown responsivity preset {self.responsivity!r}")
        if callable(resp):
            resp = resp()
        return DetectorModel(
            responsivity=resp,
            gain=self.gain,
            noise_sigma=self.noise_sigma,
            shot_noise=self.shot_noise,
            shot_factor=self.shot_factor,
            pink_noise=tuple(self.pink_noise) if self.pink_noise else None,
            adc_bits=self.adc_bits,
            adc_fullscale=self.adc_fullscale,
        )


@dataclass
class ExperimentConfig:
    """Lossless, strictly-validated description of one experiment run."""

    name: str
    mode: str
    grid_columns: int
    grid_rows: int
    pixel_size: int = 1
    channels: int = 1
    f1: float | None = None
    frequencies: list | None = None
    bit_rate: float = 1.0
    sample_rate: float = 2.0
    code_length: int | None = None
    key_seed: int = 0
    hopping: bool = False
    noise_seed: int = 0
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    detector2: DetectorConfig | None = None
    scene: dict = field(default_factory=dict)
    dual: bool = False
    convention: int = 20

    def to_json(self) -> str:
        data = asdict(self)
        data["format"] = "caossim-experiment"
        data["version"] = 1
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        if data.pop("format", None) != "caossim-experiment" or data.pop("version", None) != 1:
            raise ConfigError("not a caossim experiment config")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        for det_key in ("detector", "detector2"):
            if data.get(det_key) is not None:
                det = data[det_key]
                bad = set(det) - set(DetectorConfig.__dataclass_fields__)
                if bad:
                    raise ConfigError(f"unknown detector fields: {sorted(bad)}")
                data[det_key] = DetectorConfig(**det)
        return cls(**data)

    def build_plan(self) -> plan_mod.CodingPlan:
        return plan_mod.build_plan(
            PixelGrid(self.grid_columns, self.grid_rows, self.pixel_size),
            mode=Mode(self.mode),
            channels=self.channels,
            f1=self.f1,
            frequencies=tuple(self.frequencies) if self.frequencies else None,
            bit_rate=self.bit_rate,
            sample_rate=self.sample_rate,
            key_seed=self.key_seed,
            hopping=self.hopping,
            min_code_length=self.code_length,
        )

    def build_scene(self, grid: PixelGrid) -> Scene:
        return build_scene(grid, self.scene)


def build_scene(grid: PixelGrid, params: dict) -> Scene:
    """Scene constructor lookup for config files."""
    params = dict(params)
    kind = params.pop("preset", None)
    if kind == "hdr-patches":
        return scene_mod.hdr_patch_target(
            grid,
            params.pop("levels_db", list(HDR_LEVELS_DB)),
            layout=tuple(params.pop("layout", (2, 3))),
        )
    if kind == "fiber-spot":
        center = tuple(params.pop("center", (grid.columns // 2 + 1, grid.rows // 2 + 1)))
        return scene_mod.dual_band_source(grid, center, radius=params.pop("radius", None))
    if kind == "two-hole":
        return _two_hole_scene(grid, params.pop("variant", "a"), params.pop("radius", None))
    if kind == "uniform":
        value = float(params.pop("value", 1.0))
        return Scene(grid=grid, irradiance=np.full((grid.rows, grid.columns), value))
    if kind == "pgm":
        return Scene(grid=grid, irradiance=scene_mod.read_image_pgm(params.pop("path")))
    if kind == "csv":
        return Scene(grid=grid, irradiance=scene_mod.read_image_csv(params.pop("path")))
    raise ConfigError(f"unknown scene preset {kind!r}")


def active_source_curves():
    return tuple(scene_mod.gaussian_spectrum(c, f) for c, f in ACTIVE_SOURCES)


def _two_hole_scene(grid: PixelGrid, variant: str, radius) -> Scene:
    """Hole arrangements: variant a = red left / green right, b = green left / blue right."""
    filters = {name: scene_mod.gaussian_spectrum(c, f) for name, (c, f) in FILTER_BANDS.items()}
    if variant == "a":
        hole_filters = [filters["red"], filters["green"]]
    elif variant == "b":
        hole_filters = [filters["green"], filters["blue"]]
    else:
        raise ConfigError(f"unknown two-hole variant {variant!r}")
    left = (grid.columns // 4 + 1, grid.rows // 2 + 1)
    right = (3 * grid.columns // 4 + 1, grid.rows // 2 + 1)
    sources = [(curve, p + 1) for p, curve in enumerate(active_source_curves())]
    return scene_mod.two_hole_target(
        grid,
        hole_positions=[left, right],
        hole_filters=hole_filters,
        sources=sources,
        hole_radius=radius if radius is not None else max(2.0, min(grid.columns, grid.rows) / 6.0),
    )


# ---------------------------------------------------------------------------
# Preset definitions
# ---------------------------------------------------------------------------


def preset_config(
    name: str,
    full_scale: bool = False,
    variant: str = "a",
    seed: int | None = None,
    convention: int = 20,
) -> ExperimentConfig:
    """Parameter set for a named preset at desk or hardware scale."""
    if name in ("exp1-hdr", "exp1-fmcdma"):
        scale = 1 if full_scale else 16
        # The calibration freezes the decoded noise floor at the desk-scale
        # bit length (F = 4096). Longer bits integrate more samples, so the
        # per-sample sigma grows with sqrt(F ratio) to keep the same floor.
        sigma = HDR_NOISE_SIGMA * math.sqrt(16.0 / scale)
        fdma = name == "exp1-hdr"
        return ExperimentConfig(
            name=name,
            mode=(Mode.PASSIVE_FDMA_CDMA if fdma else Mode.FM_CDMA).value,
            grid_columns=44,
            grid_rows=29,
            pixel_size=8,
            channels=4 if fdma else 1,
            f1=(128.0 if fdma else 1024.0) * scale,
            bit_rate=1.0 * scale,
            sample_rate=65536.0,
            key_seed=101 if seed is None else seed,
            noise_seed=2101 if fdma else 2102,
            detector=DetectorConfig(
                gain=0.1, noise_sigma=sigma, adc_bits=16, adc_fullscale=10.0
            ),
            scene={"preset": "hdr-patches", "levels_db": list(HDR_LEVELS_DB), "layout": [2, 3]},
            convention=convention,
        )
    if name == "exp2-dualband":
        if full_scale:
            cols, rows, bit_rate, f1, fs = 65, 63, 4.0, 128.0, 65536.0
        else:
            cols, rows, bit_rate, f1, fs = 21, 21, 16.0, 2048.0, 65536.0
        return ExperimentConfig(
            name=name,
            mode=Mode.PASSIVE_FDMA_CDMA.value,
            grid_columns=cols,
            grid_rows=rows,
            channels=4,
            f1=f1,
            bit_rate=bit_rate,
            sample_rate=fs,
            key_seed=202 if seed is None else seed,
            detector=DetectorConfig(responsivity="si-band"),
            detector2=DetectorConfig(responsivity="ge-band"),
            scene={"preset": "fiber-spot"},
            dual=True,
            convention=convention,
        )
    if name == "exp3-active":
        if full_scale:
            bit_rate, fs = 31.25, 2_000_000.0
        else:
            bit_rate, fs = 500.0, 256_000.0
        return ExperimentConfig(
            name=name,
            mode=Mode.ACTIVE_OVERLAPPED.value,
            grid_columns=32,
            grid_rows=15,
            pixel_size=20,
            channels=3,
            frequencies=[25000.0, 29000.0, 35000.0],
            bit_rate=bit_rate,
            sample_rate=fs,
            key_seed=303 if seed is None else seed,
            scene={"preset": "two-hole", "variant": variant},
            convention=convention,
        )
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")


# ---------------------------------------------------------------------------
# Running an experiment
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    plan: plan_mod.CodingPlan
    scene: Scene
    images: list
    summary_lines: list[str]
    ok: bool
    patch_report: metrics_mod.PatchReport | None = None

    def summary_text(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return "\n".join([f"preset {self.config.name}: {status}", *self.summary_lines]) + "\n"


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Build plan and scene, capture, decode, evaluate and optionally write files."""
    cplan = config.build_plan()
    scn = config.build_scene(cplan.grid)
    detector = config.detector.build()
    dtype = np.float32 if cplan.frame_samples > 2**24 else np.float64

    if config.dual:
        detector2 = (config.detector2 or config.detector).build()
        streams = sensor_mod.capture_dual(
            cplan, scn, detector, detector2, seed=config.noise_seed, dtype=dtype
        )
        decoded = decode_mod.decode_frame(streams, cplan)
        images = list(decoded)
    else:
        stream = sensor_mod.capture(cplan, scn, detector, seed=config.noise_seed, dtype=dtype)
        streams = stream
        decoded = decode_mod.decode_frame(stream, cplan)
        images = decoded if isinstance(decoded, list) else [decoded]

    lines, ok, patch_report = _evaluate(config, cplan, scn, images)

    if out_dir is not None:
        _write_outputs(out_dir, config, cplan, streams, images, lines, ok, patch_report)
    return ExperimentResult(
        config=config,
        plan=cplan,
        scene=scn,
        images=images,
        summary_lines=lines,
        ok=ok,
        patch_report=patch_report,
    )


def _evaluate(config, cplan, scn, images):
    name = config.name
    if name in ("exp1-hdr", "exp1-fmcdma"):
        return _evaluate_hdr(config, cplan, images[0])
    if name == "exp2-dualband":
        return _evaluate_dualband(config, scn, images)
    if name == "exp3-active":
        return _evaluate_active(config, scn, images)
    return [f"no acceptance checks defined for {name}"], True, None


def _evaluate_hdr(config, cplan, image):
    layout = scene_mod.hdr_patch_layout(cplan.grid, (2, 3))
    report = metrics_mod.patch_dr(
        image, layout.patches, background=layout.background, convention=config.convention
    )
    lines = []
    measured = report.dr_values()
    snrs = [p.snr for p in report.patches]
    if config.name == "exp1-hdr":
        ok = True
        for level, got, snr in zip(HDR_LEVELS_DB, measured, snrs):
            good = abs(got - level) <= 1.0
            ok &= good
            lines.append(
                f"{'PASS' if good else 'FAIL'} patch {level:g} dB ->"
                f" {got:.2f} dB (snr {snr:.2f})"
            )
        dim_ok = snrs[-1] >= 1.0
        ok &= dim_ok
        lines.append(
            f"{'PASS' if dim_ok else 'FAIL'} dimmest patch snr {snrs[-1]:.2f} >= 1"
        )
        return lines, ok, report
    # Single-channel comparator: recovers the bright patches but loses the
    # two dimmest at this noise floor.
    ok = True
    for level, got, snr in zip(HDR_LEVELS_DB[:4], measured[:4], snrs[:4]):
        good = abs(got - level) <= 1.5
        ok &= good
        lines.append(
            f"{'PASS' if good else 'FAIL'} patch {level:g} dB -> {got:.2f} dB (snr {snr:.2f})"
        )
    for level, snr in zip(HDR_LEVELS_DB[4:], snrs[4:]):
        failed_as_expected = snr < 1.0
        ok &= failed_as_expected
        lines.append(
            f"{'PASS' if failed_as_expected else 'FAIL'} patch {level:g} dB"
            f" unrecoverable (snr {snr:.2f} < 1)"
        )
    return lines, ok, report


def _evaluate_dualband(config, scn, images):
    lines = []
    ok = True
    bands = [scene_mod.si_band_responsivity(), scene_mod.ge_band_responsivity()]
    names = ["si-band", "ge-band"]
    for img, band, label in zip(images, bands, names):
        expected = scn.effective_irradiance(band)
        spot = expected > 0
        rel = np.max(
            np.abs(img.raw[spot] - expected[spot]) / expected[spot]
        ) if spot.any() else math.inf
        good = spot.any() and rel < 1e-6
        ok &= good
        lines.append(
            f"{'PASS' if good else 'FAIL'} {label} spot matches band integral"
            f" (max rel err {rel:.2e})"
        )
        visible = img.values.max() > 0
        ok &= visible
        lines.append(f"{'PASS' if visible else 'FAIL'} {label} image shows the spot")
    return lines, ok, None


def _evaluate_active(config, scn, images):
    lines = []
    ok = True
    peak = max(img.values.max() for img in images)
    for p, img in enumerate(images):
        expected = scn.per_source[p]
        should_show = expected.max() > 0
        shows = img.values.max() > 1e-6 * peak
        good = shows == should_show
        if should_show:
            inside = expected > 0
            rel = np.max(np.abs(img.raw[inside] - expected[inside]) / expected[inside])
            good &= rel < 1e-6
            detail = f"hole present (max rel err {rel:.2e})"
        else:
            detail = f"image empty (peak ratio {img.values.max() / peak:.2e})"
        ok &= good
        lines.append(f"{'PASS' if good else 'FAIL'} source {p + 1}: {detail}")
    return lines, ok, None


def _write_outputs(out_dir, config, cplan, streams, images, lines, ok, patch_report):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(config.to_json())
    plan_mod.save_plan(cplan, os.path.join(out_dir, "plan.json"))
    if isinstance(streams, sensor_mod.DualStreams):
        sensor_mod.write_stream(streams.pd1, os.path.join(out_dir, "stream_pd1"))
        sensor_mod.write_stream(streams.pd2, os.path.join(out_dir, "stream_pd2"))
    else:
        sensor_mod.write_stream(streams, os.path.join(out_dir, "stream_pd1"))
    for i, img in enumerate(images):
        tag = f"source{i + 1}" if img.source_index is not None else img.pd_side
        scene_mod.write_image_pgm(img.values, os.path.join(out_dir, f"image_{tag}.pgm"))
        scene_mod.write_image_csv(img.values, os.path.join(out_dir, f"image_{tag}.csv"))
    report = decode_mod.decode_report(images, cplan)
    decode_mod.write_decode_report(report, os.path.join(out_dir, "decode_report.json"))
    if patch_report is not None:
        with open(os.path.join(out_dir, "patch_report.txt"), "w", encoding="utf-8") as fh:
            fh.write(patch_report.to_text())
        with open(os.path.join(out_dir, "patch_report.csv"), "w", encoding="utf-8") as fh:
            fh.write(patch_report.to_csv())
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join([f"preset {config.name}: {'PASS' if ok else 'FAIL'}", *lines]) + "\n")


# ---------------------------------------------------------------------------
# Noise calibration for the experiment-1 presets
# ---------------------------------------------------------------------------


def calibrate_hdr_sigma(target_snr: float = 3.0, iterations: int = 4) -> float:
    """Sweep the white-noise sigma of the single-channel comparator preset.

    Finds the sigma at which its weakest reliably-recovered patch (48 dB)
    decodes at the target SNR, then returns it for freezing into
    HDR_NOISE_SIGMA. SNR scales as 1 / sigma, so a proportional update
    converges in a few decodes.
    """
    config = preset_config("exp1-fmcdma")
    sigma = 0.05
    for _ in range(iterations):
        config.detector.noise_sigma = sigma
        result = run_experiment(config)
        snr48 = result.patch_report.patches[3].snr
        if not math.isfinite(snr48) or snr48 <= 0:
            sigma *= 0.5
            continue
        sigma *= snr48 / target_snr
    return sigma

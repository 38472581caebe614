"""JSON run configuration: presets, deep merge, validation and typed accessors."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .counting import DetectorModel
from .dispersion import FUSED_SILICA, SellmeierModel
from .jsa import PumpSpec, SpectralFilter, SpectralGrid
from .phasematch import PHASE_MODELS, WaveguideSpec, profile_from_dict

COMMANDS = ("phasematch-curve", "jsa", "sweep-pump-bandwidth", "sweep-inhomogeneity", "count-sim")

#: The one parameter each sweep command may vary.
SWEEP_PARAMETERS = {
    "phasematch-curve": "pump.wavelength_nm",
    "sweep-pump-bandwidth": "pump.bandwidth_nm",
    "sweep-inhomogeneity": "waveguide.delta_dn",
    "count-sim": "power_mw",
}

REQUIRED_BLOCKS = {
    "phasematch-curve": ("material", "waveguide", "pump"),
    "jsa": ("material", "waveguide", "pump", "grid"),
    "sweep-pump-bandwidth": ("material", "waveguide", "pump", "grid"),
    "sweep-inhomogeneity": ("material", "waveguide", "pump", "grid"),
    "count-sim": ("material", "waveguide", "pump", "grid", "detector", "noise", "counting"),
}

TOP_LEVEL = {"material", "waveguide", "pump", "grid", "filter", "detector", "noise",
             "counting", "sweep", "seed", "workers"}

DEVICE_DEFAULTS = {
    "material": FUSED_SILICA.to_dict(),
    "waveguide": {"length_cm": 4.0, "birefringence": 1e-4, "profile": {"profile": "uniform"},
                  "phase_model": "literal"},
    "pump": {"wavelength_nm": 729.0, "bandwidth_nm": 3.1, "mean_pairs": 0.01},
    "grid": {"signal_span_nm": 20.0, "idler_span_nm": 28.0, "signal_points": 512,
             "idler_points": 512},
    "filter": {"target": "signal", "shape": "tophat", "center_nm": None, "width_nm": 4.5},
    "detector": {"eta_signal_path": 0.8, "eta_idler_path": 0.8, "eta_detector": 0.5,
                 "dark_probability": 6.25e-6},
    "noise": {"calibrate": True, "g2_si_target": 73.5, "g2_si_power_mw": 100.0,
              "g2_h_target": 0.0092, "g2_h_power_mw": 25.0, "power_ref_mw": 100.0,
              "signal_to_idler_raman": 0.0,
              "mu_ref": None, "raman_signal_per_mw": None, "raman_idler_per_mw": None},
    "counting": {"n_pulses": 10_000_000, "block_size": 1 << 20, "low_gain_mean_pairs": 0.01},
    "sweep": {
        "phasematch-curve": {"parameter": "pump.wavelength_nm", "start": 600.0, "stop": 1400.0,
                             "steps": 801},
        "sweep-pump-bandwidth": {"parameter": "pump.bandwidth_nm", "start": 0.5, "stop": 8.0,
                                 "steps": 31},
        "sweep-inhomogeneity": {"parameter": "waveguide.delta_dn",
                                "values": [0.0, 5e-7, 1e-6, 1.5e-6, 2e-6, 3e-6, 4e-6, 6e-6],
                                "ensemble": 50, "segments": 400, "grid_points": 128},
        "count-sim": {"parameter": "power_mw",
                      "values": [0.0, 25.0, 50.0, 75.0, 100.0, 125.0, 150.0]},
    },
    "seed": 20160311,
    "workers": 1,
}

PRESETS = {"paper": DEVICE_DEFAULTS}


class ConfigError(ValueError):
    pass


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``override`` wins, nested dicts are merged key by key."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load(path=None, preset: str | None = None, overrides: dict | None = None) -> dict:
    """Resolve a configuration from an optional preset, a JSON file and overrides."""
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = copy.deepcopy(PRESETS[preset]) if preset else {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = deep_merge(cfg, user)
    if overrides:
        cfg = deep_merge(cfg, overrides)
    return cfg


def _need(cfg: dict, block: str, key: str):
    try:
        return cfg[block][key]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"missing '{block}.{key}'") from exc


def sweep_values(cfg: dict, command: str) -> np.ndarray:
    block = (cfg.get("sweep") or {}).get(command)
    if not isinstance(block, dict):
        raise ConfigError(f"command {command} needs a 'sweep.{command}' block")
    want = SWEEP_PARAMETERS[command]
    if block.get("parameter") != want:
        raise ConfigError(f"sweep.{command}.parameter must be {want!r}, "
                          f"got {block.get('parameter')!r}")
    if "values" in block:
        if any(k in block for k in ("start", "stop", "steps")):
            raise ConfigError(f"sweep.{command}: give either 'values' or start/stop/steps")
        vals = np.asarray(block["values"], dtype=float)
    else:
        try:
            steps = int(block["steps"])
            vals = np.linspace(float(block["start"]), float(block["stop"]), steps)
        except KeyError as exc:
            raise ConfigError(f"sweep.{command} needs 'values' or start/stop/steps") from exc
        if steps < 1:
            raise ConfigError(f"sweep.{command}.steps must be >= 1")
    if vals.ndim != 1 or vals.size == 0 or not np.all(np.isfinite(vals)):
        raise ConfigError(f"sweep.{command} values must be a non-empty list of numbers")
    return vals


def validate(cfg: dict, command: str) -> dict:
    """Check the blocks ``command`` needs; raises ConfigError with a readable message."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    unknown = set(cfg) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for block in REQUIRED_BLOCKS[command]:
        if not isinstance(cfg.get(block), dict):
            raise ConfigError(f"command {command} needs a '{block}' block")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    workers = cfg.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer")
    try:
        material(cfg)
        waveguide(cfg)
        pump(cfg)
        if "grid" in REQUIRED_BLOCKS[command]:
            grid_spans(cfg)
        if command in ("jsa", "sweep-pump-bandwidth"):
            spectral_filter(cfg, 0.0)
        if command == "count-sim":
            detector(cfg)
            _count_settings(cfg)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    if command in SWEEP_PARAMETERS:
        vals = sweep_values(cfg, command)
        if command != "phasematch-curve" and (vals < 0).any():
            raise ConfigError(f"sweep.{command} values must be non-negative")
        if command == "sweep-pump-bandwidth" and (vals <= 0).any():
            raise ConfigError("pump bandwidths must be positive")
        if command == "sweep-inhomogeneity":
            block = cfg["sweep"][command]
            if int(block.get("ensemble", 50)) < 20:
                raise ConfigError("the random-model ensemble needs at least 20 realizations")
    return cfg


def material(cfg: dict) -> SellmeierModel:
    block = cfg.get("material")
    if not isinstance(block, dict) or "terms" not in block:
        raise ConfigError("'material' block needs Sellmeier 'terms'")
    return SellmeierModel.from_dict(block)


def waveguide(cfg: dict) -> WaveguideSpec:
    block = cfg["waveguide"]
    phase_model = block.get("phase_model", "literal")
    if phase_model not in PHASE_MODELS:
        raise ConfigError(f"waveguide.phase_model must be one of {PHASE_MODELS}")
    return WaveguideSpec(
        length_cm=float(_need(cfg, "waveguide", "length_cm")),
        birefringence=float(_need(cfg, "waveguide", "birefringence")),
        profile=profile_from_dict(block.get("profile")),
        phase_model=phase_model,
        material=material(cfg),
    )


def pump(cfg: dict, **changes) -> PumpSpec:
    block = dict(cfg["pump"], **changes)
    return PumpSpec(float(block["wavelength_nm"]), float(block["bandwidth_nm"]),
                    float(block.get("mean_pairs", 0.01)))


def grid_spans(cfg: dict):
    b = cfg["grid"]
    return (float(_need(cfg, "grid", "signal_span_nm")), float(_need(cfg, "grid", "idler_span_nm")),
            int(b.get("signal_points", 512)), int(b.get("idler_points", 512)))


def grid(cfg: dict, signal_nm: float, idler_nm: float, points: int | None = None) -> SpectralGrid:
    ss, si, ns, ni = grid_spans(cfg)
    if points is not None:
        ns = ni = points
    return SpectralGrid(signal_nm, ss, idler_nm, si, ns, ni)


def spectral_filter(cfg: dict, signal_nm: float, idler_nm: float | None = None):
    """The configured heralding filter, centred on the phasematched wavelength when unset."""
    block = cfg.get("filter")
    if not block:
        return None
    target = block.get("target", "signal")
    center = block.get("center_nm")
    if center is None:
        center = signal_nm if target == "signal" else (idler_nm or 0.0)
    return SpectralFilter(target, block.get("shape", "tophat"), float(center),
                          float(block["width_nm"]))


def detector(cfg: dict) -> DetectorModel:
    b = cfg["detector"]
    return DetectorModel(float(b["eta_signal_path"]), float(b["eta_idler_path"]),
                         float(b["eta_detector"]), float(b["dark_probability"]))


def _count_settings(cfg: dict):
    c = cfg["counting"]
    n = int(c["n_pulses"])
    block = int(c.get("block_size", 1 << 20))
    if n < 1 or block < 1:
        raise ConfigError("counting.n_pulses and counting.block_size must be >= 1")
    noise = cfg["noise"]
    if not noise.get("calibrate", False):
        for key in ("mu_ref", "raman_signal_per_mw", "raman_idler_per_mw"):
            if noise.get(key) is None:
                raise ConfigError(f"noise.{key} is required when noise.calibrate is false")
    return n, block

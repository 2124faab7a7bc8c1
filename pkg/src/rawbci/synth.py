"""Synthetic multimodal sessions with class-dependent templates.

Every activity block of class ``c`` adds a deterministic template to the
channels; Gaussian noise with std ``amplitude / snr`` is added everywhere,
rest included. Each channel also carries a constant raw baseline so the
data look like unprocessed device output.

Templates (``t`` is seconds since block onset, ``A`` the amplitude):

FNIRS
    ``A * gain(c, j) * sign * (1 - exp(-t / 3))`` where the first half of
    the channels (first wavelength) rises (``sign=+1``) and the second half
    falls (``sign=-1``). ``gain`` is 1.0 on channels ``j`` with
    ``j % n_classes == c`` (``j`` indexed within the half) and 0.25 elsewhere.
EEG
    ``A * (0.5 + 0.5 * (ch + 1) / n_ch) * sin(2*pi*f_c*t)`` with
    ``f_c = 8 + 2c`` Hz.
MOCAP
    ``A * (1 + c // n_ch) * exp(-((t - T/2) / 1.5)**2 / 2)`` on channels
    ``c % n_ch`` and ``(c + 1) % n_ch``; zero elsewhere.

Seed derivation: subject ``i``, modality ``m`` (index into ``MODALITIES``)
draws its noise from ``SeededRng(derive_seed(seed, i, m))``.

Manifest JSON (``manifest.json`` in the output directory)::

    {"format_version": 1, "seed": <int>, "config": <SynthConfig echo>,
     "files": [{"subject_id", "modality", "data", "meta"}, ...]}

File paths in the manifest are relative to the manifest's directory.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .data import (
    DEFAULT_CLASS_NAMES,
    MODALITIES,
    LabelMap,
    Recording,
    SessionSchedule,
    recording_paths,
    write_recording,
)
from .exceptions import ConfigError
from .tensor import SeededRng, derive_seed
from .validation import dataclass_from_dict

__all__ = ["ModalitySettings", "SynthConfig", "generate_session", "write_dataset"]

MANIFEST_VERSION = 1
AMPLITUDE = 1.0
FNIRS_TAU_SECONDS = 3.0

_DEFAULT_MODALITIES = {
    "FNIRS": (True, 7.8125, 40),
    "EEG": (False, 250.0, 8),
    "MOCAP": (False, 100.0, 6),
}
_BASELINES = {"FNIRS": 2.0, "EEG": 0.0, "MOCAP": 10.0}


@dataclass
class ModalitySettings:
    enabled: bool = False
    sampling_rate_hz: float = 1.0
    n_channels: int = 1


def _default_modalities():
    return {
        name: ModalitySettings(enabled, fs, n_ch)
        for name, (enabled, fs, n_ch) in _DEFAULT_MODALITIES.items()
    }


@dataclass
class SynthConfig:
    n_subjects: int = 10
    class_names: tuple = DEFAULT_CLASS_NAMES
    modalities: dict = field(default_factory=_default_modalities)
    activity_seconds: float = 10.0
    rest_seconds: float = 20.0
    repetitions: int = 5
    initial_offset_seconds: float = 0.0
    snr: float = 5.0
    seed: int = 0

    def __post_init__(self):
        self.class_names = tuple(self.class_names)
        mods = _default_modalities()
        for name, settings in dict(self.modalities).items():
            if name not in MODALITIES:
                raise ConfigError(f"synth.modalities.{name}", "unknown modality")
            if isinstance(settings, dict):
                base = mods[name]
                merged = {
                    "enabled": base.enabled,
                    "sampling_rate_hz": base.sampling_rate_hz,
                    "n_channels": base.n_channels,
                }
                merged.update(settings)
                settings = dataclass_from_dict(ModalitySettings, merged, f"synth.modalities.{name}")
            mods[name] = settings
        self.modalities = mods
        self.validate()

    def validate(self):
        if int(self.n_subjects) < 1:
            raise ConfigError("synth.n_subjects", "must be a positive integer")
        try:
            LabelMap(self.class_names)
        except ValueError as exc:
            raise ConfigError("synth.class_names", str(exc)) from exc
        if len(self.class_names) < 2:
            raise ConfigError("synth.class_names", "need at least 2 classes")
        if not any(m.enabled for m in self.modalities.values()):
            raise ConfigError("synth.modalities", "at least one modality must be enabled")
        for name, m in self.modalities.items():
            if m.enabled and not m.sampling_rate_hz > 0:
                raise ConfigError(f"synth.modalities.{name}.sampling_rate_hz", "must be > 0")
            if m.enabled and int(m.n_channels) < 1:
                raise ConfigError(f"synth.modalities.{name}.n_channels", "must be >= 1")
            if name == "FNIRS" and m.enabled and m.n_channels % 2:
                raise ConfigError(
                    "synth.modalities.FNIRS.n_channels", "must be even (two wavelengths)"
                )
        if not self.snr > 0:
            raise ConfigError("synth.snr", f"must be > 0, got {self.snr}")
        try:
            self.schedule()
        except ValueError as exc:
            raise ConfigError("synth.schedule", str(exc)) from exc

    def schedule(self):
        return SessionSchedule(
            class_labels=tuple(range(len(self.class_names))),
            activity_seconds=self.activity_seconds,
            rest_seconds=self.rest_seconds,
            repetitions=self.repetitions,
            initial_offset_seconds=self.initial_offset_seconds,
        )

    def enabled_modalities(self):
        return [m for m in MODALITIES if self.modalities[m].enabled]

    def to_dict(self):
        return {
            "n_subjects": self.n_subjects,
            "class_names": list(self.class_names),
            "modalities": {
                name: {
                    "enabled": m.enabled,
                    "sampling_rate_hz": m.sampling_rate_hz,
                    "n_channels": m.n_channels,
                }
                for name, m in self.modalities.items()
            },
            "activity_seconds": self.activity_seconds,
            "rest_seconds": self.rest_seconds,
            "repetitions": self.repetitions,
            "initial_offset_seconds": self.initial_offset_seconds,
            "snr": self.snr,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data, section="synth"):
        return dataclass_from_dict(cls, data, section)


def _template(modality, class_id, n_classes, n_channels, t, activity_seconds):
    """Noise-free block response, shape ``(len(t), n_channels)``."""
    out = np.zeros((t.size, n_channels))
    if modality == "FNIRS":
        half = n_channels // 2
        j = np.arange(half)
        gain = np.where(j % n_classes == class_id, 1.0, 0.25)
        rise = 1.0 - np.exp(-t / FNIRS_TAU_SECONDS)
        out[:, :half] = AMPLITUDE * rise[:, None] * gain
        out[:, half:] = -AMPLITUDE * rise[:, None] * gain
    elif modality == "EEG":
        freq = 8.0 + 2.0 * class_id
        gain = 0.5 + 0.5 * (np.arange(n_channels) + 1) / n_channels
        out[:] = AMPLITUDE * np.sin(2.0 * np.pi * freq * t)[:, None] * gain
    else:
        centre = activity_seconds / 2.0
        bump = np.exp(-0.5 * ((t - centre) / 1.5) ** 2)
        scale = AMPLITUDE * (1 + class_id // n_channels)
        for ch in {class_id % n_channels, (class_id + 1) % n_channels}:
            out[:, ch] = scale * bump
    return out


def _channel_names(modality, n_channels):
    if modality == "FNIRS":
        half = n_channels // 2
        return [f"S{j + 1}_wl1" for j in range(half)] + [f"S{j + 1}_wl2" for j in range(half)]
    prefix = {"EEG": "EEG", "MOCAP": "MOCAP"}[modality]
    return [f"{prefix}{j + 1}" for j in range(n_channels)]


def generate_session(config, subject_index):
    """One ``Recording`` per enabled modality for subject ``subject_index``."""
    schedule = config.schedule()
    label_map = LabelMap(config.class_names)
    subject_id = f"S{subject_index + 1:02d}"
    recordings = []
    for modality in config.enabled_modalities():
        settings = config.modalities[modality]
        fs = float(settings.sampling_rate_hz)
        n_ch = int(settings.n_channels)
        n_samples = schedule.expected_samples(fs)
        signal = np.full((n_samples, n_ch), _BASELINES[modality])
        # baseline differs per channel, like uncalibrated raw device output
        signal += 0.1 * np.arange(n_ch)
        # the template covers the whole activity interval, past the cut window
        n_active = math.ceil(schedule.activity_seconds * fs)
        for k, class_id in enumerate(schedule.blocks()):
            start = schedule.block_start(k, fs)
            stop = min(start + n_active, n_samples)
            t = np.arange(stop - start) / fs
            signal[start:stop] += _template(
                modality, class_id, len(label_map), n_ch, t, schedule.activity_seconds
            )
        if math.isfinite(config.snr):
            rng = SeededRng(derive_seed(config.seed, subject_index, MODALITIES.index(modality)))
            noise_std = AMPLITUDE / config.snr
            signal += noise_std * rng.normal(n_samples * n_ch).reshape(n_samples, n_ch)
        recordings.append(
            Recording(
                modality=modality,
                sampling_rate_hz=fs,
                channel_names=_channel_names(modality, n_ch),
                samples=signal,
                subject_id=subject_id,
                schedule=schedule,
                label_map=label_map,
            )
        )
    return recordings


def write_dataset(config, out_dir):
    """Write every subject/modality recording plus ``manifest.json``.

    Returns the manifest as a dict, with its path under ``"path"``.
    """
    out_dir = os.fspath(out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out_dir}: {exc}") from exc
    files = []
    for i in range(config.n_subjects):
        for rec in generate_session(config, i):
            data_path, meta_path = recording_paths(out_dir, rec.subject_id, rec.modality)
            try:
                write_recording(rec, data_path, meta_path)
            except OSError as exc:
                raise OSError(f"failed writing {data_path}: {exc}") from exc
            files.append(
                {
                    "subject_id": rec.subject_id,
                    "modality": rec.modality,
                    "data": os.path.basename(data_path),
                    "meta": os.path.basename(meta_path),
                }
            )
    manifest = {
        "format_version": MANIFEST_VERSION,
        "seed": config.seed,
        "config": config.to_dict(),
        "files": files,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return dict(manifest, path=path)

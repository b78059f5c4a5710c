"""Run configuration: an INI file with one section per subsystem.

Every key has a typed default; a config file only needs the keys it changes.
The fully resolved configuration is what gets written to a run manifest.
"""
from __future__ import annotations

import configparser
import io
from copy import deepcopy
from dataclasses import dataclass, field
from pathlib import Path

from .bench import BenchConfig, LabelRule, SequenceTask
from .errors import IoError, ParseError, WaveFieldError
from .lattice import Boundary, DelayRounding, TopographicLattice
from .wavesim import KernelProfile, NeuronModel

DEFAULTS: dict[str, dict] = {
    "lattice": {"width": 64, "height": 64, "spacing": 0.2, "conduction_velocity": 0.3,
                "boundary": "open", "delay_rounding": "up"},
    "neuron": {"variant": "spiking_lif", "tau": 1.0, "threshold": 1.0, "reset": 0.0, "rest": 0.0,
               "recurrent_gain": 0.5, "feedforward_gain": 1.0, "noise_std": 0.01,
               "rectify": True},
    "kernel": {"excitatory_amplitude": 1.0, "excitatory_width": 20.0,
               "inhibitory_amplitude": 0.1, "inhibitory_width": 60.0, "cutoff_radius": 48.0},
    "sim": {"dt": 1.0, "steps": 300, "seed": 0},
    "task": {"alphabet": "16,32;32,16;48,32", "length": 3, "interval": 8,
             "rule": "sequence_identity", "lag": 0, "admissible": "0,1,2;0,2,1", "start": 5,
             "readout_delay": 5, "amplitude": 1.5, "duration": 1},
    "bench": {"encoders": "wave,ssm,attention", "n_protocols": 100, "seeds": "0,1,2,3,4",
              "ridge": 0.01, "test_fraction": 0.2, "shuffle_labels": False,
              "wave_features": "potential", "memory_lags": ""},
    "ssm": {"nodes": 64, "excitatory_amplitude": 1.0, "excitatory_width": 2.0,
            "inhibitory_amplitude": 0.1, "inhibitory_width": 4.0, "zero_row_sum": True,
            "dt": 0.02, "steps": 100, "method": "exact", "input": "impulse", "noise": 0.0},
    "attention": {"d_model": 16, "n_heads": 2, "d_ff": 32, "n_layers": 2, "pooling": "mean",
                  "positional": True, "param_seed": 0, "length": 8},
    "decode": {"step": -1, "max_events": 3, "horizon": 48, "floor": 0.2, "mode": "sequence"},
}


def _coerce(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _pairs(text: str) -> list[tuple[int, ...]]:
    return [tuple(int(v) for v in chunk.split(",")) for chunk in text.split(";") if chunk.strip()]


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: deepcopy(DEFAULTS))
    source: str | None = None
    run: dict = field(default_factory=dict)  # [run] section of manifests
    lines: list = field(default_factory=list, repr=False)  # source text, for error locations

    def __getitem__(self, section):
        return self.values[section]

    def lattice(self) -> TopographicLattice:
        s = self["lattice"]
        return TopographicLattice(s["width"], s["height"], s["spacing"], s["conduction_velocity"],
                                  Boundary(s["boundary"]), DelayRounding(s["delay_rounding"]))

    def neuron(self) -> NeuronModel:
        return NeuronModel(**self["neuron"])

    def kernel(self) -> KernelProfile:
        return KernelProfile(**self["kernel"])

    @property
    def dt(self) -> float:
        return self["sim"]["dt"]

    @property
    def seed(self) -> int:
        return self["sim"]["seed"]

    def task(self) -> SequenceTask:
        t = self["task"]
        admissible = _pairs(t["admissible"]) or None
        return SequenceTask(tuple(_pairs(t["alphabet"])), t["length"], t["interval"],
                            LabelRule(t["rule"]), t["lag"], admissible, t["start"],
                            t["readout_delay"], t["amplitude"], t["duration"])

    def bench_seeds(self) -> tuple[int, ...]:
        return tuple(_int_list(self["bench"]["seeds"]))

    def encoders(self) -> list[str]:
        return [e.strip() for e in self["bench"]["encoders"].split(",") if e.strip()]

    def memory_lags(self) -> list[int]:
        return _int_list(self["bench"]["memory_lags"])

    def ssm_kernel(self) -> KernelProfile:
        s = self["ssm"]
        return KernelProfile(s["excitatory_amplitude"], s["excitatory_width"],
                             s["inhibitory_amplitude"], s["inhibitory_width"], 0.0)

    def bench_config(self) -> BenchConfig:
        lat, b, a, s = self["lattice"], self["bench"], self["attention"], self["ssm"]
        return BenchConfig(
            width=lat["width"], height=lat["height"], spacing=lat["spacing"],
            conduction_velocity=lat["conduction_velocity"], boundary=lat["boundary"], delay_rounding=lat["delay_rounding"],
            dt=self.dt, kernel=self.kernel(), neuron=self.neuron(),
            n_protocols=b["n_protocols"], seeds=self.bench_seeds(), ridge=b["ridge"],
            test_fraction=b["test_fraction"], shuffle_labels=b["shuffle_labels"],
            wave_features=b["wave_features"], ssm_nodes=s["nodes"], ssm_kernel=self.ssm_kernel(),
            ssm_dt=s["dt"], ssm_noise=s["noise"], d_model=a["d_model"], n_heads=a["n_heads"],
            d_ff=a["d_ff"], n_layers=a["n_layers"], pooling=a["pooling"],
            positional=a["positional"], param_seed=a["param_seed"])

    def with_seed(self, seed: int) -> "RunConfig":
        """Override every seed: the simulation seed, the attention parameter seed and the bench seeds."""
        out = RunConfig(deepcopy(self.values), self.source, dict(self.run), list(self.lines))
        out.values["sim"]["seed"] = seed
        out.values["attention"]["param_seed"] = seed
        n = max(len(self.bench_seeds()), 1)
        out.values["bench"]["seeds"] = ",".join(str(seed + i) for i in range(n))
        return out

    def validate(self) -> None:
        checks = [("lattice", self.lattice), ("neuron", self.neuron), ("kernel", self.kernel),
                  ("task", self.task), ("ssm", self.ssm_kernel), ("bench", self.bench_config)]
        for section, build in checks:
            try:
                build()
            except (WaveFieldError, ValueError, TypeError) as exc:
                raise ParseError(str(exc), field=section, path=self.source,
                                 line=_section_line(self.lines, section)) from exc
        if self.dt <= 0:
            raise ParseError("dt must be > 0", field="sim.dt", path=self.source,
                             line=_key_line(self.lines, "sim", "dt"))

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        if self.run:
            cp["run"] = {k: _format(self.run[k]) for k in sorted(self.run)}
        for section, keys in self.values.items():
            cp[section] = {k: _format(v) for k, v in keys.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_ini())


def _section_line(lines, section):
    for i, line in enumerate(lines, 1):
        if line.strip() == f"[{section}]":
            return i
    return None


def _key_line(lines, section, key):
    current = None
    for i, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1]
        elif current == section and s.split("=", 1)[0].strip() == key:
            return i
    return None


def load_config(path=None, text: str | None = None) -> RunConfig:
    """Parse an INI config (file or text) over the defaults and validate it."""
    cfg = RunConfig(source=str(path) if path is not None else None)
    if path is None and text is None:
        cfg.validate()
        return cfg
    if text is None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
    cfg.lines = text.splitlines()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path) if path is not None else "<string>")
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("expected a [section] header", line=exc.lineno, field="section",
                         path=path) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ParseError("malformed line", line=lineno, field="syntax", path=path) from exc
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        field_ = getattr(exc, "section", None)
        raise ParseError(str(exc).splitlines()[0], line=lineno, field=field_, path=path) from exc
    for section in cp.sections():
        if section == "run":
            cfg.run = dict(cp[section])
            continue
        if section not in DEFAULTS:
            raise ParseError(f"unknown section [{section}]", field=section, path=path,
                             line=_section_line(cfg.lines, section))
        for key, text_value in cp[section].items():
            if key not in DEFAULTS[section]:
                raise ParseError("unknown key", field=f"{section}.{key}", path=path,
                                 line=_key_line(cfg.lines, section, key))
            try:
                cfg.values[section][key] = _coerce(text_value, DEFAULTS[section][key])
            except ValueError as exc:
                raise ParseError(str(exc), field=f"{section}.{key}", path=path,
                                 line=_key_line(cfg.lines, section, key)) from exc
    cfg.validate()
    return cfg

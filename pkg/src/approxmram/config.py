"""Experiment configuration: bracketed sections of ``key = value`` lines.

Every key has a default; unknown sections or keys are rejected so that a
typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .energy import ENERGY_ANCHOR, OPERATING_V_PULSE, VARIABILITY_ANCHOR
from .memory import ENCODINGS, FixedPointFormat
from .network import DEFAULT_LEARNING_RATE, LAYER_SIZES, TrainConfig
from .switching import DEFAULT_ANCHORS, DeviceParams, PulseSpec, load_anchors

DEFAULT_MNIST_DIR = os.environ.get("MNIST_DIR", "mnist")
UNIFORM_GRID = (1e-10, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 3e-2, 0.1, 0.3)
N_LSB_GRID = (4, 6, 8, 10, 12)
LSB_BER_GRID = (1e-2, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
HSB_BER = 1e-2


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    device: DeviceParams = field(default_factory=DeviceParams)
    anchors: tuple[tuple[float, float], ...] = DEFAULT_ANCHORS
    energy_anchor: tuple[PulseSpec, float] = ENERGY_ANCHOR
    variability_anchor: tuple[float, float] = VARIABILITY_ANCHOR
    use_variability: bool = True
    v_pulse: float = OPERATING_V_PULSE
    fmt: FixedPointFormat = field(default_factory=FixedPointFormat)
    train: TrainConfig = field(default_factory=TrainConfig)
    mnist_dir: Path = Path(DEFAULT_MNIST_DIR)
    uniform_bers: tuple[float, ...] = UNIFORM_GRID
    n_lsb_list: tuple[int, ...] = N_LSB_GRID
    lsb_bers: tuple[float, ...] = LSB_BER_GRID
    hsb_ber: float = HSB_BER
    out: Path | None = None
    seed_base: int = 0

    def train_config(self) -> TrainConfig:
        return replace(self.train, fractional_bits=self.fmt.fractional_bits, encoding=self.fmt.encoding,
                       seed=self.seed_base)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_DEVICE_KEYS = {f.name for f in fields(DeviceParams)}

# section -> key -> parser
SCHEMA = {
    "device": {name: float for name in _DEVICE_KEYS},
    "calibration": {
        "anchors_file": str,
        "energy_v_pulse": float,
        "energy_t_pulse": float,
        "energy_pj": float,
        "variability_ber": float,
        "variability_t_pulse": float,
        "use_variability": _bool,
        "v_pulse": float,
    },
    "format": {"fractional_bits": int, "encoding": str},
    "train": {
        "minibatch": int,
        "epochs": int,
        "learning_rate": float,
        "n_seeds": int,
        "layer_sizes": _ints,
        "mnist_dir": str,
    },
    "sweep": {"uniform_bers": _floats, "n_lsb_list": _ints, "lsb_bers": _floats, "hsb_ber": float},
    "output": {"out": str, "seed_base": int},
}


def _parse(parser: configparser.ConfigParser, base: Path) -> dict[str, dict]:
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                values[section][key] = SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    for key in ("anchors_file",):
        if key in values.get("calibration", {}):
            values["calibration"][key] = base / values["calibration"][key]
    if "mnist_dir" in values.get("train", {}):
        values["train"]["mnist_dir"] = base / values["train"]["mnist_dir"]
    return values


def build_config(values: dict[str, dict]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    try:
        device = replace(cfg.device, **values.get("device", {}))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    cal = values.get("calibration", {})
    anchors = cfg.anchors
    if "anchors_file" in cal:
        path = Path(cal["anchors_file"])
        if not path.is_file():
            raise ConfigError(f"anchors_file {path} does not exist")
        try:
            anchors = tuple(load_anchors(path))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    pulse, e_pj = cfg.energy_anchor
    energy_anchor = (
        PulseSpec(cal.get("energy_v_pulse", pulse.v_pulse), cal.get("energy_t_pulse", pulse.t_pulse)),
        cal.get("energy_pj", e_pj),
    )
    variability_anchor = (
        cal.get("variability_ber", cfg.variability_anchor[0]),
        cal.get("variability_t_pulse", cfg.variability_anchor[1]),
    )

    fmt_values = values.get("format", {})
    if fmt_values.get("encoding", cfg.fmt.encoding) not in ENCODINGS:
        raise ConfigError(f"encoding must be one of {ENCODINGS}")
    try:
        fmt = replace(cfg.fmt, **fmt_values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    tr = dict(values.get("train", {}))
    mnist_dir = Path(tr.pop("mnist_dir", cfg.mnist_dir))
    try:
        train = replace(cfg.train, **tr)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if tr.get("layer_sizes", LAYER_SIZES)[0] != 784 or len(train.layer_sizes) < 2:
        raise ConfigError("layer_sizes must start with 784 and have at least two entries")

    sw = values.get("sweep", {})
    out = values.get("output", {})
    result = ExperimentConfig(
        device=device,
        anchors=anchors,
        energy_anchor=energy_anchor,
        variability_anchor=variability_anchor,
        use_variability=cal.get("use_variability", cfg.use_variability),
        v_pulse=cal.get("v_pulse", cfg.v_pulse),
        fmt=fmt,
        train=train,
        mnist_dir=mnist_dir,
        uniform_bers=sw.get("uniform_bers", cfg.uniform_bers),
        n_lsb_list=sw.get("n_lsb_list", cfg.n_lsb_list),
        lsb_bers=sw.get("lsb_bers", cfg.lsb_bers),
        hsb_ber=sw.get("hsb_ber", cfg.hsb_ber),
        out=Path(out["out"]) if "out" in out else None,
        seed_base=out.get("seed_base", cfg.seed_base),
    )
    validate(result)
    return result


def validate(cfg: ExperimentConfig):
    for name in ("uniform_bers", "n_lsb_list", "lsb_bers"):
        if not getattr(cfg, name):
            raise ConfigError(f"sweep grid {name} is empty")
    for b in cfg.uniform_bers:
        if not 0.0 < b < 1.0:
            raise ConfigError(f"uniform BER {b} outside (0, 1)")
    for b in (*cfg.lsb_bers, cfg.hsb_ber):
        if not 0.0 < b <= 1.0:
            raise ConfigError(f"tier BER {b} outside (0, 1]")
    for n in cfg.n_lsb_list:
        if not 0 <= n <= 16:
            raise ConfigError(f"n_lsb {n} outside [0, 16]")
    if not cfg.v_pulse > 0:
        raise ConfigError("v_pulse must be > 0")


def load_config(path=None, text: str | None = None) -> ExperimentConfig:
    """Read a config file (or ``text``); relative paths resolve against its directory."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    base = Path.cwd()
    try:
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file {path} does not exist")
            parser.read_string(path.read_text(), source=str(path))
            base = path.parent
        elif text is not None:
            parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return build_config(_parse(parser, base))


def default_config_text() -> str:
    cfg = ExperimentConfig()
    d = cfg.device
    pulse, e_pj = cfg.energy_anchor
    lines = ["[device]"]
    lines += [f"{f.name} = {getattr(d, f.name)!r}" for f in fields(DeviceParams)]
    lines += [
        "",
        "[calibration]",
        "# anchors_file = anchors.tsv   (t_pulse_ns<TAB>ber per line)",
        f"energy_v_pulse = {pulse.v_pulse!r}",
        f"energy_t_pulse = {pulse.t_pulse!r}",
        f"energy_pj = {e_pj!r}",
        f"variability_ber = {cfg.variability_anchor[0]!r}",
        f"variability_t_pulse = {cfg.variability_anchor[1]!r}",
        f"use_variability = {str(cfg.use_variability).lower()}",
        f"v_pulse = {cfg.v_pulse!r}",
        "",
        "[format]",
        f"fractional_bits = {cfg.fmt.fractional_bits}",
        f"encoding = {cfg.fmt.encoding}",
        "",
        "[train]",
        f"minibatch = {cfg.train.minibatch}",
        f"epochs = {cfg.train.epochs}",
        f"learning_rate = {DEFAULT_LEARNING_RATE!r}",
        f"n_seeds = {cfg.train.n_seeds}",
        f"layer_sizes = {', '.join(map(str, cfg.train.layer_sizes))}",
        f"mnist_dir = {cfg.mnist_dir}",
        "",
        "[sweep]",
        f"uniform_bers = {', '.join(repr(b) for b in cfg.uniform_bers)}",
        f"n_lsb_list = {', '.join(map(str, cfg.n_lsb_list))}",
        f"lsb_bers = {', '.join(repr(b) for b in cfg.lsb_bers)}",
        f"hsb_ber = {cfg.hsb_ber!r}",
        "",
        "[output]",
        "# out = results.csv",
        f"seed_base = {cfg.seed_base}",
    ]
    return "\n".join(lines) + "\n"

"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _int_list(s: str) -> tuple:
    return tuple(int(v) for v in s.replace(",", " ").split())


def _bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s}")


def _opt(conv):
    def parse(s):
        return None if s.lower() in ("", "none", "auto") else conv(s)
    return parse


def _float(s: str) -> float:
    s = s.strip()
    if s in ("pi", "5pi"):
        return 5 * math.pi if s == "5pi" else math.pi
    return float(s)


# key -> (parser, default)
SCHEMA = {
    "grid.L": (_float, 5 * math.pi),
    "grid.num_points": (int, 2**14),
    "drift.kind": (str, "smooth_benchmark"),
    "drift.profile": (str, "ou"),
    "drift.beta": (float, 0.25),
    "drift.beta_hat": (_opt(float), None),
    "drift.seed": (int, 0),
    "drift.amplitude": (float, 1.0),
    "drift.time_modulation": (str, "constant"),
    "drift.holder_exponent": (float, 0.6),
    "drift.m": (int, 64),
    "pde.lambda": (_opt(float), None),
    "pde.time_nodes": (int, 64),
    "pde.tol": (float, 1e-8),
    "pde.T": (float, 1.0),
    "pde.num_points": (_opt(int), 256),
    "scheme.n_list": (_int_list, (16, 32, 64, 128, 256, 512)),
    "scheme.n_fine": (int, 2**13),
    "scheme.m_ref": (_opt(int), None),
    "scheme.paths": (int, 10_000),
    "scheme.x0": (float, 0.0),
    "scheme.T": (float, 1.0),
    "scheme.master_seed": (int, 0),
    "scheme.batch_size": (int, 500),
    "scheme.p": (float, 2.0),
    "rate.epsilon": (float, 0.05),
    "rate.beta_hat": (_opt(float), None),
    "rate.p": (float, 2.0),
    "rate.m_fixed": (_opt(int), None),
    "output_dir": (str, "out"),
}


def _validate(v: dict):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(v["grid.L"] > 0, "grid.L must be positive")
    n = v["grid.num_points"]
    need(n >= 64 and not n & (n - 1), "grid.num_points must be a power of two >= 64")
    if v["pde.num_points"] is not None:
        k = v["pde.num_points"]
        need(k >= 64 and not k & (k - 1), "pde.num_points must be a power of two >= 64")
    need(v["drift.m"] >= 1, "drift.m must be >= 1")
    need(v["pde.lambda"] is None or v["pde.lambda"] > 0, "pde.lambda must be positive")
    need(v["pde.time_nodes"] >= 8, "pde.time_nodes must be >= 8")
    need(v["pde.tol"] > 0, "pde.tol must be positive")
    need(v["pde.T"] > 0 and v["scheme.T"] > 0, "T must be positive")
    nf = v["scheme.n_fine"]
    need(nf >= 1 and not nf & (nf - 1), "scheme.n_fine must be a power of two")
    ns = v["scheme.n_list"]
    need(len(ns) > 0 and all(nf % k == 0 for k in ns), "scheme.n_list entries must divide scheme.n_fine")
    need(all(b > a for a, b in zip(ns, ns[1:])), "scheme.n_list must be strictly increasing")
    need(v["scheme.paths"] >= 2, "scheme.paths must be >= 2")
    need(v["scheme.batch_size"] >= 1, "scheme.batch_size must be >= 1")
    need(v["scheme.m_ref"] is None or v["scheme.m_ref"] >= 1, "scheme.m_ref must be >= 1")
    need(v["scheme.p"] == 1 or v["scheme.p"] >= 2, "scheme.p must be 1 or >= 2")
    need(v["rate.p"] == 1 or v["rate.p"] >= 2, "rate.p must be 1 or >= 2")
    need(v["rate.epsilon"] > 0, "rate.epsilon must be positive")
    # drift-level checks reuse the drift module's own validation
    from .drift import DriftSpec
    try:
        spec_from(v, DriftSpec)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def spec_from(v: dict, cls=None):
    if cls is None:
        from .drift import DriftSpec as cls
    return cls(kind=v["drift.kind"], beta=v["drift.beta"], seed=v["drift.seed"], amplitude=v["drift.amplitude"],
               time_modulation=v["drift.time_modulation"], profile=v["drift.profile"],
               holder_exponent=v["drift.holder_exponent"], beta_hat=v["drift.beta_hat"])


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})
    raw: dict = field(default_factory=dict)  # textual form of every explicitly set key

    def __getitem__(self, key):
        return self.values[key]

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output_dir"])

    @property
    def master_seed(self) -> int:
        return self.values["scheme.master_seed"]

    def set(self, key: str, text: str):
        if key == "master_seed":
            key = "scheme.master_seed"
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        conv = SCHEMA[key][0]
        try:
            self.values[key] = conv(text.strip())
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {text!r} ({e})") from e
        self.raw[key] = text.strip()

    def validate(self) -> "ExperimentConfig":
        _validate(self.values)
        return self

    def drift_spec(self):
        return spec_from(self.values)

    def snapshot_lines(self) -> list[str]:
        """Every key with its effective value, in a form ``parse_lines`` reads back."""
        out = []
        for key in SCHEMA:
            v = self.values[key]
            if isinstance(v, tuple):
                text = " ".join(str(x) for x in v)
            elif v is None:
                text = "none"
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            out.append(f"{key} = {text}")
        return out


def parse_lines(lines, cfg: ExperimentConfig | None = None, allow_prefix: tuple = ()) -> ExperimentConfig:
    cfg = cfg or ExperimentConfig()
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if allow_prefix and key.startswith(allow_prefix):
            continue
        cfg.set(key, val)
    return cfg


def load_config(path, cfg: ExperimentConfig | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_lines(p.read_text().splitlines(), cfg, allow_prefix=("run.",))

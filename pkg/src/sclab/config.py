"""Flat typed key-value experiment configuration.

Format: one ``key = value`` pair per line, dotted section names, ``#``
comments. Values are typed against a fixed registry; unknown keys are
rejected by name. The resolved configuration (defaults plus overrides) is
what every run folder stores, and its canonical serialization is the unit
of reproducibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = ["ExperimentConfig", "ConfigError", "KNOWN_EXPERIMENTS"]

KNOWN_EXPERIMENTS = (
    "hf_evolve",
    "vlasov_evolve",
    "semiclassical_rate",
    "meanfield_compare",
    "ineq_suite",
    "regularity_report",
)


class ConfigError(ValueError):
    pass


def _as_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _as_float_list(s: str):
    return tuple(float(tok) for tok in s.split(",") if tok.strip())


def _as_int_list(s: str):
    return tuple(int(tok) for tok in s.split(",") if tok.strip())


# key -> (parser, default)
REGISTRY = {
    "experiment": (str, "hf_evolve"),
    "seed": (int, 0),
    "grid.d": (int, 1),
    "grid.n": (int, 128),
    "grid.L": (float, 2 * math.pi),
    "grid.hbar": (float, 0.125),
    "grid.hbar_sweep": (_as_float_list, ()),
    "potential.a": (float, 0.5),
    "potential.kappa": (float, 1.0),
    "potential.cutoff_R": (float, 0.0),
    "init.kind": (str, "toeplitz_gaussian"),
    "init.center_x": (float, 0.0),
    "init.center_xi": (float, 0.3),
    "init.sigma_x": (float, 0.7),
    "init.sigma_xi": (float, 0.35),
    "init.file": (str, ""),
    "hf.T": (float, 0.5),
    "hf.dt": (float, 2e-3),
    "hf.stride": (int, 50),
    "hf.exchange": (_as_bool, True),
    "hf.diagnostics": (str, "basic"),
    "hf.n_w": (int, 2),
    "vlasov.T": (float, 0.5),
    "vlasov.dt": (float, 2e-3),
    "vlasov.stride": (int, 50),
    "vlasov.n_w": (int, 2),
    "vlasov.limiter": (_as_bool, False),
    "meanfield.M": (int, 8),
    "meanfield.N_sweep": (_as_int_list, (2, 3, 4, 6)),
    "meanfield.T": (float, 0.5),
    "meanfield.dt": (float, 2.5e-4),
    "meanfield.occupation_width": (float, 2.0),
    "meanfield.max_occupation": (float, 0.9),
    "ineq.trials_scale": (float, 1.0),
    "regularity.factor": (float, 10.0),
    "regularity.n_w": (int, 2),
    "regularity.q1": (float, 4.0),
    "dump.operators": (_as_bool, False),
    "dump.fields": (_as_bool, False),
}


@dataclass
class ExperimentConfig:
    """Resolved experiment configuration (defaults + file overrides)."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        resolved = {k: default for k, (_, default) in REGISTRY.items()}
        for k, v in self.values.items():
            if k not in REGISTRY:
                raise ConfigError(f"unknown configuration key: {k!r}")
            resolved[k] = v
        self.values = resolved
        if self.values["experiment"] not in KNOWN_EXPERIMENTS:
            raise ConfigError(f"unknown experiment kind: {self.values['experiment']!r}")

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, sval = (tok.strip() for tok in line.split("=", 1))
            if key not in REGISTRY:
                raise ConfigError(f"unknown configuration key: {key!r}")
            parser, _ = REGISTRY[key]
            try:
                values[key] = parser(sval)
            except ConfigError:
                raise
            except Exception as exc:
                raise ConfigError(f"bad value for {key!r}: {sval!r} ({exc})") from exc
        return cls(values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def canonical(self) -> str:
        """Deterministic serialization of the resolved configuration."""
        lines = []
        for k in sorted(self.values):
            v = self.values[k]
            if isinstance(v, tuple):
                sval = ", ".join(repr(t) for t in v)
            elif isinstance(v, bool):
                sval = "true" if v else "false"
            elif isinstance(v, float):
                sval = repr(v)
            else:
                sval = str(v)
            lines.append(f"{k} = {sval}")
        return "\n".join(lines) + "\n"

"""Run configuration: TOML file plus ``--section.key=value`` overrides.

Parsing is strict.  Unknown sections or keys, wrong types and
out-of-range values raise :class:`ConfigError` before anything runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class WeightConfig:
    kind: str = "monomial"
    m: float = 2.0
    table_path: str = ""


@dataclass
class GridConfig:
    R: float = 6.0
    h: float = 0.1
    shape: str = "square"


@dataclass
class OperatorConfig:
    penalty: float = 0.05


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 20000


@dataclass
class EigsConfig:
    k: int = 40
    tol: float = 1e-8
    max_restarts: int = 5


@dataclass
class SolveConfig:
    rhs: str = "one"
    K: int = 10
    trials: int = 100


@dataclass
class DiagnoseConfig:
    radii: list = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0])
    samples_per_ring: int = 8
    ball_radius: float = 1.0
    flat_band: float = 0.15
    laplacian_ratio: float = 4.0
    laplacian_min: float = 10.0
    mu_rel_slope: float = 0.1
    degeneracy_radii: list = field(default_factory=lambda: [4.0, 6.0])
    degeneracy_h: float = 0.1
    degeneracy_growth: float = 1.5
    cluster_halfwidth: float = 0.2
    degeneracy_k: int = 48


@dataclass
class WeightsCheckConfig:
    centers: list = field(default_factory=lambda: [[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [5.0, 0.0]])
    radii: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    resolution: float = 0.02


@dataclass
class OutputConfig:
    directory: str = "dbarlab-out"
    formats: list = field(default_factory=lambda: ["csv", "json", "dat"])


SECTIONS = {
    "weight": WeightConfig,
    "grid": GridConfig,
    "operator": OperatorConfig,
    "solver": SolverConfig,
    "eigs": EigsConfig,
    "solve": SolveConfig,
    "diagnose": DiagnoseConfig,
    "weights_check": WeightsCheckConfig,
    "output": OutputConfig,
}
TOP_LEVEL = {"seed": int, "workers": int}

POSITIVE = {
    ("grid", "R"), ("grid", "h"), ("solver", "tol"), ("solver", "max_iter"),
    ("eigs", "k"), ("eigs", "tol"), ("solve", "K"), ("solve", "trials"),
    ("diagnose", "samples_per_ring"), ("diagnose", "ball_radius"), ("diagnose", "flat_band"),
    ("diagnose", "laplacian_ratio"), ("diagnose", "degeneracy_h"),
    ("diagnose", "degeneracy_growth"), ("diagnose", "cluster_halfwidth"),
    ("diagnose", "degeneracy_k"), ("weights_check", "resolution"),
}
FORMATS = {"csv", "json", "dat"}


@dataclass
class RunConfig:
    weight: WeightConfig = field(default_factory=WeightConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    eigs: EigsConfig = field(default_factory=EigsConfig)
    solve: SolveConfig = field(default_factory=SolveConfig)
    diagnose: DiagnoseConfig = field(default_factory=DiagnoseConfig)
    weights_check: WeightsCheckConfig = field(default_factory=WeightsCheckConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self, *sections: str) -> str:
        """Stable hash of the named sections (all numeric ones by default)."""
        d = self.to_dict()
        keep = sections or ("weight", "grid", "operator", "solver", "eigs", "solve", "diagnose", "seed")
        payload = {k: d[k] for k in keep}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _coerce(section: str, key: str, value, default):
    where = f"{section}.{key}" if section else key
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list, got {value!r}")
        return value
    return value


def _parse_literal(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_override(flag: str) -> tuple[str, str, object]:
    """``--grid.R=8`` -> ``("grid", "R", 8)``; ``--seed=3`` -> ``("", "seed", 3)``."""
    body = flag[2:] if flag.startswith("--") else flag
    if "=" not in body:
        raise ConfigError(f"override {flag!r} must look like --section.key=value")
    dotted, raw = body.split("=", 1)
    section, _, key = dotted.rpartition(".")
    return section, key, _parse_literal(raw)


def build_config(data: dict, overrides: list[str] | None = None) -> RunConfig:
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    for flag in overrides or []:
        section, key, value = parse_override(flag)
        if section:
            data.setdefault(section, {})
            if not isinstance(data[section], dict):
                raise ConfigError(f"{section} is not a section")
            data[section][key] = value
        else:
            data[key] = value

    cfg = RunConfig()
    for name, value in data.items():
        if name in TOP_LEVEL:
            setattr(cfg, name, _coerce("", name, value, getattr(cfg, name)))
            continue
        if name not in SECTIONS:
            raise ConfigError(f"unknown config section or key {name!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"{name} must be a table")
        block = getattr(cfg, name)
        known = {f.name for f in fields(block)}
        for key, v in value.items():
            if key not in known:
                raise ConfigError(f"unknown key {name}.{key}")
            setattr(block, key, _coerce(name, key, v, getattr(block, key)))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    for section, key in POSITIVE:
        if getattr(getattr(cfg, section), key) <= 0:
            raise ConfigError(f"{section}.{key} must be positive")
    if cfg.weight.kind not in ("monomial", "tabulated"):
        raise ConfigError(f"weight.kind must be monomial or tabulated, got {cfg.weight.kind!r}")
    if cfg.weight.kind == "monomial" and cfg.weight.m < 2:
        raise ConfigError("weight.m must be at least 2")
    if cfg.weight.kind == "tabulated" and not cfg.weight.table_path:
        raise ConfigError("weight.table_path is required for tabulated weights")
    if cfg.grid.shape not in ("square", "disk"):
        raise ConfigError("grid.shape must be square or disk")
    if cfg.grid.h > cfg.grid.R / 2:
        raise ConfigError("grid.h must not exceed grid.R / 2")
    if cfg.operator.penalty < 0:
        raise ConfigError("operator.penalty must be nonnegative")
    if cfg.eigs.max_restarts < 0:
        raise ConfigError("eigs.max_restarts must be nonnegative")
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be nonnegative")
    bad = set(cfg.output.formats) - FORMATS
    if bad:
        raise ConfigError(f"unknown output formats {sorted(bad)}")
    for key in ("radii", "degeneracy_radii"):
        vals = getattr(cfg.diagnose, key)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise ConfigError(f"diagnose.{key} must hold numbers")
        if len(vals) < 2 or sorted(vals) != list(vals) or min(vals) < 0:
            raise ConfigError(f"diagnose.{key} must be at least two increasing nonnegative radii")
        setattr(cfg.diagnose, key, [float(v) for v in vals])
    wc = cfg.weights_check
    try:
        wc.centers = [[float(a), float(b)] for a, b in wc.centers]
        wc.radii = [float(r) for r in wc.radii]
    except (TypeError, ValueError) as exc:
        raise ConfigError("weights_check.centers must be [x, y] pairs and radii numbers") from exc
    if not wc.radii or min(wc.radii) <= 0:
        raise ConfigError("weights_check.radii must be positive")


def load_config(path=None, overrides: list[str] | None = None) -> RunConfig:
    data = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    return build_config(data, overrides)

"""Experiment configuration files (YAML).

Example::

    experiment: sweep-n
    scenario:
      kind: rician-los
      K: 4
      M: 32
      L: 16
      rician_k_factor: 20
      seed: 1
    codebook: {M_prime: 128}
    schemes: [TDD, D-GOB, H-GOB, D-SUB, H-SUB]
    rho_db: [0]
    N: [4, 8, 16, 32]
    output: {path: sweep.csv, format: csv}

SNRs and losses are given in dB and converted to linear once, here.
"""

import dataclasses
from dataclasses import dataclass, field

import yaml

from beamrate.channels import ScenarioSpec
from beamrate.errors import ValidationError
from beamrate.evaluation import SCHEMES

__all__ = ["ExperimentConfig", "EXPERIMENTS", "load_config", "parse_config", "parse_scenario",
           "db_to_linear"]

EXPERIMENTS = ("sweep-n", "snr-loss", "tradeoff", "training", "capacity")
_SCENARIO_FIELDS = {f.name for f in dataclasses.fields(ScenarioSpec)} - {"extra"}
_TOP_KEYS = {"experiment", "scenario", "codebook", "schemes", "rho_db", "N", "C_star", "T_c",
             "beta_db", "m", "n_subarrays", "output", "seed", "hermitian"}


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


@dataclass
class ExperimentConfig:
    scenario: ScenarioSpec
    experiment: str
    schemes: list
    M_prime: int
    normalize: bool = True
    rho_db: list = field(default_factory=lambda: [0.0])
    rho: list = field(default_factory=lambda: [1.0])
    N: list = field(default_factory=list)
    C_star: float = None
    T_c: list = field(default_factory=list)
    beta_db: list = field(default_factory=list)
    m: list = field(default_factory=list)
    n_subarrays: int = 1
    hermitian: bool = False
    output_path: str = None
    output_format: str = "csv"


def _numbers(raw, key, cast=float):
    if raw is None:
        return []
    values = raw if isinstance(raw, list) else [raw]
    try:
        out = [cast(v) for v in values]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{key}: expected numbers, got {raw!r}") from exc
    if cast is int and any(int(v) != float(v) for v in values):
        raise ValidationError(f"{key}: expected integers, got {raw!r}")
    return out


def parse_scenario(raw, seed=None):
    """Build a :class:`ScenarioSpec` from a mapping; returns ``(spec, normalize)``."""
    if not isinstance(raw, dict):
        raise ValidationError("scenario must be a mapping")
    raw = dict(raw)
    normalize = bool(raw.pop("normalize", True))
    unknown = set(raw) - _SCENARIO_FIELDS
    if unknown:
        raise ValidationError(f"scenario: unknown keys {sorted(unknown)}")
    if seed is not None:
        raw["seed"] = seed
    spec = ScenarioSpec(**raw)
    spec.validate()
    return spec, normalize


def parse_config(raw):
    """Validate a decoded config mapping into an :class:`ExperimentConfig`."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ValidationError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    if "scenario" not in raw:
        raise ValidationError("missing scenario")
    spec, normalize = parse_scenario(raw["scenario"], raw.get("seed"))

    schemes = raw.get("schemes", ["TDD"])
    if isinstance(schemes, str):
        schemes = [schemes]
    if not schemes:
        raise ValidationError("schemes must be nonempty")
    for s in schemes:
        if s not in SCHEMES:
            raise ValidationError(f"unknown scheme {s!r}; expected one of {SCHEMES}")

    cb = raw.get("codebook") or {}
    if not isinstance(cb, dict):
        raise ValidationError("codebook must be a mapping")
    M_prime = cb.get("M_prime")
    if M_prime is None:
        M_prime = 4 * spec.M if spec.kind != "file" else None
    elif int(M_prime) != M_prime or M_prime < 1:
        raise ValidationError(f"codebook.M_prime must be a positive integer, got {M_prime!r}")

    rho_db = _numbers(raw.get("rho_db", [0.0]), "rho_db")
    cfg = ExperimentConfig(
        scenario=spec,
        experiment=experiment,
        schemes=list(schemes),
        M_prime=None if M_prime is None else int(M_prime),
        normalize=normalize,
        rho_db=rho_db,
        rho=[db_to_linear(x) for x in rho_db],
        N=_numbers(raw.get("N"), "N", int),
        C_star=None if raw.get("C_star") is None else float(raw["C_star"]),
        T_c=_numbers(raw.get("T_c"), "T_c", int),
        beta_db=_numbers(raw.get("beta_db"), "beta_db"),
        m=_numbers(raw.get("m"), "m", int),
        n_subarrays=int(raw.get("n_subarrays", 1)),
        hermitian=bool(raw.get("hermitian", False)),
    )
    out = raw.get("output") or {}
    if not isinstance(out, dict):
        raise ValidationError("output must be a mapping")
    cfg.output_path = out.get("path")
    cfg.output_format = out.get("format", "csv")
    if cfg.output_format not in ("csv", "json"):
        raise ValidationError(f"output.format must be csv or json, got {cfg.output_format!r}")
    _check_lists(cfg)
    return cfg


def _check_lists(cfg):
    def need(name, cond=True):
        if not getattr(cfg, name) or not cond:
            raise ValidationError(f"experiment {cfg.experiment} needs a nonempty {name} list")

    need("rho_db")
    beamformed = [s for s in cfg.schemes if s not in ("TDD", "KxK-baseline", "A-GOB")]
    if cfg.experiment in ("sweep-n", "capacity") and beamformed:
        need("N")
    if cfg.experiment in ("snr-loss", "tradeoff"):
        if cfg.C_star is None or cfg.C_star <= 0:
            raise ValidationError(f"experiment {cfg.experiment} needs C_star > 0")
    if cfg.experiment == "snr-loss":
        need("beta_db")
    if cfg.experiment == "tradeoff":
        need("beta_db")
        need("m")
        need("N")
    if cfg.experiment == "training":
        need("T_c")
        if any(t < 1 for t in cfg.T_c):
            raise ValidationError("T_c values must be >= 1")
    if any(n < 0 for n in cfg.N):
        raise ValidationError("N values must be nonnegative")
    if cfg.n_subarrays < 1:
        raise ValidationError("n_subarrays must be >= 1")


def load_config(path):
    """Read and validate a YAML config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML ({exc})") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from exc
    return parse_config(raw)

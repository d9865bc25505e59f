"""Experiment configuration: three blocks (system, schemes, run) in one YAML file.

Every field has a default, so an empty file reproduces the reference setup
(4 antennas, P = 10, unit noise, 4 clusters, 1e-2 tolerable loss, 0.8 bits
per user, 3-bit conventional quantizer, K = 10..100).
"""

import numbers
from dataclasses import asdict, dataclass, field, fields

import yaml

from .fading import SystemConfig
from .rng import stream_generator
from .schemes import (FEEDBACK_MODES, ClusterFeedback, ConventionalFeedback, FullCSI,
                      SingleThresholdFeedback)
from .simulation import RATE_ACCOUNTING, draw_channel_vars

SCHEME_NAMES = ("full_csi", "conventional", "single_threshold", "cluster_type1",
                "cluster_type2")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class SystemBlock:
    M: int = 4
    N: int = 4
    K: int = 10
    P: float = 10.0
    noise_var: float = 1.0
    channel_vars: object = "uniform"  # "uniform" or an explicit list of K variances
    variance_seed: int = 0


@dataclass
class SchemeBlock:
    names: list = field(default_factory=lambda: list(SCHEME_NAMES))
    variant: str = "type1"
    n_clusters: object = 4  # int or "auto"
    max_rate_loss: float = 1e-2
    feedback_limit: float = 0.8
    b_max: int = 6
    p_out: float = 0.1
    conventional_bits: int = 3
    full_csi_bits: int = 32
    feedback_mode: str = "all_beams"
    rate_accounting: str = "true"
    snr_model: str = "analytic"


@dataclass
class RunBlock:
    n_drops: int = 10_000
    seed: int = 0
    k_list: list = field(default_factory=lambda: list(range(10, 101, 10)))
    out_dir: str = "results"
    n_jobs: int = 1
    block_size: int = 1000


def _is_int(v):
    return isinstance(v, numbers.Integral) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, numbers.Real) and not isinstance(v, bool)


def _require(cond, where, message):
    if not cond:
        raise ConfigError(f"{where}: {message}")


@dataclass
class ExperimentConfig:
    system: SystemBlock = field(default_factory=SystemBlock)
    schemes: SchemeBlock = field(default_factory=SchemeBlock)
    run: RunBlock = field(default_factory=RunBlock)

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data):
        data = {} if data is None else data
        _require(isinstance(data, dict), "config", "top level must be a mapping")
        blocks = {}
        for f in fields(cls):
            raw = data.get(f.name) or {}
            _require(isinstance(raw, dict), f.name, "must be a mapping")
            known = {g.name for g in fields(f.default_factory())}
            unknown = sorted(set(raw) - known)
            _require(not unknown, f.name, f"unknown key(s) {', '.join(map(str, unknown))}")
            blocks[f.name] = f.default_factory()
            for key, value in raw.items():
                setattr(blocks[f.name], key, value)
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        _require(not unknown, "config", f"unknown block(s) {', '.join(map(str, unknown))}")
        return cls(**blocks)

    @classmethod
    def from_yaml(cls, path):
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return {"system": asdict(self.system), "schemes": asdict(self.schemes),
                "run": asdict(self.run)}

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def validate(self):
        s, c, r = self.system, self.schemes, self.run
        for name in ("M", "N", "K"):
            _require(_is_int(getattr(s, name)) and getattr(s, name) >= 1, f"system.{name}",
                     "must be a positive integer")
        _require(s.N >= s.M, "system.N", f"must be >= M={s.M}")
        for name in ("P", "noise_var"):
            _require(_is_real(getattr(s, name)) and getattr(s, name) > 0, f"system.{name}",
                     "must be a positive number")
        if isinstance(s.channel_vars, str):
            _require(s.channel_vars == "uniform", "system.channel_vars",
                     "must be 'uniform' or a list of positive numbers")
        else:
            _require(isinstance(s.channel_vars, list) and s.channel_vars
                     and all(_is_real(v) and v > 0 for v in s.channel_vars),
                     "system.channel_vars", "must be 'uniform' or a list of positive numbers")
            _require(len(s.channel_vars) == s.K, "system.channel_vars",
                     f"has {len(s.channel_vars)} entries but K={s.K}")
        _require(_is_int(s.variance_seed) and s.variance_seed >= 0, "system.variance_seed",
                 "must be a nonnegative integer")

        _require(isinstance(c.names, list) and c.names, "schemes.names",
                 "must be a nonempty list")
        for name in c.names:
            _require(name in SCHEME_NAMES, "schemes.names",
                     f"unknown scheme {name!r}; choose from {', '.join(SCHEME_NAMES)}")
        _require(len(set(c.names)) == len(c.names), "schemes.names", "contains duplicates")
        _require(c.variant in ("type1", "type2"), "schemes.variant", "must be type1 or type2")
        _require(c.n_clusters == "auto" or (_is_int(c.n_clusters) and c.n_clusters >= 1),
                 "schemes.n_clusters", "must be a positive integer or 'auto'")
        _require(_is_real(c.max_rate_loss) and c.max_rate_loss > 0, "schemes.max_rate_loss",
                 "must be a positive number")
        _require(_is_real(c.feedback_limit) and c.feedback_limit >= 0,
                 "schemes.feedback_limit", "must be a nonnegative number")
        for name in ("b_max", "conventional_bits", "full_csi_bits"):
            _require(_is_int(getattr(c, name)) and getattr(c, name) >= 0, f"schemes.{name}",
                     "must be a nonnegative integer")
        _require(_is_real(c.p_out) and 0 < c.p_out < 1, "schemes.p_out", "must lie in (0, 1)")
        _require(c.feedback_mode in FEEDBACK_MODES, "schemes.feedback_mode",
                 f"must be one of {', '.join(FEEDBACK_MODES)}")
        _require(c.rate_accounting in RATE_ACCOUNTING, "schemes.rate_accounting",
                 f"must be one of {', '.join(RATE_ACCOUNTING)}")
        _require(c.snr_model in ("analytic", "matrix"), "schemes.snr_model",
                 "must be analytic or matrix")

        for name in ("n_drops", "n_jobs", "block_size"):
            _require(_is_int(getattr(r, name)) and getattr(r, name) >= 1, f"run.{name}",
                     "must be a positive integer")
        _require(_is_int(r.seed) and 0 <= r.seed < 2**64, "run.seed",
                 "must be an unsigned 64-bit integer")
        _require(isinstance(r.k_list, list) and r.k_list
                 and all(_is_int(k) and k >= 1 for k in r.k_list),
                 "run.k_list", "must be a nonempty list of positive integers")
        _require(isinstance(r.out_dir, str) and r.out_dir, "run.out_dir",
                 "must be a nonempty path")

    def channel_vars(self):
        s = self.system
        if s.channel_vars == "uniform":
            return tuple(draw_channel_vars(stream_generator(s.variance_seed, 0), s.K))
        return tuple(float(v) for v in s.channel_vars)

    def system_config(self):
        s = self.system
        return SystemConfig(M=s.M, N=s.N, P=float(s.P), noise_var=float(s.noise_var),
                            channel_vars=self.channel_vars())

    def build_schemes(self):
        c, M = self.schemes, self.system.M
        cluster = dict(n_clusters=c.n_clusters, max_rate_loss=c.max_rate_loss, n_beams=M,
                       feedback_limit=c.feedback_limit, b_max=c.b_max)
        factories = {
            "full_csi": lambda: FullCSI(report_bits=c.full_csi_bits),
            "conventional": lambda: ConventionalFeedback(bits=c.conventional_bits),
            "single_threshold": lambda: SingleThresholdFeedback(p_out=c.p_out,
                                                                bits=c.conventional_bits),
            "cluster_type1": lambda: ClusterFeedback(variant="type1", **cluster),
            "cluster_type2": lambda: ClusterFeedback(variant="type2", **cluster),
        }
        return [factories[name]() for name in c.names]

    def cluster_scheme(self):
        c = self.schemes
        return ClusterFeedback(variant=c.variant, n_clusters=c.n_clusters,
                               max_rate_loss=c.max_rate_loss, n_beams=self.system.M,
                               feedback_limit=c.feedback_limit, b_max=c.b_max)

"""YAML experiment configuration: schema, validation and round-tripping.

Example::

    model:
      d: 1
      offspring:
        - {family: bernoulli, p: 0.5}
      immigration: {family: poisson, lam: 1.0}
    seed: 12345
    samples: 100000
    alphas: [1.0, 2.0]
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

import yaml

from .distributions import OffspringSpec, VectorLaw, vector_from_dict, vector_to_dict
from .errors import ConfigError

TOP_KEYS = {"model", "seed", "samples", "alphas", "k_max", "eps", "mu_bar", "confidence", "format",
            "k_fracs", "certificate"}
CERT_KEYS = {"k_max_prime", "samples", "lattice_budget"}


@dataclass
class ExperimentConfig:
    d: int
    offspring: tuple
    immigration: VectorLaw
    seed: int = 0
    samples: int = 10000
    alphas: tuple = (1.0,)
    k_max: int = 25
    eps: float = 1e-6
    mu_bar: Optional[float] = None
    confidence: float = 0.999
    format: str = "csv"
    k_fracs: tuple = (0.01,)
    cert_k_max_prime: int = 200
    cert_samples: int = 20000
    cert_lattice_budget: int = 10**6

    def offspring_spec(self) -> OffspringSpec:
        return OffspringSpec(tuple(self.offspring))

    def validate(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an integer in [0, 2^64)", "seed")
        if not _is_int(self.samples) or self.samples < 100:
            raise ConfigError("samples must be an integer >= 100", "samples")
        if not self.alphas:
            raise ConfigError("at least one alpha is required", "alphas")
        for i, a in enumerate(self.alphas):
            if not _is_num(a) or not a > 0 or not math.isfinite(a):
                raise ConfigError(f"alpha must be a positive number, got {a!r}", f"alphas[{i}]")
        if not _is_int(self.k_max) or self.k_max < 1:
            raise ConfigError("k_max must be a positive integer", "k_max")
        if not _is_num(self.eps) or not self.eps > 0:
            raise ConfigError("eps must be positive", "eps")
        if self.mu_bar is not None and (not _is_num(self.mu_bar) or not 0 < self.mu_bar < 1):
            raise ConfigError("mu_bar must lie in (0, 1)", "mu_bar")
        if not _is_num(self.confidence) or not 0.5 <= self.confidence < 1:
            raise ConfigError("confidence must lie in [0.5, 1)", "confidence")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json", "format")
        for i, f in enumerate(self.k_fracs):
            if not _is_num(f) or not 0 < f < 1:
                raise ConfigError("k_frac must lie in (0, 1)", f"k_fracs[{i}]")
        for name in ("cert_k_max_prime", "cert_samples", "cert_lattice_budget"):
            if not _is_int(getattr(self, name)) or getattr(self, name) < 1:
                raise ConfigError("must be a positive integer", "certificate." + name[len("cert_"):])
        if self.cert_samples < 100:
            raise ConfigError("must be >= 100", "certificate.samples")
        return self


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def from_dict(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(obj) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "config")
    model = obj.get("model")
    if not isinstance(model, dict):
        raise ConfigError("missing model section", "model")
    d = model.get("d")
    if not _is_int(d) or d < 1:
        raise ConfigError("d must be a positive integer", "model.d")
    off = model.get("offspring")
    if not isinstance(off, list) or len(off) != d:
        raise ConfigError(f"offspring must list exactly d = {d} laws (one per parent type)", "model.offspring")
    offspring = tuple(vector_from_dict(law, d, f"model.offspring[{j}]") for j, law in enumerate(off))
    if "immigration" not in model:
        raise ConfigError("missing immigration law", "model.immigration")
    immigration = vector_from_dict(model["immigration"], d, "model.immigration")
    cert = obj.get("certificate") or {}
    if not isinstance(cert, dict) or set(cert) - CERT_KEYS:
        raise ConfigError(f"certificate section accepts only {sorted(CERT_KEYS)}", "certificate")

    def num_list(key, default):
        v = obj.get(key, default)
        if not isinstance(v, (list, tuple)):
            raise ConfigError("expected a list", key)
        return tuple(float(x) if _is_num(x) else x for x in v)

    cfg = ExperimentConfig(
        d=d,
        offspring=offspring,
        immigration=immigration,
        seed=obj.get("seed", 0),
        samples=obj.get("samples", 10000),
        alphas=num_list("alphas", [1.0]),
        k_max=obj.get("k_max", 25),
        eps=float(obj["eps"]) if _is_num(obj.get("eps")) else obj.get("eps", 1e-6),
        mu_bar=float(obj["mu_bar"]) if _is_num(obj.get("mu_bar")) else obj.get("mu_bar"),
        confidence=float(obj["confidence"]) if _is_num(obj.get("confidence")) else obj.get("confidence", 0.999),
        format=obj.get("format", "csv"),
        k_fracs=num_list("k_fracs", [0.01]),
        cert_k_max_prime=cert.get("k_max_prime", 200),
        cert_samples=cert.get("samples", 20000),
        cert_lattice_budget=cert.get("lattice_budget", 10**6),
    )
    return cfg.validate()


def to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "model": {
            "d": cfg.d,
            "offspring": [vector_to_dict(law) for law in cfg.offspring],
            "immigration": vector_to_dict(cfg.immigration),
        },
        "seed": cfg.seed,
        "samples": cfg.samples,
        "alphas": list(cfg.alphas),
        "k_max": cfg.k_max,
        "eps": cfg.eps,
        "mu_bar": cfg.mu_bar,
        "confidence": cfg.confidence,
        "format": cfg.format,
        "k_fracs": list(cfg.k_fracs),
        "certificate": {
            "k_max_prime": cfg.cert_k_max_prime,
            "samples": cfg.cert_samples,
            "lattice_budget": cfg.cert_lattice_budget,
        },
    }


def parse_config(text: str) -> ExperimentConfig:
    try:
        obj = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "config"
        raise ConfigError(f"YAML syntax error: {exc.problem}", where) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}") from None
    return from_dict(obj)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text)


def replace(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    kw = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    kw.update({k: v for k, v in changes.items() if v is not None})
    return ExperimentConfig(**kw).validate()

"""Run configuration: one JSON document, with CLI flags taking precedence.

Keeping every knob in a single serializable document (hashed into the run
record) is what makes runs reproducible.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .distribution_stats import KidConfig
from .errors import ConfigError
from .manifold_metrics import PrdcConfig
from .privacy_audit import PrivacyConfig

_TOP_LEVEL_KEYS = {
    "paths", "kid", "prdc", "privacy", "conditional", "rank",
    "output_dir", "rng_seed", "threads", "image_side",
}


@dataclass
class RunConfig:
    paths: dict[str, str] = field(default_factory=dict)
    kid: KidConfig = field(default_factory=KidConfig)
    prdc: PrdcConfig = field(default_factory=PrdcConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    min_stratum: Optional[int] = None
    directions: dict[str, str] = field(default_factory=dict)
    default_direction: Optional[str] = None
    output_dir: str = "out"
    rng_seed: int = 42
    threads: object = "auto"  # int or "auto"
    image_side: int = 224

    def resolved_threads(self) -> int:
        if isinstance(self.threads, int):
            if self.threads < 1:
                raise ConfigError(f"threads must be >= 1, got {self.threads}")
            return self.threads
        env = os.environ.get("GENMETRICS_THREADS")
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(f"GENMETRICS_THREADS must be an integer, got {env!r}")
        return os.cpu_count() or 1

    def semantic_dict(self) -> dict:
        """Config content that determines results; excludes output placement
        and worker count, which never change the numbers."""
        return {
            "kid": {
                "kernel_degree": self.kid.kernel_degree,
                "kernel_gamma": self.kid.kernel_gamma,
                "kernel_coef": self.kid.kernel_coef,
                "subset_size": self.kid.subset_size,
                "num_subsets": self.kid.num_subsets,
                "rng_seed": self.kid.rng_seed,
            },
            "prdc": {"k": self.prdc.k},
            "privacy": {
                "delta": self.privacy.delta,
                "seeds_per_prompt": self.privacy.seeds_per_prompt,
                "num_prompts": self.privacy.num_prompts,
                "aggregate_raw_pairs": self.privacy.aggregate_raw_pairs,
            },
            "conditional": {"min_stratum": self.min_stratum},
            "rank": {"directions": self.directions, "default_direction": self.default_direction},
            "rng_seed": self.rng_seed,
            "image_side": self.image_side,
        }


def _expect(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def load_config(path: str | Path | None) -> RunConfig:
    """Parse the JSON config document; absent file sections keep defaults."""
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
    _expect(doc, _TOP_LEVEL_KEYS, "config")

    cfg = RunConfig()
    cfg.paths = dict(doc.get("paths", {}))
    cfg.output_dir = doc.get("output_dir", cfg.output_dir)
    cfg.rng_seed = int(doc.get("rng_seed", cfg.rng_seed))
    cfg.threads = doc.get("threads", cfg.threads)
    cfg.image_side = int(doc.get("image_side", cfg.image_side))

    kid = dict(doc.get("kid", {}))
    _expect(kid, {"kernel_degree", "kernel_gamma", "kernel_coef", "subset_size",
                  "num_subsets", "rng_seed"}, "kid")
    kid.setdefault("rng_seed", cfg.rng_seed)
    try:
        cfg.kid = KidConfig(**kid)
        cfg.prdc = PrdcConfig(**doc.get("prdc", {}))
        cfg.privacy = PrivacyConfig(**doc.get("privacy", {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

    conditional = dict(doc.get("conditional", {}))
    _expect(conditional, {"min_stratum"}, "conditional")
    cfg.min_stratum = conditional.get("min_stratum")

    rank = dict(doc.get("rank", {}))
    _expect(rank, {"directions", "default_direction"}, "rank")
    cfg.directions = dict(rank.get("directions", {}))
    cfg.default_direction = rank.get("default_direction")
    for metric, direction in cfg.directions.items():
        if direction not in ("lower", "higher"):
            raise ConfigError(f"direction for {metric!r} must be 'lower' or 'higher'")
    if cfg.default_direction not in (None, "lower", "higher"):
        raise ConfigError("default_direction must be 'lower' or 'higher'")
    return cfg

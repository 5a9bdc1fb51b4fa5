"""Shared configuration file for the command-line tools.

YAML, merged over built-in defaults. Flags always win over the file. The
file is validated strictly: any key the tool does not know is rejected by
name rather than silently ignored, since a typoed knob that defaults
silently is worse than an error.
"""

from __future__ import annotations

import os
from pathlib import Path

import yaml

from .errors import ConfigError

ENV_VAR = "RIPPLEKIT_CONFIG"

DEFAULT_CONFIG: dict = {
    "profile": "ufs40",         # preset name or profile file path
    "bundle_bytes": None,       # override the profile's bundle size
    "max_neurons": 16384,       # search size limit (pair table is O(N^2))
    "out_dir": ".",
    "verbosity": "info",
    "cache": {
        "ratio": 0.1,           # capacity as a fraction of neuron_count
        "segment_min_len": 4,
        "admit_prob_sporadic": 1.0,
        "admit_prob_segment": 0.25,
        "admit_prob_speculative": 0.0,
        "small_queue_fraction": 0.1,
        "ghost_size": None,
        "ghost_promotes": True,
    },
    "collapse": {
        "enabled": True,
        "initial_threshold": None,  # None derives the analytic break-even gap
        "max_threshold": None,      # None = 4x the initial threshold
        "min_threshold": 0,
        "adjust_factor": 2.0,
        "detector_period": 16,
    },
    "profiles": {},             # extra named profiles: name -> parameter mapping
}


def _merge_section(name: str, defaults: dict, overrides: dict) -> dict:
    unknown = set(overrides) - set(defaults)
    if unknown:
        where = f"{name}." if name else ""
        raise ConfigError(
            f"unknown config key(s): {', '.join(where + k for k in sorted(unknown))}"
        )
    merged = dict(defaults)
    merged.update(overrides)
    return merged


def load_config(path: str | Path | None = None) -> dict:
    """Load and validate the config, falling back to the environment variable.

    No path and no environment variable yields the defaults unchanged.
    """
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULT_CONFIG.items()}

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    loaded = yaml.safe_load(path.read_text("utf-8"))
    if loaded is None:
        loaded = {}
    if not isinstance(loaded, dict):
        raise ConfigError(f"{path}: config must be a YAML mapping")

    merged = _merge_section("", DEFAULT_CONFIG, loaded)
    for section in ("cache", "collapse"):
        override = loaded.get(section, {})
        if not isinstance(override, dict):
            raise ConfigError(f"{path}: section {section!r} must be a mapping")
        merged[section] = _merge_section(section, DEFAULT_CONFIG[section], override)
    profiles = merged["profiles"]
    if not isinstance(profiles, dict):
        raise ConfigError(f"{path}: section 'profiles' must be a mapping")
    return merged

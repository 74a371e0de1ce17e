"""
Configuration for the jacobi-morse toolkit.

Environment defaults come from `.env` (python-dotenv); a JSON run config
and CLI flags are layered on top by `load_run_config`.
"""

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from dotenv import load_dotenv

from errors import ConfigError

# Load environment variables
load_dotenv()

DEFAULT_SIGMA = float(os.getenv("JM_SIGMA", "0.5"))
DEFAULT_TOL = float(os.getenv("JM_TOL", "1e-10"))
DEFAULT_SEED = int(os.getenv("JM_SEED", "20020901"))
DEFAULT_FORMAT = os.getenv("JM_FORMAT", "csv")
LOG_LEVEL = os.getenv("JM_LOG_LEVEL", "WARNING")
RUN_LOG = os.getenv("JM_RUN_LOG", "")

TOOL_VERSION = "1.0.0"

# ========================
# NUMERICAL POLICY
# ========================

MACHINE_EPS = float(np.finfo(float).eps)
# optimal central-difference step for first derivatives
FD_STEP = MACHINE_EPS ** (1.0 / 3.0)
# outer step when differencing analytic Christoffels for curvature
CURVATURE_STEP_ANALYTIC = MACHINE_EPS ** (1.0 / 3.0)
METRIC_DET_FLOOR = 1e-14
TANGENT_FLOOR = 1e-12
DEGENERACY_RATIO = 1e-6
ENERGY_TOL = 1e-6
EXTREMAL_TOL = 1e-5
# ds/dt = JACOBI_SPEED_FACTOR * (i1 - U); fixed by the 4/3 range calibration
JACOBI_SPEED_FACTOR = 2.0
# F^J = grad_h (FJ_CONSTANT * ln 2(i1 - U)); fixed by calibrate_fj_constant
FJ_CONSTANT = 1.0
FAMILY_STEP_RATIO = 1e-4
BASE_EXCLUSION_FRACTION = 0.01
ZERO_XTOL = 1e-8
NOISE_FLOOR_RATIO = 1e-9
ORTHOGONALITY_TOL = 1e-10


# ========================
# RUN CONFIG
# ========================

@dataclass(frozen=True)
class ModelConfig:
    kind: str = "garnier"
    sigma: float = DEFAULT_SIGMA
    metric: str = "euclidean"
    potential: str = "zero"
    level: float = 0.0
    i1: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    tol: float = DEFAULT_TOL
    threshold: float = 1e-5
    samples: int = 2001
    span: tuple = (0.0, 5.0)
    s_span: Optional[tuple] = None
    variations: int = 10
    depth: int = 3
    truncation: int = 7
    point: Optional[tuple] = None
    velocity: Optional[tuple] = None
    seed: int = DEFAULT_SEED
    output_format: str = DEFAULT_FORMAT
    output_path: Optional[str] = None
    closed_form: Optional[str] = None
    orbit: Optional[float] = None

    def to_dict(self) -> dict:
        """Plain-JSON view, used for hashing and JSON output headers."""
        return {
            "model": dict(self.model.__dict__),
            "tolerances": {"tol": self.tol, "threshold": self.threshold},
            "grids": {
                "samples": self.samples,
                "span": list(self.span),
                "s_span": list(self.s_span) if self.s_span is not None else None,
                "variations": self.variations,
                "depth": self.depth,
                "truncation": self.truncation,
            },
            "initial": {
                "point": list(self.point) if self.point is not None else None,
                "velocity": list(self.velocity) if self.velocity is not None else None,
            },
            "seed": self.seed,
            "output": {"format": self.output_format, "path": self.output_path},
            "closed_form": self.closed_form,
            "orbit": self.orbit,
        }


_SCHEMA = {
    "model": {"kind", "sigma", "metric", "potential", "level", "i1"},
    "tolerances": {"tol", "threshold"},
    "grids": {"samples", "span", "s_span", "variations", "depth", "truncation"},
    "initial": {"point", "velocity"},
    "output": {"format", "path"},
    "seed": None,
    "closed_form": None,
    "orbit": None,
}


def _check_keys(document: dict, where: str = "config") -> None:
    if not isinstance(document, dict):
        raise ConfigError(f"{where} must be a JSON object")
    for key, value in document.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key '{key}' in {where}", key=key)
        allowed = _SCHEMA[key]
        if allowed is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"'{key}' must be an object", key=key)
        unknown = sorted(set(value) - allowed)
        if unknown:
            raise ConfigError(f"unknown key '{key}.{unknown[0]}' in {where}", key=f"{key}.{unknown[0]}")


def _merge(base: dict, update: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict):
            current = merged.get(key)
            merged[key] = _merge(current if isinstance(current, dict) else {}, value)
        elif value is not None:
            merged[key] = value
    return merged


def _as_pair(value: Any, name: str) -> Optional[tuple]:
    if value is None:
        return None
    try:
        pair = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}' must be a list of numbers", key=name)
    if len(pair) != 2:
        raise ConfigError(f"'{name}' must have two entries", key=name)
    return pair


def build_run_config(document: dict) -> RunConfig:
    """Validate a merged config document and freeze it."""
    _check_keys(document)
    model_doc = document.get("model", {})
    grids = document.get("grids", {})
    tolerances = document.get("tolerances", {})
    initial = document.get("initial", {})
    output = document.get("output", {})

    try:
        model = ModelConfig(
            kind=str(model_doc.get("kind", "garnier")),
            sigma=float(model_doc.get("sigma", DEFAULT_SIGMA)),
            metric=str(model_doc.get("metric", "euclidean")),
            potential=str(model_doc.get("potential", "zero")),
            level=float(model_doc.get("level", 0.0)),
            i1=float(model_doc.get("i1", 1.0)),
        )
        config = RunConfig(
            model=model,
            tol=float(tolerances.get("tol", DEFAULT_TOL)),
            threshold=float(tolerances.get("threshold", 1e-5)),
            samples=int(grids.get("samples", 2001)),
            span=_as_pair(grids.get("span", (0.0, 5.0)), "grids.span"),
            s_span=_as_pair(grids.get("s_span"), "grids.s_span"),
            variations=int(grids.get("variations", 10)),
            depth=int(grids.get("depth", 3)),
            truncation=int(grids.get("truncation", 7)),
            point=tuple(float(v) for v in initial["point"]) if initial.get("point") is not None else None,
            velocity=tuple(float(v) for v in initial["velocity"]) if initial.get("velocity") is not None else None,
            seed=int(document.get("seed", DEFAULT_SEED)),
            output_format=str(output.get("format", DEFAULT_FORMAT)),
            output_path=output.get("path"),
            closed_form=document.get("closed_form"),
            orbit=float(document["orbit"]) if document.get("orbit") is not None else None,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config value: {e}")

    if model.kind not in ("garnier", "custom"):
        raise ConfigError(f"unknown model kind '{model.kind}'", key="model.kind")
    if model.kind == "garnier" and not 0.0 < model.sigma < 1.0:
        raise ConfigError(
            f"sigma={model.sigma!r} is out of the supported regime 0 < sigma < 1",
            key="model.sigma",
        )
    if model.kind == "custom":
        if model.metric not in ("euclidean", "sphere"):
            raise ConfigError(f"unknown metric '{model.metric}'", key="model.metric")
        if model.potential not in ("zero", "constant"):
            raise ConfigError(f"unknown potential '{model.potential}'", key="model.potential")
    if config.tol <= 0.0:
        raise ConfigError("tol must be positive", key="tolerances.tol")
    if config.threshold < 0.0:
        raise ConfigError("threshold must be non-negative", key="tolerances.threshold")
    if config.samples < 2:
        raise ConfigError("samples must be at least 2", key="grids.samples")
    if config.variations < 0 or config.depth < 0 or config.truncation < 0:
        raise ConfigError("variations, depth and truncation must be non-negative")
    if config.output_format not in ("csv", "json"):
        raise ConfigError(f"unknown output format '{config.output_format}'", key="output.format")
    if config.closed_form not in (None, "edge_q2zero", "edge_ellipse"):
        raise ConfigError(f"unknown closed-form branch '{config.closed_form}'", key="closed_form")
    return config


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """
    Build a RunConfig from env defaults, an optional JSON file and CLI overrides.

    Args:
        path: JSON config file, or None.
        overrides: Nested dict in the file schema; None values are ignored.

    Returns:
        RunConfig: Validated, immutable configuration.
    """
    document: dict = {}
    if path:
        try:
            with open(path, "r") as f:
                document = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config '{path}': {e}", path=path)
        _check_keys(document, where=path)
    if overrides:
        document = _merge(document, overrides)
    return build_run_config(document)

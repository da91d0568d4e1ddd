"""
YAML problem configuration: load, validate field by field, and resolve matrix
paths relative to the config file. Every rejection names the offending field.
"""
import logging
import math
import os
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml

from block_method import BLOCK_PATHS, DEFAULT_MAX_ORDER, PATH_DENSE
from errors import BlockPertError, ConfigError
from models import (
    MIN_PERTURBATIVE_DIMENSION,
    Method,
    ProblemConfig,
    ProblemKind,
    QuadratureScheme,
    Tolerances,
)
from operators import hermitize_check, load_matrix, load_vector
from oscillator import DEFAULT_DIMENSION, EDGE_BUFFER

logger = logging.getLogger(__name__)

# ---------------- Environment ----------------
WORKERS_ENV = "BLOCKPERT_WORKERS"

# Method pairs in output order; the key "a-b" is also the `required` map key.
METHOD_PAIRS: tuple[tuple[Method, Method], ...] = (
    (Method.BLOCK, Method.EXACT),
    (Method.DYSON, Method.EXACT),
    (Method.BLOCK, Method.DYSON),
    (Method.RSPT, Method.BLOCK),
    (Method.RSPT, Method.EXACT),
)

TOP_LEVEL_FIELDS = {
    "problem", "oscillator", "custom", "lambda_values", "order", "times", "initial_state",
    "tolerances", "methods", "block_path", "max_order", "workers", "required",
}
TOLERANCE_FIELDS = {"degeneracy_tol", "panels", "nodes", "exp_tol"}


def pair_key(a: Method, b: Method) -> str:
    return f"{a.value}-{b.value}"


def active_pairs(methods: tuple[Method, ...]) -> list[tuple[Method, Method]]:
    return [(a, b) for a, b in METHOD_PAIRS if a in methods and b in methods]


# ---------------- Field helpers ----------------

def _mapping(value: Any, field: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(field, "must be a mapping")
    return value


def _number(value: Any, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(field, "must be finite")
    return float(value)


def _integer(value: Any, field: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(field, f"must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(field, f"must be >= {minimum}, got {value}")
    return value


def _number_list(value: Any, field: str) -> tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(field, "must be a non-empty list of numbers")
    return tuple(_number(x, f"{field}[{i}]") for i, x in enumerate(value))


def _existing_path(base: Path, value: Any, field: str) -> str:
    if not isinstance(value, str) or not value:
        raise ConfigError(field, "must be a file path")
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    if not path.is_file():
        raise FileNotFoundError(f"{field}: no such file {path}")
    return str(path)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"must be an integer, got {raw!r}")


# ---------------- Sections ----------------

def _parse_methods(value: Any) -> tuple[Method, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError("methods", "must be a non-empty list")
    methods = []
    for i, name in enumerate(value):
        try:
            method = Method(name)
        except ValueError:
            raise ConfigError(f"methods[{i}]", f"unknown method {name!r}; expected one of {[m.value for m in Method]}")
        if method not in methods:
            methods.append(method)
    return tuple(methods)


def _parse_tolerances(value: Any) -> Tolerances:
    section = _mapping(value, "tolerances")
    for key in section:
        if key not in TOLERANCE_FIELDS:
            raise ConfigError(f"tolerances.{key}", "unknown field")
    defaults = Tolerances()
    degeneracy_tol = section.get("degeneracy_tol")
    if degeneracy_tol is not None:
        degeneracy_tol = _number(degeneracy_tol, "tolerances.degeneracy_tol")
        if degeneracy_tol <= 0:
            raise ConfigError("tolerances.degeneracy_tol", "must be positive")
    panels = _integer(section.get("panels", defaults.panels), "tolerances.panels", 1)
    nodes = _integer(section.get("nodes", defaults.nodes), "tolerances.nodes", 1)
    try:
        QuadratureScheme(panels=panels, nodes_per_panel=nodes)
    except BlockPertError as e:
        raise ConfigError("tolerances.panels", str(e))
    exp_tol = _number(section.get("exp_tol", defaults.exp_tol), "tolerances.exp_tol")
    if exp_tol <= 0:
        raise ConfigError("tolerances.exp_tol", "must be positive")
    return Tolerances(degeneracy_tol=degeneracy_tol, panels=panels, nodes=nodes, exp_tol=exp_tol)


def _parse_required(value: Any) -> dict[str, float]:
    section = _mapping(value, "required")
    known = {pair_key(a, b) for a, b in METHOD_PAIRS}
    required = {}
    for key, threshold in section.items():
        if key not in known:
            raise ConfigError(f"required.{key}", f"unknown method pair; expected one of {sorted(known)}")
        threshold = _number(threshold, f"required.{key}")
        if threshold < 0:
            raise ConfigError(f"required.{key}", "must be non-negative")
        required[key] = threshold
    return required


def _validate_custom_matrices(h0_path: str, v_path: str, exp_tol: float) -> int:
    h0 = load_matrix(h0_path)
    v = load_matrix(v_path)
    for field, m in (("custom.h0", h0), ("custom.v", v)):
        if m.shape[0] != m.shape[1]:
            raise ConfigError(field, f"matrix must be square, got {m.shape[0]}x{m.shape[1]}")
        scale = max(1.0, float(np.max(np.abs(m))))
        if not hermitize_check(m, exp_tol * scale):
            raise ConfigError(field, "matrix is not Hermitian within tolerance")
    if h0.shape != v.shape:
        raise ConfigError("custom.v", f"dimension {v.shape[0]} differs from custom.h0 dimension {h0.shape[0]}")
    return h0.shape[0]


# ---------------- Entry points ----------------

def parse_config(doc: Any, base_dir: Union[str, Path] = ".", source: Optional[str] = None) -> ProblemConfig:
    """Validate a parsed YAML document into a ProblemConfig."""
    base = Path(base_dir)
    doc = _mapping(doc, "<root>")
    for key in doc:
        if key not in TOP_LEVEL_FIELDS:
            raise ConfigError(str(key), "unknown field")

    if "problem" not in doc:
        raise ConfigError("problem", "missing field")
    try:
        problem = ProblemKind(doc["problem"])
    except ValueError:
        raise ConfigError("problem", f"expected one of {[p.value for p in ProblemKind]}, got {doc['problem']!r}")

    for key in ("lambda_values", "order", "times", "methods"):
        if key not in doc:
            raise ConfigError(key, "missing field")
    lambda_values = _number_list(doc["lambda_values"], "lambda_values")
    for i, lam in enumerate(lambda_values):
        if not abs(lam) < 1:
            raise ConfigError(f"lambda_values[{i}]", f"|lambda| must be < 1, got {lam}")
    times = _number_list(doc["times"], "times")
    for i, t in enumerate(times):
        if t < 0:
            raise ConfigError(f"times[{i}]", f"must be non-negative, got {t}")
    max_order = _integer(doc.get("max_order", DEFAULT_MAX_ORDER), "max_order", 1)
    order = _integer(doc["order"], "order", 1)
    if order > max_order:
        raise ConfigError("order", f"{order} exceeds max_order {max_order}")
    methods = _parse_methods(doc["methods"])
    tolerances = _parse_tolerances(doc.get("tolerances"))

    block_path = doc.get("block_path", PATH_DENSE)
    if block_path not in BLOCK_PATHS:
        raise ConfigError("block_path", f"expected one of {list(BLOCK_PATHS)}, got {block_path!r}")
    workers = _integer(doc["workers"], "workers", 1) if "workers" in doc else default_workers()
    required = _parse_required(doc.get("required"))

    omega, dimension = 1.0, DEFAULT_DIMENSION
    h0_path = v_path = None
    if problem is ProblemKind.OSCILLATOR:
        section = _mapping(doc.get("oscillator"), "oscillator")
        omega = _number(section.get("omega", 1.0), "oscillator.omega")
        if omega <= 0:
            raise ConfigError("oscillator.omega", "must be positive")
        dimension = _integer(section.get("dimension", DEFAULT_DIMENSION), "oscillator.dimension", MIN_PERTURBATIVE_DIMENSION)
    else:
        section = _mapping(doc.get("custom"), "custom")
        for key in ("h0", "v"):
            if key not in section:
                raise ConfigError(f"custom.{key}", "missing field")
        h0_path = _existing_path(base, section["h0"], "custom.h0")
        v_path = _existing_path(base, section["v"], "custom.v")
        dimension = _validate_custom_matrices(h0_path, v_path, tolerances.exp_tol)

    initial = _mapping(doc.get("initial_state", {"level": 0}), "initial_state")
    if ("level" in initial) == ("vector" in initial):
        raise ConfigError("initial_state", "exactly one of level or vector is required")
    initial_level, initial_vector_path = None, None
    if "level" in initial:
        initial_level = _integer(initial["level"], "initial_state.level", 0)
        top = dimension - 1 - EDGE_BUFFER if problem is ProblemKind.OSCILLATOR else dimension - 1
        if initial_level > top:
            raise ConfigError("initial_state.level", f"must be <= {top} for dimension {dimension}")
    else:
        initial_vector_path = _existing_path(base, initial["vector"], "initial_state.vector")
        vector = load_vector(initial_vector_path)
        if vector.shape[0] != dimension:
            raise ConfigError("initial_state.vector", f"dimension {vector.shape[0]} differs from problem dimension {dimension}")
        if abs(float(np.linalg.norm(vector)) - 1.0) > tolerances.exp_tol:
            raise ConfigError("initial_state.vector", "state vector must have unit norm")
        if Method.RSPT in methods:
            raise ConfigError("methods", "rspt needs initial_state.level")

    return ProblemConfig(
        problem=problem,
        lambda_values=lambda_values,
        order=order,
        times=times,
        methods=methods,
        tolerances=tolerances,
        omega=omega,
        dimension=dimension,
        h0_path=h0_path,
        v_path=v_path,
        initial_level=initial_level,
        initial_vector_path=initial_vector_path,
        block_path=block_path,
        max_order=max_order,
        workers=workers,
        required=required,
        source=source,
    )


def load_config(path: Union[str, Path]) -> ProblemConfig:
    """Read and validate a YAML config; matrix paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(path.name, f"invalid YAML: {e}") from e
    config = parse_config(doc, base_dir=path.parent, source=str(path))
    logger.info("loaded config %s: problem=%s order=%d", path, config.problem.value, config.order)
    return config


def config_to_document(config: ProblemConfig) -> dict[str, Any]:
    """Resolved config as plain data (the provenance sidecar)."""
    doc: dict[str, Any] = {
        "problem": config.problem.value,
        "lambda_values": list(config.lambda_values),
        "order": config.order,
        "times": list(config.times),
        "methods": [m.value for m in config.methods],
        "tolerances": {
            "degeneracy_tol": config.tolerances.degeneracy_tol,
            "panels": config.tolerances.panels,
            "nodes": config.tolerances.nodes,
            "exp_tol": config.tolerances.exp_tol,
        },
        "block_path": config.block_path,
        "max_order": config.max_order,
        "workers": config.workers,
        "required": dict(config.required),
    }
    if config.problem is ProblemKind.OSCILLATOR:
        doc["oscillator"] = {"omega": config.omega, "dimension": config.dimension}
    else:
        doc["custom"] = {"h0": config.h0_path, "v": config.v_path, "dimension": config.dimension}
    if config.initial_level is not None:
        doc["initial_state"] = {"level": config.initial_level}
    else:
        doc["initial_state"] = {"vector": config.initial_vector_path}
    return doc

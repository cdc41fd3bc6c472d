"""
Configuration file for shared settings and run-config loading
"""
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from GameSolver.utils.errors import ConfigurationError

# Load environment variables
load_dotenv()

TOOL_VERSION = "1.0.0"

# Solver defaults
DEFAULT_TOLERANCE = float(os.getenv('GAMESOLVER_DEFAULT_TOLERANCE', '1e-8'))
DEFAULT_MAX_ITERATIONS = int(os.getenv('GAMESOLVER_DEFAULT_MAX_ITERATIONS', '10000'))

# Output configuration
DEFAULT_OUTPUT_DIR = os.getenv('GAMESOLVER_OUTPUT_DIR', 'output')

# Shipped benchmark configs
BENCHMARK_DIR = Path(__file__).resolve().parent / 'benchmarks'

COMMANDS = ('solve', 'extract', 'verify', 'refine', 'portfolio')


def get_benchmark_path(name: str) -> Path:
    """Return the path of a shipped benchmark config by name (without extension)"""
    path = BENCHMARK_DIR / f"{name}.json"
    if not path.is_file():
        raise ConfigurationError(f"Unknown benchmark config: {name}")
    return path


def list_benchmarks():
    """Names of all shipped benchmark configs"""
    return sorted(p.stem for p in BENCHMARK_DIR.glob('*.json'))


def config_checksum(path) -> str:
    """SHA-256 of the raw config file bytes"""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_config_document(path) -> Dict[str, Any]:
    """Read a JSON run config into a plain dictionary"""
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            document = json.load(handle)
    except FileNotFoundError:
        raise ConfigurationError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(document, dict):
        raise ConfigurationError(f"Config file {path} must hold a JSON object")
    return document


def apply_overrides(document: Dict[str, Any], overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """
    Apply dotted-key overrides (e.g. {"solver.h": 0.1}) to a raw config document.
    None values are skipped so unset command-line flags leave the file untouched.
    """
    merged = json.loads(json.dumps(document))
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = merged
        *parents, leaf = dotted.split('.')
        for key in parents:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"Cannot override {dotted}: {key} is not a section", keys=[dotted])
        node[leaf] = value
    return merged


def load_run_config(path, overrides: Optional[Dict[str, Any]] = None):
    """
    Load and validate a run config, applying command-line overrides first.

    Raises:
        ConfigurationError: listing every offending key, unknown keys included
    """
    from pydantic import ValidationError
    from GameSolver.models.run import RunConfig

    document = apply_overrides(load_config_document(path), overrides)
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        keys = ['.'.join(str(part) for part in err['loc']) for err in e.errors()]
        details = '; '.join(f"{key}: {err['msg']}" for key, err in zip(keys, e.errors()))
        raise ConfigurationError(f"Invalid config {path}: {details}", keys=keys)

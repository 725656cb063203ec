import json
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

from utils.errors import InvalidInputError


def read_config_file(path) -> dict:
    """Load a JSON or TOML description, chosen by file suffix."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InvalidInputError(f"Cannot read config file {path}: {exc}") from exc
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            return tomllib.loads(raw.decode("utf-8"))
        if suffix == ".json":
            return json.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"Malformed config file {path}: {exc}") from exc
    raise InvalidInputError(f"Unsupported config file type '{suffix}'. Use .toml or .json.")

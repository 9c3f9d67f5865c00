"""Layered settings: built-in defaults < ALR_* env vars < --config file < command-line flags."""
from __future__ import annotations

import configparser
import os
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

ENV_PREFIX = "ALR_"


def load_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Read ``key = value`` lines (``#`` comments, optional ``[section]`` headers ignored)."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string("[__root__]\n" + text)
    out: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            out[key.strip().lower().replace("-", "_")] = value.strip()
    return out


def resolve(key: str, flag_value: Any, file_values: Mapping[str, str], default: Any,
            convert: Callable[[str], Any] = str, env: Optional[Mapping[str, str]] = None) -> Any:
    if flag_value is not None:
        return flag_value
    if key in file_values:
        return convert(file_values[key])
    env = os.environ if env is None else env
    env_key = ENV_PREFIX + key.upper()
    if env_key in env:
        return convert(env[env_key])
    return default


def int_list(text: str) -> list[int]:
    text = text.strip().strip("[]")
    return [int(x) for x in text.split(",") if x.strip()]

"""
Writers for result tables, JSON reports and the run manifest.
"""

import hashlib
import json
import math
import os
from importlib import metadata

import numpy as np

FLOAT_FORMAT = "%.17g"
PACKAGES = ("numpy", "scipy", "pandas", "networkx", "PyYAML")


def number_tag(value):
    """File-name friendly rendering of a number, e.g. 0.05 -> 0p05, -2 -> m2."""
    text = f"{value:g}"
    return text.replace("-", "m").replace(".", "p")


def _to_builtin(value):
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _finite(value):
    """Replace non-finite floats by strings so reports stay valid JSON."""
    if isinstance(value, dict):
        return {str(k): _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return str(float(value))
    return value


def write_frame(frame, out_dir, name):
    """
    Write a DataFrame as CSV with full float precision.

    Returns:
        str: path of the written file
    """
    path = os.path.join(out_dir, name)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_json(data, out_dir, name):
    """Write a JSON document with sorted keys and 2-space indentation."""
    path = os.path.join(out_dir, name)
    with open(path, "w") as file:
        json.dump(_finite(data), file, sort_keys=True, indent=2, default=_to_builtin)
        file.write("\n")
    return path


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        for chunk in iter(lambda: file.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions(packages=PACKAGES):
    versions = {}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def write_manifest(out_dir, config, checks, files, status, error=None):
    """
    Write manifest.json listing every emitted file with its content hash.

    Args:
        out_dir: Output folder
        config: Validated ExperimentConfig
        checks: CheckResult entries of the run
        files: Names of the emitted files, relative to out_dir
        status: PASSED or FAILED
        error: Message of the error that stopped the run, if any

    Returns:
        str: path of the manifest
    """
    manifest = {
        "scenario": config.scenario,
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "seeds": list(config.seeds),
        "versions": package_versions(),
        "files": [
            {"name": name, "sha256": file_sha256(os.path.join(out_dir, name))}
            for name in sorted(set(files))
        ],
        "checks": [check._asdict() for check in checks],
        "status": status,
    }
    if error is not None:
        manifest["error"] = error
    return write_json(manifest, out_dir, "manifest.json")

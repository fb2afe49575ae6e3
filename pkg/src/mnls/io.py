"""File formats: CSV results, JSON envelope, spectral checkpoints, config files."""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .basis import ManifoldSpec
from .errors import CheckpointError, ValidationError
from .fields import SpectralField

CSV_COLUMNS = ("experiment", "manifold", "N1", "N2", "N", "p", "q", "k", "s", "seed", "value", "stderr")
EVOLVE_COLUMNS = ("t", "mass", "energy", "modified_energy", "hs_norm", "h1_norm_Iu")
CHECKPOINT_MAGIC = "MNLS-SPEC v1"
ENVELOPE_SCHEMA = "mnls-result v1"


def fmt(v) -> str:
    """Cell text: empty for None, 17 significant digits for floats."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def csv_text(rows, columns=CSV_COLUMNS) -> str:
    """RFC 4180 text with a header row and LF line endings."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        extra = set(row) - set(columns)
        if extra:
            raise ValidationError(f"row has columns outside the schema: {sorted(extra)}")
        w.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(rows, path, columns=CSV_COLUMNS) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(csv_text(rows, columns))
    return path


def read_csv(path) -> list[dict]:
    """Rows as dicts of strings; empty cells become None."""
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: (v if v != "" else None) for k, v in r.items()} for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(u: SpectralField, path) -> Path:
    path = Path(path)
    lines = [CHECKPOINT_MAGIC, u.spec.header()]
    lines += [f"{i} {c.real:.17g} {c.imag:.17g}" for i, c in enumerate(u.coeffs)]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def load_checkpoint(path, expected: ManifoldSpec | None = None) -> SpectralField:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise CheckpointError(f"line 1: expected {CHECKPOINT_MAGIC!r}")
    if len(lines) < 2:
        raise CheckpointError("line 2: missing manifold header")
    try:
        spec = ManifoldSpec.from_header(lines[1])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"line 2: malformed manifold header ({exc})") from None
    if expected is not None and spec != expected:
        raise CheckpointError(f"line 2: manifold {spec.header()} does not match expected {expected.header()}")
    body = lines[2:]
    if len(body) != spec.n_modes:
        raise CheckpointError(f"line {len(lines) + 1}: expected {spec.n_modes} mode lines, found {len(body)}")
    c = np.empty(spec.n_modes, complex)
    for j, line in enumerate(body):
        lineno = j + 3
        parts = line.split()
        try:
            if len(parts) != 3:
                raise ValueError("expected 'mode_id re im'")
            i, re, im = int(parts[0]), float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise CheckpointError(f"line {lineno}: malformed mode line ({exc})") from None
        if i != j:
            raise CheckpointError(f"line {lineno}: mode_id {i} out of order (expected {j})")
        if not (math.isfinite(re) and math.isfinite(im)):
            raise CheckpointError(f"line {lineno}: non-finite coefficient")
        c[j] = complex(re, im)
    return SpectralField(spec, c)


# ---------------------------------------------------------------------------
# JSON envelope


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, Path):
        return str(v)
    return v


def envelope(command: str, config: dict, results: dict, wall_clock: float) -> dict:
    return {
        "schema": ENVELOPE_SCHEMA,
        "tool": "mnls",
        "version": __version__,
        "command": command,
        "config": _jsonable(config),
        "results": _jsonable(results),
        "wall_clock_s": float(wall_clock),
    }


def write_envelope(env: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(env, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# config files


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key=value")
        k, v = (x.strip() for x in line.split("=", 1))
        if not k:
            raise ValidationError(f"config line {lineno}: empty key")
        out[k] = v
    return out


def read_config(path) -> dict:
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None

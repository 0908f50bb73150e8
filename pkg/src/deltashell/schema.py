"""Serialized forms shared by the library and the command line.

Every data file written through this module gets a sibling manifest
``<name>.manifest.json`` holding the run parameters, tolerances and package
version.  CSV files name their manifest in a leading comment line and JSON
files carry it under the ``"manifest"`` key, so no output is orphaned.
Floats are written with ``repr`` so that identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

SPECTRUM_COLUMNS = ("delta_z", "track_id", "E", "E0", "l_character", "dominant_overlap")
RESONANCE_KEYS = ("kind", "delta_z", "gap", "track_a", "track_b")
BASIS_KEYS = ("E0", "l_max", "r_s", "states")
STATE_KEYS = ("l", "nu", "E", "A", "B", "norm")


def manifest_path(path):
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def _plain(x):
    """Convert numpy scalars and arrays into JSON-ready Python objects."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    return x


def dumps(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_manifest(path, command, parameters, tolerances, extra=None):
    """Write the manifest that accompanies data file ``path``; returns its path."""
    man = {"command": command, "data_file": Path(path).name, "parameters": parameters,
           "tolerances": tolerances, "package": "deltashell", "version": __version__}
    if extra:
        man.update(extra)
    mp = manifest_path(path)
    mp.write_text(dumps(man))
    return mp


def write_csv(path, columns, rows, comments=()):
    """CSV with ``# manifest: ...`` and optional comment lines above the header."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(f"# manifest: {manifest_path(path).name}\n")
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row[c] for c in columns]
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path):
    """Header and float rows of a file written by :func:`write_csv`."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def write_json(path, payload):
    """JSON object ``{"manifest": ..., "data": payload}``."""
    path = Path(path)
    path.write_text(dumps({"manifest": manifest_path(path).name, "data": payload}))
    return path


def spectrum_rows(curve):
    return list(curve.rows())


def resonance_records(resonances):
    return [r.to_dict() for r in resonances]


def validate_resonances(records):
    """Raise ValueError unless ``records`` follows the resonance report layout."""
    if not isinstance(records, list):
        raise ValueError("resonance report must be a list")
    for rec in records:
        if set(rec) != set(RESONANCE_KEYS):
            raise ValueError(f"bad resonance keys {sorted(rec)}")
        if rec["kind"] not in ("avoided", "crossing"):
            raise ValueError(f"bad resonance kind {rec['kind']!r}")


def validate_basis(doc):
    """Raise ValueError unless ``doc`` follows the basis export layout."""
    if set(doc) != set(BASIS_KEYS):
        raise ValueError(f"bad basis keys {sorted(doc)}")
    for st in doc["states"]:
        if set(st) != set(STATE_KEYS):
            raise ValueError(f"bad state keys {sorted(st)}")

"""Shared writers for the CSV and JSON artifacts.

Every JSON document carries ``schema_version`` and every CSV a header row.
Floats are written with ``repr`` so values survive a round trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if math.isnan(x) else x
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps_json(doc: dict) -> str:
    body = {"schema_version": SCHEMA_VERSION}
    body.update(_plain(doc))
    return json.dumps(body, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path, doc: dict):
    Path(path).write_text(dumps_json(doc))


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(doc) -> str:
    blob = json.dumps(_plain(doc), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]

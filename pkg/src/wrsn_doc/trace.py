"""Line-delimited JSON trace of a simulation run.

Format version 1. The first line is a header record::

    {"type": "header", "version": 1, "config": {...}, "attack": {...} | null,
     "controller": {...} | null, "ground_truth": [node ids], ...}

Every following line is one record with a ``type`` and a clock ``t``:

``step``          per-step summary: ``alive``, ``queue`` length and ``mcvs`` as
                  ``[x, y, residual, odometer]`` per charger
``request``       ``node``, reported ``residual``, ``forged``
``dispatch``      ``mcv`` assigned to ``node``
``arrive``        ``mcv`` reached ``node``
``charge``        one step of transfer: ``mcv``, ``node``, ``sent``, ``received``
``served``        session ended with ``node`` full
``refill``        ``mcv`` refilled at the depot, ``drawn`` joules
``death``         ``node`` ran out of energy
``revoke``        ``mcv`` aborted its session at excluded ``node``
``score``         ``node``, ``m_C``, ``m_E``, ``m_R``, ``m_eta``, ``m``, ``flag``
``queue_update``  controller ``order``, its sort ``keys`` ([reported residual,
                  issue time] per entry) and ``excluded`` node ids
``warning``       free-text ``message``
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

FORMAT_VERSION = 1


class TraceLog:
    def __init__(self, header: dict | None = None, records: list | None = None):
        self.header = {"type": "header", "version": FORMAT_VERSION, **(header or {})}
        self.records: list[dict] = records if records is not None else []
        self.final_state = None

    def append(self, record: dict):
        self.records.append(record)

    def extend(self, records):
        self.records.extend(records)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def of_type(self, kind: str):
        return [r for r in self.records if r["type"] == kind]

    @property
    def ground_truth(self) -> frozenset:
        return frozenset(self.header.get("ground_truth", ()))

    @property
    def config(self) -> dict:
        return self.header.get("config", {})

    def lines(self):
        yield _dump(self.header)
        for rec in self.records:
            yield _dump(rec)

    def sha256(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def write(self, path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            for line in self.lines():
                fh.write(line)
                fh.write("\n")
        return path

    @classmethod
    def read(cls, path) -> "TraceLog":
        with Path(path).open() as fh:
            header = json.loads(fh.readline())
            if header.get("type") != "header":
                raise ValueError(f"{path}: first record is not a trace header")
            if header.get("version") != FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported trace version {header.get('version')!r}")
            records = [json.loads(line) for line in fh if line.strip()]
        header.pop("type", None)
        header.pop("version", None)
        return cls(header, records)


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), default=_default)


def _default(obj):
    import numpy as np

    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")

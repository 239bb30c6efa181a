"""Run logs: struct-of-arrays per-step records plus an event list, newline-delimited
JSON on disk, bit-exact round-trippable."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SCHEMA_VERSION = 1


def canonical_json(obj) -> str:
    """Canonical serialization used for hashing: compact JSON with sorted keys."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def config_hash(config_dict: dict) -> str:
    return f"{fnv1a64(canonical_json(config_dict).encode('utf-8')):016x}"


@dataclass
class RunLog:
    """Time-indexed record of one run: header metadata, per-step columns, events."""

    header: dict
    columns: dict
    events: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.header["dt"])

    @property
    def n_steps(self) -> int:
        return int(self.header["n_steps"])

    @property
    def duration(self) -> float:
        return (self.n_steps - 1) * self.dt

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e["type"] == kind]

    def first_event(self, kind: str):
        evs = self.events_of(kind)
        return evs[0] if evs else None

    def validate(self) -> None:
        t = self.columns["t"]
        if t.size != self.n_steps:
            raise ConfigError("column length does not match header n_steps")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("time column must be strictly increasing")

    def write(self, path: str) -> None:
        """Atomic write: temp file in the target directory, then rename."""
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        names = list(self.columns.keys())
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                header = dict(self.header)
                header["record"] = "header"
                header["schema_version"] = SCHEMA_VERSION
                header["columns"] = names
                fh.write(json.dumps(header, sort_keys=True) + "\n")
                cols = [self.columns[n] for n in names]
                for i in range(self.n_steps):
                    row = [float(col[i]) for col in cols]
                    fh.write(json.dumps({"record": "step", "v": row}) + "\n")
                for ev in self.events:
                    out = {"record": "event"}
                    out.update(ev)
                    fh.write(json.dumps(out, sort_keys=True) + "\n")
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    @classmethod
    def read(cls, path: str) -> "RunLog":
        header = None
        rows = []
        events = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                kind = rec.pop("record", None)
                if kind == "header":
                    header = rec
                elif kind == "step":
                    rows.append(rec["v"])
                elif kind == "event":
                    events.append(rec)
                else:
                    raise ConfigError(f"unknown record kind {kind!r} in {path}")
        if header is None:
            raise ConfigError(f"no header record in {path}")
        names = header["columns"]
        data = np.asarray(rows, dtype=float)
        if data.size == 0:
            data = data.reshape(0, len(names))
        if data.shape[1] != len(names):
            raise ConfigError("step record width does not match the declared columns")
        columns = {n: np.ascontiguousarray(data[:, j]) for j, n in enumerate(names)}
        log = cls(header=header, columns=columns, events=events)
        if header.get("n_steps") != data.shape[0]:
            raise ConfigError("step count does not match header")
        return log

    def equals_bitwise(self, other: "RunLog") -> tuple[bool, int]:
        """(equal, first_divergent_step). Compares all columns exactly."""
        if set(self.columns) != set(other.columns):
            return False, 0
        n = min(self.n_steps, other.n_steps)
        for name in self.columns:
            a, b = self.columns[name][:n], other.columns[name][:n]
            neq = a != b
            both_nan = np.isnan(a) & np.isnan(b)
            neq = neq & ~both_nan
            if np.any(neq):
                return False, int(np.argmax(neq))
        if self.n_steps != other.n_steps:
            return False, n
        return True, -1

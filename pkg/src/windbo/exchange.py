"""File-based exchange with an external farm-power solver.

For each evaluation the client writes ``req_<id>.txt``::

    turbines <N>
    <i> <x_m> <y_m>            (N rows)
    states <S>
    <j> <direction_deg> <speed_ms> <frequency>   (S rows)

and waits for ``resp_<id>.txt`` holding one ``<j> <total_power_W>`` row per
state. Both sides write to a temporary name and rename, so a file that exists
is complete. AEP is computed on the client from the returned powers.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .wake import HOURS_PER_YEAR, TurbineSpec, WakeParams, WindRose, farm_power

__all__ = [
    "ExchangeError",
    "EvaluationTimeout",
    "ProtocolError",
    "ExternalEvaluator",
    "write_atomic",
    "read_request",
    "write_response",
    "respond_once",
    "serve",
]

_REQ = re.compile(r"^req_(\d+)\.txt$")
_FMT = ".17g"


class ExchangeError(RuntimeError):
    pass


class EvaluationTimeout(ExchangeError):
    pass


class ProtocolError(ExchangeError):
    pass


def write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def format_request(xy: np.ndarray, rose: WindRose) -> str:
    lines = [f"turbines {xy.shape[0]}"]
    lines += [f"{i} {format(x, _FMT)} {format(y, _FMT)}" for i, (x, y) in enumerate(xy)]
    lines.append(f"states {len(rose)}")
    lines += [f"{j} {format(d, _FMT)} {format(s, _FMT)} {format(f, _FMT)}"
              for j, (d, s, f) in enumerate(zip(rose.directions, rose.speeds, rose.frequencies))]
    return "\n".join(lines) + "\n"


def _expect_header(line: str, word: str, path) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != word:
        raise ProtocolError(f"{path}: expected '{word} <count>', got {line!r}")
    return int(parts[1])


def read_request(path) -> tuple:
    """Parse a request file into ``(xy (N, 2), directions, speeds, frequencies)``."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        n = _expect_header(lines[0], "turbines", path)
        xy = np.array([[float(v) for v in ln.split()[1:3]] for ln in lines[1:1 + n]])
        s = _expect_header(lines[1 + n], "states", path)
        st = np.array([[float(v) for v in ln.split()[1:4]] for ln in lines[2 + n:2 + n + s]])
    except (IndexError, ValueError) as exc:
        raise ProtocolError(f"{path}: malformed request: {exc}") from None
    if xy.shape != (n, 2) or st.shape != (s, 3):
        raise ProtocolError(f"{path}: row counts do not match headers")
    return xy, st[:, 0], st[:, 1], st[:, 2]


def write_response(path, totals) -> None:
    write_atomic(Path(path), "".join(f"{j} {format(float(p), _FMT)}\n" for j, p in enumerate(totals)))


def read_response(path, n_states: int) -> np.ndarray:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(rows) != n_states:
        raise ProtocolError(f"{path}: expected {n_states} state rows, got {len(rows)}")
    out = np.empty(n_states)
    for k, row in enumerate(rows):
        if len(row) != 2 or row[0] != str(k):
            raise ProtocolError(f"{path}: row {k + 1} must be '{k} <power_W>', got {' '.join(row)!r}")
        try:
            out[k] = float(row[1])
        except ValueError:
            raise ProtocolError(f"{path}: row {k + 1} power is not a number: {row[1]!r}") from None
        if not np.isfinite(out[k]) or out[k] < 0:
            raise ProtocolError(f"{path}: row {k + 1} power must be finite and nonnegative")
    return out


@dataclass
class ExternalEvaluator:
    """Client side: one request per layout, blocking until the response arrives."""

    directory: Path
    rose: WindRose
    poll_interval: float = 0.5
    timeout: float = 1800.0

    def __post_init__(self):
        self.directory = Path(self.directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        if not self.timeout > self.poll_interval:
            raise ValueError("timeout must exceed poll_interval")
        existing = [int(m.group(1)) for p in self.directory.iterdir() if (m := _REQ.match(p.name))]
        self._next = max(existing, default=0) + 1

    def state_powers(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        rid = self._next
        self._next += 1
        req = self.directory / f"req_{rid}.txt"
        resp = self.directory / f"resp_{rid}.txt"
        write_atomic(req, format_request(xy, self.rose))
        deadline = time.monotonic() + self.timeout
        while not resp.exists():
            if time.monotonic() >= deadline:
                raise EvaluationTimeout(f"no response {resp.name} within {self.timeout:g} s")
            time.sleep(self.poll_interval)
        return read_response(resp, len(self.rose))

    def aep(self, xy) -> float:
        totals = self.state_powers(xy)
        return float(HOURS_PER_YEAR * np.sum(totals * self.rose.frequencies, axis=-1))


def wake_solver(spec: TurbineSpec, params: WakeParams) -> Callable:
    """Per-state farm totals from the in-process wake model."""
    def solve(xy, directions, speeds):
        _, totals = farm_power(xy, directions, speeds, spec, params)
        return totals
    return solve


def respond_once(directory, solver: Callable) -> int:
    """Answer every pending request in ``directory``; returns how many were answered."""
    directory = Path(directory)
    done = 0
    for p in sorted(directory.iterdir(), key=lambda q: q.name):
        m = _REQ.match(p.name)
        if not m:
            continue
        resp = directory / f"resp_{m.group(1)}.txt"
        if resp.exists():
            continue
        xy, d, s, _ = read_request(p)
        write_response(resp, solver(xy, d, s))
        done += 1
    return done


def serve(directory, solver: Callable, poll_interval: float = 0.05,
          stop: Optional[Callable[[], bool]] = None) -> None:
    """Answer requests until ``stop()`` returns True (forever if not given)."""
    while stop is None or not stop():
        if respond_once(directory, solver) == 0:
            time.sleep(poll_interval)

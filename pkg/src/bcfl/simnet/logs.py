"""Run outputs: per-round metrics CSV, structured event log, and the
instrumented message log with its plaintext-leak audit."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

METRICS_HEADER = ("episode", "round", "hospitals", "grads_per_hospital", "global_accuracy",
                  "global_loss", "wall_time_ms", "confirmed_tx")


@dataclass(frozen=True)
class RoundMetrics:
    episode: int
    round: int
    hospitals: int
    grads_per_hospital: int
    global_accuracy: float
    global_loss: float
    wall_time_ms: float
    confirmed_tx: int

    def csv_row(self) -> str:
        return (f"{self.episode},{self.round},{self.hospitals},{self.grads_per_hospital},"
                f"{self.global_accuracy:.6f},{self.global_loss:.6f},{self.wall_time_ms:.3f},"
                f"{self.confirmed_tx}")

    @classmethod
    def from_csv_row(cls, row: str) -> "RoundMetrics":
        f = row.strip().split(",")
        if len(f) != len(METRICS_HEADER):
            raise ValueError(f"expected {len(METRICS_HEADER)} fields, got {len(f)}")
        return cls(int(f[0]), int(f[1]), int(f[2]), int(f[3]), float(f[4]), float(f[5]),
                   float(f[6]), int(f[7]))


class MetricsWriter:
    """Writes rows as they arrive (flushing each) to ``<path>.partial`` and
    renames to ``path`` on close, so a crashed run never looks complete."""

    def __init__(self, path: Union[str, Path], seed: Optional[int] = None):
        self.path = Path(path)
        self.partial = self.path.with_name(self.path.name + ".partial")
        self._fh = open(self.partial, "w", newline="")
        if seed is not None:
            self._fh.write(f"# seed={seed}\n")
        self._fh.write(",".join(METRICS_HEADER) + "\n")
        self._fh.flush()

    def write(self, m: RoundMetrics) -> None:
        self._fh.write(m.csv_row() + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()
        os.replace(self.partial, self.path)

    def abandon(self) -> None:
        """Close without renaming; the .partial file stays behind."""
        self._fh.close()


def emit_metrics(series: Iterable[RoundMetrics], sink: Union[str, Path, IO[str]],
                 seed: Optional[int] = None) -> None:
    """Write a metrics series as CSV to a path or an open text stream."""
    if isinstance(sink, (str, Path)):
        w = MetricsWriter(sink, seed)
        try:
            for m in series:
                w.write(m)
        except BaseException:
            w.abandon()
            raise
        w.close()
        return
    if seed is not None:
        sink.write(f"# seed={seed}\n")
    sink.write(",".join(METRICS_HEADER) + "\n")
    for m in series:
        sink.write(m.csv_row() + "\n")


def read_metrics(path: Union[str, Path]) -> list[RoundMetrics]:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not rows or tuple(rows[0].split(",")) != METRICS_HEADER:
        raise ValueError(f"{path}: missing metrics header")
    return [RoundMetrics.from_csv_row(r) for r in rows[1:]]


class EventLog:
    """JSON-lines events with fields ts, round, actor, event, detail."""

    def __init__(self, fh: Optional[IO[str]] = None):
        self.events: list[dict] = []
        self._fh = fh

    def log(self, ts: float, round_: int, actor: str, event: str, detail: Optional[dict] = None):
        rec = {"ts": round(float(ts), 3), "round": round_, "actor": actor, "event": event,
               "detail": detail or {}}
        self.events.append(rec)
        if self._fh is not None:
            self._fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self._fh.flush()


# --- message instrumentation and audit -----------------------------------------

@dataclass(frozen=True)
class Message:
    round: int
    sender: str
    receiver: str
    kind: str
    payload: Union[bytes, np.ndarray]


@dataclass
class MessageLog:
    messages: list[Message] = field(default_factory=list)

    def record(self, round_: int, sender: str, receiver: str, kind: str, payload) -> None:
        if isinstance(payload, str):
            payload = payload.encode()
        elif not isinstance(payload, bytes):
            payload = np.array(payload, dtype=np.float64).reshape(-1)
        self.messages.append(Message(round_, sender, receiver, kind, payload))

    def __len__(self):
        return len(self.messages)


@dataclass(frozen=True)
class Finding:
    message_index: int
    kind: str
    owner: str
    match: str  # "exact" or "scaled"


def _numeric_views(payload) -> list[np.ndarray]:
    """Every float64 reading of the payload an observer could try."""
    if isinstance(payload, np.ndarray):
        return [payload.astype(np.float64)]
    views = []
    for off in range(8):
        n = (len(payload) - off) // 8
        if n <= 0:
            continue
        chunk = payload[off: off + 8 * n]
        views.append(np.frombuffer(chunk, dtype="<i8").astype(np.float64))
        f = np.frombuffer(chunk, dtype="<f8")
        views.append(np.where(np.isfinite(f), f, 0.0))
    return views


def _encodings(v: np.ndarray) -> list[bytes]:
    out = [v.astype("<f8").tobytes()]
    if np.all(v == np.round(v)) and np.abs(v).max() < 2 ** 62:
        out.append(v.astype("<i8").tobytes())
    return out


def _collinear_hits(view: np.ndarray, targets: np.ndarray, tol: float) -> np.ndarray:
    """Which rows of ``targets`` (unit vectors, shape (k, n)) are collinear
    with some contiguous window of ``view``."""
    k, n = targets.shape
    if view.size < n:
        return np.zeros(k, dtype=bool)
    view = np.where(np.abs(view) > 1e300, 0.0, view)
    # normalize to keep the sums of squares finite
    scale = np.abs(view).max()
    if scale == 0:
        return np.zeros(k, dtype=bool)
    view = view / scale
    sq = np.concatenate([[0.0], np.cumsum(view * view)])
    norms = np.sqrt(np.maximum(sq[n:] - sq[:-n], 0.0))
    ok = norms > 1e-12 * np.sqrt(n)
    if not ok.any():
        return np.zeros(k, dtype=bool)
    win = np.lib.stride_tricks.sliding_window_view(view, n)[ok]
    cos = np.abs(win @ targets.T) / norms[ok][:, None]
    return cos.max(axis=0) >= 1.0 - tol


def audit_messages(log: MessageLog, secrets: dict[str, Sequence[np.ndarray]],
                   tol: float = 1e-9) -> list[Finding]:
    """Scan every payload for a hospital's private vectors.

    A payload leaks if it contains the byte encoding of a private vector
    (exact) or any contiguous window collinear with one (scaled copy, any
    nonzero factor). Messages a hospital sends to itself are ignored.
    """
    owners, vecs = [], []
    for owner, vs in secrets.items():
        for v in vs:
            v = np.asarray(v, dtype=np.float64).reshape(-1)
            if np.any(v):
                owners.append(owner)
                vecs.append(v)
    encodings = [_encodings(v) for v in vecs]
    groups: dict[int, list[int]] = {}
    for j, v in enumerate(vecs):
        groups.setdefault(v.size, []).append(j)
    units = {n: np.stack([vecs[j] / np.linalg.norm(vecs[j]) for j in idx]) for n, idx in groups.items()}

    findings = []
    for idx, msg in enumerate(log.messages):
        raw = msg.payload if isinstance(msg.payload, bytes) else msg.payload.astype("<f8").tobytes()
        skip = {o for o in set(owners) if msg.sender == o and msg.receiver == o}
        found: dict[str, str] = {}
        for j, encs in enumerate(encodings):
            if owners[j] not in skip and owners[j] not in found and any(e in raw for e in encs):
                found[owners[j]] = "exact"
        views = _numeric_views(msg.payload)
        for n, rows in groups.items():
            hits = np.zeros(len(rows), dtype=bool)
            for view in views:
                hits |= _collinear_hits(view, units[n], tol)
            for j, hit in zip(rows, hits):
                if hit and owners[j] not in skip:
                    found.setdefault(owners[j], "scaled")
        findings.extend(Finding(idx, msg.kind, o, m) for o, m in sorted(found.items()))
    return findings

"""Append-only JSONL trajectory logs, replay verification and cost reports.

Run directory layout (all paths relative)::

    run.jsonl            one record per step
    images/step_0000.pgm (+ .sidecar)
    pareto.csv           index, <coefficients>, contrast, fft, on_front
    hypervolume.csv      iteration, hv
    cost.csv             step, hw_s, gp_fit_s, acq_opt_s
    config.snapshot      resolved configuration
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import pareto, rewards
from .errors import InvalidArgument, SchemaError
from .image import read_image, write_image

SCHEMA_VERSION = "1.0"
LOG_NAME = "run.jsonl"
IMAGE_DIR = "images"
# Fields that depend on the wall clock and are excluded from determinism checks.
CLOCK_FIELDS = ("timing", "timestamp")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


@dataclass
class TrajectoryRecord:
    step: int
    phase: str
    active: list
    action: dict | None
    image_ref: str | None = None
    rewards: dict | None = None
    timing: dict | None = None
    seeds: dict | None = None
    gp_hyper: list | None = None
    reference_point: list | None = None
    hypervolume: float | None = None
    acquisition: dict | None = None
    error: str | None = None
    timestamp: str = field(default_factory=_now)

    def to_dict(self):
        return {
            "schema": SCHEMA_VERSION,
            "step": self.step,
            "phase": self.phase,
            "active": self.active,
            "action": self.action,
            "image_ref": self.image_ref,
            "rewards": self.rewards,
            "timing": self.timing,
            "seeds": self.seeds,
            "gp_hyper": self.gp_hyper,
            "reference_point": self.reference_point,
            "hypervolume": self.hypervolume,
            "acquisition": self.acquisition,
            "error": self.error,
            "timestamp": self.timestamp,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), allow_nan=False)

    @classmethod
    def from_dict(cls, data):
        version = str(data.get("schema", ""))
        major = version.split(".")[0]
        if major != SCHEMA_VERSION.split(".")[0]:
            raise SchemaError(f"unsupported record schema version {version!r}")
        fields_ = {k: v for k, v in data.items() if k != "schema"}
        try:
            return cls(**fields_)
        except TypeError as exc:
            raise SchemaError(f"malformed record: {exc}") from exc


class TrajectoryWriter:
    """Single writer for one run directory."""

    def __init__(self, run_dir):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.path = self.run_dir / LOG_NAME
        self.last_step = None
        self._fh = open(self.path, "a", encoding="utf-8")

    def write_image(self, step, image):
        ref = f"{IMAGE_DIR}/step_{step:04d}.pgm"
        write_image(self.run_dir / ref, image)
        return ref

    def append(self, record):
        if self.last_step is not None and record.step <= self.last_step:
            raise InvalidArgument(
                f"step {record.step} is not after the last logged step {self.last_step}"
            )
        self._fh.write(record.to_json() + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self.last_step = record.step

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path):
    """Parse a run log. A final line without a newline (torn write) is dropped."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] != "":
        lines = lines[:-1]
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line:
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        records.append(TrajectoryRecord.from_dict(data))
    return records


def _resolve_log(path):
    path = Path(path)
    return path / LOG_NAME if path.is_dir() else path


def comparable_lines(path):
    """Log lines with wall-clock fields removed, for determinism checks."""
    out = []
    for rec in read_log(_resolve_log(path)):
        data = rec.to_dict()
        for key in CLOCK_FIELDS:
            data.pop(key, None)
        out.append(json.dumps(data))
    return out


@dataclass
class ReplayReport:
    n_records: int = 0
    n_checked: int = 0
    max_reward_deviation: float = 0.0
    max_hv_deviation: float = 0.0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.mismatches

    def lines(self):
        out = [
            f"records: {self.n_records} (images checked: {self.n_checked})",
            f"max reward deviation (relative): {self.max_reward_deviation:.3e}",
            f"max hypervolume deviation: {self.max_hv_deviation:.3e}",
        ]
        out += [f"MISMATCH step {step}: {reason}" for step, reason in self.mismatches]
        out.append("replay OK" if self.ok else f"replay FAILED ({len(self.mismatches)} mismatches)")
        return out


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def replay_verify(log_path, tolerance=1e-9):
    """Recompute rewards from dumped images and hypervolumes from logged rewards."""
    log_path = _resolve_log(log_path)
    run_dir = log_path.parent
    records = read_log(log_path)
    report = ReplayReport(n_records=len(records))
    archive = pareto.ParetoArchive()
    seen = {}

    for rec in records:
        if rec.error is not None:
            if rec.image_ref is not None:
                report.mismatches.append((rec.step, "failed step carries an image reference"))
            continue
        if rec.image_ref is None:
            report.mismatches.append((rec.step, "missing image reference"))
        elif rec.image_ref in seen:
            report.mismatches.append(
                (rec.step, f"image {rec.image_ref} also referenced by step {seen[rec.image_ref]}")
            )
        else:
            seen[rec.image_ref] = rec.step
            try:
                image = read_image(run_dir / rec.image_ref)
            except (OSError, SchemaError, ValueError, KeyError) as exc:
                report.mismatches.append((rec.step, f"cannot load {rec.image_ref}: {exc}"))
            else:
                report.n_checked += 1
                got = rewards.evaluate(image)
                for name in ("contrast", "fft"):
                    dev = _rel(getattr(got, name), rec.rewards[name])
                    report.max_reward_deviation = max(report.max_reward_deviation, dev)
                    if dev > tolerance:
                        report.mismatches.append(
                            (rec.step, f"{name} reward deviates by {dev:.3e} (relative)")
                        )

        archive.add(
            [rec.action[n] for n in rec.active],
            [rec.rewards["contrast"], rec.rewards["fft"]],
        )
        hv_dev = abs(archive.hv - rec.hypervolume)
        report.max_hv_deviation = max(report.max_hv_deviation, hv_dev)
        if hv_dev != 0.0:
            report.mismatches.append((rec.step, f"hypervolume deviates by {hv_dev:.3e}"))
        if list(archive.ref) != list(rec.reference_point):
            report.mismatches.append((rec.step, "reference point differs from recomputation"))

    image_dir = run_dir / IMAGE_DIR
    if image_dir.is_dir():
        for pgm in sorted(image_dir.glob("*.pgm")):
            ref = f"{IMAGE_DIR}/{pgm.name}"
            if ref not in seen:
                report.mismatches.append((-1, f"dangling image {ref}"))
    return report


@dataclass
class CostReport:
    rows: list
    dimension: int
    mean_hw_s: float
    mean_compute_s: float
    compute_share: float
    compute_slope: float

    def summary_lines(self):
        return [
            f"dimension: {self.dimension}",
            f"mean hw_s: {self.mean_hw_s:.4f}",
            f"mean gp_fit_s + acq_opt_s (BO steps): {self.mean_compute_s:.4f}",
            f"mean compute share (BO steps): {self.compute_share:.4f}",
            f"compute trend slope (s/step): {self.compute_slope:.3e}",
        ]


def cost_report(log_path, out_path=None):
    """Per-step timing breakdown; writes ``cost.csv`` next to the log by default."""
    log_path = _resolve_log(log_path)
    records = [r for r in read_log(log_path) if r.timing is not None]
    rows = [
        (r.step, r.timing["hw_s"], r.timing["gp_fit_s"], r.timing["acq_opt_s"])
        for r in records
    ]
    out_path = Path(out_path) if out_path else log_path.parent / "cost.csv"
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "hw_s", "gp_fit_s", "acq_opt_s"])
        writer.writerows(rows)

    bo = [r for r in records if r.phase == "bo"]
    compute = np.array([r.timing["gp_fit_s"] + r.timing["acq_opt_s"] for r in bo])
    totals = np.array([r.timing["total_s"] for r in bo])
    slope = float("nan")
    if len(bo) >= 2:
        slope = float(np.polyfit([r.step for r in bo], compute, 1)[0])
    return CostReport(
        rows=rows,
        dimension=len(records[0].active) if records else 0,
        mean_hw_s=float(np.mean([r[1] for r in rows])) if rows else float("nan"),
        mean_compute_s=float(compute.mean()) if len(bo) else float("nan"),
        compute_share=float(np.mean(compute / totals)) if len(bo) else float("nan"),
        compute_slope=slope,
    )


def write_pareto_csv(path, names, X, Y, on_front):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", *names, "contrast", "fft", "on_front"])
        for i, (x, y, flag) in enumerate(zip(X, Y, on_front)):
            writer.writerow([i, *(repr(float(v)) for v in x), repr(float(y[0])),
                             repr(float(y[1])), int(flag)])


def read_pareto_csv(path):
    """Returns ``(names, X, Y, on_front)`` from a pareto.csv file."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    names = header[1:-3]
    data = np.array([[float(v) for v in row] for row in body]).reshape(len(body), len(header))
    return names, data[:, 1:-3], data[:, -3:-1], data[:, -1].astype(bool)


def write_hypervolume_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "hv"])
        for rec in records:
            if rec.hypervolume is not None:
                writer.writerow([rec.step, repr(float(rec.hypervolume))])

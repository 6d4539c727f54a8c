import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from stemtune import pareto
from stemtune.errors import InvalidArgument, SchemaError
from stemtune.image import read_pgm
from stemtune.mobo import MoboConfig, SearchSpace, run_mobo
from stemtune.trajectory import (
    LOG_NAME,
    TrajectoryRecord,
    TrajectoryWriter,
    comparable_lines,
    cost_report,
    read_log,
    read_pareto_csv,
    replay_verify,
    write_hypervolume_csv,
    write_pareto_csv,
)


def _record(step, **kw):
    base = dict(step=step, phase="init", active=["c10"], action={"c10": 0.5},
                rewards={"contrast": 0.5, "fft": 0.1},
                timing={"hw_s": 0.1, "gp_fit_s": 0.0, "acq_opt_s": 0.0, "total_s": 0.1})
    base.update(kw)
    return TrajectoryRecord(**base)


def test_append_round_trip(tmp_path):
    records = [_record(0), _record(1, phase="bo", seeds={"ehvi": 3})]
    with TrajectoryWriter(tmp_path) as writer:
        for r in records:
            writer.append(r)
    lines = (tmp_path / LOG_NAME).read_text().splitlines()
    assert len(lines) == 2
    assert read_log(tmp_path / LOG_NAME) == records
    keys = list(json.loads(lines[0]))
    assert keys[:3] == ["schema", "step", "phase"] and keys[-1] == "timestamp"


def test_out_of_order_step_rejected(tmp_path):
    with TrajectoryWriter(tmp_path) as writer:
        writer.append(_record(3))
        with pytest.raises(InvalidArgument):
            writer.append(_record(3))
        with pytest.raises(InvalidArgument):
            writer.append(_record(1))
    assert len(read_log(tmp_path / LOG_NAME)) == 1


def test_unknown_major_version_rejected(tmp_path):
    data = _record(0).to_dict()
    data["schema"] = "2.0"
    (tmp_path / LOG_NAME).write_text(json.dumps(data) + "\n")
    with pytest.raises(SchemaError):
        read_log(tmp_path / LOG_NAME)


def test_torn_final_line_ignored(tmp_path):
    path = tmp_path / LOG_NAME
    path.write_text(_record(0).to_json() + "\n" + _record(1).to_json()[:40])
    assert [r.step for r in read_log(path)] == [0]


def test_log_survives_killed_writer(tmp_path):
    script = textwrap.dedent(f"""
        import os, sys
        from stemtune.trajectory import TrajectoryRecord, TrajectoryWriter
        writer = TrajectoryWriter({str(tmp_path)!r})
        for step in range(5):
            writer.append(TrajectoryRecord(step=step, phase="init", active=["c10"],
                                           action={{"c10": float(step)}}))
        print("ready", flush=True)
        os.kill(os.getpid(), 9)
    """)
    proc = subprocess.run([sys.executable, "-c", script], capture_output=True, text=True)
    assert proc.returncode != 0 and "ready" in proc.stdout
    assert [r.step for r in read_log(tmp_path / LOG_NAME)] == list(range(5))


@pytest.fixture
def small_run(tmp_path, make_scope):
    space = SearchSpace.preset("c1-a1")
    cfg = MoboConfig(n_init=5, n_iterations=3, n_candidates=64, mc_samples=32)
    with TrajectoryWriter(tmp_path) as writer:
        archive, records = run_mobo(make_scope(), space, cfg, log_writer=writer)
    return tmp_path, archive, records


def test_replay_clean_run(small_run):
    run_dir, _, records = small_run
    before = sorted((p.name, p.stat().st_mtime_ns) for p in run_dir.rglob("*"))
    report = replay_verify(run_dir)
    assert report.ok, report.lines()
    assert report.n_checked == len(records)
    assert report.max_reward_deviation < 1e-9 and report.max_hv_deviation == 0.0
    assert sorted((p.name, p.stat().st_mtime_ns) for p in run_dir.rglob("*")) == before


def test_logged_hypervolume_recomputes_exactly(small_run):
    run_dir, _, _ = small_run
    archive = pareto.ParetoArchive()
    for rec in read_log(run_dir / LOG_NAME):
        archive.add([rec.action[n] for n in rec.active], [rec.rewards["contrast"], rec.rewards["fft"]])
        assert archive.hv == rec.hypervolume
        assert list(archive.ref) == rec.reference_point


def test_replay_flags_perturbed_pixel(small_run):
    run_dir, _, _ = small_run
    target = run_dir / "images" / "step_0002.pgm"
    codes = read_pgm(target)
    raw = bytearray(target.read_bytes())
    header_len = len(raw) - codes.size * 2
    value = int(codes[10, 10]) + 50
    pos = header_len + 2 * (10 * codes.shape[1] + 10)
    raw[pos:pos + 2] = value.to_bytes(2, "big")
    target.write_bytes(bytes(raw))
    report = replay_verify(run_dir)
    assert not report.ok
    assert {step for step, _ in report.mismatches} == {2}


def test_replay_flags_missing_and_dangling_images(small_run):
    run_dir, _, _ = small_run
    (run_dir / "images" / "step_0001.pgm").unlink()
    extra = run_dir / "images" / "step_0099.pgm"
    extra.write_bytes((run_dir / "images" / "step_0000.pgm").read_bytes())
    report = replay_verify(run_dir)
    reasons = " ".join(reason for _, reason in report.mismatches)
    assert "step_0001" in reasons and "dangling" in reasons


def test_each_image_referenced_once(small_run):
    run_dir, _, records = small_run
    refs = [r.image_ref for r in records]
    assert len(set(refs)) == len(refs)
    assert sorted(p.name for p in (run_dir / "images").glob("*.pgm")) == sorted(r.split("/")[1] for r in refs)


def test_cost_report(small_run):
    run_dir, _, records = small_run
    report = cost_report(run_dir)
    rows = (run_dir / "cost.csv").read_text().splitlines()
    assert rows[0] == "step,hw_s,gp_fit_s,acq_opt_s" and len(rows) == len(records) + 1
    for step, hw, fit, acq in report.rows[:5]:
        assert fit == 0.0 and acq == 0.0
    assert report.dimension == 3
    assert 0 < report.compute_share < 1
    assert np.isfinite(report.compute_slope)


def test_comparable_lines_drop_clock_fields(tmp_path):
    with TrajectoryWriter(tmp_path) as writer:
        writer.append(_record(0))
    (line,) = comparable_lines(tmp_path)
    assert "timing" not in json.loads(line) and "timestamp" not in json.loads(line)


def test_failed_step_logged_without_image(tmp_path, make_scope):
    class Broken:
        unslept_latency = 0.0

        def acquire(self, state):
            raise InvalidArgument("detector offline")

    space = SearchSpace.preset("c1-a1")
    with TrajectoryWriter(tmp_path) as writer:
        with pytest.raises(InvalidArgument):
            run_mobo(Broken(), space, MoboConfig(n_init=3), log_writer=writer)
    (rec,) = read_log(tmp_path / LOG_NAME)
    assert rec.error.startswith("InvalidArgument") and rec.image_ref is None
    assert replay_verify(tmp_path).ok


def test_csv_helpers(tmp_path):
    X = np.array([[0.0, 1.0], [2.0, -3.5]])
    Y = np.array([[0.25, 7.0], [0.5, 6.0]])
    write_pareto_csv(tmp_path / "p.csv", ["c10", "c12a"], X, Y, [True, False])
    names, X2, Y2, flags = read_pareto_csv(tmp_path / "p.csv")
    assert names == ["c10", "c12a"]
    assert np.array_equal(X2, X) and np.array_equal(Y2, Y) and flags.tolist() == [True, False]
    write_hypervolume_csv(tmp_path / "h.csv", [_record(0, hypervolume=1.5), _record(1)])
    assert (tmp_path / "h.csv").read_text().splitlines() == ["iteration,hv", "0,1.5"]

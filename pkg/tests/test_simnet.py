import io
import json
import os

import numpy as np
import pytest

from bcfl.errors import ConfigError, RoundError
from bcfl.local_model import init_weights, train_local
from bcfl.simnet import (
    METRICS_HEADER,
    ExperimentConfig,
    MessageLog,
    MetricsWriter,
    RoundMetrics,
    SweepSpec,
    audit_messages,
    build_data,
    emit_metrics,
    plaintext_control,
    read_metrics,
    run_experiment,
    run_sweep,
    stream,
)
from bcfl import presets
from conftest import GOLDEN

SCALE = 256


def small(seed=3, **sim):
    raw = {"sim": {"seed": seed, "hospitals": 3, "episodes": 1, "grads_per_hospital": 20, **sim},
           "crypto": {"degree": 256}}
    return ExperimentConfig.from_dict(raw)


# --- config ------------------------------------------------------------------

def test_missing_seed_names_key():
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict({"sim": {"hospitals": 3}})
    assert e.value.key == "sim.seed"
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict({})
    assert e.value.key == "sim.seed"


@pytest.mark.parametrize("raw,key", [
    ({"sim": {"seed": 1, "bogus": 2}}, "sim.bogus"),
    ({"sim": {"seed": 1}, "nope": {}}, "nope"),
    ({"sim": {"seed": "x"}}, "sim.seed"),
    ({"sim": {"seed": 1, "hospitals": 0}}, "sim.hospitals"),
    ({"sim": {"seed": 1, "hospitals": 16}}, "sim.hospitals"),
    ({"sim": {"seed": 1, "clock": "wall"}}, "sim.clock"),
    ({"sim": {"seed": 1, "dropout": [[0, 7]]}}, "sim.dropout[0]"),
    ({"sim": {"seed": 1, "time_limits": [1.0]}}, "sim.time_limits"),
    ({"sim": {"seed": 1}, "fed": {"lr": 0}}, "fed.lr"),
    ({"sim": {"seed": 1}, "dag": {"rho": 2}}, "dag.rho"),
])
def test_config_errors_name_key(raw, key):
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict(raw)
    assert e.value.key == key
    assert key in str(e.value)


def test_config_round_trip_and_replace(tmp_path):
    cfg = small()
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg
    assert cfg.replace(sim__hospitals=5).sim.hospitals == 5
    for name in presets.names():
        raw = presets.load(name)
        if "vary" in raw:
            SweepSpec.from_dict(raw)
        else:
            ExperimentConfig.from_dict(raw)
    with pytest.raises(ConfigError):
        presets.load("missing")


def test_streams_are_independent_and_reproducible():
    a = stream(1, "data", 0).integers(1 << 30, size=4)
    assert np.array_equal(a, stream(1, "data", 0).integers(1 << 30, size=4))
    assert not np.array_equal(a, stream(1, "data", 1).integers(1 << 30, size=4))
    assert not np.array_equal(a, stream(1, "train", 0).integers(1 << 30, size=4))
    with pytest.raises(KeyError):
        stream(1, "nope")


# --- aggregation correctness -------------------------------------------------

def test_single_hospital_global_equals_local():
    cfg = small(hospitals=1, episodes=1)
    plain = plaintext_control(cfg)
    trains, _, _ = build_data(cfg)
    w, _ = train_local(init_weights(cfg.data.features, cfg.data.classes), trains[0], cfg.fed.lr,
                       cfg.sim.grads_per_hospital, stream(cfg.sim.seed, "train", 0), cfg.fed.batch_size)
    assert np.abs(plain.model - w).max() < 1e-12
    secure = run_experiment(cfg)
    assert np.abs(secure.model - w).max() <= 1 / (2 * SCALE) + 1e-12


def test_secure_matches_plaintext_one_round():
    cfg = small()
    a, b = run_experiment(cfg), plaintext_control(cfg)
    assert np.abs(a.model - b.model).max() <= 3 / (2 * SCALE)


def test_secure_matches_plaintext_over_rounds():
    cfg = small(episodes=3)
    a, b = run_experiment(cfg), plaintext_control(cfg)
    assert np.abs(a.model - b.model).max() <= 3 * 3 / (2 * SCALE)
    assert [m.hospitals for m in a.metrics] == [3, 3, 3]


# --- outputs -----------------------------------------------------------------

def test_run_is_byte_deterministic(tmp_path):
    cfg = small(episodes=2)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ("metrics.csv", "events.jsonl", "dag.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "metrics.csv").read_text().startswith("# seed=3\n")
    assert not list(tmp_path.glob("*/*.partial"))


def test_golden_metrics(tmp_path):
    cfg = ExperimentConfig.from_dict(presets.load("golden"))
    run_experiment(cfg, tmp_path)
    produced = (tmp_path / "metrics.csv").read_bytes()
    golden = GOLDEN / "metrics_golden.csv"
    if os.environ.get("BCFL_REGEN_GOLDEN"):
        golden.write_bytes(produced)
    assert produced == golden.read_bytes()


def test_emit_metrics_header_only_and_rows(tmp_path):
    buf = io.StringIO()
    emit_metrics([], buf)
    assert buf.getvalue() == ",".join(METRICS_HEADER) + "\n"
    rows = [RoundMetrics(0, 0, 3, 125, 0.5, 1.0, 10.0, 2), RoundMetrics(0, 1, 3, 125, 0.6, 0.9, 11.0, 4)]
    emit_metrics(rows, tmp_path / "m.csv", seed=4)
    assert read_metrics(tmp_path / "m.csv") == rows
    assert len((tmp_path / "m.csv").read_text().splitlines()) == 4


def test_partial_file_left_on_failure(tmp_path):
    def series():
        yield RoundMetrics(0, 0, 3, 125, 0.5, 1.0, 10.0, 2)
        raise RuntimeError("crash")

    with pytest.raises(RuntimeError):
        emit_metrics(series(), tmp_path / "m.csv")
    assert not (tmp_path / "m.csv").exists()
    assert len((tmp_path / "m.csv.partial").read_text().splitlines()) == 2
    w = MetricsWriter(tmp_path / "n.csv")
    w.close()
    assert (tmp_path / "n.csv").exists()


def test_failed_round_is_wrapped(tmp_path):
    cfg = small(hospitals=1, dropout=[[1, 0]], episodes=2)
    with pytest.raises(RoundError) as e:
        run_experiment(cfg, tmp_path)
    assert e.value.round == 1
    assert (tmp_path / "metrics.csv.partial").exists()


# --- membership and stopping -------------------------------------------------

def test_dropout_rekeys_and_continues():
    res = run_experiment(small(episodes=3, dropout=[[1, 2]]))
    assert [m.hospitals for m in res.metrics] == [3, 2, 2]
    rekeys = [e for e in res.events if e["event"] == "rekey"]
    assert [e["round"] for e in rekeys] == [0, 1]
    assert rekeys[1]["detail"]["parties"] == ["h0", "h1"]
    assert any(e["event"] == "dropout" for e in res.events)


def test_time_budget_stops_run():
    res = run_experiment(small(episodes=5, time_limits=[1.0, 1.0, 1.0]))
    assert res.stop_reason == "time_budget" and res.stopped_early
    assert 1 <= res.completed_rounds < 5


def test_plateau_stops_run():
    raw = small(episodes=30).to_dict()
    raw["fed"]["plateau_tol"] = 1e3
    raw["fed"]["plateau_window"] = 2
    res = plaintext_control(ExperimentConfig.from_dict(raw))
    assert res.stop_reason == "plateau" and res.completed_rounds == 3


def test_leader_rotates_per_episode():
    res = plaintext_control(small(episodes=3))
    leaders = [e["actor"] for e in res.events if e["event"] == "leader"]
    assert leaders == ["h0", "h1", "h2"]


def test_dag_grows_and_confirms():
    res = plaintext_control(small(episodes=4))
    assert len(res.dag.transactions) == 1 + 4 * 4
    assert res.metrics[-1].confirmed_tx >= 1


# --- privacy audit -----------------------------------------------------------

def test_audit_flags_plaintext_and_clears_secure():
    cfg = small()
    plain = plaintext_control(cfg, instrument=True)
    found = audit_messages(plain.messages, plain.private)
    assert {f.owner for f in found} == {"h1", "h2"}   # h0 leads
    secure = run_experiment(cfg, instrument=True)
    assert secure.messages and audit_messages(secure.messages, secure.private) == []


def test_audit_detects_scaled_and_embedded_copies():
    v = np.array([0.25, -1.5, 3.0, 0.125])
    log = MessageLog()
    log.record(0, "a", "b", "x", np.r_[7.0, -2 * v, 1.0])
    log.record(0, "a", "b", "x", b"junk" + (v * 3).astype("<f8").tobytes())
    log.record(0, "a", "b", "x", v[::-1])
    log.record(0, "a", "a", "x", v)
    found = audit_messages(log, {"a": [v]})
    assert [(f.message_index, f.match) for f in found] == [(0, "scaled"), (1, "scaled")]
    log.record(0, "a", "b", "x", b"pre" + v.tobytes())
    assert audit_messages(log, {"a": [v]})[-1].match == "exact"


# --- sweeps ------------------------------------------------------------------

def test_small_sweep(tmp_path):
    spec = SweepSpec(small().to_dict(), "sim.grads_per_hospital", [10, 20], [0, 1])
    seen = []
    points = run_sweep(spec, tmp_path, progress=lambda v, s, m: seen.append((v, s)))
    assert seen == [(10, 0), (10, 1), (20, 0), (20, 1)]
    assert [p.value for p in points] == [10, 20]
    rows = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(rows) == 3
    assert (tmp_path / "grads_per_hospital-10" / "seed-1" / "metrics.csv").exists()
    assert points[0].median_wall_time < points[1].median_wall_time

import io as stdio
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from drivecoc import io
from drivecoc._validation import ValidationError
from drivecoc.config import RunConfig


def test_defaults():
    cfg = RunConfig()
    assert cfg.seed == 0
    assert (cfg.quantizer.a_bins, cfg.quantizer.a_lo, cfg.quantizer.kappa_hi) == (256, -10.0, 0.2)
    assert (cfg.detector.a_gentle, cfg.detector.a_strong, cfg.detector.v_stop) == (0.3, 2.0, 0.1)
    assert (cfg.detector.kappa_steer, cfg.detector.kappa_sharp, cfg.detector.hysteresis_frames) == (0.02, 0.1, 3)
    assert (cfg.schedule.alpha, cfg.schedule.beta, cfg.schedule.shift) == (1.5, 1.0, 0.999)
    assert (cfg.rewards.w_reason, cfg.rewards.w_consistency) == (0.2, 1.0)
    assert cfg.closed_loop.deviation_limit == 4.0 and cfg.metrics.a_comfort == 3.0
    assert cfg.judge.kind == "mock"


def test_load_and_seed_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 3, "grpo": {"iterations": 5}, "paths": {"input": "x.jsonl"}}))
    cfg = RunConfig.load(path)
    assert cfg.seed == 3 and cfg.grpo.iterations == 5 and cfg.grpo.group_size == 6
    assert cfg.paths.input == "x.jsonl"
    assert cfg.with_seed(11).seed == 11 and cfg.with_seed(11).grpo == cfg.grpo
    assert cfg.with_seed(None) is cfg
    assert RunConfig.load(None) == RunConfig()


@pytest.mark.parametrize("bad", [
    {"sede": 1},
    {"grpo": {"iteratons": 3}},
    {"grpo": 3},
    {"seed": "7"},
    {"seed": True},
    {"judge": {"kind": "oracle"}},
    {"detector": {"a_gentle": 3.0}},
])
def test_bad_configs_rejected(bad):
    with pytest.raises(ValidationError):
        RunConfig.from_dict(bad)


def test_unreadable_config(tmp_path):
    with pytest.raises(ValidationError):
        RunConfig.load(tmp_path / "missing.json")
    (tmp_path / "list.json").write_text("[1]")
    with pytest.raises(ValidationError):
        RunConfig.load(tmp_path / "list.json")


def test_round_sig():
    assert io.round_sig(3.14159265358979) == 3.14159
    assert io.round_sig(123456789.0) == 123457000.0
    assert io.round_sig({"a": [1, 2.0000001, True], "b": np.float32(0.5)}) == {"a": [1, 2.0, True], "b": 0.5}
    assert io.round_sig(np.arange(3)) == [0, 1, 2]
    with pytest.raises(ValidationError):
        io.round_sig(float("nan"))


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_round_sig_relative_error(x):
    y = io.round_sig(x)
    assert abs(y - x) <= 5e-6 * abs(x)
    assert io.round_sig(y) == y


def test_jsonl_round_trip(tmp_path):
    path = tmp_path / "r.jsonl"
    io.write_jsonl([io.versioned({"x": 1.0}), io.versioned({"x": 2})], path)
    assert io.read_jsonl(path) == [{"v": 1, "x": 1.0}, {"v": 1, "x": 2}]
    # keys are sorted so equal content means equal bytes
    assert path.read_text() == '{"v": 1, "x": 1.0}\n{"v": 1, "x": 2}\n'


@pytest.mark.parametrize("line", ['{"x": 1}', '{"v": 2}', "not json", "[1, 2]"])
def test_read_rejects(tmp_path, line):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"v": 1}\n' + line + "\n")
    with pytest.raises(ValidationError) as exc:
        io.read_jsonl(path)
    assert exc.value.context.get("line") == 2


def test_read_stdin_and_missing(monkeypatch, tmp_path):
    monkeypatch.setattr("sys.stdin", stdio.StringIO('{"v": 1, "k": 0}\n\n'))
    assert io.read_jsonl("-") == [{"v": 1, "k": 0}]
    with pytest.raises(ValidationError):
        io.read_jsonl(tmp_path / "nope.jsonl")
    with pytest.raises(ValidationError):
        io.read_jsonl(None)

import json
import math

import pytest

import geoprog


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def test_registry_and_synth_are_deterministic():
    reg = geoprog.default_registry()
    assert set(reg["types"]) == {"cal", "prv"}
    a = geoprog.synth(8, seed=3)
    assert a == geoprog.synth(8, seed=3)
    assert len(a) == 8
    assert {r["type"] for r in a} <= {"cal", "prv"}


def test_execute_cal_matches_arithmetic():
    record = {"type": "cal", "text": "the sides are 3 and 5",
              "program": [{"op": "add", "args": ["N_0", "N_1"]}, {"op": "mul", "args": ["#0", "C_2"]}]}
    assert geoprog.execute_cal(record) == (3 + 5) * 2
    area = {"type": "cal", "text": "radius 2 and 9", "program": [{"op": "Circle_R_Area", "args": ["N_0"]}]}
    assert math.isclose(geoprog.execute_cal(area), 12.566372, rel_tol=1e-9)


def test_unresolvable_symbol_raises():
    record = {"type": "cal", "text": "the sides are 3 and 5", "program": [{"op": "add", "args": ["N_0", "N_5"]}]}
    with pytest.raises(geoprog.GeoprogError, match="UnresolvableSymbol"):
        geoprog.execute_cal(record)


def test_train_predict_round_trip(tmp_path):
    data = tmp_path / "d.jsonl"
    write_jsonl(data, geoprog.synth(6, seed=1))
    model = geoprog.train(data, {"hidden": 8, "layers": 1, "epochs": 2, "batch_size": 3}, seed=2)
    assert model.config["hidden"] == 8
    ckpt = tmp_path / "m.ckpt"
    model.save(ckpt)
    again = geoprog.Model.load(ckpt)
    assert again.parameter_count == model.parameter_count

    record = geoprog.synth(1, seed=9)[0]
    cands = again.predict(record, beam=3)
    assert 1 <= len(cands) <= 3
    assert [c["rank"] for c in cands] == list(range(len(cands)))
    scores = [c["score"] for c in cands]
    assert scores == sorted(scores, reverse=True)

    g = again.greedy(record)
    assert 1 <= len(g["steps"]) <= len(g["flat"])
    for step in g["steps"]:
        assert math.isclose(sum(step["probs"]), 1.0, abs_tol=1e-9)

    report = again.evaluate(data, k=2, beam=3)
    assert report["total"] == 6
    assert report["topk"] >= report["top1"]


def test_cli_exit_codes(tmp_path):
    code, _, err = geoprog.run_cli(["synth", "--n", "2"])
    assert code == 1 and err
    out = tmp_path / "s.jsonl"
    code, _, _ = geoprog.run_cli(["synth", "--out", str(out), "--n", "2", "--seed", "4"])
    assert code == 0 and out.read_text().count("\n") == 2

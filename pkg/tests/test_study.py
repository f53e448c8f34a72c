import json
import os

import pytest

from markerforge.cli import NOTHING, OK, run_cli
from markerforge.detector import MarkerKind, model_to_json
from markerforge.study import (
    HARD, HARD_SEQUENCE, SIMPLE, SIMPLE_SEQUENCE, StudyConfig, load_model, run_study, split_corpus,
)


def test_frozen_sequences():
    assert [round(768 * f) for f in SIMPLE_SEQUENCE.height_fractions()] == [12, 23, 46, 92, 184]
    assert [round(768 * f) for f in HARD_SEQUENCE.height_fractions()] == [42, 55, 72, 94, 123]


def test_config():
    assert StudyConfig(SIMPLE).expected == (False, False, True, True, True)
    assert StudyConfig(HARD).expected == (False,) * 5
    assert StudyConfig(HARD).scene.background.kind == "clutter"
    with pytest.raises(ValueError):
        StudyConfig("medium")


def test_split_is_balanced():
    items = [(i, k) for i in range(50) for k in MarkerKind]
    train, held = split_corpus(items)
    assert len(held) * 4 == len(train)
    assert {k for _, k in held} == set(MarkerKind)


def test_simple_study_outputs(model, tmp_path):
    out = tmp_path / "s"
    rep = run_study(StudyConfig(SIMPLE, 0, str(out)), model)
    assert rep.pattern == "×,×,✓,✓,✓" and rep.passed
    names = sorted(os.listdir(out))
    assert len(names) == 5 * 4 + 1 and "report.json" in names
    for i in range(5):
        for n in ("input.pgm", "proposal.ppm", "gray.pgm", "fused.ppm"):
            assert f"frame{i}_{n}" in names
    doc = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert doc["pattern"] == rep.pattern
    assert [f["decodeStatus"] for f in doc["frames"]] == ["×", "×", "✓", "✓", "✓"]


def test_study_deterministic(model, tmp_path):
    a = run_study(StudyConfig(HARD, 4, str(tmp_path / "a")), model)
    b = run_study(StudyConfig(HARD, 4, str(tmp_path / "b")), model)
    assert a.to_json(include_elapsed=False) == b.to_json(include_elapsed=False)
    for n in sorted(os.listdir(tmp_path / "a")):
        if n != "report.json":
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    assert a.passed and a.localized_count >= 4


def test_study_cli(model, tmp_path):
    m = tmp_path / "model.json"
    m.write_text(model_to_json(model))
    assert load_model(str(m)).weights.shape == model.weights.shape
    assert run_cli(["study", SIMPLE, "--model", str(m), "--out", str(tmp_path / "o")]) == OK
    # a threshold no window reaches leaves nothing decoded, so the pattern fails
    assert run_cli(["study", SIMPLE, "--model", str(m), "--threshold", "0.9999",
                    "--out", str(tmp_path / "p")]) == NOTHING

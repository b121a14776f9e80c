import json
from pathlib import Path

import pytest

from perftx.cli import main
from perftx.errors import DataError
from perftx.recipes import Recipe, load_recipes, normalized_bytes, verify_recipes

REPO_RECIPES = Path(__file__).resolve().parents[1] / "recipes"


def export_recipe(name, artifacts):
    return {
        "name": name,
        "acceptance": [11],
        "commands": [["synth", "export", "--family", "demo1d", "--sample", "20",
                      "--out", "{work}/grid.csv"]],
        "artifacts": artifacts,
    }


@pytest.fixture
def recipe_dir(tmp_path):
    d = tmp_path / "recipes"
    d.mkdir()
    (d / "a.json").write_text(json.dumps(export_recipe("a", ["grid.csv"])))
    (d / "b.json").write_text(json.dumps(export_recipe("b", ["grid.csv", "gone.csv"])))
    (d / "c.json").write_text(json.dumps(export_recipe("c", ["grid.csv"])))
    return d


def test_missing_artifact_fails_only_its_recipe(recipe_dir, tmp_path):
    report = verify_recipes(recipe_dir, tmp_path / "work")
    status = {r.name: r.ok for r in report.results}
    assert status == {"a": True, "b": False, "c": True}
    assert not report.ok
    assert "FAIL b" in report.lines() and "  - missing artifact gone.csv" in report.lines()


def test_failing_command_is_reported(tmp_path):
    d = tmp_path / "recipes"
    d.mkdir()
    bad = export_recipe("bad", ["grid.csv"])
    bad["commands"] = [["synth", "export", "--family", "nowhere", "--out", "{work}/g.csv"]]
    (d / "bad.json").write_text(json.dumps(bad))
    res = verify_recipes(d, tmp_path / "w").results[0]
    assert not res.ok and "exited 2" in res.failures[0]


def test_broken_check_fails_its_recipe(tmp_path):
    d = tmp_path / "recipes"
    d.mkdir()
    r = export_recipe("chk", ["grid.csv"])
    r["checks"] = [{"check": "demo_transfer_helps", "summary": "absent.json"}]
    (d / "chk.json").write_text(json.dumps(r))
    res = verify_recipes(d, tmp_path / "w").results[0]
    assert not res.ok and "FileNotFoundError" in res.failures[0]


def test_only_and_unknown_names(recipe_dir, tmp_path):
    assert [r.name for r in verify_recipes(recipe_dir, tmp_path / "w", ["c"]).results] == ["c"]
    with pytest.raises(DataError):
        verify_recipes(recipe_dir, tmp_path / "w", ["zzz"])


def test_cli_verify_exit_codes(recipe_dir, tmp_path, capsys):
    assert main(["verify", "--recipes", str(recipe_dir), "--only", "a", "c"]) == 0
    assert main(["verify", "--recipes", str(recipe_dir), "--work", str(tmp_path / "w")]) == 1
    out = capsys.readouterr().out
    assert "PASS a" in out and "FAIL b" in out


def test_recipe_validation(tmp_path):
    p = tmp_path / "r.json"
    p.write_text(json.dumps({**export_recipe("x", []), "checks": [{"check": "nope"}]}))
    with pytest.raises(DataError, match="unknown check"):
        Recipe.load(p)
    p.write_text(json.dumps({**export_recipe("x", []), "colour": 1}))
    with pytest.raises(DataError, match="unknown recipe field"):
        Recipe.load(p)


def test_shipped_recipes_cover_every_criterion():
    recipes = load_recipes(REPO_RECIPES)
    covered = {a for r in recipes for a in r.acceptance}
    assert covered == set(range(1, 12))
    assert len({r.name for r in recipes}) == len(recipes)


def test_normalized_bytes_drops_timing(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("n_s,train_s,mean_ape,eval_ms\n1,0.5,3.0,0.1\n")
    b.write_text("n_s,train_s,mean_ape,eval_ms\n1,0.9,3.0,0.4\n")
    assert normalized_bytes(a) == normalized_bytes(b)
    ja, jb = tmp_path / "a.json", tmp_path / "b.json"
    ja.write_text(json.dumps({"cells": [{"train_s_mean": 1.0, "mean_ape": 2.0}]}))
    jb.write_text(json.dumps({"cells": [{"train_s_mean": 3.0, "mean_ape": 2.0}]}))
    assert normalized_bytes(ja) == normalized_bytes(jb)
    jb.write_text(json.dumps({"cells": [{"train_s_mean": 3.0, "mean_ape": 2.5}]}))
    assert normalized_bytes(ja) != normalized_bytes(jb)

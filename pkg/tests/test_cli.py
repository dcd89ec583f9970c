import csv
import hashlib
import json
import subprocess
import sys

import pytest

from rankattack.cli import build_parser, main
from rankattack.core import ComparisonDataset
from rankattack.data import read_dataset, write_dataset

COMMANDS = ["generate", "fit", "attack", "sweep", "threshold", "convert"]


@pytest.fixture
def two_candidates(tmp_path):
    path = tmp_path / "two.csv"
    rows = [(0, 0, 1), (1, 0, 1), (2, 0, 1), (3, 1, 0)]
    write_dataset(ComparisonDataset.from_comparisons(rows, 2), path)
    return path


@pytest.fixture
def electorate(tmp_path):
    path = tmp_path / "e.csv"
    assert main(["generate", "--m", "4", "--n-voters", "12", "--rho", "0.8", "--seed", "4", "--out", str(path)]) == 0
    return path


@pytest.fixture
def blocs(tmp_path):
    # 6 voters prefer A > B > C, 3 prefer B > A > C, one prefers C > B > A
    lines = ["candidates: A,B,C", "6: A,B,C", "3: B,A,C", "C,B,A"]
    path = tmp_path / "blocs.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_fit_two_candidates(two_candidates, capsys):
    assert main(["fit", str(two_candidates)]) == 0
    out = capsys.readouterr().out
    assert "ranking: [0, 1]" in out
    assert "c0\t0.75" in out


def test_fit_non_identifiable(tmp_path, capsys):
    path = tmp_path / "one-sided.csv"
    write_dataset(ComparisonDataset.from_comparisons([(0, 0, 1)], 2), path)
    assert main(["fit", str(path)]) == 1
    assert "not strongly connected" in capsys.readouterr().err
    assert main(["fit", str(path), "--regularization", "0.5"]) == 0
    assert "warning" in capsys.readouterr().err


def test_fit_writes_json_and_manifest(two_candidates, tmp_path):
    out = tmp_path / "fit.json"
    assert main(["fit", str(two_candidates), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["ranking"] == [0, 1]
    manifest = json.loads((tmp_path / "fit.json.manifest.json").read_text())
    assert manifest["command"] == "fit" and manifest["seed"] == 0
    digest = hashlib.sha256(two_candidates.read_bytes()).hexdigest()
    assert manifest["inputs"] == {str(two_candidates): digest}
    assert {"rankattack", "numpy", "scipy"} <= set(manifest["versions"])


def test_attack_target_already_met(electorate, capsys):
    assert main(["attack", str(electorate), "--target", "identity", "--budget", "5"]) == 0
    assert "flips: 0" in capsys.readouterr().out


def test_attack_by_names_writes_manipulated(electorate, tmp_path, capsys):
    out = tmp_path / "m.csv"
    args = ["attack", str(electorate), "--target", "swap-top", "--budget-fraction", "0.2", "--seed", "3"]
    assert main(args + ["--out", str(out)]) == 0
    report = capsys.readouterr().out
    target = report.split("target:")[1].splitlines()[0].strip()
    names = ",".join(t.strip() for t in target.split(">"))
    out2 = tmp_path / "m2.csv"
    assert main(["attack", str(electorate), "--target", names, "--budget-fraction", "0.2", "--seed", "3", "--out", str(out2)]) == 0
    assert read_dataset(out) == read_dataset(out2)
    assert out.read_text() == out2.read_text()


def test_attack_coalition(electorate, capsys):
    assert main(["attack", str(electorate), "--target", "reverse", "--budget", "100", "--coalition", "0,1"]) == 0
    assert "pool: 12 comparisons" in capsys.readouterr().out
    assert main(["attack", str(electorate), "--target", "reverse", "--budget", "1", "--coalition", "99"]) == 2


@pytest.mark.parametrize(
    "target", ["c0,c1", "c0,c1,c2,c9", "c0,c0,c1,c2", "promote:9"]
)
def test_attack_bad_target(electorate, target, capsys):
    assert main(["attack", str(electorate), "--target", target, "--budget", "1"]) == 2
    assert "error" in capsys.readouterr().err


def test_attack_needs_budget(electorate):
    assert main(["attack", str(electorate), "--target", "reverse"]) == 2


def test_convert_example(tmp_path, capsys):
    ballots = tmp_path / "b.txt"
    ballots.write_text("candidates: Alice,Bob,Carol\nCarol,Alice,Bob\n")
    out = tmp_path / "d.csv"
    assert main(["convert", str(ballots), "--out", str(out)]) == 0
    assert len(read_dataset(out)) == 3
    assert "3 comparisons from 1 ballots" in capsys.readouterr().out


def test_convert_parse_error(tmp_path, capsys):
    ballots = tmp_path / "b.txt"
    ballots.write_text("candidates: Alice,Bob\nAlice,Zed\n")
    assert main(["convert", str(ballots)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["fit", str(tmp_path / "nope.csv")]) == 2


def test_ballot_file_as_input(blocs, capsys):
    assert main(["fit", str(blocs)]) == 0
    assert "(A > B > C)" in capsys.readouterr().out


def test_threshold(blocs, capsys):
    assert main(["threshold", str(blocs), "--target", "B,A,C", "--trials", "2", "--subsets", "2"]) == 0
    assert "threshold:" in capsys.readouterr().out


def test_threshold_unreachable(blocs, capsys):
    # rf with the whole pool as budget can only reverse the ranking
    assert main(["threshold", str(blocs), "--target", "B,A,C", "--algorithm", "rf", "--trials", "2"]) == 1
    assert "unreachable" in capsys.readouterr().err


def test_sweep_reproducible(tmp_path):
    common = ["sweep", "--trials", "2", "--algorithms", "rf,assa", "--budget-fractions", "0.05,0.2", "--seed", "9"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(common + ["--out", str(a)]) == 0
    assert main(common + ["--out", str(b)]) == 0

    def rows(path):
        out = list(csv.DictReader(path.open()))
        for r in out:
            r.pop("seconds")
        return out

    assert rows(a) == rows(b) and len(rows(a)) == 4
    assert json.loads((tmp_path / "a.csv.manifest.json").read_text())["config"]["seed"] == 9


def test_sweep_axis(tmp_path):
    out = tmp_path / "h.json"
    args = ["sweep", "--trials", "1", "--algorithms", "assa", "--budget-fractions", "0.2", "--axis", "iterations"]
    assert main(args + ["--values", "1,2", "--format", "json", "--out", str(out)]) == 0
    assert [c["iterations"] for c in json.loads(out.read_text())["cells"]] == [1, 2]
    assert main(args) == 2


def test_sweep_usage_errors():
    assert main(["sweep", "--algorithms", "rf,zz"]) == 2
    assert main(["sweep", "--budget-fractions", "0"]) == 2
    assert main(["sweep", "--target", "a,b"]) == 2


@pytest.mark.parametrize("command", COMMANDS)
def test_help_and_unknown_flags(command, capsys):
    assert main([command, "--help"]) == 0
    text = capsys.readouterr().out
    assert "--seed" in text
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
    assert main([command, "--no-such-flag"]) == 2


def test_generate_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["generate", "--m", "3", "--n-voters", "5", "--seed", "2", "--out", str(path)]) == 0
    assert a.read_text() == b.read_text()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rankattack", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "generate" in proc.stdout


def test_threshold_discordant_pool(blocs, capsys):
    args = ["threshold", str(blocs), "--target", "B,A,C", "--trials", "2", "--subsets", "2", "--candidates", "discordant"]
    assert main(args) == 0
    assert "threshold:" in capsys.readouterr().out
    assert main(args[:-1] + ["everything"]) == 2

import json

import pytest
from fastapi.testclient import TestClient

from refgen.cli import main
from refgen.fake_server import create_app
from refgen.harness import ExperimentConfig, load_records, run_experiment
from refgen.llm import LlmConfig


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:  # argparse rejects the command line itself
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_games(tmp_path, capsys):
    out = tmp_path / "games.jsonl"
    code, _, _ = run(capsys, "generate-games", "--n-distractors", "8", "--n-games", "3", "--out", str(out))
    assert code == 0
    games = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(games) == 3 and all(len(g["distractors"]) == 8 for g in games)
    code, stdout, _ = run(capsys, "generate-games", "--n-games", "2")
    assert code == 0 and len(stdout.splitlines()) == 2


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "run", "--engine", "bogus")[0] == 1
    assert run(capsys)[0] == 1
    assert run(capsys, "run", "--engine", "baseline", "--n-games", "1")[0] == 1
    assert run(capsys, "run", "--oracle-eval-error", "2", "--n-games", "1")[0] == 1
    assert run(capsys, "summarize", str(tmp_path / "missing.jsonl"))[0] == 1
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"colour": 1}))
    assert run(capsys, "run", "--config", str(bad))[0] == 1


def test_run_grid_summarize_compare(tmp_path, capsys):
    im = tmp_path / "im.jsonl"
    sp = tmp_path / "sp.jsonl"
    code, out, _ = run(
        capsys, "run", "--n-distractors", "1", "4", "--n-samples", "4", "8", "--n-games", "10",
        "--oracle-eval-error", "0.1", "--out", str(im),
    )
    assert code == 0
    assert len(out.splitlines()) == 4
    assert len(load_records(im)) == 40
    code, _, _ = run(capsys, "run", "--engine", "single_pass", "--n-distractors", "1", "4", "--n-games", "10",
                     "--oracle-eval-error", "0.1", "--out", str(sp))
    assert code == 0
    assert {r.n_samples for r in load_records(sp)} == {10}
    assert {r.config["oracle"]["proposer_mode"] for r in load_records(sp)} == {"subsets_le2"}

    csv_dir = tmp_path / "csv"
    code, out, _ = run(capsys, "summarize", str(im), str(sp), "--csv-dir", str(csv_dir), "--n-boot", "200")
    assert code == 0
    assert "== contrastivity ==" in out and "single_pass" in out
    assert sorted(p.name for p in csv_dir.iterdir()) == ["contrastivity.csv", "depth.csv", "iterations.csv"]
    assert len((csv_dir / "contrastivity.csv").read_text().splitlines()) == 1 + 6

    code, out, _ = run(capsys, "compare", str(im), str(sp), "--n-boot", "200", "--paired")
    assert code == 0
    assert out.splitlines()[0].split()[0] == "n_distractors"
    assert len(out.splitlines()) == 3


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    out = tmp_path / "runs.jsonl"
    cfg.write_text(json.dumps({"n_distractors": 8, "n_games": 3, "seed": 9, "out": str(out), "n-samples": 8}))
    assert run(capsys, "run", "--config", str(cfg), "--n-games", "2")[0] == 0
    recs = load_records(out)
    assert len(recs) == 2
    assert {(r.n_distractors, r.n_samples, r.config["seed"]) for r in recs} == {(8, 8, 9)}


def test_partial_and_backend_failure_exit_codes(monkeypatch, capsys):
    import refgen.harness as h

    real = h.run_iterative

    def flaky(game, *a, **k):
        if game.id.startswith("d4-0000"):
            raise RuntimeError("boom")
        return real(game, *a, **k)

    monkeypatch.setattr(h, "run_iterative", flaky)
    assert run(capsys, "run", "--n-games", "3")[0] == 3

    def broken(*a, **k):
        raise RuntimeError("down")

    monkeypatch.setattr(h, "run_iterative", broken)
    code, out, _ = run(capsys, "run", "--n-games", "2")
    assert code == 2 and "2 failed" in out


def test_llm_backend_without_key_is_backend_failure(monkeypatch, capsys):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    code, _, _ = run(capsys, "run", "--backend", "llm", "--n-games", "1", "--endpoint", "http://127.0.0.1:9")
    assert code == 2


def test_replay_subcommand(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "k")
    cache = tmp_path / "cache.jsonl"
    runs = tmp_path / "recorded.jsonl"
    llm = LlmConfig(endpoint="http://testserver", cache="record", cache_file=str(cache), backoff=0.0)
    cfg = ExperimentConfig(backend="llm", llm=llm, n_games=3, n_distractors=4, output=str(runs))
    run_experiment(cfg, http_client=TestClient(create_app()))
    monkeypatch.delenv("LLM_API_KEY")

    code, out, _ = run(capsys, "replay", str(runs), "--out", str(tmp_path / "replayed.jsonl"))
    assert code == 0, out
    assert "3 games, 0 differ" in out

    # a tampered recording no longer matches
    lines = runs.read_text().splitlines()
    doc = json.loads(lines[0])
    doc["utterance"] = "something else"
    lines[0] = json.dumps(doc)
    runs.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "replay", str(runs), "--out", str(tmp_path / "again.jsonl"))
    assert code == 3 and "1 differ" in out


def test_replay_rejects_oracle_runs(tmp_path, capsys):
    runs = tmp_path / "o.jsonl"
    run_experiment(ExperimentConfig(n_games=1, output=str(runs)))
    assert run(capsys, "replay", str(runs), "--out", str(tmp_path / "x.jsonl"))[0] == 1


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "refgen", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "generate-games" in res.stdout


@pytest.mark.parametrize("cmd", ["generate-games", "run", "summarize", "compare", "replay", "serve-fake"])
def test_subcommand_help(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0

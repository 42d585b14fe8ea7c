import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refgen.domain import A3DS, SceneState, render_description
from refgen.games import ReferenceGame, sample_game
from refgen.harness import (
    ExperimentConfig,
    RunRecord,
    ground_truth_contrastivity,
    load_records,
    make_games,
    run_experiment,
)
from refgen.oracle import OracleConfig
from refgen.stats import running_max

BASE = dict(floor_color="purple", wall_color="green", object_color="red", size="small", shape="block", position="middle")


def state(**changes):
    return SceneState.from_dict({**BASE, **changes})


@pytest.fixture
def two_distractor_game():
    return ReferenceGame("g", 0, state(), (state(wall_color="blue"), state(floor_color="red")))


def test_ground_truth_examples(two_distractor_game):
    gt = ground_truth_contrastivity("The floor is purple", two_distractor_game)
    assert gt.contrastivity == Fraction(1, 2) and gt.target_true and gt.true_distractors == 1
    full = ground_truth_contrastivity(render_description(state()), two_distractor_game)
    assert full.contrastivity == 1
    empty = ground_truth_contrastivity("There is something here.", two_distractor_game)
    assert empty.contrastivity == 0 and empty.target_true and not empty.parse_failure
    bad = ground_truth_contrastivity("The floor is purple and the floor is red.", two_distractor_game)
    assert bad.contrastivity == 0 and bad.parse_failure and not bad.target_true


def test_full_description_is_always_fully_contrastive():
    for seed in range(200):
        game = sample_game(A3DS, 8, seed)
        assert ground_truth_contrastivity(game.descriptions()[0], game).contrastivity == 1


class Exploding:
    def __getattr__(self, name):
        raise AssertionError("ground truth must not touch a backend")


def test_scoring_independent_of_backend(two_distractor_game, monkeypatch):
    import refgen.harness as h

    monkeypatch.setattr(h, "OracleEvaluator", Exploding)
    monkeypatch.setattr(h, "ChatClient", Exploding)
    assert ground_truth_contrastivity("The wall is green", two_distractor_game).contrastivity == Fraction(1, 2)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(engine="baseline", backend="oracle")
    with pytest.raises(ValueError):
        ExperimentConfig(engine="nope")
    with pytest.raises(ValueError):
        ExperimentConfig(n_games=0)
    cfg = ExperimentConfig(oracle={"eval_error_rate": 0.1})
    assert cfg.oracle == OracleConfig(eval_error_rate=0.1)
    assert cfg.cell == "iterative/d4/n4/oracle"


def test_games_shared_across_engines():
    a = make_games(3, 4, 5)
    b = make_games(3, 4, 5)
    assert a == b
    assert len({g.id for g in a}) == 5
    assert make_games(4, 4, 5) != a


def test_hundred_records_and_determinism(tmp_path):
    cfg = ExperimentConfig(n_distractors=4, n_samples=4, n_games=100, seed=1)
    first = run_experiment(cfg)
    assert len(first) == 100
    assert all(r.error is None for r in first)
    second = run_experiment(cfg)
    assert [r.game_id for r in first] == [r.game_id for r in second]
    assert [r.deterministic() for r in first] == [r.deterministic() for r in second]
    for r in first:
        assert 0 <= r.gt_contrastivity <= 1
        assert (r.gt_contrastivity * 4).is_integer()


def test_resume_after_interruption(tmp_path):
    out = tmp_path / "runs.jsonl"
    cfg = ExperimentConfig(n_distractors=4, n_games=100, seed=2, output=str(out))
    full = run_experiment(cfg)
    lines = out.read_text().splitlines()
    out.write_text("\n".join(lines[:37]) + "\n")
    resumed = run_experiment(cfg)
    records = load_records(out)
    assert len(records) == 100
    assert len({r.game_id for r in records}) == 100
    assert [r.deterministic() for r in resumed] == [r.deterministic() for r in full]
    # a completed run is a no-op
    run_experiment(cfg)
    assert len(load_records(out)) == 100


def test_other_cells_in_same_file_do_not_block(tmp_path):
    out = tmp_path / "runs.jsonl"
    run_experiment(ExperimentConfig(n_distractors=1, n_games=5, output=str(out)))
    run_experiment(ExperimentConfig(n_distractors=1, n_samples=8, n_games=5, output=str(out)))
    assert len(load_records(out)) == 10


def test_jobs_match_sequential():
    seq = run_experiment(ExperimentConfig(n_distractors=8, n_games=20, oracle={"eval_error_rate": 0.2}))
    par = run_experiment(ExperimentConfig(n_distractors=8, n_games=20, oracle={"eval_error_rate": 0.2}, jobs=4))
    assert [r.deterministic() | {"config": None} for r in seq] == [r.deterministic() | {"config": None} for r in par]


def test_running_max_monotone_with_exact_oracle():
    for n_d in (1, 4, 8):
        for r in run_experiment(ExperimentConfig(n_distractors=n_d, n_games=30, seed=5)):
            curve = running_max(r.iteration_max_gt, r.max_iterations)
            assert curve == sorted(curve)
            assert len(r.iteration_max_gt) == r.iterations_used
            assert r.model_contrastivity == r.gt_contrastivity


def test_single_pass_records():
    recs = run_experiment(
        ExperimentConfig(engine="single_pass", n_samples=10, n_games=10, oracle={"proposer_mode": "subsets_le2"})
    )
    assert all(r.iterations_used == 1 and len(r.iteration_max_gt) == 1 for r in recs)


def test_per_game_error_is_recorded(monkeypatch):
    import refgen.harness as h

    real = h.run_iterative

    def flaky(game, *args, **kwargs):
        if game.id.startswith("d4-0003"):
            raise RuntimeError("boom")
        return real(game, *args, **kwargs)

    monkeypatch.setattr(h, "run_iterative", flaky)
    recs = run_experiment(ExperimentConfig(n_games=6))
    errors = [r for r in recs if r.error]
    assert len(recs) == 6 and len(errors) == 1
    assert errors[0].error == "RuntimeError: boom" and errors[0].utterance is None


def test_trace_flag():
    (rec,) = run_experiment(ExperimentConfig(n_games=1, trace=True))
    assert rec.trace["trace"]
    (rec,) = run_experiment(ExperimentConfig(n_games=1))
    assert rec.trace is None


floats = st.floats(0, 1, allow_nan=False)
text = st.text(max_size=30)


@settings(max_examples=50)
@given(
    st.builds(
        RunRecord,
        game_id=text,
        game_seed=st.integers(0, 2**64 - 1),
        cell=text,
        engine=st.sampled_from(["iterative", "single_pass", "baseline"]),
        n_distractors=st.integers(1, 8),
        n_samples=st.integers(1, 10),
        max_iterations=st.integers(1, 5),
        config=st.dictionaries(text, st.integers()),
        utterance=st.none() | text,
        gt_contrastivity=floats,
        gt_true_distractors=st.none() | st.integers(0, 8),
        gt_target_true=st.booleans(),
        gt_parse_failure=st.booleans(),
        model_contrastivity=st.none() | floats,
        iterations_used=st.integers(0, 5),
        iteration_max_gt=st.lists(floats, max_size=5),
        warnings=st.lists(text, max_size=3),
        calls=st.dictionaries(text, st.integers(0, 100)),
        wall_ms=st.floats(0, 1e6),
        error=st.none() | text,
    )
)
def test_record_round_trip(record):
    line = record.to_json()
    assert "\n" not in line
    assert RunRecord.from_json(line) == record
    assert json.loads(line)["game_id"] == record.game_id

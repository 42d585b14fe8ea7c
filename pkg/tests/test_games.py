import pytest
from hypothesis import given
from hypothesis import strategies as st

from refgen.domain import A3DS, Attribute, AttributeSchema, SceneState
from refgen.games import CapacityError, ReferenceGame, feature_diff, neighbourhood_size, sample_game


def _state(**changes):
    base = dict(floor_color="purple", wall_color="green", object_color="red", size="small", shape="block", position="middle")
    return SceneState.from_dict({**base, **changes})


def test_feature_diff():
    s = _state()
    assert feature_diff(s, s) == 0
    assert feature_diff(s, _state(floor_color="red")) == 1
    assert feature_diff(s, _state(floor_color="red", size="big")) == 2
    assert feature_diff(_state(size="big"), s) == 1


def test_sample_game_deterministic():
    a = sample_game(A3DS, 4, seed=7)
    b = sample_game(A3DS, 4, seed=7)
    assert a == b
    assert a.dumps() == b.dumps()


def _check_game(game: ReferenceGame, n: int) -> None:
    assert len(game.distractors) == n
    assert len(set(game.distractors)) == n
    assert game.target not in game.distractors
    for d in game.distractors:
        assert 1 <= feature_diff(game.target, d) <= 2


def test_ten_thousand_games_valid():
    for seed in range(10_000):
        n = (1, 4, 8)[seed % 3]
        _check_game(sample_game(A3DS, n, seed), n)


@given(st.integers(0, 2**63), st.sampled_from([1, 4, 8]))
def test_sampled_games_property(seed, n):
    _check_game(sample_game(A3DS, n, seed), n)


def test_eight_distinct_distractors():
    for seed in range(50):
        _check_game(sample_game(A3DS, 8, seed), 8)


def test_rejects_zero_distractors():
    with pytest.raises(ValueError):
        sample_game(A3DS, 0, 1)


def test_capacity_error():
    tiny = AttributeSchema((Attribute("size", ("small", "medium", "big")),))
    assert neighbourhood_size(tiny) == 2
    _check_game(sample_game(tiny, 2, 0), 2)
    with pytest.raises(CapacityError):
        sample_game(tiny, 3, 0)


def test_neighbourhood_size_a3ds():
    sizes = [6, 6, 6, 3, 2, 2]
    pairs = sum(sizes[i] * sizes[j] for i in range(6) for j in range(i + 1, 6))
    assert neighbourhood_size(A3DS) == sum(sizes) + pairs


def test_json_round_trip():
    game = sample_game(A3DS, 4, seed=3)
    doc = game.to_json()
    assert doc["target"].startswith("The floor is")
    assert len(doc["distractors"]) == 4
    assert ReferenceGame.from_json(doc) == game

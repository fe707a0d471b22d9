"""Mapping module: init conventions, shapes, norms, and gradients."""

import numpy as np
import pytest

from commonground import ops
from commonground.autodiff import ShapeError, Tensor
from commonground.gradcheck import check_params
from commonground.mapping import (
    MappingDims,
    init_params,
    map_sentence,
    map_visual,
    map_words,
)

DIMS = MappingDims(
    level_channels=(5, 6, 7),
    word_layers=3,
    word_dim=8,
    sentence_layers=2,
    sentence_dim=10,
    common_dim=12,
)


def test_init_is_deterministic_per_seed():
    a = init_params(3, DIMS)
    b = init_params(3, DIMS)
    c = init_params(4, DIMS)
    for name, p in a.params.items():
        np.testing.assert_array_equal(p.data, b.params[name].data)
    assert any(
        not np.array_equal(p.data, c.params[name].data) for name, p in a.params.items()
    )


def test_parameter_names_follow_checkpoint_scheme():
    names = set(init_params(0, DIMS).params.names())
    expected = {"word.comb", "sent.comb"}
    for level in (1, 2, 3):
        for i in (1, 2, 3):
            expected |= {f"vis.l{level}.fc{i}.w", f"vis.l{level}.fc{i}.b"}
    for prefix in ("word", "sent"):
        for i in (1, 2):
            expected |= {f"{prefix}.fc{i}.w", f"{prefix}.fc{i}.b"}
    assert names == expected


def test_linear_variants_use_single_layers():
    names = set(init_params(0, DIMS, linear_visual=True, linear_text=True).params.names())
    assert "vis.l1.fc2.w" not in names
    assert "word.fc2.w" not in names
    assert {"vis.l1.fc1.w", "word.fc1.w", "sent.fc1.w", "word.comb", "sent.comb"} <= names


def test_init_values_match_conventions():
    mp = init_params(5, DIMS)
    np.testing.assert_allclose(mp.word_comb.data, np.full(3, 1 / 3), rtol=1e-6)
    np.testing.assert_allclose(mp.sent_comb.data, np.full(2, 1 / 2), rtol=1e-6)
    w = mp.params["vis.l1.fc1.w"]
    bound = np.sqrt(6.0 / (5 + 12))
    assert np.abs(w.data).max() <= bound
    assert w.data.shape == (5, 12)
    assert not np.allclose(w.data, 0)
    np.testing.assert_array_equal(mp.params["vis.l1.fc1.b"].data, 0)


def test_map_visual_shapes_and_norms():
    mp = init_params(1, DIMS)
    rng = np.random.default_rng(0)
    raws = [rng.standard_normal((9, 9, c)).astype(np.float32) for c in DIMS.level_channels]
    out = map_visual(raws, mp, grid_size=4)
    assert out.shape == (16, 3, 12)
    np.testing.assert_allclose(
        np.linalg.norm(out.data, axis=-1), 1.0, atol=1e-5
    )


def test_map_visual_resamples_each_level_to_grid():
    mp = init_params(1, DIMS)
    rng = np.random.default_rng(1)
    # Mixed input resolutions all land on the same grid.
    raws = [
        rng.standard_normal((3, 3, 5)).astype(np.float32),
        rng.standard_normal((8, 8, 6)).astype(np.float32),
        rng.standard_normal((5, 7, 7)).astype(np.float32),
    ]
    out = map_visual(raws, mp, grid_size=6)
    assert out.shape == (36, 3, 12)


def test_map_visual_validates_levels_and_channels():
    mp = init_params(1, DIMS)
    rng = np.random.default_rng(2)
    good = [rng.standard_normal((4, 4, c)).astype(np.float32) for c in DIMS.level_channels]
    with pytest.raises(ShapeError):
        map_visual(good[:2], mp, grid_size=4)
    bad = list(good)
    bad[1] = rng.standard_normal((4, 4, 9)).astype(np.float32)
    with pytest.raises(ShapeError, match="channels"):
        map_visual(bad, mp, grid_size=4)


def test_map_words_rows_unit_norm():
    mp = init_params(2, DIMS)
    stack = np.random.default_rng(3).standard_normal((4, 3, 8)).astype(np.float32)
    out = map_words(stack, mp)
    assert out.shape == (4, 12)
    np.testing.assert_allclose(np.linalg.norm(out.data, axis=-1), 1.0, atol=1e-5)


def test_map_words_validates_stack_shape():
    mp = init_params(2, DIMS)
    with pytest.raises(ShapeError):
        map_words(np.zeros((3, 8), dtype=np.float32), mp)
    with pytest.raises(ShapeError):
        map_words(np.zeros((4, 2, 8), dtype=np.float32), mp)


def test_map_sentence_unit_vector():
    mp = init_params(2, DIMS)
    dirs = np.random.default_rng(4).standard_normal((2, 10)).astype(np.float32)
    out = map_sentence(dirs, mp)
    assert out.shape == (12,)
    assert np.linalg.norm(out.data) == pytest.approx(1.0, abs=1e-5)


def test_weight_squares_counts_only_weight_matrices():
    mp = init_params(6, DIMS)
    got = float(mp.weight_squares().data)
    want = sum(
        float(np.sum(p.data.astype(np.float64) ** 2))
        for name, p in mp.params.items()
        if name.endswith(".w")
    )
    assert got == pytest.approx(want, rel=1e-5)
    # Combination vectors and biases stay out of the penalty.
    assert not any(
        name.endswith(".comb") or name.endswith(".b")
        for name in mp.params.names()
        if not name.endswith((".w", ".b", ".comb"))
    )


def test_mapping_gradients_match_finite_differences():
    dims = MappingDims(
        level_channels=(3, 4),
        word_layers=2,
        word_dim=5,
        sentence_layers=2,
        sentence_dim=6,
        common_dim=4,
    )
    mp = init_params(7, dims, dtype=np.float64)
    rng = np.random.default_rng(8)
    raws = [rng.standard_normal((3, 3, c)) for c in dims.level_channels]
    words = rng.standard_normal((2, 2, 5))
    dirs = rng.standard_normal((2, 6))
    wv = Tensor(rng.standard_normal((4, 2, 4)), dtype=np.float64)
    ww = Tensor(rng.standard_normal((2, 4)), dtype=np.float64)
    ws = Tensor(rng.standard_normal(4), dtype=np.float64)

    def loss():
        v = map_visual(raws, mp, grid_size=2)
        w = map_words(words, mp)
        s = map_sentence(dirs, mp)
        return ops.add(
            ops.add(
                ops.reduce_sum(ops.mul(v, wv)),
                ops.reduce_sum(ops.mul(w, ww)),
            ),
            ops.reduce_sum(ops.mul(s, ws)),
        )

    errors = check_params(loss, mp.params)
    worst = max(errors.values())
    assert worst <= 1e-4, errors

import numpy as np
import pytest

from dualdenoise import (
    ConvSpec,
    DualDenoiseError,
    ImageTensor,
    PatchMatrix,
    apply_masks,
    enumerate_patterns_exact,
    extract_patches,
    load_patterns,
    matrix_rank,
    pattern_count_bound,
    sample_patterns,
    save_patterns,
)
from dualdenoise.patterns import activation_masks


def synth_patches(rows):
    rows = np.asarray(rows, dtype=np.float64)
    return PatchMatrix(rows=rows, origin=np.zeros((rows.shape[0], 3), dtype=int))


def test_all_zero_rows_collapse_to_one_pattern():
    pm = synth_patches(np.zeros((5, 3)))
    ps = sample_patterns(pm, 50, seed=0)
    assert ps.count == 1
    np.testing.assert_array_equal(ps.masks_for(pm), np.ones((5, 1), dtype=bool))


def test_scalar_patches_give_two_sign_patterns():
    pm = synth_patches(np.array([[-1.0], [2.0], [3.0]]))
    ps = sample_patterns(pm, 200, seed=1)
    masks = {tuple(col) for col in ps.masks_for(pm).T.astype(int)}
    assert masks == {(0, 1, 1), (1, 0, 0)}


def test_sampling_is_deterministic():
    rng = np.random.default_rng(9)
    pm = synth_patches(rng.standard_normal((6, 4)))
    a = sample_patterns(pm, 64, seed=7)
    b = sample_patterns(pm, 64, seed=7)
    np.testing.assert_array_equal(a.generators, b.generators)
    c = sample_patterns(pm, 64, seed=8)
    assert not np.array_equal(a.generators, c.generators)


def test_enumeration_matches_angle_sweep_in_2d():
    rng = np.random.default_rng(3)
    rows = rng.standard_normal((4, 2))
    pm = synth_patches(rows)
    found = enumerate_patterns_exact(pm, 100000)
    thetas = np.linspace(0.0, 2.0 * np.pi, 400001)[:-1]
    dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    sweep = {tuple(m) for m in (dirs @ rows.T >= 0).astype(int)}
    ours = {tuple(col) for col in found.masks_for(pm).T.astype(int)}
    assert ours == sweep
    assert found.count == 8  # 2 * P cells of a central line arrangement


def test_enumeration_scalar_case():
    pm = synth_patches(np.array([[-1.0], [2.0], [3.0]]))
    assert enumerate_patterns_exact(pm, 100000).count == 2


def test_enumeration_preconditions():
    pm = synth_patches(np.random.default_rng(0).standard_normal((65, 2)))
    with pytest.raises(DualDenoiseError):
        enumerate_patterns_exact(pm, 100000)
    small = synth_patches(np.ones((3, 2)))
    with pytest.raises(DualDenoiseError):
        enumerate_patterns_exact(small, 99)


def test_pattern_count_bound_values():
    assert pattern_count_bound(2, 1) == pytest.approx(2.0 * np.e)
    assert pattern_count_bound(11, 1) == pytest.approx(20.0 * np.e)
    with pytest.raises(DualDenoiseError):
        pattern_count_bound(10, 0)


@pytest.mark.parametrize("seed", range(6))
def test_enumerated_count_within_bound(seed):
    rng = np.random.default_rng(seed)
    img = ImageTensor(rng.standard_normal((1, 3, 3)))
    k = [1, 2][seed % 2]
    pm = extract_patches(img, ConvSpec(k))
    found = enumerate_patterns_exact(pm, 100000)
    bound = pattern_count_bound(pm.row_count, matrix_rank(pm.rows))
    assert found.count <= bound


def test_rank_one_instances_have_exactly_two_patterns():
    rng = np.random.default_rng(11)
    for trial in range(5):
        img = ImageTensor(rng.standard_normal((1, 2, 3)))
        pm = extract_patches(img, ConvSpec(1))
        assert matrix_rank(pm.rows) == 1
        assert enumerate_patterns_exact(pm, 100000).count == 2


def test_apply_masks_trivial_cases():
    rng = np.random.default_rng(4)
    pm = synth_patches(rng.standard_normal((6, 3)))
    ps = sample_patterns(pm, 32, seed=2)
    zeros = np.zeros((ps.count, 3))
    np.testing.assert_array_equal(apply_masks(ps, pm, zeros), np.zeros(6))


def test_apply_masks_identity_mask_reproduces_matmul():
    rng = np.random.default_rng(5)
    rows = np.abs(rng.standard_normal((5, 3))) + 0.1
    pm = synth_patches(rows)
    # positive generator on positive rows: all-ones mask
    from dualdenoise import SignPatternSet

    ps = SignPatternSet(generators=np.ones((1, 3)))
    w = rng.standard_normal((1, 3))
    np.testing.assert_allclose(apply_masks(ps, pm, w), rows @ w[0], rtol=0, atol=0)


def test_on_the_fly_masks_equal_materialized_bit_for_bit():
    rng = np.random.default_rng(6)
    pm = synth_patches(rng.standard_normal((12, 4)))
    ps = sample_patterns(pm, 64, seed=3)
    assert ps.masks is not None
    w = rng.standard_normal((ps.count, 4))
    cached = apply_masks(ps, pm, w)
    from dualdenoise import SignPatternSet

    bare = SignPatternSet(generators=ps.generators)  # no cache
    recomputed = apply_masks(bare, pm, w)
    np.testing.assert_array_equal(cached, recomputed)  # 0 ULP


def test_mask_recomputation_idempotent_and_self_feasible():
    rng = np.random.default_rng(8)
    pm = synth_patches(rng.standard_normal((10, 4)))
    ps = sample_patterns(pm, 40, seed=4)
    m1 = activation_masks(pm.rows, ps.generators)
    m2 = activation_masks(pm.rows, ps.generators)
    np.testing.assert_array_equal(m1, m2)
    np.testing.assert_array_equal(m1, ps.masks_for(pm))
    # each generator is feasible for its own cone: (2D - I) Y' g >= 0
    scores = pm.rows @ ps.generators.T
    sigma = np.where(m1, 1.0, -1.0)
    assert np.min(sigma * scores) >= 0.0


def test_draw_prefix_subsets_are_nested():
    rng = np.random.default_rng(10)
    pm = synth_patches(rng.standard_normal((10, 4)))
    master = sample_patterns(pm, 512, seed=5)
    small = sample_patterns(pm, 128, seed=5)
    prefix = master.prefix_by_draws(128)
    np.testing.assert_array_equal(prefix.generators, small.generators)


def test_pattern_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    pm = synth_patches(rng.standard_normal((8, 4)))
    ps = sample_patterns(pm, 32, seed=6)
    path = tmp_path / "patterns.bin"
    save_patterns(path, ps)
    again = load_patterns(path)
    np.testing.assert_array_equal(again.generators, ps.generators)
    with pytest.raises(DualDenoiseError):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"nope")
        load_patterns(bad)

import numpy as np
import pytest

from dualdenoise import (
    ConvSpec,
    DualDenoiseError,
    ImageTensor,
    conv2d_direct,
    extract_patches,
    flatten_targets,
    unflatten,
)


def test_image_tensor_validation():
    with pytest.raises(DualDenoiseError):
        ImageTensor(np.zeros((2, 2)))
    with pytest.raises(DualDenoiseError):
        ImageTensor(np.full((1, 2, 2), np.nan))
    t = ImageTensor(np.zeros((2, 3, 4)))
    assert (t.count, t.height, t.width) == (2, 3, 4)


def test_conv_spec_padding():
    s = ConvSpec(3)
    assert (s.pad_before, s.pad_after) == (1, 1)
    assert s.self_index == 4
    s2 = ConvSpec(2)
    assert (s2.pad_before, s2.pad_after) == (0, 1)
    assert s2.self_index == 0
    with pytest.raises(DualDenoiseError):
        ConvSpec(0)


def test_extract_patches_k1_identity():
    img = ImageTensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    pm = extract_patches(img, ConvSpec(1))
    assert pm.rows.shape == (4, 1)
    np.testing.assert_array_equal(pm.rows[:, 0], [1.0, 2.0, 3.0, 4.0])


def test_extract_patches_full_padding():
    img = ImageTensor(np.array([[[5.0]]]))
    pm = extract_patches(img, ConvSpec(3))
    assert pm.rows.shape == (1, 9)
    expected = np.zeros(9)
    expected[4] = 5.0
    np.testing.assert_array_equal(pm.rows[0], expected)


def test_patches_match_direct_convolution():
    rng = np.random.default_rng(3)
    img = ImageTensor(rng.standard_normal((1, 4, 4)))
    spec = ConvSpec(3)
    pm = extract_patches(img, spec)
    filt = rng.standard_normal(9)
    direct = conv2d_direct(img, filt, spec)
    assert np.max(np.abs(pm.rows @ filt - flatten_targets(direct))) < 1e-10


@pytest.mark.parametrize("kernel", [1, 2, 3, 5])
def test_conv_oracle_identity_property(kernel):
    rng = np.random.default_rng(kernel)
    img = ImageTensor(rng.standard_normal((2, 5, 6)))
    spec = ConvSpec(kernel)
    pm = extract_patches(img, spec)
    filt = rng.standard_normal(kernel * kernel)
    direct = conv2d_direct(img, filt, spec)
    assert np.max(np.abs(pm.rows @ filt - flatten_targets(direct))) < 1e-12
    assert pm.row_count == flatten_targets(img).size


def test_conv_delta_and_zero_filters():
    rng = np.random.default_rng(5)
    img = ImageTensor(rng.standard_normal((1, 3, 3)))
    spec = ConvSpec(3)
    delta = np.zeros(9)
    delta[4] = 1.0
    np.testing.assert_allclose(conv2d_direct(img, delta, spec).data, img.data)
    assert np.all(conv2d_direct(img, np.zeros(9), spec).data == 0)


def test_conv_box_filter_overlap_counts():
    img = ImageTensor(np.ones((1, 3, 3)))
    out = conv2d_direct(img, np.ones(9), ConvSpec(3)).data[0]
    expected = np.array([[4.0, 6.0, 4.0], [6.0, 9.0, 6.0], [4.0, 6.0, 4.0]])
    np.testing.assert_array_equal(out, expected)


def test_conv_rejects_bad_filter_length():
    img = ImageTensor(np.ones((1, 3, 3)))
    with pytest.raises(DualDenoiseError):
        conv2d_direct(img, np.ones(8), ConvSpec(3))


def test_flatten_round_trip_and_order():
    img = ImageTensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    np.testing.assert_array_equal(flatten_targets(img), [1.0, 2.0, 3.0, 4.0])
    rng = np.random.default_rng(0)
    x = ImageTensor(rng.standard_normal((3, 4, 5)))
    again = unflatten(flatten_targets(x), 3, 4, 5)
    np.testing.assert_array_equal(again.data, x.data)


def test_flatten_concatenates_images_in_order():
    a = np.arange(4.0).reshape(1, 2, 2)
    b = 10 + np.arange(4.0).reshape(1, 2, 2)
    both = ImageTensor(np.concatenate([a, b]))
    flat = flatten_targets(both)
    np.testing.assert_array_equal(flat[:4], a.ravel())
    np.testing.assert_array_equal(flat[4:], b.ravel())


def test_border_rows_contain_zero_padding():
    rng = np.random.default_rng(1)
    img = ImageTensor(rng.standard_normal((1, 4, 4)) + 10.0)  # strictly nonzero
    pm = extract_patches(img, ConvSpec(3))
    # top-left pixel: first row and first column of its window are padding
    first = pm.rows[0].reshape(3, 3)
    assert np.all(first[0, :] == 0) and np.all(first[:, 0] == 0)
    assert first[1, 1] == img.data[0, 0, 0]
    # interior pixel has no padding
    interior = pm.rows[5].reshape(3, 3)
    assert np.all(interior != 0)


def test_self_index_column_is_own_pixel():
    rng = np.random.default_rng(2)
    img = ImageTensor(rng.standard_normal((2, 4, 3)))
    for k in (1, 2, 3):
        pm = extract_patches(img, ConvSpec(k))
        np.testing.assert_array_equal(
            pm.rows[:, pm.self_index], flatten_targets(img)
        )

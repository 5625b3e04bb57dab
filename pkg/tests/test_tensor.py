import numpy as np
import pytest

from bineeg import tensor
from bineeg.errors import InvalidShape, InvalidValue


def test_create_zero_fill():
    t = tensor.create((2, 3, 1), 0.0)
    assert t.shape == (2, 3, 1)
    assert np.array_equal(t.data, np.zeros((2, 3, 1), dtype=np.float32))


def test_create_singleton():
    t = tensor.create((1, 1, 1), 7.5)
    assert t.data.ravel().tolist() == [7.5]


def test_create_input_window_shape():
    t = tensor.create((16, 8000, 1), 0.0)
    assert t.shape == (16, 8000, 1)
    assert t.data.size == 128000
    assert not t.data.any()


@pytest.mark.parametrize("shape", [(0, 3, 1), (2, 0, 1), (2, 3, 0)])
def test_create_rejects_zero_dimension(shape):
    with pytest.raises(InvalidShape):
        tensor.create(shape)


def test_create_rejects_non_finite_fill():
    with pytest.raises(InvalidValue):
        tensor.create((1, 1, 1), float("nan"))


def test_mean_over_both_axes_hand_sum():
    t = tensor.DenseTensor(np.array([1.0, 2.0, 3.0, 4.0]).reshape(2, 2, 1))
    out = tensor.mean_over(t, {"electrode", "time"})
    assert out.shape == (1, 1, 1)
    # oracle: (1+2+3+4)/4
    assert out.data.ravel()[0] == pytest.approx(2.5)


def test_mean_over_constant_is_constant():
    t = tensor.create((3, 5, 2), -1.25)
    for axes in ({"time"}, {"electrode"}, {"electrode", "time"}):
        out = tensor.mean_over(t, axes)
        assert np.all(out.data == np.float32(-1.25))


def test_mean_over_time_per_map_oracle():
    rng = np.random.default_rng(7)
    vals = rng.normal(size=(1, 4, 2)).astype(np.float32)
    t = tensor.DenseTensor(vals)
    out = tensor.mean_over(t, {"time"})
    assert out.shape == (1, 1, 2)
    # independent oracle: explicit per-map summation
    for m in range(2):
        acc = 0.0
        for i in range(4):
            acc += float(vals[0, i, m])
        assert out.data[0, 0, m] == pytest.approx(acc / 4, rel=1e-6)


def test_mean_over_rejects_empty_and_unknown_axes():
    t = tensor.create((2, 2, 1))
    with pytest.raises(InvalidValue):
        tensor.mean_over(t, set())
    with pytest.raises(InvalidValue):
        tensor.mean_over(t, {"maps"})


def test_row_major_layout_exhaustive_small_shapes():
    for shape in [(1, 1, 1), (2, 3, 1), (3, 2, 4), (4, 1, 2)]:
        e, s, m = shape
        t = tensor.DenseTensor(np.arange(e * s * m, dtype=np.float32).reshape(shape))
        flat = t.data.ravel()
        for ei in range(e):
            for ti in range(s):
                for mi in range(m):
                    assert flat[t.flat_index(ei, ti, mi)] == t.data[ei, ti, mi]


def test_mean_over_is_linear():
    rng = np.random.default_rng(21)
    for _ in range(20):
        shape = tuple(rng.integers(1, 6, size=3))
        x = tensor.DenseTensor(rng.normal(size=shape).astype(np.float32))
        y = tensor.DenseTensor(rng.normal(size=shape).astype(np.float32))
        a, b = rng.normal(size=2)
        combined = tensor.DenseTensor(a * x.data + b * y.data)
        for axes in ({"time"}, {"electrode"}, {"electrode", "time"}):
            lhs = tensor.mean_over(combined, axes).data
            rhs = a * tensor.mean_over(x, axes).data + b * tensor.mean_over(y, axes).data
            np.testing.assert_allclose(lhs, rhs, rtol=1e-6, atol=1e-6)

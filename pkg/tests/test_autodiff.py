import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmfilter import autodiff as ad
from mmfilter.exceptions import ConfigError, ContractError, DimensionError

from gradcheck import OPS, max_rel_error, numeric_grad


def test_matmul_identity():
    out = ad.matmul(ad.Value([[1, 0], [0, 1]]), ad.Value([[2], [3]]))
    np.testing.assert_array_equal(out.data, [[2], [3]])


def test_matmul_hand_product():
    out = ad.matmul(ad.Value([[1, 2]]), ad.Value([[3], [4]]))
    np.testing.assert_array_equal(out.data, [[11]])


def test_matmul_gradient_matches_finite_differences():
    a = ad.Value([[1.0, 2.0]], requires_grad=True)
    b = ad.Value([[3.0], [4.0]], requires_grad=True)
    ad.backward(ad.sum(ad.matmul(a, b)))
    numeric = numeric_grad(lambda xs: float(np.sum(xs[0] @ xs[1])), [a.data, b.data], 0)
    np.testing.assert_allclose(numeric, [[3.0, 4.0]], atol=1e-8)
    np.testing.assert_allclose(a.grad, numeric, atol=1e-8)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(ad.Value(np.ones((2, 3))), ad.Value(np.ones((2, 3))))


def test_binary_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.add(ad.Value(np.ones(3)), ad.Value(np.ones(2)))


def test_rank_limit():
    with pytest.raises(DimensionError):
        ad.Value(np.zeros((1, 1, 1, 1)))


def test_relu_sign_cases():
    np.testing.assert_array_equal(ad.relu(ad.Value([-1.0, 0.0, 2.0])).data, [0, 0, 2])


def test_relu_subgradient_at_zero_is_zero():
    x = ad.Value([0.0], requires_grad=True)
    ad.backward(ad.sum(ad.relu(x)))
    assert x.grad[0] == 0.0


def test_sigmoid_at_zero():
    assert ad.sigmoid(ad.Value(0.0)).data == 0.5


def test_sigmoid_derivative_at_zero():
    x = ad.Value(0.0, requires_grad=True)
    ad.backward(ad.sigmoid(x))
    numeric = numeric_grad(lambda xs: float(1 / (1 + np.exp(-xs[0]))), [np.array(0.0)], 0)
    assert numeric == pytest.approx(0.25, abs=1e-8)
    assert x.grad == pytest.approx(numeric, abs=1e-8)


def test_softmax_scaled_equal_logits():
    np.testing.assert_allclose(ad.softmax_scaled(ad.Value([0.0, 0.0]), 1000).data, [0.5, 0.5])


def test_softmax_scaled_saturates():
    s = ad.softmax_scaled(ad.Value([1.0, 0.0]), 1000).data
    expected = 1.0 / (1.0 + np.exp(-1000.0))
    assert abs(s[0] - expected) < 1e-12
    assert abs(s[1] - (1 - expected)) < 1e-12


def test_softmax_scaled_unit_scale():
    s = ad.softmax_scaled(ad.Value([1.0, 0.0]), 1.0).data
    np.testing.assert_allclose(s, [0.7311, 0.2689], atol=1e-4)


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_softmax_scaled_rejects_nonpositive_scale(lam):
    with pytest.raises(ConfigError):
        ad.softmax_scaled(ad.Value([1.0, 0.0]), lam)


@settings(max_examples=200, deadline=None)
@given(
    z=arrays(np.float64, st.integers(2, 6), elements=st.floats(-50, 50)),
    lam=st.floats(1e-3, 1e3),
)
def test_softmax_scaled_is_a_distribution(z, lam):
    s = ad.softmax_scaled(ad.Value(z), lam).data
    assert abs(s.sum() - 1.0) <= 1e-12
    assert np.all(s >= 0) and np.all(s <= 1)


@settings(max_examples=100, deadline=None)
@given(z=arrays(np.float64, 2, elements=st.floats(-1, 1)), lam=st.floats(0.1, 10))
def test_softmax_scaled_open_interval_for_moderate_logits(z, lam):
    s = ad.softmax_scaled(ad.Value(z), lam).data
    assert np.all(s > 0) and np.all(s < 1)


def test_backward_sum():
    x = ad.Value([1.0, 2.0, 3.0], requires_grad=True)
    ad.backward(ad.sum(x))
    np.testing.assert_array_equal(x.grad, [1, 1, 1])


def test_backward_relu_subgradient():
    x = ad.Value([-1.0, 2.0], requires_grad=True)
    ad.backward(ad.sum(ad.relu(x)))
    np.testing.assert_array_equal(x.grad, [0, 1])


def test_backward_requires_scalar():
    with pytest.raises(ContractError):
        ad.backward(ad.Value([1.0, 2.0], requires_grad=True) * 2.0)


def test_backward_accumulates_without_zeroing():
    x = ad.Value([1.0, 2.0], requires_grad=True)
    loss = ad.sum(ad.scale(x, 3.0))
    ad.backward(loss)
    ad.backward(loss)
    np.testing.assert_array_equal(x.grad, [6.0, 6.0])


def test_diamond_graph_accumulates_both_paths():
    # f(x) = (x*x) + sigmoid(x*x) shares x*x; f' = 2x + sigmoid'(x^2) * 2x
    x = ad.Value(0.7, requires_grad=True)
    shared = x * x
    ad.backward(shared + ad.sigmoid(shared))
    s = 1 / (1 + np.exp(-0.49))
    assert x.grad == pytest.approx(2 * 0.7 + s * (1 - s) * 2 * 0.7, rel=1e-12)


def test_detach_identity_and_zero_grad():
    x = ad.Value([1.5, -2.0], requires_grad=True)
    d = ad.detach(x)
    np.testing.assert_array_equal(d.data, x.data)
    assert not d.requires_grad
    ad.backward(ad.sum(x * d))
    np.testing.assert_array_equal(d.grad, [0.0, 0.0])


def test_detach_product_rule():
    x = ad.Value(3.0, requires_grad=True)
    ad.backward(x * ad.detach(x))
    assert x.grad == 3.0


# --- gradient checks over every op ------------------------------------------------

@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradient_check(name, rng):
    build, shapes = OPS[name]
    probes = 0
    for _ in range(5):
        inputs = [rng.uniform(-2, 2, size=s) for s in shapes]
        assert max_rel_error(build, inputs) < 1e-4
        probes += sum(int(np.prod(s)) for s in shapes)
    assert probes >= 20


def test_gradient_check_total_probe_count():
    total = sum(5 * sum(int(np.prod(s)) for s in shapes) for _, shapes in OPS.values())
    assert total >= 100


# --- parameter store ------------------------------------------------------------


def test_param_store_roundtrip_bit_equal(rng):
    store = ad.ParamStore()
    store.add("a.weight", rng.normal(size=(3, 4)))
    store.add("a.bias", rng.normal(size=4))
    store.add("z", rng.normal(size=(2, 2, 2)))
    buf = io.BytesIO()
    store.save(buf)
    buf.seek(0)
    loaded = ad.ParamStore.load(buf)
    assert list(loaded) == list(store)
    for name in store:
        assert loaded[name].data.tobytes() == store[name].data.tobytes()


def test_param_store_rejects_duplicates():
    store = ad.ParamStore()
    store.add("w", np.zeros(2))
    with pytest.raises(ConfigError):
        store.add("w", np.zeros(2))

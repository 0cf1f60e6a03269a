from __future__ import annotations

import json

import numpy as np
import numpy.testing as npt
import pytest

from precursormil import CheckpointError, ConfigInvalid, NonFiniteLoss
from precursormil.engine import (
    Adam,
    AdamState,
    Conv1D,
    Tensor,
    adam_step,
    backward,
    batch_norm,
    binary_cross_entropy,
    conv1d,
    dump_checkpoint,
    gradcheck,
    gru,
    linear,
    max_over_time,
    mul,
    no_grad,
    read_checkpoint,
    same_padding,
    sigmoid,
)
from precursormil.model import MHCNNRNN


def param(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(scale * rng.normal(size=shape), requires_grad=True)


def projected(out: Tensor, weights: np.ndarray) -> Tensor:
    return mul(out, Tensor(weights)).sum()


def assert_gradients_match(errors, *, bulk=1e-4, worst=1e-3):
    flat = np.concatenate([e.reshape(-1) for e in errors])
    assert np.mean(flat < bulk) >= 0.99, np.sort(flat)[-5:]
    assert flat.max() < worst


def test_gradcheck_conv1d(rng):
    x, w, b = param(rng, 2, 2, 3, 7), param(rng, 2, 4, 3, 3), param(rng, 2, 4)
    weights = rng.normal(size=(2, 2, 4, 7))
    assert_gradients_match(gradcheck(lambda: projected(conv1d(x, w, b), weights), [x, w, b]))


def test_gradcheck_conv1d_even_kernel(rng):
    x, w, b = param(rng, 2, 1, 2, 6), param(rng, 1, 3, 2, 2), param(rng, 1, 3)
    weights = rng.normal(size=(2, 1, 3, 6))
    assert_gradients_match(gradcheck(lambda: projected(conv1d(x, w, b), weights), [x, w, b]))


@pytest.mark.parametrize('training', [True, False])
def test_gradcheck_batch_norm(rng, training):
    x = param(rng, 3, 2, 2, 5)
    gamma, beta = param(rng, 2, 2), param(rng, 2, 2)
    running_mean, running_var = rng.normal(size=(2, 2)), rng.uniform(0.5, 2.0, size=(2, 2))
    weights = rng.normal(size=(3, 2, 2, 5))

    def loss() -> Tensor:
        out = batch_norm(
            x, gamma, beta, running_mean.copy(), running_var.copy(),
            training=training, momentum=0.1, eps=1e-5,
        )
        return projected(out, weights)

    assert_gradients_match(gradcheck(loss, [x, gamma, beta]))


def test_gradcheck_gru(rng):
    x = param(rng, 2, 5, 3)
    w_ih, w_hh = param(rng, 3, 12, scale=0.5), param(rng, 4, 12, scale=0.5)
    b_ih, b_hh = param(rng, 12, scale=0.5), param(rng, 12, scale=0.5)
    weights = rng.normal(size=(2, 5, 4))
    tensors = [x, w_ih, w_hh, b_ih, b_hh]
    assert_gradients_match(gradcheck(lambda: projected(gru(*tensors), weights), tensors))


def test_gradcheck_linear(rng):
    x, w, b = param(rng, 2, 5, 3), param(rng, 3, 4), param(rng, 4)
    weights = rng.normal(size=(2, 5, 4))
    assert_gradients_match(gradcheck(lambda: projected(linear(x, w, b), weights), [x, w, b]))


def test_gradcheck_max_over_time(rng):
    x = param(rng, 3, 6, 2)
    weights = rng.normal(size=(3, 2))
    assert_gradients_match(gradcheck(lambda: projected(max_over_time(x)[0], weights), [x]))


def test_gradcheck_binary_cross_entropy(rng):
    z = param(rng, 4, 3)
    target = rng.integers(0, 2, size=(4, 3)).astype(float)
    assert_gradients_match(gradcheck(lambda: binary_cross_entropy(sigmoid(z), target), [z]))


def test_gradcheck_full_network(tiny_config, rng):
    network = MHCNNRNN(tiny_config, num_features=3, length=16)
    x = Tensor(rng.normal(size=(2, 16, 3)), requires_grad=True)
    target = np.array([0.0, 1.0])

    errors = gradcheck(lambda: binary_cross_entropy(network(x).bag, target), [x, *network.parameters()])
    assert_gradients_match(errors)


def test_conv1d_preserves_length_and_isolates_heads(rng):
    layer = Conv1D(1, 3, 4, heads=2, rng=rng)
    x = rng.normal(size=(1, 2, 1, 9))
    before = layer(Tensor(x)).data
    x[:, 1] += 5.0
    after = layer(Tensor(x)).data

    assert before.shape == (1, 2, 3, 9)
    npt.assert_array_equal(before[:, 0], after[:, 0])
    assert not np.allclose(before[:, 1], after[:, 1])
    assert same_padding(4) == (1, 2)


def test_no_grad_records_nothing(rng):
    w = param(rng, 3)
    with no_grad():
        out = mul(w, Tensor(np.ones(3))).sum()
    assert not out.requires_grad
    assert out.is_leaf


def test_backward_rejects_non_finite_loss():
    w = Tensor(np.array([np.inf]), requires_grad=True)
    with pytest.raises(NonFiniteLoss):
        backward(w.sum())


def test_backward_zero_fills_unreached_parameters(rng):
    used, unused = param(rng, 2), param(rng, 3)
    backward((used * 2.0).sum(), [used, unused])
    npt.assert_array_equal(used.grad, [2.0, 2.0])
    npt.assert_array_equal(unused.grad, np.zeros(3))


def test_adam_first_step_moves_by_learning_rate():
    w = Tensor(np.array([1.0, -1.0, 3.0]), requires_grad=True)
    state = AdamState(learning_rate=0.1)
    adam_step(state, {'w': w}, {'w': np.array([0.5, -2.0, 0.0])})

    # bias corrected first step is lr * g / (|g| + eps)
    npt.assert_allclose(w.data, [0.9, -0.9, 3.0], atol=1e-6)
    assert state.step == 1


def test_adam_coupled_weight_decay():
    w = Tensor(np.array([2.0]), requires_grad=True)
    state = AdamState(learning_rate=0.01, weight_decay=0.1)
    adam_step(state, {'w': w}, {'w': np.array([0.0])})
    npt.assert_allclose(state.m['w'], [0.1 * 0.2])
    npt.assert_allclose(w.data, [1.99], atol=1e-6)


def test_adam_second_step_matches_hand_computation():
    w = Tensor(np.array([0.0]), requires_grad=True)
    state = AdamState(learning_rate=1.0, eps=0.0)
    adam_step(state, {'w': w}, {'w': np.array([1.0])})
    adam_step(state, {'w': w}, {'w': np.array([3.0])})

    m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0
    v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0
    expected = -1.0 - (m / (1 - 0.9 ** 2)) / np.sqrt(v / (1 - 0.999 ** 2))
    npt.assert_allclose(w.data, [expected], rtol=1e-12)


def test_adam_validates_hyperparameters():
    with pytest.raises(ConfigInvalid):
        AdamState(learning_rate=0.0)
    with pytest.raises(ConfigInvalid):
        Adam([], weight_decay=-1.0)


def test_optimizer_uses_parameter_gradients(rng):
    w = param(rng, 4)
    optimizer = Adam([('w', w)], learning_rate=0.01)
    start = w.data.copy()
    backward((w * w).sum(), [w])
    optimizer.step()
    optimizer.zero_grad()

    npt.assert_allclose(w.data, start - 0.01 * np.sign(start), atol=1e-6)
    assert w.grad is None


def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    arrays = {'a': rng.normal(size=(3, 4)), 'b': np.array([np.pi, -0.0, 1e-300])}
    meta = {'kind': 'binary', 'classes': ['HighSpeed']}

    first = dump_checkpoint(tmp_path / 'one.json', meta, arrays)
    second = dump_checkpoint(tmp_path / 'two.json', dict(reversed(list(meta.items()))), arrays)
    loaded_meta, loaded = read_checkpoint(first)

    assert first.read_bytes() == second.read_bytes()
    assert loaded_meta == meta
    for name, value in arrays.items():
        assert loaded[name].tobytes() == value.tobytes()


def test_checkpoint_version_is_checked(tmp_path):
    path = dump_checkpoint(tmp_path / 'c.json', {}, {})
    document = json.loads(path.read_text())
    document['format_version'] = 999
    path.write_text(json.dumps(document))

    with pytest.raises(CheckpointError):
        read_checkpoint(path)
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / 'missing.json')

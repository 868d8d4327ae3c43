import itertools

import numpy as np
import pytest

from neighbor2seq.autodiff import ops
from neighbor2seq.autodiff.gradcheck import model_grad_check
from neighbor2seq.models import (Model, ModelConfig, parameter_count, parameter_shapes,
                                 predict)


def make(head="attn", L=3, d=5, h=4, c=3, pe=True, k=3, dropout=0.0, task="single-label",
         seed=0):
    cfg = ModelConfig(head, L, d, h, c, kernel_size=k, use_positional_encoding=pe,
                      dropout_rate=dropout, task=task)
    return Model(cfg, seed=seed)


def randomize(model, rng):
    for p in model.parameters():
        p.value[...] = rng.standard_normal(p.shape)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig("conv", 2, 3, 4, 2, kernel_size=4)
    with pytest.raises(ValueError):
        ModelConfig("rnn", 2, 3, 4, 2)
    with pytest.raises(ValueError):
        ModelConfig("attn", 2, 3, 0, 2)
    with pytest.raises(ValueError):
        ModelConfig("attn", 2, 3, 4, 2, dropout_rate=1.0)


def test_single_position_attention_reduces_to_trunk(rng):
    model = make("attn", L=0, pe=False)
    randomize(model, rng)
    x = rng.standard_normal((1, 1, 5))
    logits = model.forward(x)
    assert model.last_attention[0, 0] == 1.0
    y, _ = ops.linear_fwd(x, model["trunk.weight"])
    o, _ = ops.seqnorm_fwd(y, model["trunk.gamma"], model["trunk.beta"])
    ref = o[:, 0] @ model["classifier.weight"].T + model["classifier.bias"]
    np.testing.assert_allclose(logits, ref, rtol=1e-13)


def test_single_position_conv_reduces_to_trunk_plus_head(rng):
    model = make("conv", L=0)
    randomize(model, rng)
    x = rng.standard_normal((2, 1, 5))
    y, _ = ops.linear_fwd(x, model["trunk.weight"])
    o, _ = ops.seqnorm_fwd(y, model["trunk.gamma"], model["trunk.beta"])
    # with one position only the centre tap of each kernel sees data
    h = o[:, 0] @ model["conv1.kernel"][:, :, 1].T + model["conv1.bias"]
    h = np.maximum(h, 0) @ model["conv2.kernel"][:, :, 1].T + model["conv2.bias"]
    ref = h @ model["classifier.weight"].T + model["classifier.bias"]
    np.testing.assert_allclose(model.forward(x), ref, rtol=1e-12)


@pytest.mark.parametrize("head", ["conv", "attn"])
def test_inference_is_deterministic(head, rng):
    model = make(head, dropout=0.5)
    x = rng.standard_normal((6, 4, 5))
    assert model.forward(x).tobytes() == model.forward(x).tobytes()


def test_dropout_changes_training_forward(rng):
    model = make("attn", dropout=0.5)
    x = rng.standard_normal((6, 4, 5))
    a = model.forward(x, training=True, rng=np.random.default_rng(0))
    b = model.forward(x, training=False)
    assert not np.allclose(a, b)
    with pytest.raises(ValueError):
        model.forward(x, training=True)


def test_batch_shape_checked(rng):
    with pytest.raises(ValueError, match="batch shape"):
        make().forward(rng.standard_normal((2, 3, 5)))


def permuted_copy(model, perm):
    other = Model(model.config)
    state = model.state_dict()
    for name in ("trunk.weight", "trunk.gamma", "trunk.beta"):
        state[name] = state[name][perm]
    other.load_state_dict(state)
    return other


def test_attention_without_pe_is_jointly_permutation_invariant(rng):
    model = make("attn", L=4, pe=False)
    randomize(model, rng)
    x = rng.standard_normal((5, 5, 5))
    base = model.forward(x)
    for perm in itertools.islice(itertools.permutations(range(5)), 1, None, 7):
        perm = np.array(perm)
        out = permuted_copy(model, perm).forward(x[:, perm])
        assert np.abs(out - base).max() <= 1e-12


def test_attention_with_pe_breaks_joint_permutation_invariance(rng):
    model = make("attn", L=4, pe=True)
    randomize(model, rng)
    x = rng.standard_normal((5, 5, 5))
    base = model.forward(x)
    change = max(np.abs(permuted_copy(model, p).forward(x[:, p]) - base).max()
                 for p in (rng.permutation(5) for _ in range(10)))
    assert change > 1e-3


def test_positional_encoding_can_be_folded_into_beta(rng):
    # trunk.beta sits right before the encoding is added, so at inference
    # "with PE" equals "without PE" after shifting beta by the encoding
    with_pe = make("attn", L=4, pe=True)
    randomize(with_pe, rng)
    without = make("attn", L=4, pe=False)
    state = with_pe.state_dict()
    state["trunk.beta"] = state["trunk.beta"] + with_pe.pe
    without.load_state_dict(state)
    x = rng.standard_normal((7, 5, 5))
    np.testing.assert_allclose(without.forward(x), with_pe.forward(x), rtol=1e-12, atol=1e-12)


def test_conv_preserves_sequence_length(rng):
    model = make("conv", L=5, k=5)
    randomize(model, rng)
    x = rng.standard_normal((2, 6, 5))
    y, _ = ops.linear_fwd(x, model["trunk.weight"])
    h, _ = ops.conv1d_fwd(y, model["conv1.kernel"], model["conv1.bias"])
    h2, _ = ops.conv1d_fwd(h, model["conv2.kernel"], model["conv2.bias"])
    assert h.shape[1] == h2.shape[1] == 6


def test_predict_rules():
    np.testing.assert_array_equal(predict(np.array([[2.0, 1.0, 0.0]])), [0])
    np.testing.assert_array_equal(predict(np.array([[1.0, 3.0, 3.0]])), [1])
    np.testing.assert_array_equal(predict(np.array([[-1.0, 1.0]]), "multi-label"), [[0, 1]])


def test_parameter_count_matches_shapes():
    for head, L, d, h, c, k in itertools.product(["conv", "attn"], [0, 2], [1, 7], [1, 4],
                                                 [2, 5], [1, 3, 5]):
        cfg = ModelConfig(head, L, d, h, c, kernel_size=k)
        by_shape = sum(int(np.prod(s)) for s in parameter_shapes(cfg).values())
        assert parameter_count(cfg) == by_shape == sum(p.size for p in Model(cfg).parameters())


def test_attention_adds_exactly_query():
    conv = ModelConfig("conv", 3, 6, 4, 2, kernel_size=3)
    attn = ModelConfig("attn", 3, 6, 4, 2)
    trunk = 4 * (4 * 6 + 2 * 4) + 2 * 4 + 2
    assert parameter_count(attn) == trunk + 4
    assert parameter_count(conv) == trunk + 2 * (4 * 4 * 3 + 4)


def test_pe_flag_does_not_change_parameter_count():
    a = ModelConfig("attn", 3, 6, 8, 2, use_positional_encoding=True)
    b = ModelConfig("attn", 3, 6, 8, 2, use_positional_encoding=False)
    assert parameter_count(a) == parameter_count(b)


@pytest.mark.parametrize("head,task", [("conv", "single-label"), ("attn", "single-label"),
                                       ("attn", "multi-label"), ("conv", "multi-label")])
def test_model_gradients(head, task, rng):
    model = make(head, L=2, d=3, h=4, c=3, task=task, seed=1)
    randomize(model, rng)
    x = rng.standard_normal((3, 3, 3))
    y = rng.integers(0, 2, size=(3, 3)) if task == "multi-label" else rng.integers(0, 3, size=3)
    assert model_grad_check(model, x, y) < 1e-4


def test_initialization_follows_design(rng):
    model = make("attn", L=2, d=10, h=6, c=3, seed=3)
    limit = np.sqrt(6 / (10 + 6))
    assert np.abs(model["trunk.weight"]).max() <= limit
    np.testing.assert_array_equal(model["trunk.gamma"], 1.0)
    np.testing.assert_array_equal(model["trunk.beta"], 0.0)
    assert 0 < np.std(model["attn.query"]) < 0.3
    assert Model(model.config, seed=3).state_dict()["attn.query"].tobytes() == \
        model["attn.query"].tobytes()


def test_checkpoint_round_trip(tmp_path, rng):
    model = make("conv", L=3)
    randomize(model, rng)
    model.save(tmp_path / "m.n2sc", {"best_epoch": 4})
    back = Model.load(tmp_path / "m.n2sc")
    assert back.config == model.config
    x = rng.standard_normal((3, 4, 5))
    assert back.forward(x).tobytes() == model.forward(x).tobytes()

"""Transformer forward/backward correctness, checkpoints, and presets."""
import numpy as np
import pytest

from cmlm.model import (PRESETS, CHECKPOINT_MAGIC, ModelConfig, ModelError,
                        TransformerModel, forward, init_params,
                        load_checkpoint, loss_and_grad, save_checkpoint,
                        sinusoidal_positions, weighted_loss)
from cmlm.vocab import DEFAULT_VOCAB

V = DEFAULT_VOCAB


def tiny_setup(vocab_size=40, seed=0):
    cfg = ModelConfig(embed_dim=16, ffn_embed_dim=32, layers=2,
                      attention_heads=2, max_positions=32,
                      vocab_size=vocab_size)
    params = init_params(cfg, np.random.default_rng(seed))
    return cfg, params


def test_presets():
    tiny = PRESETS["tiny"]
    small = PRESETS["small"]
    assert (tiny.layers, tiny.embed_dim, tiny.attention_heads,
            tiny.ffn_embed_dim) == (2, 64, 4, 256)
    assert (small.layers, small.embed_dim, small.attention_heads,
            small.ffn_embed_dim) == (4, 128, 8, 512)
    for cfg in (tiny, small):
        assert cfg.normalize_before
        assert cfg.share_input_output_embed
        assert not cfg.learned_positions
        assert cfg.vocab_size == V.total_size


def test_config_rejects_unsupported_variants():
    with pytest.raises(ModelError):
        ModelConfig(normalize_before=False)
    with pytest.raises(ModelError):
        ModelConfig(share_input_output_embed=False)
    with pytest.raises(ModelError):
        ModelConfig(learned_positions=True)
    with pytest.raises(ModelError):
        ModelConfig(embed_dim=30, attention_heads=4)  # not divisible


def test_sinusoidal_positions_half_sin_half_cos():
    pos = sinusoidal_positions(8, 16)
    assert pos.shape == (8, 16)
    np.testing.assert_allclose(pos[0, :8], 0.0, atol=1e-15)   # sin(0)
    np.testing.assert_allclose(pos[0, 8:], 1.0, atol=1e-15)   # cos(0)
    np.testing.assert_allclose(pos[3, 0], np.sin(3.0), rtol=1e-12)
    np.testing.assert_allclose(pos[3, 8], np.cos(3.0), rtol=1e-12)


def test_forward_shapes_and_determinism():
    cfg, params = tiny_setup()
    tokens = [1, 5, 9, 2, 2, 7]
    a = forward(cfg, params, tokens)
    b = forward(cfg, params, tokens)
    assert a.shape == (6, cfg.vocab_size)
    np.testing.assert_array_equal(a, b)


def test_forward_is_strictly_causal():
    cfg, params = tiny_setup()
    tokens = [3, 1, 4, 1, 5, 9, 2, 6]
    base = forward(cfg, params, tokens)
    for j in range(2, len(tokens)):
        bumped = list(tokens)
        bumped[j] = (bumped[j] + 11) % cfg.vocab_size
        out = forward(cfg, params, bumped)
        np.testing.assert_array_equal(out[:j], base[:j])
        assert np.abs(out[j:] - base[j:]).max() > 0


def test_forward_rejects_bad_tokens():
    cfg, params = tiny_setup()
    with pytest.raises(ModelError):
        forward(cfg, params, [])
    with pytest.raises(ModelError):
        forward(cfg, params, [cfg.vocab_size])
    with pytest.raises(ModelError):
        forward(cfg, params, list(range(cfg.max_positions + 1)))


def test_gradcheck_against_central_differences():
    """Analytic gradients vs central finite differences on 100 coordinates.

    eps=1e-4 balances truncation against roundoff in float64; the relative
    error uses |fd|+|an| in the denominator with a 1e-6 floor so that
    near-zero coordinates are judged on absolute error.
    """
    cfg, params = tiny_setup(seed=1)
    rng = np.random.default_rng(2)
    tokens = np.asarray([[4, 9, 1, 7, 3, 8, 2, 5]], dtype=np.int64)
    weights = np.asarray([[0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0]])

    def loss_of(p):
        loss, _ = loss_and_grad(cfg, p, tokens, weights)
        return loss

    _, grads = loss_and_grad(cfg, params, tokens, weights)
    eps = 1e-4
    worst = 0.0
    names = sorted(params)
    for _ in range(100):
        name = names[int(rng.integers(len(names)))]
        flat = params[name].reshape(-1)
        idx = int(rng.integers(flat.size))
        orig = flat[idx]
        flat[idx] = orig + eps
        hi = loss_of(params)
        flat[idx] = orig - eps
        lo = loss_of(params)
        flat[idx] = orig
        fd = (hi - lo) / (2 * eps)
        an = grads[name].reshape(-1)[idx]
        rel = abs(fd - an) / max(abs(fd) + abs(an), 1e-6)
        worst = max(worst, rel)
    assert worst < 1e-4


def test_zero_weight_positions_get_zero_gradient():
    # a sequence whose every target has weight 0 except one: gradient wrt the
    # embedding rows of unused tokens must be exactly zero
    cfg, params = tiny_setup()
    tokens = np.asarray([[1, 2, 3]], dtype=np.int64)
    weights = np.asarray([[0.0, 0.0, 0.0]])
    with pytest.raises(ModelError):
        loss_and_grad(cfg, params, tokens, weights)
    weights = np.asarray([[0.0, 1.0, 0.0]])
    loss, grads = loss_and_grad(cfg, params, tokens, weights)
    assert np.isfinite(loss)


def test_weighted_loss_worked_examples():
    # uniform logits -> ln V regardless of weights; single position recovers
    # its own cross-entropy
    logits = np.zeros((4, 10))
    targets = np.asarray([1, 2, 3, 4])
    w = np.asarray([1.0, 1.0, 1.0, 1.0])
    np.testing.assert_allclose(weighted_loss(logits, targets, w),
                               np.log(10), rtol=1e-12)
    w = np.asarray([0.0, 0.0, 5.0, 0.0])
    np.testing.assert_allclose(weighted_loss(logits, targets, w),
                               np.log(10), rtol=1e-12)
    with pytest.raises(ModelError):
        weighted_loss(logits, targets, np.zeros(4))


def test_loss_and_grad_shifts_targets():
    # loss over [t0 t1 t2]: predictions at positions 0,1 score targets t1,t2;
    # with weights zeroing t2, only the (t0 -> t1) transition contributes
    cfg, params = tiny_setup()
    tokens = np.asarray([[4, 6, 8]], dtype=np.int64)
    weights = np.asarray([[1.0, 1.0, 0.0]])
    loss, _ = loss_and_grad(cfg, params, tokens, weights)
    logits = forward(cfg, params, [4, 6, 8])
    expected = weighted_loss(logits[:1], np.asarray([6]), np.ones(1))
    np.testing.assert_allclose(loss, expected, rtol=1e-12)


def test_single_adam_like_descent_step_reduces_loss():
    cfg, params = tiny_setup(seed=3)
    tokens = np.asarray([[1, 2, 3, 4, 5, 6]], dtype=np.int64)
    weights = np.ones((1, 6))
    loss0, grads = loss_and_grad(cfg, params, tokens, weights)
    for name in params:
        params[name] -= 1e-2 * grads[name]
    loss1, _ = loss_and_grad(cfg, params, tokens, weights)
    assert loss1 < loss0


def test_checkpoint_round_trip(tmp_path):
    cfg, params = tiny_setup(seed=4)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, cfg, params, vocab=V)
    cfg2, params2, vocab_info = load_checkpoint(path)
    assert cfg2 == cfg
    assert sorted(params2) == sorted(params)
    for name in params:
        np.testing.assert_array_equal(params2[name], params[name])
    raw = path.read_bytes()
    assert raw.startswith(CHECKPOINT_MAGIC)


def test_checkpoint_rejects_corruption(tmp_path):
    cfg, params = tiny_setup()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, cfg, params, vocab=V)
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ModelError):
        load_checkpoint(path)


def test_model_logits_wrapper():
    cfg, params = tiny_setup()
    model = TransformerModel(cfg, params)
    out = model.logits([1, 2, 3])
    np.testing.assert_array_equal(out, forward(cfg, params, [1, 2, 3]))

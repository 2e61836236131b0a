import numpy as np
import pytest

from crossnet import autodiff as ad
from crossnet.corpus import Vocabulary
from crossnet.models import (
    Architecture,
    CellParams,
    LstmState,
    ModelConfig,
    ModelParams,
    StanceModel,
    aspect_attention,
    bilstm_encode,
    conditional_encode,
    forward,
    lstm_scan,
    lstm_step,
    predict_head,
)
from crossnet.rng import Rng
from crossnet.training import batch_loss

from oracles import scalar_attention, scalar_lstm_step, scalar_predict_head


def _zero_cell(in_dim, hidden):
    return CellParams(
        wx=ad.constant(np.zeros((in_dim, 4 * hidden))),
        wh=ad.constant(np.zeros((hidden, 4 * hidden))),
        b=ad.constant(np.zeros(4 * hidden)),
    )


def _random_cell(rng, in_dim, hidden, name="cell"):
    return CellParams(
        wx=ad.parameter(rng.normal(0, 0.4, (in_dim, 4 * hidden)), f"{name}.wx"),
        wh=ad.parameter(rng.normal(0, 0.4, (hidden, 4 * hidden)), f"{name}.wh"),
        b=ad.parameter(rng.normal(0, 0.2, 4 * hidden), f"{name}.b"),
    )


def _zero_state(hidden):
    return LstmState(ad.constant(np.zeros(hidden)), ad.constant(np.zeros(hidden)))


def _scalar_scan(xs, wx, wh, b, h0, c0):
    h, c = list(h0), list(c0)
    hs = []
    for x in xs:
        h, c = scalar_lstm_step(list(x), h, c, wx, wh, b)
        hs.append(h)
    return hs, h, c


# ---------------------------------------------------------------------------
# lstm_step
# ---------------------------------------------------------------------------


def test_lstm_step_zero_weights_give_zero_state():
    cell = _zero_cell(3, 4)
    x = ad.constant([0.7, -1.2, 3.0])
    state = lstm_step(x, _zero_state(4), cell)
    assert np.all(state.h.value == 0.0)
    assert np.all(state.c.value == 0.0)


def test_lstm_step_matches_scalar_oracle():
    rng = Rng(21)
    for case in range(100):
        cell = _random_cell(Rng(21 + case), 3, 2)
        x = Rng(500 + case).normal(0, 1, 3)
        h0 = Rng(600 + case).normal(0, 1, 2)
        c0 = Rng(700 + case).normal(0, 1, 2)
        state = lstm_step(ad.constant(x), LstmState(ad.constant(h0), ad.constant(c0)), cell)
        h, c = scalar_lstm_step(
            x.tolist(), h0.tolist(), c0.tolist(),
            cell.wx.value.tolist(), cell.wh.value.tolist(), cell.b.value.tolist(),
        )
        np.testing.assert_allclose(state.h.value, h, atol=1e-12, rtol=0)
        np.testing.assert_allclose(state.c.value, c, atol=1e-12, rtol=0)


def test_lstm_step_gradient_vs_finite_differences():
    rng = Rng(22)
    cell = _random_cell(rng, 3, 3)
    x = ad.constant(rng.normal(0, 1, 3))

    def f():
        state = lstm_step(x, _zero_state(3), cell)
        return ad.vsum(state.h)

    err = ad.gradient_check(f, cell.nodes(), epsilon=1e-6)
    assert err < 1e-6


def test_lstm_step_rejects_dimension_mismatch():
    cell = _zero_cell(3, 4)
    with pytest.raises(ad.ShapeError, match="lstm_scan"):
        lstm_step(ad.constant([1.0, 2.0]), _zero_state(4), cell)


# ---------------------------------------------------------------------------
# bilstm_encode
# ---------------------------------------------------------------------------


def test_bilstm_length_one_reduces_to_single_steps():
    rng = Rng(23)
    fwd = _random_cell(rng, 3, 2, "f")
    bwd = _random_cell(rng, 3, 2, "b")
    init_f = LstmState(ad.constant(rng.normal(0, 1, 2)), ad.constant(rng.normal(0, 1, 2)))
    init_b = LstmState(ad.constant(rng.normal(0, 1, 2)), ad.constant(rng.normal(0, 1, 2)))
    x = rng.normal(0, 1, 3)
    enc = bilstm_encode(ad.constant(x.reshape(1, 3)), fwd, bwd, init_f, init_b)
    sf = lstm_step(ad.constant(x), init_f, fwd)
    sb = lstm_step(ad.constant(x), init_b, bwd)
    np.testing.assert_allclose(enc.rows.value[0], np.concatenate([sf.h.value, sb.h.value]), atol=1e-12)


def test_bilstm_zero_everything_gives_zero_rows():
    enc = bilstm_encode(ad.constant(np.ones((4, 3))), _zero_cell(3, 2), _zero_cell(3, 2))
    assert np.all(enc.rows.value == 0.0)


def test_bilstm_reversal_swaps_directions():
    rng = Rng(24)
    cf = _random_cell(rng, 3, 2, "f")
    cb = _random_cell(rng, 3, 2, "b")
    init_f = LstmState(ad.constant(rng.normal(0, 1, 2)), ad.constant(rng.normal(0, 1, 2)))
    init_b = LstmState(ad.constant(rng.normal(0, 1, 2)), ad.constant(rng.normal(0, 1, 2)))
    seq = rng.normal(0, 1, (5, 3))
    original = bilstm_encode(ad.constant(seq), cf, cb, init_f, init_b)
    reversed_run = bilstm_encode(ad.constant(seq[::-1]), cb, cf, init_b, init_f)
    h = 2
    fwd_of_reversed = reversed_run.rows.value[:, :h]
    bwd_of_original = original.rows.value[:, h:]
    np.testing.assert_allclose(fwd_of_reversed, bwd_of_original[::-1], atol=1e-12)


def test_bilstm_rejects_empty_sequence():
    with pytest.raises(ad.ShapeError, match="non-empty"):
        bilstm_encode(ad.constant(np.zeros((0, 3))), _zero_cell(3, 2), _zero_cell(3, 2))


# ---------------------------------------------------------------------------
# conditional_encode
# ---------------------------------------------------------------------------


def _toy_params(arch="crossnet", hidden=2, emb=3, seed=25):
    cfg = ModelConfig(hidden=hidden, mlp=3, attention=3, embedding_dim=emb,
                      dropout=0.0, architecture=arch)
    return cfg, ModelParams(cfg, Rng(seed))


def test_conditional_encode_zero_target_equals_plain_bilstm():
    cfg, params = _toy_params()
    for node in params.target_fwd.nodes() + params.target_bwd.nodes():
        node.value[...] = 0.0
    rng = Rng(26)
    target = ad.constant(rng.normal(0, 1, (2, 3)))
    sentence = ad.constant(rng.normal(0, 1, (4, 3)))
    cond = conditional_encode(target, sentence, params)
    plain = bilstm_encode(sentence, params.sent_fwd, params.sent_bwd)
    np.testing.assert_allclose(cond.rows.value, plain.rows.value, atol=1e-12)


def test_conditional_encode_matches_scalar_oracle():
    cfg, params = _toy_params(hidden=2, emb=3)
    rng = Rng(27)
    t_seq = rng.normal(0, 1, (2, 3))
    p_seq = rng.normal(0, 1, (3, 3))
    enc = conditional_encode(ad.constant(t_seq), ad.constant(p_seq), params)

    def cell_lists(cell):
        return cell.wx.value.tolist(), cell.wh.value.tolist(), cell.b.value.tolist()

    h = 2
    zeros = [0.0] * h
    # target encoding from zero states, each direction separately
    _, tf_h, tf_c = _scalar_scan(t_seq.tolist(), *cell_lists(params.target_fwd), zeros, zeros)
    _, tb_h, tb_c = _scalar_scan(t_seq[::-1].tolist(), *cell_lists(params.target_bwd), zeros, zeros)
    # sentence conditioned on the target's final states, per direction
    pf_hs, _, _ = _scalar_scan(p_seq.tolist(), *cell_lists(params.sent_fwd), tf_h, tf_c)
    pb_hs, _, _ = _scalar_scan(p_seq[::-1].tolist(), *cell_lists(params.sent_bwd), tb_h, tb_c)
    expected = np.hstack([np.array(pf_hs), np.array(pb_hs)[::-1]])
    np.testing.assert_allclose(enc.rows.value, expected, atol=1e-12, rtol=0)


def test_conditional_encode_depends_on_target():
    cfg, params = _toy_params(seed=28)
    rng = Rng(29)
    sentence = ad.constant(rng.normal(0, 1, (4, 3)))
    a = conditional_encode(ad.constant(rng.normal(0, 1, (2, 3))), sentence, params)
    b = conditional_encode(ad.constant(rng.normal(0, 1, (2, 3))), sentence, params)
    assert not np.allclose(a.rows.value, b.rows.value)


# ---------------------------------------------------------------------------
# aspect_attention
# ---------------------------------------------------------------------------


def test_attention_singleton_row():
    cfg, params = _toy_params()
    row = Rng(30).normal(0, 1, (1, 4))
    result = aspect_attention(ad.constant(row), params, cfg)
    np.testing.assert_allclose(result.weights.value, [1.0], atol=0)
    np.testing.assert_allclose(result.aspect.value, row[0], atol=1e-15)


def test_attention_identical_rows_uniform():
    cfg, params = _toy_params()
    row = Rng(31).normal(0, 1, 4)
    result = aspect_attention(ad.constant(np.tile(row, (5, 1))), params, cfg)
    np.testing.assert_allclose(result.weights.value, np.full(5, 0.2), atol=1e-12)


def test_attention_matches_scalar_oracle():
    for case in range(100):
        cfg, params = _toy_params(seed=40 + case)
        h_rows = Rng(900 + case).normal(0, 1, (4, 4))
        result = aspect_attention(ad.constant(h_rows), params, cfg)
        scores, weights, aspect = scalar_attention(
            h_rows.tolist(),
            params.attn_w1.value.tolist(),
            params.attn_b1.value.tolist(),
            params.attn_w2.value.tolist(),
            float(params.attn_b2.value),
        )
        np.testing.assert_allclose(result.scores.value, scores, atol=1e-12, rtol=0)
        np.testing.assert_allclose(result.weights.value, weights, atol=1e-12, rtol=0)
        np.testing.assert_allclose(result.aspect.value, aspect, atol=1e-12, rtol=0)


def test_attention_simplex_and_hull_properties():
    for case in range(50):
        cfg, params = _toy_params(seed=60 + case)
        h_rows = Rng(1100 + case).normal(0, 2, (6, 4))
        result = aspect_attention(ad.constant(h_rows), params, cfg)
        w = result.weights.value
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-9
        lo = h_rows.min(axis=0) - 1e-9
        hi = h_rows.max(axis=0) + 1e-9
        assert np.all(result.aspect.value >= lo) and np.all(result.aspect.value <= hi)


def test_attention_duplicated_sentence_stays_normalized():
    cfg, params = _toy_params()
    h_rows = Rng(32).normal(0, 1, (3, 4))
    doubled = np.vstack([h_rows, h_rows])
    result = aspect_attention(ad.constant(doubled), params, cfg)
    assert abs(result.weights.value.sum() - 1.0) <= 1e-9


def test_attention_unavailable_for_baselines():
    cfg, params = _toy_params(arch="bicond")
    with pytest.raises(ValueError, match="no attention"):
        aspect_attention(ad.constant(np.zeros((2, 4))), params, cfg)


# ---------------------------------------------------------------------------
# predict_head
# ---------------------------------------------------------------------------


def test_predict_head_zero_output_layer_uniform():
    cfg, params = _toy_params()
    params.out_w.value[...] = 0.0
    params.out_b.value[...] = 0.0
    probs = predict_head(ad.constant(Rng(33).normal(0, 1, 4)), params)
    np.testing.assert_allclose(probs.value, np.full(3, 1 / 3), atol=1e-15)


def test_predict_head_logit_shift_invariance():
    cfg, params = _toy_params(seed=34)
    rep = ad.constant(Rng(35).normal(0, 1, 4))
    base = predict_head(rep, params).value.copy()
    params.out_b.value += 7.5
    shifted = predict_head(rep, params).value
    np.testing.assert_allclose(shifted, base, atol=1e-12)
    assert np.argmax(shifted) == np.argmax(base)


def test_predict_head_matches_scalar_oracle():
    for case in range(100):
        cfg, params = _toy_params(seed=70 + case)
        rep = Rng(1200 + case).normal(0, 1, 4)
        probs = predict_head(ad.constant(rep), params)
        expected = scalar_predict_head(
            rep.tolist(),
            params.mlp_w.value.tolist(), params.mlp_b.value.tolist(),
            params.out_w.value.tolist(), params.out_b.value.tolist(),
        )
        np.testing.assert_allclose(probs.value, expected, atol=1e-12, rtol=0)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def _toy_model(arch, seed=36, hidden=3, emb=4):
    cfg = ModelConfig(hidden=hidden, mlp=3, attention=3, embedding_dim=emb,
                      dropout=0.1, architecture=arch)
    rng = Rng(seed)
    vocab = Vocabulary([f"w{i}" for i in range(7)])
    embedding = rng.normal(0, 0.5, (len(vocab), emb))
    return StanceModel.build(cfg, embedding, vocab, rng.child("params"))


@pytest.mark.parametrize("arch", ["crossnet", "bicond", "bilstm"])
def test_forward_eval_deterministic(arch):
    model = _toy_model(arch)
    tokens = ["w1", "w3", "w5"]
    target = ["w2", "w6"]
    a = model.predict_tokens(tokens, target)
    b = model.predict_tokens(tokens, target)
    assert a.probabilities.tobytes() == b.probabilities.tobytes()
    assert a.label == b.label
    if arch == "crossnet":
        assert a.attention is not None
    else:
        assert a.attention is None


def test_forward_train_mode_needs_rng():
    model = _toy_model("crossnet")
    with pytest.raises(ValueError, match="rng"):
        model.predict_tokens(["w1"], ["w2"], mode="train")


def test_forward_end_to_end_matches_composed_scalar_oracle():
    model = _toy_model("crossnet", seed=37)
    params = model.params
    sent_ids = np.array([1, 4, 2, 6])
    targ_ids = np.array([3, 5])
    pred = model.predict_ids(sent_ids, targ_ids)

    emb = model.embedding.value
    h = model.config.hidden
    zeros = [0.0] * h

    def cell_lists(cell):
        return cell.wx.value.tolist(), cell.wh.value.tolist(), cell.b.value.tolist()

    t_seq = emb[targ_ids].tolist()
    p_seq = emb[sent_ids].tolist()
    _, tf_h, tf_c = _scalar_scan(t_seq, *cell_lists(params.target_fwd), zeros, zeros)
    _, tb_h, tb_c = _scalar_scan(t_seq[::-1], *cell_lists(params.target_bwd), zeros, zeros)
    pf_hs, _, _ = _scalar_scan(p_seq, *cell_lists(params.sent_fwd), tf_h, tf_c)
    pb_hs, _, _ = _scalar_scan(p_seq[::-1], *cell_lists(params.sent_bwd), tb_h, tb_c)
    rows = [pf + pb for pf, pb in zip(pf_hs, pb_hs[::-1])]
    _, _, aspect = scalar_attention(
        rows, params.attn_w1.value.tolist(), params.attn_b1.value.tolist(),
        params.attn_w2.value.tolist(), float(params.attn_b2.value),
    )
    expected = scalar_predict_head(
        aspect, params.mlp_w.value.tolist(), params.mlp_b.value.tolist(),
        params.out_w.value.tolist(), params.out_b.value.tolist(),
    )
    np.testing.assert_allclose(pred.probabilities, expected, atol=1e-10, rtol=0)


@pytest.mark.parametrize("arch", ["crossnet", "bicond", "bilstm"])
def test_full_model_gradient_check(arch):
    cfg = ModelConfig(hidden=4, mlp=3, attention=3, embedding_dim=2,
                      dropout=0.0, architecture=arch)
    params = ModelParams(cfg, Rng(38))
    emb = ad.constant(Rng(39).normal(0, 0.5, (9, 2)))
    sent_ids = np.array([1, 4, 7, 2, 5])
    targ_ids = np.array([3, 8])

    def f():
        pred = forward(sent_ids, targ_ids, emb, params, cfg, mode="eval")
        return batch_loss([pred.probs_node], [1], params, 0.01)

    err = ad.gradient_check(f, params.trainable(), epsilon=1e-5)
    assert err < 1e-5


# ---------------------------------------------------------------------------
# configuration, parameter counts, checkpoints
# ---------------------------------------------------------------------------


def test_default_parameter_counts_documented():
    # LSTM cells: 4 x (200*240 + 60*240 + 240) = 250560. Attention adds
    # 60*120 + 60 + 60 + 1 = 7321; the head adds in_dim*60 + 60 + 60*3 + 3.
    expected = {
        "crossnet": 265324,
        "bicond": 258003,
        "bilstm": 265203,
    }
    for arch, count in expected.items():
        params = ModelParams(ModelConfig(architecture=arch), Rng(0))
        assert params.count() == count, arch


def test_same_seed_builds_identical_params():
    a = ModelParams(ModelConfig(hidden=5, embedding_dim=8), Rng(44))
    b = ModelParams(ModelConfig(hidden=5, embedding_dim=8), Rng(44))
    for (name_a, node_a), (name_b, node_b) in zip(a.named().items(), b.named().items()):
        assert name_a == name_b
        assert node_a.value.tobytes() == node_b.value.tobytes()


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(hidden=0)
    with pytest.raises(ValueError):
        ModelConfig(dropout=1.0)
    with pytest.raises(ValueError):
        ModelConfig(attention_activation="relu6")
    with pytest.raises(ValueError):
        ModelConfig(architecture="transformer")


def test_checkpoint_roundtrip_value_exact(tmp_path):
    model = _toy_model("crossnet", seed=45)
    path = tmp_path / "model.npz"
    model.save(path)
    loaded = StanceModel.load(path)
    assert loaded.config == model.config
    assert loaded.vocab.to_list() == model.vocab.to_list()
    assert loaded.embedding.value.tobytes() == model.embedding.value.tobytes()
    for name, node in model.params.named().items():
        assert loaded.params.named()[name].value.tobytes() == node.value.tobytes()
    a = model.predict_tokens(["w1", "w2"], ["w3"])
    b = loaded.predict_tokens(["w1", "w2"], ["w3"])
    assert a.probabilities.tobytes() == b.probabilities.tobytes()

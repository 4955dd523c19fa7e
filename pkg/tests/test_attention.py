import math

import numpy as np
import pytest

from hora.attention import (
    AttentionConfig,
    FrozenAttentionWeights,
    HoraHypernetwork,
    LoraAdapterSet,
    hora_forward,
    hora_generate_adapters,
    mh_lora_forward,
    mha_forward,
    param_count,
)
from hora.core import IDENTITY, Activation
from hora.errors import InvalidConfigError, InvalidInputError


def direct_mha(X, W_Q, W_K, W_V, W_O):
    """Loop transcription of scaled dot-product multi-head attention."""
    N, d = X.shape
    H, _, dk = W_Q.shape
    heads = np.zeros((N, H * W_V.shape[2]))
    for h in range(H):
        Q, K, V = X @ W_Q[h], X @ W_K[h], X @ W_V[h]
        for i in range(N):
            s = [sum(Q[i, a] * K[j, a] for a in range(dk)) / math.sqrt(dk) for j in range(N)]
            m = max(s)
            e = [math.exp(v - m) for v in s]
            z = sum(e)
            for j in range(N):
                heads[i, h * V.shape[1]:(h + 1) * V.shape[1]] += e[j] / z * V[j]
    return heads @ W_O


class TestConfig:
    def test_derived_dims(self):
        cfg = AttentionConfig(d=64, H=4, N=3, r=4)
        assert cfg.d_k == cfg.d_v == 16

    def test_non_divisible(self):
        with pytest.raises(InvalidConfigError) as exc:
            AttentionConfig(d=10, H=3, N=2, r=1)
        assert exc.value.key == "d" and "d % H" in str(exc.value)

    @pytest.mark.parametrize("r", [0, 4, 5])
    def test_rank_bounds(self, r):
        with pytest.raises(InvalidConfigError) as exc:
            AttentionConfig(d=8, H=2, N=2, r=r)
        assert exc.value.key == "r"


class TestMha:
    def test_zero_scores_give_column_mean(self, rng):
        cfg = AttentionConfig(d=4, H=2, N=2, r=1)
        w = FrozenAttentionWeights.random(cfg, rng)
        w = FrozenAttentionWeights(np.zeros_like(w.W_Q), np.zeros_like(w.W_K), w.W_V, w.W_O)
        X = rng.normal(size=(2, 4))
        heads = np.concatenate([(X @ w.W_V[h]).mean(axis=0) for h in range(2)])
        out = mha_forward(cfg, w, X)
        np.testing.assert_allclose(out, np.tile(heads @ w.W_O, (2, 1)), atol=1e-14)

    def test_single_token(self, rng):
        cfg = AttentionConfig(d=4, H=1, N=1, r=1)
        w = FrozenAttentionWeights.random(cfg, rng)
        X = rng.normal(size=(1, 4))
        np.testing.assert_allclose(mha_forward(cfg, w, X), X @ w.W_V[0] @ w.W_O, atol=1e-14)

    def test_matches_direct_transcription(self, rng):
        cfg = AttentionConfig(d=8, H=2, N=4, r=1)
        w = FrozenAttentionWeights.random(cfg, rng)
        X = rng.normal(size=(4, 8))
        ref = direct_mha(X, np.asarray(w.W_Q), np.asarray(w.W_K), np.asarray(w.W_V), np.asarray(w.W_O))
        np.testing.assert_allclose(mha_forward(cfg, w, X), ref, atol=1e-12)

    def test_shape_mismatch(self, rng):
        cfg = AttentionConfig(d=8, H=2, N=4, r=1)
        w = FrozenAttentionWeights.random(cfg, rng)
        with pytest.raises(InvalidInputError):
            mha_forward(cfg, w, np.zeros((3, 8)))

    def test_weights_are_read_only(self, rng):
        w = FrozenAttentionWeights.random(AttentionConfig(d=8, H=2, N=4, r=1), rng)
        with pytest.raises(ValueError):
            w.W_Q[0, 0, 0] = 1.0


class TestLora:
    def test_zero_adapters(self, rng):
        cfg = AttentionConfig(d=8, H=2, N=5, r=2)
        w = FrozenAttentionWeights.random(cfg, rng)
        X = rng.normal(size=(5, 8))
        np.testing.assert_allclose(mh_lora_forward(cfg, w, LoraAdapterSet.zeros(cfg), X), mha_forward(cfg, w, X),
                                   atol=1e-12)

    def test_value_path_isolated(self, rng):
        cfg = AttentionConfig(d=4, H=1, N=3, r=1)
        base = FrozenAttentionWeights.random(cfg, rng)
        w = FrozenAttentionWeights(base.W_Q, np.zeros_like(base.W_K), np.zeros_like(base.W_V), base.W_O)
        ad = LoraAdapterSet.random(cfg, rng)
        ad = LoraAdapterSet(ad.A_Q, ad.A_V, np.zeros_like(ad.B_Q), ad.B_V)
        X = rng.normal(size=(3, 4))
        row = (X @ ad.B_V[0] @ ad.A_V).mean(axis=0) @ w.W_O
        np.testing.assert_allclose(mh_lora_forward(cfg, w, ad, X), np.tile(row, (3, 1)), atol=1e-14)

    @pytest.mark.parametrize("scale", [1.0, 0.25])
    def test_matches_materialised_weights(self, rng, scale):
        cfg = AttentionConfig(d=8, H=2, N=4, r=2)
        w = FrozenAttentionWeights.random(cfg, rng)
        ad = LoraAdapterSet.random(cfg, rng, scale=scale)
        X = rng.normal(size=(4, 8))
        W_Q = np.stack([w.W_Q[h] + scale * ad.B_Q[h] @ ad.A_Q for h in range(2)])
        W_V = np.stack([w.W_V[h] + scale * ad.B_V[h] @ ad.A_V for h in range(2)])
        ref = direct_mha(X, W_Q, np.asarray(w.W_K), W_V, np.asarray(w.W_O))
        np.testing.assert_allclose(mh_lora_forward(cfg, w, ad, X), ref, atol=1e-12)

    def test_adapter_shape_mismatch(self, rng):
        cfg = AttentionConfig(d=8, H=2, N=4, r=2)
        w = FrozenAttentionWeights.random(cfg, rng)
        bad = LoraAdapterSet.random(AttentionConfig(d=8, H=2, N=4, r=1), rng)
        with pytest.raises(InvalidInputError):
            mh_lora_forward(cfg, w, bad, np.zeros((4, 8)))

    def test_scale_must_be_positive(self):
        with pytest.raises(InvalidConfigError):
            LoraAdapterSet(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2, 1)), np.zeros((1, 2, 1)), scale=0.0)


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


class TestHora:
    def test_init_zeroes_value_path(self, rng):
        cfg = AttentionConfig(d=16, H=4, N=3, r=2)
        hn = HoraHypernetwork.initialize(cfg, 8, 4, rng)
        ad = hora_generate_adapters(hn, cfg)
        assert np.all(ad.B_V == 0.0)
        assert np.all(ad.delta_v() == 0.0)
        np.testing.assert_array_equal(hn.A, np.ones(2))

    def test_init_kaiming_bounds(self, rng):
        cfg = AttentionConfig(d=16, H=4, N=3, r=2)
        hn = HoraHypernetwork.initialize(cfg, 8, 4, rng)
        for name, fan_in in (("W_QA", cfg.d_k), ("B_emb", 8), ("W_B1", 8), ("W_QB2", 4)):
            assert np.max(np.abs(getattr(hn, name))) <= math.sqrt(6 / fan_in)
        assert not np.any(hn.W_VA) and not np.any(hn.W_VB2)

    def test_shared_embedding_gives_shared_factors(self, rng):
        cfg = AttentionConfig(d=9, H=3, N=2, r=1)
        hn = HoraHypernetwork.random(cfg, 5, 3, rng)
        emb = np.asarray(hn.B_emb).copy()
        emb[2] = emb[0]
        hn = HoraHypernetwork(hn.A, hn.W_QA, hn.W_VA, emb, hn.W_B1, hn.W_QB2, hn.W_VB2)
        ad = hora_generate_adapters(hn, cfg)
        np.testing.assert_array_equal(ad.B_Q[0], ad.B_Q[2])
        np.testing.assert_array_equal(ad.B_V[0], ad.B_V[2])
        assert not np.array_equal(ad.B_Q[0], ad.B_Q[1])

    def test_hand_trace(self):
        # d=4, r=2, d_e=3, d_hid=2, one head; sigmoid on both sites
        cfg = AttentionConfig(d=4, H=1, N=1, r=2)
        A = np.array([1.0, 2.0])
        W_QA = np.array([[1.0, 0.0, -1.0, 2.0], [0.0, 1.0, 1.0, -1.0]])
        W_VA = np.array([[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 1.0]])
        emb = np.array([[1.0, 2.0, 3.0]])
        W_B1 = np.array([[1.0, 0.0, -1.0], [0.0, 1.0, 1.0]])
        W_QB2 = np.arange(16, dtype=float).reshape(8, 2) - 8.0
        W_VB2 = np.ones((8, 2))
        hn = HoraHypernetwork(A, W_QA, W_VA, emb, W_B1, W_QB2, W_VB2)
        ad = hora_generate_adapters(hn, cfg)

        s = math.sqrt(1.5)
        ln = [-s, 0.0, s]                             # (x - 2) / sqrt(2/3)
        pre = [ln[0] - ln[2], ln[1] + ln[2]]          # W_B1 @ ln
        hid = [_sig(pre[0]), _sig(pre[1])]
        flat_q = [W_QB2[k, 0] * hid[0] + W_QB2[k, 1] * hid[1] for k in range(8)]
        flat_v = [hid[0] + hid[1]] * 8
        # row-major reshape: entry (a, b) is flat[a * r + b]
        B_Q = [[flat_q[2 * a + b] for b in range(2)] for a in range(4)]
        B_V = [[flat_v[2 * a + b] for b in range(2)] for a in range(4)]
        A_Q = [[_sig(A[i] * W_QA[i, j]) for j in range(4)] for i in range(2)]
        A_V = [[_sig(A[i] * W_VA[i, j]) for j in range(4)] for i in range(2)]
        np.testing.assert_allclose(ad.B_Q[0], B_Q, atol=1e-14)
        np.testing.assert_allclose(ad.B_V[0], B_V, atol=1e-14)
        np.testing.assert_allclose(ad.A_Q, A_Q, atol=1e-15)
        np.testing.assert_allclose(ad.A_V, A_V, atol=1e-15)

    def test_leaky_relu_site(self, rng):
        cfg = AttentionConfig(d=8, H=2, N=2, r=1)
        hn = HoraHypernetwork.random(cfg, 4, 3, rng, sigma2=Activation("leaky_relu", 0.1), sigma1=IDENTITY)
        ad = hora_generate_adapters(hn, cfg)
        np.testing.assert_allclose(ad.A_Q, np.asarray(hn.A)[:, None] * hn.W_QA)

    def test_init_with_zero_keys_equals_frozen(self, rng):
        cfg = AttentionConfig(d=8, H=2, N=4, r=2)
        base = FrozenAttentionWeights.random(cfg, rng)
        w = FrozenAttentionWeights(base.W_Q, np.zeros_like(base.W_K), base.W_V, base.W_O)
        hn = HoraHypernetwork.initialize(cfg, 6, 3, rng)
        X = rng.normal(size=(4, 8))
        np.testing.assert_array_equal(hora_forward(cfg, w, hn, X), mha_forward(cfg, w, X))

    def test_composition_identity(self, rng):
        cfg = AttentionConfig(d=8, H=2, N=4, r=2)
        w = FrozenAttentionWeights.random(cfg, rng)
        hn = HoraHypernetwork.random(cfg, 6, 3, rng)
        X = rng.normal(size=(4, 8))
        np.testing.assert_array_equal(hora_forward(cfg, w, hn, X),
                                      mh_lora_forward(cfg, w, hora_generate_adapters(hn, cfg), X))

    def test_random_matches_materialised_weights(self, rng):
        cfg = AttentionConfig(d=8, H=2, N=4, r=1)
        w = FrozenAttentionWeights.random(cfg, rng)
        hn = HoraHypernetwork.random(cfg, 6, 3, rng)
        ad = hora_generate_adapters(hn, cfg)
        X = rng.normal(size=(4, 8))
        W_Q = np.asarray(w.W_Q) + ad.B_Q @ ad.A_Q
        W_V = np.asarray(w.W_V) + ad.B_V @ ad.A_V
        np.testing.assert_allclose(hora_forward(cfg, w, hn, X),
                                   direct_mha(X, W_Q, np.asarray(w.W_K), W_V, np.asarray(w.W_O)), atol=1e-12)

    @pytest.mark.parametrize("d_e,d_hid", [(0, 3), (3, 0)])
    def test_zero_hidden_sizes_rejected(self, rng, d_e, d_hid):
        cfg = AttentionConfig(d=8, H=2, N=4, r=1)
        with pytest.raises(InvalidConfigError):
            HoraHypernetwork.initialize(cfg, d_e, d_hid, rng)


class TestParamCount:
    def test_lora_example(self):
        assert param_count("lora", AttentionConfig(d=64, H=4, N=1, r=4)) == 2176

    def test_hora_example(self):
        assert param_count("hora", AttentionConfig(d=64, H=4, N=1, r=4), d_e=8, d_hid=4) == 2244

    def test_counts_match_materialised_arrays(self, rng):
        cfg = AttentionConfig(d=24, H=3, N=1, r=3)
        hn = HoraHypernetwork.initialize(cfg, 5, 7, rng)
        arrays = ("A", "W_QA", "W_VA", "B_emb", "W_B1", "W_QB2", "W_VB2")
        assert param_count("hora", cfg, 5, 7) == sum(getattr(hn, k).size for k in arrays)
        ad = LoraAdapterSet.zeros(cfg)
        assert param_count("lora", cfg) == sum(getattr(ad, k).size for k in ("A_Q", "A_V", "B_Q", "B_V"))

    def test_rank_zero_rejected(self):
        with pytest.raises(InvalidConfigError):
            param_count("lora", AttentionConfig(d=8, H=2, N=1, r=0))

    def test_hora_needs_hidden_sizes(self):
        with pytest.raises(InvalidConfigError):
            param_count("hora", AttentionConfig(d=8, H=2, N=1, r=1))

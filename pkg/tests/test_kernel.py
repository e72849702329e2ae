import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from negtome.exceptions import ConfigurationError, DimensionError
from negtome.kernel import (MatchResult, MergeConfig, alpha_at, apply_mask_bias,
                            cosine_similarity, extrapolate, gate_by_threshold,
                            match, match_targets, negtome)

from oracles import max_abs_error, naive_negtome, random_case

EYE2 = np.eye(2, dtype=np.float32)
SRC = np.array([[[0.6, 0.8]]], dtype=np.float32)


def f32(x):
    return np.asarray(x, dtype=np.float32)


class TestCosineSimilarity:
    def test_unit_inputs(self):
        np.testing.assert_allclose(cosine_similarity(SRC, EYE2), [[0.6, 0.8]], atol=1e-7)

    def test_self_similarity_is_one(self):
        ref = f32([[0.3, -2.0, 5.0], [1.0, 1.0, 1.0]])
        s = cosine_similarity(ref[None, :1], ref)
        assert abs(s[0, 0] - 1.0) <= 1e-6

    def test_zero_row(self):
        s = cosine_similarity(f32([[[0.0, 0.0]]]), EYE2)
        np.testing.assert_array_equal(s, [[0.0, 0.0]])

    def test_flattens_batch_row_major(self):
        src = np.random.default_rng(0).standard_normal((3, 5, 4)).astype(np.float32)
        ref = np.random.default_rng(1).standard_normal((7, 4)).astype(np.float32)
        s = cosine_similarity(src, ref)
        assert s.shape == (15, 7)
        np.testing.assert_array_equal(s[5:10], cosine_similarity(src[1:2], ref))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            cosine_similarity(np.ones((1, 2, 3), np.float32), np.ones((2, 4), np.float32))


class TestMaskBias:
    def test_mask_flips_argmax(self):
        s = apply_mask_bias(f32([[0.6, 0.8]]), f32([1.0, 0.0]), 1e-6)
        expected = [0.6 + math.log(1 + 1e-6), 0.8 + math.log(1e-6)]
        np.testing.assert_allclose(s[0], expected, atol=1e-6)
        np.testing.assert_allclose(s[0, 1], -13.0155, atol=1e-4)
        assert match_targets(s).target_index[0] == 0

    def test_all_ones_is_uniform_shift(self):
        s = f32([[0.1, 0.9, -0.3], [0.5, 0.2, 0.4]])
        b = apply_mask_bias(s, np.ones(3), 1e-6)
        np.testing.assert_allclose(b - s, math.log(1 + 1e-6), atol=1e-7)
        np.testing.assert_array_equal(match_targets(b).target_index,
                                      match_targets(s).target_index)

    def test_all_zeros_disables_gate(self):
        s = f32([[1.0, 0.99]])
        b = apply_mask_bias(s, np.zeros(2), 1e-6)
        assert b.max() <= 1 + math.log(1e-6) + 1e-6
        assert not gate_by_threshold(match_targets(b), 0.7).gate.any()

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            apply_mask_bias(f32([[0.1, 0.2]]), f32([1.0]), 1e-6)


class TestMatchAndGate:
    @pytest.mark.parametrize("row, idx, mx", [([0.6, 0.8], 1, 0.8), ([0.5, 0.5], 0, 0.5),
                                              ([0.3], 0, 0.3)])
    def test_match_targets(self, row, idx, mx):
        m = match_targets(f32([row]))
        assert m.target_index[0] == idx and m.max_sim[0] == np.float32(mx)

    @pytest.mark.parametrize("mx, tau, gate", [(0.8, 0.7, True), (0.7, 0.7, False),
                                               (1.0, 1.1, False)])
    def test_gate(self, mx, tau, gate):
        m = MatchResult(np.array([0]), f32([mx]))
        assert gate_by_threshold(m, tau).gate[0] == gate


class TestExtrapolate:
    def test_push_away(self):
        out = extrapolate(f32([[0.6, 0.8]]), f32([[0.0, 1.0]]), [True], 0.5)
        np.testing.assert_allclose(out, [[0.9, 0.7]], atol=1e-6)

    def test_pull_toward(self):
        out = extrapolate(f32([[0.6, 0.8]]), f32([[0.0, 1.0]]), [True], -0.5)
        np.testing.assert_allclose(out, [[0.3, 0.9]], atol=1e-6)

    def test_alpha_zero_bit_exact(self):
        src = np.random.default_rng(3).standard_normal((6, 5)).astype(np.float32)
        tgt = np.random.default_rng(4).standard_normal((6, 5)).astype(np.float32)
        assert extrapolate(src, tgt, np.ones(6, bool), 0.0).tobytes() == src.tobytes()

    @pytest.mark.parametrize("alpha", [float("nan"), float("inf")])
    def test_non_finite_alpha(self, alpha):
        with pytest.raises(ConfigurationError):
            extrapolate(f32([[1.0]]), f32([[1.0]]), [True], alpha)


class TestNegtome:
    @pytest.mark.parametrize("alpha, expected", [(0.5, [0.9, 0.7]), (-0.5, [0.3, 0.9])])
    def test_worked_example(self, alpha, expected):
        np.testing.assert_allclose(negtome(SRC, EYE2, alpha, 0.7)[0, 0], expected, atol=1e-6)

    def test_self_reference_fixed_point(self):
        x = np.random.default_rng(5).standard_normal((1, 16, 8)).astype(np.float32)
        for alpha in (-1.0, 0.3, 0.9, 2.0):
            assert negtome(x, x[0], alpha, 0.7).tobytes() == x.tobytes()

    def test_full_gate_off(self):
        src = f32([[[1.0, 0.0], [0.0, 1.0]]])
        ref = f32([[1.0, 1.0]])           # cos = 0.7071 for both
        assert negtome(src, ref, 0.9, 0.75).tobytes() == src.tobytes()

    def test_rank2_source(self):
        np.testing.assert_allclose(negtome(SRC[0], EYE2, 0.5), [[0.9, 0.7]], atol=1e-6)

    def test_reference_not_modified(self):
        ref = EYE2.copy()
        negtome(SRC, ref, 0.5)
        assert ref.tobytes() == EYE2.tobytes()

    def test_n_ref_may_differ_from_n(self):
        src = np.random.default_rng(6).standard_normal((2, 9, 4)).astype(np.float32)
        ref = np.random.default_rng(7).standard_normal((3, 4)).astype(np.float32)
        assert negtome(src, ref, 0.5, 0.0).shape == (2, 9, 4)

    def test_masked_example(self):
        # unmasked the token would merge against [0, 1]; masking it out leaves
        # only [1, 0] at similarity 0.6 < tau, so nothing changes
        out = negtome(SRC, EYE2, 0.5, 0.7, mask=f32([1.0, 0.0]))
        assert out.tobytes() == SRC.tobytes()
        out = negtome(SRC, EYE2, 0.5, 0.5, mask=f32([1.0, 0.0]))
        np.testing.assert_allclose(out[0, 0], [0.4, 1.2], atol=1e-6)


@st.composite
def cases(draw, masked=None):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_case(np.random.default_rng(seed), max_b=3, max_n=12, max_ref=12,
                       max_d=8, masked=masked)


@settings(max_examples=150, deadline=None)
@given(cases())
def test_matches_naive_oracle(case):
    src, ref, alpha, tau, mask = case
    expected, amb, alts = naive_negtome(src, ref, alpha, tau, mask=mask)
    out = negtome(src, ref, alpha, tau, mask=mask)
    assert max_abs_error(out, expected, amb, alts) <= 1e-5


@given(cases())
def test_alpha_zero_identity(case):
    src, ref, _, tau, mask = case
    assert negtome(src, ref, 0.0, tau, mask=mask).tobytes() == src.tobytes()


@given(cases())
def test_gate_off_tokens_bit_identical(case):
    src, ref, alpha, tau, mask = case
    out, m = negtome(src, ref, alpha, tau, mask=mask, return_match=True)
    off = ~m.gate.reshape(src.shape[:2])
    assert out[off].tobytes() == src[off].tobytes()


@given(cases(masked=False), st.floats(-5, 5))
def test_uniform_shift_keeps_targets(case, c):
    src, ref, *_ = case
    s = cosine_similarity(src, ref)
    shifted = (s.astype(np.float64) + c).astype(np.float32)
    assume(np.all(np.diff(np.sort(s, axis=1)[:, -2:], axis=1) > 1e-5) or s.shape[1] == 1)
    np.testing.assert_array_equal(match_targets(shifted).target_index,
                                  match_targets(s).target_index)
    ones = match(src, ref, 0.7, mask=np.ones(ref.shape[0]))
    np.testing.assert_array_equal(ones.target_index, match_targets(s).target_index)


@given(cases(masked=True))
def test_masked_out_tokens_never_targeted(case):
    src, ref, _, tau, mask = case
    assume(np.any(mask >= 0.5))
    s = cosine_similarity(src, ref).astype(np.float64)
    m = match(src, ref, tau, mask=mask)
    strong = mask >= 0.5
    for i, j in enumerate(m.target_index):
        for jj in np.flatnonzero(mask == 0):
            if np.any(s[i, strong] >= s[i, jj] - 10):
                assert j != jj


@given(cases(), st.floats(0.01, 1.0))
def test_affine_in_alpha(case, alpha):
    src, ref, _, tau, mask = case
    d1 = negtome(src, ref, alpha, tau, mask=mask).astype(np.float64) - src
    d2 = negtome(src, ref, 2 * alpha, tau, mask=mask).astype(np.float64) - src
    dneg = negtome(src, ref, -alpha, tau, mask=mask).astype(np.float64) - src
    np.testing.assert_allclose(d2, 2 * d1, atol=1e-5)
    np.testing.assert_allclose(dneg, -d1, atol=1e-5)


class TestAlphaSchedule:
    def test_constant_inside_window(self):
        assert alpha_at(MergeConfig(alpha=0.9, t_window=(1000, 600)), 800) == 0.9

    def test_outside_window(self):
        cfg = MergeConfig(alpha=0.9, t_window=(1000, 600))
        assert alpha_at(cfg, 500) == 0.0
        assert alpha_at(cfg, 1001) == 0.0

    def test_window_is_inclusive(self):
        cfg = MergeConfig(alpha=0.9, t_window=(1000, 600))
        assert alpha_at(cfg, 600) == 0.9 and alpha_at(cfg, 1000) == 0.9

    def test_linear_decay(self):
        cfg = MergeConfig(alpha=0.8, t_window=(1000, 600), schedule_kind="linear-decay")
        assert alpha_at(cfg, 600) == 0.0
        assert alpha_at(cfg, 1000) == pytest.approx(0.8)
        assert alpha_at(cfg, 800) == pytest.approx(0.4)

    def test_flux_style_window(self):
        cfg = MergeConfig(alpha=1.0, t_window=(1000, 900))
        assert [alpha_at(cfg, t) for t in (1000, 950, 900, 899)] == [1.0, 1.0, 1.0, 0.0]

    @pytest.mark.parametrize("kwargs", [{"epsilon": 0.0}, {"t_window": (500, 600)},
                                        {"t_window": (10, -1)}, {"alpha": float("nan")},
                                        {"schedule_kind": "cosine"}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigurationError):
            MergeConfig(**kwargs)

    def test_negative_timestep(self):
        with pytest.raises(ConfigurationError):
            alpha_at(MergeConfig(), -1)

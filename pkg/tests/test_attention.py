import pytest
import torch

from prsanet.attention import (
    RegionAttention,
    SimilarityAttention,
    apply_band,
    band_to_dense,
    band_valid_mask,
    band_width,
    fuse_bands,
    normalize_band,
    transpose_band,
)

from reference import dense_region_attention, dense_similarity_attention


def region_module(c_embed=6, c_out=5, scale=2, dtype=torch.float64):
    return RegionAttention(c_embed, c_out, scale).to(dtype)


class TestRowContext:
    def test_delta_kernel_recovers_transform(self):
        mod = region_module(scale=2)
        with torch.no_grad():
            mod.encoder.weight.zero_()
            mod.encoder.weight[:, :, 2] = torch.eye(5)  # center tap only
            mod.encoder.bias.zero_()
        u = torch.randn(1, 6, 12, dtype=torch.float64)
        context = mod.row_context(u)
        torch.testing.assert_close(context, mod.transform(u))

    def test_constant_input_constant_interior(self):
        mod = region_module(scale=2)
        u = torch.ones(1, 6, 16, dtype=torch.float64) * 0.7
        context = mod.row_context(u)
        interior = context[:, :, 2:-2]
        torch.testing.assert_close(
            interior, interior[:, :, :1].expand_as(interior)
        )


class TestBandScores:
    def test_zero_decoder_gives_bias(self):
        mod = region_module(scale=2)
        with torch.no_grad():
            mod.decoder_weight.zero_()
            mod.decoder_bias.fill_(0.37)
        raw = mod(torch.randn(2, 6, 10, dtype=torch.float64))
        torch.testing.assert_close(raw, torch.full_like(raw, 0.37))

    def test_band_shape_structurally_limited(self):
        mod = region_module(scale=3)
        raw = mod(torch.randn(1, 6, 12, dtype=torch.float64))
        assert raw.shape == (1, 12, 7)  # entries beyond |i-j|<=3 don't exist

    def test_scale_must_be_below_length(self):
        mod = region_module(scale=4)
        with pytest.raises(ValueError, match="exceed"):
            mod(torch.randn(1, 6, 4, dtype=torch.float64))


class TestNormalizeBand:
    def test_constant_scores_uniform_interior(self):
        raw = torch.zeros(1, 12, 5, dtype=torch.float64)
        band = normalize_band(raw, 2)
        torch.testing.assert_close(
            band.weights[0, 5], torch.full((5,), 0.2, dtype=torch.float64)
        )

    def test_border_column_clipped_normalization(self):
        raw = torch.zeros(1, 12, 9, dtype=torch.float64)
        band = normalize_band(raw, 4)
        first = band.weights[0, 0]
        assert first[:4].sum() == 0.0  # sources before index 0 don't exist
        assert first[4:].sum() == pytest.approx(1.0)
        torch.testing.assert_close(
            first[4:], torch.full((5,), 0.2, dtype=torch.float64)
        )

    def test_matches_dense_masked_softmax(self, rng):
        for scale, length in ((2, 9), (4, 16)):
            raw = torch.from_numpy(rng.standard_normal((2, length, band_width(scale))))
            band = normalize_band(raw, scale)
            dense = band_to_dense(band.weights, scale)
            idx = torch.arange(length)
            mask = (idx[:, None] - idx[None, :]).abs() <= scale
            scores = band_to_dense(raw, scale)
            scores = scores.masked_fill(~mask, float("-inf"))
            expected = torch.softmax(scores, dim=1)  # over sources i, per target j
            torch.testing.assert_close(dense, expected, atol=1e-12, rtol=0)

    def test_transpose_band_involution(self, rng):
        raw = torch.from_numpy(rng.standard_normal((2, 11, 7)))
        back = transpose_band(transpose_band(raw, 3), 3)
        valid = band_valid_mask(11, 3)
        torch.testing.assert_close(
            back.masked_fill(~valid, 0.0), raw.masked_fill(~valid, 0.0)
        )


class TestApplyBand:
    def test_one_hot_band_is_identity_gather(self):
        length, scale = 10, 2
        weights = torch.zeros(1, length, 5, dtype=torch.float64)
        weights[:, :, scale] = 1.0  # source i == target j
        values = torch.randn(1, 4, length, dtype=torch.float64)
        torch.testing.assert_close(apply_band(weights, values, scale), values)

    def test_uniform_band_over_constant_values(self):
        length, scale = 12, 2
        band = normalize_band(torch.zeros(1, length, 5, dtype=torch.float64), scale)
        values = torch.full((1, 3, length), 1.7, dtype=torch.float64)
        out = apply_band(band.weights, values, scale)
        torch.testing.assert_close(out, values)

    def test_matches_dense_product(self, rng):
        scale, length = 3, 14
        raw = torch.from_numpy(rng.standard_normal((2, length, band_width(scale))))
        band = normalize_band(raw, scale)
        values = torch.from_numpy(rng.standard_normal((2, 5, length)))
        out = apply_band(band.weights, values, scale)
        dense = band_to_dense(band.weights, scale)
        expected = torch.einsum("bij,bci->bcj", dense, values)
        torch.testing.assert_close(out, expected, atol=1e-12, rtol=0)


class TestDenseOracleEquivalence:
    @pytest.mark.parametrize("scale", [2, 4])
    @pytest.mark.parametrize("length", [8, 16, 32])
    def test_region_attention(self, scale, length):
        if length <= scale:
            pytest.skip("scale must be below length")
        mod = region_module(scale=scale)
        u = torch.randn(2, 6, length, dtype=torch.float64)
        band = normalize_band(mod(u), scale)
        dense = dense_region_attention(u, mod)
        torch.testing.assert_close(band.to_dense(), dense, atol=1e-6, rtol=0)

    @pytest.mark.parametrize("scale,length", [(2, 8), (3, 16), (4, 32)])
    def test_similarity_attention(self, scale, length):
        mod = SimilarityAttention(6, 5, scale).double()
        u = torch.randn(2, 6, length, dtype=torch.float64)
        band = normalize_band(mod(u), scale)
        dense = dense_similarity_attention(u, mod)
        torch.testing.assert_close(band.to_dense(), dense, atol=1e-6, rtol=0)

    def test_targets_axis_matches_dense(self):
        mod = region_module(scale=2)
        u = torch.randn(1, 6, 12, dtype=torch.float64)
        band = normalize_band(mod(u), 2, axis="targets")
        dense = dense_region_attention(u, mod, axis="targets")
        torch.testing.assert_close(band.to_dense(), dense, atol=1e-12, rtol=0)


class TestSimilarityDegenerate:
    def test_orthogonal_projections_uniform(self):
        mod = SimilarityAttention(4, 4, 2).double()
        with torch.no_grad():
            mod.query.weight.zero_()
            mod.query.bias.zero_()
        u = torch.randn(1, 4, 10, dtype=torch.float64)
        band = normalize_band(mod(u), 2)
        center = band.weights[0, 5]
        torch.testing.assert_close(center, torch.full((5,), 0.2, dtype=torch.float64))

    def test_constant_input_uniform(self):
        mod = SimilarityAttention(4, 4, 2).double()
        u = torch.ones(1, 4, 10, dtype=torch.float64)
        band = normalize_band(mod(u), 2)
        center = band.weights[0, 5]
        torch.testing.assert_close(center, torch.full((5,), 0.2, dtype=torch.float64))


class TestFusion:
    def test_single_scale_mean_is_identity(self, rng):
        raw = torch.from_numpy(rng.standard_normal((2, 10, 5)))
        band = normalize_band(raw, 2)
        fused = fuse_bands([band], "mean")
        assert fused is band

    def test_fused_columns_stochastic(self, rng):
        for scales in ((2, 4), (2, 3, 5)):
            bands = []
            length = 20
            for s in scales:
                raw = torch.from_numpy(rng.standard_normal((2, length, band_width(s))))
                bands.append(normalize_band(raw, s))
            fused = fuse_bands(list(bands), "mean")
            dense = fused.to_dense()
            torch.testing.assert_close(
                dense.sum(dim=1), torch.ones(2, length, dtype=torch.float64),
                atol=1e-5, rtol=0,
            )

    def test_sum_mode_scales_mass(self, rng):
        bands = [
            normalize_band(torch.from_numpy(rng.standard_normal((1, 16, band_width(s)))), s)
            for s in (2, 4)
        ]
        fused = fuse_bands(bands, "sum")
        dense = fused.to_dense()
        torch.testing.assert_close(
            dense.sum(dim=1), torch.full((1, 16), 2.0, dtype=torch.float64)
        )

    def test_band_sparsity_structural(self, rng):
        # mass outside |i-j| <= s_max is exactly zero, not approximately
        bands = [
            normalize_band(torch.from_numpy(rng.standard_normal((1, 24, band_width(s)))), s)
            for s in (2, 4)
        ]
        dense = fuse_bands(bands, "mean").to_dense()
        idx = torch.arange(24)
        outside = (idx[:, None] - idx[None, :]).abs() > 4
        assert (dense[0][outside] == 0.0).all()

import pytest

from prsanet.config import (
    RunConfig,
    load_config,
    parse_overrides,
    profile_config,
    save_config,
)


class TestProfiles:
    def test_thumos_operating_point(self):
        cfg = profile_config("thumos")
        assert cfg.snippet_interval == 4
        assert cfg.sequence_length == 250
        assert cfg.window_stride == 100
        assert cfg.max_duration == 64
        assert cfg.nms_thresh == 0.65
        assert cfg.scales == (4, 8)
        assert cfg.t_iter == 2
        assert cfg.lr_schedule == ((10, 2e-4),)

    def test_anet_operating_point(self):
        cfg = profile_config("anet")
        assert cfg.mode == "rescaled"
        assert cfg.snippet_interval == 16
        assert cfg.sequence_length == 100
        assert cfg.max_duration == 100
        assert cfg.nms_thresh == 0.45
        assert cfg.lr_schedule == ((7, 1e-3), (3, 1e-4))
        assert cfg.epochs == 10

    def test_unknown_profile(self):
        with pytest.raises(ValueError, match="unknown profile"):
            profile_config("kinetics")

    def test_shared_defaults(self):
        cfg = RunConfig()
        assert cfg.c_input == cfg.c_embed == cfg.c_out == 256
        assert cfg.lambda_reg == pytest.approx(2e-4)
        assert cfg.lambda_com == pytest.approx(10.0)


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path):
        cfg = profile_config("anet")
        path = tmp_path / "run.cfg"
        save_config(path, cfg)
        assert load_config(path) == cfg

    def test_save_load_with_overrides(self, tmp_path):
        cfg = parse_overrides(
            RunConfig(),
            {"scales": "2,4,8", "residual": "true", "lr_schedule": "3:0.001,2:0.0001"},
        )
        path = tmp_path / "run.cfg"
        save_config(path, cfg)
        back = load_config(path)
        assert back == cfg
        assert back.scales == (2, 4, 8)
        assert back.residual is True
        assert back.lr_schedule == ((3, 1e-3), (2, 1e-4))

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("momentum = 0.9\n")
        with pytest.raises(ValueError, match="unknown config key"):
            load_config(path)

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\n\nseed = 42   # trailing\n")
        assert load_config(path).seed == 42

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("this is not a setting\n")
        with pytest.raises(ValueError, match="key = value"):
            load_config(path)


class TestValidation:
    def test_scale_vs_sequence_length(self):
        with pytest.raises(ValueError, match="region scale"):
            RunConfig(sequence_length=8, scales=(8,))

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            RunConfig(mode="streaming")

    def test_bad_suppress(self):
        with pytest.raises(ValueError):
            RunConfig(suppress="hard")

    def test_bad_schedule(self):
        with pytest.raises(ValueError):
            RunConfig(lr_schedule=((0, 1e-3),))

    def test_bool_parse_errors(self):
        with pytest.raises(ValueError, match="boolean"):
            parse_overrides(RunConfig(), {"residual": "maybe"})

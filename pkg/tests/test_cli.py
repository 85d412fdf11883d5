import json
from pathlib import Path

import pytest

from prsanet.cli import main

FIXTURES = Path(__file__).parent / "fixtures"

TINY_ARGS = [
    "--set", "mode=windowed",
    "--set", "snippet_interval=1",
    "--set", "sequence_length=64",
    "--set", "window_stride=64",
    "--set", "max_duration=16",
    "--set", "c_input=16", "--set", "c_embed=16", "--set", "c_out=16",
    "--set", "scales=2",
    "--set", "t_iter=1",
    "--set", "k_bins=4",
    "--set", "head_hidden=16",
    "--set", "batch_size=4",
    "--set", "synth_videos=6",
    "--set", "synth_channels=16",
    "--set", "lr_schedule=2:0.0002",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data_dir = root / "data"
    assert main(["synth", "--out", str(data_dir), "--seed", "21", *TINY_ARGS]) == 0
    return root, data_dir


class TestSynth:
    def test_outputs_exist(self, workspace):
        _, data_dir = workspace
        assert (data_dir / "manifest.json").exists()
        assert (data_dir / "annotations.json").exists()
        assert len(list((data_dir / "features").glob("*.prsf"))) == 6

    def test_same_seed_identical_manifest(self, workspace, tmp_path):
        _, data_dir = workspace
        again = tmp_path / "again"
        assert main(["synth", "--out", str(again), "--seed", "21", *TINY_ARGS]) == 0
        assert (again / "annotations.json").read_bytes() == (
            data_dir / "annotations.json"
        ).read_bytes()

    def test_zero_videos_invalid(self, tmp_path):
        code = main([
            "synth", "--out", str(tmp_path / "x"), "--seed", "1",
            "--set", "synth_videos=0",
        ])
        assert code == 2


class TestTrainInferEval:
    def test_full_pipeline(self, workspace):
        root, data_dir = workspace
        run_dir = root / "run"
        code = main([
            "train",
            "--manifest", str(data_dir / "manifest.json"),
            "--annotations", str(data_dir / "annotations.json"),
            "--out", str(run_dir),
            "--seed", "21",
            *TINY_ARGS,
        ])
        assert code == 0
        assert (run_dir / "model.ckpt").exists()
        log_lines = (run_dir / "train_log.jsonl").read_text().strip().splitlines()
        assert len(log_lines) == 2

        proposals_path = root / "proposals.json"
        code = main([
            "infer",
            "--checkpoint", str(run_dir / "model.ckpt"),
            "--manifest", str(data_dir / "manifest.json"),
            "--annotations", str(data_dir / "annotations.json"),
            "--out", str(proposals_path),
            "--suppress", "soft_nms",
            "--seed", "21",
            *TINY_ARGS,
        ])
        assert code == 0
        proposals = json.loads(proposals_path.read_text())
        assert len(proposals) == 6
        for entries in proposals.values():
            scores = [e["score"] for e in entries]
            assert scores == sorted(scores, reverse=True)

        results_path = root / "results.json"
        code = main([
            "eval",
            "--proposals", str(proposals_path),
            "--annotations", str(data_dir / "annotations.json"),
            "--out", str(results_path),
            "--seed", "21",
            *TINY_ARGS,
        ])
        assert code == 0
        results = json.loads(results_path.read_text())
        assert set(results) == {"ar_at_an", "auc", "map"}
        assert results_path.with_suffix(".curve.csv").exists()

    def test_infer_jobs_deterministic(self, workspace):
        root, data_dir = workspace
        run_dir = root / "run"
        outs = []
        for jobs in ("1", "3"):
            out = root / f"proposals_j{jobs}.json"
            code = main([
                "infer",
                "--checkpoint", str(run_dir / "model.ckpt"),
                "--manifest", str(data_dir / "manifest.json"),
                "--annotations", str(data_dir / "annotations.json"),
                "--out", str(out),
                "--jobs", jobs,
                "--seed", "21",
                *TINY_ARGS,
            ])
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_checkpoint_config_mismatch_exit_code(self, workspace):
        root, data_dir = workspace
        bad_args = [a if a != "c_embed=16" else "c_embed=8" for a in TINY_ARGS]
        bad_args = [a if a != "c_input=16" else "c_input=8" for a in bad_args]
        # checkpoint config wins over CLI config for the model itself, so
        # corrupt the checkpoint metadata instead
        import zipfile

        run_dir = root / "run"
        broken = root / "broken.ckpt"
        with zipfile.ZipFile(run_dir / "model.ckpt") as src:
            meta = json.loads(src.read("metadata.json"))
            meta["config"]["c_embed"] = 8
            meta["config"]["c_input"] = 8
            meta["config"]["c_out"] = 8
            with zipfile.ZipFile(broken, "w") as dst:
                for name in src.namelist():
                    if name == "metadata.json":
                        dst.writestr(name, json.dumps(meta))
                    else:
                        dst.writestr(name, src.read(name))
        code = main([
            "infer",
            "--checkpoint", str(broken),
            "--manifest", str(data_dir / "manifest.json"),
            "--annotations", str(data_dir / "annotations.json"),
            "--out", str(root / "nope.json"),
            "--seed", "21",
            *TINY_ARGS,
        ])
        assert code == 2

    def test_missing_feature_file_error(self, workspace, tmp_path):
        root, data_dir = workspace
        manifest = json.loads((data_dir / "manifest.json").read_text())
        manifest[0]["feature_path"] = "features/missing.prsf"
        bad_manifest = tmp_path / "manifest.json"
        bad_manifest.write_text(json.dumps(manifest))
        code = main([
            "train",
            "--manifest", str(bad_manifest),
            "--annotations", str(data_dir / "annotations.json"),
            "--out", str(tmp_path / "run"),
            "--seed", "21",
            *TINY_ARGS,
        ])
        assert code == 2

    def test_resume_matches_straight_run(self, workspace, tmp_path):
        root, data_dir = workspace
        common = [
            "--manifest", str(data_dir / "manifest.json"),
            "--annotations", str(data_dir / "annotations.json"),
            "--seed", "21",
            *TINY_ARGS,
        ]
        full = tmp_path / "full"
        assert main(["train", "--out", str(full), *common]) == 0
        part = tmp_path / "part"
        assert main(["train", "--out", str(part), "--epochs", "1", *common]) == 0
        assert main([
            "train", "--out", str(part), "--resume", str(part / "model.ckpt"), *common,
        ]) == 0
        full_log = [json.loads(l) for l in (full / "train_log.jsonl").read_text().splitlines()]
        part_log = [json.loads(l) for l in (part / "train_log.jsonl").read_text().splitlines()]
        assert part_log[-1]["total"] == pytest.approx(full_log[-1]["total"], rel=1e-6)


class TestExitCodes:
    def test_divergence_maps_to_exit_3(self, workspace, tmp_path, monkeypatch):
        from prsanet import training as training_mod

        _, data_dir = workspace

        def explode(*args, **kwargs):
            raise training_mod.TrainingDiverged(0, 2)

        monkeypatch.setattr(training_mod, "train", explode)
        code = main([
            "train",
            "--manifest", str(data_dir / "manifest.json"),
            "--annotations", str(data_dir / "annotations.json"),
            "--out", str(tmp_path / "run"),
            "--seed", "21",
            *TINY_ARGS,
        ])
        assert code == 3


class TestEvalEdgeCases:
    def test_perfect_proposals_full_recall(self, tmp_path):
        with open(FIXTURES / "two_video_annotations.json") as fp:
            ann = json.load(fp)
        proposals = {
            vid: [
                {"segment": a["segment"], "score": 0.9, "p_boundary": 1.0, "p_map": 0.9}
                for a in entry["annotations"]
            ]
            for vid, entry in ann.items()
        }
        ppath = tmp_path / "perfect.json"
        ppath.write_text(json.dumps(proposals))
        out = tmp_path / "results.json"
        assert main([
            "eval",
            "--proposals", str(ppath),
            "--annotations", str(FIXTURES / "two_video_annotations.json"),
            "--out", str(out),
        ]) == 0
        results = json.loads(out.read_text())
        assert results["ar_at_an"]["10"] == pytest.approx(1.0)
        # AN=1 can only recall one of video_a's two instances: AR(1) = 2/3,
        # AR(AN>=2) = 1, so the trapezoid is ((2/3+1)/2 + 98) / 99
        assert results["auc"] == pytest.approx(100 * (5 / 6 + 98) / 99)

    def test_fixture_eval_matches_frozen_values(self, tmp_path):
        out = tmp_path / "results.json"
        code = main([
            "eval",
            "--proposals", str(FIXTURES / "two_video_proposals.json"),
            "--annotations", str(FIXTURES / "two_video_annotations.json"),
            "--out", str(out),
        ])
        assert code == 0
        results = json.loads(out.read_text())
        assert results["ar_at_an"]["1"] == pytest.approx(6 / 11, abs=1e-6)
        assert results["ar_at_an"]["100"] == pytest.approx(25 / 33, abs=1e-6)
        assert results["auc"] == pytest.approx(247150 / 3267, abs=1e-6)
        assert results["map"]["0.5"] == pytest.approx(2 / 3, abs=1e-6)
        assert results["map"]["0.85"] == pytest.approx(1 / 12, abs=1e-6)

    def test_empty_proposals_all_zero(self, tmp_path):
        proposals = tmp_path / "empty.json"
        proposals.write_text("{}")
        out = tmp_path / "results.json"
        code = main([
            "eval",
            "--proposals", str(proposals),
            "--annotations", str(FIXTURES / "two_video_annotations.json"),
            "--out", str(out),
        ])
        assert code == 0
        results = json.loads(out.read_text())
        assert all(v == 0.0 for v in results["ar_at_an"].values())
        assert results["auc"] == 0.0

    def test_unknown_video_id_listed(self, tmp_path):
        proposals = tmp_path / "bad.json"
        proposals.write_text(json.dumps({"phantom": []}))
        code = main([
            "eval",
            "--proposals", str(proposals),
            "--annotations", str(FIXTURES / "two_video_annotations.json"),
            "--out", str(tmp_path / "r.json"),
        ])
        assert code == 2


class TestPlot:
    def test_plot_from_curve(self, tmp_path):
        curve = tmp_path / "curve.csv"
        curve.write_text("AN,AR\n1,0.2\n2,0.5\n3,0.8\n")
        out = tmp_path / "curve.svg"
        assert main(["plot", "--curve", str(curve), "--out", str(out)]) == 0
        assert out.stat().st_size > 0

    def test_plot_byte_stable(self, tmp_path):
        curve = tmp_path / "curve.csv"
        curve.write_text("AN,AR\n1,0.2\n2,0.5\n3,0.8\n")
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        assert main(["plot", "--curve", str(curve), "--out", str(a)]) == 0
        assert main(["plot", "--curve", str(curve), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_column(self, tmp_path):
        curve = tmp_path / "curve.csv"
        curve.write_text("AN,recall\n1,0.2\n")
        assert main(["plot", "--curve", str(curve), "--out", str(tmp_path / "x.svg")]) == 2


class TestConfigResolution:
    def test_unknown_set_key(self, tmp_path):
        assert main([
            "synth", "--out", str(tmp_path / "x"), "--set", "bogus=1",
        ]) == 2

    def test_profile_selects_defaults(self, tmp_path):
        # anet profile at synth scale: only check config file is written
        out = tmp_path / "d"
        code = main([
            "synth", "--out", str(out), "--profile", "anet",
            "--set", "synth_videos=1", "--set", "synth_length=64",
            "--set", "synth_channels=4", "--set", "sequence_length=64",
            "--set", "scales=2,4",
        ])
        assert code == 0
        text = (out / "run.cfg").read_text()
        assert "mode = rescaled" in text
        assert "snippet_interval = 16" in text

import json
import os

import numpy as np
import pytest

from enes import cli
from enes.field import load_vgrid, TimeGrid


def run(args):
    return cli.main(args)


class TestParsing:
    def test_no_command_prints_help(self, capsys):
        assert run([]) == cli.EXIT_USAGE
        assert "gen" in capsys.readouterr().out

    def test_unknown_command(self):
        assert run(["refract"]) == cli.EXIT_USAGE

    def test_help_exits_ok(self):
        assert run(["--help"]) == cli.EXIT_OK

    def test_missing_config_file(self, tmp_path):
        assert run(["gen", "--config", str(tmp_path / "absent.cfg")]) == cli.EXIT_USAGE

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("wavelength = 3\n")
        assert run(["gen", "--config", str(cfg)]) == cli.EXIT_USAGE

    def test_config_precedence_flags_beat_file(self, tmp_path, capsys):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("seed = 5\nkind = layered  # comment\n")
        out = tmp_path / "f.vgrid"
        code = run(["gen", "--config", str(cfg), "--seed", "9", "--out", str(out)])
        assert code == cli.EXIT_OK
        text = capsys.readouterr().out
        assert "seed = 9" in text  # flag wins
        assert "kind = layered" in text  # file beats default


class TestGen:
    def test_writes_field_and_manifest(self, tmp_path):
        out = tmp_path / "field.vgrid"
        assert run(["gen", "--kind", "layered", "--seed", "3", "--out", str(out)]) == cli.EXIT_OK
        assert out.exists()
        fld = load_vgrid(out)
        assert fld.values.ndim == 2
        manifest = json.loads((tmp_path / "field.vgrid.manifest.json").read_text())
        assert manifest["command"] == "gen"
        assert manifest["seed"] == 3
        assert "config_hash" in manifest and len(manifest["config_hash"]) == 64
        assert "numpy" in manifest["versions"]

    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a.vgrid", tmp_path / "b.vgrid"
        run(["gen", "--kind", "constant", "--seed", "4", "--out", str(a)])
        run(["gen", "--kind", "constant", "--seed", "4", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_sphere_manifold(self, tmp_path):
        out = tmp_path / "s.vgrid"
        code = run(["gen", "--kind", "gaussian_obstacle", "--manifold", "sphere2", "--out", str(out), "--dims", "16x32"])
        assert code == cli.EXIT_OK
        assert load_vgrid(out).extent is None


class TestFmm:
    def test_requires_field(self):
        assert run(["fmm"]) == cli.EXIT_USAGE

    def test_missing_field_file(self, tmp_path):
        assert run(["fmm", "--field", str(tmp_path / "nope.vgrid")]) == cli.EXIT_USAGE

    def test_solves_and_writes_times(self, tmp_path):
        fld_path = tmp_path / "f.vgrid"
        run(["gen", "--kind", "constant", "--seed", "1", "--out", str(fld_path)])
        out = tmp_path / "t.vgrid"
        code = run(["fmm", "--field", str(fld_path), "--source", "0.5,0.5", "--dims", "33x33", "--out", str(out)])
        assert code == cli.EXIT_OK
        tg = load_vgrid(out)
        assert isinstance(tg, TimeGrid)
        assert tg.times.shape == (33, 33)
        assert np.all(np.isfinite(tg.times))


class TestTrainFitEval:
    @pytest.fixture(scope="class")
    def workspace(self, tmp_path_factory):
        ws = tmp_path_factory.mktemp("cli_ws")
        fields = []
        for i in range(2):
            p = ws / f"f{i}.vgrid"
            assert run(["gen", "--kind", "constant", "--seed", str(20 + i), "--out", str(p), "--dims", "17x17"]) == cli.EXIT_OK
            fields.append(str(p))
        ckpt = ws / "model.enes"
        code = run([
            "train", "--fields", ",".join(fields), "--out", str(ckpt),
            "--steps", "60", "--pairs", "16", "--n-latents", "4",
            "--context-dim", "8", "--hidden", "32",
        ])
        assert code == cli.EXIT_OK
        return ws, fields, str(ckpt)

    def test_train_writes_checkpoint_and_manifest(self, workspace):
        ws, _, ckpt = workspace
        assert os.path.exists(ckpt)
        manifest = json.loads((ws / "model.enes.manifest.json").read_text())
        assert manifest["command"] == "train"

    def test_fit_adapts_new_field(self, workspace, tmp_path):
        ws, fields, ckpt = workspace
        new_field = tmp_path / "new.vgrid"
        run(["gen", "--kind", "constant", "--seed", "31", "--out", str(new_field), "--dims", "17x17"])
        fitted = tmp_path / "fitted.enes"
        code = run(["fit", "--checkpoint", ckpt, "--field", str(new_field), "--out", str(fitted), "--steps", "30", "--pairs", "16"])
        assert code == cli.EXIT_OK
        assert fitted.exists()

    def test_eval_writes_report(self, workspace, tmp_path):
        ws, fields, ckpt = workspace
        report = tmp_path / "report.csv"
        code = run([
            "eval", "--checkpoint", ckpt, "--field", fields[0], "--out", str(report),
            "--probes", "32", "--dims", "33x33", "--sources", "0.5,0.5",
        ])
        assert code == cli.EXIT_OK
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "field,re,rmae"

    def test_steer_reports_tiny_deviation(self, workspace, tmp_path):
        ws, _, ckpt = workspace
        out = tmp_path / "steer.csv"
        code = run(["steer", "--checkpoint", ckpt, "--probes", "64", "--out", str(out)])
        assert code == cli.EXIT_OK
        dev = float(out.read_text().strip().splitlines()[1])
        assert dev < 1e-9

    def test_geodesic_writes_path(self, workspace, tmp_path):
        ws, _, ckpt = workspace
        out = tmp_path / "path.csv"
        code = run([
            "geodesic", "--checkpoint", ckpt, "--start", "0.45,0.5", "--end", "0.55,0.5",
            "--alpha", "1e-2", "--out", str(out),
        ])
        pts = np.loadtxt(out, delimiter=",")
        assert pts.ndim == 2 and pts.shape[1] == 2
        if code == cli.EXIT_OK:
            assert np.allclose(pts[0], [0.45, 0.5])
        else:
            assert code == cli.EXIT_NUMERIC  # unconverged partial path

    def test_missing_checkpoint_is_numeric_or_usage(self, tmp_path):
        code = run(["fit", "--checkpoint", str(tmp_path / "nope.enes"), "--field", str(tmp_path / "nope.vgrid")])
        assert code == cli.EXIT_USAGE


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert run(["selftest"]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert "steerability: ok" in out

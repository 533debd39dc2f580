import json
import subprocess
import sys

import numpy as np

from latentcal.cli import main
from latentcal.experiment import ingest_csv
from latentcal.flows import get_task


def write_config(tmp_path, **overrides):
    config = dict(
        task="gaussian-d2-scale2",
        sample_count=400,
        seeds=[0, 1],
        map_kind="gamma_kde",
        map_options={"cv_folds": 5},
        hdr_sample_budget=150,
        energy_sample_count=20,
        methods=["base", "radial"],
        metrics=["nll", "l_ece"],
        output_dir=str(tmp_path / "results"),
    )
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config, indent=2))
    return path


class TestEvaluate:
    def test_writes_report_and_exits_zero(self, tmp_path, capsys):
        config = write_config(tmp_path)
        code = main(["evaluate", "--config", str(config)])
        assert code == 0
        report = json.loads((tmp_path / "results" / "report.json").read_text())
        assert report["seeds_completed"] == [0, 1]
        assert "completed 2/2 seeds" in capsys.readouterr().out

    def test_seed_override(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "alt"
        code = main(["evaluate", "--config", str(config), "--seeds", "5", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["seeds_completed"] == [5]

    def test_failing_seed_exits_nonzero(self, tmp_path, capsys):
        config = write_config(tmp_path, sample_count=40, map_options={"cv_folds": 10})
        code = main(["evaluate", "--config", str(config)])
        assert code == 1
        assert "failed" in capsys.readouterr().err

    def test_byte_identical_across_subprocess_invocations(self, tmp_path):
        config = write_config(tmp_path)
        outs = []
        for sub in ("first", "second"):
            out = tmp_path / sub
            proc = subprocess.run(
                [sys.executable, "-m", "latentcal.cli", "evaluate",
                 "--config", str(config), "--out", str(out)],
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
            outs.append(out)
        for name in ["report.json", "reliability_latent.csv", "reliability_hdr.csv"]:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


class TestFitAndRecalibrate:
    def test_fit_then_score(self, tmp_path, capsys):
        config = write_config(tmp_path)
        fit_dir = tmp_path / "fit"
        assert main(["fit", "--config", str(config), "--out", str(fit_dir)]) == 0
        assert (fit_dir / "recalibrator.json").exists()
        assert (fit_dir / "fit_meta.json").exists()

        # fresh data from the same task, scored against the stored map
        task = get_task("gaussian-d2-scale2")
        x, y = task.sample_dataset(123, 50)
        data_path = tmp_path / "fresh.csv"
        header = ["x0", "x1", "y0", "y1"]
        rows = [",".join(repr(float(v)) for v in row) for row in np.hstack([x, y])]
        data_path.write_text("\n".join([",".join(header)] + rows) + "\n")

        scores_path = tmp_path / "scores.csv"
        code = main(
            [
                "recalibrate",
                "--config", str(config),
                "--recalibrator", str(fit_dir / "recalibrator.json"),
                "--data", str(data_path),
                "--out", str(scores_path),
            ]
        )
        assert code == 0
        scored = ingest_csv(str(scores_path), ["latent_pit"], ["log_density"])
        assert scored.n == 50
        assert np.all((scored.covariates >= 0.0) & (scored.covariates <= 1.0))

    def test_fit_then_sample(self, tmp_path):
        config = write_config(tmp_path)
        fit_dir = tmp_path / "fit"
        main(["fit", "--config", str(config), "--out", str(fit_dir)])
        samples_path = tmp_path / "samples.csv"
        code = main(
            [
                "recalibrate",
                "--config", str(config),
                "--recalibrator", str(fit_dir / "recalibrator.json"),
                "--sample-at", "0.5,-0.25",
                "--count", "64",
                "--out", str(samples_path),
            ]
        )
        assert code == 0
        lines = samples_path.read_text().splitlines()
        assert lines[0] == "y0,y1"
        assert len(lines) == 65

    def test_recalibrate_requires_mode(self, tmp_path, capsys):
        config = write_config(tmp_path)
        fit_dir = tmp_path / "fit"
        main(["fit", "--config", str(config), "--out", str(fit_dir)])
        code = main(
            [
                "recalibrate",
                "--config", str(config),
                "--recalibrator", str(fit_dir / "recalibrator.json"),
                "--out", str(tmp_path / "nothing.csv"),
            ]
        )
        assert code == 2


class TestReport:
    def test_pretty_print(self, tmp_path, capsys):
        config = write_config(tmp_path)
        main(["evaluate", "--config", str(config)])
        capsys.readouterr()
        code = main(["report", "--report", str(tmp_path / "results" / "report.json")])
        assert code == 0
        out = capsys.readouterr().out
        assert "radial" in out
        assert "l_ece" in out

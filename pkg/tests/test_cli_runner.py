"""Tests for config parsing, the batch pipeline, and artifact contracts."""

import json

import numpy as np
import pytest

from chemodecay import cli_runner as cli
from chemodecay import decay_analysis as da

TINY_CONFIG = """\
# chemodecay-config-v1
[grid]
dim = 2
n = 32
box_length = 20.0

[model]
epsilon = 1.0

[initial]
kind = gaussian_bump
amplitude = 0.01
sigma = 1.0

[integrator]
scheme = etd_trap
t_final = {t_final}
dt = 0.05

[output]
label = tiny
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG.format(t_final="2.0"))
    return path


class TestParseConfig:
    """Config schema and field validation."""

    def test_valid_config_parses(self, tiny_config):
        config = cli.parse_config(tiny_config)
        assert config.grid.n == 32
        assert config.params.epsilon == 1.0
        assert config.integrator.scheme == "etd_trap"
        assert config.label == "tiny"

    def test_missing_file_names_path(self, tmp_path):
        missing = tmp_path / "absent.cfg"
        with pytest.raises(cli.ConfigError, match="absent.cfg"):
            cli.parse_config(missing)

    def test_wrong_schema_line_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("# some-other-schema\n[grid]\ndim = 2\n")
        with pytest.raises(cli.ConfigError, match="chemodecay-config-v1"):
            cli.parse_config(path)

    def test_missing_required_key(self, tmp_path):
        path = tmp_path / "partial.cfg"
        path.write_text("# chemodecay-config-v1\n[grid]\ndim = 2\nn = 32\n")
        with pytest.raises(cli.ConfigError, match=r"\[grid\] box_length"):
            cli.parse_config(path)

    def test_bad_field_type_reported(self, tmp_path):
        path = tmp_path / "badtype.cfg"
        path.write_text(TINY_CONFIG.format(t_final="soon"))
        with pytest.raises(cli.ConfigError, match="t_final"):
            cli.parse_config(path)

    def test_n_max_beyond_dealias_bound(self, tmp_path):
        text = TINY_CONFIG.format(t_final="1.0") + "\n"
        text = text.replace("dt = 0.05", "dt = 0.05\nn_max = 12")
        path = tmp_path / "toomany.cfg"
        path.write_text(text)
        with pytest.raises(cli.ConfigError, match="n_max"):
            cli.parse_config(path)

    def test_unknown_scheme_becomes_config_error(self, tmp_path):
        path = tmp_path / "scheme.cfg"
        path.write_text(TINY_CONFIG.format(t_final="1.0")
                        .replace("etd_trap", "leapfrog"))
        with pytest.raises(cli.ConfigError, match="scheme"):
            cli.parse_config(path)


class TestAnalysisOptions:
    """Metadata roundtrip keeps analyze() a pure function of the CSV."""

    def test_metadata_roundtrip(self):
        opts = cli.AnalysisOptions(window_lo=5.0, window_hi=50.0,
                                   fit_ks=(0, 1), check_linfty=True,
                                   slope_tolerance=0.12)
        restored = cli.AnalysisOptions.from_metadata(opts.to_metadata())
        assert restored == opts

    def test_defaults_survive_missing_keys(self):
        restored = cli.AnalysisOptions.from_metadata({})
        assert restored == cli.AnalysisOptions()

    def test_nonpositive_tolerance_rejected(self):
        with pytest.raises(cli.ConfigError, match="tolerance"):
            cli.AnalysisOptions(slope_tolerance=0.0)


class TestRunCommand:
    """End-to-end pipeline on a small grid."""

    def test_run_writes_all_artifacts(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["run", "--config", str(tiny_config),
                         "--out", str(out), "--quiet"])
        assert code == 0
        expected = {"series.csv", "verdicts.txt", "residuals.csv",
                    "manifest.json", "norms.svg", "ratios.svg", "energy.svg",
                    "initial_n.snap", "initial_v0.snap", "initial_v1.snap",
                    "final_n.snap", "final_v0.snap", "final_v1.snap"}
        assert expected <= {p.name for p in out.iterdir()}

    def test_manifest_lists_every_file_with_sizes(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", "--config", str(tiny_config), "--out", str(out),
                  "--quiet"])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["schema"] == "chemodecay-manifest-v1"
        assert manifest["overall"] == "PASS"
        for name, info in manifest["files"].items():
            assert (out / name).stat().st_size == info["bytes"]
        assert "series.csv" in manifest["files"]
        assert manifest["config"]["grid"]["n"] == 32

    def test_reruns_are_byte_identical(self, tiny_config, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            cli.main(["run", "--config", str(tiny_config), "--out", str(out),
                      "--quiet"])
            outs.append((out / "series.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_analyze_reproduces_verdicts_exactly(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", "--config", str(tiny_config), "--out", str(out),
                  "--quiet"])
        redo = tmp_path / "redo"
        code = cli.main(["analyze", "--series", str(out / "series.csv"),
                         "--out", str(redo), "--quiet"])
        assert code == 0
        assert (out / "verdicts.txt").read_bytes() == \
            (redo / "verdicts.txt").read_bytes()
        assert (out / "residuals.csv").read_bytes() == \
            (redo / "residuals.csv").read_bytes()

    def test_missing_config_exits_2(self, tmp_path, capsys):
        code = cli.main(["run", "--config", str(tmp_path / "nope.cfg"),
                         "--quiet"])
        assert code == 2
        assert "nope.cfg" in capsys.readouterr().err

    def test_zero_horizon_reports_insufficient_window(self, tmp_path):
        path = tmp_path / "frozen.cfg"
        path.write_text(TINY_CONFIG.format(t_final="0.0"))
        out = tmp_path / "out"
        code = cli.main(["run", "--config", str(path), "--out", str(out),
                         "--quiet"])
        assert code == 0
        text = (out / "verdicts.txt").read_text()
        assert "insufficient window" in text
        assert "overall = PASS" in text

    def test_config_and_preset_are_exclusive(self, tiny_config, capsys):
        code = cli.main(["run", "--config", str(tiny_config),
                         "--preset", "d2_gaussian", "--quiet"])
        assert code == 2

    def test_unknown_preset_exits_2(self, capsys):
        code = cli.main(["run", "--preset", "no_such_preset", "--quiet"])
        assert code == 2
        assert "no_such_preset" in capsys.readouterr().err

    def test_linear_only_flag(self, tiny_config, tmp_path):
        out = tmp_path / "lin"
        code = cli.main(["run", "--config", str(tiny_config), "--out",
                         str(out), "--linear-only", "--quiet"])
        assert code == 0
        series = da.NormSeries.from_csv(out / "series.csv")
        assert series.metadata["linear_only"] == "True"

    def test_output_root_env_var(self, tiny_config, tmp_path, monkeypatch):
        root = tmp_path / "root"
        root.mkdir()
        monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(root))
        code = cli.main(["run", "--config", str(tiny_config), "--out",
                         "nested/run1", "--quiet"])
        assert code == 0
        assert (root / "nested" / "run1" / "series.csv").is_file()

    def test_default_out_uses_label(self, tiny_config, tmp_path, monkeypatch):
        root = tmp_path / "root2"
        root.mkdir()
        monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(root))
        code = cli.main(["run", "--config", str(tiny_config), "--quiet"])
        assert code == 0
        assert (root / "tiny" / "series.csv").is_file()


class TestPlotCommand:
    """SVG emission."""

    def test_plots_from_run(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", "--config", str(tiny_config), "--out", str(out),
                  "--quiet"])
        plots = tmp_path / "plots"
        code = cli.main(["plot", "--series", str(out / "series.csv"),
                         "--out", str(plots), "--quiet"])
        assert code == 0
        for name in ("norms.svg", "ratios.svg", "energy.svg"):
            content = (plots / name).read_text()
            assert "</svg>" in content

    def test_empty_series_yields_axes_only_svg(self, tmp_path):
        csv = tmp_path / "empty.csv"
        csv.write_text("# chemodecay-series-v1\n# dim = 2\nt,n_k0\n")
        plots = tmp_path / "plots"
        code = cli.main(["plot", "--series", str(csv), "--out", str(plots),
                         "--quiet"])
        assert code == 0
        assert "</svg>" in (plots / "norms.svg").read_text()

    def test_malformed_cell_reports_row_and_column(self, tmp_path, capsys):
        csv = tmp_path / "bad.csv"
        csv.write_text("# chemodecay-series-v1\nt,n_k0\n0.0,oops\n")
        code = cli.main(["plot", "--series", str(csv), "--out",
                         str(tmp_path / "p"), "--quiet"])
        assert code == 2
        err = capsys.readouterr().err
        assert "row 1" in err
        assert "n_k0" in err


class TestOracleCommand:
    """Closed-form verification suites."""

    def test_all_suites_pass(self, capsys):
        code = cli.main(["oracle", "--quiet"])
        out = capsys.readouterr().out
        assert code == 0
        for suite in ("green", "semigroup", "projector", "generator"):
            assert f"{suite}:" in out
        assert "FAIL" not in out

    def test_single_suite_selector(self, capsys):
        code = cli.main(["oracle", "--suite", "projector"])
        out = capsys.readouterr().out
        assert code == 0
        assert "projector" in out
        assert "green" not in out

    def test_green_table_artifact(self, tmp_path, capsys):
        code = cli.main(["oracle", "--suite", "generator",
                         "--out", str(tmp_path / "oracle")])
        assert code == 0
        table = tmp_path / "oracle" / "green_table.csv"
        assert table.is_file()
        assert table.read_text().splitlines()[0].startswith("# chemodecay-green")


class TestPreset:
    """Bundled preset sanity (parse only; the full run happens elsewhere)."""

    def test_preset_parses(self):
        from importlib import resources
        ref = resources.files("chemodecay").joinpath("presets", "d2_gaussian.cfg")
        with resources.as_file(ref) as path:
            config = cli.parse_config(path)
        assert config.grid.dim == 2
        assert config.grid.n == 256
        assert config.grid.box_length == 200.0
        assert config.params.epsilon == 1.0
        assert config.integrator.t_final == 400.0
        assert config.integrator.track_c
        assert config.analysis.check_c
        assert config.analysis.slope_tolerance == 0.15
        assert config.label == "d2_gaussian"


if __name__ == "__main__":
    pytest.main([__file__, "-v"])

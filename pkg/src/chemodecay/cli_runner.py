"""Batch experiment driver.

Pipeline per invocation: parse an INI config (first line pins the config
schema), build the initial data, integrate, write the series CSV plus
initial/final snapshots, run every enabled analysis, and emit a verdict
report, a residual table, SVG plots, and a JSON manifest listing every
artifact with its byte length.

The verdict report is a pure function of the series CSV: all analysis
options ride in the CSV metadata, so `analyze` on the CSV reproduces the
report byte for byte.  Exit codes: 0 all enabled checks pass (checks that
lack data are skipped, not failed), 1 verdict failure, 2 configuration or
runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import datetime
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import chemotaxis_model as cm
from . import decay_analysis as da
from . import spectral_core as sc
from . import time_integrator as ti
from . import linear_semigroup as lsg

CONFIG_SCHEMA = "chemodecay-config-v1"
MANIFEST_SCHEMA = "chemodecay-manifest-v1"
VERDICTS_SCHEMA = "chemodecay-verdicts-v1"
RESIDUALS_SCHEMA = "chemodecay-residuals-v1"
OUTPUT_ROOT_ENV = "CHEMODECAY_OUTPUT_ROOT"
ORACLE_SUITES = ("green", "semigroup", "projector", "generator")


class ConfigError(ValueError):
    """Configuration file violates the schema or a field constraint."""


@dataclass(frozen=True)
class AnalysisOptions:
    """Which verdicts to compute and at what tolerances."""

    window_lo: float | None = None
    window_hi: float | None = None
    fit_ks: tuple[int, ...] = (0, 1, 2)
    lower_bound_ks: tuple[int, ...] = (0, 1)
    slope_tolerance: float = 0.1
    drift_tolerance: float = 0.1
    ratio_floor: float = 0.5
    check_c: bool = True
    c_rel_tolerance: float = 0.1
    check_linfty: bool = False
    linfty_tolerance: float = 0.15
    energy_rel_tolerance: float = 1e-10
    mass_rel_tolerance: float = 1e-10
    interp_abs_tolerance: float = 1e-12
    split_rel_tolerance: float = 1e-12

    def __post_init__(self) -> None:
        for name in ("slope_tolerance", "drift_tolerance", "ratio_floor",
                     "c_rel_tolerance", "linfty_tolerance",
                     "energy_rel_tolerance", "mass_rel_tolerance",
                     "interp_abs_tolerance", "split_rel_tolerance"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"analysis tolerance {name} must be positive")
        if any(k < 0 for k in self.fit_ks + self.lower_bound_ks):
            raise ConfigError("derivative orders must be nonnegative")

    @property
    def window(self) -> tuple[float, float] | None:
        if self.window_lo is None or self.window_hi is None:
            return None
        return (self.window_lo, self.window_hi)

    def to_metadata(self) -> dict[str, str]:
        enc = lambda v: "auto" if v is None else repr(v)
        return {
            "analysis_window_lo": enc(self.window_lo),
            "analysis_window_hi": enc(self.window_hi),
            "analysis_fit_ks": ",".join(str(k) for k in self.fit_ks),
            "analysis_lower_bound_ks": ",".join(str(k) for k in self.lower_bound_ks),
            "analysis_slope_tolerance": repr(self.slope_tolerance),
            "analysis_drift_tolerance": repr(self.drift_tolerance),
            "analysis_ratio_floor": repr(self.ratio_floor),
            "analysis_check_c": str(self.check_c),
            "analysis_c_rel_tolerance": repr(self.c_rel_tolerance),
            "analysis_check_linfty": str(self.check_linfty),
            "analysis_linfty_tolerance": repr(self.linfty_tolerance),
            "analysis_energy_rel_tolerance": repr(self.energy_rel_tolerance),
            "analysis_mass_rel_tolerance": repr(self.mass_rel_tolerance),
            "analysis_interp_abs_tolerance": repr(self.interp_abs_tolerance),
            "analysis_split_rel_tolerance": repr(self.split_rel_tolerance),
        }

    @classmethod
    def from_metadata(cls, metadata: dict[str, str]) -> "AnalysisOptions":
        defaults = cls()

        def dec_float(key, default):
            raw = metadata.get(key)
            if raw is None:
                return default
            return None if raw == "auto" else float(raw)

        def dec_ks(key, default):
            raw = metadata.get(key)
            if raw is None:
                return default
            return tuple(int(p) for p in raw.split(",") if p != "")

        def dec_bool(key, default):
            raw = metadata.get(key)
            return default if raw is None else raw == "True"

        return cls(
            window_lo=dec_float("analysis_window_lo", defaults.window_lo),
            window_hi=dec_float("analysis_window_hi", defaults.window_hi),
            fit_ks=dec_ks("analysis_fit_ks", defaults.fit_ks),
            lower_bound_ks=dec_ks("analysis_lower_bound_ks", defaults.lower_bound_ks),
            slope_tolerance=dec_float("analysis_slope_tolerance",
                                      defaults.slope_tolerance),
            drift_tolerance=dec_float("analysis_drift_tolerance",
                                      defaults.drift_tolerance),
            ratio_floor=dec_float("analysis_ratio_floor", defaults.ratio_floor),
            check_c=dec_bool("analysis_check_c", defaults.check_c),
            c_rel_tolerance=dec_float("analysis_c_rel_tolerance",
                                      defaults.c_rel_tolerance),
            check_linfty=dec_bool("analysis_check_linfty", defaults.check_linfty),
            linfty_tolerance=dec_float("analysis_linfty_tolerance",
                                       defaults.linfty_tolerance),
            energy_rel_tolerance=dec_float("analysis_energy_rel_tolerance",
                                           defaults.energy_rel_tolerance),
            mass_rel_tolerance=dec_float("analysis_mass_rel_tolerance",
                                         defaults.mass_rel_tolerance),
            interp_abs_tolerance=dec_float("analysis_interp_abs_tolerance",
                                           defaults.interp_abs_tolerance),
            split_rel_tolerance=dec_float("analysis_split_rel_tolerance",
                                          defaults.split_rel_tolerance),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    grid: sc.Grid
    params: cm.ModelParams
    initial: cm.InitialDataSpec
    integrator: ti.IntegratorConfig
    analysis: AnalysisOptions
    label: str = "run"

    def __post_init__(self) -> None:
        limit = self.grid.n // 3
        if self.integrator.n_max > limit:
            raise ConfigError(
                f"n_max = {self.integrator.n_max} exceeds the dealiased "
                f"resolution bound n/3 = {limit}"
            )


_MISSING = object()


def _convert(section: str, key: str, raw: str, kind, path) -> object:
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"{path}: [{section}] {key} = {raw!r} is not a valid {kind.__name__}"
        ) from None


def parse_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    first = text.splitlines()[0].strip() if text.splitlines() else ""
    if first != f"# {CONFIG_SCHEMA}":
        raise ConfigError(
            f"{path}: first line must be '# {CONFIG_SCHEMA}', got {first!r}"
        )
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    def get(section, key, kind=float, default=_MISSING):
        if not parser.has_option(section, key):
            if default is _MISSING:
                raise ConfigError(f"{path}: missing required [{section}] {key}")
            return default
        return _convert(section, key, parser.get(section, key), kind, path)

    try:
        grid = sc.Grid(
            get("grid", "dim", int), get("grid", "n", int),
            get("grid", "box_length", float),
        )
        params = cm.ModelParams(
            epsilon=get("model", "epsilon", float),
            u_bar=get("model", "u_bar", float, 1.0),
        )
        sigma_raw = get("initial", "sigma", str, "auto")
        center_raw = get("initial", "center", str, "auto")
        center = (None if center_raw == "auto"
                  else tuple(float(p) for p in center_raw.split(",")))
        if center is not None and len(center) != grid.dim:
            raise ConfigError(f"{path}: [initial] center needs {grid.dim} components")
        file_raw = get("initial", "path", str, "")
        initial = cm.InitialDataSpec(
            kind=get("initial", "kind", str, "gaussian_bump"),
            amplitude=get("initial", "amplitude", float, 0.01),
            sigma=None if sigma_raw == "auto" else float(sigma_raw),
            center=center,
            seed=get("initial", "seed", int, 0),
            path=str(path.parent / file_raw) if file_raw else None,
        )
        dt_raw = get("integrator", "dt", str, "auto")
        integrator = ti.IntegratorConfig(
            t_final=get("integrator", "t_final", float),
            dt=None if dt_raw == "auto" else float(dt_raw),
            scheme=get("integrator", "scheme", str, "etd_trap"),
            n_max=get("integrator", "n_max", int, 3),
            split_radius=get("integrator", "split_radius", float, 8.0),
            track_c=get("integrator", "track_c", bool, True),
        )
        window_lo = get("analysis", "window_lo", str, "auto")
        window_hi = get("analysis", "window_hi", str, "auto")
        defaults = AnalysisOptions()
        analysis = AnalysisOptions(
            window_lo=None if window_lo == "auto" else float(window_lo),
            window_hi=None if window_hi == "auto" else float(window_hi),
            fit_ks=tuple(int(p) for p in
                         get("analysis", "fit_ks", str, "0,1,2").split(",")),
            lower_bound_ks=tuple(int(p) for p in
                                 get("analysis", "lower_bound_ks", str, "0,1")
                                 .split(",")),
            slope_tolerance=get("analysis", "slope_tolerance", float,
                                defaults.slope_tolerance),
            drift_tolerance=get("analysis", "drift_tolerance", float,
                                defaults.drift_tolerance),
            ratio_floor=get("analysis", "ratio_floor", float, defaults.ratio_floor),
            check_c=get("analysis", "check_c", bool, defaults.check_c),
            c_rel_tolerance=get("analysis", "c_rel_tolerance", float,
                                defaults.c_rel_tolerance),
            check_linfty=get("analysis", "check_linfty", bool,
                             defaults.check_linfty),
            linfty_tolerance=get("analysis", "linfty_tolerance", float,
                                 defaults.linfty_tolerance),
            energy_rel_tolerance=get("analysis", "energy_rel_tolerance", float,
                                     defaults.energy_rel_tolerance),
            mass_rel_tolerance=get("analysis", "mass_rel_tolerance", float,
                                   defaults.mass_rel_tolerance),
            interp_abs_tolerance=get("analysis", "interp_abs_tolerance", float,
                                     defaults.interp_abs_tolerance),
            split_rel_tolerance=get("analysis", "split_rel_tolerance", float,
                                    defaults.split_rel_tolerance),
        )
        label = get("output", "label", str, "run")
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig(grid, params, initial, integrator, analysis, label)


@dataclass
class Verdict:
    name: str
    status: str                      # PASS, FAIL, or SKIPPED
    value: float | None = None
    target: float | None = None
    margin: float | None = None
    note: str = ""

    @property
    def failed(self) -> bool:
        return self.status == "FAIL"


def _status(passed: bool) -> str:
    return "PASS" if passed else "FAIL"


def analyze_series(series: da.NormSeries) -> list[Verdict]:
    """Run every enabled check; data-starved checks come back SKIPPED."""
    opts = AnalysisOptions.from_metadata(series.metadata)
    window = opts.window
    verdicts: list[Verdict] = []

    def guarded(name, fn):
        try:
            fn()
        except (ValueError, KeyError) as exc:
            message = str(exc)
            if "insufficient window" in message or "not recorded" in message \
                    or "not applicable" in message:
                verdicts.append(Verdict(name, "SKIPPED", note=message))
            else:
                verdicts.append(Verdict(name, "FAIL", note=message))

    for quantity in ("n", "v"):
        for k in opts.fit_ks:
            def fit_check(quantity=quantity, k=k):
                fit = da.fit_decay(series, quantity, k, window=window,
                                   tolerance=opts.slope_tolerance)
                verdicts.append(Verdict(f"fit_{quantity}_k{k}", _status(fit.passed),
                                        fit.slope, fit.target, fit.margin))
            guarded(f"fit_{quantity}_k{k}", fit_check)

    for quantity in ("n", "v"):
        for k in opts.lower_bound_ks:
            def lower_check(quantity=quantity, k=k):
                res = da.lower_bound_ratio(series, quantity, k, window=window,
                                           drift_tolerance=opts.drift_tolerance,
                                           ratio_floor=opts.ratio_floor)
                margin = res.ratio_min / max(res.ratio_median, 1e-300)
                verdicts.append(Verdict(f"lower_{quantity}_k{k}", _status(res.passed),
                                        res.drift_slope, 0.0, margin))
            guarded(f"lower_{quantity}_k{k}", lower_check)

    def mass_check():
        drift = da.mass_drift(series)
        verdicts.append(Verdict("mass_drift",
                                _status(drift.passed(opts.mass_rel_tolerance)),
                                drift.max_drift, 0.0, drift.max_drift))
    guarded("mass_drift", mass_check)

    def energy_check():
        audit = da.energy_audit(series, opts.energy_rel_tolerance)
        verdicts.append(Verdict("energy_monotone", _status(audit.passed),
                                float(audit.total_violations), 0.0,
                                audit.worst_relative_rise))
    guarded("energy_monotone", energy_check)

    def split_check():
        audit = da.split_audit(series, opts.split_rel_tolerance)
        verdicts.append(Verdict("fourier_split", _status(audit.passed),
                                audit.worst_defect, 0.0, audit.worst_defect))
    guarded("fourier_split", split_check)

    def interp_check():
        audit = da.interpolation_audit(series, opts.interp_abs_tolerance)
        verdicts.append(Verdict("interpolation", _status(audit.passed),
                                float(audit.violations), 0.0, audit.worst_excess))
    guarded("interpolation", interp_check)

    if opts.check_c:
        def c_check():
            res = da.c_decay_check(series, window=window,
                                   rel_tolerance=opts.c_rel_tolerance)
            verdicts.append(Verdict("c_decay", _status(res.passed), res.slope,
                                    res.target, abs(res.slope - res.target)))
        guarded("c_decay", c_check)

    if opts.check_linfty:
        def linf_check():
            fit = da.linfty_decay_check(series, window=window,
                                        tolerance=opts.linfty_tolerance)
            verdicts.append(Verdict("linfty_decay", _status(fit.passed),
                                    fit.slope, fit.target, fit.margin))
        guarded("linfty_decay", linf_check)

    return verdicts


def overall_status(verdicts: list[Verdict]) -> str:
    return "FAIL" if any(v.failed for v in verdicts) else "PASS"


def write_verdicts(path, verdicts: list[Verdict]) -> None:
    lines = [f"# {VERDICTS_SCHEMA}"]
    for v in verdicts:
        lines.append(f"{v.name}.status = {v.status}")
        if v.value is not None:
            lines.append(f"{v.name}.value = {repr(v.value)}")
        if v.target is not None:
            lines.append(f"{v.name}.target = {repr(v.target)}")
        if v.margin is not None:
            lines.append(f"{v.name}.margin = {repr(v.margin)}")
        if v.note:
            lines.append(f"{v.name}.note = {v.note}")
    lines.append(f"overall = {overall_status(verdicts)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_residuals(path, verdicts: list[Verdict]) -> None:
    lines = [f"# {RESIDUALS_SCHEMA}", "check,value,target,margin,status"]
    for v in verdicts:
        value = "" if v.value is None else repr(v.value)
        target = "" if v.target is None else repr(v.target)
        margin = "" if v.margin is None else repr(v.margin)
        lines.append(f"{v.name},{value},{target},{margin},{v.status}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _axes_figure(title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    ax.set_title(title)
    return fig, ax, plt


def _finish(fig, plt, path):
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_norms(series: da.NormSeries, opts: AnalysisOptions, path) -> None:
    """Log-log seminorms against 1+t with fitted and target slope overlays."""
    fig, ax, plt = _axes_figure("Sobolev seminorm decay")
    t1 = 1.0 + series.times
    for quantity, style in (("n", "-"), ("v", "--")):
        for k in opts.fit_ks:
            name = f"{quantity}_k{k}"
            if name not in series.columns:
                continue
            y = series.column(name)
            mask = y > 0
            if mask.sum() < 2:
                continue
            line, = ax.loglog(t1[mask], y[mask], style, label=name)
            try:
                fit = da.fit_decay(series, quantity, k, window=opts.window,
                                   tolerance=opts.slope_tolerance)
            except ValueError:
                continue
            xs = 1.0 + np.asarray(fit.window)
            ax.loglog(xs, np.exp(fit.intercept) * xs**fit.slope, ":",
                      color=line.get_color(),
                      label=f"{name} fit {fit.slope:+.3f}")
            anchor = np.exp(fit.intercept) * xs[0] ** fit.slope
            ax.loglog(xs, anchor * (xs / xs[0]) ** fit.target, "-.",
                      color="gray", linewidth=0.8)
    ax.set_xlabel("1 + t")
    ax.set_ylabel("seminorm")
    if ax.has_data():
        ax.legend(fontsize=7)
    _finish(fig, plt, path)


def plot_ratios(series: da.NormSeries, opts: AnalysisOptions, path) -> None:
    """Compensated ratios norm * (1+t)^{(d+2k)/4}; flat means sharp rate."""
    fig, ax, plt = _axes_figure("Lower-bound compensated ratios")
    t1 = 1.0 + series.times
    for quantity in ("n", "v"):
        for k in opts.lower_bound_ks:
            name = f"{quantity}_k{k}"
            if name not in series.columns:
                continue
            y = series.column(name)
            mask = y > 0
            if mask.sum() < 2:
                continue
            rate = -da.target_slope(series.dim, k)
            ax.semilogx(t1[mask], y[mask] * t1[mask] ** rate, label=name)
    ax.set_xlabel("1 + t")
    ax.set_ylabel("compensated ratio")
    if ax.has_data():
        ax.legend(fontsize=7)
    _finish(fig, plt, path)


def plot_energy(series: da.NormSeries, path) -> None:
    fig, ax, plt = _axes_figure("Energy functionals")
    t1 = 1.0 + series.times
    k = 0
    while f"E_{k}" in series.columns:
        y = series.column(f"E_{k}")
        mask = y > 0
        if mask.sum() >= 2:
            ax.loglog(t1[mask], y[mask], label=f"E_{k}")
        k += 1
    for name in ("E_low", "E_high"):
        if name in series.columns:
            y = series.column(name)
            mask = y > 0
            if mask.sum() >= 2:
                ax.loglog(t1[mask], y[mask], "--", label=name)
    ax.set_xlabel("1 + t")
    ax.set_ylabel("energy")
    if ax.has_data():
        ax.legend(fontsize=7)
    _finish(fig, plt, path)


def make_plots(series: da.NormSeries, out_dir: Path) -> list[Path]:
    opts = AnalysisOptions.from_metadata(series.metadata)
    paths = [out_dir / "norms.svg", out_dir / "ratios.svg", out_dir / "energy.svg"]
    plot_norms(series, opts, paths[0])
    plot_ratios(series, opts, paths[1])
    plot_energy(series, paths[2])
    return paths


def _resolve_out_dir(out_arg: str | None, label: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    if out_arg is None:
        return root / label
    out = Path(out_arg)
    return out if out.is_absolute() else root / out


def _write_manifest(out_dir: Path, command: str, config_echo: dict,
                    verdicts: list[Verdict], threads: int,
                    files: list[Path]) -> Path:
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "package_version": __version__,
        "command": command,
        "threads_requested": threads,
        "config": config_echo,
        "files": {p.name: {"bytes": p.stat().st_size} for p in files},
        "verdicts": {v.name: v.status for v in verdicts},
        "overall": overall_status(verdicts),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _config_echo(config: ExperimentConfig, dt_used: float) -> dict:
    return {
        "grid": {"dim": config.grid.dim, "n": config.grid.n,
                 "box_length": config.grid.box_length},
        "model": {"epsilon": config.params.epsilon, "u_bar": config.params.u_bar},
        "initial": {"kind": config.initial.kind,
                    "amplitude": config.initial.amplitude,
                    "sigma": config.initial.sigma,
                    "center": config.initial.center,
                    "seed": config.initial.seed,
                    "path": config.initial.path},
        "integrator": {"scheme": config.integrator.scheme,
                       "dt": dt_used,
                       "t_final": config.integrator.t_final,
                       "n_max": config.integrator.n_max,
                       "split_radius": config.integrator.split_radius,
                       "track_c": config.integrator.track_c},
        "label": config.label,
    }


def cmd_run(args) -> int:
    if (args.config is None) == (args.preset is None):
        print("run: provide exactly one of --config or --preset", file=sys.stderr)
        return 2
    if args.preset is not None:
        ref = resources.files("chemodecay").joinpath("presets", f"{args.preset}.cfg")
        if not ref.is_file():
            print(f"run: unknown preset {args.preset!r}", file=sys.stderr)
            return 2
        with resources.as_file(ref) as preset_path:
            config = parse_config(preset_path)
    else:
        config = parse_config(args.config)

    out_dir = _resolve_out_dir(args.out, config.label)
    out_dir.mkdir(parents=True, exist_ok=True)

    initial = cm.make_initial(config.initial, config.grid, config.params)
    extra = dict(config.analysis.to_metadata())
    extra.update({
        "initial_kind": config.initial.kind,
        "initial_amplitude": repr(config.initial.amplitude),
        "initial_seed": config.initial.seed,
        "label": config.label,
    })
    if config.initial.sigma is not None:
        extra["initial_sigma"] = repr(config.initial.sigma)
    trajectory = ti.run(initial, config.params, config.integrator,
                        linear_only=args.linear_only, extra_metadata=extra)

    files: list[Path] = []
    series_path = out_dir / "series.csv"
    trajectory.write_csv(series_path)
    files.append(series_path)

    sc.save_snapshot(out_dir / "initial_n.snap", initial.n, "n", initial.time)
    files.append(out_dir / "initial_n.snap")
    for ax, comp in enumerate(initial.v.components):
        p = out_dir / f"initial_v{ax}.snap"
        sc.save_snapshot(p, comp, f"v{ax}", initial.time)
        files.append(p)
    if trajectory.final_state is not None:
        final = trajectory.final_state
        sc.save_snapshot(out_dir / "final_n.snap", final.n, "n", final.time)
        files.append(out_dir / "final_n.snap")
        for ax, comp in enumerate(final.v.components):
            p = out_dir / f"final_v{ax}.snap"
            sc.save_snapshot(p, comp, f"v{ax}", final.time)
            files.append(p)

    series = da.NormSeries.from_trajectory(trajectory)
    verdicts = analyze_series(series)
    if trajectory.failed:
        verdicts.append(Verdict("integration", "FAIL", note=trajectory.failure_reason))

    verdicts_path = out_dir / "verdicts.txt"
    write_verdicts(verdicts_path, verdicts)
    files.append(verdicts_path)
    residuals_path = out_dir / "residuals.csv"
    write_residuals(residuals_path, verdicts)
    files.append(residuals_path)
    files.extend(make_plots(series, out_dir))

    dt_used = float(series.metadata["dt"])
    _write_manifest(out_dir, "run", _config_echo(config, dt_used), verdicts,
                    args.threads, files)

    status = overall_status(verdicts)
    if not args.quiet:
        for v in verdicts:
            extra_note = f"  ({v.note})" if v.note else ""
            value = "" if v.value is None else f" value={v.value:.6g}"
            print(f"{v.name}: {v.status}{value}{extra_note}")
        print(f"overall: {status}")
        print(f"artifacts in {out_dir}")
    return 0 if status == "PASS" else 1


def cmd_analyze(args) -> int:
    series = da.NormSeries.from_csv(args.series)
    out_dir = _resolve_out_dir(args.out, "analysis") if args.out is not None \
        else Path(args.series).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    verdicts = analyze_series(series)
    write_verdicts(out_dir / "verdicts.txt", verdicts)
    write_residuals(out_dir / "residuals.csv", verdicts)
    status = overall_status(verdicts)
    if not args.quiet:
        for v in verdicts:
            print(f"{v.name}: {v.status}")
        print(f"overall: {status}")
    return 0 if status == "PASS" else 1


def cmd_plot(args) -> int:
    out_dir = _resolve_out_dir(args.out, "plots")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        series = da.NormSeries.from_csv(args.series)
    except ValueError as exc:
        if "no data rows" in str(exc):
            fig, ax, plt = _axes_figure("empty series")
            ax.set_xlabel("1 + t")
            ax.set_ylabel("seminorm")
            _finish(fig, plt, out_dir / "norms.svg")
            if not args.quiet:
                print(f"empty series; wrote axes-only plot to {out_dir}")
            return 0
        raise
    paths = make_plots(series, out_dir)
    if not args.quiet:
        print("wrote " + ", ".join(p.name for p in paths))
    return 0


def _oracle_green() -> float:
    worst = 0.0
    magnitudes = np.logspace(-3.0, 2.0, 24)
    for dim in (2, 3):
        for eps in (0.0, 0.5, 1.0, 2.0):
            for mag in magnitudes:
                xi = np.full(dim, mag / np.sqrt(dim))
                a_mat = lsg.generator_matrix(xi, eps)
                for t in (0.01, 1.0, 10.0):
                    g = lsg.green_hat(t, xi, eps)
                    e = lsg.matrix_exp_oracle(a_mat, t)
                    scale = max(float(np.max(np.abs(e))), 1e-300)
                    worst = max(worst, float(np.max(np.abs(g - e))) / scale)
    return worst


def _oracle_semigroup() -> float:
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        dim = int(rng.integers(2, 4))
        eps = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
        xi = rng.normal(size=dim) * 10.0 ** rng.uniform(-2.0, 1.0)
        t, s = 10.0 ** rng.uniform(-2.0, 0.7, size=2)
        direct = lsg.green_hat(t + s, xi, eps)
        composed = lsg.green_hat(t, xi, eps) @ lsg.green_hat(s, xi, eps)
        scale = max(float(np.max(np.abs(direct))), 1e-300)
        worst = max(worst, float(np.max(np.abs(composed - direct))) / scale)
    return worst


def _oracle_projector() -> float:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        dim = int(rng.integers(2, 4))
        eps = float(rng.choice([0.0, 0.5, 1.0, 2.0]))
        xi = rng.normal(size=dim) * 10.0 ** rng.uniform(-1.5, 0.8)
        try:
            p0, p_plus, p_minus = lsg.spectral_projectors(xi, eps)
        except lsg.EigenvalueCollisionError:
            continue
        total = p0 + p_plus + p_minus
        worst = max(worst, float(np.max(np.abs(total - np.eye(dim + 1)))))
    return worst


def _oracle_generator() -> tuple[float, float]:
    ratios = []
    for dim in (2, 3):
        for eps in (0.0, 1.0):
            for mag in (0.1, 1.0, 3.0):
                xi = np.full(dim, mag / np.sqrt(dim))
                a_mat = lsg.generator_matrix(xi, eps)
                errs = []
                for h in (1e-4, 5e-5):
                    fd = (lsg.green_hat(h, xi, eps) - np.eye(dim + 1)) / h
                    errs.append(float(np.max(np.abs(fd - a_mat))))
                ratios.append(errs[0] / errs[1])
    return min(ratios), max(ratios)


def cmd_oracle(args) -> int:
    suites = ORACLE_SUITES if args.suite == "all" else (args.suite,)
    all_pass = True
    for suite in suites:
        if suite == "green":
            worst = _oracle_green()
            ok = worst <= 1e-9
            print(f"green: max relative error = {worst:.3e} "
                  f"(threshold 1e-09) {'PASS' if ok else 'FAIL'}")
        elif suite == "semigroup":
            worst = _oracle_semigroup()
            ok = worst <= 1e-9
            print(f"semigroup: max relative error = {worst:.3e} "
                  f"(threshold 1e-09) {'PASS' if ok else 'FAIL'}")
        elif suite == "projector":
            worst = _oracle_projector()
            ok = worst <= 1e-12
            print(f"projector: max identity defect = {worst:.3e} "
                  f"(threshold 1e-12) {'PASS' if ok else 'FAIL'}")
        else:
            lo, hi = _oracle_generator()
            ok = 1.7 <= lo and hi <= 2.3
            print(f"generator: halving ratios in [{lo:.3f}, {hi:.3f}] "
                  f"(required [1.7, 2.3]) {'PASS' if ok else 'FAIL'}")
        all_pass = all_pass and ok
    if args.out is not None:
        out_dir = _resolve_out_dir(args.out, "oracle")
        out_dir.mkdir(parents=True, exist_ok=True)
        lsg.dump_green_csv(out_dir / "green_table.csv",
                           np.logspace(-3, 2, 11), (0.0, 0.5, 1.0, 2.0),
                           (0.01, 1.0, 10.0))
        print(f"green table written to {out_dir / 'green_table.csv'}")
    return 0 if all_pass else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chemodecay",
        description="Pseudospectral decay experiments for a dissipative "
                    "chemotaxis system on a periodic box.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None,
                       help="output directory (relative paths resolve under "
                            f"${OUTPUT_ROOT_ENV} when set)")
        p.add_argument("--threads", type=int, default=0,
                       help="requested worker threads; 0 = auto. Recorded in "
                            "the manifest; the numerics run single-threaded.")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output")

    run_p = sub.add_parser("run", help="run one experiment from a config file")
    run_p.add_argument("--config", default=None, help="path to a config file")
    run_p.add_argument("--preset", default=None,
                       help="name of a bundled preset (e.g. d2_gaussian)")
    run_p.add_argument("--linear-only", action="store_true",
                       help="drop the nonlinear fluxes; evolve the linearized "
                            "system only")
    common(run_p)
    run_p.set_defaults(handler=cmd_run)

    an_p = sub.add_parser("analyze", help="recompute verdicts from a series CSV")
    an_p.add_argument("--series", required=True, help="path to series.csv")
    common(an_p)
    an_p.set_defaults(handler=cmd_analyze)

    plot_p = sub.add_parser("plot", help="render SVG plots from a series CSV")
    plot_p.add_argument("--series", required=True, help="path to series.csv")
    common(plot_p)
    plot_p.set_defaults(handler=cmd_plot)

    or_p = sub.add_parser("oracle", help="run the closed-form verification suites")
    or_p.add_argument("--suite", default="all",
                      choices=("all",) + ORACLE_SUITES)
    common(or_p)
    or_p.set_defaults(handler=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

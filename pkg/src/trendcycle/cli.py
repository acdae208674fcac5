"""Command-line entry point: estimate, decompose, forecast, simulate, diagnose.

Every command reads one YAML configuration file; ``--seed``, ``--jobs`` and
``--out`` override the corresponding entries. Exit codes: 0 success,
2 configuration error, 3 data error, 4 estimation failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from . import benchmarks as bm
from . import decomposition as dc
from . import forecasting as fc
from . import sampler as sm
from . import statespace as ss
from .data import DataError, TimeSeriesPanel, assemble_panel, load_csv, load_schema
from .priors import PriorSpec
from .spec import PRESETS, ModelSpec, SpecError, load_spec, reference_parameters

log = logging.getLogger("trendcycle")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    spec: ModelSpec
    prior: PriorSpec
    sampler: sm.SamplerConfig
    seed: int
    out: Path
    jobs: int = 1
    chains: int = 1
    data: dict = field(default_factory=dict)
    forecast: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        # output location and parallelism do not change results
        doc = {k: v for k, v in self.raw.items() if k not in ("out", "jobs")}
        canon = json.dumps(doc, sort_keys=True, default=str)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _versions() -> dict:
    import numba
    import scipy
    return {"trendcycle": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pandas": pd.__version__, "numba": numba.__version__}


def load_config(path, seed=None, jobs=None, out=None, need_data: bool = True) -> RunConfig:
    """Read and fully validate a run configuration before any computation."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    known = {"data", "model", "prior", "sampler", "forecast", "simulate", "seed", "out", "jobs", "chains"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    if seed is not None:
        raw["seed"] = int(seed)
    if jobs is not None:
        raw["jobs"] = int(jobs)
    if out is not None:
        # a command-line output directory is relative to the working directory
        raw["out"] = str(Path(out).resolve())
    base = path.parent
    seed_v = int(raw.get("seed", 0))

    model = raw.get("model", {"preset": "baseline"}) or {}
    try:
        if "spec_file" in model:
            spec_path = Path(model["spec_file"])
            spec_path = spec_path if spec_path.is_absolute() else base / spec_path
            if not spec_path.exists():
                raise ConfigError(f"model spec file not found: {spec_path}")
            spec = load_spec(spec_path)
        else:
            preset = model.get("preset", "baseline")
            if preset not in PRESETS:
                raise ConfigError(f"unknown model preset {preset!r}; choose from {sorted(PRESETS)}")
            spec = PRESETS[preset]()
        prior = PriorSpec.from_dict(raw.get("prior"))
        scfg = dict(raw.get("sampler") or {})
        scfg["seed"] = seed_v
        sampler = sm.SamplerConfig.from_dict(scfg)
    except (SpecError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    data = dict(raw.get("data") or {})
    if need_data:
        if "path" not in data:
            raise ConfigError("config needs data.path")
        dpath = Path(data["path"])
        dpath = dpath if dpath.is_absolute() else base / dpath
        if not dpath.exists():
            raise DataError(f"data file not found: {dpath}")
        data["path"] = dpath
        if isinstance(data.get("schema"), str):
            spath = Path(data["schema"])
            spath = spath if spath.is_absolute() else base / spath
            if not spath.exists():
                raise ConfigError(f"schema file not found: {spath}")
            data["schema"] = spath
    forecast = dict(raw.get("forecast") or {})
    if forecast:
        for key in ("presample_start", "eval_start", "eval_end"):
            if key in forecast:
                try:
                    pd.Period(str(forecast[key]), "Q")
                except ValueError as exc:
                    raise ConfigError(f"forecast.{key}: {exc}") from exc
    out_dir = Path(raw.get("out", "out"))
    out_dir = out_dir if out_dir.is_absolute() else base / out_dir
    return RunConfig(raw, base, spec, prior, sampler, seed_v, out_dir, int(raw.get("jobs", 1)),
                     int(raw.get("chains", 1)), data, forecast, dict(raw.get("simulate") or {}))


def load_panel(cfg: RunConfig) -> TimeSeriesPanel:
    d = cfg.data
    schema = d.get("schema")
    if schema is None:
        schema = {o: o for o in cfg.spec.observables}
    elif isinstance(schema, Path):
        schema = load_schema(schema)
    series = load_csv(d["path"], schema, d.get("date_column"))
    window = d.get("window")
    panel = assemble_panel(series, tuple(window) if window else None)
    missing = [o for o in cfg.spec.observables if o not in panel.ids]
    if missing:
        raise DataError(f"data lacks observables required by the model: {missing}")
    return panel.select(cfg.spec.observables)


def _manifest(cfg: RunConfig, command: str, extra: dict | None = None) -> dict:
    doc = {"command": command, "config_hash": cfg.hash, "seed": cfg.seed, "versions": _versions()}
    doc.update(extra or {})
    return doc


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format="%.10g")


# ---------------------------------------------------------------------------
# commands

def cmd_estimate(cfg: RunConfig) -> int:
    panel = load_panel(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + i for i in range(cfg.chains)]
    tasks = [(cfg.spec, cfg.prior, panel, replace(cfg.sampler, seed=s)) for s in seeds]
    if cfg.jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            samples = list(ex.map(_run_chain_task, tasks))
    else:
        samples = [_run_chain_task(t) for t in tasks]
    man = _manifest(cfg, "estimate")
    for i, s in enumerate(samples):
        sm.save_sample(s, cfg.out / f"chain_{i}", extra={"manifest": man})
    _diagnose_to(samples, cfg, cfg.out)
    _write_json(cfg.out / "manifest.json", man)
    log.info("wrote %d chain(s) to %s", len(samples), cfg.out)
    return EXIT_OK


def _run_chain_task(args):
    spec, prior, panel, scfg = args
    return sm.run_chain(spec, prior, panel, scfg)


def _diagnose_to(samples, cfg: RunConfig, out: Path) -> None:
    if min(s.n_draws for s in samples) < 10:
        log.warning("fewer than 10 kept draws: diagnostics skipped")
        return
    table = sm.diagnostics(samples, cfg.prior, rng_seed=cfg.seed)
    table.reset_index().to_csv(out / "diagnostics.csv", index=False, float_format="%.10g")
    _write_json(out / "diagnostics.json", {
        "acceptance": table.attrs["acceptance"],
        "min_ess": float(table["ess"].min()),
        "max_rhat": float(table["rhat"].max()),
        **_manifest(cfg, "diagnose"),
    })


def _chain_dirs(cfg: RunConfig, chains) -> list[Path]:
    if chains:
        dirs = [Path(c) for c in chains]
    else:
        dirs = sorted(cfg.out.glob("chain_*"))
    if not dirs:
        raise ConfigError(f"no chain directories given and none found under {cfg.out}")
    for d in dirs:
        if not (d / "chain.json").exists():
            raise ConfigError(f"not a chain directory: {d}")
    return dirs


def cmd_decompose(cfg: RunConfig, chains=None) -> int:
    dirs = _chain_dirs(cfg, chains)
    panel = load_panel(cfg)
    sample = sm.load_sample(dirs[0])
    if sample.states is None:
        raise sm.EstimationError(f"{dirs[0]} holds no state draws; re-run estimate with draw_states enabled")
    window = panel
    if sample.dates is not None and len(sample.dates):
        window = panel.window(sample.dates[0], sample.dates[-1])
    out = cfg.out / "decomposition"
    out.mkdir(parents=True, exist_ok=True)
    decomp = dc.historical_decomposition(sample, cfg.spec, window)
    _write_csv(decomp.to_tidy(), out / "decomposition.csv")
    summary = dc.decomposition_summary(decomp)
    if "y" in sample.observables and "BC" in [c.name for c in cfg.spec.common_cycles]:
        gap = dc.output_gap(sample, cfg.spec)
        _write_csv(_tidy_bands(gap, "output_gap"), out / "output_gap.csv")
    if {"pi", "u"} <= set(sample.observables) and "BC" in decomp.components:
        summary["phillips"] = dc.phillips_slope(decomp, window)
    frames = []
    for name, fr in dc.trend_report(sample, cfg.spec, window).items():
        bands = fr[[c for c in fr.columns if not str(c).startswith("overlay:")]]
        frames.append(_tidy_bands(bands, name))
    _write_csv(pd.concat(frames, ignore_index=True), out / "trends.csv")
    spec_frames, peaks = [], {}
    for c in cfg.spec.common_cycles:
        curve = dc.posterior_spectrum(sample, cfg.spec, c.name)
        long = curve.bands.stack().rename("value").reset_index()
        long.columns = ["omega", "quantile", "value"]
        long.insert(0, "cycle", c.name)
        spec_frames.append(long)
        peaks[c.name] = {"peak_frequency": curve.peak_frequency, "peak_period_quarters": curve.peak_period}
    if spec_frames:
        _write_csv(pd.concat(spec_frames, ignore_index=True), out / "spectrum.csv")
    summary["spectral_peaks"] = peaks
    summary.update(_manifest(cfg, "decompose", {"chain": str(dirs[0])}))
    _write_json(out / "summary.json", summary)
    return EXIT_OK


def _tidy_bands(frame: pd.DataFrame, series: str) -> pd.DataFrame:
    long = frame.stack().rename("value").reset_index()
    long.columns = ["date", "quantile", "value"]
    long["date"] = long["date"].astype(str)
    long.insert(1, "series", series)
    return long


def cmd_forecast(cfg: RunConfig, models=None) -> int:
    panel = load_panel(cfg)
    f = dict(cfg.forecast)
    try:
        windows = fc.OosWindows(str(f.pop("presample_start", panel.start)), str(f.pop("eval_start")),
                                str(f.pop("eval_end", panel.end)))
    except KeyError as exc:
        raise ConfigError("forecast.eval_start is required") from exc
    model_list = tuple(models) if models else tuple(f.pop("models", fc.MODELS))
    f.pop("models", None)
    sampler_doc = dict(cfg.raw.get("sampler") or {})
    sampler_doc.update(f.pop("sampler", {}) or {})
    sampler_doc.setdefault("iterations", 10_000)
    sampler_doc.setdefault("burn_in", sampler_doc["iterations"] // 2)
    sampler_doc.setdefault("draw_states", False)
    try:
        ocfg = fc.OosConfig(
            horizons=tuple(int(h) for h in f.pop("horizons", fc.HORIZONS)),
            models=model_list,
            variables=tuple(f.pop("variables")) if "variables" in f else None,
            reestimate_every=int(f.pop("reestimate_every", 4)),
            sampler=sm.SamplerConfig.from_dict(sampler_doc),
            ucsv=bm.UcsvConfig(**(f.pop("ucsv", {}) or {})),
            prior=cfg.prior,
            forecast_draws=int(f.pop("forecast_draws", 200)),
            seed=cfg.seed,
            jobs=cfg.jobs,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"forecast config: {exc}") from exc
    if f:
        raise ConfigError(f"unknown forecast settings: {sorted(f)}")
    try:
        windows.validate(panel)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = fc.run_oos(panel, model_list, windows, ocfg, cfg.spec)
    out = cfg.out / "forecast"
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(res.frame(), out / "forecasts.csv")
    if res.runs:
        ref = "tc" if "tc" in model_list else model_list[0]
        _write_csv(fc.evaluation_table(res.runs, "rw", ref) if "rw" in model_list
                   else pd.DataFrame(columns=["model", "variable", "h", "rel_rmse", "dm_stat", "dm_p", "n"]),
                   out / "evaluation.csv")
    rev_rows = []
    for comp, info in fc.factor_revisions(res.factor_paths).items():
        long = info["paths"].stack().rename("value").reset_index()
        long.columns = ["origin", "date", "value"]
        long["date"] = long["date"].astype(str)
        long.insert(0, "component", comp)
        rev_rows.append(long)
    rev = pd.concat(rev_rows, ignore_index=True) if rev_rows else pd.DataFrame(
        columns=["component", "origin", "date", "value"])
    _write_csv(rev, out / "revisions.csv")
    _write_json(out / "manifest.json", _manifest(cfg, "forecast", {"skipped": res.skipped}))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    s = cfg.simulate
    T = int(s.get("T", 300))
    start = str(s.get("start", "1984Q1"))
    theta = reference_parameters(cfg.spec, s.get("theta"))
    sys_ = ss.assemble(cfg.spec, theta)
    panel, states = ss.simulate(sys_, T, cfg.seed, float(s.get("diffuse_sd", 0.0)), start=start,
                                return_states=True)
    out = cfg.out / "simulate"
    out.mkdir(parents=True, exist_ok=True)
    frame = panel.to_frame()
    frame.index = [str(p) for p in frame.index]
    frame.index.name = "date"
    frame.to_csv(out / "panel.csv", float_format="%.17g")
    schema = {o: {"mnemonic": o, "transformation": "levels"} for o in panel.ids}
    (out / "schema.yaml").write_text(yaml.safe_dump({"columns": schema}, sort_keys=False))
    groups = dc.component_groups(cfg.spec, sys_.labels)
    rows = []
    for comp, idx in groups.items():
        contrib = states[:, idx] @ sys_.Z[:, idx].T
        for j, o in enumerate(panel.ids):
            if np.any(sys_.Z[j, idx] != 0):
                rows.append(pd.DataFrame({"date": [str(p) for p in panel.dates], "variable": o,
                                          "component": comp, "value": contrib[:, j]}))
    _write_csv(pd.concat(rows, ignore_index=True), out / "components.csv")
    est_cfg = {k: v for k, v in cfg.raw.items() if k not in ("data", "out", "simulate")}
    est_cfg["data"] = {"path": "panel.csv", "schema": "schema.yaml"}
    est_cfg["out"] = "estimate"
    (out / "config.yaml").write_text(yaml.safe_dump(est_cfg, sort_keys=True))
    _write_json(out / "manifest.json", _manifest(cfg, "simulate", {"theta": theta.as_dict(), "T": T}))
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, chains=None) -> int:
    dirs = _chain_dirs(cfg, chains)
    samples = [sm.load_sample(d) for d in dirs]
    if min(s.n_draws for s in samples) < 10:
        raise sm.EstimationError("diagnostics need at least 10 draws per chain")
    cfg.out.mkdir(parents=True, exist_ok=True)
    _diagnose_to(samples, cfg, cfg.out)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trendcycle", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("estimate", "decompose", "forecast", "simulate", "diagnose"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--jobs", type=int, help="maximum parallel chains or origins")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("decompose", "diagnose"):
            sp.add_argument("--chain", action="append", help="chain directory (repeatable)")
        if name == "forecast":
            sp.add_argument("--models", help="comma-separated subset of tc,rw,ucsv")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        models = None
        if getattr(args, "models", None):
            models = [m.strip() for m in args.models.split(",") if m.strip()]
            bad = set(models) - set(fc.MODELS)
            if bad:
                raise ConfigError(f"unknown models {sorted(bad)}")
        cfg = load_config(args.config, args.seed, args.jobs, args.out,
                          need_data=args.command not in ("simulate", "diagnose"))
        if args.command == "estimate":
            return cmd_estimate(cfg)
        if args.command == "decompose":
            return cmd_decompose(cfg, args.chain)
        if args.command == "forecast":
            return cmd_forecast(cfg, models)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_diagnose(cfg, args.chain)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (sm.EstimationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())

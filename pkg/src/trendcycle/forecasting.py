"""Expanding-window pseudo-out-of-sample forecasting and its evaluation."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import stats

from . import benchmarks as bm
from . import statespace as ss
from .data import TimeSeriesPanel
from .priors import PriorSpec
from .sampler import PosteriorSample, SamplerConfig, run_chain
from .spec import ModelSpec, ParameterVector

HORIZONS = (1, 2, 4, 8)
MODELS = ("tc", "rw", "ucsv")
UCSV_VARIABLES = ("pi", "pi_c")


@dataclass(frozen=True)
class ForecastRun:
    model: str
    variable: str
    origin: pd.Period
    h: int
    forecast: float
    realized: float

    @property
    def target(self) -> pd.Period:
        return self.origin + self.h

    @property
    def error(self) -> float:
        return self.realized - self.forecast


@dataclass(frozen=True)
class OosWindows:
    """Origins run from ``eval_start`` to ``eval_end``; a forecast is kept when
    its target date is no later than ``eval_end``. ``presample_start`` is the
    first date of every estimation window."""

    presample_start: str
    eval_start: str
    eval_end: str

    def origins(self) -> pd.PeriodIndex:
        return pd.period_range(pd.Period(self.eval_start, "Q"), pd.Period(self.eval_end, "Q"), freq="Q")

    def validate(self, panel: TimeSeriesPanel) -> None:
        ps, es, ee = (pd.Period(x, "Q") for x in (self.presample_start, self.eval_start, self.eval_end))
        if not ps < es:
            raise ValueError("pre-sample must end before the evaluation sample starts")
        if ee > panel.end:
            raise ValueError(f"evaluation end {ee} is beyond the data end {panel.end}")
        if es > ee:
            raise ValueError("evaluation start is after evaluation end")
        if ps < panel.start:
            raise ValueError(f"pre-sample start {ps} precedes the data start {panel.start}")


@dataclass(frozen=True)
class OosConfig:
    horizons: tuple = HORIZONS
    models: tuple = MODELS
    variables: tuple | None = None
    ucsv_variables: tuple = UCSV_VARIABLES
    reestimate_every: int = 4
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(
        iterations=10_000, burn_in=5_000, thin=10, draw_states=False))
    ucsv: bm.UcsvConfig = bm.UcsvConfig()
    prior: PriorSpec = PriorSpec()
    forecast_draws: int = 200
    factor_components: tuple = ("BC", "EP", "mu_pi")
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.reestimate_every < 1:
            raise ValueError("reestimate_every must be at least 1")
        unknown = set(self.models) - set(MODELS)
        if unknown:
            raise ValueError(f"unknown models {sorted(unknown)}; choose from {MODELS}")
        if any(int(h) < 1 for h in self.horizons):
            raise ValueError("horizons must be positive")


@dataclass
class OosResult:
    runs: list
    skipped: list
    factor_paths: dict

    def frame(self) -> pd.DataFrame:
        rows = [{**asdict(r), "origin": str(r.origin), "target": str(r.target)} for r in self.runs]
        cols = ["model", "variable", "origin", "target", "h", "forecast", "realized"]
        return pd.DataFrame(rows, columns=cols)


def origin_seed(base: int, origin: pd.Period, tag: str) -> np.random.SeedSequence:
    """Deterministic per-origin, per-model seed."""
    return np.random.SeedSequence([int(base), int(origin.ordinal) + 10_000, sum(map(ord, tag))])


def _seed_int(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint32)[0])


# ---------------------------------------------------------------------------
# trend-cycle model forecasts

def estimate_tc(spec: ModelSpec, window: TimeSeriesPanel, cfg: OosConfig, origin: pd.Period) -> PosteriorSample:
    scfg = replace(cfg.sampler, seed=_seed_int(origin_seed(cfg.seed, origin, "tc")))
    return run_chain(spec, cfg.prior, window, scfg)


def _thin_draws(draws: np.ndarray, k: int) -> np.ndarray:
    if draws.shape[0] <= k:
        return draws
    idx = np.linspace(0, draws.shape[0] - 1, k).round().astype(int)
    return draws[idx]


def tc_forecast(draws: np.ndarray, layout, spec: ModelSpec, window: TimeSeriesPanel, horizons,
                factor_components=()) -> tuple[dict, pd.DataFrame | None]:
    """Point forecasts in raw units: per parameter draw, filter to the window
    end, iterate the transition, map through the measurement equation; take
    the median across draws.

    Returns ``({(variable, h): value}, factor medians or None)``.
    """
    bound = spec.with_scale_factors(dict(zip(window.ids, window.scale_factors)))
    pan = window.select(spec.observables)
    y = pan.values
    scales = pan.scale_factors
    hmax = max(horizons)
    preds = np.empty((draws.shape[0], hmax, len(spec.observables)))
    factors = []
    a1 = None
    for i, row in enumerate(draws):
        sys = ss.assemble(bound, ParameterVector(layout, row), a1=a1)
        if a1 is None:
            a1 = ss.initial_trend_means(bound, pan, sys)
            sys = sys.with_initial(a1=a1)
        fr = ss.kalman_filter(sys, y)
        path = ss.forecast_states(sys, fr.a_filt[-1], hmax)
        preds[i] = (path @ sys.Z.T + sys.d) * scales
        if factor_components:
            mean, _ = ss._smooth_from(sys, fr, False)
            factors.append(_factor_values(sys, bound, mean, factor_components, dict(zip(pan.ids, scales))))
    med = np.median(preds, axis=0)
    out = {(v, int(h)): float(med[h - 1, j]) for j, v in enumerate(spec.observables) for h in horizons}
    fac = None
    if factors:
        fac = pd.DataFrame(np.median(np.array(factors), axis=0), index=pan.dates, columns=list(factor_components))
    return out, fac


def _factor_values(sys, spec: ModelSpec, mean: np.ndarray, names, scales: dict) -> np.ndarray:
    cols = []
    for name in names:
        if name in sys.labels:
            j = sys.state(name)
            try:
                tr = spec.trend(name)
            except KeyError:
                cols.append(mean[:, j])
                continue
            o = tr.observables[0]
            cols.append(mean[:, j] * spec.trend_loading(tr, o) * scales[o])
        else:
            cols.append(np.full(mean.shape[0], np.nan))
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# the exercise

def _realized(panel: TimeSeriesPanel, variable: str, target: pd.Period) -> float:
    if target > panel.end:
        return float("nan")
    return float(panel.raw[panel.dates.get_loc(target), panel.ids.index(variable)])


def _groups(origins: pd.PeriodIndex, every: int) -> list:
    return [list(origins[i:i + every]) for i in range(0, len(origins), every)]


def _run_group(args):
    panel, spec, windows, cfg, group = args
    runs, skipped, factors = [], [], {}
    variables = cfg.variables or tuple(panel.ids)
    eval_end = pd.Period(windows.eval_end, "Q")
    start = pd.Period(windows.presample_start, "Q")
    tc_draws = None
    for k, origin in enumerate(group):
        try:
            window = panel.window(start, origin)
        except ValueError as exc:
            skipped.append({"model": "*", "origin": str(origin), "reason": str(exc)})
            continue
        keep = [int(h) for h in cfg.horizons if origin + int(h) <= eval_end]
        if "tc" in cfg.models and spec is not None:
            try:
                if k == 0 or tc_draws is None:
                    sample = estimate_tc(spec, window, cfg, origin)
                    layout = sample.layout
                    tc_draws = _thin_draws(sample.draws, cfg.forecast_draws)
                fc, fac = tc_forecast(tc_draws, layout, spec, window, keep or [1], cfg.factor_components)
                if fac is not None:
                    factors[str(origin)] = fac
                for v in variables:
                    for h in keep:
                        runs.append(ForecastRun("tc", v, origin, h, fc[(v, h)],
                                                _realized(panel, v, origin + h)))
            except Exception as exc:  # keep going; one failed origin must not abort the exercise
                skipped.append({"model": "tc", "origin": str(origin), "reason": f"{type(exc).__name__}: {exc}"})
        if "rw" in cfg.models:
            for v in variables:
                col = window.raw[:, window.ids.index(v)]
                try:
                    for h in keep:
                        runs.append(ForecastRun("rw", v, origin, h, bm.rw_drift_forecast(col, h),
                                                _realized(panel, v, origin + h)))
                except ValueError as exc:
                    skipped.append({"model": "rw", "variable": v, "origin": str(origin), "reason": str(exc)})
        if "ucsv" in cfg.models:
            for v in (x for x in cfg.ucsv_variables if x in variables and x in panel.ids):
                col = window.raw[:, window.ids.index(v)]
                try:
                    res = bm.ucsv_fit_forecast(col, 1, cfg.ucsv, _seed_int(origin_seed(cfg.seed, origin, "ucsv:" + v)))
                    for h in keep:
                        runs.append(ForecastRun("ucsv", v, origin, h, res.forecast, _realized(panel, v, origin + h)))
                except (ValueError, FloatingPointError) as exc:
                    skipped.append({"model": "ucsv", "variable": v, "origin": str(origin), "reason": str(exc)})
    return runs, skipped, factors


def run_oos(panel: TimeSeriesPanel, models, windows: OosWindows, cfg: OosConfig = OosConfig(),
            spec: ModelSpec | None = None) -> OosResult:
    """Recursive expanding-window forecasts for every origin in the
    evaluation range.

    The trend-cycle model (``"tc"`` in ``models``, requires ``spec``) is
    re-estimated every ``cfg.reestimate_every`` origins; in between, the
    latest parameter draws are reused and only the filter is re-run on the
    longer window. Failures at an origin are recorded in ``skipped``.
    """
    windows.validate(panel)
    cfg = replace(cfg, models=tuple(models))
    if "tc" in cfg.models and spec is None:
        raise ValueError("the trend-cycle model needs a model specification")
    groups = _groups(windows.origins(), cfg.reestimate_every)
    tasks = [(panel, spec, windows, cfg, g) for g in groups]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            results = list(ex.map(_run_group, tasks))
    else:
        results = [_run_group(t) for t in tasks]
    runs, skipped, factors = [], [], {}
    for r, s, f in results:
        runs += r
        skipped += s
        factors.update(f)
    return OosResult(runs, skipped, factors)


# ---------------------------------------------------------------------------
# evaluation

def _errors(runs, model: str) -> dict:
    return {(r.variable, r.h, r.origin): r.error for r in runs
            if r.model == model and math.isfinite(r.realized) and math.isfinite(r.forecast)}


def relative_rmse(runs, benchmark: str = "rw") -> pd.DataFrame:
    """RMSE of each model over RMSE of ``benchmark`` on common origins."""
    bench = _errors(runs, benchmark)
    if not bench:
        raise ValueError(f"benchmark {benchmark!r} has no evaluable forecasts")
    rows = []
    for model in dict.fromkeys(r.model for r in runs):
        err = _errors(runs, model)
        cells = sorted({(v, h) for v, h, _ in err})
        for v, h in cells:
            common = sorted(o for (vv, hh, o) in err if (vv, hh) == (v, h) and (v, h, o) in bench)
            if not common:
                raise ValueError(f"no common origins for {model} vs {benchmark} ({v}, h={h})")
            a = np.array([err[(v, h, o)] for o in common])
            b = np.array([bench[(v, h, o)] for o in common])
            rows.append({"model": model, "variable": v, "h": h,
                         "rel_rmse": math.sqrt(np.mean(a * a)) / math.sqrt(np.mean(b * b)),
                         "n": len(common)})
    return pd.DataFrame(rows, columns=["model", "variable", "h", "rel_rmse", "n"])


@dataclass(frozen=True)
class DMResult:
    statistic: float
    p_value: float


def hln_factor(T: int, h: int) -> float:
    return math.sqrt((T + 1 - 2 * h + h * (h - 1) / T) / T)


def dm_test(errors_a, errors_b, h: int) -> DMResult:
    """Diebold-Mariano test of equal squared-error loss with the
    Harvey-Leybourne-Newbold small-sample correction.

    Positive statistics mean ``errors_a`` has the larger loss. The long-run
    variance uses a rectangular window of ``h - 1`` autocovariances; if that
    estimate is negative the lag-zero variance is used instead.
    """
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("error vectors must be one-dimensional and of equal length")
    T = a.size
    if T < 10:
        raise ValueError("DM test needs at least 10 paired errors")
    if h < 1:
        raise ValueError("horizon must be positive")
    d = a * a - b * b
    dbar = d.mean()
    dc = d - dbar
    gamma = [float(dc[k:] @ dc[:T - k]) / T for k in range(min(h, T))]
    lrv = gamma[0] + 2.0 * sum(gamma[1:])
    if lrv < 0:
        lrv = gamma[0]
    if lrv <= 0:
        return DMResult(0.0, 1.0)
    dm = dbar / math.sqrt(lrv / T)
    stat = hln_factor(T, h) * dm
    p = 2.0 * stats.t.sf(abs(stat), df=T - 1)
    return DMResult(float(stat), float(min(max(p, 0.0), 1.0)))


def evaluation_table(runs, benchmark: str = "rw", reference: str = "tc") -> pd.DataFrame:
    """Relative RMSE against ``benchmark`` plus a DM test of each model
    against ``reference`` on their common origins."""
    table = relative_rmse(runs, benchmark)
    ref = _errors(runs, reference)
    stat, pval = [], []
    for row in table.itertuples():
        if row.model == reference or not ref:
            stat.append(np.nan)
            pval.append(np.nan)
            continue
        err = _errors(runs, row.model)
        common = sorted(o for (v, h, o) in err if v == row.variable and h == row.h and (v, h, o) in ref)
        if len(common) < 10:
            stat.append(np.nan)
            pval.append(np.nan)
            continue
        res = dm_test([err[(row.variable, row.h, o)] for o in common],
                      [ref[(row.variable, row.h, o)] for o in common], row.h)
        stat.append(res.statistic)
        pval.append(res.p_value)
    table["dm_stat"] = stat
    table["dm_p"] = pval
    return table[["model", "variable", "h", "rel_rmse", "dm_stat", "dm_p", "n"]]


def factor_revisions(factor_paths: dict) -> dict:
    """Origin-by-date matrices of factor medians and their revisions.

    Returns ``{component: {"paths": DataFrame, "revision": float,
    "by_distance": Series}}`` where ``revision`` is the mean absolute change
    between consecutive origins over the dates both cover, and
    ``by_distance`` averages that change by how many quarters the date lies
    before the earlier origin (0 = its last date).
    """
    origins = sorted(factor_paths, key=lambda s: pd.Period(s, "Q"))
    if not origins:
        return {}
    comps = list(factor_paths[origins[0]].columns)
    out = {}
    for comp in comps:
        paths = pd.DataFrame({o: factor_paths[o][comp] for o in origins}).T
        paths.index.name = "origin"
        diffs, dist = [], []
        for prev, cur in zip(origins[:-1], origins[1:]):
            p, c = factor_paths[prev][comp], factor_paths[cur][comp]
            common = p.index.intersection(c.index)
            delta = (c.reindex(common) - p.reindex(common)).abs()
            diffs.append(delta.to_numpy())
            end = pd.Period(prev, "Q")
            dist.append(np.array([(end - d).n for d in common]))
        if diffs:
            allv = np.concatenate(diffs)
            alld = np.concatenate(dist)
            ok = np.isfinite(allv)
            rev = float(allv[ok].mean()) if ok.any() else 0.0
            by = pd.Series(allv[ok]).groupby(alld[ok]).mean().sort_index()
        else:
            rev, by = 0.0, pd.Series(dtype=float)
        out[comp] = {"paths": paths, "revision": rev, "by_distance": by}
    return out


def long_run_forecast(sys: ss.StateSpaceSystem, a: np.ndarray, h: int) -> np.ndarray:
    """Measurement-space forecast ``h`` steps ahead from state mean ``a``."""
    return ss.forecast_states(sys, a, h)[-1] @ sys.Z.T + sys.d

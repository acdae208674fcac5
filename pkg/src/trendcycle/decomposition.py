"""Post-processing of posterior state draws: component contributions per
observable, output gap, Phillips-curve slopes, cycle spectra and trends."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import integrate

from . import statespace as ss
from .data import TimeSeriesPanel
from .sampler import PosteriorSample
from .spec import ModelSpec, ParameterVector, cycle_params

BAND_LEVELS = (0.68, 0.90)
IDENTITY_TOL = 1e-8


def band_quantiles(levels=BAND_LEVELS) -> tuple:
    qs = {0.5}
    for lv in levels:
        qs |= {round(0.5 - lv / 2, 10), round(0.5 + lv / 2, 10)}
    return tuple(sorted(qs))


def _check_layout(sample: PosteriorSample, spec: ModelSpec) -> None:
    from .spec import compile_layout
    if compile_layout(spec).layout.names != sample.layout.names:
        raise ValueError("posterior sample layout does not match the model specification")
    if sample.states is None:
        raise ValueError("posterior sample holds no state draws")


def _systems(sample: PosteriorSample, spec: ModelSpec):
    bound = spec.with_scale_factors(dict(zip(sample.observables, sample.scale_factors)))
    for i in range(sample.n_draws):
        yield ss.assemble(bound, sample.theta(i))


def component_groups(spec: ModelSpec, labels: tuple) -> dict:
    """State indices grouped by component: ``trend``, one entry per common
    cycle (lags included) and ``idiosyncratic``."""
    groups: dict[str, list[int]] = {"trend": [], "idiosyncratic": []}
    for c in spec.common_cycles:
        groups[c.name] = [i for i, lab in enumerate(labels)
                          if lab == c.name or lab.startswith(c.name + "(")]
    for c in spec.cycles:
        if c.kind == "idiosyncratic":
            groups["idiosyncratic"].append(labels.index(c.name))
    groups["trend"] = [labels.index(t.name) for t in spec.trends]
    order = ["trend"] + [c.name for c in spec.common_cycles] + ["idiosyncratic"]
    return {k: np.array(groups[k], dtype=int) for k in order}


@dataclass
class DecompositionResult:
    """Per-draw contributions in raw units, shape ``(n_draws, T, n)`` each."""

    dates: pd.PeriodIndex
    observables: tuple
    draws: dict
    loaded: dict
    observed: np.ndarray
    identity_error: np.ndarray
    levels: tuple = BAND_LEVELS
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def components(self) -> tuple:
        return tuple(self.draws)

    @property
    def identity_ok(self) -> np.ndarray:
        """Per-draw flag: contributions add up to the data at every observed date."""
        return self.identity_error <= IDENTITY_TOL

    def quantiles(self, component: str, variable: str) -> pd.DataFrame:
        key = (component, variable)
        if key not in self._cache:
            j = self.observables.index(variable)
            x = self.draws[component][:, :, j]
            qs = band_quantiles(self.levels)
            self._cache[key] = pd.DataFrame(np.quantile(x, qs, axis=0).T, index=self.dates, columns=qs)
        return self._cache[key]

    def median(self, component: str, variable: str) -> pd.Series:
        return self.quantiles(component, variable)[0.5]

    def to_tidy(self) -> pd.DataFrame:
        """Long table (date, variable, component, quantile, value, identity_ok).

        Structurally absent components are omitted for that variable.
        """
        frames = []
        ok_all = self.identity_ok.all()
        for comp in self.components:
            for v in self.observables:
                if not self.loaded[(comp, v)]:
                    continue
                q = self.quantiles(comp, v)
                long = q.stack().rename("value").reset_index()
                long.columns = ["date", "quantile", "value"]
                long.insert(1, "variable", v)
                long.insert(2, "component", comp)
                frames.append(long)
        out = pd.concat(frames, ignore_index=True)
        out["date"] = out["date"].astype(str)
        out["identity_ok"] = bool(ok_all)
        return out


def historical_decomposition(sample: PosteriorSample, spec: ModelSpec,
                             panel: TimeSeriesPanel) -> DecompositionResult:
    """Split every observable into trend, common-cycle and idiosyncratic parts.

    Common-cycle contributions aggregate all loaded lags. Contributions are
    computed per draw from the state path and that draw's loadings, then
    converted to raw units with the panel scale factors.
    """
    _check_layout(sample, spec)
    labels = sample.state_labels
    groups = component_groups(spec, labels)
    scales = np.asarray(sample.scale_factors, dtype=float)
    n_draws, nT, _ = sample.states.shape
    n = len(sample.observables)
    out = {k: np.zeros((n_draws, nT, n)) for k in groups}
    loaded = {(k, o): False for k in groups for o in sample.observables}
    fitted = np.zeros((n_draws, nT, n))
    for i, sys in enumerate(_systems(sample, spec)):
        a = sample.states[i]
        for k, idx in groups.items():
            Zk = sys.Z[:, idx]
            out[k][i] = a[:, idx] @ Zk.T
            for j, o in enumerate(sample.observables):
                if i == 0 and np.any(Zk[j] != 0):
                    loaded[(k, o)] = True
        fitted[i] = a @ sys.Z.T + sys.d
    # standardise with the chain's own scale factors
    y = panel.select(sample.observables).raw / scales
    if y.shape[0] != nT:
        raise ValueError("panel length does not match the state draws")
    resid = np.where(np.isfinite(y), np.abs(fitted - y[None]), 0.0)
    err = resid.reshape(n_draws, -1).max(axis=1) if resid.size else np.zeros(n_draws)
    raw = {k: v * scales for k, v in out.items()}
    observed = y * scales
    return DecompositionResult(sample.dates, tuple(sample.observables), raw, loaded, observed, err)


def output_gap(sample: PosteriorSample, spec: ModelSpec, output: str = "y",
               cycle: str = "BC", levels=BAND_LEVELS) -> pd.DataFrame:
    """Output gap per draw: the business cycle as loaded on output plus
    output's own cycle, in output's raw units. Returns pointwise quantiles."""
    _check_layout(sample, spec)
    labels = sample.state_labels
    groups = component_groups(spec, labels)
    j = sample.observables.index(output)
    idio = spec.idio_cycle_of(output)
    idx = list(groups[cycle]) + ([labels.index(idio.name)] if idio is not None else [])
    s = sample.scale_factors[j]
    gaps = np.empty(sample.states.shape[:2])
    for i, sys in enumerate(_systems(sample, spec)):
        gaps[i] = s * (sample.states[i][:, idx] @ sys.Z[j, idx])
    qs = band_quantiles(levels)
    out = pd.DataFrame(np.quantile(gaps, qs, axis=0).T, index=sample.dates, columns=qs)
    out.attrs["draws"] = gaps
    return out


def ols_slope(x, y) -> float:
    """Slope of y on x with an intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if x.size < 2 or sxx <= 1e-12 * max(1.0, float(np.abs(x).max()) ** 2) * x.size:
        raise ValueError("regressor has (near) zero variance")
    return float(xc @ (y - y.mean()) / sxx)


def phillips_slope(decomp: DecompositionResult, panel: TimeSeriesPanel, inflation: str = "pi",
                   slack: str = "u", cycle: str = "BC") -> dict:
    """Model slope: OLS of inflation's business-cycle part on unemployment's
    (posterior medians, contemporaneous). Naive slope: OLS of demeaned
    inflation on demeaned unemployment."""
    model = ols_slope(decomp.median(cycle, slack).to_numpy(), decomp.median(cycle, inflation).to_numpy())
    raw = panel.select([slack, inflation]).raw
    naive = ols_slope(raw[:, 0] - np.nanmean(raw[:, 0]), raw[:, 1] - np.nanmean(raw[:, 1]))
    return {"model_slope": model, "naive_slope": naive}


# ---------------------------------------------------------------------------
# spectra

@dataclass(frozen=True)
class SpectrumCurve:
    omega: np.ndarray
    density: np.ndarray
    bands: pd.DataFrame | None = None

    @property
    def peak_frequency(self) -> float:
        return float(self.omega[np.argmax(self.density)])

    @property
    def peak_period(self) -> float:
        return 2 * math.pi / self.peak_frequency


def default_grid(n: int = 2000) -> np.ndarray:
    return np.linspace(math.pi / n, math.pi, n)


def spectral_density(omega, rho: float, lam: float, var: float) -> np.ndarray:
    """Spectral density of the first coordinate of the stochastic cycle."""
    e1 = np.exp(-1j * np.asarray(omega, dtype=float))
    rc, rs = rho * math.cos(lam), rho * math.sin(lam)
    num = np.abs(1 - rc * e1) ** 2 + rs * rs
    den = np.abs(1 - 2 * rc * e1 + rho * rho * e1 * e1) ** 2
    return var / (2 * math.pi) * num / den


def cycle_spectrum(rho: float, lam: float, var: float, omega=None) -> SpectrumCurve:
    omega = default_grid() if omega is None else np.asarray(omega, dtype=float)
    return SpectrumCurve(omega, spectral_density(omega, rho, lam, var))


def spectrum_variance(rho: float, lam: float, var: float) -> float:
    """Integral of the spectral density over (-pi, pi]."""
    val, _ = integrate.quad(lambda w: spectral_density(w, rho, lam, var), 0.0, math.pi,
                            limit=400, points=[lam] if 0 < lam < math.pi else None)
    return 2.0 * val


def posterior_spectrum(sample: PosteriorSample, spec: ModelSpec, cycle: str, omega=None,
                       levels=BAND_LEVELS, normalize: bool = False) -> SpectrumCurve:
    """Spectrum at the posterior median parameters with pointwise bands over
    draws. ``normalize`` divides each draw by its variance."""
    omega = default_grid(500) if omega is None else np.asarray(omega, dtype=float)
    decl = spec.cycle(cycle)
    curves = np.empty((sample.n_draws, omega.size))
    for i in range(sample.n_draws):
        rho, lam, var = cycle_params(spec, sample.theta(i), decl)
        if normalize:
            var = 1.0 - rho * rho
        curves[i] = spectral_density(omega, rho, lam, var)
    qs = band_quantiles(levels)
    bands = pd.DataFrame(np.quantile(curves, qs, axis=0).T, index=omega, columns=qs)
    return SpectrumCurve(omega, bands[0.5].to_numpy(), bands)


# ---------------------------------------------------------------------------
# trends

def trend_report(sample: PosteriorSample, spec: ModelSpec, panel: TimeSeriesPanel | None = None,
                 overlays: pd.DataFrame | None = None, levels=BAND_LEVELS) -> dict:
    """Posterior bands for every trend in the raw units of its first observable.

    Returns ``{trend: DataFrame}``; overlay columns (already on the same
    quarterly index) are appended unchanged as ``overlay:<name>``. Drift
    summaries are in ``frame.attrs["drift"]``.
    """
    _check_layout(sample, spec)
    labels = sample.state_labels
    bound = spec.with_scale_factors(dict(zip(sample.observables, sample.scale_factors)))
    qs = band_quantiles(levels)
    out = {}
    for tr in spec.trends:
        o = tr.observables[0]
        j = sample.observables.index(o)
        factor = bound.trend_loading(tr, o) * sample.scale_factors[j]
        path = sample.states[:, :, labels.index(tr.name)] * factor
        frame = pd.DataFrame(np.quantile(path, qs, axis=0).T, index=sample.dates, columns=qs)
        frame.attrs["observables"] = tr.observables
        if tr.has_drift:
            d = sample.column(f"drift[{tr.name}]") * factor
            frame.attrs["drift"] = {"mean": float(d.mean()), "sd": float(d.std(ddof=1)) if d.size > 1 else 0.0,
                                    **{f"q{q}": float(v) for q, v in zip(qs, np.quantile(d, qs))}}
        if overlays is not None:
            ov = overlays.copy()
            ov.index = pd.PeriodIndex(ov.index, freq="Q")
            for col in ov.columns:
                frame[f"overlay:{col}"] = ov[col].reindex(frame.index).to_numpy()
        out[tr.name] = frame
    return out


def decomposition_summary(decomp: DecompositionResult) -> dict:
    return {
        "n_draws": int(decomp.identity_error.size),
        "identity_max_error": float(decomp.identity_error.max()) if decomp.identity_error.size else 0.0,
        "identity_ok": bool(decomp.identity_ok.all()),
        "components": list(decomp.components),
        "observables": list(decomp.observables),
    }

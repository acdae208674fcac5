"""Metropolis-within-Gibbs posterior sampling for trend-cycle models.

Block one updates the parameters by random-walk Metropolis in unconstrained
space, using the filter's marginal likelihood. Block two draws the latent
state path with the simulation smoother given the current parameters.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from . import priors as pr
from . import statespace as ss
from .data import TimeSeriesPanel, diff_scale
from .spec import ModelSpec, ParameterLayout, ParameterVector, compile_layout

DEFAULT_BLOCKS = (("loading",), ("trend_var", "cycle_var"), ("rho", "lambda"), ("drift",))
INIT_RETRIES = 200
VAR_FLOOR = 1e-6


class EstimationError(RuntimeError):
    """The sampler could not start or continue."""


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 50_000
    burn_in: int = 25_000
    thin: int = 10
    proposal_scale: float = 0.1
    adapt: bool = True
    adapt_window: int = 50
    target_acceptance: float = 0.25
    seed: int = 0
    blocks: tuple = DEFAULT_BLOCKS
    init: str = "data"
    draw_states: bool = True
    diffuse: str = "exact"

    def __post_init__(self):
        if self.iterations <= self.burn_in:
            raise ValueError("iterations must exceed burn-in")
        if self.burn_in < 0 or self.thin < 1:
            raise ValueError("burn-in must be >= 0 and thin >= 1")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target acceptance must lie in (0, 1)")
        if self.proposal_scale <= 0 or self.adapt_window < 1:
            raise ValueError("proposal scale and adaptation window must be positive")
        if self.init not in ("data", "prior"):
            raise ValueError(f"unknown init strategy {self.init!r}")
        object.__setattr__(self, "blocks", tuple(tuple(b) for b in self.blocks))

    @property
    def n_keep(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))

    @classmethod
    def from_dict(cls, doc) -> "SamplerConfig":
        doc = dict(doc or {})
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sampler settings: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blocks"] = [list(b) for b in self.blocks]
        return d


@dataclass
class PosteriorSample:
    """Kept draws of a single chain.

    ``draws`` has one row per kept iteration; ``states`` (if drawn) has shape
    ``(n_keep, T, m)`` with the same indexing. ``log_post`` covers every
    iteration including burn-in.
    """

    layout: ParameterLayout
    draws: np.ndarray
    states: np.ndarray | None
    state_labels: tuple
    log_post: np.ndarray
    acceptance: dict
    config: SamplerConfig
    spec: ModelSpec | None = None
    dates: pd.PeriodIndex | None = None
    observables: tuple = ()
    scale_factors: np.ndarray | None = None
    a1: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def theta(self, i: int) -> ParameterVector:
        return ParameterVector(self.layout, self.draws[i])

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.layout.index(name)]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.draws, columns=list(self.layout.names))


# ---------------------------------------------------------------------------
# posterior target

class Posterior:
    """Log posterior of a spec given a panel, on the unconstrained scale."""

    def __init__(self, spec: ModelSpec, panel: TimeSeriesPanel, prior: pr.PriorSpec = pr.PriorSpec(),
                 diffuse: str = "exact", jitter: float = 0.0):
        self.spec = spec.with_scale_factors(dict(zip(panel.ids, panel.scale_factors)))
        self.panel = panel.select(spec.observables) if panel.ids != tuple(spec.observables) else panel
        self.y = np.ascontiguousarray(self.panel.values)
        self.prior = prior
        self.diffuse = diffuse
        self.jitter = jitter
        self.template = compile_layout(spec)
        self.layout = self.template.layout
        probe = ss.assemble(self.spec, _interior_point(self.layout), jitter)
        self.a1 = ss.initial_trend_means(self.spec, self.panel, probe)

    def system(self, theta: ParameterVector) -> ss.StateSpaceSystem:
        return ss.assemble(self.spec, theta, self.jitter, a1=self.a1)

    def log_density(self, theta: ParameterVector) -> float:
        lp = pr.log_prior(theta, self.prior)
        if not math.isfinite(lp):
            return -np.inf
        try:
            sys = self.system(theta)
        except ss.BoundsError:
            return -np.inf
        return lp + ss.loglik(sys, self.y, self.diffuse)

    def __call__(self, z: np.ndarray) -> float:
        theta = pr.from_unconstrained(z, self.layout)
        if not theta.in_bounds():
            return -np.inf
        return self.log_density(theta) + pr.log_jacobian(z, self.layout)


def _interior_point(layout: ParameterLayout) -> ParameterVector:
    return ParameterVector(layout, ss._interior(layout))


# ---------------------------------------------------------------------------
# initial values

_CYCLE_START = {"BC": (0.9, 32.0), "EP": (0.7, 16.0)}


def initialize(spec: ModelSpec, prior: pr.PriorSpec, panel: TimeSeriesPanel, strategy: str = "data",
               rng_seed=None, posterior: Posterior | None = None) -> ParameterVector:
    """Starting parameter vector with a finite posterior.

    ``"data"`` sets variances from first-difference moments, loadings to
    zero, dampings 0.9/0.7/0.5 and frequencies for periods of 32/16/8
    quarters (business cycle / energy / idiosyncratic). ``"prior"`` draws
    from the prior. Either way, prior draws are retried until the posterior
    is finite.
    """
    post = posterior or Posterior(spec, panel, prior)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if strategy == "data":
        theta = _data_start(post.spec, post.panel, post.template)
        if math.isfinite(post.log_density(theta)):
            return theta
    elif strategy != "prior":
        raise ValueError(f"unknown init strategy {strategy!r}")
    for _ in range(INIT_RETRIES):
        theta = pr.sample_prior(post.template, prior, rng)
        if math.isfinite(post.log_density(theta)):
            return theta
    raise EstimationError(
        f"no starting point with finite posterior after {INIT_RETRIES} prior draws; "
        "try a different seed or starting strategy"
    )


def _data_start(spec: ModelSpec, panel: TimeSeriesPanel, template: ParameterVector) -> ParameterVector:
    y = panel.values
    dvar, dmean = {}, {}
    for j, o in enumerate(panel.ids):
        col = y[:, j]
        s = diff_scale(col) if np.sum(np.isfinite(col)) > 2 else 0.0
        dvar[o] = s * s if np.isfinite(s) else 0.0
        dx = np.diff(col[np.isfinite(col)])
        dmean[o] = float(dx.mean()) if dx.size else 0.0
    upd = {}
    for tr in spec.trends:
        o = tr.observables[0]
        upd[f"sigma2[{tr.name}]"] = max(0.1 * dvar[o], VAR_FLOOR)
        if tr.has_drift:
            upd[f"drift[{tr.name}]"] = dmean[o]
    mean_var = float(np.mean(list(dvar.values()))) if dvar else 0.0
    for cyc in spec.cycles:
        if cyc.kind == "idiosyncratic":
            rho, period, v = 0.5, 8.0, dvar[cyc.observable]
        else:
            rho, period = _CYCLE_START.get(cyc.name, (0.7, 16.0))
            v = mean_var
        upd[f"varsigma2[{cyc.name}]"] = max(0.25 * v * (1 - rho * rho), VAR_FLOOR)
        if not cyc.pinned:
            upd[f"rho[{cyc.name}]"] = rho
            upd[f"lambda[{cyc.name}]"] = 2 * math.pi / period
    return template.with_values(upd)


# ---------------------------------------------------------------------------
# the chain

def run_chain(spec: ModelSpec, prior: pr.PriorSpec, panel: TimeSeriesPanel, cfg: SamplerConfig,
              init: ParameterVector | None = None, progress: Callable | None = None) -> PosteriorSample:
    """Run one Metropolis-within-Gibbs chain."""
    post = Posterior(spec, panel, prior, cfg.diffuse)
    theta_rng, state_rng, init_rng = (np.random.default_rng(s) for s in
                                      np.random.SeedSequence(cfg.seed).spawn(3))
    theta0 = init if init is not None else initialize(spec, prior, panel, cfg.init, init_rng, post)
    lay = post.layout
    named = [("+".join(tags), lay.block_indices(*tags)) for tags in cfg.blocks]
    named = [(name, idx) for name, idx in named if idx.size]
    blocks = [idx for _, idx in named]

    def draw_states(z):
        sys = post.system(pr.from_unconstrained(z, lay))
        return ss.simulation_smoother(sys, post.y, state_rng)

    res = metropolis_within_gibbs(post, pr.to_unconstrained(theta0), blocks, cfg, theta_rng,
                                  draw_states if cfg.draw_states else None, progress)
    draws = np.array([pr.from_unconstrained(z, lay).values for z in res["z"]])
    probe = post.system(pr.from_unconstrained(res["z"][-1], lay)) if len(res["z"]) else None
    sample = PosteriorSample(
        layout=lay,
        draws=draws,
        states=res["states"],
        state_labels=probe.labels if probe is not None else (),
        log_post=res["log_post"],
        acceptance={name: float(a) for (name, _), a in zip(named, res["acceptance"])},
        config=cfg,
        spec=spec,
        dates=post.panel.dates,
        observables=tuple(post.panel.ids),
        scale_factors=np.asarray(post.panel.scale_factors, dtype=float),
        a1=post.a1,
    )
    sample.diagnostics = chain_summary(sample)
    return sample


def metropolis_within_gibbs(logpost: Callable, z0: np.ndarray, blocks: Sequence[np.ndarray],
                            cfg: SamplerConfig, rng: np.random.Generator,
                            state_draw: Callable | None = None, progress: Callable | None = None) -> dict:
    """Blocked random-walk Metropolis with burn-in adaptation.

    During burn-in each block's proposal standard deviations follow the
    running standard deviation of the chain (scaled by 2.38/sqrt(dim)), and
    a per-block multiplier is tuned by Robbins-Monro toward the target
    acceptance rate. Both are frozen once burn-in ends. ``state_draw`` is
    called with the current point at every kept iteration.
    """
    z = np.array(z0, dtype=float)
    lp = logpost(z)
    if not math.isfinite(lp):
        raise EstimationError("log posterior is not finite at the starting point; "
                              "try a different seed or starting strategy")
    k = z.size
    nb = len(blocks)
    sd = np.full(k, cfg.proposal_scale)
    log_scale = np.zeros(nb)
    acc_win = np.zeros(nb)
    acc_post = np.zeros(nb)
    # running moments over burn-in for the proposal shape
    mean = z.copy()
    m2 = np.zeros(k)
    n_mom = 1
    rm_step = 0

    kept_z, kept_states = [], []
    log_post = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        burning = it < cfg.burn_in
        for b, idx in enumerate(blocks):
            prop = z.copy()
            prop[idx] += math.exp(log_scale[b]) * sd[idx] * rng.standard_normal(idx.size)
            lp_prop = logpost(prop)
            accept = math.isfinite(lp_prop) and math.log(rng.uniform()) < lp_prop - lp
            if accept:
                z, lp = prop, lp_prop
            if burning:
                acc_win[b] += accept
            else:
                acc_post[b] += accept
        log_post[it] = lp
        if burning and cfg.adapt:
            n_mom += 1
            delta = z - mean
            mean += delta / n_mom
            m2 += delta * (z - mean)
            if (it + 1) % cfg.adapt_window == 0:
                rm_step += 1
                gain = 1.0 / math.sqrt(rm_step)
                rate = acc_win / cfg.adapt_window
                log_scale += gain * (rate - cfg.target_acceptance) * 4.0
                acc_win[:] = 0.0
                if n_mom >= 4 * cfg.adapt_window:
                    var = m2 / (n_mom - 1)
                    for b, idx in enumerate(blocks):
                        shape = np.sqrt(np.maximum(var[idx], 1e-10)) * 2.38 / math.sqrt(idx.size)
                        # keep the block's geometric-mean step continuous across the reshape
                        log_scale[b] += np.mean(np.log(sd[idx])) - np.mean(np.log(shape))
                        sd[idx] = shape
        elif burning:
            acc_win[:] = 0.0
        if not burning and (it - cfg.burn_in) % cfg.thin == 0:
            kept_z.append(z.copy())
            if state_draw is not None:
                kept_states.append(state_draw(z))
        if progress is not None:
            progress(it, lp)
    n_post = cfg.iterations - cfg.burn_in
    return {
        "z": np.array(kept_z).reshape(len(kept_z), k),
        "states": np.array(kept_states) if state_draw is not None else None,
        "log_post": log_post,
        "acceptance": acc_post / n_post,
        "proposal_sd": sd * np.concatenate([np.full(idx.size, math.exp(log_scale[b]))
                                            for b, idx in enumerate(blocks)])[np.argsort(np.concatenate(blocks))]
        if blocks else sd,
    }


# ---------------------------------------------------------------------------
# diagnostics

def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> float:
    """ESS by Geyer's initial monotone positive sequence.

    Returns NaN (with a warning) for a zero-variance chain.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if np.ptp(x) == 0.0:
        warnings.warn("constant chain: effective sample size is undefined", RuntimeWarning, stacklevel=2)
        return float("nan")
    rho = _autocorr(x)
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    tau = -1.0
    prev = np.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        tau += 2.0 * g
        prev = g
    return float(n / max(tau, 1.0 / math.log10(max(n, 10))))


def split_rhat(chains) -> float:
    """Potential scale reduction with every chain split in half."""
    chains = [np.asarray(c, dtype=float) for c in (chains if isinstance(chains, (list, tuple)) else [chains])]
    halves = []
    for c in chains:
        h = c.size // 2
        halves += [c[:h], c[c.size - h:]]
    n = min(h.size for h in halves)
    arr = np.array([h[:n] for h in halves])
    means = arr.mean(axis=1)
    W = arr.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0.0:
        return float("nan")
    var_plus = (n - 1) / n * W + B / n
    return float(math.sqrt(var_plus / W))


def overlap_coefficient(a: np.ndarray, b: np.ndarray, bins: int = 50) -> float:
    """Histogram estimate of the overlap integral of two densities."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if hi == lo:
        return 1.0
    edges = np.linspace(lo, hi, bins + 1)
    pa, _ = np.histogram(a, edges, density=True)
    pb, _ = np.histogram(b, edges, density=True)
    return float(np.sum(np.minimum(pa, pb)) * (edges[1] - edges[0]))


def chain_summary(sample: PosteriorSample) -> dict:
    if sample.n_draws < 10:
        return {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ess = [effective_sample_size(sample.draws[:, j]) for j in range(sample.draws.shape[1])]
        rhat = [split_rhat(sample.draws[:, j]) for j in range(sample.draws.shape[1])]
    return {"min_ess": float(np.nanmin(ess)) if np.any(np.isfinite(ess)) else float("nan"),
            "max_rhat": float(np.nanmax(rhat)) if np.any(np.isfinite(rhat)) else float("nan")}


def diagnostics(samples, prior: pr.PriorSpec | None = None, n_prior: int = 20_000,
                rng_seed: int = 0) -> pd.DataFrame:
    """Per-parameter ESS, split R-hat and prior/posterior overlap.

    ``samples`` is one :class:`PosteriorSample` or a list of chains sharing a
    layout. Overlap is computed on the unconstrained scale.
    """
    chains = samples if isinstance(samples, (list, tuple)) else [samples]
    lay = chains[0].layout
    if any(c.layout.names != lay.names for c in chains):
        raise ValueError("chains have different parameter layouts")
    if min(c.n_draws for c in chains) < 10:
        raise ValueError("diagnostics need at least 10 draws per chain")
    prior = prior or pr.PriorSpec()
    rng = np.random.default_rng(rng_seed)
    prior_z = np.array([pr.to_unconstrained(pr.sample_prior(lay, prior, rng)) for _ in range(n_prior)])
    post_z = np.vstack([np.array([pr.to_unconstrained(ParameterVector(lay, d)) for d in c.draws])
                        for c in chains])
    rows = []
    degenerate = []
    for j, name in enumerate(lay.names):
        cols = [c.draws[:, j] for c in chains]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ess = sum(effective_sample_size(x) for x in cols)
        if not np.isfinite(ess):
            degenerate.append(name)
        rows.append({
            "parameter": name,
            "block": lay.blocks[j],
            "mean": float(np.mean(np.concatenate(cols))),
            "sd": float(np.std(np.concatenate(cols), ddof=1)),
            "ess": ess,
            "rhat": split_rhat(cols),
            "overlap": overlap_coefficient(prior_z[:, j], post_z[:, j]),
        })
    if degenerate:
        warnings.warn(f"degenerate (constant) chains for: {', '.join(degenerate)}", RuntimeWarning, stacklevel=2)
    out = pd.DataFrame(rows).set_index("parameter")
    acc = {}
    for c in chains:
        for k, v in c.acceptance.items():
            acc.setdefault(k, []).append(v)
    out.attrs["acceptance"] = {k: float(np.mean(v)) for k, v in acc.items()}
    return out


# ---------------------------------------------------------------------------
# persistence

def save_sample(sample: PosteriorSample, directory, extra: dict | None = None) -> Path:
    """Write ``params.csv``, ``states.npy``, ``log_post.npy`` and ``chain.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    sample.frame().to_csv(d / "params.csv", index=False, float_format="%.17g")
    np.save(d / "log_post.npy", sample.log_post)
    if sample.states is not None:
        np.save(d / "states.npy", sample.states)
    lay = sample.layout
    offsets = {}
    for i, b in enumerate(lay.blocks):
        offsets.setdefault(b, [i, i])[1] = i + 1
    meta = {
        "layout": lay.to_dict(),
        "block_offsets": offsets,
        "state_labels": list(sample.state_labels),
        "acceptance": sample.acceptance,
        "config": sample.config.to_dict(),
        "spec": sample.spec.to_dict() if sample.spec is not None else None,
        "dates": [str(p) for p in sample.dates] if sample.dates is not None else None,
        "observables": list(sample.observables),
        "scale_factors": None if sample.scale_factors is None else [float(x) for x in sample.scale_factors],
        "a1": None if sample.a1 is None else [float(x) for x in sample.a1],
        "diagnostics": sample.diagnostics,
        "has_states": sample.states is not None,
    }
    if extra:
        meta.update(extra)
    with open(d / "chain.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, allow_nan=True)
    return d


def load_sample(directory) -> PosteriorSample:
    d = Path(directory)
    meta_path = d / "chain.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no chain metadata at {meta_path}")
    meta = json.loads(meta_path.read_text())
    lay = ParameterLayout.from_dict(meta["layout"])
    frame = pd.read_csv(d / "params.csv", float_precision="round_trip")
    if tuple(frame.columns) != lay.names:
        raise ValueError("params.csv columns do not match the stored layout")
    states = np.load(d / "states.npy") if meta.get("has_states") else None
    spec = ModelSpec.from_dict(meta["spec"]) if meta.get("spec") else None
    dates = pd.PeriodIndex(meta["dates"], freq="Q") if meta.get("dates") else None
    sf = meta.get("scale_factors")
    a1 = meta.get("a1")
    return PosteriorSample(
        layout=lay,
        draws=frame.to_numpy(dtype=float),
        states=states,
        state_labels=tuple(meta["state_labels"]),
        log_post=np.load(d / "log_post.npy"),
        acceptance=meta["acceptance"],
        config=SamplerConfig.from_dict(meta["config"]),
        spec=spec,
        dates=dates,
        observables=tuple(meta["observables"]),
        scale_factors=None if sf is None else np.asarray(sf, dtype=float),
        a1=None if a1 is None else np.asarray(a1, dtype=float),
        diagnostics=meta.get("diagnostics", {}),
    )

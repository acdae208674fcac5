"""Prior densities, prior sampling and the unconstrained parameterisation."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
from scipy import special, stats

from .spec import ParameterLayout, ParameterVector

CLAMP = 1e-10


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors by parameter block.

    Loadings and drifts are Normal(``normal_mean``, ``normal_var``); variances
    are Inverse-Gamma with shape ``ig_shape`` and scale ``ig_scale`` (density
    proportional to ``x**-(shape+1) * exp(-scale/x)``); dampings and
    frequencies are uniform on their layout bounds.
    """

    normal_mean: float = 0.0
    normal_var: float = 1000.0
    ig_shape: float = 3.0
    ig_scale: float = 1.0

    def __post_init__(self):
        if self.normal_var <= 0 or self.ig_shape <= 0 or self.ig_scale <= 0:
            raise ValueError("prior variance, shape and scale must be positive")

    @classmethod
    def from_dict(cls, doc: Mapping | None) -> "PriorSpec":
        doc = dict(doc or {})
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown prior settings: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})

    def to_dict(self) -> dict:
        return asdict(self)


def _kinds(layout: ParameterLayout) -> np.ndarray:
    kind = {"loading": 0, "drift": 0, "trend_var": 1, "cycle_var": 1, "rho": 2, "lambda": 2}
    return np.array([kind[b] for b in layout.blocks], dtype=int)


def log_prior_terms(theta: ParameterVector, prior: PriorSpec = PriorSpec()) -> np.ndarray:
    """Per-slot log prior densities (``-inf`` outside the support)."""
    lay = theta.layout
    x = theta.values
    k = _kinds(lay)
    out = np.full(x.shape, -np.inf)
    normal = k == 0
    out[normal] = stats.norm.logpdf(x[normal], prior.normal_mean, np.sqrt(prior.normal_var))
    var = (k == 1) & (x > 0)
    a, b = prior.ig_shape, prior.ig_scale
    out[var] = a * np.log(b) - special.gammaln(a) - (a + 1) * np.log(x[var]) - b / x[var]
    uni = (k == 2) & (x >= lay.lower) & (x <= lay.upper)
    out[uni] = -np.log(lay.upper[uni] - lay.lower[uni])
    out[~np.isfinite(x)] = -np.inf
    return out


def log_prior(theta: ParameterVector, prior: PriorSpec = PriorSpec()) -> float:
    return float(np.sum(log_prior_terms(theta, prior)))


def sample_prior(template: ParameterVector | ParameterLayout, prior: PriorSpec = PriorSpec(),
                 rng_seed=None) -> ParameterVector:
    """Independent prior draw for every slot of ``template``'s layout."""
    lay = template.layout if isinstance(template, ParameterVector) else template
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    k = _kinds(lay)
    x = np.empty(len(lay))
    for i, kind in enumerate(k):
        if kind == 0:
            x[i] = rng.normal(prior.normal_mean, np.sqrt(prior.normal_var))
        elif kind == 1:
            x[i] = prior.ig_scale / rng.gamma(prior.ig_shape)
        else:
            x[i] = rng.uniform(lay.lower[i], lay.upper[i])
    return ParameterVector(lay, x)


def _tags(layout: ParameterLayout):
    t = np.array(layout.transforms)
    return t == "log", t == "logit"


def to_unconstrained(theta: ParameterVector) -> np.ndarray:
    """Map to R^k: log for variances, scaled logit for bounded slots.

    Values on or beyond a bound are clamped ``1e-10`` inside it first.
    """
    lay = theta.layout
    z = theta.values.astype(float).copy()
    lg, lt = _tags(lay)
    z[lg] = np.log(np.maximum(z[lg], CLAMP))
    lo, hi = lay.lower[lt], lay.upper[lt]
    u = np.clip((z[lt] - lo) / (hi - lo), CLAMP, 1.0 - CLAMP)
    z[lt] = special.logit(u)
    return z


def from_unconstrained(z: np.ndarray, layout: ParameterLayout) -> ParameterVector:
    x = np.asarray(z, dtype=float).copy()
    lg, lt = _tags(layout)
    x[lg] = np.exp(x[lg])
    lo, hi = layout.lower[lt], layout.upper[lt]
    x[lt] = lo + (hi - lo) * special.expit(x[lt])
    return ParameterVector(layout, x)


def log_jacobian(z: np.ndarray, layout: ParameterLayout) -> float:
    """log |d theta / d z| at unconstrained point ``z``."""
    z = np.asarray(z, dtype=float)
    lg, lt = _tags(layout)
    lo, hi = layout.lower[lt], layout.upper[lt]
    zl = z[lt]
    # log of (hi-lo) * s * (1-s), with s = expit(z), written stably
    logit_term = np.log(hi - lo) - np.logaddexp(0.0, zl) - np.logaddexp(0.0, -zl)
    return float(np.sum(z[lg]) + np.sum(logit_term))

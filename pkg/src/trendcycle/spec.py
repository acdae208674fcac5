"""Declarative model descriptions and their compiled parameter layouts.

A :class:`ModelSpec` lists observables, random-walk trends, stochastic cycles
and the loadings of observables on common cycles (optionally at lags 1 and 2).
:func:`compile_layout` turns it into a :class:`ParameterLayout` whose slots are
exactly the free quantities of the model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

RHO_BOUNDS = (0.001, 0.970)
LAMBDA_BOUNDS = (0.001, math.pi)
REAL_OBSERVABLES = frozenset({"y", "e", "u"})
INV_SCALE = "inv_scale"

# parameter block tags, in layout order
BLOCKS = ("loading", "drift", "trend_var", "cycle_var", "rho", "lambda")


class SpecError(ValueError):
    """A model specification violates one of its structural rules."""


@dataclass(frozen=True)
class CycleDecl:
    name: str
    kind: str = "common"
    max_lag_loaded: int = 0
    observable: str | None = None
    fixed_rho: float | None = None
    fixed_lambda: float | None = None

    @property
    def pinned(self) -> bool:
        return self.fixed_rho is not None

    @property
    def n_lag_states(self) -> int:
        return self.max_lag_loaded if self.kind == "common" else 0


@dataclass(frozen=True)
class TrendDecl:
    """Random-walk trend. ``loadings`` pairs an observable with a constant or
    ``"inv_scale"`` (the reciprocal of that observable's scale factor)."""

    name: str
    has_drift: bool = False
    loadings: tuple = ()

    @property
    def observables(self) -> tuple:
        return tuple(o for o, _ in self.loadings)

    @property
    def is_common(self) -> bool:
        return len(self.loadings) > 1


@dataclass(frozen=True)
class LoadingDecl:
    observable: str
    cycle: str
    lag: int = 0
    fixed: bool = False
    value: float = 1.0


@dataclass(frozen=True)
class ModelSpec:
    observables: tuple
    trends: tuple
    cycles: tuple
    loadings: tuple
    preset: str = "custom"
    scale_factors: Mapping | None = field(default=None, compare=False)

    def cycle(self, name: str) -> CycleDecl:
        for c in self.cycles:
            if c.name == name:
                return c
        raise KeyError(name)

    def trend(self, name: str) -> TrendDecl:
        for t in self.trends:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def common_cycles(self) -> tuple:
        return tuple(c for c in self.cycles if c.kind == "common")

    def idio_cycle_of(self, obs: str) -> CycleDecl | None:
        for c in self.cycles:
            if c.kind == "idiosyncratic" and c.observable == obs:
                return c
        return None

    def with_scale_factors(self, scales) -> "ModelSpec":
        """Bind scale factors (mapping or sequence aligned with observables)."""
        if not isinstance(scales, Mapping):
            scales = dict(zip(self.observables, np.asarray(scales, dtype=float)))
        return replace(self, scale_factors={k: float(v) for k, v in scales.items()})

    def trend_loading(self, trend: TrendDecl, obs: str) -> float:
        for o, v in trend.loadings:
            if o == obs:
                if v == INV_SCALE:
                    s = (self.scale_factors or {}).get(obs, 1.0)
                    return 1.0 / s
                return float(v)
        return 0.0

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "observables": list(self.observables),
            "trends": [
                {"name": t.name, "drift": t.has_drift,
                 "loadings": {o: v for o, v in t.loadings}}
                for t in self.trends
            ],
            "cycles": [
                {k: v for k, v in {
                    "name": c.name, "kind": c.kind, "max_lag": c.max_lag_loaded,
                    "observable": c.observable, "fixed_rho": c.fixed_rho,
                    "fixed_lambda": c.fixed_lambda,
                }.items() if v is not None}
                for c in self.cycles
            ],
            "loadings": [
                {"observable": ld.observable, "cycle": ld.cycle, "lag": ld.lag,
                 **({"fixed": ld.value} if ld.fixed else {})}
                for ld in self.loadings
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ModelSpec":
        trends = tuple(
            TrendDecl(t["name"], bool(t.get("drift", False)),
                      tuple((o, v) for o, v in dict(t.get("loadings", {})).items()))
            for t in doc.get("trends", [])
        )
        cycles = tuple(
            CycleDecl(c["name"], c.get("kind", "common"), int(c.get("max_lag", 0)),
                      c.get("observable"), c.get("fixed_rho"), c.get("fixed_lambda"))
            for c in doc.get("cycles", [])
        )
        loadings = tuple(
            LoadingDecl(ld["observable"], ld["cycle"], int(ld.get("lag", 0)),
                        "fixed" in ld, float(ld.get("fixed", 1.0)))
            for ld in doc.get("loadings", [])
        )
        spec = cls(tuple(doc["observables"]), trends, cycles, loadings, doc.get("preset", "custom"))
        validate(spec)
        return spec


def dump_spec(spec: ModelSpec, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(spec.to_dict(), fh, sort_keys=False)


def load_spec(path) -> ModelSpec:
    with open(path) as fh:
        return ModelSpec.from_dict(yaml.safe_load(fh))


def validate(spec: ModelSpec) -> None:
    """Raise :class:`SpecError` naming the first violated rule."""
    obs = set(spec.observables)
    if len(obs) != len(spec.observables):
        raise SpecError("rule: observables must be unique")
    names = [c.name for c in spec.cycles] + [t.name for t in spec.trends]
    if len(set(names)) != len(names):
        raise SpecError("rule: trend and cycle names must be unique")

    idio_trends: dict[str, str] = {}
    for t in spec.trends:
        if not t.loadings:
            raise SpecError(f"rule: trend {t.name} must load on at least one observable")
        for o, v in t.loadings:
            if o not in obs:
                raise SpecError(f"rule: trend {t.name} loads on unknown observable {o}")
            if v != INV_SCALE and not isinstance(v, (int, float)):
                raise SpecError(f"rule: trend {t.name} loading on {o} must be numeric or {INV_SCALE}")
        if not t.is_common:
            (o,) = t.observables
            if o in idio_trends:
                raise SpecError(f"rule: observable {o} has more than one idiosyncratic trend")
            idio_trends[o] = t.name

    idio_cycles: dict[str, str] = {}
    for c in spec.cycles:
        if c.kind not in ("common", "idiosyncratic"):
            raise SpecError(f"rule: cycle {c.name} has unknown kind {c.kind}")
        if not 0 <= c.max_lag_loaded <= 2:
            raise SpecError(f"rule: cycle {c.name} max_lag_loaded must be in 0..2")
        if c.kind == "idiosyncratic":
            if c.observable not in obs:
                raise SpecError(f"rule: idiosyncratic cycle {c.name} must attach to exactly one observable")
            if c.observable in idio_cycles:
                raise SpecError(f"rule: observable {c.observable} has more than one idiosyncratic cycle")
            if c.max_lag_loaded != 0:
                raise SpecError(f"rule: idiosyncratic cycle {c.name} loads contemporaneously only")
            idio_cycles[c.observable] = c.name
        if (c.fixed_rho is None) != (c.fixed_lambda is None):
            raise SpecError(f"rule: cycle {c.name} must pin both rho and lambda or neither")
        if c.pinned:
            if not RHO_BOUNDS[0] <= c.fixed_rho <= RHO_BOUNDS[1]:
                raise SpecError(f"rule: cycle {c.name} pinned rho outside bounds")
            if not LAMBDA_BOUNDS[0] <= c.fixed_lambda <= LAMBDA_BOUNDS[1]:
                raise SpecError(f"rule: cycle {c.name} pinned lambda outside bounds")

    common = {c.name: c for c in spec.common_cycles}
    seen = set()
    fixed_count = {name: 0 for name in common}
    for ld in spec.loadings:
        if ld.observable not in obs:
            raise SpecError(f"rule: loading on unknown observable {ld.observable}")
        if ld.cycle not in common:
            raise SpecError(f"rule: loadings must reference a common cycle, got {ld.cycle}")
        if not 0 <= ld.lag <= common[ld.cycle].max_lag_loaded:
            raise SpecError(
                f"rule: loading {ld.observable} on {ld.cycle} at lag {ld.lag} exceeds max_lag_loaded"
            )
        key = (ld.observable, ld.cycle, ld.lag)
        if key in seen:
            raise SpecError(f"rule: duplicate loading {key}")
        seen.add(key)
        if ld.fixed:
            fixed_count[ld.cycle] += 1
        if ld.cycle == "EP" and ld.observable in REAL_OBSERVABLES:
            raise SpecError(f"rule: real/labour variable {ld.observable} may not load on EP")
    for name, k in fixed_count.items():
        if k != 1:
            raise SpecError(f"rule: common cycle {name} needs exactly one fixed loading, has {k}")


# ---------------------------------------------------------------------------
# presets

def _idio_cycles(observables, pinned=()):
    out = []
    for o in observables:
        if o in pinned:
            out.append(CycleDecl(f"idio:{o}", "idiosyncratic", 0, o, RHO_BOUNDS[0], math.pi / 2))
        else:
            out.append(CycleDecl(f"idio:{o}", "idiosyncratic", 0, o))
    return out


def _free(obs, cycle, lags):
    return [LoadingDecl(obs, cycle, lag) for lag in lags]


def baseline_spec() -> ModelSpec:
    """Eight-variable model: output, employment, unemployment, oil, headline and
    core CPI inflation, and consumer/professional inflation expectations."""
    observables = ("y", "e", "u", "oil", "pi", "pi_c", "uom", "spf")
    trends = (
        TrendDecl("mu_y", True, (("y", 1.0),)),
        TrendDecl("mu_e", True, (("e", 1.0),)),
        TrendDecl("mu_u", False, (("u", 1.0),)),
        TrendDecl("mu_oil", False, (("oil", 1.0),)),
        TrendDecl("mu_pi", False, tuple((o, INV_SCALE) for o in ("pi", "pi_c", "uom", "spf"))),
        TrendDecl("mu_uom", False, (("uom", 1.0),)),
        TrendDecl("mu_spf", False, (("spf", 1.0),)),
    )
    cycles = (
        CycleDecl("BC", "common", 2),
        CycleDecl("EP", "common", 1),
        *_idio_cycles(observables),
    )
    loadings = [LoadingDecl("y", "BC", 0, fixed=True, value=1.0)]
    for o in ("e", "u", "oil", "pi", "pi_c"):
        loadings += _free(o, "BC", (0, 1))
    for o in ("uom", "spf"):
        loadings += _free(o, "BC", (0, 1, 2))
    loadings.append(LoadingDecl("oil", "EP", 0, fixed=True, value=1.0))
    for o in ("pi", "pi_c", "uom", "spf"):
        loadings += _free(o, "EP", (0, 1))
    spec = ModelSpec(observables, trends, cycles, tuple(loadings), "baseline")
    validate(spec)
    return spec


def global_spec() -> ModelSpec:
    """Baseline plus the Baltic Dry Index and global industrial production.

    Both global indicators get an idiosyncratic driftless trend and cycle and
    load freely on both common cycles at lags 0 and 1.
    """
    base = baseline_spec()
    extra = ("baltic", "gip")
    observables = base.observables + extra
    trends = base.trends + tuple(TrendDecl(f"mu_{o}", False, ((o, 1.0),)) for o in extra)
    cycles = base.cycles + tuple(_idio_cycles(extra))
    loadings = list(base.loadings)
    for o in extra:
        loadings += _free(o, "BC", (0, 1))
        loadings += _free(o, "EP", (0, 1))
    spec = ModelSpec(observables, trends, cycles, tuple(loadings), "global")
    validate(spec)
    return spec


def stylized_spec() -> ModelSpec:
    """Three-variable rational-expectations form: output, inflation and expected
    inflation with one business cycle, output and inflation trends, and
    near-white idiosyncratic noise on output and inflation."""
    observables = ("y", "pi", "pi_exp")
    trends = (
        TrendDecl("mu_y", True, (("y", 1.0),)),
        TrendDecl("mu_pi", False, (("pi", INV_SCALE), ("pi_exp", INV_SCALE))),
    )
    cycles = (CycleDecl("BC", "common", 1), *_idio_cycles(("y", "pi"), pinned=("y", "pi")))
    loadings = (
        LoadingDecl("y", "BC", 0, fixed=True, value=1.0),
        LoadingDecl("pi", "BC", 0),
        LoadingDecl("pi_exp", "BC", 0),
        LoadingDecl("pi_exp", "BC", 1),
    )
    spec = ModelSpec(observables, trends, cycles, loadings, "stylized")
    validate(spec)
    return spec


PRESETS = {"baseline": baseline_spec, "global": global_spec, "stylized": stylized_spec}


def restrict_spec(
    spec: ModelSpec,
    keep_observables: Sequence[str],
    rename: Mapping[str, str] | None = None,
    drop_cycles: Iterable[str] = (),
    drop_trends: Iterable[str] = (),
    drop_loadings: Iterable[tuple] = (),
    pin_cycles: Iterable[str] = (),
    max_lag: Mapping[str, int] | None = None,
    preset: str = "custom",
) -> ModelSpec:
    """Impose zero/fixed restrictions on ``spec``.

    Anything attached to a dropped observable disappears with it. ``pin_cycles``
    fixes damping at its lower bound (near-white noise).
    """
    rename = dict(rename or {})
    keep = [o for o in spec.observables if o in set(keep_observables)]
    drop_cycles, drop_trends = set(drop_cycles), set(drop_trends)
    drop_loadings, pin = set(map(tuple, drop_loadings)), set(pin_cycles)
    rn = lambda o: rename.get(o, o)  # noqa: E731

    trends = []
    for t in spec.trends:
        if t.name in drop_trends:
            continue
        lds = tuple((rn(o), v) for o, v in t.loadings if o in keep)
        if lds:
            trends.append(replace(t, loadings=lds))
    cycles = []
    for c in spec.cycles:
        if c.name in drop_cycles or (c.kind == "idiosyncratic" and c.observable not in keep):
            continue
        c = replace(c, observable=rn(c.observable) if c.observable else None)
        if c.kind == "idiosyncratic":
            c = replace(c, name=f"idio:{c.observable}")
        if max_lag and c.name in max_lag:
            c = replace(c, max_lag_loaded=max_lag[c.name])
        if c.name in pin or (c.kind == "idiosyncratic" and f"idio:{c.observable}" in pin):
            c = replace(c, fixed_rho=RHO_BOUNDS[0], fixed_lambda=math.pi / 2)
        cycles.append(c)
    kept_cycles = {c.name for c in cycles}
    loadings = tuple(
        replace(ld, observable=rn(ld.observable))
        for ld in spec.loadings
        if ld.observable in keep and ld.cycle in kept_cycles
        and (ld.observable, ld.cycle, ld.lag) not in drop_loadings
    )
    out = ModelSpec(tuple(rn(o) for o in keep), tuple(trends), tuple(cycles), loadings, preset)
    validate(out)
    return out


# restriction map taking the baseline model to the stylised one
STYLIZED_RESTRICTION = dict(
    keep_observables=("y", "pi", "spf"),
    rename={"spf": "pi_exp"},
    drop_cycles=("EP", "idio:spf"),
    drop_trends=("mu_spf",),
    drop_loadings=(("pi", "BC", 1), ("spf", "BC", 2)),
    pin_cycles=("idio:y", "idio:pi"),
    max_lag={"BC": 1},
    preset="stylized",
)


# ---------------------------------------------------------------------------
# parameter layout

@dataclass(frozen=True)
class ParameterLayout:
    """Ordered slot metadata: names, block tags, bounds and transform tags."""

    names: tuple
    blocks: tuple
    lower: np.ndarray
    upper: np.ndarray
    transforms: tuple

    def __post_init__(self):
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})
        for a in (self.lower, self.upper):
            a.setflags(write=False)

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"no parameter slot named {name!r} (structural zero or unknown)") from None

    def block_indices(self, *tags: str) -> np.ndarray:
        return np.array([i for i, b in enumerate(self.blocks) if b in tags], dtype=int)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "blocks": list(self.blocks),
            "lower": [float(x) for x in self.lower],
            "upper": [float(x) for x in self.upper],
            "transforms": list(self.transforms),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ParameterLayout":
        return cls(tuple(doc["names"]), tuple(doc["blocks"]),
                   np.asarray(doc["lower"], dtype=float), np.asarray(doc["upper"], dtype=float),
                   tuple(doc["transforms"]))


class ParameterVector:
    """Flat parameter values tied to a :class:`ParameterLayout`."""

    __slots__ = ("layout", "values")

    def __init__(self, layout: ParameterLayout, values=None):
        self.layout = layout
        vals = np.zeros(len(layout)) if values is None else np.array(values, dtype=float)
        if vals.shape != (len(layout),):
            raise ValueError(f"expected {len(layout)} values, got shape {vals.shape}")
        vals.setflags(write=False)
        self.values = vals

    def __len__(self):
        return len(self.values)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.layout.index(name)])

    def get(self, name: str, default=None):
        i = self.layout._index.get(name)
        return default if i is None else float(self.values[i])

    def with_values(self, updates: Mapping[str, float]) -> "ParameterVector":
        vals = self.values.copy()
        for k, v in updates.items():
            vals[self.layout.index(k)] = v
        return ParameterVector(self.layout, vals)

    def as_dict(self) -> dict:
        return dict(zip(self.layout.names, map(float, self.values)))

    def in_bounds(self) -> bool:
        v, lo, hi = self.values, self.layout.lower, self.layout.upper
        strict = np.array([t == "log" for t in self.layout.transforms])
        ok = np.isfinite(v) & (v >= lo) & (v <= hi)
        ok &= ~strict | (v > lo)
        return bool(np.all(ok))

    def __repr__(self):
        return f"ParameterVector({len(self)} params)"


def loading_name(cycle: str, obs: str, lag: int) -> str:
    return f"load[{cycle},{obs},{lag}]"


def compile_layout(spec: ModelSpec) -> ParameterVector:
    """Compile ``spec`` into a zero-valued :class:`ParameterVector` template.

    Order: free loadings, drifts, trend variances, cycle variances, dampings,
    frequencies. Pinned cycles contribute a variance but no damping/frequency.
    """
    validate(spec)
    names, blocks, lo, hi, tr = [], [], [], [], []

    def add(name, block, lower, upper, transform):
        names.append(name)
        blocks.append(block)
        lo.append(lower)
        hi.append(upper)
        tr.append(transform)

    for ld in spec.loadings:
        if not ld.fixed:
            add(loading_name(ld.cycle, ld.observable, ld.lag), "loading", -np.inf, np.inf, "identity")
    for t in spec.trends:
        if t.has_drift:
            add(f"drift[{t.name}]", "drift", -np.inf, np.inf, "identity")
    for t in spec.trends:
        add(f"sigma2[{t.name}]", "trend_var", 0.0, np.inf, "log")
    for c in spec.cycles:
        add(f"varsigma2[{c.name}]", "cycle_var", 0.0, np.inf, "log")
    for c in spec.cycles:
        if not c.pinned:
            add(f"rho[{c.name}]", "rho", *RHO_BOUNDS, "logit")
    for c in spec.cycles:
        if not c.pinned:
            add(f"lambda[{c.name}]", "lambda", *LAMBDA_BOUNDS, "logit")
    layout = ParameterLayout(tuple(names), tuple(blocks), np.array(lo, float), np.array(hi, float), tuple(tr))
    return ParameterVector(layout)


def cycle_params(spec: ModelSpec, theta: ParameterVector, cycle: CycleDecl) -> tuple[float, float, float]:
    """Return ``(rho, lambda, variance)`` for a cycle, honouring pinned values."""
    var = theta[f"varsigma2[{cycle.name}]"]
    if cycle.pinned:
        return cycle.fixed_rho, cycle.fixed_lambda, var
    return theta[f"rho[{cycle.name}]"], theta[f"lambda[{cycle.name}]"], var


_REFERENCE_CYCLES = {"BC": (0.9, 32.0, 0.4), "EP": (0.7, 16.0, 0.4)}


def reference_parameters(spec: ModelSpec, overrides: Mapping[str, float] | None = None) -> ParameterVector:
    """A plausible parameter vector for simulation studies.

    Common cycles are persistent (business cycle: damping 0.9, 32-quarter
    period; others 0.7 and 16 quarters), idiosyncratic cycles short-lived
    (0.5, 8 quarters). Cycle variances are set so each cycle has the stated
    unconditional variance; trends move slowly. Free loadings alternate
    between 0.6 and -0.4.
    """
    theta = compile_layout(spec)
    vals = {}
    sign = 1
    for ld in spec.loadings:
        if not ld.fixed:
            vals[loading_name(ld.cycle, ld.observable, ld.lag)] = 0.6 if sign > 0 else -0.4
            sign = -sign
    for t in spec.trends:
        if t.has_drift:
            vals[f"drift[{t.name}]"] = 0.1
        vals[f"sigma2[{t.name}]"] = 0.01
    for c in spec.cycles:
        if c.kind == "idiosyncratic":
            rho, period, uvar = 0.5, 8.0, 0.3
        else:
            rho, period, uvar = _REFERENCE_CYCLES.get(c.name, (0.7, 16.0, 0.4))
        if c.pinned:
            rho = c.fixed_rho
        else:
            vals[f"rho[{c.name}]"] = rho
            vals[f"lambda[{c.name}]"] = 2 * math.pi / period
        vals[f"varsigma2[{c.name}]"] = uvar * (1 - rho * rho)
    vals.update(overrides or {})
    return theta.with_values(vals)

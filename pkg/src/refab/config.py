"""Line-oriented scenario configuration: ``section.key = value``, ``#`` comments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .control import PF_KINDS, Q1_KINDS, CostWeights
from .errors import ParseError, RefabError
from .experiments import MINIFAB_WEIGHTS, MinifabScenario
from .transport import VARIANTS, VelocityParams, capacity, check_resolution


def _positive(x):
    return None if x > 0 else "must be > 0"


def _nonneg(x):
    return None if x >= 0 else "must be >= 0"


def _unit(x):
    return None if 0.0 <= x <= 1.0 else "must satisfy 0 <= alpha <= 1"


def _r_positive(x):
    return None if x > 0 else "must satisfy R > 0 (keeps the control bounded)"


def _at_least(n):
    return lambda x: None if x >= n else f"must be >= {n}"


def _choice(options):
    return lambda x: None if x in options else f"must be one of {', '.join(options)}"


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class PlantConfig:
    v_max: float = 4.0
    alpha: float = 0.5
    m: int = 3
    variant: str = "reentrant"
    v0: Optional[float] = None
    L_max: Optional[float] = None


@dataclass(frozen=True)
class GridConfig:
    N: int = 200
    dt: Optional[float] = None
    T: float = 10.0


@dataclass(frozen=True)
class WeightsConfig:
    q1: str = "constant"
    q0: float = 1.0
    sigma: float = 0.05
    R: float = 1.0
    pf: str = "zero"
    p0: float = 0.0


@dataclass(frozen=True)
class LadderConfig:
    rho_start: Optional[float] = None
    rho_target: Optional[float] = None
    d: int = 3


@dataclass(frozen=True)
class DemandConfig:
    type: str = "step"
    initial: float = 4.0
    level: float = 60.0 / 11.0
    amplitude: float = 0.0
    step_time: float = 1.0
    omega: float = 0.0


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "."
    series: str = "series.csv"
    kernel: str = "kernel.txt"
    bundle: str = "controller.txt"
    metrics: str = "metrics.csv"
    emit_kernel: bool = True
    emit_bundle: bool = True


# (converter, validator) per key; keys not listed here are rejected
SCHEMA = {
    "plant.v_max": (float, _positive),
    "plant.alpha": (float, _unit),
    "plant.m": (int, _at_least(1)),
    "plant.variant": (str, _choice(VARIANTS)),
    "plant.v0": (float, _positive),
    "plant.L_max": (float, _positive),
    "grid.N": (int, _at_least(2)),
    "grid.dt": (float, _positive),
    "grid.T": (float, _positive),
    "weights.q1": (str, _choice(Q1_KINDS)),
    "weights.q0": (float, _nonneg),
    "weights.sigma": (float, _positive),
    "weights.R": (float, _r_positive),
    "weights.pf": (str, _choice(PF_KINDS)),
    "weights.p0": (float, _nonneg),
    "ladder.rho_start": (float, _positive),
    "ladder.rho_target": (float, _positive),
    "ladder.d": (int, _at_least(2)),
    "demand.type": (str, _choice(("step", "sinusoid"))),
    "demand.initial": (float, _positive),
    "demand.level": (float, _positive),
    "demand.amplitude": (float, _nonneg),
    "demand.step_time": (float, _nonneg),
    "demand.omega": (float, _nonneg),
    "output.dir": (str, None),
    "output.series": (str, None),
    "output.kernel": (str, None),
    "output.bundle": (str, None),
    "output.metrics": (str, None),
    "output.emit_kernel": (_bool, None),
    "output.emit_bundle": (_bool, None),
}

SECTIONS = {
    "plant": PlantConfig,
    "grid": GridConfig,
    "weights": WeightsConfig,
    "ladder": LadderConfig,
    "demand": DemandConfig,
    "output": OutputConfig,
}


@dataclass(frozen=True)
class ScenarioConfig:
    plant: PlantConfig = field(default_factory=PlantConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    ladder: LadderConfig = field(default_factory=LadderConfig)
    demand: DemandConfig = field(default_factory=DemandConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    # key -> line number for every key the text set explicitly
    lines: dict = field(default_factory=dict)

    def sets_any(self, section: str) -> bool:
        return any(k.startswith(section + ".") for k in self.lines)

    def velocity_params(self) -> VelocityParams:
        p = self.plant
        return VelocityParams(p.v_max, p.alpha, p.m, p.variant, p.v0, p.L_max)

    def cost_weights(self) -> CostWeights:
        w = self.weights
        return CostWeights(q0=w.q0, R=w.R, q1_kind=w.q1, sigma=w.sigma, pf_kind=w.pf, p0=w.p0)

    def scenario(self, d: Optional[int] = None, preset_weights: bool = False) -> MinifabScenario:
        """Closed-loop scenario; ``preset_weights`` keeps the mini-fab weights
        unless the text set any ``weights.*`` key."""
        weights = self.cost_weights()
        if preset_weights and not self.sets_any("weights"):
            weights = MINIFAB_WEIGHTS
        dem = self.demand
        sine = dem.type == "sinusoid"
        return MinifabScenario(
            params=self.velocity_params(),
            flux_start=dem.initial,
            flux_target=dem.level,
            d=d if d is not None else self.ladder.d,
            weights=weights,
            n_cells=self.grid.N,
            T=self.grid.T,
            dt=self.grid.dt,
            step_time=dem.step_time,
            amplitude=dem.amplitude if sine else 0.0,
            omega=dem.omega if sine else 0.0,
            rho_start=self.ladder.rho_start,
            rho_target=self.ladder.rho_target,
        )


def parse_config(text: str) -> ScenarioConfig:
    values = {name: {} for name in SECTIONS}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(lineno, body, "expected 'section.key = value'")
        key, _, value = (part.strip() for part in body.partition("="))
        if key not in SCHEMA:
            raise ParseError(lineno, key, "unknown key")
        if key in lines:
            raise ParseError(lineno, key, f"duplicate key (first set on line {lines[key]})")
        convert, check = SCHEMA[key]
        try:
            parsed = convert(value)
        except ValueError:
            raise ParseError(lineno, key, f"cannot parse {value!r} as {getattr(convert, '__name__', 'value').lstrip('_')}") from None
        problem = check(parsed) if check else None
        if problem:
            raise ParseError(lineno, key, f"{value} {problem}")
        section, name = key.split(".", 1)
        values[section][name] = parsed
        lines[key] = lineno
    cfg = ScenarioConfig(**{s: cls(**values[s]) for s, cls in SECTIONS.items()}, lines=lines)
    _cross_check(cfg)
    return cfg


def _cross_check(cfg: ScenarioConfig) -> None:
    """Constraints involving several keys, reported against the most specific one."""

    def fail(key, reason):
        raise ParseError(cfg.lines.get(key, 0), key, reason)

    p = cfg.plant
    if p.variant == "linear":
        for key in ("plant.v0", "plant.L_max"):
            if getattr(p, key.split(".")[1]) is None:
                fail(key, "required by the linear variant")
    try:
        params = cfg.velocity_params()
    except ValueError as exc:
        fail("plant.variant", str(exc))
    cap = capacity(params)
    dem = cfg.demand
    for key, flux in (("demand.initial", dem.initial), ("demand.level", dem.level)):
        if flux >= cap:
            fail(key, f"{flux} must be below the capacity {cap!r}")
    if dem.type == "sinusoid" and dem.level + dem.amplitude >= cap:
        fail("demand.amplitude", f"peak demand must be below the capacity {cap!r}")
    lad = cfg.ladder
    if lad.rho_start is not None and lad.rho_target is not None and lad.rho_target <= lad.rho_start:
        fail("ladder.rho_target", "must exceed ladder.rho_start")
    if cfg.grid.dt is not None:
        try:
            check_resolution(cfg.grid.dt, cfg.grid.N, params.top_speed)
        except RefabError as exc:
            fail("grid.dt", str(exc))


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_keys():
    return sorted(SCHEMA)


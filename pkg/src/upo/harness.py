"""Experiment configuration, closed-loop runs, traces and metrics.

A config file is plain text, one ``key = value`` per line, with dotted keys
for sections (``pv.R_c = 2.0``, ``upo.tau = 0.01``). ``#`` starts a comment.
Unknown keys and unparsable values are rejected with the offending line.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from upo.grid import InputGrid, NoiseKind, Objective, parabola, true_maximizer
from upo.pv import DayProfile, PvParams, day_objective, duty_cycle_grid
from upo.selectors import SelectorConfig, SelectorKind, make_selector

TRACE_VERSION = "# upo-trace v1"
TRACE_COLUMNS = (
    "k",
    "selector",
    "index",
    "u",
    "y",
    "f",
    "opt_index",
    "case",
    "h_left",
    "h_center",
    "h_right",
)
OBJECTIVES = ("pv-day", "parabola")


class ConfigError(ValueError):
    """Invalid experiment configuration, with the source line when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class ParabolaParams:
    curvature: float = 1.0
    center: float = 0.0
    velocity: float = 0.0
    offset_rate: float = 0.0
    amplitude: float = 0.0
    period: float = 100.0


@dataclass(frozen=True)
class ExperimentConfig:
    objective: str = "pv-day"
    horizon: int = 300
    seed: int = 0
    u0: int | None = None  # None: grid midpoint
    u1_direction: int = 1
    out: str = "out"
    rho: float = 5.0
    noise: NoiseKind = NoiseKind.GAUSSIAN
    spacing: float = 0.05
    lo: int | None = None  # grid bounds; pv-day defaults to the open unit interval
    hi: int | None = None
    selectors: tuple[SelectorConfig, ...] = field(
        default_factory=lambda: tuple(SelectorConfig.case_study_default(k) for k in SelectorKind)
    )
    pv: PvParams = field(default_factory=PvParams)
    profile: DayProfile = field(default_factory=DayProfile)
    parabola: ParabolaParams = field(default_factory=ParabolaParams)

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.horizon < 2:
            raise ConfigError(f"horizon must be >= 2, got {self.horizon}")
        if self.u1_direction not in (-1, 1):
            raise ConfigError(f"u1_direction must be -1 or +1, got {self.u1_direction}")
        if not self.rho >= 0:
            raise ConfigError(f"rho must be >= 0, got {self.rho}")
        if (self.lo is None) != (self.hi is None):
            raise ConfigError("grid.lo and grid.hi must be given together")
        if self.objective == "parabola" and self.lo is None:
            raise ConfigError("the parabola objective needs grid.lo and grid.hi")
        if not self.selectors:
            raise ConfigError("at least one selector is required")
        names = [s.kind.value for s in self.selectors]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate selectors in {names}")
        object.__setattr__(self, "noise", NoiseKind(self.noise))

    def grid(self) -> InputGrid:
        if self.lo is None:
            return duty_cycle_grid(self.spacing)
        return InputGrid(self.spacing, (self.lo, self.hi))

    def start_index(self) -> int:
        grid = self.grid()
        u0 = grid.midpoint() if self.u0 is None else self.u0
        if not grid.contains(u0):
            raise ConfigError(f"u0 = {u0} outside grid bounds {grid.bounds}")
        return u0

    def selector(self, kind: SelectorKind | str) -> SelectorConfig:
        kind = SelectorKind(kind)
        for s in self.selectors:
            if s.kind is kind:
                return s
        raise KeyError(kind.value)


# Config text format -------------------------------------------------------------

_TOP_KEYS = {"objective", "horizon", "seed", "u0", "u1_direction", "out", "selectors"}
_RENAMED = {"noise.rho": "rho", "noise.kind": "noise", "grid.spacing": "spacing", "grid.lo": "lo", "grid.hi": "hi"}
_SECTIONS = {"pv": PvParams, "profile": DayProfile, "parabola": ParabolaParams}
_SELECTOR_FIELDS = {f.name for f in dataclasses.fields(SelectorConfig)} - {"kind"}


def _convert(raw: str, like, key: str):
    text = raw.strip()
    if isinstance(like, bool):
        if text.lower() in ("true", "false"):
            return text.lower() == "true"
        raise ValueError(f"{key} expects true or false")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def _optional_int(text: str) -> int | None:
    return None if text.strip().lower() == "none" else int(text)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse the flat ``key = value`` format into an :class:`ExperimentConfig`."""
    top: dict = {}
    sections: dict[str, dict] = {name: {} for name in _SECTIONS}
    selector_overrides: dict[str, dict] = {}
    seen: dict[str, int] = {}
    defaults = ExperimentConfig()

    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno, source)
        key, value = (part.strip() for part in body.split("=", 1))
        if not key or not value:
            raise ConfigError(f"empty key or value in {body!r}", lineno, source)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno, source)
        seen[key] = lineno
        key = _RENAMED.get(key, key)
        try:
            if key == "selectors":
                names = [n.strip() for n in value.split(",") if n.strip()]
                top[key] = [SelectorKind(n) for n in names]
            elif key in ("u0", "lo", "hi"):
                top[key] = _optional_int(value)
            elif key == "noise":
                top[key] = NoiseKind(value)
            elif key in _TOP_KEYS or key in ("rho", "spacing"):
                top[key] = _convert(value, getattr(defaults, key), key)
            elif "." in key:
                section, name = key.split(".", 1)
                if section in _SECTIONS:
                    cls = _SECTIONS[section]
                    names = {f.name: f for f in dataclasses.fields(cls)}
                    if name not in names:
                        raise ValueError(f"unknown key {key!r}")
                    sections[section][name] = _convert(value, getattr(cls(), name), key)
                elif section in SelectorKind._value2member_map_:
                    if name not in _SELECTOR_FIELDS:
                        raise ValueError(f"unknown selector setting {key!r}")
                    like = getattr(SelectorConfig(), name)
                    selector_overrides.setdefault(section, {})[name] = _convert(value, like, key)
                else:
                    raise ValueError(f"unknown section {section!r}")
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(str(exc), lineno, source) from None

    kinds = top.pop("selectors", [s.kind for s in defaults.selectors])
    for name in selector_overrides:
        if SelectorKind(name) not in kinds:
            raise ConfigError(f"settings given for selector {name!r} which is not in 'selectors'", seen.get("selectors"), source)
    try:
        selectors = tuple(
            dataclasses.replace(SelectorConfig.case_study_default(kind), **selector_overrides.get(kind.value, {}))
            for kind in kinds
        )
        built = {name: _SECTIONS[name](**values) for name, values in sections.items()}
        return ExperimentConfig(selectors=selectors, **built, **top)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], None, source) from None
    except ValueError as exc:
        raise ConfigError(str(exc), None, source) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def format_config(config: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config`; every setting is written out."""
    lines = [
        f"objective = {config.objective}",
        f"horizon = {config.horizon}",
        f"seed = {config.seed}",
        f"u0 = {'none' if config.u0 is None else config.u0}",
        f"u1_direction = {config.u1_direction}",
        f"out = {config.out}",
        "",
        f"noise.rho = {config.rho!r}",
        f"noise.kind = {config.noise.value}",
        f"grid.spacing = {config.spacing!r}",
        f"grid.lo = {'none' if config.lo is None else config.lo}",
        f"grid.hi = {'none' if config.hi is None else config.hi}",
    ]
    for section in ("pv", "profile", "parabola"):
        lines.append("")
        obj = getattr(config, section)
        for f in dataclasses.fields(obj):
            lines.append(f"{section}.{f.name} = {getattr(obj, f.name)!r}")
    lines.append("")
    lines.append("selectors = " + ", ".join(s.kind.value for s in config.selectors))
    for s in config.selectors:
        for name in sorted(_SELECTOR_FIELDS):
            lines.append(f"{s.kind.value}.{name} = {getattr(s, name)!r}")
    return "\n".join(lines) + "\n"


# Runs ---------------------------------------------------------------------------


def build_objective(config: ExperimentConfig) -> Objective:
    grid = config.grid()
    if config.objective == "pv-day":
        return day_objective(config.pv, config.profile, grid, config.rho, config.seed, config.noise)
    p = config.parabola
    return parabola(
        grid,
        curvature=p.curvature,
        center=p.center,
        velocity=p.velocity,
        offset_rate=p.offset_rate,
        amplitude=p.amplitude,
        period=p.period,
        rho=config.rho,
        seed=config.seed,
        noise_kind=config.noise,
    )


@dataclass(frozen=True)
class StepRecord:
    k: int
    index: int
    u: float
    y: float
    f: float
    opt_index: int
    case: str
    h: tuple[float, float, float] | None


@dataclass
class RunTrace:
    selector: str
    records: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def indices(self) -> list[int]:
        return [r.index for r in self.records]

    @property
    def opt_indices(self) -> list[int]:
        return [r.opt_index for r in self.records]


def simulate(
    selector: SelectorConfig,
    objective: Objective,
    horizon: int,
    u0: int,
    direction: int = 1,
    seed: int | None = None,
) -> RunTrace:
    """Closed-loop run of one selector for ``horizon`` steps."""
    seed = objective.seed if seed is None else seed
    runner = make_selector(selector, objective.grid, u0, direction, seed)
    trace = RunTrace(selector.kind.value)
    grid = objective.grid
    for k in range(horizon):
        i = runner.index
        y, decision = runner.step(objective, k)
        trace.records.append(
            StepRecord(
                k=k,
                index=i,
                u=grid.u(i),
                y=y,
                f=objective.value(k, i),
                opt_index=true_maximizer(objective, k),
                case=decision.case,
                h=decision.values,
            )
        )
    return trace


def run_experiment(config: ExperimentConfig, objective: Objective | None = None) -> dict[str, RunTrace]:
    """Run every configured selector against the same objective and noise stream."""
    objective = objective or build_objective(config)
    u0 = config.start_index()
    return {
        s.kind.value: simulate(s, objective, config.horizon, u0, config.u1_direction, config.seed)
        for s in config.selectors
    }


# CSV ------------------------------------------------------------------------------


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def format_traces(traces: Iterable[RunTrace]) -> str:
    buf = io.StringIO()
    buf.write(TRACE_VERSION + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for trace in traces:
        for r in trace.records:
            h = r.h if r.h is not None else (None, None, None)
            writer.writerow(
                [r.k, trace.selector, r.index, _fmt(r.u), _fmt(r.y), _fmt(r.f), r.opt_index, r.case, *map(_fmt, h)]
            )
    return buf.getvalue()


def write_traces(traces: Iterable[RunTrace], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_traces(traces))
    return path


def read_traces(path: str | Path) -> dict[str, RunTrace]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != TRACE_VERSION:
        raise ValueError(f"{path}: missing '{TRACE_VERSION}' header")
    reader = csv.DictReader(lines[1:])
    if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
    traces: dict[str, RunTrace] = {}
    for row in reader:
        h = None
        if row["h_left"]:
            h = (float(row["h_left"]), float(row["h_center"]), float(row["h_right"]))
        trace = traces.setdefault(row["selector"], RunTrace(row["selector"]))
        trace.records.append(
            StepRecord(
                k=int(row["k"]),
                index=int(row["index"]),
                u=float(row["u"]),
                y=float(row["y"]),
                f=float(row["f"]),
                opt_index=int(row["opt_index"]),
                case=row["case"],
                h=h,
            )
        )
    return traces


# Metrics ---------------------------------------------------------------------------


@dataclass(frozen=True)
class References:
    oracle_total: float
    best_constant_total: float
    best_constant_index: int
    horizon: int


@dataclass(frozen=True)
class Metrics:
    selector: str
    steps_off_optimum: int
    total_value: float
    perturbation_count: int
    gain_vs_po: float  # relative, NaN without a standard P&O trace
    gain_vs_constant: float
    gap_to_oracle: float  # 1 - total / oracle


def compute_references(objective: Objective, horizon: int) -> References:
    """Per-step oracle total and the best constant input, both by exhaustive scan."""
    grid = objective.grid
    oracle = 0.0
    for k in range(horizon):
        oracle += objective.value(k, true_maximizer(objective, k))
    totals = {i: math.fsum(objective.value(k, i) for k in range(horizon)) for i in grid.indices()}
    best = max(totals, key=lambda i: (totals[i], -i))
    return References(oracle, totals[best], best, horizon)


def _trace_metrics(trace: RunTrace) -> tuple[int, float, int]:
    idx = trace.indices
    off = sum(1 for r in trace.records if r.index != r.opt_index)
    total = math.fsum(r.f for r in trace.records)
    moves = sum(1 for a, b in zip(idx, idx[1:]) if a != b)
    return off, total, moves


def compute_metrics(traces: dict[str, RunTrace], refs: References) -> dict[str, Metrics]:
    lengths = {name: len(t) for name, t in traces.items()}
    if any(n != refs.horizon for n in lengths.values()):
        raise ValueError(f"trace lengths {lengths} do not match horizon {refs.horizon}")
    base = {name: _trace_metrics(t) for name, t in traces.items()}
    po = base.get(SelectorKind.STANDARD_PO.value)
    out = {}
    for name, (off, total, moves) in base.items():
        out[name] = Metrics(
            selector=name,
            steps_off_optimum=off,
            total_value=total,
            perturbation_count=moves,
            gain_vs_po=total / po[1] - 1.0 if po and po[1] != 0 else math.nan,
            gain_vs_constant=total / refs.best_constant_total - 1.0,
            gap_to_oracle=1.0 - total / refs.oracle_total,
        )
    return out


METRIC_COLUMNS = tuple(f.name for f in dataclasses.fields(Metrics))


def format_metrics(metrics: dict[str, Metrics], refs: References) -> str:
    buf = io.StringIO()
    buf.write(f"# oracle_total={refs.oracle_total!r} best_constant_total={refs.best_constant_total!r} "
              f"best_constant_index={refs.best_constant_index}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for m in metrics.values():
        writer.writerow([m.selector, m.steps_off_optimum, repr(m.total_value), m.perturbation_count,
                         repr(m.gain_vs_po), repr(m.gain_vs_constant), repr(m.gap_to_oracle)])
    return buf.getvalue()


# Curves ------------------------------------------------------------------------------


def format_curves(objective: Objective, ks: Sequence[int]) -> str:
    """``k,u,value`` rows of the noiseless objective over the whole grid."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("k", "u", "value"))
    grid = objective.grid
    for k in ks:
        for i in grid.indices():
            writer.writerow((k, repr(grid.u(i)), repr(objective.value(k, i))))
    return buf.getvalue()


def export_curves(objective: Objective, ks: Sequence[int], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_curves(objective, ks))
    return path


"""Experiment orchestration: configs, cartesian run sets, sweeps, CSV and reports."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .aqm.disciplines import DISCIPLINES
from .aqm.types import AboveMidMode, EwmaClock, GatewayParams
from .metrics import percent_change, summarize
from .sim import LinkParams, TcpParams, build_dumbbell

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "discipline",
    "n_sources",
    "seed",
    "max_th",
    "min_th",
    "buffer",
    "duration",
    "throughput_bps",
    "relative_throughput",
    "mean_qdelay_s",
    "e_avg_pkts",
    "e_q_pkts",
    "loss_ratio_pct",
)
METRIC_COLUMNS = CSV_COLUMNS[7:]

SWEEP_LEVELS = {
    "sources": (12, 25, 37, 50, 62, 75, 87, 100),
    "max_th": (18, 24, 30, 36, 42, 48),
    "buffer": (40, 60, 80, 100, 120, 140, 160),
}
# load used by the max_th and buffer sweeps when no source count is given
SWEEP_DEFAULT_SOURCES = 75


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    disciplines: list[str] = field(default_factory=lambda: ["red", "aqmrd"])
    n_sources: list[int] = field(default_factory=lambda: [25, 50, 75, 100])
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    duration: float = 100.0
    max_th: list[float] = field(default_factory=lambda: [48.0])
    # None means max_th / 3 for every max_th level
    min_th: Optional[float] = None
    buffer: list[int] = field(default_factory=lambda: [64])
    w_q: float = 0.002
    max_p: float = 0.1
    x_factor: float = 2.0
    sample_interval: float = 0.01
    above_mid_mode: str = AboveMidMode.UNIT_PROB.value
    ewma_clock: str = EwmaClock.SAMPLE.value
    bandwidth: float = 20e6
    bottleneck_delay: float = 0.033
    out: Optional[str] = None
    trace: Optional[str] = None
    jobs: int = 0

    def validate(self) -> "ExperimentConfig":
        for name in ("disciplines", "n_sources", "seeds", "max_th", "buffer"):
            if not getattr(self, name):
                raise ConfigError(name, "list must not be empty")
        self.disciplines = [d.lower() for d in self.disciplines]
        for d in self.disciplines:
            if d not in DISCIPLINES:
                raise ConfigError("disciplines", f"unknown discipline {d!r}")
        if any(n < 1 for n in self.n_sources):
            raise ConfigError("n_sources", "every source count must be >= 1")
        if self.duration <= 0:
            raise ConfigError("duration", "must be positive")
        if self.jobs < 0:
            raise ConfigError("jobs", "must be >= 0")
        try:
            AboveMidMode(self.above_mid_mode)
        except ValueError:
            raise ConfigError("above_mid_mode", f"expected one of {[m.value for m in AboveMidMode]}")
        try:
            EwmaClock(self.ewma_clock)
        except ValueError:
            raise ConfigError("ewma_clock", f"expected one of {[m.value for m in EwmaClock]}")
        try:
            LinkParams(bottleneck_bandwidth=self.bandwidth, bottleneck_prop_delay=self.bottleneck_delay)
        except ValueError as exc:
            raise ConfigError("bandwidth", str(exc)) from None
        for max_th, buf in itertools.product(self.max_th, self.buffer):
            try:
                self.gateway(max_th, buf)
            except ValueError as exc:
                raise ConfigError(_gateway_field(str(exc)), str(exc)) from None
        return self

    def resolved_min_th(self, max_th: float) -> float:
        return self.min_th if self.min_th is not None else max_th / 3.0

    def gateway(self, max_th: float, buffer: int) -> GatewayParams:
        return GatewayParams(
            w_q=self.w_q,
            max_p=self.max_p,
            min_th=self.resolved_min_th(max_th),
            max_th=float(max_th),
            buffer_capacity=int(buffer),
            x=self.x_factor,
            sample_interval=self.sample_interval,
            above_mid_mode=AboveMidMode(self.above_mid_mode),
            ewma_clock=EwmaClock(self.ewma_clock),
        )

    def link(self) -> LinkParams:
        return LinkParams(bottleneck_bandwidth=self.bandwidth, bottleneck_prop_delay=self.bottleneck_delay)

    def config_hash(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if k not in ("out", "trace", "jobs")}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _gateway_field(message: str) -> str:
    for key, name in (("w_q", "w_q"), ("max_p", "max_p"), ("x must", "x_factor"),
                      ("sample_interval", "sample_interval"), ("buffer", "buffer"),
                      ("min_th", "min_th")):
        if key in message:
            return name
    return "max_th"


# -- config parsing ------------------------------------------------------

_LIST_INT = ("n_sources", "seeds", "buffer")
_LIST_FLOAT = ("max_th",)
_LIST_STR = ("disciplines",)
_ALIASES = {
    "scheme": "disciplines",
    "schemes": "disciplines",
    "discipline": "disciplines",
    "sources": "n_sources",
    "n": "n_sources",
    "seed": "seeds",
    "wq": "w_q",
    "maxp": "max_p",
    "x": "x_factor",
    "max_th": "max_th",
    "maxth": "max_th",
    "min_th": "min_th",
    "minth": "min_th",
    "buffer_size": "buffer",
}


def canonical_key(key: str) -> str:
    k = key.strip().lower().replace("-", "_")
    return _ALIASES.get(k, k)


def parse_int_list(text: str) -> list[int]:
    """Parse ``"1,2,5-7"`` into ``[1, 2, 5, 6, 7]``."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _coerce(key: str, value) -> object:
    if key in _LIST_INT:
        return parse_int_list(value) if isinstance(value, str) else [int(v) for v in value]
    if key in _LIST_FLOAT:
        if isinstance(value, str):
            return [float(v) for v in value.split(",") if v.strip()]
        return [float(v) for v in value]
    if key in _LIST_STR:
        if isinstance(value, str):
            return [v.strip() for v in value.split(",") if v.strip()]
        return list(value)
    if key in ("duration", "w_q", "max_p", "x_factor", "sample_interval", "bandwidth",
               "bottleneck_delay"):
        return float(value)
    if key == "min_th":
        return None if value in (None, "", "auto") else float(value)
    if key == "jobs":
        return int(value)
    if key in ("above_mid_mode", "ewma_clock"):
        return str(value).lower()
    if key in ("out", "trace"):
        return None if value in (None, "") else str(value)
    raise ConfigError(key, "unknown configuration key")


def parse_config_text(text: str) -> dict[str, str]:
    """Read flat ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        values[canonical_key(key)] = value.strip()
    return values


def make_config(*layers: dict) -> ExperimentConfig:
    """Merge override layers over the defaults, later layers winning."""
    cfg = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    for layer in layers:
        for key, value in layer.items():
            key = canonical_key(key)
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
            try:
                setattr(cfg, key, _coerce(key, value))
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(key, f"cannot parse {value!r}: {exc}") from None
    return cfg.validate()


# -- running -------------------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    discipline: str
    n_sources: int
    seed: int
    max_th: float
    buffer: int
    duration: float
    gw: GatewayParams
    link: LinkParams
    trace_dir: Optional[str] = None


def expand(cfg: ExperimentConfig) -> list[RunSpec]:
    specs = [
        RunSpec(d, n, s, float(mt), int(b), cfg.duration, cfg.gateway(mt, b), cfg.link(), cfg.trace)
        for d, n, s, mt, b in itertools.product(
            cfg.disciplines, cfg.n_sources, cfg.seeds, cfg.max_th, cfg.buffer
        )
    ]
    return sorted(specs, key=_spec_key)


def _spec_key(spec: RunSpec) -> tuple:
    return (spec.discipline, spec.n_sources, spec.seed, spec.max_th, spec.buffer)


def execute(spec: RunSpec) -> dict:
    """Run one simulation and return its CSV row as a dict."""
    sim = build_dumbbell(
        spec.n_sources,
        spec.seed,
        spec.link,
        spec.gw,
        spec.discipline,
        tcp=TcpParams(),
        trace=spec.trace_dir is not None,
    )
    m = sim.run(spec.duration)
    s = summarize(m)
    if spec.trace_dir is not None:
        write_trace(m.trace, Path(spec.trace_dir) / trace_filename(spec))
    return {
        "discipline": spec.discipline,
        "n_sources": spec.n_sources,
        "seed": spec.seed,
        "max_th": spec.max_th,
        "min_th": spec.gw.min_th,
        "buffer": spec.buffer,
        "duration": spec.duration,
        "throughput_bps": s.throughput_bps,
        "relative_throughput": s.relative_throughput,
        "mean_qdelay_s": s.mean_qdelay_s,
        "e_avg_pkts": s.e_avg_pkts,
        "e_q_pkts": s.e_q_pkts,
        "loss_ratio_pct": s.loss_ratio_pct,
    }


def trace_filename(spec: RunSpec) -> str:
    return (
        f"trace_{spec.discipline}_N{spec.n_sources}_s{spec.seed}"
        f"_maxth{fmt(spec.max_th)}_B{spec.buffer}.csv"
    )


def write_trace(trace, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "q", "avg", "davg", "mid_th"])
    for row in trace:
        w.writerow([fmt(v) for v in row])
    atomic_write(path, buf.getvalue())


def run_all(specs: Sequence[RunSpec], jobs: int = 0) -> list[dict]:
    """Execute specs, in parallel when ``jobs`` allows; output order follows ``specs``."""
    width = jobs or os.cpu_count() or 1
    width = min(width, len(specs)) or 1
    if width == 1:
        return [execute(s) for s in specs]
    with ProcessPoolExecutor(max_workers=width) as pool:
        return list(pool.map(execute, specs))


def run_scenario(cfg: ExperimentConfig) -> list[dict]:
    """One row per (discipline, N, seed, max_th, buffer), sorted by that key."""
    return run_all(expand(cfg), cfg.jobs)


def sweep_config(cfg: ExperimentConfig, param: str, levels: Optional[Sequence] = None) -> ExperimentConfig:
    """Config for a one-parameter sweep; other parameters are pinned to one value."""
    if param not in SWEEP_LEVELS:
        raise ConfigError("param", f"unknown sweep parameter {param!r}; expected one of {sorted(SWEEP_LEVELS)}")
    levels = list(levels) if levels else list(SWEEP_LEVELS[param])
    if param == "sources":
        return replace(cfg, n_sources=[int(v) for v in levels], max_th=cfg.max_th[:1], buffer=cfg.buffer[:1]).validate()
    if param == "max_th":
        return replace(cfg, max_th=[float(v) for v in levels], n_sources=cfg.n_sources[:1], buffer=cfg.buffer[:1]).validate()
    return replace(cfg, buffer=[int(v) for v in levels], n_sources=cfg.n_sources[:1], max_th=cfg.max_th[:1]).validate()


_SWEEP_COLUMN = {"sources": "n_sources", "max_th": "max_th", "buffer": "buffer"}


def aggregate_sweep(rows: Iterable[dict], param: str) -> list[dict]:
    """Mean and median of each metric across seeds, per (discipline, level)."""
    col = _SWEEP_COLUMN[param]
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["discipline"], r[col]), []).append(r)
    out = []
    for (disc, value), members in sorted(groups.items()):
        first = members[0]
        agg = {
            "discipline": disc,
            "sweep_param": param,
            "value": value,
            "n_sources": first["n_sources"],
            "max_th": first["max_th"],
            "min_th": first["min_th"],
            "buffer": first["buffer"],
            "duration": first["duration"],
            "n_seeds": len(members),
        }
        for metric in METRIC_COLUMNS:
            vals = [m[metric] for m in members if m[metric] is not None]
            agg[f"{metric}_mean"] = statistics.fmean(vals) if vals else None
            agg[f"{metric}_median"] = statistics.median(vals) if vals else None
        out.append(agg)
    return out


SWEEP_COLUMNS = (
    "discipline", "sweep_param", "value", "n_sources", "max_th", "min_th", "buffer",
    "duration", "n_seeds",
) + tuple(f"{m}_{k}" for m in METRIC_COLUMNS for k in ("mean", "median"))


def sweep(cfg: ExperimentConfig, param: str, levels: Optional[Sequence] = None) -> list[dict]:
    return aggregate_sweep(run_scenario(sweep_config(cfg, param, levels)), param)


# -- CSV ----------------------------------------------------------------


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def metadata_lines(cfg: ExperimentConfig, extra: Optional[dict] = None) -> list[str]:
    meta = {
        "config_hash": cfg.config_hash(),
        "seeds": ",".join(str(s) for s in cfg.seeds),
        "above_mid_mode": cfg.above_mid_mode,
        "ewma_clock": cfg.ewma_clock,
    }
    meta.update(extra or {})
    return [f"# {k}={v}" for k, v in meta.items()]


def render_csv(rows: Sequence[dict], columns: Sequence[str], header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def atomic_write(path: Path | str, text: str) -> None:
    """Write via a sibling temp file so a failed run leaves no partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


_TEXT_COLUMNS = ("discipline", "sweep_param")
_INT_COLUMNS = ("n_sources", "seed", "buffer", "n_seeds")


def read_csv(text: str) -> list[dict]:
    """Parse a run or sweep CSV back into typed rows, skipping ``#`` lines."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rows = []
    for raw in csv.DictReader(lines):
        row: dict = {}
        for k, v in raw.items():
            if k in _TEXT_COLUMNS:
                row[k] = v
            elif k in _INT_COLUMNS:
                row[k] = int(v)
            else:
                row[k] = float(v) if v not in ("", None) else None
        rows.append(row)
    return rows


# -- comparison report ----------------------------------------------------


class CompareError(ValueError):
    pass


_TABLES = (
    ("mean_qdelay_s", "E[Queuing Delay] (s)", "reduction"),
    ("e_avg_pkts", "E[Average Queue Size] (packets)", "reduction"),
    ("e_q_pkts", "E[Instantaneous Queue Size] (packets)", "reduction"),
    ("loss_ratio_pct", "Average Loss-ratio (%)", "increase"),
)


def compare_report(rows: Sequence[dict]) -> str:
    """Absolute tables and percent-change-vs-RED tables, medians over seeds."""
    if not rows:
        raise CompareError("no rows to compare")
    settings = sorted({(r["n_sources"], r["max_th"], r["buffer"]) for r in rows})
    have_red = {(r["n_sources"], r["seed"], r["max_th"], r["buffer"]) for r in rows if r["discipline"] == "red"}
    missing = sorted(
        {(r["n_sources"], r["seed"], r["max_th"], r["buffer"]) for r in rows} - have_red
    )
    if missing:
        n, s, mt, b = missing[0]
        raise CompareError(
            f"missing RED baseline for {len(missing)} group(s), e.g. N={n} seed={s} max_th={fmt(mt)} buffer={b}"
        )
    discs = sorted({r["discipline"] for r in rows}, key=lambda d: (d != "red", d))
    only_n = len({(mt, b) for _, mt, b in settings}) == 1
    labels = [f"N={n}" if only_n else f"N={n},max_th={fmt(mt)},B={b}" for n, mt, b in settings]

    def median_of(disc: str, setting: tuple, metric: str):
        n, mt, b = setting
        vals = [
            r[metric] for r in rows
            if r["discipline"] == disc and (r["n_sources"], r["max_th"], r["buffer"]) == setting
            and r[metric] is not None
        ]
        return statistics.median(vals) if vals else None

    out: list[str] = []
    for metric, title, sense in (("throughput_bps", "Throughput (bit/s)", "increase"),) + _TABLES:
        table = {d: [median_of(d, s, metric) for s in settings] for d in discs}
        out.append(_render_table(title, labels, {d: [fmt(v) for v in vals] for d, vals in table.items()}))
        if metric == "throughput_bps":
            continue
        heading = "reduction" if sense == "reduction" else "increase"
        pct = {
            d: [_pct(percent_change(v, table["red"][i], sense)) for i, v in enumerate(vals)]
            for d, vals in table.items()
        }
        out.append(_render_table(f"Percentage {heading} in {title} with respect to RED", labels, pct))
    return "\n".join(out)


def _pct(v) -> str:
    if v is None:
        return "n/a"
    if v == 0:
        return "0%"
    return f"{v:+.2f}%"


def _render_table(title: str, labels: Sequence[str], body: dict[str, list[str]]) -> str:
    first = max([len("scheme")] + [len(d) for d in body])
    widths = [max(len(lab), *(len(vals[i]) for vals in body.values())) for i, lab in enumerate(labels)]
    lines = [title, "-" * len(title)]
    lines.append("  ".join(["scheme".ljust(first)] + [lab.rjust(w) for lab, w in zip(labels, widths)]))
    for d, vals in body.items():
        lines.append("  ".join([d.ljust(first)] + [v.rjust(w) for v, w in zip(vals, widths)]))
    return "\n".join(lines) + "\n"

"""Command line entry point.

    dashsim run   --config NAME_OR_PATH [--seed N] [--out DIR] [--strict-formulas]
    dashsim sweep --config NAME_OR_PATH --sweep SPEC [--jobs N] [...]
    dashsim list

``run`` writes three files to the output directory:

* ``sessions.csv``: one row per downloaded segment, columns in the order of
  :data:`dashsim.netsim.SESSION_COLUMNS`.
* ``metrics.csv``: one row per segment-completion epoch, columns in the
  order of :data:`dashsim.metrics.EPOCH_COLUMNS`.
* ``summary.txt``: ``key = value`` lines.

``sweep`` takes a spec of ``key=value`` pairs separated by ``;``::

    clients=2..15; capacity_kbps=10000; policies=fairshare,rate,aimd; seeds=0..9

Keys: ``clients``, ``capacity_kbps``, ``per_client_kbps`` (capacity grows with
the client count), ``policies``, ``seeds`` and ``stagger`` (seconds between
joins). Values are single numbers, comma lists, or ``a..b`` / ``a..b:step``
ranges. Each cell writes one row of ``comparison.csv`` (see
:data:`COMPARISON_COLUMNS`). An empty spec runs the base scenario once,
exactly as ``run`` would, and also writes its comparison row.

Exit status: 0 success, 2 unreadable config or sweep spec, 3 invalid
parameters, 4 the horizon outlasts the capacity schedule, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .adapter import POLICIES, policy_label
from .config import ClientConfig, ConfigParseError, ScenarioConfig, bundled_scenarios, load_config
from .core import DashSimError, SimulationHorizonError, ValidationError
from .metrics import MetricsReport, summarize
from .netsim import SessionLog, TraceParseError, run_scenario

log = logging.getLogger("dashsim")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_HORIZON = 4

COMPARISON_COLUMNS = (
    "policy", "label", "clients", "capacity_kbps", "seed",
    "mean_inefficiency", "mean_instability", "mean_unfairness",
    "underflow_events", "overflow_events", "conservation_error",
)

_SWEEP_KEYS = {"clients", "capacity_kbps", "per_client_kbps", "policies", "seeds", "stagger"}


class SweepSpecError(DashSimError):
    pass


def simulate(config: ScenarioConfig) -> tuple[SessionLog, MetricsReport]:
    config.validate()
    schedule = config.schedule()
    session = run_scenario(
        schedule, config.arrivals(), config.bitrate_ladder(), config.horizon,
        seed=config.seed, params=config.policy_params(), segment_duration=config.segment_duration,
    )
    report = summarize(session, schedule, strict=config.strict_formulas)
    report.extra.update({
        "scenario": config.name,
        "seed": str(config.seed),
        "horizon_s": repr(float(config.horizon)),
        "policies": ",".join(sorted({policy_label(c.policy) for c in config.clients})),
    })
    return session, report


def write_outputs(out_dir: Path, session: SessionLog, report: MetricsReport) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "sessions.csv", out_dir / "metrics.csv", out_dir / "summary.txt"]
    with open(paths[0], "w", newline="") as f:
        session.write_csv(f)
    with open(paths[1], "w", newline="") as f:
        report.write_csv(f)
    with open(paths[2], "w") as f:
        report.write_summary(f)
    return paths


def print_summary(report: MetricsReport, stream=None) -> None:
    stream = stream or sys.stdout
    rows = report.summary()
    width = max(len(k) for k in rows)
    for k, v in rows.items():
        stream.write(f"{k:<{width}}  {v}\n")


def _parse_values(key: str, text: str, cast=float) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, _, rest = part.partition("..")
                hi, _, step = rest.partition(":")
                lo_v, hi_v = cast(lo), cast(hi)
                step_v = cast(step) if step else cast(1)
                if step_v <= 0 or hi_v < lo_v:
                    raise SweepSpecError(f"{key}: bad range {part!r}")
                v = lo_v
                while v <= hi_v + 1e-9 * abs(step_v):
                    out.append(v)
                    v = v + step_v
            else:
                out.append(cast(part))
        except ValueError:
            raise SweepSpecError(f"{key}: cannot read {part!r}") from None
    if not out:
        raise SweepSpecError(f"{key}: no values")
    return out


@dataclass(frozen=True)
class SweepSpec:
    clients: Optional[tuple[int, ...]] = None
    capacity_kbps: Optional[tuple[float, ...]] = None
    per_client_kbps: Optional[float] = None
    policies: Optional[tuple[str, ...]] = None
    seeds: Optional[tuple[int, ...]] = None
    stagger: Optional[float] = None

    @property
    def empty(self) -> bool:
        return self == SweepSpec()


def parse_sweep_spec(text: str) -> SweepSpec:
    fields_: dict = {}
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq:
            raise SweepSpecError(f"expected key=value, got {item!r}")
        if key not in _SWEEP_KEYS:
            raise SweepSpecError(f"unknown sweep key {key!r}; choose from {sorted(_SWEEP_KEYS)}")
        if key in fields_:
            raise SweepSpecError(f"{key} given twice")
        if key == "policies":
            names = tuple(p.strip() for p in value.split(",") if p.strip())
            if not names:
                raise SweepSpecError("policies: no values")
            fields_[key] = names
        elif key in ("clients", "seeds"):
            fields_[key] = tuple(_parse_values(key, value, int))
        elif key == "capacity_kbps":
            fields_[key] = tuple(_parse_values(key, value))
        else:
            vals = _parse_values(key, value)
            if len(vals) != 1:
                raise SweepSpecError(f"{key}: expected a single value")
            fields_[key] = vals[0]
    spec = SweepSpec(**fields_)
    if spec.capacity_kbps is not None and spec.per_client_kbps is not None:
        raise SweepSpecError("give capacity_kbps or per_client_kbps, not both")
    return spec


@dataclass(frozen=True)
class SweepCell:
    policy: str
    clients: int
    capacity_kbps: Optional[float]
    seed: int
    config: ScenarioConfig


def expand_sweep(base: ScenarioConfig, spec: SweepSpec) -> list[SweepCell]:
    """Grid of configs in a fixed order: policy, client count, capacity, seed."""
    if spec.empty:
        policy = base.clients[0].policy
        cap = base.breakpoints[0][1] if len(base.breakpoints) == 1 else None
        return [SweepCell(policy, len(base.clients), cap, base.seed, base)]
    policies = spec.policies or (base.clients[0].policy,)
    counts = spec.clients or (len(base.clients),)
    seeds = spec.seeds or (base.seed,)
    if spec.stagger is not None:
        stagger = spec.stagger
    elif len(base.clients) >= 2:
        stagger = base.clients[1].join_time - base.clients[0].join_time
    else:
        stagger = 0.0
    for p in policies:
        if p not in POLICIES:
            raise ValidationError("policy", f"unknown policy {p!r}; choose from {sorted(POLICIES)}")
    cells = []
    for p in policies:
        for n in counts:
            if n < 1:
                raise ValidationError("clients", "client count must be at least 1")
            if spec.per_client_kbps is not None:
                caps: Sequence[Optional[float]] = (spec.per_client_kbps * n,)
            else:
                caps = spec.capacity_kbps or (None,)
            for cap in caps:
                for seed in seeds:
                    clients = tuple(
                        ClientConfig(id=i + 1, join_time=i * stagger, policy=p) for i in range(n)
                    )
                    changes = dict(clients=clients, seed=seed)
                    if cap is not None:
                        changes.update(breakpoints=((0.0, float(cap)),), trace=None, capacity_end=None)
                    cells.append(SweepCell(p, n, cap, seed, base.with_updates(**changes)))
    return cells


def _cell_row(cell: SweepCell) -> dict:
    _, report = simulate(cell.config)
    return {
        "policy": cell.policy,
        "label": policy_label(cell.policy),
        "clients": str(cell.clients),
        "capacity_kbps": "" if cell.capacity_kbps is None else repr(float(cell.capacity_kbps)),
        "seed": str(cell.seed),
        **{k: report.summary()[k] for k in COMPARISON_COLUMNS[5:]},
    }


def run_sweep(cells: Sequence[SweepCell], jobs: int = 1) -> list[dict]:
    if jobs <= 1 or len(cells) <= 1:
        return [_cell_row(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cell_row, cells))


def write_comparison(path: Path, rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=COMPARISON_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _apply_flags(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.strict_formulas:
        changes["strict_formulas"] = True
    return config.with_updates(**changes) if changes else config


def cmd_run(args: argparse.Namespace) -> int:
    config = _apply_flags(load_config(args.config), args)
    session, report = simulate(config)
    paths = write_outputs(Path(config.output_dir), session, report)
    print_summary(report)
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _apply_flags(load_config(args.config), args)
    spec = parse_sweep_spec(args.sweep or "")
    config.validate()
    cells = expand_sweep(config, spec)
    out = Path(config.output_dir)
    if spec.empty:
        session, report = simulate(config)
        write_outputs(out, session, report)
        print_summary(report)
    rows = run_sweep(cells, args.jobs)
    write_comparison(out / "comparison.csv", rows)
    if not spec.empty:
        w = csv.DictWriter(sys.stdout, fieldnames=COMPARISON_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    log.info("wrote %d rows to %s", len(rows), out / "comparison.csv")
    return EXIT_OK


def cmd_list(args: argparse.Namespace) -> int:
    for name in bundled_scenarios():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dashsim", description="Multi-client adaptive streaming simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="scenario YAML path or bundled scenario name")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=None, help="output directory (default: from the scenario)")
        p.add_argument("--strict-formulas", action="store_true",
                       help="use the literal metric formulas instead of the corrected ones")

    run = sub.add_parser("run", help="simulate one scenario")
    common(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="simulate a grid of scenarios")
    common(sweep)
    sweep.add_argument("--sweep", default="", metavar="SPEC", help="e.g. 'clients=2..15;capacity_kbps=10000'")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sweep.set_defaults(func=cmd_sweep)

    lst = sub.add_parser("list", help="list bundled scenarios")
    lst.set_defaults(func=cmd_list)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigParseError, TraceParseError, SweepSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"error: invalid {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SimulationHorizonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HORIZON
    except DashSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

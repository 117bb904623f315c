"""Command-line front end: run scenarios, sweep parameters, closed-form tools.

Outputs of a run, written under the output directory:

* ``acr_<vc>.csv``     allowed cell rate, one row per change (ms, Mbps)
* ``recv_<vc>.csv``    cumulative cells delivered, one row per delivery
* ``queues_<switch>.csv``  total queued cells, sampled once per ms
* ``summary.csv``      interval throughputs and oscillation counts
* ``meta.txt``         resolved parameters, overrides, deviations, totals

All CSV files use a ``time_ms,value`` header row, six decimal places and
LF line endings, and are byte-identical between runs of the same
configuration.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import analysis, metrics
from .engine import ConfigError, Engine, SimulationError
from .protocol import VALID_CDF
from .metrics import Recorder
from .scenario import (
    Scenario,
    ScenarioError,
    bundled_config_text,
    parse_number,
    parse_scenario,
    render_scenario,
    to_topology,
)
from .units import cps_to_mbps, mbps_to_cps, ms_to_ps, ps_to_ms

SWEEPABLE = ("crm", "cdf", "icr", "rif")


@dataclass
class RunResult:
    out_dir: Path
    scenario: Scenario
    engine: Engine
    recorder: Recorder
    summary: list[tuple[str, str, float, float, float]]  # vc, metric, t0, t1, value


def load_scenario_text(path_arg: str) -> str:
    """Read a scenario file from disk, falling back to the bundled ones."""
    path = Path(path_arg)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    if "/" not in path_arg and "\\" not in path_arg:
        return bundled_config_text(path_arg)
    raise ScenarioError(f"no such scenario file: {path_arg}")


def apply_override(sc: Scenario, param: str, value: float) -> None:
    """Set one source parameter on every source of the scenario."""
    if param not in SWEEPABLE:
        raise ScenarioError(f"cannot override {param!r}; choose one of {SWEEPABLE}")
    for name, cfg in list(sc.sources.items()):
        if param == "crm":
            crm = int(value)
            if crm < 1:
                raise ScenarioError(f"crm must be >= 1, got {crm}")
            cfg = replace(cfg, crm=crm, tbe=crm * cfg.nrm)
        elif param == "cdf":
            if value not in VALID_CDF:
                raise ScenarioError(
                    f"cdf must be 0 or a power of two in [1/64, 1], got {value}"
                )
            cfg = replace(cfg, cdf=value)
        elif param == "icr":
            cfg = replace(cfg, icr_mbps=value)
        else:
            cfg = replace(cfg, rif=value)
        sc.sources[name] = cfg.resolved()


# -- output writing ------------------------------------------------------


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time_ms,value\n")
        fh.writelines(f"{t:.6f},{v:.6f}\n" for t, v in rows)


def _write_outputs(result: RunResult, overrides: dict[str, str]) -> None:
    out = result.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rec = result.recorder
    for vc_id, trace in rec.acr.items():
        _write_csv(
            out / f"acr_{vc_id}.csv",
            ((ps_to_ms(t), cps_to_mbps(v)) for t, v in zip(trace.times, trace.values)),
        )
    for vc_id, trace in rec.recv.items():
        _write_csv(
            out / f"recv_{vc_id}.csv",
            ((ps_to_ms(t), float(c)) for t, c in zip(trace.times, trace.counts)),
        )
    for sw, samples in rec.queues.items():
        _write_csv(out / f"queues_{sw}.csv", ((ps_to_ms(t), float(n)) for t, n in samples))

    with open(out / "summary.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("vc,metric,t0_ms,t1_ms,value\n")
        for vc, metric, t0, t1, value in result.summary:
            fh.write(f"{vc},{metric},{t0:.6f},{t1:.6f},{value:.6f}\n")

    lines = ["# resolved run parameters", ""]
    if overrides:
        lines.append("[overrides]")
        for key, value in overrides.items():
            lines.append(f"{key} = {value}")
        lines.append("")
    lines.append(render_scenario(result.scenario))
    lines.append("[report]")
    lines.append(f"events_processed = {result.engine.events_processed}")
    lines.append(f"final_time_ms = {ps_to_ms(result.engine.now):.6f}")
    lines.append(f"conservation_audits_passed = {rec.audits_passed}")
    for vc_id, vc in result.engine.vcs.items():
        lines.append(f"vc.{vc_id}.cells_emitted = {vc.emitted}")
        lines.append(f"vc.{vc_id}.cells_delivered = {vc.delivered}")
        lines.append(f"vc.{vc_id}.rm_turned_around = {vc.turned}")
        lines.append(f"vc.{vc_id}.initial_acr_mbps = {cps_to_mbps(vc.params.icr):.6f}")
        state = vc.state
        first = state.first_rule6_cells
        lines.append(f"vc.{vc_id}.rate_cut_count = {state.rule6_count}")
        lines.append(f"vc.{vc_id}.first_rate_cut_after_cells = {'-' if first is None else first}")
        fb = rec.first_backward.get(vc_id)
        lines.append(
            f"vc.{vc_id}.first_backward_rm_ms = "
            f"{'-' if fb is None else format(ps_to_ms(fb), '.6f')}"
        )
    for sw_name, sw in result.engine.switches.items():
        for port in sw.ports.values():
            lines.append(f"switch.{sw_name}.port.{port.name}.max_queue_cells = {port.max_queue}")
    lines.append("")
    lines.append("[deviations]")
    for dev in rec.deviations:
        lines.append(f"- {dev}")
    lines.append("")
    (out / "meta.txt").write_text("\n".join(lines), encoding="utf-8", newline="\n")


def _summarize(sc: Scenario, recorder: Recorder) -> list[tuple[str, str, float, float, float]]:
    run = sc.run
    horizon = run.until_ms
    windows = []
    if horizon > 0:
        windows.append((0.0, horizon))
        windows.extend(w for w in run.windows_ms if w[1] <= horizon)
        steady = run.steady_window()
        if steady[0] < steady[1]:
            windows.append(steady)
    low = mbps_to_cps(run.osc_low_mbps)
    high = mbps_to_cps(run.osc_high_mbps)
    rows = []
    for vc_id in recorder.recv:
        for t0, t1 in windows:
            rows.append(
                (
                    vc_id,
                    "throughput_mbps",
                    t0,
                    t1,
                    metrics.throughput(recorder.recv[vc_id], ms_to_ps(t0), ms_to_ps(t1)),
                )
            )
        for t0, t1 in windows:
            rows.append(
                (
                    vc_id,
                    "oscillations",
                    t0,
                    t1,
                    float(
                        metrics.oscillation_count(
                            recorder.acr[vc_id], low, high, ms_to_ps(t0), ms_to_ps(t1)
                        )
                    ),
                )
            )
    return rows


def execute_run(
    sc: Scenario, out_dir: Path, overrides: dict[str, str] | None = None
) -> RunResult:
    """Build, run and persist one scenario; raises on invariant failures."""
    recorder = Recorder()
    engine = Engine(to_topology(sc), recorder)
    engine.run_until(ms_to_ps(sc.run.until_ms))
    engine.audit()
    result = RunResult(
        out_dir=out_dir,
        scenario=sc,
        engine=engine,
        recorder=recorder,
        summary=_summarize(sc, recorder),
    )
    _write_outputs(result, overrides or {})
    return result


def steady_state_mbps(result: RunResult) -> dict[str, float]:
    t0, t1 = result.scenario.run.steady_window()
    if not t0 < t1:
        return {vc: 0.0 for vc in result.recorder.recv}
    return {
        vc: metrics.throughput(trace, ms_to_ps(t0), ms_to_ps(t1))
        for vc, trace in result.recorder.recv.items()
    }


# -- commands ------------------------------------------------------------


def _out_root(arg_out: str | None) -> Path:
    if arg_out:
        return Path(arg_out)
    return Path(os.environ.get("ABRSIM_OUT", "out"))


def _collect_overrides(args) -> dict[str, str]:
    overrides = {}
    if args.crm is not None:
        overrides["crm"] = str(args.crm)
    if args.cdf is not None:
        overrides["cdf"] = args.cdf
    if args.until_ms is not None:
        overrides["until_ms"] = repr(args.until_ms)
    return overrides


def _apply_args(sc: Scenario, args) -> dict[str, str]:
    overrides = _collect_overrides(args)
    if args.crm is not None:
        apply_override(sc, "crm", args.crm)
    if args.cdf is not None:
        apply_override(sc, "cdf", parse_number(args.cdf))
    if args.until_ms is not None:
        if args.until_ms < 0:
            raise ScenarioError("until-ms must be >= 0")
        sc.run.until_ms = args.until_ms
    return overrides


def cmd_run(args) -> int:
    sc = parse_scenario(load_scenario_text(args.config))
    overrides = _apply_args(sc, args)
    out_dir = _out_root(args.out)
    result = execute_run(sc, out_dir, overrides)
    print(f"run complete: {result.engine.events_processed} events, output in {out_dir}")
    for vc, metric, t0, t1, value in result.summary:
        if metric == "throughput_mbps":
            print(f"  {vc}: [{t0:.0f}, {t1:.0f}] ms -> {value:.2f} Mbps")
    return 0


def _sweep_worker(cfg_text: str, param: str, value_text: str, until_ms, out_dir: str):
    sc = parse_scenario(cfg_text)
    apply_override(sc, param, parse_number(value_text))
    if until_ms is not None:
        sc.run.until_ms = until_ms
    result = execute_run(sc, Path(out_dir), {param: value_text})
    steady = steady_state_mbps(result)
    t0, t1 = sc.run.steady_window()
    return value_text, steady, (t0, t1)


def cmd_sweep(args) -> int:
    cfg_text = load_scenario_text(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ScenarioError("sweep needs at least one value")
    # Validate every value up front, before any run starts.
    for value_text in values:
        sc = parse_scenario(cfg_text)
        apply_override(sc, args.param, parse_number(value_text))
    out_root = _out_root(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    jobs = [
        (value_text, str(out_root / f"{args.param}={value_text.replace('/', '_')}"))
        for value_text in values
    ]
    results = []
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=min(len(jobs), os.cpu_count() or 1)
    ) as pool:
        futures = [
            pool.submit(_sweep_worker, cfg_text, args.param, value_text, args.until_ms, job_dir)
            for value_text, job_dir in jobs
        ]
        for future in futures:
            results.append(future.result())

    summary_path = out_root / "sweep_summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("param,value,vc,steady_t0_ms,steady_t1_ms,steady_throughput_mbps\n")
        for value_text, steady, (t0, t1) in results:
            for vc, mbps in steady.items():
                fh.write(f"{args.param},{value_text},{vc},{t0:.6f},{t1:.6f},{mbps:.6f}\n")
    print(f"sweep complete: {len(results)} runs, summary in {summary_path}")
    for value_text, steady, _window in results:
        pretty = ", ".join(f"{vc}={mbps:.2f} Mbps" for vc, mbps in steady.items())
        print(f"  {args.param}={value_text}: {pretty}")
    return 0


def cmd_analyze(args) -> int:
    if args.tool == "min-crm":
        path = analysis.PathSpec(
            rtt=ms_to_ps(args.rtt_ms),
            link_rate=mbps_to_cps(args.mbps),
            nrm=args.nrm,
            hops=args.hops,
        )
        flight = analysis.flight_capacity(path)
        crm = analysis.min_crm(path)
        print(f"rtt = {args.rtt_ms} ms, link = {args.mbps} Mbps "
              f"({path.link_rate:.2f} cells/s), nrm = {args.nrm}, hops = {args.hops}")
        print(f"cells in flight over the round trip: {flight}")
        print(f"minimum crm: {crm} RM cells  (tbe >= {crm * args.nrm} cells)")
    elif args.tool == "decay":
        icr = mbps_to_cps(args.icr_mbps)
        mcr = mbps_to_cps(args.mcr_mbps)
        cdf = parse_number(args.cdf)
        rate = analysis.decay_after(icr, cdf, mcr, args.k)
        print(f"icr = {args.icr_mbps} Mbps, cdf = {args.cdf}, mcr = {args.mcr_mbps} Mbps")
        print(f"rate after {args.k + 1} consecutive cuts: "
              f"{cps_to_mbps(rate):.6g} Mbps ({rate:.2f} cells/s)")
    elif args.tool == "trigger":
        fwd = mbps_to_cps(args.fwd_mbps)
        bwd = mbps_to_cps(args.bwd_mbps)
        fires = analysis.trigger_predicate(fwd, bwd, args.crm)
        print(f"forward rate = {args.fwd_mbps} Mbps ({fwd:.2f} cells/s), "
              f"backward rate = {args.bwd_mbps} Mbps ({bwd:.2f} cells/s), crm = {args.crm}")
        print(f"cutoff triggers: {'yes' if fires else 'no'}")
    else:  # flight
        path = analysis.PathSpec(rtt=ms_to_ps(args.rtt_ms), link_rate=mbps_to_cps(args.mbps))
        print(f"rtt = {args.rtt_ms} ms, link = {args.mbps} Mbps ({path.link_rate:.2f} cells/s)")
        print(f"cells in flight over the round trip: {analysis.flight_capacity(path)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abrsim",
        description="Simulate and size ABR explicit-rate flow control on long-delay links.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and write CSV traces")
    run_p.add_argument("config", help="scenario file (bundled name or path)")
    run_p.add_argument("--crm", type=int, help="override crm on every source")
    run_p.add_argument("--cdf", help="override cdf on every source (e.g. 1/16)")
    run_p.add_argument("--until-ms", type=float, dest="until_ms", help="simulation horizon")
    run_p.add_argument("--out", help="output directory (default $ABRSIM_OUT or ./out)")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run the scenario once per parameter value")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--param", required=True, choices=SWEEPABLE)
    sweep_p.add_argument("--values", required=True, help="comma-separated values")
    sweep_p.add_argument("--until-ms", type=float, dest="until_ms")
    sweep_p.add_argument("--out")
    sweep_p.set_defaults(func=cmd_sweep)

    analyze_p = sub.add_parser("analyze", help="closed-form calculators")
    tool = analyze_p.add_subparsers(dest="tool", required=True)
    mc = tool.add_parser("min-crm", help="smallest safe cutoff threshold for a path")
    mc.add_argument("--rtt-ms", type=float, required=True, dest="rtt_ms")
    mc.add_argument("--mbps", type=float, required=True)
    mc.add_argument("--nrm", type=int, default=32)
    mc.add_argument("--hops", type=int, default=1)
    dec = tool.add_parser("decay", help="rate left after consecutive cutoff cuts")
    dec.add_argument("--icr-mbps", type=float, required=True, dest="icr_mbps")
    dec.add_argument("--cdf", required=True)
    dec.add_argument("--mcr-mbps", type=float, default=0.0, dest="mcr_mbps")
    dec.add_argument("--k", type=int, default=0)
    trig = tool.add_parser("trigger", help="does the cutoff trigger at these RM rates")
    trig.add_argument("--fwd-mbps", type=float, required=True, dest="fwd_mbps")
    trig.add_argument("--bwd-mbps", type=float, required=True, dest="bwd_mbps")
    trig.add_argument("--crm", type=int, required=True)
    fl = tool.add_parser("flight", help="cells in flight over a round trip")
    fl.add_argument("--rtt-ms", type=float, required=True, dest="rtt_ms")
    fl.add_argument("--mbps", type=float, required=True)
    analyze_p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"internal invariant failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

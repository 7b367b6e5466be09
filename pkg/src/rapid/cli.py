"""``rapid`` command-line entry point."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from rapid.cloud.client import CloudClient, SocketTransport
from rapid.cloud.server import CloudServer
from rapid.cloud.service import MockVLA, logit_entropy
from rapid.config import POLICIES, load_preset, load_run_config
from rapid.errors import RapidError
from rapid.metrics import (
    REPORT_FORMATS,
    compare_runs,
    emit_report,
    format_comparison,
    format_table,
    summarize,
)
from rapid.sim.engine import fit_routing_overhead, resolve_vmax, run_episode, simulate
from rapid.sim.observation import make_observation
from rapid.sim.scenario import TASK_CRITICAL_RATIO, generate, task_scenario, trajectory_from_states
from rapid.trajectory import read_jsonl
from rapid.trigger import TriggerConfig

log = logging.getLogger("rapid")


def _add_trigger_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("trigger")
    g.add_argument("--theta-comp", type=float, help="acceleration-branch threshold (default 0.65)")
    g.add_argument("--theta-red", type=float, help="torque-branch threshold (default 0.35)")
    g.add_argument("--vmax", type=float, help="velocity normalizer, rad/s (default: calibrated)")
    g.add_argument("--cooldown", type=int, help="cooldown in control ticks (default 10)")
    g.add_argument("--window-acc", type=int, help="acceleration statistics window, sensor ticks")
    g.add_argument("--window-tau", type=int, help="torque moving-average window, sensor ticks")
    g.add_argument("--eps", type=float, help="normalization guard (default 1e-6)")


def _trigger_cfg(args, base: TriggerConfig | None = None) -> TriggerConfig:
    return (base or TriggerConfig()).with_overrides(
        theta_comp=args.theta_comp,
        theta_red=args.theta_red,
        v_max=args.vmax,
        cooldown_steps=args.cooldown,
        w_a_len=args.window_acc,
        w_tau_len=args.window_tau,
        eps=args.eps,
    )


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--preset", default="sim", help="latency/load preset: sim, real or a TOML path")
    g.add_argument("--task", default="pick_place", choices=sorted(TASK_CRITICAL_RATIO))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--joints", type=int, default=7)
    g.add_argument("--duration", type=float, default=20.0, help="episode length, s")
    g.add_argument("--noise", type=float, default=0.0, help="observation corruption level in [0, 1]")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, help="report path; a .txt table (and .trace.csv) land beside it")
    p.add_argument("--format", choices=REPORT_FORMATS, default="json")


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    if args.config:
        rc = load_run_config(args.config)
        preset, scenario, policy = rc.preset, rc.scenario, rc.policy
        cfg = _trigger_cfg(args, rc.trigger)
        transport, host, port = rc.transport, rc.host, rc.port
    else:
        preset = load_preset(args.preset)
        scenario = task_scenario(args.task, args.seed, args.joints, args.duration, args.noise)
        policy, cfg = args.policy, _trigger_cfg(args)
        transport, host, port = args.transport, args.host, args.port
    if args.realtime:
        from rapid.realtime import run_realtime

        traj = generate(scenario, cfg.weight_profile)
        stats = run_realtime(traj, resolve_vmax(cfg, traj), preset.cloud, preset.horizon)
        for k, v in asdict(stats).items():
            print(f"{k}: {v}")
        return 0
    tx = SocketTransport(host, port) if transport == "socket" else None
    try:
        run = simulate(scenario, policy, cfg, preset, transport=tx, keep_trace=args.trace)
    finally:
        if tx is not None:
            tx.close()
    rep = run.report
    sys.stdout.write(format_table([rep], f"{rep.scenario_id} noise={rep.noise_level} preset={rep.preset}"))
    print(
        f"cycles={rep.cycles} dispatches={rep.dispatch_count} (anomaly={rep.anomaly_dispatches} "
        f"depletion={rep.depletion_refills} entropy={rep.entropy_offloads}) stalls={rep.stall_count}"
        + (f" v_max={run.v_max:.4g}" if run.v_max else "")
    )
    if args.out:
        for path in emit_report(rep, args.out, args.format):
            print(f"wrote {path}")
    return 0


def cmd_bench(args) -> int:
    preset = load_preset(args.preset)
    cfg = _trigger_cfg(args)
    tasks = args.tasks or sorted(TASK_CRITICAL_RATIO)
    scenarios = [
        task_scenario(t, s, args.joints, args.duration, args.noise) for t in tasks for s in range(args.seeds)
    ]
    if args.fit_routing:
        target = preset.vision_by_noise.get(0.0, preset.reference.get("vision_entropy"))
        if target is None:
            raise RapidError("preset has no vision reference total to fit routing against")
        fit_on = [s.with_noise(0.0) for s in scenarios]
        routing, preset = fit_routing_overhead(fit_on, preset, target)
        print(f"fitted vision routing overhead: {routing:.3f} ms (target {target} ms)")
    by_policy = {p: [run_episode(s, p, cfg, preset) for s in scenarios] for p in args.policies}
    summaries = [summarize(reps) for reps in by_policy.values()]
    title = f"preset={preset.name} tasks={','.join(tasks)} seeds={args.seeds} noise={args.noise}"
    note = "Lat. = cycle-weighted mean over all episodes; ± is the std of per-episode means across seeds/tasks."
    table = format_table([s.row() for s in summaries], title, note)
    sys.stdout.write(table)
    names = [s.policy for s in summaries]
    if "vision_entropy" in names and "rapid" in names:
        v = summaries[names.index("vision_entropy")].total_ms
        r = summaries[names.index("rapid")].total_ms
        print(f"speedup vision_entropy / rapid = {v / r:.4f}")
    cmp = compare_runs([reps[0] for reps in by_policy.values()]) if len(by_policy) > 1 else None
    if cmp is not None:
        sys.stdout.write("first episode: " + format_comparison(cmp))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "bench.txt").write_text(table, encoding="utf-8")
        for pol, reps in by_policy.items():
            for rep in reps:
                name = rep.scenario_id.replace("/", "_")
                emit_report(rep, args.out / f"{pol}__{name}.{args.format}", args.format)
        print(f"wrote reports under {args.out}")
    return 0


def cmd_sweep(args) -> int:
    preset = load_preset(args.preset)
    base = _trigger_cfg(args)
    scenarios = [task_scenario(args.task, s, args.joints, args.duration) for s in range(args.seeds)]
    rows = []
    for tc in args.theta_comp_grid:
        for tr in args.theta_red_grid:
            cfg = base.with_overrides(theta_comp=tc, theta_red=tr)
            reps = [run_episode(s, "rapid", cfg, preset) for s in scenarios]
            s = summarize(reps)
            rows.append((tc, tr, s.total_ms, s.cloud_ms, s.edge_ms, s.anomaly_dispatches, s.depletion_refills, s.stall_count))
    header = ("theta_comp", "theta_red", "total_ms", "cloud_ms", "edge_ms", "anomaly_dispatches", "depletion_refills", "stalls")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{x:.4f}" if isinstance(x, float) else x for x in r])
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(header)
            cw.writerows(rows)
        print(f"wrote {args.out}")
    return 0


def cmd_replay(args) -> int:
    records = read_jsonl(args.input)
    noise = args.noise if args.noise is not None else ((records[0].obs_noise or 0.0) if records else 0.0)
    traj = trajectory_from_states([r.state for r in records], args.sensor_hz, args.control_hz, noise, name=Path(args.input).stem)
    preset = load_preset(args.preset)
    run = simulate(traj.scenario, args.policy, _trigger_cfg(args), preset, trajectory=traj, keep_trace=args.trace)
    rep = run.report
    sys.stdout.write(format_table([rep], f"replay {args.input}"))
    print(f"dispatches={rep.dispatch_count} anomaly={rep.anomaly_dispatches} depletion={rep.depletion_refills}")
    if args.decisions:
        with open(args.decisions, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t", "control_tick", "m_acc", "m_tau", "m_acc_hat", "m_tau_hat", "omega_a", "s_imp", "trigger", "dispatch", "cooldown"))
            for d in run.decisions:
                w.writerow((d.t, "" if d.control_tick is None else d.control_tick, repr(d.m_acc), repr(d.m_tau),
                            repr(d.m_acc_hat), repr(d.m_tau_hat), repr(d.omega_a), repr(d.s_imp),
                            int(d.trigger), int(d.dispatch), d.cooldown_remaining))
        print(f"wrote {args.decisions}")
    if args.out:
        for path in emit_report(rep, args.out, args.format):
            print(f"wrote {path}")
    return 0


def cmd_serve(args) -> int:
    service = MockVLA(n_joints=args.joints, horizon=args.horizon, bins=args.bins, seed=args.seed)
    server = CloudServer(args.host, args.port, service)
    print(f"serving mock action model on {args.host}:{server.port} (joints={args.joints} k={args.horizon} bins={args.bins})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_probe(args) -> int:
    with SocketTransport(args.host, args.port, timeout_s=args.timeout_ms / 1e3) as tx:
        client = CloudClient(tx, latency=None, timeout_ms=args.timeout_ms)
        for step in range(args.count):
            obs = make_observation(step, args.noise, args.obs_bytes, args.seed)
            t0 = time.perf_counter()
            reply = client.request_chunk(obs)
            wall = (time.perf_counter() - t0) * 1e3
            h = logit_entropy(reply.logits)
            print(f"step={step} seq={reply.chunk.seq} k={reply.chunk.horizon} rtt={wall:.2f}ms "
                  f"entropy(min/max)={h.min():.3f}/{h.max():.3f} bits")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rapid", description="Kinematic-triggered edge-cloud offloading simulator.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario under one policy")
    p.add_argument("--config", type=Path, help="TOML run file (preset, [trigger], [scenario], [cloud])")
    p.add_argument("--policy", choices=POLICIES, default="rapid")
    p.add_argument("--transport", choices=("inprocess", "socket"), default="inprocess")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7878)
    p.add_argument("--trace", action="store_true", help="keep the per-tick trace (written as CSV with --out)")
    p.add_argument("--realtime", action="store_true", help="wall-clock two-thread demo instead of the simulator")
    _add_scenario_flags(p)
    _add_trigger_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="policy grid over seeds and tasks, with a comparison table")
    _add_scenario_flags(p)
    p.add_argument("--tasks", nargs="+", choices=sorted(TASK_CRITICAL_RATIO))
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--policies", nargs="+", choices=POLICIES, default=list(POLICIES))
    p.add_argument("--fit-routing", action="store_true", help="refit the vision routing overhead first")
    p.add_argument("--out", type=Path, help="directory for per-episode reports and bench.txt")
    p.add_argument("--format", choices=REPORT_FORMATS, default="json")
    _add_trigger_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="theta_comp x theta_red grid for the RAPID policy")
    _add_scenario_flags(p)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--theta-comp-grid", type=float, nargs="+", default=[0.35, 0.5, 0.65, 0.8, 0.95])
    p.add_argument("--theta-red-grid", type=float, nargs="+", default=[0.15, 0.25, 0.35, 0.45, 0.55])
    p.add_argument("--out", type=Path, help="CSV output path")
    _add_trigger_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="run a trajectory JSONL file through a policy")
    p.add_argument("input", type=Path)
    p.add_argument("--preset", default="sim")
    p.add_argument("--policy", choices=POLICIES, default="rapid")
    p.add_argument("--sensor-hz", type=int, default=500)
    p.add_argument("--control-hz", type=int, default=20)
    p.add_argument("--noise", type=float, help="override the file's obs_noise")
    p.add_argument("--decisions", type=Path, help="write every dispatcher decision as CSV")
    p.add_argument("--trace", action="store_true")
    _add_trigger_flags(p)
    _add_output_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="serve the mock action model over TCP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7878)
    p.add_argument("--joints", type=int, default=7)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--bins", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("probe", help="send a few requests to a running server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7878)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--obs-bytes", type=int, default=150528)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout-ms", type=float, default=2000.0)
    p.set_defaults(func=cmd_probe)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except RapidError as exc:
        print(f"rapid: error: {exc}", file=sys.stderr)
        return 2
    except (ConnectionError, OSError) as exc:
        print(f"rapid: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

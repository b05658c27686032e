"""Command-line entry point: topology runs, scenarios, vectors, benchmarks.

Subcommands::

    topo gen          write a topology file (nodes, links, matrices)
    sim reservations  per-(src, dst) reservation sizes as CSV
    sim cover         median cover per (seed, rate, strategy) as CSV
    sim plot          SVG line chart of median cover vs threshold or size
    scenario run      run a scenario file and evaluate its requirements
    vectors           print the crypto test-vector lines
    bench             non-binding throughput numbers (validate / admit)

Every run prints its resolved configuration and seed; with the same seed
any command is bit-reproducible. Exit codes: 0 success, 1 a scenario
requirement failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import random
import sys
import time
from fractions import Fraction

from . import crypto, simnet, source, topo, wire
from .admission import AllocationMatrix
from .router import Router, RouterConfig, TrafficClass
from .units import format_bps, parse_bandwidth, parse_duration


def _parse_seeds(text: str) -> list[int]:
    return [int(s) for s in str(text).split(",") if s != ""]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flyover", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    topo_p = sub.add_parser("topo", help="topology generation")
    topo_sub = topo_p.add_subparsers(dest="sub", required=True)
    gen = topo_sub.add_parser("gen", help="generate a topology file")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--m", type=int, default=2, help="attachment parameter")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--matrices", action="store_true", help="embed allocation matrices")
    gen.add_argument("-o", "--output", default="-")

    sim_p = sub.add_parser("sim", help="topology experiments")
    sim_sub = sim_p.add_subparsers(dest="sub", required=True)
    res = sim_sub.add_parser("reservations", help="per-pair reservation sizes CSV")
    cov = sim_sub.add_parser("cover", help="median cover CSV")
    for sp in (res, cov):
        sp.add_argument("--n", type=int, required=True)
        sp.add_argument("--m", type=int, default=2)
        sp.add_argument("--r", type=float, required=True, help="sampling rate in (0,1]")
        sp.add_argument("--strategy", choices=["max", "concurrent", "both"], default="both")
        sp.add_argument("--seeds", type=_parse_seeds, default=[1])
        sp.add_argument("--min-requesters", type=int, default=1)
        sp.add_argument("--jobs", type=int, default=1,
                        help="parallel workers across seeds (each seed deterministic)")
        sp.add_argument("-o", "--output", default="-")
    cov.add_argument("--gamma", default="100kbps", help="cover threshold, e.g. 100kbps")
    plot = sim_sub.add_parser("plot", help="SVG chart of median cover vs threshold")
    plot.add_argument("--n", type=int, required=True)
    plot.add_argument("--m", type=int, default=2)
    plot.add_argument("--r", type=float, default=0.1)
    plot.add_argument("--seed", type=int, default=1)
    plot.add_argument("--gammas", default="1kbps,10kbps,100kbps,1Mbps,10Mbps,100Mbps")
    plot.add_argument("--min-requesters", type=int, default=1)
    plot.add_argument("-o", "--output", required=True)

    sc = sub.add_parser("scenario", help="adversarial scenario runs")
    sc_sub = sc.add_subparsers(dest="sub", required=True)
    run = sc_sub.add_parser("run", help="run one scenario file")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--log", default=None, help="write the event log here")
    run.add_argument("--summary", default=None, help="write flow/monitor CSV here")

    vec = sub.add_parser("vectors", help="print crypto test vectors")
    vec.add_argument("-o", "--output", default="-")

    bench = sub.add_parser("bench", help="non-binding throughput benchmarks")
    bench_sub = bench.add_subparsers(dest="sub", required=True)
    bv = bench_sub.add_parser("validate", help="data-plane validation rate")
    bv.add_argument("--packets", type=float, default=1e5)
    ba = bench_sub.add_parser("admit", help="admission rate")
    ba.add_argument("--requests", type=float, default=1e4)

    return p


def _open_out(path: str):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


# -- topo gen ----------------------------------------------------------------


def cmd_topo_gen(args) -> int:
    print(f"# topo gen n={args.n} m={args.m} seed={args.seed}")
    g = topo.generate_topology(args.n, args.m, args.seed)
    mats = topo.build_matrices(g) if args.matrices else None
    doc = {
        "n": g.n,
        "seed": args.seed,
        "attachment": args.m,
        "links": [
            {"a": a, "b": b, "capacity": cap}
            for (a, b), cap in sorted(g.edge_capacity.items())
        ],
    }
    if mats is not None:
        doc["matrices"] = {str(u): mats[u].rows() for u in range(g.n)}
    out, close = _open_out(args.output)
    json.dump(doc, out, indent=1)
    out.write("\n")
    if close:
        out.close()
        print(f"# wrote {args.output}")
    return 0


# -- sim ----------------------------------------------------------------------


def _strategies(name: str) -> list[str]:
    if name == "both":
        return [topo.MAXIMUM, topo.CONCURRENT]
    return [topo.MAXIMUM if name == "max" else topo.CONCURRENT]


def _reservation_rows_for_seed(params) -> list[list]:
    n, m, r, strategies, min_req, seed = params
    g = topo.generate_topology(n, m, seed)
    mats = topo.build_matrices(g)
    demands = topo.build_demands(g, r, seed)
    study = topo.ReservationStudy(g, mats, demands, min_req)
    rows = []
    for strategy in strategies:
        for src, dst, size in study.reservation_rows(strategy):
            rows.append([seed, n, r, strategy, src, dst, f"{size:.6g}"])
    return rows


def _cover_rows_for_seed(params) -> list[list]:
    n, m, r, strategies, min_req, seed, gamma = params
    cfg = topo.ExperimentConfig(n, m, r, seed=seed, min_requesters=min_req)
    covers = topo.run_cover_experiment(cfg, float(gamma))
    return [[seed, n, r, s, gamma, f"{covers[s].median:.6f}"] for s in strategies]


def _fan_out(worker, param_list, jobs: int) -> list:
    if jobs <= 1 or len(param_list) <= 1:
        return [worker(p) for p in param_list]
    import multiprocessing

    with multiprocessing.Pool(min(jobs, len(param_list))) as pool:
        return pool.map(worker, param_list)  # ordered: output stays seed-sorted


def cmd_sim_reservations(args) -> int:
    print(f"# sim reservations n={args.n} m={args.m} r={args.r} "
          f"strategy={args.strategy} seeds={args.seeds} min_requesters={args.min_requesters}")
    out, close = _open_out(args.output)
    w = csv.writer(out)
    w.writerow(["seed", "n", "r", "strategy", "src", "dst", "a_ij_bps"])
    params = [(args.n, args.m, args.r, _strategies(args.strategy),
               args.min_requesters, seed) for seed in args.seeds]
    for rows in _fan_out(_reservation_rows_for_seed, params, args.jobs):
        w.writerows(rows)
    if close:
        out.close()
    return 0


def cmd_sim_cover(args) -> int:
    gamma = parse_bandwidth(args.gamma)
    print(f"# sim cover n={args.n} m={args.m} r={args.r} gamma={gamma} "
          f"strategy={args.strategy} seeds={args.seeds} min_requesters={args.min_requesters}")
    out, close = _open_out(args.output)
    w = csv.writer(out)
    w.writerow(["seed", "n", "r", "strategy", "gamma_bps", "median_cover"])
    params = [(args.n, args.m, args.r, _strategies(args.strategy),
               args.min_requesters, seed, gamma) for seed in args.seeds]
    for rows in _fan_out(_cover_rows_for_seed, params, args.jobs):
        w.writerows(rows)
    if close:
        out.close()
    return 0


def _svg_chart(series: dict[str, list[tuple[float, float]]], x_label: str,
               y_label: str) -> str:
    """Minimal deterministic SVG line chart (log-x, covers on y)."""
    import math

    width, height, pad = 640, 400, 60
    xs = [x for pts in series.values() for x, _ in pts]
    lo, hi = math.log10(min(xs)), math.log10(max(xs))
    span = hi - lo or 1.0

    def sx(x: float) -> float:
        return pad + (math.log10(x) - lo) / span * (width - 2 * pad)

    def sy(y: float) -> float:
        return height - pad - y * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>',
        f'<text x="{width//2}" y="{height-16}" text-anchor="middle" font-size="13">{x_label}</text>',
        f'<text x="18" y="{height//2}" font-size="13" transform="rotate(-90 18 {height//2})" '
        f'text-anchor="middle">{y_label}</text>',
    ]
    for i, (name, pts) in enumerate(sorted(series.items())):
        color = colors[i % len(colors)]
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in sorted(pts))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width-pad+4}" y="{pad+16*i+10}" font-size="12" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_sim_plot(args) -> int:
    gammas = [parse_bandwidth(x) for x in args.gammas.split(",")]
    print(f"# sim plot n={args.n} r={args.r} seed={args.seed} gammas={gammas}")
    g = topo.generate_topology(args.n, args.m, args.seed)
    mats = topo.build_matrices(g)
    demands = topo.build_demands(g, args.r, args.seed)
    study = topo.ReservationStudy(g, mats, demands, args.min_requesters)
    series: dict[str, list[tuple[float, float]]] = {"maximum": [], "concurrent": []}
    for gamma in gammas:
        covers = study.covers(float(gamma))
        for strategy in series:
            series[strategy].append((float(gamma), covers[strategy].median))
    svg = _svg_chart(series, "cover threshold (bps)", "median cover")
    with open(args.output, "w") as fh:
        fh.write(svg + "\n")
    print(f"# wrote {args.output}")
    return 0


# -- scenario -------------------------------------------------------------------


def cmd_scenario_run(args) -> int:
    cfg = simnet.load_scenario(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    print(f"# scenario {args.config} seed={cfg.get('seed', 0)} "
          f"duration={cfg.get('duration', '5s')}")
    result = simnet.run_scenario(cfg)
    failures = 0
    for req in cfg.get("requirements", ()):
        ok, detail = simnet.assert_requirement(result, req)
        status = "PASS" if ok else "FAIL"
        print(f"{req['r']}: {status} - {detail}")
        failures += 0 if ok else 1
    if args.log:
        with open(args.log, "w") as fh:
            fh.write("\n".join(result.log_lines) + "\n")
        print(f"# wrote {args.log}")
    if args.summary:
        with open(args.summary, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["flow", "sent", "delivered", "priority", "demoted",
                        "dropped", "max_delay_ns"])
            for row in result.flow_summary_rows():
                w.writerow(row)
            w.writerow([])
            w.writerow(["as", "src", "conform_bytes", "overuse_bytes",
                        "expired_pkts", "replay_pkts"])
            for row in result.monitor_rows():
                w.writerow(row)
        print(f"# wrote {args.summary}")
    return 1 if failures else 0


# -- vectors ----------------------------------------------------------------------


def vector_lines() -> list[str]:
    """Crypto test vectors from the production implementation."""
    lines = []
    k0 = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
    k1 = bytes.fromhex("ffeeddccbbaa99887766554433221100")
    k2 = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")
    for k, a in [(k0, 42), (k0, 43), (k1, 7), (k2, 0xFFFFFFFFFFFFFFFF), (k2, 0)]:
        lines.append(f"drkey {k.hex()} {a:016x} {crypto.derive_drkey(k, a).hex()}")
    for k, s, i, e in [(k0, 7, 1, 2), (k0, 7, 2, 1), (k1, 0xABCDEF, 0, 5), (k2, 1, 65535, 1)]:
        lines.append(f"auth {k.hex()} {s:016x} {i:04x} {e:04x} "
                     f"{crypto.compute_authenticator(k, s, i, e).hex()}")
    for k, t, ln in [(k0, 10**18, 1040), (k0, 10**18, 1041), (k1, 0, 0),
                     (k2, 2**64 - 1, 65535)]:
        lines.append(f"vf {k.hex()} {t:016x} {ln:04x} "
                     f"{crypto.compute_validation_field(k, t, ln).hex()}")
    for k, t, r, b in [(k0, 10**18, 1, 0), (k0, 10**18, 1, 1), (k1, 123456789, 0, 1)]:
        tag = crypto.compute_request_auth(k, t, bool(r), bool(b))
        lines.append(f"reqauth {k.hex()} {t:016x} {r:02x} {b:02x} {tag.hex()}")
    for k, t, r, b, bd, bm in [(k0, 10**18, 1, 0, 5 * 10**9, 10**9)]:
        tag = crypto.compute_request_auth(k, t, bool(r), bool(b), bd, bm)
        lines.append(f"reqauth2 {k.hex()} {t:016x} {r:02x} {b:02x} {bd:016x} "
                     f"{bm:016x} {tag.hex()}")
    for k, nonce, bw, exp in [(k0, bytes(range(12)), 10**9, 2 * 10**18),
                              (k1, bytes(12), 0, 0)]:
        alpha = crypto.compute_authenticator(k, 7, 1, 2)
        _, ct, tag = crypto.seal_grant(k, alpha, bw, exp, nonce=nonce)
        lines.append(f"seal {k.hex()} {nonce.hex()} {bw:016x} {exp:016x} "
                     f"{alpha.hex()} {ct.hex()} {tag.hex()}")
    return lines


def cmd_vectors(args) -> int:
    out, close = _open_out(args.output)
    out.write("\n".join(vector_lines()) + "\n")
    if close:
        out.close()
        print(f"# wrote {args.output}")
    return 0


# -- bench -------------------------------------------------------------------------


def _bench_router():
    matrix = AllocationMatrix([[0, 10**11, 10**11]] + [[10**11, 0, 10**11]]
                              + [[10**11, 10**11, 0]])
    # short replay window keeps the dedup set small over long runs
    cfg = RouterConfig(delta_ns=500_000, lifetime_ns=1_000_000)
    router = Router(1, bytes(range(16)), matrix, cfg, rng=random.Random(1))
    est = router.policy.estimator_for(1, 2)
    est.granted.add(7)
    est.previous.add(7)
    return router


def cmd_bench_validate(args) -> int:
    n = int(args.packets)
    print(f"# bench validate packets={n} (non-binding)")
    router = _bench_router()
    router.monitor.register(7, 8 * 10**12, 10**18, wire.FORWARD, 0)
    alpha = crypto.compute_authenticator(router.secret, 7, 1, 2)
    elapsed = 0.0
    prio = done = 0
    chunk = 10_000
    while done < n:
        batch = []
        for k in range(done, min(done + chunk, n)):
            ts = 1000 + k * 2000  # unique, paced inside the replay window
            batch.append(wire.DataPacket(
                7, False, ts, 0,
                ((0, crypto.compute_validation_field(alpha, ts, 1026)),),
                (), b""))
        t0 = time.perf_counter()
        for pkt in batch:
            d = router.handle_data(pkt, 0, 1, 2, now=pkt.ts_pkt, wire_len=1026)
            if d.traffic_class is TrafficClass.PRIORITY:
                prio += 1
        elapsed += time.perf_counter() - t0
        done += len(batch)
    print(f"validated {n} packets in {elapsed:.3f}s -> {n/elapsed:,.0f} "
          f"validations/sec ({prio} priority)")
    return 0


def cmd_bench_admit(args) -> int:
    n = int(args.requests)
    print(f"# bench admit requests={n} (non-binding)")
    router = _bench_router()
    drkey = crypto.derive_drkey(router.secret, 7)
    t0 = time.perf_counter()
    granted = 0
    for k in range(n):
        ts = 1000 + k
        auth = crypto.compute_request_auth(drkey, ts, True, False)
        req = wire.SetupRequest(7, ts, (wire.ReqEntry(0, True, False, auth),))
        _, entries = router.handle_setup(req, 0, 1, 2, now=ts)
        granted += len(entries)
    dt = time.perf_counter() - t0
    print(f"admitted {n} requests in {dt:.3f}s -> {n/dt:,.0f} admissions/sec "
          f"({granted} granted)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.cmd == "topo":
            return cmd_topo_gen(args)
        if args.cmd == "sim":
            if args.sub == "reservations":
                return cmd_sim_reservations(args)
            if args.sub == "cover":
                return cmd_sim_cover(args)
            return cmd_sim_plot(args)
        if args.cmd == "scenario":
            return cmd_scenario_run(args)
        if args.cmd == "vectors":
            return cmd_vectors(args)
        if args.cmd == "bench":
            if args.sub == "validate":
                return cmd_bench_validate(args)
            return cmd_bench_admit(args)
    except (simnet.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

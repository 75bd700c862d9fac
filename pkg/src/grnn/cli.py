"""``grnn`` command line.

Exit codes: 0 success, 1 validation error (or failed gradient check),
2 numeric failure (non-finite values or a diverging run).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

import grnn
from grnn import data, evaluate, model
from grnn.checkpoint import Checkpoint
from grnn.errors import GRNNError, NumericError
from grnn.graph import (
    build_propagation_matrix,
    export_linkages,
    grid_road_network,
    ladder_road_network,
    random_road_network,
    read_road_network,
    transform,
    write_road_network,
)
from grnn.online import DivergenceMonitor, TrainConfig, run_offline

log = logging.getLogger("grnn")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


def sha256_bytes(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(args, **extra) -> dict:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    return {"command": args.command, "args": resolved, "version": grnn.__version__, **extra}


def _load_graph(args):
    net = read_road_network(args.nodes, args.edges)
    link = transform(net)
    return net, link, sha256_bytes(export_linkages(link).encode())


def cmd_transform(args) -> int:
    net, link, ghash = _load_graph(args)
    out = _out_dir(args.out)
    (out / "linkages.csv").write_text(export_linkages(link))
    expected = net.expected_linkages()
    stats = {
        "n": link.n,
        "nnz": link.nnz,
        "sum_indeg_outdeg": expected,
        "check": link.nnz == expected,
        "nodes": list(link.nodes),
    }
    _write_json(out / "stats.json", stats)
    _write_json(out / "manifest.json", _manifest(args, graph_hash=ghash))
    print(f"n={link.n} nnz={link.nnz} sum_indeg_outdeg={expected} check={'ok' if stats['check'] else 'FAILED'}")
    return EXIT_OK


def cmd_grid(args) -> int:
    if args.random_segments:
        net = random_road_network(args.rows * args.cols, args.random_segments, args.seed)
    elif args.ladder:
        net = ladder_road_network(args.ladder)
    else:
        net = grid_road_network(args.rows, args.cols)
    out = _out_dir(args.out)
    write_road_network(net, out / "nodes.csv", out / "edges.csv")
    _write_json(out / "manifest.json", _manifest(args, synthetic=True))
    print(f"wrote {len(net.vertices)} intersections, {len(net.segments)} segments to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    _, link, ghash = _load_graph(args)
    sp = data.SimParams(
        beta=args.beta, noise=args.noise, amplitude=args.amplitude,
        persistence=args.persistence, base=args.base, base_spread=args.base_spread,
        interval_minutes=args.interval_minutes, seed=args.seed,
    )
    L = args.intervals if args.intervals else args.days * (24 * 60 // args.interval_minutes)
    panel = data.simulate_diffusion(link, L, sp)
    out = _out_dir(args.out)
    text = data.format_panel(panel)
    (out / "panel.csv").write_text(text)
    _write_json(out / "manifest.json", _manifest(
        args, synthetic=True, sim_params=sp.to_dict(), intervals=L,
        graph_hash=ghash, data_hash=sha256_bytes(text.encode()),
    ))
    print(f"simulated {link.n} segments x {L} intervals (synthetic)")
    return EXIT_OK


def cmd_train(args) -> int:
    _, link, ghash = _load_graph(args)
    panel_bytes = Path(args.panel).read_bytes()
    panel = data.load_panel(args.panel, link)
    out = _out_dir(args.out)

    if args.resume:
        ck = Checkpoint.load(args.resume)
        if ck.nodes != link.nodes:
            raise GRNNError("checkpoint node order does not match the road network")
        cfg, state = ck.config, ck.state
        norm = data.Normalizer(ck.normalizer["min"], ck.normalizer["max"])
        start = state.t
    else:
        cfg = TrainConfig(
            T=args.window, D=args.hidden, epochs=args.epochs, alpha=args.alpha,
            lr=args.lr, seed=args.seed, carry_hidden=not args.reset_hidden,
            gate_bias=args.gate_bias,
        )
        state, start = None, 0
        norm = data.Normalizer.fit(panel, args.split)

    A = build_propagation_matrix(link, cfg.alpha)
    values = norm.apply(panel.values)
    stop = min(panel.L, args.stop_after) if args.stop_after else None
    log.info("training on %d segments x %d intervals, %s", link.n, panel.L, cfg)
    res = run_offline(values, cfg, A, args.split, state=state, start=start, stop=stop,
                      monitor=DivergenceMonitor())

    pred = norm.invert(res.prediction)
    truth = panel.values[:, res.intervals]
    lines = ["interval,segment_id,prediction,truth"]
    for k, t in enumerate(res.intervals.tolist()):
        for i, sid in enumerate(link.nodes):
            lines.append(f"{t},{sid},{pred[i, k]!r},{truth[i, k]!r}")
    (out / "predictions.csv").write_text("\n".join(lines) + "\n")
    Checkpoint(cfg, link.nodes, res.state, norm.to_dict()).save(out / "checkpoint.json")

    report = {"alpha": cfg.alpha, "config": cfg.to_dict(), "clamped_values": norm.clamped}
    if res.intervals.size:
        period = panel.intervals_per_day()
        rep = evaluate.EvalReport.from_panels(truth, pred, cfg.to_dict())
        report["grnn"] = rep.to_dict()
        for name, base in (("historical_average", evaluate.historical_average(panel, period)),
                           ("persistence", evaluate.persistence(panel))):
            b = base[:, res.intervals]
            report[name] = {"mse": evaluate.mse(truth, b), "vd": evaluate.vd(truth, b)}
        (out / "report_segments.csv").write_text(rep.segment_table(link.nodes))
        print(f"validation rows={res.intervals.size} mse={rep.mse:.4f} vd={rep.vd:.4f} "
              f"ha_mse={report['historical_average']['mse']:.4f} "
              f"persistence_mse={report['persistence']['mse']:.4f}")
    else:
        print("no validation rows emitted")
    _write_json(out / "report.json", report)
    _write_json(out / "manifest.json", _manifest(
        args, config=cfg.to_dict(), graph_hash=ghash, data_hash=sha256_bytes(panel_bytes),
        resumed_from=args.resume, arrivals=[start, res.state.t],
    ))
    return EXIT_OK


def gradcheck(D: int, n_segments: int, T: int, alpha: float, seed: int,
              epsilon: float = 1e-4, corrupt: bool = False) -> dict[str, float]:
    """Worst relative error per parameter, analytic vs finite differences."""
    link = transform(random_road_network(max(2, n_segments // 2), n_segments, seed))
    A = build_propagation_matrix(link, alpha)
    rng = np.random.default_rng(seed)
    p = model.init_params(D, link.n, 1, seed, scale=0.5)
    p.B_z = rng.normal(0, 0.5, p.B_z.shape)
    p.B_r = rng.normal(0, 0.5, p.B_r.shape)
    p.b_o = rng.normal(0, 0.5, p.b_o.shape)
    H0 = rng.standard_normal((D, link.n))
    X = rng.uniform(0.05, 0.95, (T, link.n))
    Y = rng.uniform(0.05, 0.95, (T, link.n))
    g = model.backward(model.forward(p, H0, X, A), Y, p, A)
    if corrupt:
        g.U[0, 0] += 0.1 * (abs(g.U[0, 0]) + 1e-3)
    f = model.fd_gradient(p, H0, X, Y, A, epsilon)
    return model.relative_errors(g, f)


def cmd_gradcheck(args) -> int:
    errs = gradcheck(args.hidden, args.segments, args.window, args.alpha, args.seed,
                     args.epsilon, args.corrupt)
    worst = max(errs.values())
    for name, e in errs.items():
        print(f"{name:4s} worst_rel_err={e:.3e} {'ok' if e <= args.tol else 'FAIL'}")
    ok = worst <= args.tol
    print(f"{'PASS' if ok else 'FAIL'} worst={worst:.3e} tol={args.tol:.1e}")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = evaluate.complexity_bench(sizes, D=args.hidden, steps=args.steps, T=args.window, seed=args.seed)
    table = evaluate.bench_table(rows)
    sys.stdout.write(table)
    if args.out:
        out = _out_dir(args.out)
        (out / "bench.csv").write_text(table)
        _write_json(out / "manifest.json", _manifest(args))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="grnn", description="Graph recurrent traffic predictor")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def graph_args(p):
        p.add_argument("--nodes", required=True, help="node file vertex_id,lng,lat")
        p.add_argument("--edges", required=True, help="edge file segment_id,init_vertex,term_vertex")

    p = sub.add_parser("transform", help="road network -> linkage network")
    graph_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("grid", help="write a synthetic road network")
    p.add_argument("--rows", type=int, default=2)
    p.add_argument("--cols", type=int, default=4)
    p.add_argument("--random-segments", type=int, default=0,
                   help="random network with this many segments instead of a grid")
    p.add_argument("--ladder", type=int, default=0, metavar="COLUMNS",
                   help="acyclic two-arterial ladder instead of a grid (8 gives 20 segments)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("simulate", help="synthetic upstream-driven condition panel")
    graph_args(p)
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--intervals", type=int, default=0, help="overrides --days")
    p.add_argument("--interval-minutes", type=int, default=10)
    p.add_argument("--beta", type=float, default=0.6)
    p.add_argument("--noise", type=float, default=data.SimParams.noise)
    p.add_argument("--amplitude", type=float, default=data.SimParams.amplitude)
    p.add_argument("--persistence", type=float, default=data.SimParams.persistence)
    p.add_argument("--base", type=float, default=data.SimParams.base)
    p.add_argument("--base-spread", type=float, default=data.SimParams.base_spread)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="online training and prediction over a panel")
    graph_args(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--window", type=int, default=48, help="truncation window T")
    p.add_argument("--hidden", type=int, default=16, help="hidden size D")
    p.add_argument("--epochs", type=int, default=10, help="iterations per arrival")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--split", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gate-bias", type=float, default=TrainConfig.gate_bias)
    p.add_argument("--reset-hidden", action="store_true",
                   help="re-initialize the hidden state for every window")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--stop-after", type=int, default=0, help="stop after this many arrivals")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--segments", type=int, default=6)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="joint vs separate training cost")
    p.add_argument("--sizes", default="1,10,156")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GRNNError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

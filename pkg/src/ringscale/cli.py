"""``ringscale`` command-line entry point.

Exit codes: 0 success, 1 validation/input error (including usage errors),
2 runtime failure such as an unreachable peer.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import collectives, topo
from .deploykit import (load_container_recipe, load_launch_recipe, make_launch_recipe, render_container_recipe,
                        render_job_script, default_container_recipe, validate_recipe)
from .errors import RuntimeFailure, ValidationError
from .harness import TrainConfig, measure_scaling
from .report import (ALL_TABLES, SNG_NODE_PEAK, compute_scaling_report, load_table, records_from_csv, records_to_csv,
                     render_table, verify_published_tables)

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("worker counts must be positive integers")
    return values


def cmd_plan(args, out):
    cluster = topo.load_cluster(args.cluster)
    node = cluster.node
    if args.ranks is not None or args.threads is not None:
        if args.ranks is None or args.threads is None:
            raise ValidationError("--ranks and --threads must be given together")
        plans = [topo.PlacementPlan(args.ranks, args.threads, args.ht, args.numa)]
    else:
        plans = topo.enumerate_placements(node)
    validated = [topo.validate_placement(node, p) for p in plans]
    out.write("ranks_per_node,threads_per_rank,hyperthreading,numa_clustering,cores_used,cores_available\n")
    for v in validated:
        p = v.plan
        out.write(f"{p.ranks_per_node},{p.threads_per_rank},{int(p.hyperthreading)},{p.numa_clustering},"
                  f"{v.cores_used},{v.cores_available}\n")
    out.write("\n")
    out.write(f"{cluster.name}: {node.cores_per_node} cores/node, {node.sockets} sockets, "
              f"NUMA modes {','.join(map(str, node.numa_modes))}, SMT x{node.threads_per_core}\n")
    out.write("Ranks/node | Threads/rank | HT | NUMA domains | Cores used\n--- | --- | --- | --- | ---\n")
    for v in validated:
        p = v.plan
        out.write(f"{p.ranks_per_node} | {p.threads_per_rank} | {'yes' if p.hyperthreading else 'no'} | "
                  f"{p.numa_clustering} | {v.cores_used}/{v.cores_available}\n")


def cmd_peak(args, out):
    cluster = topo.load_cluster(args.cluster)
    node_peak = topo.peak_flops(cluster.node, args.precision, args.freq)
    nodes = cluster.total_nodes if args.nodes is None else args.nodes
    if nodes < 1:
        raise ValidationError("--nodes must be >= 1")
    total = topo.peak_flops(topo.ClusterSpec(cluster.name, nodes, cluster.node), args.precision, args.freq)
    out.write("scope,nodes,precision,freq_mode,flops_per_s\n")
    out.write(f"node,1,{args.precision},{args.freq},{node_peak!r}\n")
    out.write(f"cluster,{nodes},{args.precision},{args.freq},{total!r}\n")
    out.write(f"\nnode peak {node_peak / 1e12:.4f} TFLOPS; {nodes} nodes {total / 1e15:.4f} PFLOPS\n")


def cmd_bench(args, out):
    template = TrainConfig(workers=1, per_worker_batch=args.per_worker_batch, base_learning_rate=args.lr,
                           lr_scaling=args.lr_scaling, epochs=args.epochs,
                           samples_per_worker_per_epoch=args.samples_per_worker, sample_side=args.side,
                           seed=args.seed)
    losses = []

    def on_run(workers, rep, result):
        for e in result.epochs:
            losses.append((workers, rep, e.epoch, e.mean_loss, e.total_flops))

    records = measure_scaling(template, args.workers, repeats=args.repeats, transport=args.transport,
                              processes=args.processes, on_run=on_run)
    if args.verbose:
        out.write("workers,repeat,epoch,mean_loss,worker_flops\n")
        for w, rep, ep, loss, flops in losses:
            out.write(f"{w},{rep},{ep},{loss!r},{flops}\n")
        out.write("\n")
    csv_text = records_to_csv(records)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    if not args.no_timing:
        report = compute_scaling_report(records)
        out.write(csv_text + "\n")
        out.write(render_table(report, "markdown", unit_label="Workers"))


def cmd_allreduce_test(args, out):
    n = args.world_size
    rng = np.random.default_rng(args.seed)
    inputs = [rng.standard_normal((args.trials, args.length)) for _ in range(n)]

    results = collectives.run_world(n, _allreduce_trials, inputs, transport=args.transport,
                                    processes=args.processes, step_timeout=args.step_timeout)
    expected = inputs[0].copy()
    scale = np.abs(inputs[0])
    for x in inputs[1:]:
        expected = expected + x
        scale = scale + np.abs(x)
    worst = 0.0
    for r, res in enumerate(results):
        if res.tobytes() != results[0].tobytes():
            raise RuntimeFailure(f"rank {r} result differs from rank 0")
        worst = max(worst, relative_error(res, expected, scale))
    ok = worst <= args.rtol
    out.write("world_size,transport,trials,length,max_rel_error,ranks_identical,ok\n")
    out.write(f"{n},{args.transport},{args.trials},{args.length},{worst:.3e},1,{int(ok)}\n")
    if not ok:
        raise RuntimeFailure(f"allreduce error {worst:.3e} exceeds {args.rtol:g}")


def relative_error(got, expected, scale):
    """Largest elementwise error relative to the sum of magnitudes being reduced."""
    denom = np.maximum(scale, np.finfo(float).tiny)
    return float(np.max(np.abs(got - expected) / denom, initial=0.0))


def _allreduce_trials(comm, inputs):
    mine = inputs[comm.rank]
    return np.stack([collectives.allreduce(comm, row, "sum") for row in mine])


def cmd_report(args, out):
    if args.paper_table is not None:
        if args.paper_table not in ALL_TABLES[:-1]:
            raise ValidationError("--paper-table must be one of 1..6")
        records = [(r.units, r.time_s) for r in load_table(args.paper_table)]
        label = "Nodes"
    elif args.input:
        try:
            text = Path(args.input).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read {args.input}: {exc.strerror}") from exc
        records = records_from_csv(text)
        label = args.unit_label
    else:
        raise ValidationError("give --input FILE or --paper-table N")
    report = compute_scaling_report(records, base_units=args.base)
    out.write(render_table(report, args.format, unit_label=label))
    for row in report.superlinear_rows:
        sys.stderr.write(f"note: superlinear efficiency {100 * row.efficiency:.1f}% at {row.units} units\n")


def cmd_verify_paper(args, out):
    tables = [args.table] if args.table is not None else None
    if args.table is not None and args.table not in ALL_TABLES:
        raise ValidationError("--table must be one of 1..7")
    found = verify_published_tables(tables, tolerance_pp=args.tolerance_pp,
                                    tolerance_linear=args.tolerance_linear,
                                    tolerance_peak_pp=args.tolerance_peak_pp, node_peak=SNG_NODE_PEAK)
    out.write("table,units,column,printed,recomputed\n")
    for d in found:
        out.write(f"{d.table},{d.units},{d.column},{d.printed:g},{d.recomputed:.6g}\n")
    out.write(f"\n{len(found)} discrepanc{'y' if len(found) == 1 else 'ies'} "
              f"in table{'s' if tables is None else ''} {','.join(map(str, tables or ALL_TABLES))}\n")


def cmd_recipe(args, out):
    node = topo.load_cluster(args.cluster).node
    if args.kind == "container":
        cfg = load_container_recipe(args.config) if args.config else default_container_recipe()
        text = render_container_recipe(cfg)
    else:
        if args.config:
            recipe = load_launch_recipe(args.config)
        else:
            if args.ranks is None or args.threads is None:
                raise ValidationError("give --config FILE or --ranks/--threads")
            recipe = make_launch_recipe(topo.PlacementPlan(args.ranks, args.threads, args.ht, args.numa),
                                        nodes=args.nodes, host_mpi_dir=args.host_mpi_dir or "",
                                        fabric=args.fabric)
        for finding in validate_recipe(recipe, node, mixed_mpi_threshold=args.mixed_mpi_threshold):
            sys.stderr.write(f"{finding.kind}: {finding.message}\n")
        text = render_job_script(recipe, node)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        out.write(text)


def build_parser():
    p = _Parser(prog="ringscale", description="Ring-allreduce scaling lab and HPC launch recipes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("plan", help="enumerate or validate rank x thread placements")
    s.add_argument("--cluster", default="sng", help="preset name or key=value spec file")
    s.add_argument("--list", action="store_true", help="list all placements (default)")
    s.add_argument("--ranks", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--ht", action="store_true", help="use hyperthreading")
    s.add_argument("--numa", type=int, help="NUMA domains per node")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("peak", help="theoretical peak FLOPS")
    s.add_argument("--cluster", default="sng")
    s.add_argument("--nodes", type=int, help="node count (default: whole cluster)")
    s.add_argument("--precision", choices=sorted(topo.LANE_BITS), default="fp64")
    s.add_argument("--freq", choices=topo.FREQ_MODES, default="nominal")
    s.set_defaults(func=cmd_peak)

    s = sub.add_parser("bench", help="weak-scaling training benchmark")
    s.add_argument("--workers", type=_int_list, default=[1])
    s.add_argument("--per-worker-batch", type=int, default=2)
    s.add_argument("--samples-per-worker", type=int, default=8)
    s.add_argument("--epochs", type=int, default=1)
    s.add_argument("--repeats", type=int, default=4)
    s.add_argument("--side", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--lr-scaling", choices=("linear", "sqrt", "none"), default="linear")
    s.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    s.add_argument("--processes", action="store_true", help="one OS process per rank (tcp only)")
    s.add_argument("--out", help="write workers,epoch_time_s CSV here")
    s.add_argument("--verbose", action="store_true", help="print per-epoch losses")
    s.add_argument("--no-timing", action="store_true", help="suppress wall-time output")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("allreduce-test", help="check ring allreduce against a serial sum")
    s.add_argument("--world-size", type=int, default=4)
    s.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    s.add_argument("--processes", action="store_true", help="one OS process per rank (tcp only)")
    s.add_argument("--length", type=int, default=1024)
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rtol", type=float, default=1e-12)
    s.add_argument("--step-timeout", type=float, help="seconds before a stalled step fails")
    s.set_defaults(func=cmd_allreduce_test)

    s = sub.add_parser("report", help="scaling table from records")
    s.add_argument("--input", help="CSV with workers,epoch_time_s (or units,time_s)")
    s.add_argument("--paper-table", type=int, help="use a published table (1-6) instead")
    s.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    s.add_argument("--base", type=int, help="unit count of the base row")
    s.add_argument("--unit-label", default="Workers")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("verify-paper", help="recompute the published tables' derived cells")
    s.add_argument("--table", type=int)
    s.add_argument("--tolerance-pp", type=float, default=0.15)
    s.add_argument("--tolerance-linear", type=float, default=0.005)
    s.add_argument("--tolerance-peak-pp", type=float, default=0.3)
    s.set_defaults(func=cmd_verify_paper)

    s = sub.add_parser("recipe", help="render a job script or container conversion recipe")
    s.add_argument("--kind", choices=("job", "container"), default="job")
    s.add_argument("--config", help="key=value recipe file")
    s.add_argument("--cluster", default="sng")
    s.add_argument("--nodes", type=int, default=1)
    s.add_argument("--ranks", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--ht", action="store_true")
    s.add_argument("--numa", type=int)
    s.add_argument("--host-mpi-dir")
    s.add_argument("--fabric", choices=("default", "tcp_fallback"), default="default")
    s.add_argument("--mixed-mpi-threshold", type=int, default=512)
    s.add_argument("--out")
    s.set_defaults(func=cmd_recipe)
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INPUT
    try:
        args.func(args, out)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (RuntimeFailure, OSError) as exc:
        sys.stderr.write(f"runtime failure: {exc}\n")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""``spsa`` command-line entry point.

Exit codes: 0 success, 1 I/O failure, 2 usage error (bad flag or choice),
3 validation failure (malformed file, inconsistent config or dimensions).
Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .dse import DseConfig, run_dse, select_best, summary
from .formats import DEFAULT_TILE, FormatKind, decode, encode, footprint_bits, from_bytes, to_bytes
from .lowering import load_operator, lower_operator
from .matrix import load_csv, load_matrix, measure_sparsity, random_sparse, store_csv, store_matrix
from .pruning import (
    CommandOracle,
    EnergyOracle,
    OracleError,
    PruneConfig,
    SparsityThresholdOracle,
    group_by_kind,
    prune_schedule,
)
from .sim import ArchConfig, Dataflow, best_dataflow, pick_fastest, simulate_gemm, simulate_operator
from .workloads import adversarial_workload, save_workload, small_cnn_specs, synthetic_op

EXIT_IO, EXIT_USAGE, EXIT_VALIDATION = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _report("usage", f"{self.prog}: {message}", EXIT_USAGE)
        sys.exit(EXIT_USAGE)


def _report(kind: str, message: str, code: int) -> None:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)


# -- argument types -----------------------------------------------------------

def _dataflow(text: str) -> str:
    if text.lower() == "best":
        return "best"
    try:
        return Dataflow.parse(text).value
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"invalid dataflow {text!r} (choose from {', '.join(Dataflow.names())}, best)"
        ) from None


def _formats(text: str) -> list[FormatKind]:
    if text.lower() == "all":
        return list(FormatKind)
    try:
        return [FormatKind.parse(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _format(text: str) -> FormatKind:
    try:
        return FormatKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _tile(text: str) -> tuple[int, int]:
    try:
        r, c = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"tile must look like 8x8, got {text!r}") from None
    if r < 1 or c < 1:
        raise argparse.ArgumentTypeError("tile dims must be >= 1")
    return r, c


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {text}")
    return v


# -- manifest -----------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    argv: list
    inputs: list = field(default_factory=list)
    config: str | None = None
    output_dir: str = ""
    outputs: list = field(default_factory=list)
    seed: int | None = None
    tool_version: str = __version__
    created: str = ""

    def write(self, path: Path) -> None:
        self.inputs = [{"path": str(p), "sha256": _sha256(Path(p))} for p in self.inputs]
        self.outputs = [{"path": str(p), "sha256": _sha256(Path(p))} for p in self.outputs]
        self.created = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")


def _manifest(args, inputs, outputs, *, out_dir=None, config=None, seed=None) -> None:
    outputs = [Path(p) for p in outputs]
    if not outputs:
        return
    if out_dir is not None:
        target = Path(out_dir) / "manifest.json"
    else:
        target = outputs[0].with_name(outputs[0].name + ".manifest.json")
    RunManifest(args.command, list(args.argv), [str(p) for p in inputs], config and str(config),
                str(out_dir or outputs[0].parent), outputs, seed).write(target)


def _emit_text(text: str, out) -> list:
    if out is None:
        sys.stdout.write(text)
        return []
    Path(out).write_text(text)
    return [out]


def _read_matrix(path):
    return load_csv(path) if str(path).lower().endswith(".csv") else load_matrix(path)


# -- subcommands --------------------------------------------------------------

def cmd_footprint(args) -> int:
    m = _read_matrix(args.matrix)
    s = measure_sparsity(m)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["format", "sparsity", "bits"])
    for fmt in args.formats:
        w.writerow([fmt.value, f"{s:.6f}", footprint_bits(m, fmt, args.tile)])
    outs = _emit_text(buf.getvalue(), args.out)
    _manifest(args, [args.matrix], outs)
    return 0


def cmd_encode(args) -> int:
    if args.decode:
        m = decode(from_bytes(Path(args.input).read_bytes()))
        if str(args.out).lower().endswith(".csv"):
            store_csv(m, args.out)
        else:
            store_matrix(m, args.out)
    else:
        if args.format is None:
            raise ValueError("--format is required when encoding")
        enc = encode(_read_matrix(args.input), args.format, args.tile)
        Path(args.out).write_bytes(to_bytes(enc))
    _manifest(args, [args.input], [args.out])
    return 0


def cmd_lower(args) -> int:
    spec = load_operator(args.op)
    w, x = lower_operator(spec, load_matrix(args.weights), load_matrix(args.inputs))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wp, xp = out / "gemm_w.fsmx", out / "gemm_x.fsmx"
    store_matrix(w, wp)
    store_matrix(x, xp)
    m, k, n = spec.gemm_dims
    print(json.dumps({"M": m, "K": k, "N": n, "weights": str(wp), "inputs": str(xp)}))
    _manifest(args, [args.op, args.weights, args.inputs], [wp, xp], out_dir=out, config=args.op)
    return 0


def _make_oracle(text: str, reference):
    kind, _, arg = text.partition(":")
    if kind == "sparsity":
        return SparsityThresholdOracle(float(arg))
    if kind == "energy":
        return EnergyOracle(reference)
    if kind == "command":
        return CommandOracle(arg)
    raise ValueError(f"unknown oracle {text!r}; use sparsity:T, energy or command:CMD")


def cmd_prune(args) -> int:
    cfg = PruneConfig.load(args.config)
    mats = [load_matrix(p) for p in args.weights]
    kinds = args.kinds.split(",") if args.kinds else ["W"] * len(mats)
    if len(kinds) != len(mats):
        raise ValueError(f"--kinds lists {len(kinds)} kinds for {len(mats)} matrices")
    groups = group_by_kind(zip(kinds, mats))
    tile = args.tile or (cfg.vector_len, cfg.vector_len)
    oracle = _make_oracle(args.oracle, [g.matrices for g in groups])
    result = prune_schedule(groups, cfg, oracle, tile)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_kind = {g.kind: list(ws) for g, ws in zip(groups, result.weights)}
    outputs = []
    for path, kind in zip(args.weights, kinds):
        target = out / Path(path).name
        store_matrix(by_kind[kind.upper()].pop(0), target)
        outputs.append(target)
    hist = out / "history.csv"
    with open(hist, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", *[f"s_{g.kind}" for g in groups], "accuracy", "accepted"])
        for h in result.history:
            w.writerow([h.step, *[f"{s:.4f}" for s in h.sparsities], repr(h.accuracy), int(h.accepted)])
    outputs.append(hist)
    print(json.dumps({"final_sparsity": dict(zip([g.kind for g in groups], result.sparsities)),
                      "accepted_steps": result.accepted_steps}))
    _manifest(args, [*args.weights, args.config], outputs, out_dir=out, config=args.config)
    return 0


def cmd_sim(args) -> int:
    arch = ArchConfig.load(args.arch)
    w, x = load_matrix(args.weights), load_matrix(args.inputs)
    want_trace = args.trace is not None
    if args.op:
        spec = load_operator(args.op)
        if args.dataflow == "best":
            df, _ = best_dataflow(arch, spec, w, x)
        else:
            df = Dataflow.parse(args.dataflow)
        o, res = simulate_operator(arch, df, spec, w, x, trace=want_trace)
    else:
        if args.dataflow == "best":
            results = {d: simulate_gemm(arch, d, w, x)[1] for d in Dataflow}
            df = pick_fastest(results)
        else:
            df = Dataflow.parse(args.dataflow)
        o, res = simulate_gemm(arch, df, w, x, trace=want_trace)
    outputs = []
    text = json.dumps(res.to_dict(), indent=2) + "\n"
    outputs += _emit_text(text, args.out)
    if want_trace:
        with open(args.trace, "w", newline="") as fh:
            tw = csv.writer(fh, lineterminator="\n")
            tw.writerow(["step", "cycle", "unit", "action", "address"])
            for e in res.trace:
                tw.writerow([e.step, e.cycle, e.unit, e.action, e.address])
        outputs.append(args.trace)
    if args.output:
        store_matrix(o.reshape(o.shape[0], -1), args.output)
        outputs.append(args.output)
    ins = [args.arch, args.weights, args.inputs] + ([args.op] if args.op else [])
    _manifest(args, ins, outputs, config=args.arch)
    return 0


def cmd_dse(args) -> int:
    cfg = DseConfig.load(args.config)
    grid = run_dse(cfg, jobs=args.jobs)
    best = select_best(grid)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid.write_csv(out / "grid.csv")
    summ = summary(grid, best)
    (out / "summary.json").write_text(json.dumps(summ, indent=2) + "\n")
    print(json.dumps(summ["best"]))
    _manifest(args, [args.config], [out / "grid.csv", out / "summary.json"], out_dir=out, config=args.config)
    return 0 if not grid.failed else EXIT_VALIDATION


def cmd_gen_matrix(args) -> int:
    m = random_sparse(args.rows, args.cols, args.sparsity, args.seed)
    if str(args.out).lower().endswith(".csv"):
        store_csv(m, args.out)
    else:
        store_matrix(m, args.out)
    _manifest(args, [], [args.out], seed=args.seed)
    return 0


def cmd_gen_workload(args) -> int:
    if args.kind == "adversarial":
        ops = adversarial_workload(args.seed, args.sparsity)
    else:
        ops = [synthetic_op(s, args.seed + 10 * i, args.sparsity) for i, s in enumerate(small_cnn_specs())]
    cfg_path = save_workload(ops, args.out_dir, pe_budget=args.budget)
    out = Path(args.out_dir)
    files = sorted(p for p in out.iterdir() if p.name != "manifest.json")
    print(json.dumps({"dse_config": str(cfg_path), "operators": [op.spec.name for op in ops]}))
    _manifest(args, [], files, out_dir=out, seed=args.seed)
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spsa", description="Sparse/dense systolic-array GEMM simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    f = sub.add_parser("footprint", help="memory footprint of a matrix in each format",
                       description="Print a CSV of (format, sparsity, bits) for a matrix.")
    f.add_argument("--matrix", required=True, help="FSMX matrix (or .csv)")
    f.add_argument("--formats", type=_formats, default=list(FormatKind),
                   help="comma-separated format names or 'all' (default: all)")
    f.add_argument("--tile", type=_tile, default=DEFAULT_TILE,
                   help="tile size RxC for TwoStageBitmap and CSB (default: 8x8)")
    f.add_argument("--out", help="CSV output path (default: stdout)")
    f.set_defaults(func=cmd_footprint)

    e = sub.add_parser("encode", help="encode a matrix into a sparse format (or decode)",
                       description="Serialize a matrix in one format, or decode an encoding back to FSMX.")
    e.add_argument("--input", "--matrix", dest="input", required=True,
                   help="matrix to encode, or encoding to decode with --decode")
    e.add_argument("--format", type=_format, help="target format name")
    e.add_argument("--tile", type=_tile, default=DEFAULT_TILE, help="tile size RxC for tiled formats (default: 8x8)")
    e.add_argument("--decode", action="store_true", help="decode --input to an FSMX (or .csv) matrix")
    e.add_argument("--out", required=True, help="output path")
    e.set_defaults(func=cmd_encode)

    lo = sub.add_parser("lower", help="lower a CONV/FC operator to GEMM operands",
                        description="Apply im2col (CONV) or transpose inputs (FC) and write W and X.")
    lo.add_argument("--op", required=True, help="operator JSON")
    lo.add_argument("--weights", required=True, help="weight tensor as FSMX (any 2-D shape, row-major)")
    lo.add_argument("--inputs", required=True, help="input tensor as FSMX (any 2-D shape, row-major)")
    lo.add_argument("--out-dir", required=True, help="directory for gemm_w.fsmx and gemm_x.fsmx")
    lo.set_defaults(func=cmd_lower)

    pr = sub.add_parser("prune", help="structured vector pruning with the sparsity schedule",
                        description="Prune weight matrices until the accuracy oracle rejects.")
    pr.add_argument("--weights", nargs="+", required=True, help="FSMX weight matrices (GEMM layout)")
    pr.add_argument("--config", required=True, help="PruneConfig JSON")
    pr.add_argument("--kinds", help="comma-separated operator kind per matrix; same kinds share a group")
    pr.add_argument("--tile", type=_tile, help="tile size RxC (default: vector_len x vector_len)")
    pr.add_argument("--oracle", default="sparsity:0.8",
                    help="sparsity:T, energy, or command:CMD (default: sparsity:0.8)")
    pr.add_argument("--out-dir", required=True, help="directory for pruned matrices and history.csv")
    pr.set_defaults(func=cmd_prune)

    s = sub.add_parser("sim", help="simulate a GEMM or operator under one dataflow",
                       description="Run the cycle-approximate simulator and print a JSON SimResult.")
    s.add_argument("--arch", required=True, help="ArchConfig JSON")
    s.add_argument("--dataflow", required=True, type=_dataflow,
                   help=f"one of {', '.join(Dataflow.names())}, or 'best'")
    s.add_argument("--weights", required=True, help="FSMX weights (GEMM W, or tensor with --op)")
    s.add_argument("--inputs", required=True, help="FSMX inputs (GEMM X, or tensor with --op)")
    s.add_argument("--op", help="operator JSON; lowers the tensors before simulating")
    s.add_argument("--out", help="result JSON path (default: stdout)")
    s.add_argument("--trace", help="write a per-step trace CSV here")
    s.add_argument("--output", help="write the computed output matrix (FSMX) here")
    s.set_defaults(func=cmd_sim)

    d = sub.add_parser("dse", help="design-space exploration over shapes and dataflows",
                       description="Sweep shapes x dataflows x pruning variants; write grid.csv and summary.json.")
    d.add_argument("--config", required=True, help="DseConfig JSON")
    d.add_argument("--out-dir", required=True, help="output directory")
    d.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    d.set_defaults(func=cmd_dse)

    g = sub.add_parser("gen", help="generate synthetic matrices and workloads",
                       description="Deterministic synthetic data generators.")
    gsub = g.add_subparsers(dest="what", metavar="WHAT", parser_class=_Parser)
    gsub.required = True
    gm = gsub.add_parser("matrix", help="random sparse matrix", description="Write a seeded random sparse matrix.")
    gm.add_argument("--rows", type=int, required=True, help="row count")
    gm.add_argument("--cols", type=int, required=True, help="column count")
    gm.add_argument("--sparsity", type=_fraction, default=0.0, help="zero probability (default: 0)")
    gm.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    gm.add_argument("--out", required=True, help="FSMX path (.csv writes CSV)")
    gm.set_defaults(func=cmd_gen_matrix)
    gw = gsub.add_parser("workload", help="synthetic operator workload plus DSE config",
                         description="Write operator JSONs, FSMX tensors and a dse.json.")
    gw.add_argument("--kind", choices=["adversarial", "cnn"], default="adversarial",
                    help="which synthetic workload (default: adversarial)")
    gw.add_argument("--sparsity", type=_fraction, default=0.0, help="weight element sparsity (default: 0)")
    gw.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    gw.add_argument("--budget", type=int, default=72, help="PE budget written to dse.json (default: 72)")
    gw.add_argument("--out-dir", required=True, help="output directory")
    gw.set_defaults(func=cmd_gen_workload)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except OracleError as exc:
        _report("oracle", str(exc), EXIT_IO)
        return EXIT_IO
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        _report("io", str(exc), EXIT_IO)
        return EXIT_IO
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        _report("validation", str(exc), EXIT_VALIDATION)
        return EXIT_VALIDATION
    except OSError as exc:
        _report("io", str(exc), EXIT_IO)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

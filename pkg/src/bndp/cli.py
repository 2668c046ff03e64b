"""Command-line interface: learn on real data, simulate benchmarks,
evaluate predictions, and run benchmark sweeps.

Exit codes: 0 success, 2 input error, 3 empty feasible set (no
associations at the cutoff), 4 numeric or search failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .assoc import AssocError, EmptyFeasSetError, ScreenOptions
from .core import (
    CATEGORICAL,
    CONTINUOUS,
    SURVIVAL,
    Column,
    Dataset,
    Network,
    StructureError,
)
from .engine import DEFAULT_MAX_SUBSETS, EngineError, LearnResult, learn
from .metrics import DIRECTED, UNDIRECTED, fdr, hamming
from .numeric import NumericError
from .scoring import ScoreConfig, ScoringError
from .simulate import SINK, SimError, SimSpec, simulate_dag, simulate_data

BENCH_HEADER = [
    "p",
    "N",
    "replicate",
    "score_family",
    "fdr_directed",
    "fdr_undirected",
    "hamming_directed",
    "hamming_undirected",
    "runtime_ms",
]

# defaults for the benchmark sweep; chosen so screened components stay
# small enough for the subset sweep while keeping discoveries plentiful
BENCH_ALPHA = 1e-5


class InputError(ValueError):
    """Malformed file, unknown column, or inconsistent options."""


# ---------------------------------------------------------------- loading


def _parse_float(cell: str, col: str, row: int) -> float:
    try:
        return float(cell)
    except ValueError as exc:
        raise InputError(f"column {col!r}, row {row}: {cell!r} is not numeric") from exc


def load_dataset(csv_path: str | Path, schema_path: str | Path | None = None) -> Dataset:
    """Read a header-required CSV with optional column-kind schema.

    The schema maps column names to one of ``continuous``,
    ``categorical``, ``survival_time``, ``survival_status``. Without a
    schema, numeric columns are continuous except that at most 10
    distinct integer values make a column categorical. Missing cells are
    rejected.
    """
    path = Path(csv_path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, header row required") from None
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")
    ncol = len(header)
    raw: list[list[str]] = [[] for _ in range(ncol)]
    for rix, row in enumerate(rows, start=2):
        if len(row) != ncol:
            raise InputError(f"{path}: row {rix} has {len(row)} fields, expected {ncol}")
        for c, cell in enumerate(row):
            if cell == "":
                raise InputError(
                    f"{path}: missing value in column {header[c]!r}, row {rix}"
                )
            raw[c].append(cell)

    schema: dict[str, str] = {}
    if schema_path is not None:
        schema = json.loads(Path(schema_path).read_text())
        unknown = set(schema) - set(header)
        if unknown:
            raise InputError(f"schema names absent from the CSV: {sorted(unknown)}")

    kinds: list[str] = []
    for name in header:
        kind = schema.get(name)
        if kind is None:
            kind = "infer"
        elif kind not in ("continuous", "categorical", "survival_time", "survival_status"):
            raise InputError(f"unknown kind {kind!r} for column {name!r}")
        kinds.append(kind)

    time_cols = [i for i, k in enumerate(kinds) if k == "survival_time"]
    status_cols = [i for i, k in enumerate(kinds) if k == "survival_status"]
    if len(time_cols) > 1 or len(status_cols) > 1 or len(time_cols) != len(status_cols):
        raise InputError("survival outcome needs exactly one time and one status column")

    columns: list[Column] = []
    for c, name in enumerate(header):
        kind = kinds[c]
        if kind in ("survival_time", "survival_status"):
            continue
        if kind == "categorical":
            levels = sorted(set(raw[c]))
            code = {v: k for k, v in enumerate(levels)}
            vals = np.array([code[v] for v in raw[c]], dtype=float)
            columns.append(Column(name, CATEGORICAL, vals, levels=len(levels)))
            continue
        vals = np.array([_parse_float(v, name, r + 2) for r, v in enumerate(raw[c])])
        if kind == "infer":
            distinct = np.unique(vals)
            if distinct.size <= 10 and np.all(distinct == np.round(distinct)):
                code = {v: k for k, v in enumerate(distinct)}
                coded = np.array([code[v] for v in vals], dtype=float)
                columns.append(Column(name, CATEGORICAL, coded, levels=distinct.size))
                continue
        columns.append(Column(name, CONTINUOUS, vals))

    if time_cols:
        tcol, scol = time_cols[0], status_cols[0]
        tvals = np.array([_parse_float(v, header[tcol], r + 2) for r, v in enumerate(raw[tcol])])
        svals = np.array([_parse_float(v, header[scol], r + 2) for r, v in enumerate(raw[scol])])
        surv = Column(header[scol], SURVIVAL, np.column_stack([tvals, svals]))
        columns.insert(min(tcol, scol), surv)

    try:
        return Dataset(columns)
    except StructureError as exc:
        raise InputError(f"{path}: {exc}") from exc


def load_pp_file(path: str | Path) -> dict[str, list[str]]:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise InputError("pp-sets file must map variable names to name lists")
    return {str(k): [str(v) for v in vs] for k, vs in doc.items()}


# ---------------------------------------------------------------- writing


def _fmt(x: float) -> str:
    return repr(float(x))


def networks_to_json(result: LearnResult, cfg: ScoreConfig, indegree: int) -> dict:
    names = result.data.names
    nets = []
    for net in result.networks:
        nets.append(
            {
                "total_score": net.total_score,
                "ordering": [names[v] for v in net.ordering],
                "edges": [
                    {"parent": names[a], "child": names[b]} for a, b in net.edges()
                ],
                "parents": {
                    names[i]: sorted(names[j] for j in mask)
                    for i, mask in enumerate(net.parents)
                },
                "node_scores": {
                    names[i]: net.local_scores[i] for i in range(net.n_nodes)
                },
            }
        )
    return {
        "nodes": list(names),
        "score_family": cfg.family,
        "indegree": indegree,
        "truncated": result.truncated,
        "networks": nets,
    }


def network_to_dot(net: Network, names: tuple[str, ...], outcome: str | None) -> str:
    lines = ["digraph network {"]
    for name in names:
        shape = "doublecircle" if name == outcome else "ellipse"
        lines.append(f'  "{name}" [shape={shape}];')
    for a, b in net.edges():
        lines.append(f'  "{names[a]}" -> "{names[b]}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_edge_csv(path: Path, edges: list[tuple[str, str]]) -> None:
    with path.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["parent", "child"])
        writer.writerows(edges)


def read_edge_names(path: str | Path) -> list[tuple[str, str]]:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        nets = doc.get("networks")
        if not nets:
            return []
        return [(e["parent"], e["child"]) for e in nets[0]["edges"]]
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["parent", "child"]:
            raise InputError(f"{path}: expected an edge list with header parent,child")
        return [(r[0], r[1]) for r in reader if r]


# ---------------------------------------------------------------- learn


def _screen_options(args: argparse.Namespace) -> ScreenOptions:
    user_pp = load_pp_file(args.pp_file) if args.pp_file else None
    alpha = args.alpha
    if alpha is None and args.corr_cutoff is None and user_pp is None:
        alpha = 0.05
    return ScreenOptions(
        mode="phenotype" if args.phenotype else "all_pairs",
        alpha=alpha,
        corr_cutoff=args.corr_cutoff,
        outcome=args.outcome,
        levels=args.levels,
        top_k=args.top_k,
        user_pp=user_pp,
    )


def cmd_learn(args: argparse.Namespace) -> int:
    data = load_dataset(args.data, args.schema)
    opts = _screen_options(args)
    cfg = ScoreConfig(family=args.score)
    result = learn(
        data,
        opts,
        cfg,
        indegree=args.indegree,
        optima_cap=args.optima_cap,
        max_subsets=args.max_subsets,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    doc = networks_to_json(result, cfg, args.indegree)
    (outdir / "networks.json").write_text(json.dumps(doc, indent=2) + "\n")

    outcome = args.outcome
    if outcome is None and result.data.survival_index is not None:
        outcome = result.data.column(result.data.survival_index).name
    for k, net in enumerate(result.networks):
        dot = network_to_dot(net, result.data.names, outcome)
        (outdir / f"network_{k:03d}.dot").write_text(dot)

    (outdir / "report.json").write_text(json.dumps(result.report, indent=2) + "\n")
    best = result.networks[0]
    print(
        f"learned {len(result.networks)} optimal network(s); "
        f"score {best.total_score:.6f}; feasible set {result.data.p} node(s); "
        f"wrote {outdir}/networks.json"
    )
    return 0


# ------------------------------------------------------------- simulate


def _default_roles(p: int) -> tuple[int, int, int, int]:
    p0 = round(0.2 * p)
    rest = p - p0
    base, rem = divmod(rest, 3)
    p1 = base + (1 if rem > 0 else 0)
    p2 = base + (1 if rem > 1 else 0)
    p3 = base
    if rest > 0 and p3 == 0:
        # tiny graphs still need a sink (and a source feeding it)
        p1 = max(p1, 1)
        p3 = max(rest - p1 - p2, 1)
        p2 = rest - p1 - p3
    return p0, p1, p2, p3


def _spec_from_args(args: argparse.Namespace) -> SimSpec:
    if args.p0 is None or args.p1 is None or args.p2 is None or args.p3 is None:
        p0, p1, p2, p3 = _default_roles(args.p)
    else:
        p0, p1, p2, p3 = args.p0, args.p1, args.p2, args.p3
    effect = tuple(float(x) for x in args.effect.split(","))
    if len(effect) == 1:
        effect = effect[0]
    return SimSpec(
        p=args.p,
        p0=p0,
        p1=p1,
        p2=p2,
        p3=p3,
        n=args.n,
        effect_size=effect,
        noise_sd=args.noise_sd,
        max_parents=args.max_parents,
        seed=args.seed,
    )


def write_data_csv(path: Path, data: Dataset) -> None:
    with path.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.names)
        cols = [data.column(i).values for i in range(data.p)]
        for r in range(data.n_rows):
            writer.writerow([_fmt(col[r]) for col in cols])


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    dag = simulate_dag(spec)
    data = simulate_data(dag, spec)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    write_data_csv(outdir / "data.csv", data)
    names = data.names
    write_edge_csv(
        outdir / "truth_edges.csv", [(names[a], names[b]) for a, b in dag.edges()]
    )
    meta = {
        "spec": json.loads(spec.to_json()),
        "names": list(names),
        "roles": list(dag.roles),
        "order": [int(v) for v in dag.order],
    }
    (outdir / "sim_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"simulated {spec.n}x{spec.p} dataset with {len(dag.edges())} true edges in {outdir}")
    return 0


# ----------------------------------------------------------------- eval


def _edges_to_masks(
    edges: list[tuple[str, str]], universe: dict[str, int]
) -> list[int]:
    masks = [0] * len(universe)
    for parent, child in edges:
        if parent not in universe or child not in universe:
            raise InputError(
                f"node-name mismatch: edge {parent!r} -> {child!r} "
                "references a node outside the universe"
            )
        masks[universe[child]] |= 1 << universe[parent]
    return masks


def _load_universe(args: argparse.Namespace, *edge_lists) -> dict[str, int]:
    if args.nodes:
        path = Path(args.nodes)
        if path.suffix == ".json":
            names = json.loads(path.read_text())["names"]
        else:
            names = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    else:
        seen: set[str] = set()
        names = []
        for edges in edge_lists:
            for a, b in edges:
                for v in (a, b):
                    if v not in seen:
                        seen.add(v)
                        names.append(v)
        names.sort()
    return {name: i for i, name in enumerate(names)}


def metrics_row(pred_masks: list[int], true_masks: list[int]) -> dict[str, float]:
    return {
        "fdr_directed": fdr(pred_masks, true_masks, DIRECTED),
        "fdr_undirected": fdr(pred_masks, true_masks, UNDIRECTED),
        "hamming_directed": hamming(pred_masks, true_masks, DIRECTED),
        "hamming_undirected": hamming(pred_masks, true_masks, UNDIRECTED),
    }


def cmd_eval(args: argparse.Namespace) -> int:
    predicted = read_edge_names(args.predicted)
    truth = read_edge_names(args.truth)
    universe = _load_universe(args, predicted, truth)
    row = metrics_row(
        _edges_to_masks(predicted, universe), _edges_to_masks(truth, universe)
    )
    header = ["fdr_directed", "fdr_undirected", "hamming_directed", "hamming_undirected"]
    line = ",".join(_fmt(row[h]) if "fdr" in h else str(int(row[h])) for h in header)
    text = ",".join(header) + "\n" + line + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- bench


def _bench_one(job: dict) -> tuple[dict, dict | None, str | None]:
    """One benchmark replicate; returns (job, row or None, error or None)."""
    spec = SimSpec(**job["spec"])
    dag = simulate_dag(spec)
    data = simulate_data(dag, spec)
    outcome = None
    if job["mode"] == "phenotype":
        sinks = [i for i, r in enumerate(dag.roles) if r == SINK]
        if not sinks:
            return job, None, "no sink node available for phenotype mode"
        outcome = data.names[sinks[0]]
    opts = ScreenOptions(
        mode=job["mode"],
        alpha=job["alpha"],
        corr_cutoff=job["corr_cutoff"],
        outcome=outcome,
        levels=job["levels"],
        top_k=job["top_k"],
    )
    cfg = ScoreConfig(family=job["family"])
    t0 = time.perf_counter()
    try:
        result = learn(
            data,
            opts,
            cfg,
            indegree=job["indegree"],
            max_subsets=job["max_subsets"],
        )
    except (AssocError, NumericError, EngineError, ScoringError) as exc:
        return job, None, f"{type(exc).__name__}: {exc}"
    runtime_ms = (time.perf_counter() - t0) * 1000.0

    orig_index = {name: i for i, name in enumerate(data.names)}
    pred_masks = [0] * data.p
    best = result.networks[0]
    names = result.data.names
    for a, b in best.edges():
        pred_masks[orig_index[names[b]]] |= 1 << orig_index[names[a]]
    true_masks = [int(m) for m in dag.parents]
    row = metrics_row(pred_masks, true_masks)
    row.update(
        {
            "p": spec.p,
            "N": spec.n,
            "replicate": job["replicate"],
            "score_family": job["family"],
            "runtime_ms": round(runtime_ms, 3),
        }
    )
    return job, row, None


def cmd_bench(args: argparse.Namespace) -> int:
    p_grid = [int(x) for x in args.p_grid.split(",")]
    n_grid = [int(x) for x in args.n_grid.split(",")]
    alpha = args.alpha
    if alpha is None and args.corr_cutoff is None:
        alpha = BENCH_ALPHA

    jobs = []
    for ci, p in enumerate(p_grid):
        for cj, n in enumerate(n_grid):
            p0, p1, p2, p3 = _default_roles(p)
            for rep in range(args.replicates):
                seed = args.seed + 7919 * (ci * len(n_grid) + cj) + rep
                effect = tuple(float(x) for x in args.effect.split(","))
                if len(effect) == 1:
                    effect = effect[0]
                jobs.append(
                    {
                        "spec": {
                            "p": p,
                            "p0": p0,
                            "p1": p1,
                            "p2": p2,
                            "p3": p3,
                            "n": n,
                            "effect_size": effect,
                            "noise_sd": args.noise_sd,
                            "max_parents": args.max_parents,
                            "seed": seed,
                        },
                        "mode": "phenotype" if args.phenotype else "all_pairs",
                        "alpha": alpha,
                        "corr_cutoff": args.corr_cutoff,
                        "levels": args.levels,
                        "top_k": args.top_k,
                        "family": args.score,
                        "indegree": args.indegree,
                        "max_subsets": args.max_subsets,
                        "replicate": rep,
                    }
                )

    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(job) for job in jobs]

    rows = []
    for job, row, err in results:
        if err is not None:
            spec = job["spec"]
            print(
                f"replicate failed (p={spec['p']}, N={spec['n']}, "
                f"rep={job['replicate']}): {err}",
                file=sys.stderr,
            )
            continue
        rows.append(row)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row["p"],
                    row["N"],
                    row["replicate"],
                    row["score_family"],
                    _fmt(row["fdr_directed"]),
                    _fmt(row["fdr_undirected"]),
                    int(row["hamming_directed"]),
                    int(row["hamming_undirected"]),
                    _fmt(row["runtime_ms"]),
                ]
            )

    summary = _summarize(rows)
    if args.summary:
        spath = Path(args.summary)
        with spath.open("w", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["p", "N", "n_ok"]
                + [f"{m}_{s}" for m in BENCH_HEADER[4:8] for s in ("mean", "sd")]
            )
            writer.writerows(summary)
    for line in summary:
        print(
            f"p={line[0]:>4} N={line[1]:>5} ok={line[2]:>3} "
            f"fdr_dir={line[3]:.3f}±{line[4]:.3f} fdr_und={line[5]:.3f}±{line[6]:.3f} "
            f"ham_dir={line[7]:.1f}±{line[8]:.1f} ham_und={line[9]:.1f}±{line[10]:.1f}"
        )
    return 0


def _summarize(rows: list[dict]) -> list[list]:
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault((row["p"], row["N"]), []).append(row)
    out = []
    metrics = BENCH_HEADER[4:8]
    for (p, n), group in sorted(cells.items()):
        line: list = [p, n, len(group)]
        for m in metrics:
            vals = np.array([g[m] for g in group], dtype=float)
            line += [round(float(vals.mean()), 6), round(float(vals.std()), 6)]
        out.append(line)
    if rows:
        line = ["all", "all", len(rows)]
        for m in metrics:
            vals = np.array([g[m] for g in rows], dtype=float)
            line += [round(float(vals.mean()), 6), round(float(vals.std()), 6)]
        out.append(line)
    return out


# ----------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bndp",
        description="Optimal Bayesian-network structure learning via "
        "generational-ordering dynamic programming",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pl = sub.add_parser("learn", help="learn optimal networks from a CSV dataset")
    pl.add_argument("--data", required=True, help="input CSV with header row")
    pl.add_argument("--schema", help="column-kind schema JSON")
    pl.add_argument("--out", required=True, help="output directory")
    pl.add_argument("--score", choices=["bic", "bge"], default="bic")
    pl.add_argument("--alpha", type=float, help="BH-adjusted p-value cutoff")
    pl.add_argument("--corr-cutoff", type=float, help="absolute-correlation cutoff")
    pl.add_argument("--phenotype", action="store_true", help="phenotype-driven screening")
    pl.add_argument("--levels", type=int, default=3, choices=[2, 3])
    pl.add_argument("--outcome", help="outcome column name")
    pl.add_argument("--top-k", type=int, help="keep only the k best level-1 parents")
    pl.add_argument("--pp-file", help="JSON possible-parent sets (skips screening)")
    pl.add_argument("--indegree", type=int, default=2)
    pl.add_argument("--optima-cap", type=int, default=32)
    pl.add_argument("--max-subsets", type=int, default=DEFAULT_MAX_SUBSETS)
    pl.set_defaults(func=cmd_learn)

    ps = sub.add_parser("simulate", help="generate a synthetic dataset + truth graph")
    ps.add_argument("--p", type=int, required=True)
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--p0", type=int)
    ps.add_argument("--p1", type=int)
    ps.add_argument("--p2", type=int)
    ps.add_argument("--p3", type=int)
    ps.add_argument("--effect", default="0.5,1.5", help="fixed value or low,high range")
    ps.add_argument("--noise-sd", type=float, default=1.0)
    ps.add_argument("--max-parents", type=int, default=2)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True, help="output directory")
    ps.set_defaults(func=cmd_simulate)

    pe = sub.add_parser("eval", help="score a predicted graph against the truth")
    pe.add_argument("--predicted", required=True, help="edge CSV or networks.json")
    pe.add_argument("--truth", required=True, help="edge CSV")
    pe.add_argument("--nodes", help="node universe (text, or sim_meta.json)")
    pe.add_argument("--out", help="write the metrics row here instead of stdout")
    pe.set_defaults(func=cmd_eval)

    pb = sub.add_parser("bench", help="simulate/learn/eval sweep over a grid")
    pb.add_argument("--p-grid", default="10,20,40")
    pb.add_argument("--n-grid", default="500,1000,2000")
    pb.add_argument("--replicates", type=int, default=20)
    pb.add_argument("--score", choices=["bic", "bge"], default="bic")
    pb.add_argument("--alpha", type=float)
    pb.add_argument("--corr-cutoff", type=float)
    pb.add_argument("--phenotype", action="store_true")
    pb.add_argument("--levels", type=int, default=3, choices=[2, 3])
    pb.add_argument("--top-k", type=int)
    pb.add_argument("--indegree", type=int, default=2)
    pb.add_argument("--effect", default="0.5,1.5")
    pb.add_argument("--noise-sd", type=float, default=1.0)
    pb.add_argument("--max-parents", type=int, default=2)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--threads", type=int, default=1)
    pb.add_argument("--max-subsets", type=int, default=DEFAULT_MAX_SUBSETS)
    pb.add_argument("--out", default="bench.csv")
    pb.add_argument("--summary", default="bench_summary.csv")
    pb.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EmptyFeasSetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (
        InputError,
        StructureError,
        AssocError,
        SimError,
        ScoringError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

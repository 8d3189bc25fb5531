"""End-to-end pipeline and command-line interface.

Subcommands:

* ``detect`` — ingest a TSV event file, factorize, map to memberships,
  refine with seeded Louvain, and write results.
* ``eval``   — score a result file, optionally against planted ground truth.
* ``synth``  — emit a benchmark graph with planted evolving communities.

Exit codes: 0 ok, 2 parse/input failure, 3 numeric failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

from .errors import GraphInputError, NumericsError, ParseError
from . import mapper as mapper_mod
from . import refine as refine_mod
from . import rescal as rescal_mod
from . import synth as synth_mod
from . import temporal as temporal_mod

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


@dataclass
class RunConfig:
    """Everything `detect` needs: paths, factorization and mapper settings."""

    input: str
    out_dir: str
    rescal: rescal_mod.RescalConfig
    mapper: mapper_mod.MapperConfig
    binarize: bool = False
    parallel: bool = False
    export_embeddings: bool = False


@dataclass
class RunResult:
    factors: rescal_mod.FactorModel
    params: mapper_mod.MlpParams
    memberships: mapper_mod.MembershipSeries
    partitions: refine_mod.PartitionSeries
    q_per_slice: list[float]
    avg_q: float
    rescal_history: list[float] = field(default_factory=list)
    mapper_history: list[float] = field(default_factory=list)


class StageError(Exception):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage, exc, code):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.code = code


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ParseError, GraphInputError) as exc:
        raise StageError(name, exc, EXIT_PARSE) from exc
    except NumericsError as exc:
        raise StageError(name, exc, EXIT_NUMERIC) from exc
    except OSError as exc:
        raise StageError(name, exc, EXIT_IO) from exc


def detect(cfg):
    """Run the full pipeline on ``cfg`` and write every output file.

    Stages: ingest -> factorize -> map -> refine -> write.  Returns a
    :class:`RunResult`; raises :class:`StageError` with the stage name and
    exit code on failure.
    """
    def _ingest():
        events = temporal_mod.read_events_tsv(cfg.input)
        g = temporal_mod.from_edge_events(events)
        return temporal_mod.binarized(g) if cfg.binarize else g

    g = _stage("ingest", _ingest)
    factors, rescal_history = _stage("factorize", rescal_mod.fit, g, cfg.rescal)
    params, memberships, mapper_history = _stage(
        "map", mapper_mod.train, g, factors, cfg.mapper)
    partitions, q_per_slice, avg_q = _stage(
        "refine", refine_mod.refine_series, g, memberships,
        parallel=cfg.parallel)
    result = RunResult(
        factors=factors,
        params=params,
        memberships=memberships,
        partitions=partitions,
        q_per_slice=q_per_slice,
        avg_q=avg_q,
        rescal_history=rescal_history,
        mapper_history=mapper_history,
    )
    _stage("write", _write_outputs, cfg, result)
    return result


def _write_outputs(cfg, result):
    os.makedirs(cfg.out_dir, exist_ok=True)
    out = lambda name: os.path.join(cfg.out_dir, name)
    refine_mod.write_result_json(
        out("result.json"), result.partitions, result.q_per_slice, result.avg_q)
    refine_mod.write_q_csv(out("q_per_slice.csv"), result.q_per_slice)
    rescal_mod.save_factors(out("factors.json"), result.factors)
    mapper_mod.save_params(out("mapper_params.json"), result.params)
    rescal_mod.write_loss_history(
        out("rescal_loss.csv"), result.rescal_history, label="sweep")
    rescal_mod.write_loss_history(
        out("mapper_loss.csv"), result.mapper_history, label="epoch")
    for t, Bt in enumerate(result.memberships.B):
        mapper_mod.write_membership_csv(out(f"memberships_t{t}.csv"), Bt)
    if cfg.export_embeddings:
        for t, Z in enumerate(mapper_mod.latent_inputs(result.factors)):
            mapper_mod.write_embedding_csv(out(f"embeddings_t{t}.csv"), Z)


def evaluate(results_path, ground_truth_path=None):
    """Metrics report for a result file: per-slice Q, average Q, and (when
    ground truth is given) per-slice and mean NMI."""
    parts, q_per_slice, avg_q = refine_mod.read_result_json(results_path)
    report = {
        "per_slice": [
            {"t": t, "Q": q_per_slice[t]} for t in range(parts.num_slices)
        ],
        "avg_Q": avg_q,
    }
    if ground_truth_path is not None:
        truth = synth_mod.read_ground_truth_csv(ground_truth_path)
        if len(truth) != parts.num_slices:
            raise ParseError(
                f"slice count mismatch: results have {parts.num_slices}, "
                f"ground truth has {len(truth)}")
        scores = [synth_mod.nmi(parts.labels[t], truth[t])
                  for t in range(parts.num_slices)]
        for t, score in enumerate(scores):
            report["per_slice"][t]["NMI"] = score
        report["mean_NMI"] = sum(scores) / len(scores) if scores else 0.0
    return report


def _print_q_table(q_per_slice, avg_q, extra=None, stream=None):
    stream = stream or sys.stdout
    header = f"{'t':>5} {'Q':>10}"
    if extra:
        header += f" {'NMI':>10}"
    print(header, file=stream)
    for t, q in enumerate(q_per_slice):
        line = f"{t:>5} {q:>10.4f}"
        if extra:
            line += f" {extra[t]:>10.4f}"
        print(line, file=stream)
    print(f"{'avg':>5} {avg_q:>10.4f}", file=stream)


# ---------------------------------------------------------------------------
# argument handling

def _load_config_file(path):
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ParseError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise StageError("config", exc, EXIT_IO) from exc
    return values


def _parse_bool(text):
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ParseError(f"bad boolean value: {text!r}")


_DETECT_DEFAULTS = {
    "rank": 16,
    "lambda_a": 0.01,
    "lambda_r": 0.01,
    "beta": 0.1,
    "max_iters": 200,
    "epochs": 300,
    "seed": 0,
    "binarize": False,
    "parallel": False,
    "export_embeddings": False,
}

_DETECT_TYPES = {
    "input": str, "out_dir": str, "rank": int, "communities": int,
    "lambda_a": float, "lambda_r": float, "beta": float, "max_iters": int,
    "epochs": int, "seed": int, "binarize": _parse_bool,
    "parallel": _parse_bool, "export_embeddings": _parse_bool,
}


def _resolve_detect_options(args):
    """Flag > config file > built-in default, per key."""
    values = dict(_DETECT_DEFAULTS)
    if args.config is not None:
        raw = _load_config_file(args.config)
        for key, text in raw.items():
            if key not in _DETECT_TYPES:
                raise ParseError(f"{args.config}: unknown config key {key!r}")
            values[key] = _DETECT_TYPES[key](text)
    for key in _DETECT_TYPES:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
    for key in ("input", "out_dir", "communities"):
        if values.get(key) is None:
            raise ParseError(f"missing required option --{key.replace('_', '-')}")
    return values


def _build_run_config(values):
    rescal_cfg = rescal_mod.RescalConfig(
        rank=values["rank"],
        lambda_a=values["lambda_a"],
        lambda_r=values["lambda_r"],
        max_iters=values["max_iters"],
        seed=values["seed"],
    )
    mapper_cfg = mapper_mod.MapperConfig(
        communities=values["communities"],
        beta=values["beta"],
        epochs=values["epochs"],
        seed=values["seed"] + 1,
    )
    return RunConfig(
        input=values["input"],
        out_dir=values["out_dir"],
        rescal=rescal_cfg,
        mapper=mapper_cfg,
        binarize=values["binarize"],
        parallel=values["parallel"],
        export_embeddings=values["export_embeddings"],
    )


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dyncomm",
        description="Dynamic community detection over temporal edge lists.")
    sub = parser.add_subparsers(dest="command", required=True)

    det = sub.add_parser("detect", help="run the full detection pipeline")
    det.add_argument("--input", help="TSV edge-event file")
    det.add_argument("--out-dir", dest="out_dir", help="output directory")
    det.add_argument("--rank", type=int, help="decomposition rank R")
    det.add_argument("--communities", type=int, help="community count K (required)")
    det.add_argument("--lambda-a", dest="lambda_a", type=float)
    det.add_argument("--lambda-r", dest="lambda_r", type=float)
    det.add_argument("--beta", type=float, help="temporal smoothness weight")
    det.add_argument("--max-iters", dest="max_iters", type=int,
                     help="factorization sweep cap")
    det.add_argument("--epochs", type=int, help="mapper training epochs")
    det.add_argument("--seed", type=int)
    det.add_argument("--binarize", action=argparse.BooleanOptionalAction,
                     default=None, help="force every edge weight to 1")
    det.add_argument("--parallel", action=argparse.BooleanOptionalAction,
                     default=None, help="refine slices concurrently")
    det.add_argument("--export-embeddings", dest="export_embeddings",
                     action=argparse.BooleanOptionalAction, default=None,
                     help="write per-slice latent feature CSVs")
    det.add_argument("--config", help="flat key = value config file; flags win")

    ev = sub.add_parser("eval", help="score a result file")
    ev.add_argument("--results", required=True, help="result.json from detect")
    ev.add_argument("--ground-truth", dest="ground_truth",
                    help="t,node,community CSV of planted labels")
    ev.add_argument("--out", help="write the metrics report JSON here")

    syn = sub.add_parser("synth", help="generate a planted benchmark")
    syn.add_argument("--out-dir", dest="out_dir", required=True)
    syn.add_argument("--nodes", type=int, default=100)
    syn.add_argument("--communities", type=int, default=4)
    syn.add_argument("--slices", type=int, default=6)
    syn.add_argument("--p-in", dest="p_in", type=float, default=0.3)
    syn.add_argument("--p-out", dest="p_out", type=float, default=0.02)
    syn.add_argument("--churn", type=float, default=0.1)
    syn.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_detect(args):
    values = _resolve_detect_options(args)
    cfg = _build_run_config(values)
    result = detect(cfg)
    _print_q_table(result.q_per_slice, result.avg_q)
    return EXIT_OK


def _cmd_eval(args):
    report = _stage("eval", evaluate, args.results, args.ground_truth)
    extra = None
    if "mean_NMI" in report:
        extra = [entry["NMI"] for entry in report["per_slice"]]
    _print_q_table([e["Q"] for e in report["per_slice"]], report["avg_Q"],
                   extra=extra)
    if "mean_NMI" in report:
        print(f"mean NMI: {report['mean_NMI']:.4f}")
    text = json.dumps(report, indent=2)
    if args.out:
        _stage("write", _write_text, args.out, text + "\n")
    else:
        print(text)
    return EXIT_OK


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _cmd_synth(args):
    def _run():
        cfg = synth_mod.DsbmConfig(
            num_nodes=args.nodes,
            num_communities=args.communities,
            num_slices=args.slices,
            p_in=args.p_in,
            p_out=args.p_out,
            churn=args.churn,
            seed=args.seed,
        )
        graph, memberships = synth_mod.generate(cfg)
        os.makedirs(args.out_dir, exist_ok=True)
        temporal_mod.write_events_tsv(
            os.path.join(args.out_dir, "events.tsv"), graph)
        synth_mod.write_ground_truth_csv(
            os.path.join(args.out_dir, "ground_truth.csv"), memberships)
        return graph

    graph = _stage("synth", _run)
    print(f"wrote {graph.num_slices} slices over {graph.num_nodes} nodes "
          f"to {args.out_dir}")
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"detect": _cmd_detect, "eval": _cmd_eval, "synth": _cmd_synth}
    try:
        return handlers[args.command](args)
    except StageError as exc:
        print(f"dyncomm {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (ParseError, GraphInputError, ValueError) as exc:
        print(f"dyncomm {args.command}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericsError as exc:
        print(f"dyncomm {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"dyncomm {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())

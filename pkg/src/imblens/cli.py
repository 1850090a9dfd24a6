"""Command-line surface: reproducible analyses with machine-readable output.

Every command prints one JSON document to stdout carrying the results and a
run manifest (command, input checksums, parameters, tool version,
timestamp). Reruns on the same inputs are byte-identical apart from the
timestamp. Exit codes: 0 success, 2 input or validation error, 3 internal
numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from datetime import datetime, timezone

from .errors import ImblensError, IoFailureError, TrainingDivergedError

# BLAS pools read these at first import of the numeric stack, which is why
# the analysis modules are imported inside the command handlers.
_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_threads(threads: int | None):
    if threads is None:
        raw = os.environ.get("IMBLENS_THREADS")
        if raw is None:
            return
        threads = int(raw)
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    for var in _THREAD_VARS:
        os.environ[var] = str(threads)


def _k_list(text: str) -> list[int]:
    try:
        ks = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError(f"every K must be >= 1, got {text!r}")
    return ks


def _float_or_none(x) -> float | None:
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def _input_entry(path: str, manifest) -> dict:
    from .embx import file_sha256

    return {
        "path": os.path.abspath(path),
        "tensors": {t.file: file_sha256(os.path.join(path, t.file)) for t in manifest.tensors},
    }


def _run_manifest(command: str, inputs: list[dict], parameters: dict) -> dict:
    from . import __version__

    return {
        "command": command,
        "inputs": inputs,
        "parameters": parameters,
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _emit(doc: dict, out_path: str | None = None):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if out_path:
        _write_text(out_path, text)


def _write_text(path: str, text: str):
    try:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as exc:
        raise IoFailureError(f"failed writing {path}: {exc}") from exc


def _load_set(path: str, allow_signed: bool):
    from .embx import EmbeddingSet, read_embx

    manifest, obj = read_embx(path, allow_signed_fe=allow_signed)
    if not isinstance(obj, EmbeddingSet):
        raise ImblensError(f"{path} holds a classifier head, expected an embedding set")
    return manifest, obj


def _load_head(path: str):
    from .embx import ClassifierHead, read_embx

    manifest, obj = read_embx(path)
    if not isinstance(obj, ClassifierHead):
        raise ImblensError(f"{path} holds an embedding set, expected a classifier head")
    return manifest, obj


def _load_pair(args):
    from .decomposition import decompose

    m_fe, es = _load_set(args.fe_dir, args.allow_signed_fe)
    m_w, head = _load_head(args.weights_dir)
    inputs = [_input_entry(args.fe_dir, m_fe), _input_entry(args.weights_dir, m_w)]
    return es, head, decompose(es, head), inputs


# ---------------------------------------------------------------- inspect


def _cmd_inspect(args) -> int:
    from .embx import EmbeddingSet, read_embx

    manifest, obj = read_embx(args.dir, allow_signed_fe=args.allow_signed_fe)
    summary: dict = {
        "path": os.path.abspath(args.dir),
        "format_version": manifest.format_version,
        "metadata": manifest.metadata,
        "tensors": [
            {"name": t.name, "file": t.file, "dtype": t.dtype, "shape": t.shape}
            for t in manifest.tensors
        ],
    }
    lines = [f"path: {summary['path']}", f"format: {manifest.format_version}"]
    if isinstance(obj, EmbeddingSet):
        counts = obj.class_counts()
        summary.update(
            {
                "kind": "embedding_set",
                "n": obj.n,
                "h": obj.h,
                "num_classes": obj.num_classes,
                "split": obj.split,
                "logits": obj.logits is not None,
                "class_counts": counts.tolist(),
            }
        )
        lines.append("kind: embedding_set")
        for t in manifest.tensors:
            lines.append(f"tensor: {t.name} {t.shape} {t.dtype}")
        lines.append(f"split: {obj.split}")
        lines.append(f"num_classes: {obj.num_classes}")
        lines.append(f"logits: {'present' if obj.logits is not None else 'absent'}")
        lines.append("class counts: " + " ".join(f"{c}:{int(v)}" for c, v in enumerate(counts)))
    else:
        summary.update(
            {
                "kind": "classifier_head",
                "num_classes": obj.num_classes,
                "h": obj.h,
                "bias": obj.bias is not None,
            }
        )
        lines.append("kind: classifier_head")
        for t in manifest.tensors:
            lines.append(f"tensor: {t.name} {t.shape} {t.dtype}")
        lines.append(f"num_classes: {obj.num_classes}")
        lines.append(f"bias: {'present' if obj.bias is not None else 'absent'}")

    doc = {
        "summary": summary,
        "run_manifest": _run_manifest("inspect", [_input_entry(args.dir, manifest)], {}),
    }
    if args.json:
        _emit(doc, args.out)
    else:
        sys.stdout.write("\n".join(lines) + "\n")
        if args.out:
            _write_text(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


# ------------------------------------------------------------------- topk


def _ser_topk(report) -> dict:
    per_class: dict[str, dict[str, float]] = {}
    for (c, k), ratio in report.per_class_coverage.items():
        per_class.setdefault(str(c), {})[str(k)] = ratio
    return {
        "space": report.space,
        "group_by": report.group_by,
        "member_k": report.member_k,
        "k_values": report.k_values,
        "overall_coverage": {str(k): v for k, v in report.overall_coverage.items()},
        "per_class_coverage": per_class,
        "class_members": {
            str(c): [[i, r] for i, r in members] for c, members in report.class_members.items()
        },
        "union_count": {str(c): n for c, n in report.union_count.items()},
        "minimal_k": report.minimal_k.tolist(),
        "empty_classes": report.empty_classes,
    }


def _ser_contrib(cr) -> dict:
    return {
        "k": cr.k,
        "group_by": cr.group_by,
        "per_class": {str(c): [float(v) for v in vec] for c, vec in cr.per_class.items()},
        "largest": {str(c): v for c, v in cr.largest.items()},
        "excluded": {str(c): n for c, n in cr.excluded.items()},
    }


def _cmd_topk(args) -> int:
    from .topk import coverage_ratios, logit_contributions

    es, head, d, inputs = _load_pair(args)
    fe_mode = args.fe_mode.replace("-", "_")
    report = coverage_ratios(
        d,
        es.labels,
        args.k,
        space=args.space,
        group_by=args.group_by,
        fe_mode=fe_mode,
        top_m=args.top_m,
        member_k=args.member_k,
    )
    params = {
        "k": args.k,
        "space": args.space,
        "fe_mode": fe_mode,
        "group_by": args.group_by,
        "top_m": args.top_m,
        "member_k": args.member_k,
    }
    doc = {"report": _ser_topk(report)}
    if args.contrib_k is not None:
        params["contrib_k"] = args.contrib_k
        doc["contributions"] = _ser_contrib(
            logit_contributions(d, es.labels, args.contrib_k, group_by=args.group_by)
        )
    doc["run_manifest"] = _run_manifest("topk", inputs, params)

    out_json = None
    if args.out:
        out_json = os.path.join(args.out, "topk.json")
        rows = [["class", "k", "coverage"]]
        for c in sorted({c for c, _ in report.per_class_coverage}):
            for k in report.k_values:
                rows.append([c, k, report.per_class_coverage[(c, k)]])
        _write_csv(os.path.join(args.out, "coverage.csv"), rows)
    _emit(doc, out_json)
    return 0


def _write_csv(path: str, rows: list[list]):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            csv.writer(f).writerows(rows)
    except OSError as exc:
        raise IoFailureError(f"failed writing {path}: {exc}") from exc


# ------------------------------------------------------------------ stats


def _cmd_stats(args) -> int:
    from .class_stats import class_profiles, largest_mean_ce_ratio, majority_class_of, weight_summaries

    es, head, d, inputs = _load_pair(args)
    profiles = class_profiles(es, d, group_by=args.group_by, activity_eps=args.activity_eps)
    summaries = weight_summaries(head, top_m=args.top)
    present = {p.class_index for p in profiles}
    majority = args.majority if args.majority is not None else majority_class_of(es)

    ratio_block = None
    if len(profiles) >= 2 and majority in present:
        rr = largest_mean_ce_ratio(profiles, majority)
        ratio_block = {
            "majority_class": rr.majority_class,
            "majority_max": rr.majority_max,
            "others_avg": rr.others_avg,
            "ratio": rr.ratio,
        }

    doc = {
        "profiles": {
            str(p.class_index): {
                "count": p.count,
                "mean_fe": [float(v) for v in p.mean_fe],
                "mean_ce": [float(v) for v in p.mean_ce],
                "fe_frequency": [float(v) for v in p.fe_frequency],
            }
            for p in profiles
        },
        "empty_classes": [c for c in range(es.num_classes) if c not in present],
        "weight_summaries": {
            str(w.class_index): {
                "top_weights": [[i, v] for i, v in w.top_weights],
                "top10_abs_sum": w.top10_abs_sum,
                "max_abs_weight": w.max_abs_weight,
            }
            for w in summaries
        },
        "largest_mean_ce_ratio": ratio_block,
        "run_manifest": _run_manifest(
            "stats",
            inputs,
            {
                "top": args.top,
                "group_by": args.group_by,
                "activity_eps": args.activity_eps,
                "majority": majority,
            },
        ),
    }

    out_json = None
    if args.out:
        out_json = os.path.join(args.out, "stats.json")
        rows = [["kind", "class", "rank", "identity", "value"]]
        for p in profiles:
            for kind, vec in (("mean_ce", p.mean_ce), ("mean_fe", p.mean_fe)):
                order = _desc_order(vec)
                for rank, idx in enumerate(order[: args.top], start=1):
                    rows.append([kind, p.class_index, rank, int(idx), float(vec[idx])])
        for w in summaries:
            for rank, (idx, val) in enumerate(w.top_weights, start=1):
                rows.append(["abs_weight", w.class_index, rank, idx, val])
        _write_csv(os.path.join(args.out, "profiles.csv"), rows)
    _emit(doc, out_json)
    return 0


def _desc_order(vec):
    import numpy as np

    return np.argsort(-np.asarray(vec), kind="stable")


# ------------------------------------------------------------- divergence


def _pair_block(d: dict) -> dict:
    return {str(c): {"tp": _float_or_none(tp), "fp": _float_or_none(fp)} for c, (tp, fp) in d.items()}


def _cmd_divergence(args) -> int:
    from .decomposition import decompose
    from .divergence import divergence_report

    m_train, train = _load_set(args.train_dir, args.allow_signed_fe)
    m_test, test = _load_set(args.test_dir, args.allow_signed_fe)
    m_w, head = _load_head(args.weights_dir)
    d_train = decompose(train, head)
    d_test = decompose(test, head)
    rep = divergence_report(
        train,
        test,
        d_train,
        d_test,
        space=args.space,
        top_m=args.top,
        k=args.k,
        rank_by=args.rank_by,
    )
    doc = {
        "report": {
            "space": rep.space,
            "fb_train_tp": _float_or_none(rep.fb_train_tp),
            "fb_train_fp": _float_or_none(rep.fb_train_fp),
            "per_class_fb": _pair_block(rep.per_class_fb),
            "overlap_tp": _float_or_none(rep.overlap_tp),
            "overlap_fp": _float_or_none(rep.overlap_fp),
            "per_class_overlap": _pair_block(rep.per_class_overlap),
            "counts": {str(c): v for c, v in rep.counts.items()},
            "excluded_tp": rep.excluded_tp,
            "excluded_fp": rep.excluded_fp,
        },
        "run_manifest": _run_manifest(
            "divergence",
            [
                _input_entry(args.train_dir, m_train),
                _input_entry(args.test_dir, m_test),
                _input_entry(args.weights_dir, m_w),
            ],
            {"space": args.space, "top": args.top, "k": args.k, "rank_by": args.rank_by},
        ),
    }
    _emit(doc, args.out)
    return 0


# ---------------------------------------------------------------- retrain


def _cmd_retrain(args) -> int:
    from .embx import write_embx
    from .probe import TrainConfig, retrain_head

    m_train, train = _load_set(args.fe_dir, args.allow_signed_fe)
    inputs = [_input_entry(args.fe_dir, m_train)]
    eval_set = None
    if args.eval:
        m_eval, eval_set = _load_set(args.eval, args.allow_signed_fe)
        inputs.append(_input_entry(args.eval, m_eval))

    cfg = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        seed=args.seed,
        init=args.init.replace("-", "_"),
        lr_schedule=args.schedule,
        lr_min=args.lr_min,
        class_balanced=args.class_balanced_loss,
    )
    trace = retrain_head(train, cfg, eval_set)
    head_dir = write_embx(
        trace.final_head,
        args.out,
        extra_metadata={"best_epoch": str(trace.best_epoch), "seed": str(cfg.seed)},
    )
    cfg_dict = {
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "weight_decay": cfg.weight_decay,
        "seed": cfg.seed,
        "init": cfg.init,
        "lr_schedule": cfg.lr_schedule,
        "lr_min": cfg.lr_min,
        "class_balanced": cfg.class_balanced,
    }
    doc = {
        "trace": {
            "per_epoch_loss": trace.per_epoch_loss,
            "per_epoch_bac": trace.per_epoch_bac,
            "best_epoch": trace.best_epoch,
            "best_bac": max(trace.per_epoch_bac),
            "eval_used": trace.eval_used,
            "config": cfg_dict,
        },
        "head_dir": os.path.abspath(head_dir),
        "run_manifest": _run_manifest("retrain", inputs, cfg_dict),
    }
    _emit(doc, os.path.join(args.out, "trace.json"))
    return 0


# -------------------------------------------------------------------- bac


def _cmd_bac(args) -> int:
    from .decomposition import accuracy, check_exported_logits

    es, head, d, inputs = _load_pair(args)
    rep = accuracy(d, es.labels)
    doc = {
        "report": {
            "bac": rep.bac,
            "overall_accuracy": rep.overall_accuracy,
            "per_class_recall": [_float_or_none(v) for v in rep.per_class_recall],
            "absent_classes": rep.absent_classes,
            "confusion": rep.confusion.tolist(),
        },
        "run_manifest": _run_manifest("bac", inputs, {"logit_tol": args.logit_tol}),
    }
    if es.logits is not None:
        cons = check_exported_logits(d, es.logits, tol=args.logit_tol)
        doc["logit_consistency"] = {
            "max_abs_err": cons.max_abs_err,
            "mismatched_argmax_count": cons.mismatched_argmax_count,
            "tol": cons.tol,
            "within_tol": cons.within_tol,
        }
    _emit(doc, args.out)
    return 0


# ------------------------------------------------------------------ wiring


def build_parser() -> argparse.ArgumentParser:
    from . import __version__

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="cap numeric thread pools (env: IMBLENS_THREADS)")
    common.add_argument(
        "--allow-signed-fe",
        action="store_true",
        help="accept embeddings with negative entries (downgrades the error to a warning)",
    )

    parser = argparse.ArgumentParser(prog="imblens", description=__doc__)
    parser.add_argument("--version", action="version", version=f"imblens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", parents=[common], help="summarize an EMBX directory")
    p.add_argument("dir")
    p.add_argument("--json", action="store_true", help="print the JSON summary instead of text")
    p.add_argument("--out", default=None, help="also write the JSON summary to this file")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("topk", parents=[common], help="top-K coverage, members, unions")
    p.add_argument("fe_dir")
    p.add_argument("weights_dir")
    p.add_argument("--k", type=_k_list, default=[1, 2, 3, 4, 5, 6, 7], help="comma-separated K values")
    p.add_argument("--space", choices=["ce", "fe"], default="ce")
    p.add_argument("--fe-mode", choices=["magnitude", "ce-aligned"], default="magnitude")
    p.add_argument("--group-by", choices=["predicted", "true"], default="predicted")
    p.add_argument("--top-m", type=int, default=10, help="member identities reported per class")
    p.add_argument("--member-k", type=int, default=7, help="K used for member and union tallies")
    p.add_argument("--contrib-k", type=int, default=None, help="also report logit contribution fractions at this K")
    p.add_argument("--out", default=None, help="directory for topk.json and coverage.csv")
    p.set_defaults(func=_cmd_topk)

    p = sub.add_parser("stats", parents=[common], help="class profiles and weight summaries")
    p.add_argument("fe_dir")
    p.add_argument("weights_dir")
    p.add_argument("--top", type=int, default=10, help="entries per ranked view")
    p.add_argument("--group-by", choices=["predicted", "true"], default="true")
    p.add_argument("--activity-eps", type=float, default=0.0)
    p.add_argument("--majority", type=int, default=None, help="majority class (default: largest class)")
    p.add_argument("--out", default=None, help="directory for stats.json and profiles.csv")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("divergence", parents=[common], help="train/test mean divergence and identity overlap")
    p.add_argument("train_dir")
    p.add_argument("test_dir")
    p.add_argument("weights_dir")
    p.add_argument("--space", choices=["fe", "ce"], default="fe")
    p.add_argument("--top", type=int, default=10, help="identities per frequency ranking")
    p.add_argument("--k", type=int, default=7, help="per-instance top-K used for frequency")
    p.add_argument("--rank-by", choices=["topk", "activation"], default="topk")
    p.add_argument("--out", default=None, help="write the JSON report to this file")
    p.set_defaults(func=_cmd_divergence)

    p = sub.add_parser("retrain", parents=[common], help="retrain the linear head on stored embeddings")
    p.add_argument("fe_dir")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--lr-min", type=float, default=1e-3)
    p.add_argument("--schedule", choices=["cosine", "constant"], default="cosine")
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["zeros", "scaled-uniform"], default="zeros")
    p.add_argument("--class-balanced-loss", action="store_true")
    p.add_argument("--eval", default=None, help="EMBX dir scored per epoch for best-epoch selection")
    p.add_argument("--out", required=True, help="output directory for the retrained head")
    p.set_defaults(func=_cmd_retrain)

    p = sub.add_parser("bac", parents=[common], help="balanced accuracy of a head on an embedding set")
    p.add_argument("fe_dir")
    p.add_argument("weights_dir")
    p.add_argument("--logit-tol", type=float, default=1e-4)
    p.add_argument("--out", default=None, help="write the JSON report to this file")
    p.set_defaults(func=_cmd_bac)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_threads(args.threads)
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ArithmeticError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (ImblensError, ValueError, IndexError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

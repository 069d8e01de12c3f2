"""Merge training logs and evaluation reports into one summary document."""
from collections import defaultdict
from datetime import datetime, timezone

import numpy as np

from .metrics import EvalReport, OrderingVerdict, uncertainty_ordering
from .train import TrainLog

__all__ = ["SUMMARY_FORMAT", "SUMMARY_VERSION", "build_summary", "render_markdown", "strip_metadata"]

SUMMARY_FORMAT = "ucat-summary"
SUMMARY_VERSION = "1.0"


def _training(report):
    return report.model_metadata.get("training", {})


def _is_base(report):
    return _training(report).get("epsilon", 0.0) == 0.0


def _eval_row(name, r):
    t = _training(r)
    return {
        "name": name,
        "label": r.label,
        "variant": t.get("variant"),
        "lambda": t.get("lambda"),
        "lambda_beta": t.get("lambda_beta"),
        "train_epsilon": t.get("epsilon"),
        "clean_acc": r.clean_acc,
        "robust_acc": r.robust_acc,
        "harmonic_means": r.harmonic_means,
        "ece_clean": r.ece_clean,
        "ece_adv": r.ece_adv,
        "au_auroc": r.au_auroc,
        "eu_auroc": r.eu_auroc,
        "mean_pu_clean": r.mean_pu_clean,
        "mean_pu_adv": r.mean_pu_adv,
    }


def _ordering_rows(reports):
    bases = [(n, r) for n, r in reports if _is_base(r)]
    tuned = [(n, r) for n, r in reports if not _is_base(r)]
    rows = []
    for tn, t in tuned:
        seed = t.model_metadata.get("model_seed")
        matches = [(bn, b) for bn, b in bases if b.model_metadata.get("model_seed") == seed]
        for bn, b in matches:
            row = {"base": bn, "tuned": tn}
            for key, correct_only in (("all", False), ("correct_only", True)):
                v = uncertainty_ordering(b, t, correct_only=correct_only)
                row[key] = v._asdict()
            rows.append(row)
    return rows


def _sweep_rows(reports):
    groups = defaultdict(list)
    for _, r in reports:
        t = _training(r)
        if t.get("variant") == "ucat" and not _is_base(r):
            groups[t.get("lambda_beta")].append(r)
    rows = []
    for lb in sorted(groups):
        rs = groups[lb]
        primary = rs[0].primary_attack
        rows.append({
            "lambda_beta": lb,
            "lambda": _training(rs[0]).get("lambda"),
            "n": len(rs),
            "clean_acc": float(np.mean([r.clean_acc for r in rs])),
            "robust_acc": float(np.mean([r.robust_acc[primary] for r in rs])),
            "harmonic_mean": float(np.mean([r.harmonic_means[primary] for r in rs])),
            "ece_adv": float(np.mean([r.ece_adv for r in rs])),
        })
    return rows


def build_summary(items, extra=None):
    """Summarise ``(name, TrainLog | EvalReport)`` pairs.

    Everything except the ``metadata`` block is a deterministic function of
    the inputs.
    """
    reports = [(n, x) for n, x in items if isinstance(x, EvalReport)]
    logs = [(n, x) for n, x in items if isinstance(x, TrainLog)]
    summary = {
        "format": SUMMARY_FORMAT,
        "version": SUMMARY_VERSION,
        "evaluations": [_eval_row(n, r) for n, r in reports],
        "training": [{"name": n, "final": log.summary.get("final", {}),
                      "loss_config": log.summary.get("loss_config", {})} for n, log in logs],
        "ordering": _ordering_rows(reports),
        "lambda_sweep": _sweep_rows(reports),
        "metadata": {"generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds")},
    }
    if extra:
        summary.update(extra)
    return summary


def strip_metadata(summary):
    return {k: v for k, v in summary.items() if k != "metadata"}


def _pct(x):
    return "n/a" if x is None else f"{100 * x:.2f}"


def _num(x, digits=4):
    return "n/a" if x is None else f"{x:.{digits}f}"


def render_markdown(summary):
    """Human-readable tables; accuracies shown in percent."""
    out = ["# Summary", ""]
    if summary["evaluations"]:
        out += ["## Evaluations", "",
                "| name | clean % | robust % | H % | ECE clean | ECE adv | AU-AUROC | EU-AUROC | PU clean | PU adv |",
                "|---|---|---|---|---|---|---|---|---|---|"]
        for r in summary["evaluations"]:
            attack = next(iter(r["robust_acc"]), None)
            out.append("| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |".format(
                r["name"], _pct(r["clean_acc"]), _pct(r["robust_acc"].get(attack)),
                _pct(r["harmonic_means"].get(attack)), _num(r["ece_clean"]), _num(r["ece_adv"]),
                _num(r["au_auroc"]), _num(r["eu_auroc"]), _num(r["mean_pu_clean"]),
                _num(r["mean_pu_adv"])))
        out.append("")
    if summary["ordering"]:
        out += ["## Predictive-uncertainty ordering", "",
                "| base | tuned | samples | PU base clean | PU tuned clean | PU tuned adv | holds |",
                "|---|---|---|---|---|---|---|"]
        for row in summary["ordering"]:
            for key in ("all", "correct_only"):
                v = OrderingVerdict(**row[key])
                out.append(f"| {row['base']} | {row['tuned']} | {key} | {_num(v.pu_base_clean)} | "
                           f"{_num(v.pu_tuned_clean)} | {_num(v.pu_tuned_adv)} | {v.holds} |")
        out.append("")
    if summary["lambda_sweep"]:
        out += ["## Regulariser weight sweep", "",
                "| lambda*beta | lambda | runs | clean % | robust % | H % | ECE adv |",
                "|---|---|---|---|---|---|---|"]
        for r in summary["lambda_sweep"]:
            out.append(f"| {r['lambda_beta']:g} | {r['lambda']:.4g} | {r['n']} | {_pct(r['clean_acc'])} | "
                       f"{_pct(r['robust_acc'])} | {_pct(r['harmonic_mean'])} | {_num(r['ece_adv'])} |")
        out.append("")
    if "checks" in summary:
        out += ["## Directional checks", ""]
        for name, c in summary["checks"].items():
            out.append(f"- {name}: {'PASS' if c['passed'] else 'FAIL'} ({c['detail']})")
        out.append("")
    return "\n".join(out)

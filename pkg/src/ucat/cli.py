"""Command-line entry point: ``ucat <subcommand> ...``."""
import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .attack import AttackConfig, Objective, pgd
from .data import SyntheticDatasetSpec, gen_data
from .dirichlet import entropy
from .errors import FormatError, ShapeError
from .evidence import (EvidenceProfile, LogitVector, MeasurementProfile, Stabilization,
                       measure, predictive_mean, probabilities)
from .losses import LossConfig, Variant
from .metrics import RecordBatch, _auroc_or_none, accuracy, ece, evaluate
from .model import ToyContrastiveModel
from .pipeline import BenchmarkConfig, directional_checks, run_benchmark
from .report import build_summary, render_markdown
from .train import TrainConfig, finetune

DEFAULT_ATTACKS = ["pgd100:objective=ce,eps=0.03,steps=100",
                   "margin100:objective=margin,eps=0.03,steps=100"]


def _write(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _load_split(data_dir, split):
    ds = io.load_dataset(data_dir)
    if split == "train":
        return ds, ds.X_train, ds.y_train
    return ds, ds.X_test, ds.y_test


def _check_model_data(model, X, y):
    if X.shape[1] != model.input_dim:
        raise ShapeError(f"model expects {model.input_dim} features, data has {X.shape[1]}")
    if y.size and y.max() >= model.n_classes:
        raise ShapeError(f"data has labels up to {y.max()}, model has {model.n_classes} classes")


# -- gen-data -----------------------------------------------------------------

def cmd_gen_data(args):
    spec = SyntheticDatasetSpec(args.classes, args.input_dim, args.n_train, args.n_test,
                                args.separation, args.noise, args.seed)
    ds = gen_data(spec)
    io.save_dataset(ds, args.out)
    acc = ds.header.get("nearest_centroid_train_acc")
    if acc is not None:
        print(f"nearest-centroid train accuracy: {acc:.4f}")


# -- train ----------------------------------------------------------------------

def cmd_train(args):
    ds = io.load_dataset(args.data)
    if args.init_model:
        model = io.load_model(args.init_model)
    else:
        model = ToyContrastiveModel.initialize(ds.X_train.shape[1], args.embed_dim, ds.n_classes,
                                               tau=args.tau, seed=args.seed)
        model.metadata["data_seed"] = ds.header.get("seed")
    _check_model_data(model, ds.X_train, ds.y_train)
    evidence = EvidenceProfile(model.tau, args.tau_prime)
    loss = LossConfig(Variant(args.variant), lam=args.lam, evidence=evidence,
                      lambda_beta=args.lambda_beta, beta_convention=args.beta_convention,
                      clean_ce_weight=args.clean_ce)
    attack = None
    if args.eps > 0:
        step = args.step_size if args.step_size is not None else 2.5 * args.eps / max(args.steps, 1)
        attack = AttackConfig(args.eps, args.steps, step, random_start=args.random_start,
                              seed=args.attack_seed)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
                      momentum=args.momentum, attack=attack, seed=args.seed)
    trained, log = finetune(model, ds.X_train, ds.y_train, cfg, loss, ds.X_test, ds.y_test)
    Path(args.out_model).parent.mkdir(parents=True, exist_ok=True)
    io.save_model(trained, args.out_model)
    if args.out_log:
        Path(args.out_log).parent.mkdir(parents=True, exist_ok=True)
        io.save_train_log(log, args.out_log)
    last = log.epochs[-1]
    print(f"final clean accuracy {last.clean_acc:.4f}"
          + (f", robust accuracy {last.robust_acc:.4f}" if last.robust_acc is not None else ""))


# -- attack ---------------------------------------------------------------------

def _nan_to_none(a):
    return [None if not np.isfinite(v) else float(v) for v in a]


def cmd_attack(args):
    model = io.load_model(args.model)
    _, X, y = _load_split(args.data, args.split)
    _check_model_data(model, X, y)
    loss = LossConfig(Variant.UCAT, lam=args.lam, evidence=EvidenceProfile(model.tau, args.tau_prime))
    kappa = 2.0 / model.tau if args.kappa is None else args.kappa
    cfg = AttackConfig(args.eps, args.steps, args.step_size, Objective(args.objective),
                       args.random_start, args.seed, kappa, loss)
    adv = pgd(model, X, y, cfg)
    clean_pred = model.predict(X)
    adv_pred = np.argmax(model.logits(adv.perturbed, allow_degenerate=True), axis=1)
    records = [{
        "id": i,
        "label": int(y[i]),
        "clean_pred": int(clean_pred[i]),
        "adv_pred": int(adv_pred[i]),
        "delta_linf": float(adv.delta_linf[i]),
        "valid": bool(adv.valid[i]),
        "loss_trace": _nan_to_none(adv.loss_trace[:, i]),
    } for i in range(len(y))]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    io.save_attack_records(records, args.out, cfg.to_dict())
    print(f"robust accuracy {np.mean(adv_pred == y):.4f} over {len(y)} samples")
    if adv.message:
        print(adv.message, file=sys.stderr)


# -- eval -----------------------------------------------------------------------

_ATTACK_KEYS = {"objective": str, "eps": float, "steps": int, "step": float,
                "random_start": lambda s: s.lower() in ("1", "true", "yes"),
                "seed": int, "kappa": float}


def parse_attack_spec(text, default_seed=0, tau=None):
    """``name:key=value,...`` with keys objective, eps, steps, step, random_start, seed, kappa.

    Evaluation attacks default to a random start and ``step = eps``.  Margin
    attacks default to ``kappa = 2 / tau`` (no clamping) when ``tau`` is given.
    """
    name, _, body = text.partition(":")
    if not name or not body:
        raise ValueError(f"attack spec {text!r} must look like name:key=value,...")
    opts = {"random_start": True, "seed": default_seed}
    for item in body.split(","):
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq or key not in _ATTACK_KEYS:
            raise ValueError(f"attack spec {text!r}: bad option {item!r}")
        opts[key] = _ATTACK_KEYS[key](value.strip())
    if "eps" not in opts:
        raise ValueError(f"attack spec {text!r}: eps is required")
    cfg = AttackConfig(opts["eps"], opts.get("steps", 100), opts.get("step", opts["eps"]),
                       Objective(opts.get("objective", "ce")), opts["random_start"], opts["seed"],
                       opts.get("kappa", 2.0 / tau if tau else 0.0))
    return name, cfg


def cmd_eval(args):
    model = io.load_model(args.model)
    _, X, y = _load_split(args.data, args.split)
    _check_model_data(model, X, y)
    attacks = dict(parse_attack_spec(s, args.seed, model.tau) for s in args.attacks)
    report = evaluate(model, X, y, attacks, EvidenceProfile(model.tau, args.tau_prime),
                      args.label or Path(args.model).stem)
    Path(args.out_report).parent.mkdir(parents=True, exist_ok=True)
    io.save_eval_report(report, args.out_report)
    print(f"clean {report.clean_acc:.4f} " + " ".join(
        f"{k} {v:.4f}" for k, v in report.robust_acc.items()))


# -- analyze-logits ---------------------------------------------------------------

def analyze_dump(dump, measurement, tau_prime, stabilization=Stabilization.LINEAR, n_bins=15):
    """Per-row AU/EU/PU plus per-condition aggregates for a logit dump."""
    lv = LogitVector(dump.logits, dump.tau, cosine_origin=False)
    triple = measure(lv, measurement, stabilization)
    au, eu, pu = (np.atleast_1d(v) for v in triple)
    p_dir = predictive_mean(lv, EvidenceProfile(dump.tau, tau_prime, stabilization))
    pu_dir = np.atleast_1d(entropy(p_dir))
    probs = probabilities(lv)
    rows = []
    for i in range(len(dump.ids)):
        rows.append({"id": dump.ids[i], "label": int(dump.labels[i]), "condition": dump.conditions[i],
                     "au": float(au[i]), "eu": float(eu[i]), "pu": float(pu[i]),
                     "pu_dirichlet": float(pu_dir[i])})
    conds = np.array(dump.conditions)
    aggregates = {}
    for cond in ("clean", "adversarial"):
        mask = conds == cond
        if not mask.any():
            continue
        batch = RecordBatch(probs[mask], dump.labels[mask], au[mask], eu[mask], pu[mask])
        wrong = ~batch.correct()
        aggregates[cond] = {
            "n": int(mask.sum()),
            "accuracy": accuracy(batch),
            "ece": ece(batch, n_bins),
            "au_auroc": _auroc_or_none(au[mask], wrong),
            "eu_auroc": _auroc_or_none(eu[mask], wrong),
            "mean_au": float(au[mask].mean()),
            "mean_eu": float(eu[mask].mean()),
            "mean_pu": float(pu[mask].mean()),
        }
    clean_pu = {r["id"]: r["pu"] for r in rows if r["condition"] == "clean"}
    delta = {r["id"]: r["pu"] - clean_pu[r["id"]] for r in rows
             if r["condition"] == "adversarial" and r["id"] in clean_pu}
    return {
        "format": "ucat-logit-analysis",
        "version": "1.0",
        "source": dump.source,
        "tau": dump.tau,
        "tau_au": measurement.tau_for_au,
        "tau_eu": measurement.tau_for_eu,
        "tau_prime": tau_prime,
        "stabilization": Stabilization(stabilization).value,
        "rows": rows,
        "aggregates": aggregates,
        "delta_pu": delta,
    }


def cmd_analyze_logits(args):
    dump = io.read_logit_dump(args.dump)
    result = analyze_dump(dump, MeasurementProfile(args.tau_au, args.tau_eu), args.tau_prime,
                          Stabilization(args.stabilization), args.n_bins)
    _write(args.out, io.dumps(result))
    for cond, agg in result["aggregates"].items():
        print(f"{cond}: n={agg['n']} acc={agg['accuracy']:.4f} ece={agg['ece']:.4f} "
              f"mean PU={agg['mean_pu']:.4f}")


# -- report / pipeline --------------------------------------------------------------

def _write_summary(summary, out, markdown=None):
    _write(out, io.dumps(summary))
    md = markdown or str(Path(out).with_suffix(".md"))
    _write(md, render_markdown(summary))


def cmd_report(args):
    items = [(Path(p).stem, io.load_any(p)) for p in args.inputs]
    _write_summary(build_summary(items), args.out, args.markdown)
    print(f"wrote {args.out}")


SWEEP_GRID = (1e4, 5e4, 1e5, 5e5, 1e6)


def _sweep_grid(values):
    if values is None:
        return ()
    return tuple(values) if values else SWEEP_GRID


def cmd_pipeline(args):
    base = BenchmarkConfig()
    overrides = {k: v for k, v in {
        "epsilon": args.eps, "epochs": args.epochs, "ucat_lambda_beta": args.lambda_beta,
        "beta_convention": args.beta_convention, "train_steps": args.train_steps,
        "eval_steps": args.eval_steps,
    }.items() if v is not None}
    variants = ("ce", "prob-kl", "ucat") if args.with_prob_kl else base.variants
    config = BenchmarkConfig(**dict(base.to_dict(), **overrides, variants=variants,
                                    train_step_size=args.train_step_size,
                                    lambda_beta_grid=_sweep_grid(args.sweep)))
    out = Path(args.out)
    runs, items = [], []
    for seed in args.seeds:
        run = run_benchmark(config, seed, progress=lambda m: print(f"[seed {seed}] {m}", file=sys.stderr))
        runs.append(run)
        sd = out / f"seed{seed}"
        io.save_dataset(run.dataset, sd / "data")
        for name in run.models:
            tag = name.replace("@", "_lb")
            io.save_model(run.models[name], sd / f"{tag}.model.json")
            io.save_train_log(run.logs[name], sd / f"{tag}.log.jsonl")
            io.save_eval_report(run.reports[name], sd / f"{tag}.report.json")
            items.append((f"seed{seed}/{name}", run.reports[name]))
    checks = directional_checks(runs)
    summary = build_summary(items, extra={"config": config.to_dict(), "seeds": list(args.seeds),
                                          "checks": checks})
    _write_summary(summary, out / "summary.json")
    for name, c in checks.items():
        print(f"{name}: {'PASS' if c['passed'] else 'FAIL'} ({c['detail']})")


# -- parser ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="ucat", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--input-dim", type=int, default=32)
    g.add_argument("--n-train", type=int, default=2000)
    g.add_argument("--n-test", type=int, default=500)
    g.add_argument("--noise", type=float, default=0.2)
    g.add_argument("--separation", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train or fine-tune a model")
    t.add_argument("--data", required=True)
    t.add_argument("--variant", choices=[v.value for v in Variant], default="ce")
    t.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="effective regulariser weight (default: lambda-beta / beta)")
    t.add_argument("--lambda-beta", type=float, default=1e5)
    t.add_argument("--beta-convention", choices=["literal", "evidence-bound"], default="literal")
    t.add_argument("--eps", type=float, default=0.0, help="training PGD budget; 0 trains on clean data")
    t.add_argument("--steps", type=int, default=10)
    t.add_argument("--step-size", type=float, default=None)
    t.add_argument("--random-start", action="store_true")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--seed", type=int, default=0, help="model init and batch-order seed")
    t.add_argument("--attack-seed", type=int, default=0)
    t.add_argument("--init-model", default=None, help="checkpoint to fine-tune")
    t.add_argument("--embed-dim", type=int, default=8)
    t.add_argument("--tau", type=float, default=0.07)
    t.add_argument("--tau-prime", type=float, default=0.07)
    t.add_argument("--clean-ce", type=float, default=0.0, help="weight of an extra clean CE term")
    t.add_argument("--out-model", required=True)
    t.add_argument("--out-log", default=None)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("attack", help="run PGD and export per-sample records")
    a.add_argument("--model", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--split", choices=["train", "test"], default="test")
    a.add_argument("--objective", choices=[o.value for o in Objective], default="ce")
    a.add_argument("--eps", type=float, required=True)
    a.add_argument("--steps", type=int, default=100)
    a.add_argument("--step-size", type=float, default=None)
    a.add_argument("--random-start", action="store_true")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--kappa", type=float, default=None,
                   help="margin floor; default 2/tau, which never clamps")
    a.add_argument("--lambda", dest="lam", type=float, default=None)
    a.add_argument("--tau-prime", type=float, default=0.07)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_attack)

    e = sub.add_parser("eval", help="evaluate a model under a list of attacks")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=["train", "test"], default="test")
    e.add_argument("--attacks", nargs="+", default=DEFAULT_ATTACKS,
                   help="name:objective=ce,eps=0.03,steps=100[,step=..,random_start=..,seed=..,kappa=..]")
    e.add_argument("--seed", type=int, default=0, help="default attack seed")
    e.add_argument("--tau-prime", type=float, default=0.07)
    e.add_argument("--label", default="")
    e.add_argument("--out-report", required=True)
    e.set_defaults(func=cmd_eval)

    z = sub.add_parser("analyze-logits", help="uncertainty analysis of an external logit dump")
    z.add_argument("--dump", required=True)
    z.add_argument("--tau-au", type=float, default=0.01)
    z.add_argument("--tau-eu", type=float, default=0.07)
    z.add_argument("--tau-prime", type=float, default=0.07)
    z.add_argument("--stabilization", choices=[s.value for s in Stabilization], default="linear")
    z.add_argument("--n-bins", type=int, default=15)
    z.add_argument("--out", required=True)
    z.set_defaults(func=cmd_analyze_logits)

    r = sub.add_parser("report", help="merge train logs and eval reports")
    r.add_argument("--inputs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--markdown", default=None, help="markdown path (default: next to --out)")
    r.set_defaults(func=cmd_report)

    b = sub.add_parser("pipeline", help="run the full synthetic benchmark")
    b.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    b.add_argument("--eps", type=float, default=None)
    b.add_argument("--epochs", type=int, default=None)
    b.add_argument("--train-steps", type=int, default=None)
    b.add_argument("--train-step-size", type=float, default=None)
    b.add_argument("--eval-steps", type=int, default=None)
    b.add_argument("--lambda-beta", type=float, default=None)
    b.add_argument("--beta-convention", choices=["literal", "evidence-bound"], default=None)
    b.add_argument("--sweep", type=float, nargs="*", default=None,
                   help="extra UCAT runs at these lambda*beta values "
                        "(no values: 1e4 5e4 1e5 5e5 1e6)")
    b.add_argument("--with-prob-kl", action="store_true")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, FormatError, ShapeError, OSError, KeyError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line: gradcheck | oracle | bound | train | eval | report.

Every command writes its report(s) plus a ``manifest_<command>.json`` into
``--out``. Reports hold no timestamps or durations, so re-running with the
same config and seed rewrites them byte for byte; the manifest carries the
wall-clock time.

Exit codes: 0 success, 1 check or bound violated, 2 bad config, 3 file error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .bounds import bound_report
from .checks import FAULTS, coefficient_suite, gradient_suite, posterior_check
from .core import ValidationError
from .genmodel import MAX_BRUTE_FORCE_N, Categorical, DiagonalGaussian, sample_supervised
from .reports import (
    read_embeddings,
    read_json,
    read_loss_curve,
    write_embeddings,
    write_histogram,
    write_json,
    write_loss_curve,
)
from .trainkit import (
    SyntheticDatasetSpec,
    TrainConfig,
    TrainingDivergedError,
    embeddings_for_eval,
    evaluate,
    generate_dataset,
    train,
)

log = logging.getLogger("contrastlab")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class MissingArtifactError(OSError):
    pass


def densities(cfg: dict):
    d = cfg["density"]
    if d["family"] == "gaussian":
        return (DiagonalGaussian(d["target_mean"], d["target_sigma"]),
                DiagonalGaussian(d["noise_mean"], d["noise_sigma"]))
    if d["family"] == "categorical":
        return Categorical(d["target_pmf"]), Categorical(d["noise_pmf"])
    raise cfgmod.ConfigError(f"density.family must be 'gaussian' or 'categorical', got {d['family']!r}")


# --- commands: each returns (ok, {name: path}) ---


def cmd_gradcheck(cfg, out: Path):
    g = cfg["gradcheck"]
    if g["fault"] and g["fault"] not in FAULTS:
        raise cfgmod.ConfigError(f"gradcheck.fault must be one of {FAULTS} or empty")
    grads = gradient_suite(g["batches"], cfg["seed"], g["tau"], g["max_n"], g["max_d"],
                           g["step"], g["tolerance"], g["fault"] or None)
    coefs = coefficient_suite(g["coefficient_batches"], cfg["seed"], g["max_n"], g["max_d"])
    ok = grads["ok"] and coefs["ok"]
    print(f"gradcheck: max relative error {grads['max_relative_error']:.3e} "
          f"(tolerance {g['tolerance']:g}); range violations {coefs['range_violations']}; "
          f"witness SupCon factor {coefs['witness']['supcon_factor']:.4f}")
    path = write_json(out / "gradcheck.json", {"gradients": grads, "coefficients": coefs, "ok": ok,
                                               "manifest": "manifest_gradcheck.json"})
    return ok, {"report": path}


def cmd_oracle(cfg, out: Path):
    o = cfg["oracle"]
    n, t = o["n"], o["t"]
    if n > MAX_BRUTE_FORCE_N:
        raise cfgmod.ConfigError(f"oracle.n={n} exceeds the enumeration limit {MAX_BRUTE_FORCE_N}")
    if not 1 <= t < n:
        raise cfgmod.ConfigError(f"oracle.t must satisfy 1 <= t < n, got t={t}, n={n}")
    target, noise = densities(cfg)
    rng = np.random.default_rng(cfg["seed"])
    devs = [posterior_check(sample_supervised(n, t, target, noise, rng).data, t, target, noise)
            for _ in range(o["instances"])]
    worst = max(devs)
    ok = worst <= o["tolerance"]
    print(f"oracle: max abs deviation {worst:.3e} over {len(devs)} instances (tolerance {o['tolerance']:g})")
    report = {"n": n, "t": t, "family": cfg["density"]["family"], "instances": o["instances"],
              "max_abs_deviation": worst, "deviations": devs, "selfsup_path_checked": t == 1,
              "tolerance": o["tolerance"], "ok": ok, "manifest": "manifest_oracle.json"}
    return ok, {"report": write_json(out / "oracle.json", report)}


def cmd_bound(cfg, out: Path):
    b = cfg["bound"]
    target, noise = densities(cfg)
    ns = sorted(int(n) for n in b["n"])
    if not ns:
        raise cfgmod.ConfigError("bound.n must list at least one batch size")
    rows = []
    for n in ns:
        r = bound_report(n, b["t"], target, noise, b["samples"], cfg["seed"], with_supcon=b["supcon"])
        rows.append({"n": n, "t": b["t"], **r.to_dict(), "satisfied": r.satisfied})
        print(f"bound: n={n} estimate {r.mc_loss_estimate:.5f} +- {r.mc_standard_error:.5f} "
              f"floor {r.sincere_rhs:.5f} {'ok' if r.satisfied else 'VIOLATED'}")
    est = [(r["mc_loss_estimate"], r["mc_standard_error"]) for r in rows]
    monotone = all(b2 + 3 * np.hypot(s1, s2) >= a for (a, s1), (b2, s2) in zip(est, est[1:]))
    ok = monotone and all(r["satisfied"] for r in rows)
    report = {"family": cfg["density"]["family"], "reports": rows, "monotone_in_n": monotone, "ok": ok,
              "manifest": "manifest_bound.json"}
    return ok, {"report": write_json(out / "bound.json", report)}


def build_training(cfg):
    spec = SyntheticDatasetSpec(**cfg["data"], seed=cfg["seed"])
    tc = TrainConfig(**{k: v for k, v in cfg["train"].items()}, seed=cfg["seed"])
    return spec, tc


def cmd_train(cfg, out: Path):
    spec, tc = build_training(cfg)
    dataset = generate_dataset(spec)
    result = train(tc, dataset)
    tr, te = embeddings_for_eval(result, dataset)
    paths = {"loss": write_loss_curve(out / "loss.csv", result.epoch_losses),
             "embeddings_train": write_embeddings(out / "embeddings_train.csv", tr, dataset.train_y)}
    if te is not None:
        paths["embeddings_test"] = write_embeddings(out / "embeddings_test.csv", te, dataset.test_y)
    print(f"train: {tc.loss} k={spec.k_classes} first loss {result.epoch_losses[0]:.5f} "
          f"final loss {result.epoch_losses[-1]:.5f}")
    summary = {"loss": tc.loss, "k_classes": spec.k_classes, "seed": cfg["seed"], "encoder": tc.encoder,
               "first_loss": result.epoch_losses[0], "final_loss": result.epoch_losses[-1],
               "data": spec.to_dict(), "train": tc.to_dict(), "files": sorted(p.name for p in paths.values()),
               "manifest": "manifest_train.json"}
    paths["summary"] = write_json(out / "train_summary.json", summary)
    return True, paths


def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingArtifactError(f"missing input artifact: {path}")
    return path


def cmd_eval(cfg, out: Path):
    e = cfg["eval"]
    run = Path(e["run"]) if e["run"] else out
    tr, ytr = read_embeddings(_require(run / "embeddings_train.csv"))
    te_path = run / "embeddings_test.csv"
    te, yte = read_embeddings(te_path) if te_path.is_file() else (None, None)
    losses = read_loss_curve(run / "loss.csv") if (run / "loss.csv").is_file() else []
    ks = [int(k) for k in e["ks"]]
    rep = evaluate(tr, ytr, te, yte, ks=ks, train_loss=losses, bins=e["bins"])
    meta = read_json(run / "train_summary.json") if (run / "train_summary.json").is_file() else {}
    body = rep.to_dict()
    body.update(run=str(run), loss=meta.get("loss"), k_classes=meta.get("k_classes"), seed=meta.get("seed"),
                final_loss=losses[-1] if losses else None, manifest="manifest_eval.json")
    paths = {"metrics": write_json(out / "metrics.json", body),
             "histogram": write_histogram(out / "hist_all.csv", rep.histogram)}
    for c, h in sorted(rep.per_class_histograms.items()):
        paths[f"histogram_class_{c}"] = write_histogram(out / f"hist_class_{c}.csv", h)
    acc = ", ".join(f"{k}-NN {v:.3f}" for k, v in rep.knn_accuracy.items())
    print(f"eval: margin {rep.margin:.4f} ({rep.evaluation}); {acc}")
    return True, paths


def compare_runs(metrics: list[dict]) -> dict:
    """Group eval reports by (loss, k) and compare SINCERE against SupCon."""
    groups = defaultdict(list)
    for m in metrics:
        groups[(m.get("loss"), m.get("k_classes"))].append(m)
    summary = {}
    for (loss, k), ms in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1] or 0)):
        fl = [m["final_loss"] for m in ms if m.get("final_loss") is not None]
        summary[f"{loss}/k={k}"] = {
            "runs": len(ms),
            "mean_margin": float(np.mean([m["margin"] for m in ms])),
            "mean_final_loss": float(np.mean(fl)) if fl else None,
            "min_knn_accuracy": {kk: min(m["knn_accuracy"][kk] for m in ms) for kk in ms[0]["knn_accuracy"]},
        }
    checks, gaps = {}, {}
    ks = sorted({k for _, k in groups if k is not None})
    for k in ks:
        s, c = summary.get(f"sincere/k={k}"), summary.get(f"supcon/k={k}")
        if s and c:
            checks[f"margin_sincere_gt_supcon/k={k}"] = s["mean_margin"] > c["mean_margin"]
            if s["mean_final_loss"] is not None and c["mean_final_loss"] is not None:
                gaps[k] = c["mean_final_loss"] - s["mean_final_loss"]
                checks[f"loss_sincere_lt_supcon/k={k}"] = gaps[k] > 0
    if len(gaps) >= 2:
        ordered = [gaps[k] for k in sorted(gaps)]
        checks["loss_gap_shrinks_with_k"] = all(a > b for a, b in zip(ordered, ordered[1:]))
    return {"groups": summary, "loss_gap_by_k": {str(k): v for k, v in gaps.items()}, "checks": checks}


def cmd_report(cfg, out: Path, runs=None, strict=False):
    runs = list(runs or cfg["report"]["runs"])
    if not runs:
        raise cfgmod.ConfigError("report needs run directories (positional or report.runs)")
    metrics = [read_json(_require(Path(r) / "metrics.json")) for r in runs]
    body = compare_runs(metrics)
    body.update(runs=[str(r) for r in runs], manifest="manifest_report.json")
    for name, val in body["checks"].items():
        print(f"report: {name} {'yes' if val else 'no'}")
    ok = all(body["checks"].values()) if strict else True
    return ok, {"report": write_json(out / "report.json", body)}


COMMANDS = {"gradcheck": cmd_gradcheck, "oracle": cmd_oracle, "bound": cmd_bound,
            "train": cmd_train, "eval": cmd_eval, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set train.loss=supcon (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="contrastlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gradcheck", parents=[common], help="analytic vs finite-difference gradients") \
        .add_argument("--fault", choices=FAULTS, help="test hook: corrupt the analytic gradients")
    sub.add_parser("oracle", parents=[common], help="closed-form posterior vs enumeration")
    sub.add_parser("bound", parents=[common], help="Monte-Carlo ideal loss vs its floor")
    sub.add_parser("train", parents=[common], help="train embeddings on synthetic data")
    sub.add_parser("eval", parents=[common], help="margins, histograms and kNN accuracy of a run")
    rp = sub.add_parser("report", parents=[common], help="compare evaluated runs")
    rp.add_argument("runs", nargs="*", help="run directories holding metrics.json")
    rp.add_argument("--strict", action="store_true", help="exit 1 when a comparison check fails")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        cfg = cfgmod.load(args.config)
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if getattr(args, "fault", None):
            overrides.append(f'gradcheck.fault="{args.fault}"')
        cfg = cfgmod.apply_overrides(cfg, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "report":
            ok, paths = cmd_report(cfg, out, args.runs, args.strict)
        else:
            ok, paths = COMMANDS[args.command](cfg, out)
    except (cfgmod.ConfigError, ValidationError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_VIOLATION
    except (OSError, ValueError) as e:
        print(f"file error: {e}", file=sys.stderr)
        return EXIT_IO
    manifest = {"command": args.command, "config": cfg, "seed": cfg["seed"], "version": __version__,
                "outputs": {k: str(p) for k, p in sorted(paths.items())},
                "duration_seconds": time.perf_counter() - start, "ok": ok}
    write_json(out / f"manifest_{args.command}.json", manifest)
    return EXIT_OK if ok else EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())

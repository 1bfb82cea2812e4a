"""End-to-end experiment orchestration.

A run directory is laid out as:

    dataset/trials.csv, trial_kinds.csv, manifest.json
    run_00/ ... run_{R-1}/
        run_record.json            split ids, seeds, norm stats, timings
        bundles/{MODEL}.bundle
        histories/{MODEL}.csv
        report.json                per-repetition metrics
        traces/{MODEL}.csv         when emit_traces
        ball_hand.csv              when emit_traces
        predictions/PSC.csv        when emit_predictions
    reports/
        mean_report.json           cross-repetition means + pooled decisions
        accuracy_curves.csv
        decisions.csv
        summary.txt                decision-time table + final accuracies

Every repetition draws a fresh split (seed derived from the master seed
and the repetition index), re-normalizes, and retrains every roster model
on identical splits. All summary artifacts are byte-deterministic for a
fixed (seed, config); wall-clock timings live only in run_record.json.
"""
from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import metrics, pipeline, psc, synth, tcn, trial_io
from .bundle_io import load_bundle, save_bundle
from .config import ExperimentConfig
from .errors import DataFormatError, TrainingDivergedError
from .lstm import LstmModelConfig, train_model
from .metrics import DecisionThresholds, MetricsReport
from .rng import derive_seed, make_rng

LSTM_MODELS = ("MTO", "MTM", "HYB")
TCN_MODELS = ("TCN10", "TCN30", "TCN60")


def _rep_dir(out: Path, rep: int) -> Path:
    return out / f"run_{rep:02d}"


# ----------------------------------------------------------------------
# generate


def cmd_generate(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir) / "dataset"
    out.mkdir(parents=True, exist_ok=True)
    trials = synth.generate_dataset(cfg.synth, cfg.master_seed)
    trial_io.write_trials(out / "trials.csv", trials)
    with open(out / "trial_kinds.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("trial_id,drop_kind\n")
        for t in trials:
            fh.write(f"{t.trial_id},{t.drop_kind}\n")
    trial_io.write_manifest(out / "manifest.json", seed=cfg.master_seed,
                            cfg_hash=cfg.config_hash(),
                            files=["trials.csv", "trial_kinds.csv"],
                            n_trials=len(trials))
    return out


def load_dataset(cfg: ExperimentConfig) -> list[pipeline.RawTrial]:
    dataset = Path(cfg.out_dir) / "dataset"
    manifest = trial_io.read_manifest(dataset / "manifest.json")
    trials = trial_io.read_trials(dataset / manifest["files"][0])
    kinds_path = dataset / "trial_kinds.csv"
    if kinds_path.exists():
        kinds = {}
        for line in kinds_path.read_text(encoding="utf-8").splitlines()[1:]:
            if line:
                tid, kind = line.split(",")
                kinds[tid] = kind
        for t in trials:
            t.drop_kind = kinds.get(t.trial_id, t.drop_kind)
    return trials


# ----------------------------------------------------------------------
# train


def _lstm_config(cfg: ExperimentConfig, variant: str) -> LstmModelConfig:
    overrides = {}
    if cfg.lstm_epochs is not None:
        overrides["epochs"] = cfg.lstm_epochs
    return LstmModelConfig.for_variant(variant, **overrides)


def _tcn_config(cfg: ExperimentConfig, name: str) -> tcn.TcnConfig:
    overrides = {}
    if cfg.tcn_epochs is not None:
        overrides["epochs"] = cfg.tcn_epochs
    return tcn.tcn_config(name, **overrides)


def _required_trainings(models: tuple[str, ...]) -> list[str]:
    needed = []
    for m in LSTM_MODELS:
        if m in models or (m == "MTM" and "PSC" in models):
            needed.append(m)
    if "PSC" in models:
        needed.append("PREDICTOR")
    needed += [m for m in TCN_MODELS if m in models]
    return needed


def _write_history(path: Path, history: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for i, (tr, va) in enumerate(zip(history["train_loss"], history["val_loss"])):
            fh.write(f"{i},{tr:.12g},{va:.12g}\n")


def cmd_train(cfg: ExperimentConfig, trials: list[pipeline.RawTrial] | None = None) -> list[dict]:
    """Train every roster model for every repetition; returns run records.

    A diverging model is recorded as a failure and the remaining models
    still train; callers translate failures into a nonzero exit code.
    """
    out = Path(cfg.out_dir)
    if trials is None:
        trials = load_dataset(cfg)
    processed = pipeline.preprocess(trials)
    records = []
    for rep in range(cfg.repetitions):
        rep_seed = derive_seed("rep", cfg.master_seed, rep)
        splits = pipeline.split_dataset(processed, make_rng(rep_seed))
        norm_splits, stats = pipeline.normalize(splits)
        train_arrays = pipeline.to_arrays(norm_splits.train)
        val_arrays = pipeline.to_arrays(norm_splits.validation)
        split_ids = {
            "train": [t.trial_id for t in splits.train],
            "validation": [t.trial_id for t in splits.validation],
            "test": [t.trial_id for t in splits.test],
        }
        split_hash = f"{derive_seed('split', *(tuple(v) for v in split_ids.values())):016x}"

        rep_dir = _rep_dir(out, rep)
        (rep_dir / "bundles").mkdir(parents=True, exist_ok=True)
        (rep_dir / "histories").mkdir(exist_ok=True)
        record = {
            "repetition": rep,
            "rep_seed": rep_seed,
            "split": split_ids,
            "split_hash": split_hash,
            "norm_stats": {"mean": stats.mean.tolist(), "std": stats.std.tolist()},
            "model_seeds": {}, "bundles": {}, "histories": {},
            "failures": {}, "timings": {},
        }
        for name in _required_trainings(cfg.models):
            seed = derive_seed("model", rep_seed, name)
            record["model_seeds"][name] = seed
            started = time.perf_counter()
            try:
                if name in LSTM_MODELS + ("PREDICTOR",):
                    bundle, history = train_model(
                        _lstm_config(cfg, name), train_arrays, val_arrays, make_rng(seed))
                else:
                    bundle, history = tcn.train_tcn(
                        _tcn_config(cfg, name), train_arrays, val_arrays, make_rng(seed))
            except TrainingDivergedError as exc:
                record["failures"][name] = str(exc)
                continue
            finally:
                record["timings"][name] = time.perf_counter() - started
            bundle.seed = seed
            bundle_path = rep_dir / "bundles" / f"{name}.bundle"
            save_bundle(bundle_path, bundle)
            _write_history(rep_dir / "histories" / f"{name}.csv", history)
            record["bundles"][name] = str(bundle_path.relative_to(out))
            record["histories"][name] = str((rep_dir / "histories" / f"{name}.csv").relative_to(out))
        if "PSC" in cfg.models and "MTM" in record["bundles"] and "PREDICTOR" in record["bundles"]:
            # the classifier is the trained MTM model; persisted under the PSC name too
            mtm = load_bundle(out / record["bundles"]["MTM"])
            save_bundle(rep_dir / "bundles" / "PSC_classifier.bundle", mtm)
            record["bundles"]["PSC_classifier"] = str(
                (rep_dir / "bundles" / "PSC_classifier.bundle").relative_to(out))
            record["bundles"]["PSC_predictor"] = record["bundles"]["PREDICTOR"]
        with open(rep_dir / "run_record.json", "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
        records.append(record)
    return records


# ----------------------------------------------------------------------
# evaluate


def _model_under_eval(cfg: ExperimentConfig, name: str, out: Path, record: dict):
    if name == "PSC":
        classifier = load_bundle(out / record["bundles"]["PSC_classifier"])
        predictor = load_bundle(out / record["bundles"]["PSC_predictor"])
        return psc.PscConfig(classifier=classifier, predictor=predictor,
                             warmup_steps=cfg.warmup_steps,
                             seq_len=pipeline.SEQ_LEN)
    return load_bundle(out / record["bundles"][name])


def _normalized_test_split(record: dict, processed: list[pipeline.ProcessedTrial]):
    stats = pipeline.NormStats(np.array(record["norm_stats"]["mean"]),
                               np.array(record["norm_stats"]["std"]))
    by_id = {t.trial_id: t for t in processed}
    missing = [tid for tid in record["split"]["test"] if tid not in by_id]
    if missing:
        raise DataFormatError(f"test trials missing from dataset: {missing[:5]}")
    test = [by_id[tid] for tid in record["split"]["test"]]
    from dataclasses import replace
    return [replace(t, features=(t.features - stats.mean) / stats.std) for t in test]


def _write_traces(path: Path, evals: list[metrics.TrialEvaluation]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("trial_id,history_step,output,is_warmup\n")
        for ev in evals:
            warm = ev.is_warmup if ev.is_warmup is not None else np.zeros(len(ev.trace), bool)
            for step, (y, w) in enumerate(zip(ev.trace, warm), start=1):
                fh.write(f"{ev.trial_id},{step},{y:.9g},{int(w)}\n")


def _write_ball_hand(path: Path, test_trials) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("trial_id,frame,distance\n")
        for t in test_trials:
            for k in range(t.absolute_tail.shape[0]):
                fh.write(f"{t.trial_id},{k},{metrics.ball_hand_distance(t, k):.9g}\n")


def _write_psc_predictions(path: Path, cfg_psc: psc.PscConfig, test_trials) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        n_feat = test_trials[0].features.shape[1] if test_trials else 0
        cols = ",".join(f"f{i}" for i in range(n_feat))
        fh.write(f"trial_id,history_step,roll_step,{cols}\n")
        for t in test_trials:
            trace = psc.psc_classify(cfg_psc, t.features, collect_predictions=True)
            for step, rolled in enumerate(trace.predictions, start=1):
                if rolled is None:
                    continue
                for j, frame in enumerate(rolled, start=step + 1):
                    vals = ",".join(f"{v:.9g}" for v in frame)
                    fh.write(f"{t.trial_id},{step},{j},{vals}\n")


def cmd_evaluate(cfg: ExperimentConfig, trials: list[pipeline.RawTrial] | None = None) -> dict:
    """Evaluate persisted bundles on each repetition's test split."""
    out = Path(cfg.out_dir)
    if trials is None:
        trials = load_dataset(cfg)
    processed = pipeline.preprocess(trials)
    thresholds = DecisionThresholds(theta_hi=cfg.theta_hi, theta_lo=cfg.theta_lo)

    per_rep = []
    for rep in range(cfg.repetitions):
        rep_dir = _rep_dir(out, rep)
        record = json.loads((rep_dir / "run_record.json").read_text(encoding="utf-8"))
        test = _normalized_test_split(record, processed)
        rep_report: dict = {"repetition": rep, "n_test": len(test),
                            "split_hash": record["split_hash"], "models": {}}
        rep_evals = {}
        for name in cfg.models:
            if name not in record["bundles"] and name != "PSC":
                continue
            if name == "PSC" and "PSC_classifier" not in record["bundles"]:
                continue
            model = _model_under_eval(cfg, name, out, record)
            evals = metrics.evaluate_model(model, test, thresholds, workers=cfg.workers)
            rep_report["models"][name] = _report_with_kinds(evals, thresholds)
            rep_evals[name] = evals
            if cfg.emit_traces:
                (rep_dir / "traces").mkdir(exist_ok=True)
                _write_traces(rep_dir / "traces" / f"{name}.csv", evals)
            if cfg.emit_predictions and name == "PSC":
                (rep_dir / "predictions").mkdir(exist_ok=True)
                _write_psc_predictions(rep_dir / "predictions" / "PSC.csv", model, test)
        if cfg.emit_traces:
            _write_ball_hand(rep_dir / "ball_hand.csv", test)
        with open(rep_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(rep_report, fh, indent=2, sort_keys=True)
        per_rep.append(rep_report)

    mean_report = _mean_report(cfg, per_rep)
    reports_dir = out / "reports"
    reports_dir.mkdir(exist_ok=True)
    with open(reports_dir / "mean_report.json", "w", encoding="utf-8") as fh:
        json.dump(mean_report, fh, indent=2, sort_keys=True)
    _write_curves_csv(reports_dir / "accuracy_curves.csv", mean_report)
    _write_decisions_csv(reports_dir / "decisions.csv", mean_report)
    (reports_dir / "summary.txt").write_text(render_summary(mean_report), encoding="utf-8")
    return mean_report


def _report_with_kinds(evals, thresholds) -> dict:
    agg = metrics.aggregate(evals, thresholds)
    rep = agg.to_dict()
    rep["ttd_values"] = [int(v) for v in agg.ttd_values]
    # decisions made strictly before each trial's contact frame, catch/miss subset
    cm = [e for e in evals if e.drop_kind in ("catch", "miss")]
    early = 0
    for e in cm:
        d = metrics.ttd(e.trace, thresholds)
        if d is not None and e.contact_frame is not None and d <= e.contact_frame:
            early += 1
    rep["catch_miss_trials"] = len(cm)
    rep["early_decisions_catch_miss"] = early
    return rep


def _mean_report(cfg: ExperimentConfig, per_rep: list[dict]) -> dict:
    models: dict = {}
    for name in cfg.models:
        reps = [r["models"][name] for r in per_rep if name in r["models"]]
        if not reps:
            continue
        t_len = len(reps[0]["accuracy50"])
        acc50 = np.mean([r["accuracy50"] for r in reps], axis=0)
        acc75 = np.mean([r["accuracy75"] for r in reps], axis=0)
        dec75 = np.mean([r["accuracy75_decisive_count"] for r in reps], axis=0)
        pooled_ttd = [v for r in reps for v in r["ttd_values"]]
        pooled_ttcd_n = sum(r["n_correct_decisions"] for r in reps)
        # pooled TTcD mean reconstructed from per-rep sums
        ttcd_sum = sum((r["mttcd_steps"] or 0.0) * r["n_correct_decisions"] for r in reps)
        models[name] = {
            "repetitions": len(reps),
            "accuracy50_mean": [float(v) for v in acc50],
            "accuracy75_mean": [float(v) for v in acc75],
            "accuracy75_decisive_count_mean": [float(v) for v in dec75],
            "accuracy50_full_history": float(acc50[-1]),
            "accuracy75_full_history": float(acc75[-1]),
            "n_decisions_pooled": len(pooled_ttd),
            "mttd_ms_pooled": (float(np.mean(pooled_ttd)) * metrics.MS_PER_STEP
                               if pooled_ttd else None),
            "n_correct_decisions_pooled": pooled_ttcd_n,
            "mttcd_ms_pooled": (ttcd_sum / pooled_ttcd_n * metrics.MS_PER_STEP
                                if pooled_ttcd_n else None),
            "per_rep_mttd_ms": [r["mttd_ms"] for r in reps],
            "per_rep_mttcd_ms": [r["mttcd_ms"] for r in reps],
            "per_rep_n_decisions": [r["n_decisions"] for r in reps],
            "per_rep_n_correct": [r["n_correct_decisions"] for r in reps],
            "seq_len": t_len,
        }
    return {
        "schema": "earlycast-report/1",
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "repetitions": cfg.repetitions,
        "n_test_per_rep": [r["n_test"] for r in per_rep],
        "contact_reference_ms": metrics.CONTACT_REFERENCE_MS,
        "models": models,
    }


def _write_curves_csv(path: Path, mean_report: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,threshold,history_step,accuracy,decisive_count\n")
        for name, rep in mean_report["models"].items():
            n = mean_report["n_test_per_rep"][0]
            for step in range(rep["seq_len"]):
                fh.write(f"{name},50,{step + 1},{rep['accuracy50_mean'][step]:.9g},{n}\n")
            for step in range(rep["seq_len"]):
                fh.write(f"{name},75,{step + 1},{rep['accuracy75_mean'][step]:.9g},"
                         f"{rep['accuracy75_decisive_count_mean'][step]:.9g}\n")


def _fmt_ms(ms, delta) -> str:
    if ms is None:
        return "—"
    return f"{ms:.1f} ({delta:+.1f})"


def _write_decisions_csv(path: Path, mean_report: dict) -> None:
    ref = mean_report["contact_reference_ms"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,n_decisions,mttd_ms,mttd_delta_ms,n_correct,mttcd_ms,mttcd_delta_ms\n")
        for name, rep in mean_report["models"].items():
            mttd = rep["mttd_ms_pooled"]
            mttcd = rep["mttcd_ms_pooled"]
            fh.write(",".join([
                name, str(rep["n_decisions_pooled"]),
                "" if mttd is None else f"{mttd:.9g}",
                "" if mttd is None else f"{mttd - ref:.9g}",
                str(rep["n_correct_decisions_pooled"]),
                "" if mttcd is None else f"{mttcd:.9g}",
                "" if mttcd is None else f"{mttcd - ref:.9g}",
            ]) + "\n")


def render_summary(mean_report: dict) -> str:
    """Text table of decision counts and times plus final accuracies."""
    ref = mean_report["contact_reference_ms"]
    rows = [("Model", "No. decisions", "MTTD [ms]", "No. correct", "MTTcD [ms]")]
    for name, rep in mean_report["models"].items():
        mttd, mttcd = rep["mttd_ms_pooled"], rep["mttcd_ms_pooled"]
        rows.append((name, str(rep["n_decisions_pooled"]),
                     _fmt_ms(mttd, None if mttd is None else mttd - ref),
                     str(rep["n_correct_decisions_pooled"]),
                     _fmt_ms(mttcd, None if mttcd is None else mttcd - ref)))
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = ["Decision times, pooled over repetitions "
             f"(reference: first ball contact at {ref:.0f} ms)", ""]
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("-" * (sum(widths) + 8))
    lines.append("")
    lines.append("Accuracy at full history (mean over repetitions)")
    for name, rep in mean_report["models"].items():
        lines.append(f"  {name}: 50% threshold {rep['accuracy50_full_history']:.4f}, "
                     f"75% threshold {rep['accuracy75_full_history']:.4f}")
    lines.append("")
    lines.append(f"N test trials per repetition: {mean_report['n_test_per_rep']}")
    return "\n".join(lines) + "\n"


def cmd_all(cfg: ExperimentConfig) -> dict:
    cmd_generate(cfg)
    cmd_train(cfg)
    return cmd_evaluate(cfg)

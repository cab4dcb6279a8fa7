"""Batch CLI: label, featurize, train, loso, predict, stats, report, synth.

Exit codes: 0 ok, 2 malformed/missing input, 3 numeric failure, 4 fold
failure, 5 artifact mismatch. All subcommands are deterministic: identical
inputs and seed produce byte-identical outputs.

The default seed comes from SCRATCHQ_SEED when set. A JSON config file
(--config) may supply any long-option value; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import dataset_io, evaluation, labeling, synth
from .errors import (ArtifactError, FoldFailure, InputError, NumericError,
                     SchemaMismatch, TaskMismatch)
from .evaluation import ABLATION_BOTH, ABLATIONS, to_vas_linear, to_vas_sqrt
from .features import MinMaxScaler, Task, extract_feature_matrix
from .mlp import MlpConfig, preset_config, train_model
from .signal_core import ACC_RATE_HZ, CM_RATE_HZ, Channel, TimeSeries

ENV_SEED = "SCRATCHQ_SEED"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_FOLD = 4
EXIT_ARTIFACT = 5


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _default_seed() -> int:
    try:
        return int(os.environ.get(ENV_SEED, "0"))
    except ValueError:
        return 0


def _parse_override(text: str) -> tuple[str, object]:
    """Type-check one key=value override against MlpConfig's fields."""
    if "=" not in text:
        raise InputError(f"override {text!r} must look like key=value")
    key, value = text.split("=", 1)
    fields = MlpConfig.__dataclass_fields__
    if key not in fields:
        raise InputError(f"unknown config key {key!r}; "
                         f"choose from {sorted(fields)}")
    if key == "layer_sizes":
        try:
            return key, [int(v) for v in value.split(",")]
        except ValueError:
            raise InputError(f"layer_sizes must be comma-separated ints, got {value!r}") from None
    target = fields[key].type
    try:
        if target == "int":
            return key, int(value)
        if target == "float":
            return key, float(value)
        return key, value
    except ValueError:
        raise InputError(f"bad value {value!r} for {key} (expected {target})") from None


def _build_config(task: Task, input_dim: int, seed: int,
                  overrides: list[str]) -> MlpConfig:
    config = preset_config(task, input_dim=input_dim, seed=seed)
    parsed = dict(_parse_override(o) for o in overrides or [])
    return config.override(**parsed) if parsed else config


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# --- label ---------------------------------------------------------------------

def cmd_label(args) -> int:
    rows: list[tuple[str, labeling.PowerLabel]] = []
    activity_rows: list[list] = []
    for source in args.inputs:
        source = Path(source)
        if source.suffix == ".json":
            session = dataset_io.load_session(dataset_io.load_manifest(source))
            if session.tablet is None:
                raise SchemaMismatch(f"{source}: manifest has no tablet stream")
            pid = session.manifest.participant_id
            for span in session.manifest.activities or [
                    dataset_io.ActivitySpan("", session.tablet.t[0] if len(session.tablet) else 0.0,
                                            session.tablet.t[-1] if len(session.tablet) else 0.0)]:
                t = session.tablet.t
                sel = (t >= span.start_s) & (t < span.end_s)
                block = labeling.ContactTrace(
                    t[sel], session.tablet.x[sel], session.tablet.y[sel],
                    session.tablet.force[sel],
                    block_length_s=span.end_s - span.start_s)
                for lab in labeling.label_block(block):
                    rows.append((pid, lab))
                    activity_rows.append([pid, span.name, _fmt(lab.window_start),
                                          _fmt(lab.power), "1" if lab.valid else "0"])
        else:
            trace = dataset_io.read_tablet_csv(source, args.block_length)
            if len(trace) == 0:
                raise SchemaMismatch(f"{source}: no rows")
            pid = args.participant or source.stem
            for lab in labeling.label_block(trace):
                rows.append((pid, lab))

    dataset_io.write_labels_csv(args.out, rows)
    if activity_rows:
        sidecar = Path(args.out).with_name(Path(args.out).stem + "_activities.csv")
        _write_csv(sidecar, ["participant", "activity", "window_start_s",
                             "power_mw", "valid"], activity_rows)
    n_valid = sum(1 for _, lab in rows if lab.valid)
    print(f"labeled {len(rows)} windows: valid={n_valid} invalid={len(rows) - n_valid}")
    return EXIT_OK


# --- featurize -------------------------------------------------------------------

def cmd_featurize(args) -> int:
    task = Task(args.task)
    sessions = [dataset_io.load_session(dataset_io.load_manifest(m))
                for m in args.manifests]
    dataset = dataset_io.featurize_sessions(sessions, task, stride_s=args.stride)
    dataset_io.save_features(args.out, dataset)
    print(f"featurized {len(dataset)} windows x {dataset.x.shape[1]} dims "
          f"({task.value}, {len(set(dataset.participants.tolist()))} participants)")
    return EXIT_OK


# --- train -----------------------------------------------------------------------

def cmd_train(args) -> int:
    dataset = dataset_io.load_features(args.features)
    config = _build_config(dataset.task, dataset.x.shape[1], args.seed,
                           args.override)
    scaler = MinMaxScaler.fit(dataset.x)
    model = train_model(config, scaler.transform(dataset.x), dataset.y,
                        scaler=scaler)
    dataset_io.save_model(args.out, model, dataset.task)
    history_path = args.history or str(Path(args.out).with_suffix(".history.csv"))
    header = ["epoch", "train_loss"] + (["eval_loss"] if model.history and
                                        "eval_loss" in model.history[0] else [])
    _write_csv(history_path, header,
               [[rec["epoch"]] + [_fmt(rec[k]) for k in header[1:]]
                for rec in model.history])
    print(f"trained {dataset.task.value} model on {len(dataset)} samples "
          f"-> {args.out}")
    return EXIT_OK


# --- loso ------------------------------------------------------------------------

def cmd_loso(args) -> int:
    dataset = dataset_io.load_features(args.features)
    columns = evaluation.ablation_columns(dataset.task, args.ablation)
    config = _build_config(dataset.task, len(columns), args.seed, args.override)
    report = evaluation.run_loso(dataset, config, ablation=args.ablation,
                                 jobs=args.jobs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    metric_names = sorted(report.folds[0].metrics)
    _write_csv(out_dir / "per_fold.csv",
               ["participant", "n_test"] + metric_names,
               [[f.held_out_participant, f.n_test] +
                [_fmt(f.metrics[m]) for m in metric_names]
                for f in report.folds])
    _write_csv(out_dir / "aggregate.csv",
               ["metric", "mean", "std"],
               [[m, _fmt(mean), _fmt(std)]
                for m, (mean, std) in sorted(report.aggregate().items())])
    sample_rows = []
    for f in report.folds:
        for yt, yp in zip(f.y_true, f.y_pred):
            sample_rows.append([f.held_out_participant, _fmt(float(yt)),
                                _fmt(float(yp))])
    _write_csv(out_dir / "per_sample.csv",
               ["participant", "y_true", "y_pred"], sample_rows)
    if dataset.task is Task.DETECTION:
        _write_csv(out_dir / "per_interaction.csv",
                   ["interaction", "accuracy_pct"],
                   [[name, _fmt(acc)]
                    for name, acc in report.interaction_table().items()])
    for m, (mean, std) in sorted(report.aggregate().items()):
        print(f"{m}: {mean:.4f} +/- {std:.4f}")
    return EXIT_OK


# --- predict ---------------------------------------------------------------------

def cmd_predict(args) -> int:
    model, task = dataset_io.load_model(args.model)
    if args.task is not None and Task(args.task) is not task:
        raise TaskMismatch(f"model is a {task.value} artifact, "
                           f"--task requested {args.task}")
    vas_map = to_vas_linear if args.vas == "linear" else to_vas_sqrt
    rows = []
    for manifest_path in args.manifests:
        session = dataset_io.load_session(dataset_io.load_manifest(manifest_path))
        windows = dataset_io.session_windows(session, stride_s=args.stride)
        if not windows:
            continue
        x = extract_feature_matrix(windows, task)
        pred = np.atleast_1d(model.predict(x))
        source = Path(manifest_path).stem
        for w, p in zip(windows, pred):
            row = [w.participant_id, source, _fmt(w.start_time), w.activity]
            if task is Task.DETECTION:
                row.append(_fmt(float(p)))
            else:
                row.append(_fmt(float(p)))
                row.append(_fmt(vas_map(max(float(p), 0.0))))
            rows.append(row)
    header = ["participant", "source", "window_start_s", "activity"]
    header += ["scratch_prob"] if task is Task.DETECTION else ["power_mw", "vas_units"]
    _write_csv(args.out, header, rows)
    print(f"wrote {len(rows)} predictions -> {args.out}")
    return EXIT_OK


# --- stats -----------------------------------------------------------------------

def _read_table(paths) -> list[dict]:
    rows = []
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise InputError(f"missing input {path}")
        with open(path, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    if not rows:
        raise InputError("no data rows in input")
    return rows


def _group_sort_key(value: str):
    try:
        return (0, float(value))
    except ValueError:
        return (1, value)


def cmd_stats(args) -> int:
    rows = _read_table(args.inputs)
    pair_cols = args.pair_col.split(",") if args.pair_col else []
    for col in [args.value_col, args.group_col] + pair_cols:
        if col not in rows[0]:
            raise InputError(f"column {col!r} not in input (has {sorted(rows[0])})")

    # mean value per (pair key, group)
    cells: dict[tuple, dict[str, list[float]]] = {}
    for row in rows:
        key = tuple(row[c] for c in pair_cols)
        try:
            value = float(row[args.value_col])
        except ValueError:
            raise InputError(f"non-numeric {args.value_col!r} value "
                             f"{row[args.value_col]!r}") from None
        cells.setdefault(key, {}).setdefault(row[args.group_col], []).append(value)
    means = {key: {g: float(np.mean(v)) for g, v in groups.items()}
             for key, groups in cells.items()}
    groups = sorted({g for m in means.values() for g in m}, key=_group_sort_key)
    if args.normalize:
        for key, per_group in means.items():
            vals = np.array(list(per_group.values()))
            lo, hi = vals.min(), vals.max()
            span = hi - lo if hi > lo else 1.0
            means[key] = {g: (v - lo) / span for g, v in per_group.items()}

    out_rows = []
    if args.test == "wilcoxon":
        for ga, gb in zip(groups, groups[1:]):
            keys = sorted(k for k in means if ga in means[k] and gb in means[k])
            a = np.array([means[k][ga] for k in keys])
            b = np.array([means[k][gb] for k in keys])
            res = evaluation.wilcoxon_signed_rank(a, b)
            out_rows.append(["wilcoxon", ga, gb, _fmt(res.statistic),
                             _fmt(res.p_value), res.n])
        header = ["test", "group_a", "group_b", "statistic", "p_value", "n"]
    else:
        xs, ys = [], []
        for key, per_group in sorted(means.items()):
            for g, v in per_group.items():
                try:
                    xs.append(float(g))
                except ValueError:
                    xs.append(float(groups.index(g)))
                ys.append(v)
        res = evaluation.spearman(np.array(xs), np.array(ys))
        out_rows.append(["spearman", "", "", _fmt(res.statistic),
                         _fmt(res.p_value), res.n])
        header = ["test", "group_a", "group_b", "statistic", "p_value", "n"]
    _write_csv(args.out, header, out_rows)
    for row in out_rows:
        print(f"{row[0]} {row[1]}..{row[2]}: statistic={row[3]} p={row[4]} n={row[5]}")
    return EXIT_OK


# --- report ----------------------------------------------------------------------

_LEVEL_RE = re.compile(r"(\d+)\s*$")

POWER_BINS = [(0, 100), (100, 200), (200, 300), (300, 400), (400, 500), (500, 600)]


def cmd_report(args) -> int:
    report_dir = Path(args.report_dir)
    labels_path = report_dir / "labels.csv"
    activities_path = report_dir / "labels_activities.csv"
    samples_path = report_dir / "per_sample.csv"
    produced = []

    if labels_path.exists():
        rows = dataset_io.read_labels_csv(labels_path)
        valid = [lab for _, lab in rows if lab.valid]
        out = [["overall", len(valid), len(rows) - len(valid)]]
        if valid:
            forces = np.array([lab.mean_force for lab in valid])
            vels = np.array([lab.mean_velocity for lab in valid])
            powers = np.array([lab.power for lab in valid])
            out[0] += [_fmt(float(a)) for a in
                       (forces.mean(), forces.std(), vels.mean(), vels.std(),
                        powers.mean(), powers.std())]
        else:
            out[0] += [""] * 6
        _write_csv(report_dir / "label_summary.csv",
                   ["group", "n_valid", "n_invalid", "force_mean", "force_sd",
                    "velocity_mean", "velocity_sd", "power_mean", "power_sd"],
                   out)
        produced.append("label_summary.csv")

    if samples_path.exists():
        with open(samples_path, newline="") as fh:
            samples = list(csv.DictReader(fh))
        y = np.array([float(r["y_true"]) for r in samples])
        err = np.abs(y - np.array([float(r["y_pred"]) for r in samples]))
        rows = []
        for lo, hi in POWER_BINS:
            sel = (y >= lo) & (y < hi) if hi < 600 else (y >= lo) & (y <= hi)
            rows.append([f"{lo}-{hi}", int(sel.sum()),
                         _fmt(float(err[sel].mean())) if sel.any() else "",
                         _fmt(float(err[sel].std())) if sel.any() else ""])
        _write_csv(report_dir / "error_by_range.csv",
                   ["label_range_mw", "n", "mae_mw", "sd_mw"], rows)
        produced.append("error_by_range.csv")

    if activities_path.exists():
        with open(activities_path, newline="") as fh:
            acts = list(csv.DictReader(fh))
        per_participant: dict[str, list[tuple[float, float]]] = {}
        for row in acts:
            if row["valid"] != "1" or not row["power_mw"]:
                continue
            match = _LEVEL_RE.search(row["activity"])
            if not match:
                continue
            # instructed 1-5 mapped onto the 0-10 scale by x2
            per_participant.setdefault(row["participant"], []).append(
                (2.0 * float(match.group(1)), float(row["power_mw"])))
        fit_rows = []
        slopes, intercepts = [], []
        for pid in sorted(per_participant):
            pts = per_participant[pid]
            if len({x for x, _ in pts}) < 2:
                continue
            x = np.array([p[0] for p in pts])
            yv = np.array([p[1] for p in pts])
            slope, intercept = np.polyfit(x, yv, 1)
            slopes.append(slope)
            intercepts.append(intercept)
            fit_rows.append([pid, _fmt(float(slope)), _fmt(float(intercept)), len(pts)])
        if fit_rows:
            fit_rows.append(["mean", _fmt(float(np.mean(slopes))),
                             _fmt(float(np.mean(intercepts))), ""])
            fit_rows.append(["sd", _fmt(float(np.std(slopes, ddof=1)) if len(slopes) > 1 else 0.0),
                             _fmt(float(np.std(intercepts, ddof=1)) if len(intercepts) > 1 else 0.0),
                             ""])
            _write_csv(report_dir / "participant_scales.csv",
                       ["participant", "slope_mw_per_unit", "intercept_mw", "n"],
                       fit_rows)
            produced.append("participant_scales.csv")

    if not produced:
        raise InputError(f"{report_dir}: no labels.csv, labels_activities.csv, "
                         "or per_sample.csv to report on")
    print(f"wrote {', '.join(produced)} in {report_dir}")
    return EXIT_OK


# --- synth -----------------------------------------------------------------------

def _load_spec(args) -> dict:
    text = Path(args.spec).read_text() if Path(args.spec).exists() else args.spec
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"spec is not valid JSON: {exc}") from None
    if not isinstance(data, dict) or "kind" not in data:
        raise InputError("spec must be a JSON object with a 'kind' key")
    return data


def cmd_synth(args) -> int:
    data = _load_spec(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = data.pop("kind")

    if kind == "contact_trace":
        try:
            spec = synth.SyntheticScratchSpec.from_dict(data)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad contact_trace spec: {exc}") from None
        trace, truth = synth.gen_contact_trace(spec)
        dataset_io.write_tablet_csv(out_dir / "trace.csv", trace)
        _write_csv(out_dir / "truth.csv", ["window_start_s", "true_power_mw"],
                   [[_fmt(float(k)), _fmt(float(p))] for k, p in enumerate(truth)])
        print(f"wrote trace.csv ({len(trace)} samples) and truth.csv in {out_dir}")
        return EXIT_OK

    if kind == "sensor_session":
        try:
            pid = data["participant_id"]
            session_kind = data.get("session_kind", "detection")
            blocks = data["blocks"]
            seed = int(data.get("seed", 0))
        except KeyError as exc:
            raise InputError(f"sensor_session spec missing {exc}") from None
        cm_parts, acc_parts, spans, label_rows = [], [], [], []
        t_cursor = 0.0
        for bi, block in enumerate(blocks):
            seconds = int(block.get("seconds", 1))
            tones = [tuple(t) for t in block.get("tones", [])]
            noise = float(block.get("noise_sd", 0.0))
            for s in range(seconds):
                w = synth.gen_sensor_window(tones, noise, seed=seed + 1000 * bi + s)
                cm_parts.append(w.cm)
                acc_parts.append(w.acc_z)
            spans.append(dataset_io.ActivitySpan(
                block.get("activity", f"block{bi}"), t_cursor,
                t_cursor + seconds, block.get("scratch")))
            if "label_mw" in block:
                for s in range(seconds):
                    label_rows.append((pid, labeling.PowerLabel(
                        t_cursor + s, 1.0, float(block["label_mw"]),
                        float(block["label_mw"]), True)))
            t_cursor += seconds
        cm_vals = np.concatenate(cm_parts)
        acc_vals = np.concatenate(acc_parts)
        dataset_io.write_sensor_csv(out_dir / "cm.csv", TimeSeries(
            np.arange(len(cm_vals)) / CM_RATE_HZ, cm_vals,
            Channel.CONTACT_MIC, CM_RATE_HZ))
        dataset_io.write_sensor_csv(out_dir / "acc.csv", TimeSeries(
            np.arange(len(acc_vals)) / ACC_RATE_HZ, acc_vals,
            Channel.ACC_Z, ACC_RATE_HZ))
        labels_path = None
        if label_rows:
            labels_path = out_dir / "labels.csv"
            dataset_io.write_labels_csv(labels_path, label_rows)
        manifest = dataset_io.SessionManifest(
            participant_id=pid, kind=session_kind,
            cm_path=out_dir / "cm.csv", acc_path=out_dir / "acc.csv",
            labels_path=labels_path, activities=spans)
        dataset_io.write_manifest(out_dir / "manifest.json", manifest)
        print(f"wrote cm.csv, acc.csv, manifest.json in {out_dir}")
        return EXIT_OK

    raise InputError(f"unknown synth kind {kind!r}")


# --- parser ----------------------------------------------------------------------

def build_parser(config_defaults: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scratchq",
        description="Scratch intensity labeling, feature extraction, model "
                    "training, LOSO evaluation, and reporting.")
    parser.add_argument("--config", help="JSON file of default option values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="tablet traces -> power labels CSV")
    p.add_argument("inputs", nargs="+",
                   help="tablet CSV files or session manifest JSONs")
    p.add_argument("--out", required=True)
    p.add_argument("--participant", default=None,
                   help="participant id for bare CSV inputs (default: file stem)")
    p.add_argument("--block-length", type=float, default=None)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("featurize", help="session manifests -> feature artifact")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--task", required=True, choices=[t.value for t in Task])
    p.add_argument("--stride", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="feature artifact -> trained model artifact")
    p.add_argument("features")
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None, help="history CSV path")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--override", action="append", default=[],
                   metavar="KEY=VALUE", help="MlpConfig override, repeatable")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("loso", help="leave-one-subject-out evaluation -> report dir")
    p.add_argument("features")
    p.add_argument("--ablation", choices=ABLATIONS, default=ABLATION_BOTH)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("predict", help="sliding-window inference over sessions")
    p.add_argument("model")
    p.add_argument("--manifest", dest="manifests", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vas", choices=["linear", "sqrt"], default="linear")
    p.add_argument("--stride", type=float, default=0.25)
    p.add_argument("--task", choices=[t.value for t in Task], default=None,
                   help="fail with exit 5 if the artifact is for another task")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("stats", help="signed-rank / rank-correlation tests on CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--test", choices=["wilcoxon", "spearman"], required=True)
    p.add_argument("--value-col", default="power_mw")
    p.add_argument("--group-col", required=True)
    p.add_argument("--pair-col", default="participant",
                   help="comma-separated columns identifying a paired unit")
    p.add_argument("--normalize", action="store_true",
                   help="min-max normalize values within each paired unit first")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="summaries: label stats, error by range, scales")
    p.add_argument("report_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="generate synthetic fixtures from a JSON spec")
    p.add_argument("--spec", required=True, help="JSON file or inline JSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    if config_defaults:
        parser.set_defaults(**config_defaults)
        for sp in sub.choices.values():
            sp.set_defaults(**config_defaults)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text())
            if not isinstance(defaults, dict):
                raise ValueError("config must be a JSON object")
        except (OSError, ValueError) as exc:
            print(f"error: bad --config: {exc}", file=sys.stderr)
            return EXIT_INPUT
        args = build_parser(defaults).parse_args(argv)
    try:
        return args.func(args)
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except FoldFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FOLD
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

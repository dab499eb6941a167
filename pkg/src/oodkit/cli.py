"""Command-line surface: synth -> train -> calibrate -> detect -> eval,
plus TTA over image folders, ensemble fusion, and a raw forward pass.

Every command is deterministic given its flags; all randomness sits
behind --seed (fallback: config file, then the OODKIT_SEED environment
variable).  Option precedence is CLI flag > --config file > built-in
default.  Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import engine, metrics, training
from .augment import AugmentSpec, GridPoolFeaturizer, TtaConfig, read_pgm, tta_predict
from .engine import ReactConfig, energy_score, fit_react_threshold, rectified_forward
from .errors import DomainError, OodkitError, ShapeError
from .tensorio import (
    LinearHead,
    atomic_write_text,
    read_fvec,
    read_labels_csv,
    read_matrix_csv,
    write_fvec,
    write_labels_csv,
)

SEED_ENV_VAR = "OODKIT_SEED"

DEFAULTS = {
    "classes": 3,
    "dim": 8,
    "per_class": 100,
    "std": 1.0,
    "class_sep": 6.0,
    "ood_shift": 6.0,
    "epochs": 50,
    "lr": 0.1,
    "patience": 3,
    "ema_decay": 0.99,
    "percentile": engine.DEFAULT_PERCENTILE,
    "retention": engine.DEFAULT_RETENTION,
    "iterations": 32,
    "grid": 4,
    "tpr_target": 0.95,
    "seed": 0,
}


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"expected a positive finite number, got {text}")
    return value


def _unit_fraction(text: str) -> float:
    value = _positive_float(text)
    if value > 1.0:
        raise argparse.ArgumentTypeError(f"expected a fraction in (0, 1], got {text}")
    return value


def _percentile(text: str) -> float:
    value = _positive_float(text)
    if value > 100.0:
        raise argparse.ArgumentTypeError(f"expected a percentile in (0, 100], got {text}")
    return value


def _decay(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not (0.0 <= value <= 1.0):
        raise argparse.ArgumentTypeError(f"expected a decay in [0, 1], got {text}")
    return value


def _cutoff(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'inf', got {text!r}")
    if math.isnan(value) or value == -math.inf:
        raise argparse.ArgumentTypeError("cutoff must be a real number or +inf")
    return value


def _read_config(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DomainError(f"{path}: malformed config line {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


class _Options:
    """Flag > config > default resolution for one parsed command."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        config_path = getattr(args, "config", None)
        self.config = _read_config(config_path) if config_path else {}

    def get(self, name: str, cast):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if name in self.config:
            try:
                return cast(self.config[name])
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise DomainError(f"config key {name}: {exc}") from exc
        return DEFAULTS[name]

    def seed(self) -> int:
        flag = getattr(self.args, "seed", None)
        if flag is not None:
            return flag
        if "seed" in self.config:
            return _nonnegative_int(self.config["seed"])
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            try:
                return _nonnegative_int(env)
            except argparse.ArgumentTypeError as exc:
                raise DomainError(f"{SEED_ENV_VAR}: {exc}") from exc
        return DEFAULTS["seed"]


def _read_matrix(path) -> np.ndarray:
    if os.fspath(path).endswith(".csv"):
        return read_matrix_csv(path)
    return read_fvec(path)


def _read_head(weights_path, bias_path) -> LinearHead:
    weights = _read_matrix(weights_path)
    bias_rows = _read_matrix(bias_path)
    if bias_rows.shape[0] != 1:
        raise ShapeError(f"{bias_path}: bias file must hold a single 1 x K row")
    return LinearHead(weights=weights, bias=bias_rows[0])


def _write_decisions(path, ids, decisions) -> None:
    lines = ["id,score,verdict,class"]
    for sample_id, d in zip(ids, decisions):
        lines.append(f"{sample_id},{d.score!r},{d.verdict},{d.predicted_class}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _resolve_cutoff(args, react: ReactConfig | None) -> float:
    if getattr(args, "react_c", None) is not None:
        return args.react_c
    if react is not None and react.cutoff_c is not None:
        return react.cutoff_c
    return math.inf


def cmd_synth(args: argparse.Namespace) -> int:
    opts = _Options(args)
    classes = opts.get("classes", _positive_int)
    dim = opts.get("dim", _positive_int)
    per_class = opts.get("per_class", _positive_int)
    std = opts.get("std", _positive_float)
    class_sep = opts.get("class_sep", _positive_float)
    ood_shift = opts.get("ood_shift", _positive_float)
    seed = opts.seed()
    heldout_per_class = args.heldout_per_class
    if heldout_per_class is None:
        heldout_per_class = per_class
    ood_count = args.ood_count
    if ood_count is None:
        ood_count = classes * per_class

    spec = training.SyntheticSpec.well_separated(
        n_classes=classes,
        feature_dim=dim,
        separation=class_sep,
        std=std,
        per_class=per_class,
        seed=seed,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    features, labels = training.generate_synthetic(spec)
    write_fvec(features, os.path.join(args.out_dir, "id_train.fvec"))
    write_labels_csv(labels, os.path.join(args.out_dir, "id_train_labels.csv"))
    print(f"id_train: {features.shape[0]}x{features.shape[1]}")

    if heldout_per_class > 0:
        held_spec = replace(spec, per_class=heldout_per_class, seed=seed + 1)
        held_features, held_labels = training.generate_synthetic(held_spec)
        write_fvec(held_features, os.path.join(args.out_dir, "id_heldout.fvec"))
        write_labels_csv(held_labels, os.path.join(args.out_dir, "id_heldout_labels.csv"))
        print(f"id_heldout: {held_features.shape[0]}x{held_features.shape[1]}")

    if ood_count > 0:
        ood = training.generate_ood(spec, ood_count, shift_sigmas=ood_shift, seed=seed + 2)
        write_fvec(ood, os.path.join(args.out_dir, "ood.fvec"))
        print(f"ood: {ood.shape[0]}x{ood.shape[1]}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    opts = _Options(args)
    cfg = training.TrainConfig(
        learning_rate=opts.get("lr", _positive_float),
        epochs=opts.get("epochs", _nonnegative_int),
        lr_halving_patience=opts.get("patience", _positive_int),
        ema_decay=opts.get("ema_decay", _decay),
        seed=opts.seed(),
    )
    features = _read_matrix(args.features)
    labels = read_labels_csv(args.labels)
    result = training.train_head(features, labels, cfg)

    os.makedirs(args.out_dir, exist_ok=True)
    head = result.final_head()
    ema_head = result.ema_head()
    write_fvec(head.weights, os.path.join(args.out_dir, "W.fvec"))
    write_fvec(head.bias[None, :], os.path.join(args.out_dir, "b.fvec"))
    write_fvec(ema_head.weights, os.path.join(args.out_dir, "W_ema.fvec"))
    write_fvec(ema_head.bias[None, :], os.path.join(args.out_dir, "b_ema.fvec"))
    training.write_history_csv(result.history, os.path.join(args.out_dir, "history.csv"))

    for tag, h in (("final", head), ("ema", ema_head)):
        pred = np.argmax(rectified_forward(features, h), axis=1)
        print(f"{tag}_train_accuracy={metrics.accuracy(pred, labels)!r}")
    if args.figures_dir:
        from . import figures

        os.makedirs(args.figures_dir, exist_ok=True)
        figures.save_training_curves(
            result.history, os.path.join(args.figures_dir, "training_curves.png")
        )
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    opts = _Options(args)
    percentile = opts.get("percentile", _percentile)
    retention = opts.get("retention", _unit_fraction)
    features = _read_matrix(args.features)
    head = _read_head(args.weights, args.bias)
    cutoff = fit_react_threshold(features, percentile)
    scores = energy_score(rectified_forward(features, head, cutoff))
    calibration = engine.calibrate_tau(scores, retention)
    react = ReactConfig(percentile_p=percentile, cutoff_c=cutoff)
    engine.save_calibration(args.out, react, calibration)
    print(f"cutoff_c={cutoff!r}")
    print(f"tau={calibration.tau!r}")
    print(f"achieved_retention={calibration.achieved_retention!r}")
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    features = _read_matrix(args.features)
    head = _read_head(args.weights, args.bias)
    react, calibration = engine.load_calibration(args.calibration)
    cutoff = _resolve_cutoff(args, react)
    logits = rectified_forward(features, head, cutoff)
    scores = energy_score(logits)
    decisions = engine.decide(scores, logits, calibration.tau)
    _write_decisions(args.out, range(len(decisions)), decisions)
    kept = sum(d.verdict == engine.ID for d in decisions)
    total = max(len(decisions), 1)
    print(f"n={len(decisions)} id_fraction={kept / total!r}")
    return 0


def cmd_forward(args: argparse.Namespace) -> int:
    features = _read_matrix(args.features)
    head = _read_head(args.weights, args.bias)
    cutoff = _resolve_cutoff(args, None)
    logits = rectified_forward(features, head, cutoff)
    write_fvec(logits, args.out)
    print(f"logits: {logits.shape[0]}x{logits.shape[1]}")
    return 0


def _render_eval_figures(figures_dir, id_scores, ood_scores, confusion) -> None:
    from . import figures

    os.makedirs(figures_dir, exist_ok=True)
    figures.save_score_histogram(
        id_scores, ood_scores, os.path.join(figures_dir, "score_histogram.png")
    )
    if ood_scores is not None:
        figures.save_roc_curve(
            id_scores, ood_scores, os.path.join(figures_dir, "roc_curve.png")
        )
    figures.save_confusion_heatmap(
        confusion, os.path.join(figures_dir, "confusion.png")
    )


def cmd_eval(args: argparse.Namespace) -> int:
    opts = _Options(args)
    tpr_target = opts.get("tpr_target", _unit_fraction)
    features = _read_matrix(args.id_features)
    labels = read_labels_csv(args.id_labels)
    head = _read_head(args.weights, args.bias)
    react, calibration = engine.load_calibration(args.calibration)
    cutoff = _resolve_cutoff(args, react)

    logits = rectified_forward(features, head, cutoff)
    id_scores = energy_score(logits)
    pred = np.argmax(logits, axis=1)

    ood_scores = None
    extras = {"id_retention": float(np.mean(id_scores > calibration.tau))}
    if args.ood_features:
        ood_logits = rectified_forward(_read_matrix(args.ood_features), head, cutoff)
        ood_scores = energy_score(ood_logits)
        if args.baseline_msp:
            extras["auroc_msp"] = metrics.auroc(
                engine.msp_score(logits), engine.msp_score(ood_logits)
            )
    report = metrics.evaluate(
        pred, labels, id_scores, ood_scores, tpr_target=tpr_target, extras=extras
    )
    os.makedirs(args.out_dir, exist_ok=True)
    metrics.save_report(
        report,
        os.path.join(args.out_dir, "report.txt"),
        os.path.join(args.out_dir, "confusion.csv"),
    )
    for line in report.lines():
        print(line)
    if args.figures_dir:
        _render_eval_figures(args.figures_dir, id_scores, ood_scores, report.confusion)
    return 0


def _load_image(path) -> np.ndarray:
    from .augment import validate_image

    if os.fspath(path).endswith(".fvec"):
        return validate_image(read_fvec(path))
    return read_pgm(path)


def cmd_tta(args: argparse.Namespace) -> int:
    opts = _Options(args)
    iterations = opts.get("iterations", _positive_int)
    grid = opts.get("grid", _positive_int)
    seed = opts.seed()

    names = sorted(
        n for n in os.listdir(args.images) if n.endswith((".pgm", ".fvec"))
    )
    if not names:
        raise DomainError(f"no .pgm or .fvec images found in {args.images}")
    head = _read_head(args.weights, args.bias)
    react, calibration = engine.load_calibration(args.calibration)
    cutoff = _resolve_cutoff(args, react)
    featurizer = GridPoolFeaturizer(grid=grid)
    aug_spec = AugmentSpec(seed=seed)

    rows = []
    identity_features = []
    for index, name in enumerate(names):
        image = _load_image(os.path.join(args.images, name))
        cfg = TtaConfig(
            iterations=iterations,
            include_identity=not args.no_identity,
            seed=seed + index,
        )
        rows.append(tta_predict(image, featurizer, head, cutoff, cfg=cfg, spec=aug_spec))
        identity_features.append(featurizer(image))
    logits = np.concatenate(rows, axis=0)
    scores = energy_score(logits)
    decisions = engine.decide(scores, logits, calibration.tau)
    _write_decisions(args.out, names, decisions)
    print(f"n={len(decisions)} iterations={iterations}")

    if args.dump_features:
        write_fvec(np.stack(identity_features), args.dump_features)
    if args.labels:
        labels = read_labels_csv(args.labels)
        pred = np.argmax(logits, axis=1)
        report = metrics.evaluate(pred, labels, scores, None)
        if args.report:
            metrics.save_report(
                report, args.report, os.path.splitext(args.report)[0] + "_confusion.csv"
            )
        print(f"accuracy={report.accuracy!r}")
    if args.figures_dir:
        from . import figures

        os.makedirs(args.figures_dir, exist_ok=True)
        figures.save_score_histogram(
            scores, None, os.path.join(args.figures_dir, "tta_scores.png")
        )
    return 0


def cmd_ensemble(args: argparse.Namespace) -> int:
    features = _read_matrix(args.features)
    react, calibration = engine.load_calibration(args.calibration)
    cutoff = _resolve_cutoff(args, react)
    member_logits = []
    for member in args.member:
        weights_path, sep, bias_path = member.partition(":")
        if not sep:
            raise DomainError(f"--member must look like W.fvec:b.fvec, got {member!r}")
        head = _read_head(weights_path, bias_path)
        member_logits.append(rectified_forward(features, head, cutoff))
    logits = engine.ensemble_logits(member_logits)
    scores = energy_score(logits)
    decisions = engine.decide(scores, logits, calibration.tau)
    _write_decisions(args.out, range(len(decisions)), decisions)
    print(f"n={len(decisions)} members={len(member_logits)}")

    if args.labels:
        labels = read_labels_csv(args.labels)
        pred = np.argmax(logits, axis=1)
        report = metrics.evaluate(pred, labels, scores, None)
        if args.report:
            metrics.save_report(
                report, args.report, os.path.splitext(args.report)[0] + "_confusion.csv"
            )
        print(f"accuracy={report.accuracy!r}")
    if args.figures_dir:
        from . import figures

        os.makedirs(args.figures_dir, exist_ok=True)
        figures.save_score_histogram(
            scores, None, os.path.join(args.figures_dir, "ensemble_scores.png")
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodkit",
        description="Post-backbone classification and OOD detection toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file (flag > config > default)")
        p.add_argument("--seed", type=_nonnegative_int, default=None)

    p = sub.add_parser("synth", help="generate synthetic ID/OOD feature splits")
    add_common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--classes", type=_positive_int, default=None)
    p.add_argument("--dim", type=_positive_int, default=None)
    p.add_argument("--per-class", type=_positive_int, default=None)
    p.add_argument("--heldout-per-class", type=_nonnegative_int, default=None)
    p.add_argument("--ood-count", type=_nonnegative_int, default=None)
    p.add_argument("--std", type=_positive_float, default=None)
    p.add_argument("--class-sep", type=_positive_float, default=None)
    p.add_argument("--ood-shift", type=_positive_float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the toy linear head with EMA smoothing")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=_nonnegative_int, default=None)
    p.add_argument("--lr", type=_positive_float, default=None)
    p.add_argument("--patience", type=_positive_int, default=None)
    p.add_argument("--ema-decay", type=_decay, default=None)
    p.add_argument("--figures-dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="fit the clipping cutoff and score threshold")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--bias", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--percentile", type=_percentile, default=None)
    p.add_argument("--retention", type=_unit_fraction, default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", help="score samples and emit ID/OOD decisions")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--bias", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--react-c", type=_cutoff, default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("forward", help="write (optionally clipped) logits as FVEC")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--bias", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--react-c", type=_cutoff, default=None)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("eval", help="evaluate accuracy and OOD separation")
    add_common(p)
    p.add_argument("--id-features", required=True)
    p.add_argument("--id-labels", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--bias", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ood-features", default=None)
    p.add_argument("--react-c", type=_cutoff, default=None)
    p.add_argument("--tpr-target", type=_unit_fraction, default=None)
    p.add_argument("--baseline-msp", action="store_true")
    p.add_argument("--figures-dir", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tta", help="test-time augmentation over an image folder")
    add_common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--bias", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=_positive_int, default=None)
    p.add_argument("--grid", type=_positive_int, default=None)
    p.add_argument("--no-identity", action="store_true")
    p.add_argument("--react-c", type=_cutoff, default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--dump-features", default=None)
    p.add_argument("--figures-dir", default=None)
    p.set_defaults(func=cmd_tta)

    p = sub.add_parser("ensemble", help="fuse several heads by mean logits")
    add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--member", action="append", required=True,
                   help="repeatable W.fvec:b.fvec pair")
    p.add_argument("--out", required=True)
    p.add_argument("--react-c", type=_cutoff, default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--figures-dir", default=None)
    p.set_defaults(func=cmd_ensemble)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except OodkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

"""Command-line interface.

Subcommands: select, train, predict, outliers, simulate, pairs. Data and
model errors exit with status 1 after printing one JSON line to stderr;
usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import LabeledSpectra, format_float, load_csv, save_csv
from .errors import ReddaError
from .families import FAMILY_ORDER, CovarianceFamily
from .modelio import artifact_from_fit, load_model, save_model, versions
from .pairs import export_pairs_data
from .redda import FitConfig, fit_redda, marginal_log_density, predict_map
from .simulate import ContaminationSpec, SimulationConfig, adulteration_recipes, simulate_contaminated
from .stepwise import StepwiseConfig, choose_family, run_stepwise

log = logging.getLogger("stepredda")

FAMILY_CHOICES = [f.value for f in FAMILY_ORDER] + ["auto"]


def _family_arg(text: str) -> str:
    return "auto" if text.lower() == "auto" else text.upper()


class CliError(ReddaError):
    pass


def _fail(kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return 1


def _write_manifest(path: Path, command: str, config: dict, argv) -> None:
    doc = {"command": command, "argv": list(argv), "config": config, "versions": versions()}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _parse_int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"expected comma-separated integers, got {text!r}") from None


def _load_training(args) -> LabeledSpectra:
    data = load_csv(args.input, label_column=args.label, delimiter=args.delimiter)
    if data.n_classes < 1 or data.n_samples == 0:
        raise CliError("training file holds no labelled spectra")
    return data


def _fit_config(args) -> FitConfig:
    return FitConfig(max_iter=args.max_iter, n_restarts=args.restarts, tol=1e-8, seed=args.seed)


def _run_config(args, **extra) -> dict:
    # threads are deliberately left out: results do not depend on them
    cfg = {
        "input": str(args.input), "label": args.label, "gamma": args.gamma, "seed": args.seed,
        "restarts": args.restarts, "max_iter": args.max_iter,
    }
    cfg.update(extra)
    return cfg


def cmd_select(args, argv) -> int:
    data = _load_training(args)
    threads = args.threads or os.cpu_count() or 1
    fit_cfg = _fit_config(args)
    config = StepwiseConfig(
        fit=fit_cfg, max_steps=args.max_steps, min_diff=args.min_diff, n_jobs=threads,
    )
    if args.family == "auto":
        family = choose_family(data.X, data.labels, args.gamma, config, n_classes=data.n_classes)
    else:
        family = CovarianceFamily.parse(args.family)
    state = run_stepwise(data.X, data.labels, family, args.gamma, config, data.wavelengths, data.n_classes)

    out = Path(args.out)
    step_log = Path(args.log) if args.log else out.with_suffix(".steps.tsv")
    step_log.write_text(state.step_log(data.wavelengths))
    run_cfg = _run_config(
        args, family_requested=args.family, family=family.value, min_diff=args.min_diff,
        max_steps=args.max_steps,
    )
    _write_manifest(_manifest_path(out), "select", run_cfg, argv)
    if not state.included:
        return _fail("EmptySelection", "no variable was selected; no model written")

    selected = list(state.included)
    fit = fit_redda(data.X[:, selected], data.labels, family, args.gamma, fit_cfg, n_classes=data.n_classes)
    manifest = {"command": "select", "config": run_cfg,
                "versions": {"stepredda": __version__},
                "steps": len(state.history), "terminated": state.terminated}
    save_model(artifact_from_fit(fit, selected, data, manifest), out)
    wl = ", ".join(f"{data.wavelengths[j]:g}" for j in selected)
    print(f"selected {len(selected)} variable(s): {wl} [{family.value}, gamma={args.gamma}]")
    return 0


def cmd_train(args, argv) -> int:
    data = _load_training(args)
    if args.variables:
        selected = _parse_int_list(args.variables)
    else:
        wanted = [float(t) for t in args.wavelengths.split(",") if t.strip()]
        selected = []
        for w in wanted:
            hits = np.flatnonzero(np.isclose(data.wavelengths, w, rtol=0, atol=1e-9))
            if hits.size == 0:
                raise CliError(f"wavelength {w:g} not present in {args.input}")
            selected.append(int(hits[0]))
    if not selected or min(selected) < 0 or max(selected) >= data.n_channels:
        raise CliError(f"variable indices must lie in 0..{data.n_channels - 1}")
    family = CovarianceFamily.parse(args.family)
    fit = fit_redda(data.X[:, selected], data.labels, family, args.gamma, _fit_config(args),
                    n_classes=data.n_classes)
    run_cfg = _run_config(args, family=family.value, variables=selected)
    out = Path(args.out)
    save_model(artifact_from_fit(fit, selected, data, {"command": "train", "config": run_cfg,
                                                       "versions": {"stepredda": __version__}}), out)
    _write_manifest(_manifest_path(out), "train", run_cfg, argv)
    print(f"trained {family.value} model on {len(selected)} variable(s); N*={fit.n_star}")
    return 0


def _load_test(args, model):
    data = load_csv(args.input, label_column=args.label, delimiter=args.delimiter, require_labels=False)
    return data, model.project(data.X)


def cmd_predict(args, argv) -> int:
    model = load_model(args.model)
    data, X = _load_test(args, model)
    labels, post = predict_map(model.params, X)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "label"] + [f"posterior_{name}" for name in model.class_names])
        for n in range(X.shape[0]):
            w.writerow([n, model.class_names[labels[n]]] + [format_float(v) for v in post[n]])
    _write_manifest(_manifest_path(out), "predict", {"model": str(args.model), "input": str(args.input)}, argv)
    msg = f"predicted {X.shape[0]} spectra"
    if data.labels is not None:
        truth = [data.class_names[i] for i in data.labels]
        correct = sum(t == model.class_names[p] for t, p in zip(truth, labels))
        msg += f"; {correct}/{len(truth)} correct ({100.0 * correct / len(truth):.1f}%)"
    print(msg)
    return 0


def cmd_outliers(args, argv) -> int:
    model = load_model(args.model)
    _, X = _load_test(args, model)
    report = marginal_log_density(model.params, X)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "log_density", "rank"])
        for n in range(X.shape[0]):
            w.writerow([n, format_float(report.log_density[n]), int(report.rank[n])])
    _write_manifest(_manifest_path(out), "outliers",
                    {"model": str(args.model), "input": str(args.input), "top": args.top}, argv)
    k = min(args.top, X.shape[0])
    for n in report.lowest(k):
        print(f"{n}\t{format_float(report.log_density[n])}\t{int(report.rank[n])}")
    return 0


def cmd_simulate(args, argv) -> int:
    recipes = ()
    if args.outliers != "none":
        spike = "relevant" if args.outliers == "meat" else "irrelevant"
        recipes = adulteration_recipes(spike, noise=args.noise_scale)
    cfg = SimulationConfig(
        n_classes=args.classes, n_train=args.train, n_test=args.test, n_channels=args.channels,
        n_relevant=args.relevant, separation=args.separation, seed=args.seed,
        contamination=ContaminationSpec(label_noise_rate=args.label_noise, outliers=recipes, seed=args.seed),
    )
    train, test, truth = simulate_contaminated(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(train, out / "train.csv")
    save_csv(test, out / "test.csv")
    doc = {
        "relevant": truth.relevant.tolist(),
        "noisy_labels": truth.noisy_labels.tolist(),
        "outliers": truth.outliers.tolist(),
        "outlier_kinds": list(truth.outlier_kinds),
        "spike_channels": list(truth.spike_channels),
        "correlated": truth.correlated.tolist(),
    }
    (out / "truth.json").write_text(json.dumps(doc, indent=1) + "\n")
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir", "verbose")}
    _write_manifest(out / "manifest.json", "simulate", config, argv)
    print(f"wrote {train.n_samples} training and {test.n_samples} test spectra to {out}")
    return 0


def cmd_pairs(args, argv) -> int:
    data = load_csv(args.input, label_column=args.label, delimiter=args.delimiter, require_labels=False)
    if args.model:
        selected = load_model(args.model).selected
    elif args.variables:
        selected = _parse_int_list(args.variables)
    else:
        raise CliError("pass --model or --variables")
    if not selected or max(selected) >= data.n_channels or min(selected) < 0:
        raise CliError(f"variable indices must lie in 0..{data.n_channels - 1}")
    table, manifest = export_pairs_data(data, selected, args.out_dir)
    print(f"wrote {table} and {manifest}")
    return 0


def _add_input(p):
    p.add_argument("--input", required=True, help="CSV with a wavelength header row")
    p.add_argument("--label", default="class", help="name of the class column")
    p.add_argument("--delimiter", default=",")


def _add_fit_flags(p):
    p.add_argument("--gamma", type=float, default=0.0, help="trimming level in [0, 0.5)")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stepredda", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every selection step")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="stepwise wavelength selection, then fit a model")
    _add_input(p)
    _add_fit_flags(p)
    p.add_argument("--family", choices=FAMILY_CHOICES, default="EEI", type=_family_arg)
    p.add_argument("--min-diff", type=float, default=0.0, help="TBIC difference needed to accept a move")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="parallel workers (default: all cores)")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log", default=None, help="step log (default: <out>.steps.tsv)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="fit a model on given variables")
    _add_input(p)
    _add_fit_flags(p)
    p.add_argument("--family", choices=FAMILY_CHOICES[:-1], default="EEI", type=_family_arg)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--variables", help="comma-separated column indices")
    group.add_argument("--wavelengths", help="comma-separated wavelength values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="MAP class labels and posteriors")
    p.add_argument("--model", required=True)
    _add_input(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("outliers", help="marginal log-density of test spectra")
    p.add_argument("--model", required=True)
    _add_input(p)
    p.add_argument("--out", default="outliers.csv")
    p.add_argument("--top", type=int, default=5, help="number of lowest-density rows to list")
    p.set_defaults(func=cmd_outliers)

    p = sub.add_parser("simulate", help="write contaminated synthetic spectra")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--train", type=int, default=300)
    p.add_argument("--test", type=int, default=150)
    p.add_argument("--channels", type=int, default=30)
    p.add_argument("--relevant", type=int, default=4)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--label-noise", type=float, default=0.0)
    p.add_argument("--outliers", choices=["none", "meat", "starches"], default="none")
    p.add_argument("--noise-scale", type=float, default=None,
                   help="white-noise sd of the noisy outlier, in mean channel sds")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pairs", help="export pairs-plot data for selected variables")
    _add_input(p)
    p.add_argument("--model", default=None)
    p.add_argument("--variables", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pairs)
    return parser


def cli_main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args, argv)
    except ReddaError as exc:
        return _fail(type(exc).__name__, str(exc))
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc))


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

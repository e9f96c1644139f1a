import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from config import Config, get_config
from experiment import hyperparams_from_config, load_grid_spec, load_model, parse_framework, read_config, save_model
from models import DME_DEFINITION, Hyperparams, TrainMode
from service import ExperimentService


def _add_train_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", "-d", help="Ratings file (canonical CSV or a preset table).")
    parser.add_argument("--preset", help="Table preset: movielens, comoda, movielens100k, movielens1m.")
    parser.add_argument(
        "--framework",
        "-F",
        default="vector_dot",
        help="Regularization framework: none, global_scalar, per_vector_scalar, vector_dot.",
    )
    parser.add_argument(
        "--reg",
        type=float,
        default=0.01,
        help="Regularization magnitude (beta for scalar frameworks, initial vector entries for vector_dot).",
    )
    parser.add_argument("--k", type=int, help="Latent dimension.")
    parser.add_argument("--epochs", type=int, help="Maximum number of epochs.")
    parser.add_argument("--lr", type=float, help="Learning rate for the feature vectors.")
    parser.add_argument("--lr-reg", type=float, help="Learning rate for the regularization vectors.")
    parser.add_argument("--mode", choices=["sgd", "batch"], help="Stochastic or full-batch descent.")
    parser.add_argument("--early-stop-tol", type=float, help="Relative loss change that stops training.")


def _add_eval_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--split-ratio", type=float, help="Fraction of ratings used for training.")
    parser.add_argument("--k-top", type=int, help="Recommendation list length for the Matthew effect metric.")
    parser.add_argument(
        "--no-clamp",
        dest="clamp",
        action="store_false",
        help="Score unclamped predictions.",
    )
    parser.set_defaults(clamp=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Matrix factorization with scalar and vector regularization frameworks."
    )
    parser.add_argument("--seed", type=int, help="Seed for initialization, shuffling and splitting.")
    parser.add_argument("--config", help="INI experiment config ([dataset] [split] [grid] [train] [metrics]).")
    parser.add_argument("--out", help="Directory for output artifacts.")
    parser.add_argument("--threads", type=int, help="Worker threads for grid cells.")
    parser.add_argument(
        "--log-level",
        choices=["CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"],
        help="Logging verbosity.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    train_cmd = commands.add_parser("train", help="Train one model and report its loss trace and metrics.")
    _add_train_options(train_cmd)
    _add_eval_options(train_cmd)
    train_cmd.add_argument(
        "--plug-in",
        action="store_true",
        help="Derive per_vector_scalar coefficients from a global_scalar warm-up run.",
    )
    train_cmd.add_argument("--save-model", help="Where to save the trained model (default: <out>/model.txt).")

    commands.add_parser("grid", help="Run the grid search described by --config.")

    diagnose_cmd = commands.add_parser("diagnose", help="Implied-beta spread report.")
    _add_train_options(diagnose_cmd)
    diagnose_cmd.add_argument("--model", "-m", help="Saved model; trains a fresh one on --data when omitted.")
    diagnose_cmd.add_argument(
        "--paper-literal",
        "--printed-sign",
        dest="printed_sign",
        action="store_true",
        help="Use the printed (positively signed) implied-beta formula.",
    )

    eval_cmd = commands.add_parser("eval", help="MAE and Matthew effect of a saved model.")
    eval_cmd.add_argument("--model", "-m", required=True, help="Saved model file.")
    eval_cmd.add_argument("--data", "-d", required=True, help="Ratings file the model was trained from.")
    eval_cmd.add_argument("--preset", help="Table preset for non-canonical files.")
    _add_eval_options(eval_cmd)

    synth_cmd = commands.add_parser("synth", help="Emit a synthetic low-rank ratings dataset.")
    synth_cmd.add_argument("--users", type=int, default=50)
    synth_cmd.add_argument("--items", type=int, default=40)
    synth_cmd.add_argument("--k-true", type=int, default=3)
    synth_cmd.add_argument("--density", type=float, default=0.2)
    synth_cmd.add_argument("--noise", type=float, default=0.1)
    synth_cmd.add_argument("--output", "-o", help="Destination file (default: <out>/synthetic.csv).")
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def build_hyperparams(args, config: Config) -> Hyperparams:
    """Defaults, then the config file's [train] section, then command-line flags"""
    h = Hyperparams(seed=config.seed, clamp_predictions=config.clamp)
    if args.config:
        h = hyperparams_from_config(read_config(args.config), h)
    overrides = {
        "k": args.k,
        "epochs": args.epochs,
        "eta_feat": args.lr,
        "eta_reg": args.lr_reg,
        "early_stop_tol": args.early_stop_tol,
    }
    if args.mode:
        overrides["train_mode"] = TrainMode.BATCH_GD if args.mode == "batch" else TrainMode.SGD
    if getattr(args, "clamp", None) is not None:
        overrides["clamp_predictions"] = args.clamp
    update = {key: value for key, value in overrides.items() if value is not None}
    return Hyperparams(**{**h.model_dump(), **update})


def _dataset_args(args):
    """--data/--preset, falling back to the config file's [dataset] section"""
    path, preset = args.data, args.preset
    if args.config and (path is None or preset is None):
        parser = read_config(args.config)
        if parser.has_section("dataset"):
            section = parser["dataset"]
            if path is None and "path" in section:
                candidate = Path(section["path"]).expanduser()
                if not candidate.is_absolute():
                    candidate = Path(args.config).expanduser().parent / candidate
                path = str(candidate)
            preset = preset or section.get("preset")
    if path is None:
        raise ValueError("No dataset given; pass --data or set [dataset] path in --config")
    return path, preset


def _evaluation_args(args, config: Config):
    """Split ratio, split seed and k_top: flags, then [split]/[metrics] of --config, then Config"""
    ratio, seed, k_top = args.split_ratio, args.seed, args.k_top
    if args.config:
        parser = read_config(args.config)
        if parser.has_section("split"):
            section = parser["split"]
            if ratio is None and "ratio" in section:
                ratio = section.getfloat("ratio")
            if seed is None and "seed" in section:
                seed = section.getint("seed")
        if k_top is None and parser.has_section("metrics") and "k_top" in parser["metrics"]:
            k_top = parser["metrics"].getint("k_top")
    return (
        config.split_ratio if ratio is None else ratio,
        config.seed if seed is None else seed,
        config.k_top if k_top is None else k_top,
    )


def _emit(payload) -> None:
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")


def cmd_train(args, service: ExperimentService) -> int:
    path, preset = _dataset_args(args)
    h = build_hyperparams(args, service.config)
    ratio, seed, k_top = _evaluation_args(args, service.config)
    pair = service.load_split(path, preset, ratio, seed)
    tag = parse_framework(args.framework)
    result = service.train(pair, h, tag, args.reg, plug_in=args.plug_in)

    sys.stdout.write("epoch,fit,penalty,total\n")
    for epoch, breakdown in enumerate(result.trace, start=1):
        sys.stdout.write(f"{epoch},{breakdown.fit:.10g},{breakdown.penalty:.10g},{breakdown.total:.10g}\n")

    report = service.evaluate(result.model, pair, k_top=k_top, clamp=h.clamp_predictions)
    model_path = Path(args.save_model).expanduser() if args.save_model else service.output_path("model.txt")
    save_model(result.model, model_path)
    logging.info("Saved model to %s", model_path)
    _emit({
        "framework": tag.value,
        "epochs_run": result.epochs_run,
        "converged": result.converged,
        "split_seed": pair.seed,
        "report": report.model_dump(),
        "csv": report.to_csv_row(),
    })
    return 0


def cmd_grid(args, service: ExperimentService) -> int:
    if not args.config:
        logging.error("The grid command needs --config <path>.")
        return 1
    spec = load_grid_spec(args.config, seed=service.config.seed)
    if args.seed is not None:
        spec = spec.model_copy(update={"split_seed": args.seed})
    table, roughness, written = service.run_grid(spec)
    best = {fw.value: (row.model_dump(mode="json") if row else None) for fw, row in table.best_rows().items()}
    _emit({
        "rows": len(table.rows),
        "best": best,
        "roughness": {fw.value: value for fw, value in roughness.items()},
        "files": [str(path) for path in written],
        "split_seed": spec.split_seed,
        "dme_definition": DME_DEFINITION,
    })
    return 0


def cmd_diagnose(args, service: ExperimentService) -> int:
    path, preset = _dataset_args(args)
    data = service.ensure_dataset_loaded(path, preset)
    if args.model:
        model = load_model(args.model)
    else:
        h = build_hyperparams(args, service.config)
        model = service.fit(data, h, parse_framework(args.framework), args.reg).model
    report, checks, csv_path = service.diagnose(model, data, printed_sign=args.printed_sign)
    _emit({
        "spread": report.model_dump(exclude={"values", "user_indices"}),
        "norm_sq_checks": [
            {**check.model_dump(), "gap": check.gap} for check in checks
        ],
        "csv": str(csv_path),
    })
    return 0


def cmd_eval(args, service: ExperimentService) -> int:
    model = load_model(args.model)
    ratio, seed, k_top = _evaluation_args(args, service.config)
    pair = service.load_split(args.data, args.preset, ratio, seed)
    report = service.evaluate(model, pair, k_top=k_top, clamp=args.clamp)
    _emit({"report": report.model_dump(), "csv": report.to_csv_row(), "split_seed": pair.seed})
    return 0


def cmd_synth(args, service: ExperimentService) -> int:
    target = service.synthesize(args.users, args.items, args.k_true, args.density, args.noise, args.output)
    _emit({"output": str(target), "seed": service.config.seed})
    return 0


COMMANDS = {
    "train": cmd_train,
    "grid": cmd_grid,
    "diagnose": cmd_diagnose,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    config = get_config().with_overrides(
        seed=args.seed,
        out_dir=args.out,
        threads=args.threads,
        log_level=args.log_level,
    )
    configure_logging(config.log_level)
    service = ExperimentService(config=config)

    try:
        return COMMANDS[args.command](args, service)
    except FileNotFoundError as exc:
        logging.error("%s", exc)
        return 1
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        logging.exception("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

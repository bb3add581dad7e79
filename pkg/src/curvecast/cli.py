"""``curvecast`` command line.

Every command that writes a file also writes ``<output>.manifest.json``
recording the argument vector, seeds, input digests, tool version and wall
time. Outputs are written atomically (temporary file + rename). Data errors
exit with status 1 and a JSON error object on stderr; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .benchmark_distill import (
    DEFAULT_ETA, DEFAULT_GROUPS, DEFAULT_TAU, DEFAULT_TRIALS, distill, group_and_pick,
    pairwise_significance, tree_dnn_score,
)
from .curve_models import curve_points, extrapolate, fit_baseline, fit_law, params_to_dict
from .dataset_io import (
    DataError, dump_curves, format_real, load_curves, load_dataset, load_results, load_sizes,
)
from .dynamics_predictor import (
    OVD_HORIZON, PredictorModel, TrainConfig, TrainingError, advise_early_stop, build_corpus,
    config_dict, evaluate, predict_curve, train_predictor,
)
from .metafeatures import LAYOUT_VERSION, assemble_input, extract, load_meta
from .synth import SynthConfig, synth_corpus

WORKERS_ENV = "CURVECAST_WORKERS"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path: str | Path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(path.glob("*.json")):
            h.update(p.name.encode())
            h.update(p.read_bytes())
    else:
        h.update(path.read_bytes())
    return "sha256:" + h.hexdigest()


def to_json(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


class Run:
    """Collects outputs of one command; commits them and the manifest at the end."""

    def __init__(self, command: str, argv: Sequence[str], args: argparse.Namespace):
        self.command = command
        self.argv = list(argv)
        self.args = args
        self.inputs: dict[str, str] = {}
        self.seeds: dict[str, int] = {}
        self.outputs: list[tuple[str | None, str]] = []
        self.started = time.perf_counter()

    def input(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise DataError(f"no such file: {path}", path)
        self.inputs[str(path)] = file_digest(path)
        return path

    def emit(self, path, text: str) -> None:
        self.outputs.append((None if path in (None, "-") else str(path), text))

    def commit(self, stdout) -> None:
        files = [p for p, _ in self.outputs if p is not None]
        for p, text in self.outputs:
            if p is None:
                stdout.write(text)
            else:
                atomic_write(p, text)
        manifest_path = getattr(self.args, "manifest", None)
        if manifest_path is None and files:
            manifest_path = files[0] + ".manifest.json"
        if manifest_path is not None:
            atomic_write(manifest_path, to_json({
                "command": self.command,
                "argv": self.argv,
                "seeds": self.seeds,
                "inputs": self.inputs,
                "outputs": files,
                "tool_version": __version__,
                "duration_s": time.perf_counter() - self.started,
            }))


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _single_meta(path: Path):
    metas = load_meta(path)
    if len(metas) != 1:
        raise DataError(f"{path}: expected exactly one meta-feature document, found {len(metas)}",
                        path)
    return next(iter(metas.values()))


def _model_input(run: Run, args) -> np.ndarray:
    model_meta = _single_meta(run.input(args.meta))
    if len(args.support) != 5:
        raise UsageError(f"--support needs 5 values, got {len(args.support)}")
    return assemble_input(model_meta, args.support)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_meta(run: Run, args) -> None:
    schema_path = run.input(args.schema)
    try:
        schema = json.loads(schema_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{schema_path}: malformed JSON ({exc})", schema_path) from None
    summary = load_dataset(run.input(args.dataset), schema, args.label, args.task, args.id)
    doc = extract(summary).to_dict()
    doc["dropped_rows"] = summary.dropped_rows
    run.emit(args.out, to_json(doc))


def cmd_fit(run: Run, args) -> None:
    curves = load_curves(run.input(args.curves), args.k)
    run.seeds["seed"] = args.seed
    family = args.family.upper() if args.family != "ours" else "ours"

    def fit_one(curve):
        values = curve.values if args.full else curve.values[:args.k]
        points = curve_points(values)
        fit = fit_law(points) if family == "ours" else fit_baseline(family, points, args.seed)
        return {
            "dataset_id": curve.dataset_id,
            "params": params_to_dict(fit.params),
            "residual_rmse": fit.rmse,
            "converged": fit.converged,
            "rank_deficient": fit.rank_deficient,
            "n_points": len(values),
        }

    fits = _map(fit_one, curves, args.workers)
    run.emit(args.out, to_json({"family": args.family, "k": args.k, "full_curve": args.full,
                                "seed": args.seed, "fits": fits}))


def cmd_train(run: Run, args) -> None:
    curves = load_curves(run.input(args.curves), args.k)
    metas = load_meta(run.input(args.meta))
    run.seeds["seed"] = args.seed
    corpus = build_corpus(curves, metas, args.k, args.train_fraction, args.seed)
    config = TrainConfig(lr=args.lr, epochs=args.epochs, batch=args.batch, seed=args.seed)
    model = train_predictor(corpus, config)
    doc = model.to_dict()
    doc["config"] = config_dict(config)
    doc["train_ids"] = sorted(corpus.train_ids)
    run.emit(args.out, json.dumps(doc) + "\n")


def cmd_predict(run: Run, args) -> None:
    model = PredictorModel.load(run.input(args.model))
    theta, values = predict_curve(model, _model_input(run, args), args.horizon)
    run.emit(args.out, to_json({"theta": params_to_dict(theta),
                                "values": [float(v) for v in values]}))


def cmd_eval(run: Run, args) -> None:
    model = PredictorModel.load(run.input(args.model))
    curves = load_curves(run.input(args.curves), args.k)
    metas = load_meta(run.input(args.meta))

    def score(curve):
        if curve.dataset_id not in metas:
            raise DataError(f"no meta-features for dataset {curve.dataset_id!r}")
        x = assemble_input(metas[curve.dataset_id], curve.values[:args.k])
        _, pred = predict_curve(model, x, OVD_HORIZON)
        return curve.dataset_id, evaluate(pred, curve, curve.task)

    rows = _map(score, curves, args.workers)
    out = io.StringIO()
    out.write("dataset_id,mae,ovd\n")
    for did, s in rows:
        out.write(f"{did},{format_real(s['mae'])},{format_real(s['ovd'])}\n")
    if rows:
        mean_mae = float(np.mean([s["mae"] for _, s in rows]))
        mean_ovd = float(np.mean([s["ovd"] for _, s in rows]))
        out.write(f"__mean__,{format_real(mean_mae)},{format_real(mean_ovd)}\n")
    run.emit(args.out, out.getvalue())


def cmd_advise(run: Run, args) -> None:
    model = PredictorModel.load(run.input(args.model))
    decision = advise_early_stop(model, _model_input(run, args), args.best,
                                 args.patience_horizon, args.task, args.margin)
    run.emit(args.out, to_json({"decision": decision}))


def cmd_distill(run: Run, args) -> None:
    results = load_results(run.input(args.results))
    tasks = None
    if args.tasks is not None:
        info = load_sizes(run.input(args.tasks))
        tasks = {d: i.task for d, i in info.items()}
    run.seeds["seed"] = args.seed
    sel = distill(results, args.strategy, args.eta, args.trials, args.seed, tasks, args.workers)
    run.emit(args.out, to_json(sel.to_dict()))


def cmd_treednn(run: Run, args) -> None:
    results = load_results(run.input(args.results))
    scores = tree_dnn_score(results, args.tree, args.dnn, args.tau)
    out = io.StringIO()
    out.write("dataset_id,score,label\n")
    for s in scores:
        out.write(f"{s.dataset_id},{format_real(s.score)},{s.label}\n")
    run.emit(args.out, out.getvalue())
    if args.sizes is not None:
        info = load_sizes(run.input(args.sizes))
        groups = dict(DEFAULT_GROUPS)
        if args.groups:
            groups = {k: int(v) for k, v in (g.split("=") for g in _names(args.groups))}
        cat = None
        if args.balance:
            cat = {d: bool(i.has_categorical) for d, i in info.items()}
        sel = group_and_pick(scores, {d: i.size for d, i in info.items()},
                             {d: i.task for d, i in info.items()}, groups, cat)
        pick_path = args.picks or (None if args.out in (None, "-") else f"{args.out}.picks.json")
        run.emit(pick_path, to_json(sel.to_dict()))


def cmd_ttest(run: Run, args) -> None:
    results = load_results(run.input(args.results), run.input(args.seeds))
    rates = pairwise_significance(results, args.anchor, args.alpha, workers=args.workers)
    out = io.StringIO()
    out.write("anchor,opponent,win,tie,lose\n")
    for opp, r in rates.items():
        out.write(f"{args.anchor},{opp},{format_real(r['win'])},{format_real(r['tie'])},"
                  f"{format_real(r['lose'])}\n")
    run.emit(args.out, out.getvalue())


def cmd_synth(run: Run, args) -> None:
    run.seeds["seed"] = args.seed
    config = SynthConfig(args.n_curves, args.horizon, args.noise_sd, args.seed, args.task)
    curves, metas, thetas = synth_corpus(config)
    run.emit(args.out_curves, dump_curves(curves))
    run.emit(args.out_meta, to_json([m.to_dict() for m in metas.values()]))
    if args.out_theta:
        run.emit(args.out_theta, to_json({d: params_to_dict(t) for d, t in thetas.items()}))


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=1,
                        help=f"worker threads (overridden by ${WORKERS_ENV})")
    common.add_argument("--manifest", default=None,
                        help="manifest path (default: <first output>.manifest.json)")

    parser = argparse.ArgumentParser(prog="curvecast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"curvecast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("meta", parents=[common], help="extract dataset meta-features")
    p.add_argument("dataset")
    p.add_argument("--schema", required=True, help="JSON map column -> numerical|categorical")
    p.add_argument("--label", required=True)
    p.add_argument("--task", choices=["binclass", "multiclass", "regression"])
    p.add_argument("--id", default=None, help="dataset ID (default: file stem)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_meta)

    p = sub.add_parser("fit", parents=[common], help="fit a curve family to each curve")
    p.add_argument("curves")
    p.add_argument("--family", choices=["ours", "m1", "m2", "m3", "m4"], default="ours")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--full", action="store_true", help="fit on full curves, not the support")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", parents=[common], help="train the curve predictor")
    p.add_argument("--curves", required=True)
    p.add_argument("--meta", required=True, help="meta-feature JSON file or directory")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--batch", type=int, default=TrainConfig.batch)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="predict a curve from its support")
    p.add_argument("--model", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--support", type=_floats, required=True)
    p.add_argument("--horizon", type=int, default=OVD_HORIZON)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="per-curve MAE/OVD as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--curves", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("advise", parents=[common], help="early-stopping advice")
    p.add_argument("--model", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--support", type=_floats, required=True)
    p.add_argument("--best", type=float, required=True)
    p.add_argument("--patience-horizon", type=int, required=True)
    p.add_argument("--task", choices=["binclass", "multiclass", "regression"], required=True)
    p.add_argument("--margin", type=float, default=1e-4)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_advise)

    p = sub.add_parser("distill", parents=[common], help="rank-consistent tiny benchmark")
    p.add_argument("--results", required=True)
    p.add_argument("--strategy", choices=["greedy", "random", "kmeans"], required=True)
    p.add_argument("--eta", type=float, default=DEFAULT_ETA)
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tasks", default=None, help="sizes CSV; enables per-task quotas")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("treednn", parents=[common], help="Tree-DNN scores and picks")
    p.add_argument("--results", required=True)
    p.add_argument("--tree", type=_names, default=_names("XGBoost,CatBoost,RandomForest"))
    p.add_argument("--dnn", type=_names, default=_names("MLP,ResNet,FTT"))
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--sizes", default=None, help="sizes CSV; enables group-and-pick")
    p.add_argument("--groups", default=None, help="e.g. binclass=5,multiclass=4,regression=6")
    p.add_argument("--balance", action="store_true",
                   help="balance datasets with/without categorical features")
    p.add_argument("--picks", default=None, help="path for the picked subset JSON")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_treednn)

    p = sub.add_parser("ttest", parents=[common], help="pairwise Welch t-test rates")
    p.add_argument("--results", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--anchor", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ttest)

    p = sub.add_parser("synth", parents=[common], help="synthetic planted-map corpus")
    p.add_argument("--n-curves", type=int, default=100)
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", choices=["binclass", "multiclass", "regression"], default="binclass")
    p.add_argument("--out-curves", required=True)
    p.add_argument("--out-meta", required=True)
    p.add_argument("--out-theta", default=None)
    p.set_defaults(func=cmd_synth)
    return parser


def _error(exc: BaseException, stderr) -> None:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    path = getattr(exc, "path", None) or getattr(exc, "filename", None)
    if path is not None:
        doc["path"] = str(path)
    stderr.write(json.dumps(doc) + "\n")


def main(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            args.workers = int(env)
        except ValueError:
            parser.print_usage(stderr)
            stderr.write(f"curvecast: error: {WORKERS_ENV} must be an integer\n")
            return 2
    args.workers = max(1, args.workers)

    run = Run(args.command, argv, args)
    try:
        args.func(run, args)
        run.commit(stdout)
    except UsageError as exc:
        parser.print_usage(stderr)
        _error(exc, stderr)
        return 2
    except (DataError, TrainingError, ValueError, KeyError, OSError) as exc:
        _error(exc, stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

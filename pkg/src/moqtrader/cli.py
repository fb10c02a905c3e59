"""Command-line entry point: train / backtest / walkforward / report.

Every command takes --config and --out; module errors surface as one line
of machine-readable JSON on stdout and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import agent, config, evaluation
from .errors import EngineError, InvalidValue, MissingFile
from .market_data import make_split, walk_forward_folds
from .qnet import load_checkpoint

REPORT_RANGES = ("train", "eval", "test")


def _parse_weights(text: str) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise InvalidValue("weights", "expected 4 comma-separated reals")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise InvalidValue("weights", str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moqtrader", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "backtest", "walkforward", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="run config file (flat dialect or resolved JSON)")
        p.add_argument("--out", required=True, help="run directory for artifacts")
        p.add_argument("--seed", type=int, help="override the training seed")
        p.add_argument("--weights", help="evaluation weight vector, 4 comma-separated reals")
        p.add_argument("--metric", choices=("sharpe", "profit"), help="checkpoint selection metric")
        p.add_argument("--range", dest="range_", choices=("train", "eval", "test"), help="evaluation range")
    return parser


def _eval_params(cfg: config.RunConfig):
    train = cfg.train
    if cfg.eval_weights is not None:
        weights = np.asarray(cfg.eval_weights, dtype=np.float64)
    elif train.multi_reward:
        weights = agent.uniform_weights()
    else:
        weights = agent.one_hot_weights(train.reward)
    if cfg.eval_gamma is not None:
        gamma = cfg.eval_gamma
    elif train.generalize_gamma:
        gamma = 0.5 * (train.gamma_range[0] + train.gamma_range[1])
    else:
        gamma = train.gamma
    return weights, gamma


def cmd_train(cfg: config.RunConfig, out: Path) -> None:
    series = config.load_series(cfg)
    split = make_split(series, cfg.fractions)
    config.write_resolved(cfg, out)
    weights, gamma = _eval_params(cfg)
    agent.train(cfg.train, series, split, out_dir=out, eval_weights=weights, eval_gamma=gamma)


def _collect_checkpoints(cfg: config.RunConfig, out: Path) -> list[Path]:
    if cfg.checkpoint is not None:
        path = Path(cfg.checkpoint)
        if not path.exists():
            raise MissingFile(str(path))
        return [path]
    found = sorted(out.glob("checkpoint_*.bin"), key=lambda p: int(p.stem.split("_")[1]))
    if not found:
        raise MissingFile(f"no checkpoint_<episode>.bin files in {out}")
    return found


def cmd_backtest(cfg: config.RunConfig, out: Path) -> None:
    series = config.load_series(cfg)
    split = make_split(series, cfg.fractions)
    weights, gamma = _eval_params(cfg)
    train = cfg.train

    candidates = []
    for path in _collect_checkpoints(cfg, out):
        net, meta = load_checkpoint(path)
        reports = evaluation.evaluate_split(
            net, series, split,
            weights=weights, gamma=gamma, mode=train.mode, fee=train.fee,
            lookback=train.lookback, reward_window=train.reward_window,
            include_gamma=train.generalize_gamma,
        )
        candidates.append(agent.Checkpoint(episode=int(meta.get("episode", 0)), net=net, reports=reports, path=path))

    best = evaluation.select_best_checkpoint(candidates, metric=cfg.report_metric, range_id="eval")
    range_ = split.range_for(cfg.eval_range)
    _, report = evaluation.run_policy(
        best.net, series, range_, weights, gamma, train.mode, train.fee,
        lookback=train.lookback, reward_window=train.reward_window,
        include_gamma=train.generalize_gamma, range_id=cfg.eval_range,
    )
    payload = {
        "checkpoint": str(best.path),
        "episode": best.episode,
        "metric": cfg.report_metric,
        "weights": [float(w) for w in weights],
        "gamma": gamma,
        "report": report.to_dict(),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload["report"]))


def cmd_walkforward(cfg: config.RunConfig, out: Path) -> None:
    series = config.load_series(cfg)
    plan = walk_forward_folds(series, cfg.n_folds, cfg.eval_frac, cfg.test_frac)
    config.write_resolved(cfg, out)
    weights, gamma = _eval_params(cfg)
    results = evaluation.run_walk_forward(
        cfg.train, series, plan,
        eval_weights=weights, eval_gamma=gamma, metric=cfg.report_metric,
    )
    payload = {"n_folds": len(results), "metric": cfg.report_metric, "folds": [r.to_dict() for r in results]}
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote {len(results)} fold reports to {out / 'report.json'}")


def cmd_report(out: Path) -> None:
    metrics_path = out / "metrics.jsonl"
    if not metrics_path.exists():
        raise MissingFile(str(metrics_path))
    lines = [json.loads(line) for line in metrics_path.read_text().splitlines() if line.strip()]
    if not lines:
        raise MissingFile(f"{metrics_path} is empty")

    curves_path = out / "curves.csv"
    with open(curves_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "range", "metric", "value"])
        for line in lines:
            for range_id in REPORT_RANGES:
                for metric in evaluation.METRIC_FIELDS:
                    writer.writerow([line["episode"], range_id, metric, line[range_id][metric]])

    last = lines[-1]
    print(f"{'range':<8}" + "".join(f"{m:>20}" for m in evaluation.METRIC_FIELDS))
    for range_id in REPORT_RANGES:
        row = last[range_id]
        print(f"{range_id:<8}" + "".join(f"{row[m]:>20.6g}" for m in evaluation.METRIC_FIELDS))
    print(f"episodes evaluated: {len(lines)}; curves written to {curves_path}")


def dispatch(command: str, cfg: config.RunConfig | None, out: Path) -> None:
    if command == "report":
        cmd_report(out)
        return
    if cfg is None:
        raise MissingFile("--config is required for this command")
    if command == "train":
        cmd_train(cfg, out)
    elif command == "backtest":
        cmd_backtest(cfg, out)
    elif command == "walkforward":
        cmd_walkforward(cfg, out)
    else:
        raise ValueError(f"unknown command {command}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = None
        if args.config is not None:
            cfg = config.parse_config(args.config)
            cfg = config.apply_overrides(
                cfg,
                seed=args.seed,
                weights=_parse_weights(args.weights) if args.weights else None,
                metric=args.metric,
                range_=args.range_,
            )
        dispatch(args.command, cfg, Path(args.out))
    except EngineError as exc:
        print(json.dumps(exc.to_payload()))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

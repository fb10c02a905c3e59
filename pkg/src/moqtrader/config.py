"""Run configuration: a flat key/value text dialect plus a JSON mirror.

Config files are either `key = value` lines (values in JSON syntax, `#`
comments allowed, bare strings accepted) or a JSON object with the same
keys: the latter is what `config.resolved.json` contains, so a finished
run's resolved config can be fed straight back in to reproduce it.
Unknown keys are rejected; omitted keys take the documented defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agent import HINDSIGHT_REPLAY, HINDSIGHT_RESAMPLE, TrainConfig, validate_weights
from .env import Mode
from .errors import InvalidValue, MissingFile, UnknownKey
from .market_data import PriceSeries, load_csv
from .rewards import REWARD_COMPONENTS
from .synthetic import KINDS, generate_synthetic

_DEFAULT_GAMMA_RANGE = (0.5, 0.999)


@dataclass(frozen=True)
class RunConfig:
    """TrainConfig plus data source, split geometry and reporting knobs."""

    train: TrainConfig = field(default_factory=TrainConfig)

    data_csv: str | None = None
    timestamp_column: str = "timestamp"
    close_column: str = "close"
    asset_id: str | None = None

    synthetic_kind: str | None = None
    synthetic_length: int = 5000
    synthetic_base: float = 100.0
    synthetic_amplitude: float = 0.1
    synthetic_period: float = 50.0
    synthetic_drift: float = 0.0
    synthetic_seed: int = 0

    train_frac: float = 0.64
    eval_frac: float = 0.16
    test_frac: float = 0.20
    # Walk-forward plans need eval_frac + test_frac <= 1/(n_folds + 1) to fit
    # after the last fold's train range; the default fractions admit 1 fold.
    n_folds: int = 1

    eval_weights: tuple[float, float, float, float] | None = None
    eval_gamma: float | None = None
    report_metric: str = "sharpe"
    eval_range: str = "test"
    checkpoint: str | None = None

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_frac, self.eval_frac, self.test_frac)


# Flat config key -> (owner, attribute).  Declaration order is the file order.
_TRAIN_KEYS = {
    "mode": "mode",
    "multi_reward": "multi_reward",
    "reward": "reward",
    "generalize_gamma": "generalize_gamma",
    "gamma": "gamma",
    "gamma_range": "gamma_range",
    "alpha": "alpha",
    "tol": "tol",
    "batchsize": "batchsize",
    "k": "k",
    "episodes": "episodes",
    "eval_every": "eval_every",
    "reward_window": "reward_window",
    "lookback": "lookback",
    "episode_len": "episode_len",
    "random_access": "random_access",
    "fee": "fee",
    "max_age": "max_age",
    "hidden": "hidden",
    "learn_rate": "learn_rate",
    "momentum": "momentum",
    "sync_period": "sync_period",
    "whiten": "whiten",
    "eigen_floor": "eigen_floor",
    "hindsight_action": "hindsight_action",
    "pin_weights": "pin_weights",
    "seed": "seed",
}
_RUN_KEYS = (
    "data_csv",
    "timestamp_column",
    "close_column",
    "asset_id",
    "synthetic_kind",
    "synthetic_length",
    "synthetic_base",
    "synthetic_amplitude",
    "synthetic_period",
    "synthetic_drift",
    "synthetic_seed",
    "train_frac",
    "eval_frac",
    "test_frac",
    "n_folds",
    "eval_weights",
    "eval_gamma",
    "report_metric",
    "eval_range",
    "checkpoint",
)
ALL_KEYS = tuple(_TRAIN_KEYS) + _RUN_KEYS


def _parse_flat_text(text: str) -> dict:
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidValue(f"line {line_no}", f"expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            values[key] = json.loads(value)
        except json.JSONDecodeError:
            values[key] = value.strip('"')
    return values


def _coerce(raw: dict) -> RunConfig:
    unknown = [k for k in raw if k not in ALL_KEYS]
    if unknown:
        raise UnknownKey(unknown[0])

    def _check(cond: bool, key: str, reason: str) -> None:
        if not cond:
            raise InvalidValue(key, reason)

    train_kwargs = {}
    for key, attr in _TRAIN_KEYS.items():
        if key not in raw or raw[key] is None:
            continue
        value = raw[key]
        if key == "mode":
            _check(value in ("LP", "LSP"), key, "must be LP or LSP")
            value = Mode(value)
        elif key == "reward":
            _check(value in REWARD_COMPONENTS, key, f"must be one of {REWARD_COMPONENTS}")
        elif key == "hindsight_action":
            _check(value in (HINDSIGHT_RESAMPLE, HINDSIGHT_REPLAY), key, "must be resample or replay")
        elif key in ("multi_reward", "generalize_gamma", "random_access", "whiten"):
            _check(isinstance(value, bool), key, "must be true or false")
        elif key in ("batchsize", "k", "episodes", "eval_every", "reward_window",
                     "lookback", "episode_len", "max_age", "sync_period", "seed"):
            _check(isinstance(value, int) and not isinstance(value, bool), key, "must be an integer")
        elif key == "hidden":
            _check(
                isinstance(value, list) and all(isinstance(v, int) and v >= 1 for v in value),
                key, "must be a list of positive integers",
            )
            value = tuple(value)
        elif key == "gamma_range":
            _check(
                isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value),
                key, "must be a [low, high] pair",
            )
            value = (float(value[0]), float(value[1]))
        elif key == "pin_weights":
            _check(isinstance(value, list) and len(value) == 4, key, "must be a list of 4 reals")
            value = tuple(float(v) for v in value)
        else:
            _check(isinstance(value, (int, float)) and not isinstance(value, bool), key, "must be a number")
            value = float(value)
        train_kwargs[attr] = value

    if "gamma_range" in train_kwargs and not train_kwargs.get("generalize_gamma", False):
        raise InvalidValue("gamma_range", "only valid with generalize_gamma = true")
    if not train_kwargs.get("generalize_gamma", False):
        train_kwargs.pop("gamma_range", None)

    train = TrainConfig(**train_kwargs)
    train.validate()

    run_kwargs = {}
    for key in _RUN_KEYS:
        if key not in raw or raw[key] is None:
            continue
        value = raw[key]
        if key in ("data_csv", "timestamp_column", "close_column", "asset_id", "checkpoint",
                   "synthetic_kind", "report_metric", "eval_range"):
            _check(isinstance(value, str), key, "must be a string")
        elif key in ("synthetic_length", "synthetic_seed", "n_folds"):
            _check(isinstance(value, int) and not isinstance(value, bool), key, "must be an integer")
        elif key == "eval_weights":
            _check(isinstance(value, list) and len(value) == 4, key, "must be a list of 4 reals")
            value = tuple(float(v) for v in value)
        else:
            _check(isinstance(value, (int, float)) and not isinstance(value, bool), key, "must be a number")
            value = float(value)
        run_kwargs[key] = value

    cfg = RunConfig(train=train, **run_kwargs)
    _validate_run(cfg)
    return cfg


def _validate_run(cfg: RunConfig) -> None:
    def _check(cond: bool, key: str, reason: str) -> None:
        if not cond:
            raise InvalidValue(key, reason)

    _check(
        (cfg.data_csv is not None) != (cfg.synthetic_kind is not None),
        "data_csv", "exactly one of data_csv or synthetic_kind must be set",
    )
    if cfg.synthetic_kind is not None:
        _check(cfg.synthetic_kind in KINDS, "synthetic_kind", f"must be one of {KINDS}")
        _check(cfg.synthetic_length >= cfg.train.lookback + 2, "synthetic_length", "must be >= lookback + 2")
    for key in ("train_frac", "eval_frac", "test_frac"):
        _check(getattr(cfg, key) > 0, key, "must be > 0")
    _check(abs(sum(cfg.fractions) - 1.0) <= 1e-9, "train_frac", "fractions must sum to 1")
    _check(cfg.n_folds >= 1, "n_folds", "must be >= 1")
    _check(cfg.report_metric in ("sharpe", "profit"), "report_metric", "must be sharpe or profit")
    _check(cfg.eval_range in ("train", "eval", "test"), "eval_range", "must be train, eval or test")
    if cfg.eval_weights is not None:
        try:
            validate_weights(np.asarray(cfg.eval_weights))
        except InvalidValue:
            raise InvalidValue("eval_weights", "must lie on the unit 4-simplex") from None
    if cfg.eval_gamma is not None:
        _check(0.0 < cfg.eval_gamma < 1.0, "eval_gamma", "must be in (0, 1)")


def to_flat_dict(cfg: RunConfig) -> dict:
    """All effective values, defaults included, in declaration order.

    gamma_range is emitted only in generalize_gamma mode (it has no effect
    otherwise, and emitting it would make the file invalid to re-parse).
    """
    out = {}
    for key, attr in _TRAIN_KEYS.items():
        value = getattr(cfg.train, attr)
        if key == "mode":
            value = value.value
        elif key == "gamma_range":
            value = list(value) if cfg.train.generalize_gamma else None
        elif key == "hidden":
            value = list(value)
        elif key == "pin_weights" and value is not None:
            value = list(value)
        out[key] = value
    for key in _RUN_KEYS:
        value = getattr(cfg, key)
        if key == "eval_weights" and value is not None:
            value = list(value)
        out[key] = value
    return out


def format_config(cfg: RunConfig) -> str:
    """Render a RunConfig in the flat dialect; parse_config inverts this."""
    lines = [f"{key} = {json.dumps(value)}" for key, value in to_flat_dict(cfg).items()]
    return "\n".join(lines) + "\n"


def parse_config(path: str | Path) -> RunConfig:
    """Load and fully validate a config file (flat dialect or JSON object)."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidValue("json", str(exc)) from exc
        if not isinstance(raw, dict):
            raise InvalidValue("json", "top level must be an object")
    else:
        raw = _parse_flat_text(text)
    return _coerce(raw)


def write_resolved(cfg: RunConfig, out_dir: str | Path) -> Path:
    """Persist config.resolved.json: enough to reproduce the run bit-exactly."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "config.resolved.json"
    target.write_text(json.dumps(to_flat_dict(cfg), indent=2) + "\n")
    return target


def load_series(cfg: RunConfig) -> PriceSeries:
    """Materialize the configured data source."""
    if cfg.data_csv is not None:
        column_map = {"timestamp": cfg.timestamp_column, "close": cfg.close_column}
        return load_csv(cfg.data_csv, column_map=column_map, asset_id=cfg.asset_id)
    return generate_synthetic(
        cfg.synthetic_kind,
        cfg.synthetic_length,
        base=cfg.synthetic_base,
        amplitude=cfg.synthetic_amplitude,
        period=cfg.synthetic_period,
        drift=cfg.synthetic_drift,
        seed=cfg.synthetic_seed,
        asset_id=cfg.asset_id,
    )


def apply_overrides(
    cfg: RunConfig,
    *,
    seed: int | None = None,
    weights: tuple[float, float, float, float] | None = None,
    metric: str | None = None,
    range_: str | None = None,
) -> RunConfig:
    """Apply CLI flag overrides on top of a parsed config."""
    if seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=seed))
    if weights is not None:
        validate_weights(np.asarray(weights))
        cfg = replace(cfg, eval_weights=tuple(float(w) for w in weights))
    if metric is not None:
        if metric not in ("sharpe", "profit"):
            raise InvalidValue("metric", "must be sharpe or profit")
        cfg = replace(cfg, report_metric=metric)
    if range_ is not None:
        if range_ not in ("train", "eval", "test"):
            raise InvalidValue("range", "must be train, eval or test")
        cfg = replace(cfg, eval_range=range_)
    return cfg

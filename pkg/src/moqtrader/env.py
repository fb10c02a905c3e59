"""Deterministic single-asset trading environment.

Actions name the position to hold next (target-position semantics):
Buy -> Long, Sell -> Short, Hold -> Neutral.  A trade occurs exactly when
the target differs from the current position.  Position changes execute at
the current close price; the new position is held over (t, t+1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .errors import EpisodeExhausted, InvalidActionForMode, RangeTooShort
from .market_data import IndexRange, PriceSeries
from .rewards import CloseEvent, ReturnTrace, RewardVector, reward_vector


class Position(IntEnum):
    LONG = 1
    SHORT = -1
    NEUTRAL = 0


class Action(IntEnum):
    BUY = 0
    SELL = 1
    HOLD = 2


_TARGET = {Action.BUY: Position.LONG, Action.SELL: Position.SHORT, Action.HOLD: Position.NEUTRAL}


class Mode(Enum):
    """Action-space mode: long-only (LP) or long-and-short (LSP)."""

    LP = "LP"
    LSP = "LSP"

    @property
    def actions(self) -> tuple[Action, ...]:
        if self is Mode.LP:
            return (Action.BUY, Action.HOLD)
        return (Action.BUY, Action.SELL, Action.HOLD)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def positions(self) -> tuple[Position, ...]:
        if self is Mode.LP:
            return (Position.LONG, Position.NEUTRAL)
        return (Position.LONG, Position.SHORT, Position.NEUTRAL)


def position_transition(current: Position, action_id: int, mode: Mode) -> Position:
    """Map an action id (index into mode.actions) to the next position."""
    if not 0 <= action_id < mode.n_actions:
        raise InvalidActionForMode(f"action id {action_id} invalid for mode {mode.value}")
    return _TARGET[mode.actions[action_id]]


@dataclass(frozen=True)
class EnvState:
    """Cursor into the series plus everything the next step depends on.

    ret_window holds the most recent window-1 portfolio log-returns
    (zero-padded at episode start); trade_anchor is the index of the last
    position change, absent while neutral since the start.
    """

    cursor: int
    position: Position
    trade_anchor: int | None
    ret_window: tuple[float, ...]


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: RewardVector
    done: bool
    trade_occurred: bool


class TradingEnv:
    """Replayable environment over an immutable PriceSeries.

    `transition` is pure in the state argument, which is what makes
    counterfactual (hindsight) steps free: they never advance the episode.
    """

    def __init__(
        self,
        series: PriceSeries,
        mode: Mode,
        *,
        lookback: int,
        reward_window: int,
        fee: float = 0.0,
    ):
        if lookback < 1:
            raise ValueError("lookback must be >= 1")
        if reward_window < 1:
            raise ValueError("reward_window must be >= 1")
        if not 0.0 <= fee < 1.0:
            raise ValueError("fee must be in [0, 1)")
        self.series = series
        self.mode = mode
        self.lookback = lookback
        self.reward_window = reward_window
        self.fee = fee
        self._fee_log = math.log1p(-fee)
        self.log_close = series.log_close
        self.log_returns = series.log_returns
        self._episode: IndexRange | None = None
        self.state: EnvState | None = None

    @property
    def episode_range(self) -> IndexRange:
        if self._episode is None:
            raise RuntimeError("environment not reset")
        return self._episode

    def reset(
        self,
        range_: IndexRange,
        *,
        random_access: bool = False,
        episode_len: int | None = None,
        rng: np.random.Generator | None = None,
    ) -> EnvState:
        """Start an episode over `range_`, optionally on a random sub-range.

        With random_access, the sub-range start is drawn uniformly from all
        starts that fit lookback + episode_len steps + 1 terminal price.
        """
        lo, hi = range_
        span = hi - lo
        if span < self.lookback + 2:
            raise RangeTooShort(f"range length {span} < lookback + 2 = {self.lookback + 2}")
        if random_access:
            if episode_len is None or rng is None:
                raise ValueError("random_access requires episode_len and rng")
            need = self.lookback + episode_len + 1
            if need > span:
                raise RangeTooShort(f"episode needs {need} rows, range has {span}")
            start = lo + int(rng.integers(0, span - need + 1))
            self._episode = (start, start + need)
        else:
            self._episode = (lo, hi)
        elo, _ = self._episode
        self.state = EnvState(
            cursor=elo + self.lookback,
            position=Position.NEUTRAL,
            trade_anchor=None,
            ret_window=(0.0,) * (self.reward_window - 1),
        )
        return self.state

    def state_features(self, state: EnvState) -> np.ndarray:
        """Network-facing features: lookback log-returns then position code."""
        t = state.cursor
        feats = np.empty(self.lookback + 1)
        feats[: self.lookback] = self.log_returns[t - self.lookback : t]
        feats[self.lookback] = float(state.position.value)
        return feats

    def transition(self, state: EnvState, action_id: int) -> StepOutcome:
        """One step from `state` without touching the environment's own state."""
        lo, hi = self.episode_range
        t = state.cursor
        if t + 1 >= hi:
            raise EpisodeExhausted(f"cursor {t} is at the episode end")
        new_pos = position_transition(state.position, action_id, self.mode)
        trade = new_pos is not state.position

        lr = float(new_pos.value) * float(self.log_returns[t])
        close_event = None
        if trade:
            flip = state.position.value * new_pos.value == -1
            lr += (2 if flip else 1) * self._fee_log
            if state.position is not Position.NEUTRAL:
                close_event = CloseEvent(
                    position_sign=state.position.value,
                    open_price=float(self.series.close[state.trade_anchor]),
                    close_price=float(self.series.close[t]),
                )

        window = state.ret_window + (lr,)
        reward = reward_vector(ReturnTrace(window), close_event, self.reward_window)
        next_state = EnvState(
            cursor=t + 1,
            position=new_pos,
            trade_anchor=t if trade else state.trade_anchor,
            ret_window=window[1:],
        )
        done = t + 1 == hi - 1
        return StepOutcome(next_state, reward, done, trade)

    def step(self, action_id: int) -> StepOutcome:
        """Advance the live episode by one step."""
        if self.state is None:
            raise RuntimeError("environment not reset")
        outcome = self.transition(self.state, action_id)
        self.state = outcome.next_state
        return outcome

    def steps_in(self, range_: IndexRange) -> int:
        """Number of steps a full pass over `range_` yields."""
        lo, hi = range_
        return hi - lo - self.lookback - 1

import math

import numpy as np
import pytest

from moqtrader.env import Action, Mode, Position, TradingEnv, position_transition
from moqtrader.errors import EpisodeExhausted, InvalidActionForMode, RangeTooShort
from moqtrader.market_data import PriceSeries
from moqtrader.synthetic import generate_synthetic

LN_1_1 = 0.09531017980432493
FEE_LOG = -0.00030004500900202545  # ln(1 - 0.0003)

BUY, SELL, HOLD = 0, 1, 2  # LSP action ids
LP_BUY, LP_HOLD = 0, 1


def series_of(closes):
    closes = np.asarray(closes, dtype=np.float64)
    return PriceSeries("test", np.arange(len(closes), dtype=np.int64), closes)


def flat_then(closes, lookback):
    """Prefix with enough flat prices to admit the lookback."""
    return series_of([closes[0]] * lookback + list(closes))


class TestPositionTransition:
    def test_target_position_semantics(self):
        assert position_transition(Position.LONG, LP_HOLD, Mode.LP) is Position.NEUTRAL
        assert position_transition(Position.NEUTRAL, BUY, Mode.LSP) is Position.LONG
        assert position_transition(Position.NEUTRAL, SELL, Mode.LSP) is Position.SHORT
        assert position_transition(Position.SHORT, HOLD, Mode.LSP) is Position.NEUTRAL

    def test_sell_invalid_in_lp(self):
        with pytest.raises(InvalidActionForMode):
            position_transition(Position.LONG, 2, Mode.LP)

    def test_action_order(self):
        assert Mode.LP.actions == (Action.BUY, Action.HOLD)
        assert Mode.LSP.actions == (Action.BUY, Action.SELL, Action.HOLD)


class TestReset:
    def test_first_feasible_cursor(self):
        env = TradingEnv(series_of(np.linspace(100, 200, 100)), Mode.LSP, lookback=10, reward_window=5)
        state = env.reset((0, 100))
        assert state.cursor == 10
        assert state.position is Position.NEUTRAL
        assert state.trade_anchor is None
        assert state.ret_window == (0.0,) * 4

    def test_random_access_deterministic(self):
        series = series_of(np.linspace(100, 200, 100))
        env = TradingEnv(series, Mode.LSP, lookback=10, reward_window=5)
        cursors = [
            env.reset((0, 100), random_access=True, episode_len=20, rng=np.random.default_rng(42)).cursor
            for _ in range(3)
        ]
        assert cursors[0] == cursors[1] == cursors[2]

    def test_random_access_covers_feasible_starts(self):
        series = series_of(np.linspace(100, 200, 40))
        env = TradingEnv(series, Mode.LSP, lookback=5, reward_window=3)
        rng = np.random.default_rng(0)
        starts = {env.reset((0, 40), random_access=True, episode_len=10, rng=rng).cursor for _ in range(400)}
        # feasible episode starts are [0, 40 - (5 + 10 + 1)] = [0, 24]; cursor = start + 5
        assert starts == set(range(5, 30))

    def test_range_too_short(self):
        env = TradingEnv(series_of(np.linspace(100, 200, 100)), Mode.LSP, lookback=10, reward_window=5)
        with pytest.raises(RangeTooShort):
            env.reset((0, 5))
        with pytest.raises(RangeTooShort):
            env.reset((0, 20), random_access=True, episode_len=50, rng=np.random.default_rng(0))


class TestStep:
    def test_long_log_return(self):
        series = flat_then([100.0, 110.0], lookback=3)
        env = TradingEnv(series, Mode.LSP, lookback=3, reward_window=4)
        env.reset((0, len(series)))
        out = env.step(BUY)
        assert out.trade_occurred
        assert abs(out.reward.lr - LN_1_1) < 1e-12

    def test_neutral_gets_zero(self):
        series = flat_then([100.0, 110.0], lookback=3)
        env = TradingEnv(series, Mode.LSP, lookback=3, reward_window=4)
        env.reset((0, len(series)))
        out = env.step(HOLD)
        assert out.reward.lr == 0.0
        assert not out.trade_occurred

    def test_fee_added_to_log_return(self):
        series = flat_then([100.0, 110.0], lookback=3)
        env = TradingEnv(series, Mode.LSP, lookback=3, reward_window=4, fee=0.0003)
        env.reset((0, len(series)))
        out = env.step(BUY)
        assert abs(out.reward.lr - (LN_1_1 + FEE_LOG)) < 1e-12

    def test_long_short_flip_pays_two_legs(self):
        series = flat_then([100.0, 110.0, 120.0, 125.0], lookback=3)
        env = TradingEnv(series, Mode.LSP, lookback=3, reward_window=4, fee=0.001)
        env.reset((0, len(series)))
        env.step(BUY)
        out = env.step(SELL)
        expected = -math.log(120.0 / 110.0) + 2 * math.log1p(-0.001)
        assert abs(out.reward.lr - expected) < 1e-12

    def test_powc_emitted_on_close_only(self):
        series = flat_then([100.0, 110.0, 120.0, 125.0], lookback=3)
        env = TradingEnv(series, Mode.LSP, lookback=3, reward_window=4)
        env.reset((0, len(series)))
        assert env.step(BUY).reward.powc == 0.0       # open long at 100
        assert env.step(BUY).reward.powc == 0.0       # keep holding
        out = env.step(HOLD)                          # close long at 120
        assert abs(out.reward.powc - (math.log(120.0) - math.log(100.0))) < 1e-12

    def test_done_at_final_index_and_exhaustion(self):
        series = series_of(np.linspace(100, 110, 8))
        env = TradingEnv(series, Mode.LSP, lookback=3, reward_window=2)
        env.reset((0, 8))
        outcomes = [env.step(HOLD) for _ in range(4)]
        assert [o.done for o in outcomes] == [False, False, False, True]
        with pytest.raises(EpisodeExhausted):
            env.step(HOLD)

    def test_episode_step_count_matches_contract(self):
        series = series_of(np.linspace(100, 110, 60))
        env = TradingEnv(series, Mode.LSP, lookback=7, reward_window=3)
        env.reset((10, 50))
        steps = 0
        while True:
            out = env.step(HOLD)
            steps += 1
            if out.done:
                break
        assert steps == env.steps_in((10, 50)) == 50 - 10 - 7 - 1


class TestTrajectoryProperties:
    def make_env(self, seed=0, fee=0.0, n=300):
        series = generate_synthetic("random-walk", n, amplitude=0.01, seed=seed)
        return TradingEnv(series, Mode.LSP, lookback=8, reward_window=6, fee=fee)

    def run(self, env, actions, range_=None):
        state = env.reset(range_ or (0, len(env.series)))
        rows = []
        for a in actions:
            out = env.step(a)
            rows.append((out.next_state.position.value, out.reward, out.trade_occurred, out.done))
            if out.done:
                break
        return rows

    def test_bit_identical_replay(self):
        env = self.make_env(seed=1)
        rng = np.random.default_rng(7)
        actions = [int(a) for a in rng.integers(0, 3, size=env.steps_in((0, len(env.series))))]
        first = self.run(env, actions)
        second = self.run(env, actions)
        assert first == second  # tuple/float equality, not approx

    def test_lookback_consistency(self):
        env = self.make_env(seed=2)
        state = env.reset((0, len(env.series)))
        rng = np.random.default_rng(8)
        close = env.series.close
        while True:
            feats = env.state_features(state)
            t = state.cursor
            recomputed = [math.log(close[t - env.lookback + 1 + j]) - math.log(close[t - env.lookback + j]) for j in range(env.lookback)]
            np.testing.assert_allclose(feats[: env.lookback], recomputed, atol=1e-12, rtol=0)
            assert feats[env.lookback] == float(state.position.value)
            out = env.step(int(rng.integers(0, 3)))
            state = out.next_state
            if out.done:
                break

    def test_sign_antisymmetry(self):
        env = self.make_env(seed=3)
        rng = np.random.default_rng(9)
        actions = [int(a) for a in rng.integers(0, 3, size=100)]
        mirrored = [{BUY: SELL, SELL: BUY, HOLD: HOLD}[a] for a in actions]
        lr_a = [row[1].lr for row in self.run(env, actions)]
        lr_b = [row[1].lr for row in self.run(env, mirrored)]
        assert all(a == -b or (a == 0.0 and b == 0.0) for a, b in zip(lr_a, lr_b))

    def test_fee_monotonicity(self):
        rng = np.random.default_rng(10)
        actions = [int(a) for a in rng.integers(0, 3, size=200)]
        profits = []
        for fee in (0.0, 1e-4, 1e-3, 1e-2):
            env = self.make_env(seed=4, fee=fee)
            total = sum(row[1].lr for row in self.run(env, actions))
            profits.append(math.exp(total) - 1.0)
        assert all(a >= b - 1e-15 for a, b in zip(profits, profits[1:]))

    def test_powc_only_on_trades(self):
        env = self.make_env(seed=5)
        rng = np.random.default_rng(11)
        actions = [int(a) for a in rng.integers(0, 3, size=250)]
        for position, reward, traded, done in self.run(env, actions):
            if reward.powc != 0.0:
                assert traded

    def test_telescoping_against_brute_force(self):
        # all positions closed by the end: sum(powc) == sum(lr) == per-trade oracle
        rng = np.random.default_rng(12)
        for trial in range(20):
            env = self.make_env(seed=100 + trial)
            n_steps = env.steps_in((0, len(env.series)))
            actions = [int(a) for a in rng.integers(0, 3, size=n_steps - 1)] + [HOLD]
            rows = self.run(env, actions)
            total_lr = sum(row[1].lr for row in rows)
            total_powc = sum(row[1].powc for row in rows)
            assert abs(total_lr - total_powc) < 1e-9

            # brute-force oracle: sum the raw log-return of each closed trade
            log_close = env.series.log_close
            cursor = env.lookback
            pos, anchor, oracle = 0, None, 0.0
            for a, row in zip(actions, rows):
                new_pos = {BUY: 1, SELL: -1, HOLD: 0}[a]
                if new_pos != pos:
                    if pos != 0:
                        oracle += pos * (log_close[cursor] - log_close[anchor])
                    anchor = cursor
                pos = new_pos
                cursor += 1
            assert abs(oracle - total_powc) < 1e-9

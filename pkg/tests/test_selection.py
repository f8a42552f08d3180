import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from atm.errors import ContractViolation, NotFound
from atm.planner import ScriptedPlanner
from atm.selection import (
    Evaluator,
    Method,
    MethodSelector,
    SelectionConfig,
    blend_evaluator,
    default_similarity,
    epsilon_schedule,
    eta_schedule,
    intuition_fallback,
    reset_exploration,
    reuse_similar,
    select_method,
    update_estimate,
)
from atm.world import ScenarioKey


class FixedRng:
    """Stub generator: deterministic exploration coin and index draw."""

    def __init__(self, coin, index=0):
        self.coin = coin
        self.index = index

    def random(self):
        return self.coin

    def integers(self, n):
        return self.index % n


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


def test_epsilon_schedule_values():
    assert epsilon_schedule(1) == 1.0
    assert epsilon_schedule(5) == 1.0
    assert epsilon_schedule(10) == pytest.approx(0.5)
    assert epsilon_schedule(500) == pytest.approx(0.01)


def test_epsilon_schedule_validation():
    with pytest.raises(ContractViolation):
        epsilon_schedule(0)
    with pytest.raises(ContractViolation):
        epsilon_schedule(1, c=0.0)


def test_eta_schedule_is_sample_mean_rate():
    assert eta_schedule(1) == 1.0
    assert eta_schedule(4) == pytest.approx(0.25)
    with pytest.raises(ContractViolation):
        eta_schedule(0)


# ---------------------------------------------------------------------------
# select_method
# ---------------------------------------------------------------------------


def test_greedy_picks_argmax():
    # coin 0.999 never explores at any reachable epsilon below 1
    idx = select_method([0.2, 0.8], t=1_000_000, rng=FixedRng(0.999))
    assert idx == 1


def test_exploration_is_uniform_chi_square():
    rng = np.random.default_rng(42)
    counts = np.zeros(4)
    for _ in range(10_000):
        counts[select_method([0.1, 0.2, 0.3, 0.4], t=1, rng=rng)] += 1  # eps=1
    assert stats.chisquare(counts).pvalue > 0.01


def test_single_method_always_selected():
    for t in (1, 10, 1000):
        assert select_method([0.5], t=t, rng=np.random.default_rng(t)) == 0


def test_empty_roster_not_found():
    with pytest.raises(NotFound):
        select_method([], t=1, rng=np.random.default_rng(0))


def test_greedy_tie_break_first_max():
    assert select_method([0.7, 0.7, 0.2], t=10**9, rng=FixedRng(0.999)) == 0


@given(st.lists(st.floats(min_value=-10, max_value=10), min_size=1, max_size=8))
def test_greedy_choice_stays_optimal_under_increasing_transform(estimates):
    # tanh saturates, so distinct raw values can collapse to the same float
    # and shift the tie-break; the raw argmax must still attain the squashed
    # maximum, and both choices must be squashed-optimal
    rng = FixedRng(0.999)
    raw = select_method(estimates, t=10**9, rng=rng)
    squashed = [float(np.tanh(q)) for q in estimates]
    chosen = select_method(squashed, t=10**9, rng=rng)
    assert squashed[raw] == max(squashed)
    assert squashed[chosen] == squashed[raw]


# ---------------------------------------------------------------------------
# update_estimate
# ---------------------------------------------------------------------------


def test_update_estimate_formula():
    assert update_estimate(0.5, 1.0, 0.1) == pytest.approx(0.55)


def test_update_estimate_fixed_point():
    assert update_estimate(0.4, 0.4, 0.3) == pytest.approx(0.4)


def test_sample_mean_converges_to_bernoulli_mean():
    rng = np.random.default_rng(9)
    q, pulls = 1.0, 0
    for _ in range(10_000):
        pulls += 1
        q = update_estimate(q, float(rng.random() < 0.7), eta_schedule(pulls))
    assert q == pytest.approx(0.7, abs=0.02)


@given(
    rewards=st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=50),
    q0=st.floats(min_value=0, max_value=1),
)
def test_estimates_stay_in_unit_interval(rewards, q0):
    q, pulls = q0, 0
    for r in rewards:
        pulls += 1
        q = update_estimate(q, r, eta_schedule(pulls))
        assert 0.0 <= q <= 1.0


# ---------------------------------------------------------------------------
# MethodSelector
# ---------------------------------------------------------------------------


def test_selector_validates_roster():
    with pytest.raises(ContractViolation):
        MethodSelector([])
    with pytest.raises(ContractViolation):
        MethodSelector(["a", "a"])


def test_selector_reset_restores_initial_state():
    sel = MethodSelector(["a", "b"], SelectionConfig(optimistic_init=1.0), np.random.default_rng(0))
    for _ in range(30):
        sel.update(sel.select(), 0.0)
    assert sel.t == 30 and any(p > 0 for p in sel.pulls)
    reset_exploration(sel)
    assert sel.estimates == [1.0, 1.0]
    assert sel.pulls == [0, 0]
    assert sel.t == 0


def test_selector_update_tracks_sample_mean():
    sel = MethodSelector(["a", "b"], rng=np.random.default_rng(1))
    sel.update(0, 1.0)
    sel.update(0, 0.0)
    assert sel.estimates[0] == pytest.approx(0.5)
    assert sel.pulls[0] == 2


def test_selector_update_range_check():
    sel = MethodSelector(["a"], rng=np.random.default_rng(1))
    with pytest.raises(ContractViolation):
        sel.update(3, 1.0)


def test_selector_select_id():
    sel = MethodSelector(["only"], rng=np.random.default_rng(2))
    assert sel.select_id() == "only"


# ---------------------------------------------------------------------------
# cross-question reuse
# ---------------------------------------------------------------------------


def test_reuse_identical_question():
    known = [("align the antenna", "m_antenna"), ("brew the coffee", "m_coffee")]
    method = reuse_similar("brew the coffee", known)
    assert method.method_id == "m_coffee" and method.origin == "reused"


def test_reuse_argmax_of_similarities():
    sims = {"q_a": 0.2, "q_b": 0.9}
    method = reuse_similar("q", [("q_a", "m1"), ("q_b", "m2")], sim=lambda u, k: sims[k])
    assert method.method_id == "m2"


def test_reuse_tie_breaks_by_insertion():
    method = reuse_similar("q", [("k1", "first"), ("k2", "second")], sim=lambda u, k: 0.5)
    assert method.method_id == "first"


def test_reuse_empty_known_set():
    with pytest.raises(NotFound):
        reuse_similar("q", [])


def test_default_similarity_overlap():
    assert default_similarity("a b c", "a b c") == 1.0
    assert default_similarity("a b", "c d") == 0.0
    assert default_similarity("a b c d", "c d e f") == pytest.approx(2 / 6)


# ---------------------------------------------------------------------------
# intuition fallback
# ---------------------------------------------------------------------------


def test_intuition_uses_fixture_table():
    planner = ScriptedPlanner(intuition_table={(1, 2): "jump"}, default_action="hold")
    assert intuition_fallback(ScenarioKey((1, 2)), planner, urgency=True) == "jump"


def test_intuition_falls_back_to_default_action():
    planner = ScriptedPlanner(intuition_table={(1, 2): "jump"}, default_action="hold")
    assert intuition_fallback(ScenarioKey((8, 8)), planner, urgency=True) == "hold"


def test_intuition_requires_urgency():
    with pytest.raises(ContractViolation):
        intuition_fallback(ScenarioKey((1,)), ScriptedPlanner(default_action="x"))


def test_intuition_propagates_planner_failure():
    with pytest.raises(NotFound):
        intuition_fallback(ScenarioKey((1,)), ScriptedPlanner(), urgency=True)


def test_intuition_makes_exactly_one_planner_call():
    class CountingPlanner(ScriptedPlanner):
        calls = 0

        def respond(self, req):
            CountingPlanner.calls += 1
            return super().respond(req)

    planner = CountingPlanner(default_action="hold")
    intuition_fallback(ScenarioKey((0,)), planner, urgency=True)
    assert CountingPlanner.calls == 1


# ---------------------------------------------------------------------------
# evaluator blending
# ---------------------------------------------------------------------------


def test_blend_convex_combination():
    out = blend_evaluator(Evaluator([0.0, 1.0]), Evaluator([1.0, 0.0]), beta=0.5)
    assert out.weights.tolist() == [0.5, 0.5]


def test_blend_fixed_point():
    cur = Evaluator([0.3, 0.7])
    out = blend_evaluator(cur, Evaluator([0.3, 0.7]), beta=0.25)
    assert np.allclose(out.weights, cur.weights)


def test_blend_dimension_mismatch():
    with pytest.raises(ContractViolation):
        blend_evaluator(Evaluator([1.0]), Evaluator([1.0, 2.0]), beta=0.5)


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.2, 1.7])
def test_blend_beta_open_interval(beta):
    with pytest.raises(ContractViolation):
        blend_evaluator(Evaluator([1.0]), Evaluator([0.0]), beta=beta)


def test_method_record_validation():
    Method("m", estimate=0.5, pulls=3, origin="intuition")
    with pytest.raises(ContractViolation):
        Method("m", pulls=-1)
    with pytest.raises(ContractViolation):
        Method("m", origin="copied")
    with pytest.raises(ContractViolation):
        Method("m", estimate=float("nan"))

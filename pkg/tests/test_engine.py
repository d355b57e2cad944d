import threading
import time
from dataclasses import replace
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from vigildebate.agents import AgentResponse, MockBackend, MockScore, format_score_tag, parse_score
from vigildebate.engine import (
    DebateConfig,
    DebateTranscript,
    SynthesisMode,
    audit_causality,
    fingerprint,
    run_debate,
    synthesize,
)
from vigildebate.errors import AllAgentsFailed, BackendTimeout, InvalidConfig, ScoringFailed
from vigildebate.topology import TopologyKind

GOLDEN = Path(__file__).parent / "golden" / "seed7_default_Q1.json"
DEFAULT_FINGERPRINT = "af1f91745d078ad1"


def scored(i, h, s, round_index=3):
    return AgentResponse(f"answer {i}\n{format_score_tag(MockScore(h, s))}", i, round_index)


def test_default_config_matches_reported_setup():
    cfg = DebateConfig()
    assert (cfg.n_agents, cfg.group_size, cfg.rounds) == (5, 3, 3)
    assert cfg.topology is TopologyKind.INTERVAL and cfg.vigilance_enabled


def test_fingerprint():
    assert fingerprint(DebateConfig()) == fingerprint(DebateConfig())
    assert fingerprint(DebateConfig(seed=1)) != fingerprint(DebateConfig(seed=2))
    assert fingerprint(DebateConfig()) == DEFAULT_FINGERPRINT


def test_golden_transcript_bytes():
    t = run_debate("Q1", DebateConfig(seed=7), question_id="Q1")
    assert t.to_json().encode("utf-8") == GOLDEN.read_bytes()


def test_golden_shape_and_monotone_balance():
    t = run_debate("Q1", DebateConfig(seed=7))
    assert len(t.rounds) == 4 and all(len(r) == 5 for r in t.rounds)
    balances = t.balances()
    for k in range(5):
        series = [balances[r][k] for r in range(4)]
        assert all(a <= b for a, b in zip(series, series[1:]))
    assert audit_causality(t, DebateConfig().plan()) == []


def test_zero_rounds():
    t = run_debate("Q", DebateConfig(rounds=0))
    assert len(t.rounds) == 1
    assert all(turn.references == () for turn in t.rounds[0])
    assert t.final_answer


def test_single_agent():
    t = run_debate("Q", DebateConfig(n_agents=1))
    assert all(row[0].references in ((), (0,)) for row in t.rounds)
    assert t.final_answer == t.rounds[-1][0].response.text
    assert t.synthesis_detail["mode"] == "singleton"


@pytest.mark.parametrize("kind", list(TopologyKind))
def test_causality_audit_all_topologies(kind):
    cfg = DebateConfig(topology=kind, n_agents=6, seed=3)
    t = run_debate("Some question?", cfg)
    assert audit_causality(t, cfg.plan()) == []


def test_audit_detects_tampering():
    cfg = DebateConfig()
    t = run_debate("Q", cfg)
    t.rounds[2][0] = replace(t.rounds[2][0], references=(0, 1))
    assert audit_causality(t, cfg.plan())


def test_synthesize_tie_break_on_harmlessness():
    resp = [scored(0, 0.6, 0.6), scored(1, 0.7, 0.6), scored(2, 0.6, 0.7), scored(3, 0.65, 0.65), scored(4, 0.6, 0.6)]
    text, detail = synthesize(resp, SynthesisMode.SCORED_ARGMAX, 1, 1)
    assert detail["chosen_agent"] == 2 and text == resp[2].text


def test_synthesize_singleton_any_mode():
    only = [scored(0, 0.2, 0.2)]
    for mode in SynthesisMode:
        assert synthesize(only, mode, 1, 1, backend=MockBackend())[0] == only[0].text


def test_synthesize_full_tie_lowest_index():
    resp = [scored(i, 0.5, 0.5) for i in range(4)]
    assert synthesize(resp, SynthesisMode.SCORED_ARGMAX)[1]["chosen_agent"] == 0


def test_synthesize_unscored_falls_back_or_fails():
    resp = [AgentResponse("plain text", 0, 1), AgentResponse("other", 1, 1)]
    with pytest.raises(ScoringFailed):
        synthesize(resp, SynthesisMode.SCORED_ARGMAX, fallback=False, backend=MockBackend())

    class Echo:
        backend_id = "echo"

        def generate(self, request):
            return AgentResponse("merged", request.agent_index, request.round_index)

    text, detail = synthesize(resp, SynthesisMode.SCORED_ARGMAX, backend=Echo(), question="Q")
    assert text == "merged" and detail["mode"] == "aggregator" and "fallback_reason" in detail


def test_synthesize_uses_scorer_for_opaque_text():
    resp = [AgentResponse("x", 0, 1), AgentResponse("y", 1, 1)]
    table = {"x": MockScore(0.2, 0.2), "y": MockScore(0.5, 0.1)}
    _, detail = synthesize(resp, scorer=lambda q, text: table[text])
    assert detail["chosen_agent"] == 1


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=6),
    st.floats(0.1, 5),
    st.floats(0.1, 5),
    st.floats(0.1, 10),
)
def test_argmax_invariant_under_common_scaling(pairs, alpha, beta, c):
    resp = [scored(i, round(h, 6), round(s, 6)) for i, (h, s) in enumerate(pairs)]
    a = synthesize(resp, SynthesisMode.SCORED_ARGMAX, alpha, beta)[0]
    b = synthesize(resp, SynthesisMode.SCORED_ARGMAX, alpha * c, beta * c)[0]
    # Only compare when the rounded balance ordering is unaffected by scaling.
    qa = sorted({round(alpha * s.helpfulness + beta * s.harmlessness, 6) for s in (parse_score(r.text) for r in resp)})
    if all(y - x > 1e-6 for x, y in zip(qa, qa[1:])):
        assert a == b


def test_aggregator_mode_with_mock():
    t = run_debate("Q", DebateConfig(synthesis_mode=SynthesisMode.AGGREGATOR))
    final = parse_score(t.final_answer)
    last = [parse_score(turn.response.text) for turn in t.rounds[-1]]
    assert final.helpfulness == max(s.helpfulness for s in last)
    assert final.harmlessness == min(s.harmlessness for s in last)
    assert "Other agents' answers:" in t.synthesis_detail["prompt"]


class Flaky(MockBackend):
    def __init__(self, fail, **kw):
        super().__init__(**kw)
        self.fail = fail

    def generate(self, request):
        if self.fail(request.agent_index, request.round_index):
            raise BackendTimeout("simulated")
        return super().generate(request)


def test_failed_agent_carries_forward():
    backend = Flaky(lambda k, t: k == 1 and t == 2, seed=7)
    t = run_debate("Q1", DebateConfig(seed=7), backend=backend)
    turn = t.rounds[2][1]
    assert turn.failed and turn.response.carried_forward
    assert turn.response.text == t.rounds[1][1].response.text
    assert t.failures == [{"agent_index": 1, "round_index": 2, "error": "BackendTimeout: simulated"}]
    assert audit_causality(t, DebateConfig().plan()) == []


def test_agent_failing_initial_round_drops_out_of_references():
    backend = Flaky(lambda k, t: k == 2 and t == 0, seed=7)
    t = run_debate("Q1", DebateConfig(seed=7), backend=backend)
    assert t.rounds[0][2].response is None
    assert all(2 not in turn.references for turn in t.rounds[1] if turn.agent_index != 2)
    assert t.final_answer


def test_all_agents_failed_keeps_partial_transcript():
    backend = Flaky(lambda k, t: t == 1, seed=7)
    with pytest.raises(AllAgentsFailed) as info:
        run_debate("Q1", DebateConfig(seed=7), backend=backend)
    partial = info.value.transcript
    assert len(partial.rounds) == 2
    assert all(turn.failed for turn in partial.rounds[1])


class Slow(MockBackend):
    def __init__(self, **kw):
        super().__init__(**kw)
        self.active = 0
        self.peak = 0
        self.lock = threading.Lock()

    def generate(self, request):
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
        time.sleep(0.005 * ((request.agent_index * 7) % 5))
        with self.lock:
            self.active -= 1
        return super().generate(request)


def test_round_barrier_and_fan_out():
    backend = Slow(seed=7)
    t = run_debate("Q1", DebateConfig(seed=7), backend=backend)
    for r in range(1, len(t.rounds)):
        prev_resolved = max(end for rr, _, _, end in t.timings if rr == r - 1)
        next_started = min(start for rr, _, start, _ in t.timings if rr == r)
        assert next_started >= prev_resolved
    assert backend.peak > 1
    assert t.to_json() == run_debate("Q1", DebateConfig(seed=7)).to_json()


def test_transcript_dict_roundtrip():
    t = run_debate("Q1", DebateConfig(seed=7), question_id="Q1")
    again = DebateTranscript.from_dict(t.to_dict())
    assert again == t
    assert again.to_json() == t.to_json()


def test_config_from_mapping():
    cfg = DebateConfig.from_mapping({"n_agents": 6, "topology": "nc", "backend": {"mock": {"rate": 0.25}}})
    assert cfg.topology is TopologyKind.NEIGHBOR and cfg.backend.mock.rate == 0.25
    http = DebateConfig.from_mapping({"backend": {"kind": "http"}})
    assert http.synthesis_mode is SynthesisMode.AGGREGATOR
    with pytest.raises(InvalidConfig):
        DebateConfig.from_mapping({"bogus": 1})
    with pytest.raises(InvalidConfig):
        DebateConfig.from_mapping({"n_agents": 2, "group_size": 3})

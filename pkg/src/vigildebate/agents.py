"""Response generators: a chat-completion HTTP client and a deterministic mock.

Both expose ``generate(request) -> AgentResponse``. Mock responses carry their
helpfulness/harmlessness score in a trailing tag so that synthesis and mock
judges can read it back from plain text.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import httpx

from .errors import BackendRejected, BackendTimeout, InvalidConfig, MalformedReply
from .topology import label

logger = logging.getLogger(__name__)

REFERENCES_HEADER = "Other agents' answers:"
AGGREGATION_INSTRUCTION = (
    "Synthesize the answers above into one final response that is as useful as "
    "possible while remaining harmless. Reply with the final response only."
)
SCORE_DECIMALS = 6
# Balance values are compared after rounding so that float noise cannot break ties.
BALANCE_DECIMALS = 9


@dataclass(frozen=True)
class GenerationRequest:
    question: str
    system_prompt: str
    reference_responses: tuple[tuple[str, str], ...] = ()
    round_index: int = 0
    agent_index: int = 0
    intensity: float = 0.5
    purpose: str = "debate"

    def __post_init__(self):
        if self.purpose == "debate" and self.round_index == 0 and self.reference_responses:
            raise ValueError("initial-round requests cannot carry reference responses")


@dataclass(frozen=True)
class AgentResponse:
    text: str
    agent_index: int
    round_index: int
    latency_ms: int = 0
    backend_id: str = ""
    # Set when the agent failed this round and its previous answer stands in.
    carried_forward: bool = False


@dataclass(frozen=True)
class MockScore:
    helpfulness: float
    harmlessness: float

    def __post_init__(self):
        for name in ("helpfulness", "harmlessness"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def balance(self, alpha: float = 1.0, beta: float = 1.0) -> float:
        return round(alpha * self.helpfulness + beta * self.harmlessness, BALANCE_DECIMALS)

    def quantized(self) -> "MockScore":
        return MockScore(
            round(self.helpfulness, SCORE_DECIMALS), round(self.harmlessness, SCORE_DECIMALS)
        )


def render_user_message(request: GenerationRequest) -> str:
    parts = [request.question]
    if request.reference_responses:
        parts.append(REFERENCES_HEADER)
        parts.extend(f"[{who}] {text}" for who, text in request.reference_responses)
    if request.purpose == "aggregate":
        parts.append(AGGREGATION_INSTRUCTION)
    return "\n\n".join(parts)


class Backend(Protocol):
    backend_id: str

    def generate(self, request: GenerationRequest) -> AgentResponse: ...


# -- mock score model ---------------------------------------------------------


@dataclass(frozen=True)
class MockParams:
    h_max: float = 0.9
    h_min: float = 0.3
    s_min: float = 0.3
    s_max: float = 0.9
    rate: float = 0.5
    # Effective step is rate * (1 - rate_jitter * u) with u in [0, 1) hashed per call.
    rate_jitter: float = 0.5
    # Reading more than this many references shrinks the step proportionally.
    context_capacity: int = 3


def mock_initial_score(intensity: float, params: MockParams | None = None) -> MockScore:
    p = params or MockParams()
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"intensity must lie in [0, 1], got {intensity}")
    return MockScore(
        p.h_max - (p.h_max - p.h_min) * intensity,
        p.s_min + (p.s_max - p.s_min) * intensity,
    )


def best_score(candidates: list[MockScore], alpha: float = 1.0, beta: float = 1.0) -> MockScore:
    """Highest balance value; ties go to higher harmlessness, then earlier position."""
    best = candidates[0]
    for cand in candidates[1:]:
        if (cand.balance(alpha, beta), cand.harmlessness) > (best.balance(alpha, beta), best.harmlessness):
            best = cand
    return best


def mock_update_score(
    own: MockScore,
    references: list[MockScore],
    alpha: float = 1.0,
    beta: float = 1.0,
    rate: float = 0.5,
) -> MockScore:
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"rate must lie in (0, 1], got {rate}")
    target = best_score([own, *references], alpha, beta)
    return MockScore(
        own.helpfulness + rate * (target.helpfulness - own.helpfulness),
        own.harmlessness + rate * (target.harmlessness - own.harmlessness),
    )


def weakest_link_merge(scores: list[MockScore]) -> MockScore:
    """Merged answer keeps the most useful content and the least safe content."""
    return MockScore(
        max(s.helpfulness for s in scores),
        min(s.harmlessness for s in scores),
    )


_TAG_RE = re.compile(r"<<score helpfulness=([0-9.]+) harmlessness=([0-9.]+)>>")


def format_score_tag(score: MockScore) -> str:
    q = score.quantized()
    return f"<<score helpfulness={q.helpfulness:.{SCORE_DECIMALS}f} harmlessness={q.harmlessness:.{SCORE_DECIMALS}f}>>"


def parse_score(text: str) -> MockScore | None:
    matches = _TAG_RE.findall(text)
    if not matches:
        return None
    h, s = matches[-1]
    return MockScore(float(h), float(s))


def unit_hash(*parts) -> float:
    digest = hashlib.sha256("\x1f".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _stance(score: MockScore) -> str:
    if score.harmlessness > score.helpfulness:
        return "I would rather flag the risks here before giving any specifics."
    if score.harmlessness < score.helpfulness:
        return "Here is a direct and detailed answer."
    return "Here is a balanced answer that weighs usefulness against risk."


class MockBackend:
    """Deterministic stand-in for an LLM.

    Per-call randomness is a pure hash of (seed, agent, round, question), so
    concurrent calls cannot perturb the output.
    """

    backend_id = "mock"

    def __init__(self, params: MockParams | None = None, seed: int = 0, alpha: float = 1.0, beta: float = 1.0):
        self.params = params or MockParams()
        self.seed = seed
        self.alpha = alpha
        self.beta = beta

    def step_rate(self, request: GenerationRequest) -> float:
        p = self.params
        u = unit_hash(self.seed, request.agent_index, request.round_index, request.question)
        rate = p.rate * (1.0 - p.rate_jitter * u)
        n_refs = len(request.reference_responses)
        if n_refs > p.context_capacity:
            rate *= p.context_capacity / n_refs
        return rate

    def score_for(self, request: GenerationRequest) -> MockScore:
        if request.purpose == "aggregate":
            scores = [parse_score(text) for _, text in request.reference_responses]
            scores = [s for s in scores if s is not None]
            if not scores:
                raise MalformedReply("aggregation request carries no scored answers")
            return weakest_link_merge(scores)
        if request.round_index == 0:
            return mock_initial_score(request.intensity, self.params)
        own_label = label(request.agent_index)
        own = None
        others = []
        for who, text in request.reference_responses:
            score = parse_score(text)
            if score is None:
                continue
            if who == own_label:
                own = score
            else:
                others.append(score)
        if own is None:
            own = mock_initial_score(request.intensity, self.params)
        if not others:
            return own
        return mock_update_score(own, others, self.alpha, self.beta, self.step_rate(request))

    def generate(self, request: GenerationRequest) -> AgentResponse:
        score = self.score_for(request).quantized()
        who = "Aggregator" if request.purpose == "aggregate" else label(request.agent_index)
        text = (
            f"{who}, round {request.round_index}: {_stance(score)} "
            f"(re: {request.question.strip()[:80]})\n{format_score_tag(score)}"
        )
        return AgentResponse(
            text=text,
            agent_index=request.agent_index,
            round_index=request.round_index,
            latency_ms=0,
            backend_id=self.backend_id,
        )


# -- chat-completion HTTP backend ----------------------------------------------


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.7
    max_tokens: int = 512
    max_attempts: int = 3
    backoff_initial_s: float = 0.5
    deadline_s: float = 60.0
    mock: MockParams = field(default_factory=MockParams)

    @classmethod
    def from_mapping(cls, data: dict) -> "BackendConfig":
        data = dict(data)
        try:
            mock = MockParams(**data.pop("mock", {}))
            return cls(mock=mock, **data)
        except TypeError as exc:
            raise InvalidConfig(f"bad backend config: {exc}") from exc


_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class ChatCompletionBackend:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(
        self,
        config: BackendConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.config = config
        self.backend_id = f"http:{config.model}"
        self._sleep = sleep
        self._clock = clock
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(base_url=config.base_url, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def payload(self, system: str, user: str) -> dict:
        return {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }

    def _attempt(self, body: dict, timeout: float) -> str:
        try:
            resp = self._client.post("/chat/completions", json=body, timeout=timeout)
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"request timed out: {exc}") from exc
        except httpx.TransportError as exc:
            raise BackendTimeout(f"transport error: {exc}") from exc
        if resp.status_code in _RETRYABLE_STATUS:
            raise BackendTimeout(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendRejected(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedReply(f"unexpected reply shape: {resp.text[:200]}") from exc
        if not isinstance(content, str) or not content.strip():
            raise MalformedReply("empty completion")
        return content

    def complete(self, system: str, user: str) -> tuple[str, int]:
        """Return (text, latency_ms), retrying transient failures within the deadline."""
        cfg = self.config
        body = self.payload(system, user)
        start = self._clock()
        deadline = start + cfg.deadline_s
        delay = cfg.backoff_initial_s
        last: BackendTimeout | None = None
        for attempt in range(1, cfg.max_attempts + 1):
            remaining = deadline - self._clock()
            if remaining <= 0:
                break
            try:
                text = self._attempt(body, remaining)
                return text, int((self._clock() - start) * 1000)
            except BackendTimeout as exc:
                last = exc
                logger.warning("attempt %d/%d failed: %s", attempt, cfg.max_attempts, exc)
            if attempt < cfg.max_attempts:
                pause = min(delay, max(0.0, deadline - self._clock()))
                self._sleep(pause)
                delay *= 2
        raise BackendTimeout(f"gave up after {cfg.max_attempts} attempts: {last}")

    def generate(self, request: GenerationRequest) -> AgentResponse:
        text, latency = self.complete(request.system_prompt, render_user_message(request))
        return AgentResponse(
            text=text,
            agent_index=request.agent_index,
            round_index=request.round_index,
            latency_ms=latency,
            backend_id=self.backend_id,
        )


def generate(backend: Backend, request: GenerationRequest) -> AgentResponse:
    return backend.generate(request)


def make_backend(config: BackendConfig, seed: int = 0, alpha: float = 1.0, beta: float = 1.0) -> Backend:
    if config.kind == "mock":
        return MockBackend(config.mock, seed=seed, alpha=alpha, beta=beta)
    if config.kind == "http":
        return ChatCompletionBackend(config)
    raise InvalidConfig(f"unknown backend kind: {config.kind!r}")

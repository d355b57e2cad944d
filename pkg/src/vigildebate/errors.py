"""Exception hierarchy shared by every module."""

from __future__ import annotations


class DebateError(Exception):
    """Base class for all package errors."""


class InvalidConfig(DebateError):
    pass


class InvalidTemplate(DebateError):
    pass


class BackendError(DebateError):
    retryable = False


class BackendTimeout(BackendError):
    retryable = True


class BackendRejected(BackendError):
    pass


class MalformedReply(BackendError):
    pass


class AgentFailed(DebateError):
    def __init__(self, agent_index: int, round_index: int, cause: BaseException):
        super().__init__(f"agent {agent_index} failed in round {round_index}: {cause}")
        self.agent_index = agent_index
        self.round_index = round_index
        self.cause = cause


class AllAgentsFailed(DebateError):
    def __init__(self, round_index: int, transcript=None):
        super().__init__(f"every agent failed in round {round_index}")
        self.round_index = round_index
        self.transcript = transcript


class ScoringFailed(DebateError):
    pass


class JudgeFailed(DebateError):
    pass


class EmptyEvaluation(DebateError):
    pass


class MismatchedAnswerSets(DebateError):
    pass


class ParseError(DebateError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyDataset(DebateError):
    pass


class SampleTooLarge(DebateError):
    pass


class FingerprintMismatch(DebateError):
    pass


class MissingRun(DebateError):
    pass

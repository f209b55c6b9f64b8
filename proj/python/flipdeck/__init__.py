"""Python access to the flipdeck core.

Structured values come back as plain dicts and lists.
"""

from __future__ import annotations

import json as _json
from typing import Any, Iterable, Mapping, Optional

from . import _core
from ._core import FlipdeckError, next_difficulty, token_jaccard

__all__ = [
    "FlipdeckError",
    "Service",
    "build_flipped_prompt",
    "difficulty_stats",
    "error_code",
    "init_pacing",
    "leaderboard",
    "next_difficulty",
    "observe_quiz_outcome",
    "parse_mcq",
    "rebuild_state",
    "recommend_next",
    "render_mcq",
    "reproduce_check",
    "simulate",
    "start_new_topic",
    "time_to_answer",
    "token_jaccard",
]


def error_code(exc: FlipdeckError) -> str:
    return exc.args[0]


def parse_mcq(text: str, kind: str = "clicker_quiz") -> dict:
    return _json.loads(_core.parse_mcq(text, kind))


def render_mcq(question: Mapping[str, Any]) -> str:
    return _core.render_mcq(_json.dumps(question))


def reproduce_check(submitted: str, regenerated: str) -> dict:
    similarity, match = _core.reproduce_check(submitted, regenerated)
    return {"similarity": similarity, "match": match}


def init_pacing(params: Optional[Mapping[str, float]] = None) -> dict:
    return _json.loads(_core.init_pacing(_json.dumps(params) if params else ""))


def observe_quiz_outcome(state: Mapping[str, Any], accuracy: float) -> dict:
    return _json.loads(_core.observe_quiz_outcome(_json.dumps(state), accuracy))


def start_new_topic(state: Mapping[str, Any]) -> dict:
    return _json.loads(_core.start_new_topic(_json.dumps(state)))


def recommend_next(state: Mapping[str, Any], approved_available: int) -> dict:
    return _json.loads(_core.recommend_next(_json.dumps(state), approved_available))


def time_to_answer(pairs: Iterable[tuple[int, Optional[int]]]) -> dict:
    out = _json.loads(_core.time_to_answer(list(pairs)))
    out["buckets"] = {int(k): v for k, v in out["buckets"].items()}
    return out


def difficulty_stats(values: Iterable[float]) -> dict:
    mean, variance, n = _core.difficulty_stats(list(values))
    return {"mean": mean, "variance": variance, "n": n}


def leaderboard(scores: Mapping[str, int]) -> list[tuple[int, str, int]]:
    return _core.leaderboard(dict(scores))


def build_flipped_prompt(goal: Mapping[str, Any]) -> str:
    return _core.build_flipped_prompt(_json.dumps(goal))


def simulate(students: int = 30, sessions: int = 3, seed: int = 1, course: str = "CS101",
             start: int = 1700000000, transport: str = "inprocess") -> tuple[dict, bytes]:
    """Runs a synthetic class; returns (report, event log bytes)."""
    report, log = _core.simulate(students, sessions, seed, course, start, transport)
    return _json.loads(report), log


def rebuild_state(log: bytes) -> dict:
    return _json.loads(_core.rebuild_state(log))


class Service:
    """In-memory service with a manual clock, addressed like the HTTP API."""

    def __init__(self, start: int = 1700000000, log_path: str = ""):
        self._svc = _core.Service(start, log_path)

    @property
    def instructor_token(self) -> str:
        return self._svc.instructor_token

    @property
    def assistant_token(self) -> str:
        return self._svc.assistant_token

    @property
    def time(self) -> int:
        return self._svc.time

    def set_time(self, t: int) -> None:
        self._svc.set_time(t)

    def request(self, method: str, path: str, body: Any = None, token: str = "",
                query: Optional[Mapping[str, str]] = None) -> tuple[int, Any]:
        """Returns (status, payload); JSON bodies are decoded, CSV and SSE stay text."""
        raw = "" if body is None else _json.dumps(body)
        status, content_type, text = self._svc.request(method, path, raw, token, dict(query or {}))
        return status, _json.loads(text) if content_type == "application/json" else text

    def chat(self, message: Mapping[str, Any]) -> list[dict]:
        return _json.loads(self._svc.chat(_json.dumps(message)))

    def log_bytes(self) -> bytes:
        return self._svc.log_bytes()

    def state(self) -> dict:
        return _json.loads(self._svc.state())

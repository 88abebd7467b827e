"""Generation backends: the contract, a gold-oracle mock, and an HTTP client.

A backend maps a (question, context) pair to generated answer text. The
mock answers every task from gold annotations and can corrupt its answers
with seeded noise, which makes the full extraction-and-scoring loop
testable offline; the HTTP client speaks the wire protocol of the model
service (POST /v1/generate, GET /healthz).

All noise draws are derived from the request content and the configured
seed, never from call order, so identical requests get identical answers
regardless of concurrency or retries.
"""
from __future__ import annotations

import hashlib
import random
import re
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import requests

from .codec import (
    DEFAULT_GRAMMAR,
    DEFAULT_TEMPLATES,
    AnswerGrammar,
    PairFormat,
    Task,
    TemplateSet,
    encode_bool,
    encode_entity_list,
    encode_pair_list,
    normalize_entity,
)
from .corpus import Example, normalize_text


@dataclass(frozen=True)
class GenerationRequest:
    question: str
    context: str
    max_new_tokens: int = 32
    repetition_penalty_disabled: bool = True

    def __post_init__(self) -> None:
        if not self.question or not self.context:
            raise ValueError("question and context must be non-empty")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")

    @property
    def request_id(self) -> str:
        digest = hashlib.sha1(
            f"{self.question}\x1f{self.context}".encode("utf-8")
        ).hexdigest()
        return digest[:12]


@dataclass(frozen=True)
class GenerationResponse:
    text: str  # may be empty: model silence is representable
    latency_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")


class BackendError(Exception):
    def __init__(self, message: str, request_id: str | None = None):
        super().__init__(message)
        self.request_id = request_id


class BackendUnavailable(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class BackendProtocolError(BackendError):
    pass


class UnknownContext(BackendError):
    """The mock has no gold annotation for the requested context."""


class UnknownQuestion(BackendError):
    """The mock cannot map the question onto any configured template."""


class GenerationBackend(ABC):
    """Answer a question conditioned on a context; deterministic per request."""

    @abstractmethod
    def generate(self, request: GenerationRequest) -> GenerationResponse:
        raise NotImplementedError


@dataclass(frozen=True)
class NoiseConfig:
    """Seeded answer corruption for the mock backend (all probabilities in [0, 1])."""

    drop_prob: float = 0.0
    spurious_prob: float = 0.0
    corrupt_prob: float = 0.0
    flip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("drop_prob", "spurious_prob", "corrupt_prob", "flip_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")

    @property
    def silent(self) -> bool:
        return (
            self.drop_prob == self.spurious_prob == self.corrupt_prob == self.flip_prob == 0.0
        )


def _pair_confirm_pattern(template: str) -> re.Pattern[str]:
    pattern = re.escape(template)
    pattern = pattern.replace(re.escape("{ade}"), "(?P<ade>.+?)")
    pattern = pattern.replace(re.escape("{suspect}"), "(?P<suspect>.+)")
    return re.compile(f"^{pattern}$", re.DOTALL)


class MockBackend(GenerationBackend):
    """Deterministic gold oracle with injectable noise.

    With all noise probabilities zero, every answer is exactly the
    codec-encoded gold annotation for the context. Per-entity noise draws
    are keyed on (seed, context, entity), so the set of surviving
    entities only shrinks as ``drop_prob`` grows.
    """

    def __init__(
        self,
        gold: Sequence[Example],
        noise: NoiseConfig = NoiseConfig(),
        grammar: AnswerGrammar = DEFAULT_GRAMMAR,
        templates: TemplateSet = DEFAULT_TEMPLATES,
        pair_format: PairFormat = PairFormat.TAGGED,
        no_suspect_sentinel: str | None = None,
    ):
        self._by_context = {normalize_text(e.text): e for e in gold}
        self._noise = noise
        self._grammar = grammar
        self._templates = templates
        self._pair_format = pair_format
        self._sentinel = no_suspect_sentinel
        self._confirm_pattern = _pair_confirm_pattern(templates[Task.PAIR_CONFIRM])
        # Global entity vocabulary feeding spurious insertions.
        self._ade_vocab = sorted({a for e in gold for a in e.ades})
        self._suspect_vocab = sorted({s for e in gold for s in e.suspects})

    # -- seeded, content-addressed randomness ------------------------------

    def _uniform(self, *parts: str) -> float:
        payload = "\x1f".join((str(self._noise.seed), *parts)).encode("utf-8")
        digest = hashlib.sha256(payload).digest()
        return int.from_bytes(digest[:8], "big") / 2**64

    def _rng(self, *parts: str) -> random.Random:
        payload = "\x1f".join((str(self._noise.seed), *parts)).encode("utf-8")
        digest = hashlib.sha256(payload).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def _corrupt_surface(self, surface: str, *key: str) -> str:
        rng = self._rng("corrupt-edit", *key)
        pos = rng.randrange(len(surface))
        letter = rng.choice("abcdefghijklmnopqrstuvwxyz")
        op = rng.choice(("substitute", "insert", "delete"))
        if op == "delete" and len(surface) > 1:
            return surface[:pos] + surface[pos + 1 :]
        if op == "insert":
            return surface[:pos] + letter + surface[pos:]
        return surface[:pos] + letter + surface[pos + 1 :]

    def _noisy_entities(self, entities: Sequence[str], kind: str, ctx: str) -> list[str]:
        noise = self._noise
        out = []
        for entity in entities:
            key = normalize_entity(entity)
            if self._uniform("drop", kind, ctx, key) < noise.drop_prob:
                continue
            if self._uniform("corrupt", kind, ctx, key) < noise.corrupt_prob:
                entity = self._corrupt_surface(entity, kind, ctx, key)
            out.append(entity)
        if self._uniform("spurious", kind, ctx) < noise.spurious_prob:
            vocab = self._ade_vocab if kind == "ade" else self._suspect_vocab
            present = {normalize_entity(e) for e in out}
            candidates = [v for v in vocab if normalize_entity(v) not in present]
            if candidates:
                out.append(self._rng("spurious-pick", kind, ctx).choice(candidates))
        return out

    def _noisy_pairs(
        self, pairs: Sequence[tuple[str, str]], ctx: str
    ) -> list[tuple[str, str]]:
        noise = self._noise
        out = []
        for ade, suspect in pairs:
            key = f"{normalize_entity(ade)}\x1e{normalize_entity(suspect)}"
            if self._uniform("drop", "pair", ctx, key) < noise.drop_prob:
                continue
            if self._uniform("corrupt", "pair", ctx, key) < noise.corrupt_prob:
                if self._uniform("corrupt-side", ctx, key) < 0.5:
                    ade = self._corrupt_surface(ade, "pair-ade", ctx, key)
                else:
                    suspect = self._corrupt_surface(suspect, "pair-suspect", ctx, key)
            out.append((ade, suspect))
        if self._uniform("spurious", "pair", ctx) < noise.spurious_prob:
            if self._ade_vocab and self._suspect_vocab:
                rng = self._rng("spurious-pick", "pair", ctx)
                present = {
                    (normalize_entity(a), normalize_entity(s)) for a, s in out
                }
                for _ in range(8):  # bounded retry for a genuinely novel pair
                    pair = (rng.choice(self._ade_vocab), rng.choice(self._suspect_vocab))
                    if (normalize_entity(pair[0]), normalize_entity(pair[1])) not in present:
                        out.append(pair)
                        break
        return out

    # -- question routing ---------------------------------------------------

    def _parse_question(self, question: str) -> tuple[Task, dict[str, str]]:
        for task in (Task.ADE_LIST, Task.SUSPECT_LIST, Task.JOINT_PAIRS):
            if question == self._templates[task]:
                return task, {}
        match = self._confirm_pattern.match(question)
        if match:
            return Task.PAIR_CONFIRM, match.groupdict()
        raise UnknownQuestion(f"question does not match any template: {question!r}")

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        example = self._by_context.get(normalize_text(request.context))
        if example is None:
            raise UnknownContext(
                "no gold annotation for context", request_id=request.request_id
            )
        task, args = self._parse_question(request.question)
        ctx = normalize_text(request.context)

        if task is Task.ADE_LIST:
            answer = encode_entity_list(
                self._noisy_entities(example.ades, "ade", ctx), self._grammar
            )
        elif task is Task.SUSPECT_LIST:
            answer = encode_entity_list(
                self._noisy_entities(example.suspects, "suspect", ctx), self._grammar
            )
        elif task is Task.JOINT_PAIRS:
            pairs = self._noisy_pairs(example.pairs, ctx)
            if not pairs and self._sentinel is not None:
                answer = self._sentinel
            else:
                answer = encode_pair_list(pairs, self._grammar, self._pair_format)
        else:
            key = (normalize_entity(args["ade"]), normalize_entity(args["suspect"]))
            truth = key in example.normalized_pairs()
            flip_key = f"{key[0]}\x1e{key[1]}"
            if self._uniform("flip", ctx, flip_key) < self._noise.flip_prob:
                truth = not truth
            answer = encode_bool(truth)

        return GenerationResponse(text=answer, latency_ms=0.0)


def mock_backend(
    gold: Sequence[Example],
    noise: NoiseConfig = NoiseConfig(),
    grammar: AnswerGrammar = DEFAULT_GRAMMAR,
    templates: TemplateSet = DEFAULT_TEMPLATES,
    pair_format: PairFormat = PairFormat.TAGGED,
    no_suspect_sentinel: str | None = None,
) -> MockBackend:
    return MockBackend(gold, noise, grammar, templates, pair_format, no_suspect_sentinel)


_TRANSIENT_STATUS = {429, 500, 502, 503, 504}


class HttpBackend(GenerationBackend):
    """Client for the generation wire protocol.

    Generation is nullipotent, so transient failures (connection errors,
    timeouts, 5xx) are retried with exponential backoff up to
    ``max_retries``; non-conforming responses fail fast. At most
    ``concurrency_limit`` requests are in flight at once.
    """

    def __init__(
        self,
        endpoint: str,
        timeout_ms: int = 30_000,
        max_retries: int = 3,
        concurrency_limit: int = 8,
        backoff_base_s: float = 0.25,
        session: requests.Session | None = None,
    ):
        if concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        self._endpoint = endpoint.rstrip("/")
        self._timeout_s = timeout_ms / 1000.0
        self._max_retries = max_retries
        self._backoff_base_s = backoff_base_s
        self._semaphore = threading.BoundedSemaphore(concurrency_limit)
        self._session = session or requests.Session()
        self._lock = threading.Lock()
        self.retries = 0  # total transient retries performed, for accounting

    def _record_retry(self) -> None:
        with self._lock:
            self.retries += 1

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        payload = {
            "question": request.question,
            "context": request.context,
            "max_new_tokens": request.max_new_tokens,
            "repetition_penalty_disabled": request.repetition_penalty_disabled,
        }
        url = f"{self._endpoint}/v1/generate"
        last_error: BackendError | None = None
        for attempt in range(self._max_retries + 1):
            if attempt:
                self._record_retry()
                time.sleep(self._backoff_base_s * 2 ** (attempt - 1))
            started = time.monotonic()
            try:
                with self._semaphore:
                    response = self._session.post(
                        url, json=payload, timeout=self._timeout_s
                    )
            except requests.Timeout:
                last_error = BackendTimeout(
                    f"timeout after {self._timeout_s:.1f}s", request.request_id
                )
                continue
            except requests.RequestException as exc:
                last_error = BackendUnavailable(str(exc), request.request_id)
                continue

            if response.status_code in _TRANSIENT_STATUS:
                last_error = BackendUnavailable(
                    f"HTTP {response.status_code}", request.request_id
                )
                continue
            if response.status_code != 200:
                raise BackendProtocolError(
                    f"HTTP {response.status_code}", request.request_id
                )
            try:
                data = response.json()
            except ValueError:
                raise BackendProtocolError(
                    "response body is not JSON", request.request_id
                ) from None
            if not isinstance(data, dict) or not isinstance(data.get("text"), str):
                raise BackendProtocolError(
                    'response missing string "text" field', request.request_id
                )
            latency_ms = (time.monotonic() - started) * 1000.0
            return GenerationResponse(text=data["text"], latency_ms=latency_ms)

        assert last_error is not None
        raise last_error

    def health(self) -> bool:
        try:
            response = self._session.get(
                f"{self._endpoint}/healthz", timeout=self._timeout_s
            )
        except requests.RequestException:
            return False
        return response.status_code == 200


def http_backend(
    endpoint: str,
    timeout_ms: int = 30_000,
    max_retries: int = 3,
    concurrency_limit: int = 8,
) -> HttpBackend:
    return HttpBackend(endpoint, timeout_ms, max_retries, concurrency_limit)

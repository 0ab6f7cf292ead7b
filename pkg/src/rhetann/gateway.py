"""Transport-agnostic chat-completion client with retries, bounded
concurrency, and a usage ledger.

The wire protocol is the common chat-completions JSON shape (messages
array, temperature, n). Everything provider-specific sits behind the
``Transport`` protocol; tests run entirely on deterministic mocks whose
output depends only on (prompt bytes, seed).

Money is ``Decimal`` end to end — never float — so ledger sums and cost
estimates are exact.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Callable, Protocol

import yaml

from .errors import (AuthenticationError, ContextOverflow, GatewayError,
                     TransportError, TransportExhausted)
from .prompts import LlmResponse, PromptSpec, parse_response
from .taxonomy import FeatureTaxonomy


def _utcnow() -> str:
    return dt.datetime.now(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def default_token_estimate(text: str) -> int:
    """Rough pre-flight heuristic: ~4 characters per token."""
    return max(1, len(text) // 4)


@dataclass(frozen=True)
class ModelProfile:
    name: str
    price_in: Decimal  # per 1K input tokens
    price_out: Decimal  # per 1K output tokens
    max_context: int = 8192
    kind: str = "base"  # "base" | "fine_tuned"

    def __post_init__(self):
        if self.price_in < 0 or self.price_out < 0:
            raise GatewayError(f"negative price on model {self.name!r}")
        if self.kind not in ("base", "fine_tuned"):
            raise GatewayError(f"model kind must be base or fine_tuned, got {self.kind!r}")


@dataclass(frozen=True)
class CallPolicy:
    temperature: float = 0.0
    repetitions: int = 1
    max_retries: int = 3
    backoff: tuple[float, ...] = (0.5, 1.0, 2.0)
    concurrency: int = 8

    def __post_init__(self):
        if self.repetitions < 1:
            raise GatewayError("repetitions must be >= 1")
        if self.temperature < 0:
            raise GatewayError("temperature must be >= 0")


# paper-mode presets: 3 repetitions for consistency studies, 1 for production
CONSISTENCY_POLICY = CallPolicy(temperature=1.0, repetitions=3)
PRODUCTION_POLICY = CallPolicy(temperature=0.0, repetitions=1)


@dataclass(frozen=True)
class UsageLedgerEntry:
    prompt_id: str
    model: str
    input_tokens: int
    output_tokens: int
    cost: Decimal
    timestamp: str
    outcome: str  # "ok" | "retried_ok" | "failed"


def entry_cost(profile: ModelProfile, input_tokens: int, output_tokens: int) -> Decimal:
    return (Decimal(input_tokens) / 1000 * profile.price_in
            + Decimal(output_tokens) / 1000 * profile.price_out)


class Transport(Protocol):
    def send(self, spec: PromptSpec, model: str, temperature: float,
             nonce: str) -> tuple[str, int, int]:
        """Returns (raw text, input tokens, output tokens)."""
        ...


_PROPERTY_LINE = re.compile(r"^([^:`]{1,80}): \S")


def _prompt_property_names(spec: PromptSpec) -> list[str]:
    """Candidate property names scraped back out of the rendered prompt."""
    names = []
    for line in spec.user_text.splitlines()[1:]:
        if line.startswith("Format your response") or line.startswith("Example text:"):
            break
        match = _PROPERTY_LINE.match(line)
        if match:
            names.append(match.group(1))
    return names


class MockTransport:
    """Deterministic offline transport.

    Output is a pure function of (prompt bytes, seed): the same spec and
    seed always produce the same syntactically valid response. Tracks
    in-flight calls so tests can assert the concurrency bound.
    """

    def __init__(self, seed: int = 0, canned: str | None = None,
                 latency: float = 0.0):
        self.seed = seed
        self.canned = canned
        self.latency = latency
        self.calls = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self._lock = threading.Lock()

    def _respond(self, spec: PromptSpec, nonce: str) -> str:
        if self.canned is not None:
            return self.canned
        digest = hashlib.sha256(
            f"{spec.digest()}:{self.seed}:{nonce}".encode()).digest()
        if spec.expected_schema == "AnswerExplanation":
            answer = "yes" if digest[0] % 2 == 0 else "no"
            return json.dumps({"Answer": answer, "Explanation": "mock judgement"})
        names = _prompt_property_names(spec)
        chosen = [name for i, name in enumerate(names)
                  if digest[i % len(digest)] % 3 == 0]
        return json.dumps({"Properties": chosen, "Explanation": "mock judgement"})

    def send(self, spec: PromptSpec, model: str, temperature: float,
             nonce: str) -> tuple[str, int, int]:
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
        try:
            if self.latency:
                time.sleep(self.latency)
            # temperature 0 collapses the repetition nonce: identical replies
            raw = self._respond(spec, "" if temperature == 0.0 else nonce)
            return raw, default_token_estimate(spec.system_text + spec.user_text), \
                default_token_estimate(raw)
        finally:
            with self._lock:
                self.in_flight -= 1


class FlakyTransport:
    """Wraps a transport; fails the first ``fail_times`` sends."""

    def __init__(self, inner: Transport, fail_times: int):
        self.inner = inner
        self.fail_times = fail_times
        self._calls = 0
        self._lock = threading.Lock()

    def send(self, spec, model, temperature, nonce):
        with self._lock:
            self._calls += 1
            call = self._calls
        if call <= self.fail_times:
            raise TransportError(f"injected failure {call}/{self.fail_times}")
        return self.inner.send(spec, model, temperature, nonce)


class FailingTransport:
    """Always fails; for exhaustion-path tests."""

    def send(self, spec, model, temperature, nonce):
        raise TransportError("transport permanently down")


class HttpTransport:
    """POSTs chat-completions JSON to a single endpoint."""

    def __init__(self, endpoint: str, api_key_env: str = "RHETANN_API_KEY",
                 timeout: float = 60.0, client=None):
        import httpx
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self._client = client or httpx.Client(timeout=timeout)

    def send(self, spec: PromptSpec, model: str, temperature: float,
             nonce: str) -> tuple[str, int, int]:
        import httpx
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise AuthenticationError(
                f"no API key: set the {self.api_key_env} environment variable")
        payload = {
            "model": model,
            "messages": spec.messages(),
            "temperature": temperature,
            "n": 1,
        }
        try:
            response = self._client.post(
                self.endpoint, json=payload,
                headers={"Authorization": f"Bearer {key}"})
        except httpx.HTTPError as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthenticationError(f"endpoint rejected credentials "
                                      f"({response.status_code})")
        if response.status_code != 200:
            raise TransportError(f"endpoint returned {response.status_code}")
        body = response.json()
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        usage = body.get("usage", {})
        return text, int(usage.get("prompt_tokens", 0)), \
            int(usage.get("completion_tokens", 0))


class Gateway:
    """Thread-safe completion client with a usage ledger."""

    def __init__(self, transport: Transport,
                 profiles: dict[str, ModelProfile] | None = None,
                 taxonomy: FeatureTaxonomy | None = None,
                 token_counter: Callable[[str], int] = default_token_estimate,
                 sleeper: Callable[[float], None] = time.sleep,
                 concurrency: int = 8):
        self.transport = transport
        self.profiles = dict(profiles or {})
        self.taxonomy = taxonomy
        self.token_counter = token_counter
        self.sleeper = sleeper
        self._semaphore = threading.BoundedSemaphore(concurrency)
        self._ledger: list[UsageLedgerEntry] = []
        self._ledger_lock = threading.Lock()

    def profile(self, model: str | ModelProfile) -> ModelProfile:
        if isinstance(model, ModelProfile):
            return model
        if model not in self.profiles:
            raise GatewayError(f"unknown model {model!r}; configured: "
                               f"{sorted(self.profiles)}")
        return self.profiles[model]

    def _ledgered(self, entry: UsageLedgerEntry):
        with self._ledger_lock:
            self._ledger.append(entry)

    @property
    def ledger(self) -> list[UsageLedgerEntry]:
        with self._ledger_lock:
            return list(self._ledger)

    def ledger_total(self) -> Decimal:
        return sum((e.cost for e in self.ledger), Decimal("0"))

    def _attempt(self, spec: PromptSpec, profile: ModelProfile,
                 policy: CallPolicy, repetition: int) -> tuple[LlmResponse | None, UsageLedgerEntry]:
        attempts = 0
        while True:
            try:
                with self._semaphore:
                    raw, tin, tout = self.transport.send(
                        spec, profile.name, policy.temperature, f"rep{repetition}")
                outcome = "ok" if attempts == 0 else "retried_ok"
                entry = UsageLedgerEntry(
                    prompt_id=spec.digest()[:16], model=profile.name,
                    input_tokens=tin, output_tokens=tout,
                    cost=entry_cost(profile, tin, tout),
                    timestamp=_utcnow(), outcome=outcome)
                return parse_response(spec, raw, self.taxonomy), entry
            except TransportError:
                if attempts >= policy.max_retries:
                    entry = UsageLedgerEntry(
                        prompt_id=spec.digest()[:16], model=profile.name,
                        input_tokens=0, output_tokens=0, cost=Decimal("0"),
                        timestamp=_utcnow(), outcome="failed")
                    return None, entry
                delay = policy.backoff[min(attempts, len(policy.backoff) - 1)]
                attempts += 1
                self.sleeper(delay)

    def complete(self, spec: PromptSpec, model: str | ModelProfile,
                 policy: CallPolicy = PRODUCTION_POLICY) -> list[LlmResponse]:
        """Run ``policy.repetitions`` independent requests for one prompt.

        Every repetition is ledgered. Failed repetitions (after retries)
        appear as failed entries; the successful subset is returned. Raises
        TransportExhausted only when nothing succeeded.
        """
        profile = self.profile(model)
        estimate = self.token_counter(spec.system_text) + self.token_counter(spec.user_text)
        if estimate > profile.max_context:
            raise ContextOverflow(
                f"prompt estimated at {estimate} tokens exceeds {profile.name} "
                f"context window of {profile.max_context}")
        responses: list[LlmResponse] = []
        failures = 0
        for repetition in range(policy.repetitions):
            response, entry = self._attempt(spec, profile, policy, repetition)
            self._ledgered(entry)
            if response is None:
                failures += 1
            else:
                responses.append(response)
        if not responses:
            raise TransportExhausted(
                f"all {policy.repetitions} repetition(s) failed after "
                f"{policy.max_retries} retries each")
        return responses


# -- cost estimation --------------------------------------------------------

@dataclass(frozen=True)
class CostEstimate:
    n_prompts: int
    input_tokens: int
    output_tokens: int
    input_cost: Decimal
    output_cost: Decimal

    @property
    def total(self) -> Decimal:
        return self.input_cost + self.output_cost

    def breakdown(self) -> dict:
        return {
            "n_prompts": self.n_prompts,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "input_cost": str(self.input_cost),
            "output_cost": str(self.output_cost),
            "total": str(self.total),
        }


def estimate_cost(n_sentences: int, items_per_sentence: int,
                  prompts_per_item: int, repetitions: int,
                  avg_tokens_in: int, avg_tokens_out: int,
                  profile: ModelProfile) -> CostEstimate:
    """Deterministic plan arithmetic: prompts × tokens × price.

    ``items_per_sentence`` is features (V1) or properties (V2);
    ``prompts_per_item`` covers e.g. one call per simulated annotator.
    """
    for label, n in (("n_sentences", n_sentences),
                     ("items_per_sentence", items_per_sentence),
                     ("prompts_per_item", prompts_per_item),
                     ("repetitions", repetitions)):
        if n < 0:
            raise GatewayError(f"{label} must be >= 0")
    n_prompts = n_sentences * items_per_sentence * prompts_per_item * repetitions
    tin = n_prompts * avg_tokens_in
    tout = n_prompts * avg_tokens_out
    return CostEstimate(
        n_prompts=n_prompts,
        input_tokens=tin,
        output_tokens=tout,
        input_cost=Decimal(tin) / 1000 * profile.price_in,
        output_cost=Decimal(tout) / 1000 * profile.price_out,
    )


def human_annotation_cost(n_sentences: int, n_annotators: int,
                          price_per_sentence: Decimal) -> Decimal:
    """The manual-campaign comparator: sentences × experts × rate."""
    return Decimal(n_sentences) * Decimal(n_annotators) * price_per_sentence


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class GatewayConfig:
    endpoint: str
    api_key_env: str
    profiles: dict[str, ModelProfile] = field(default_factory=dict)


def load_gateway_config(path: str | Path) -> GatewayConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    profiles = {}
    for item in raw.get("models", []):
        # YAML floats would poison Decimal; round-trip through str
        profile = ModelProfile(
            name=item["name"],
            price_in=Decimal(str(item["price_in"])),
            price_out=Decimal(str(item["price_out"])),
            max_context=int(item.get("max_context", 8192)),
            kind=item.get("kind", "base"),
        )
        if profile.name in profiles:
            raise GatewayError(f"duplicate model name {profile.name!r} in config")
        profiles[profile.name] = profile
    return GatewayConfig(
        endpoint=raw.get("endpoint", ""),
        api_key_env=raw.get("api_key_env", "RHETANN_API_KEY"),
        profiles=profiles,
    )

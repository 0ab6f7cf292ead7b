"""Resumable LLM annotation campaigns.

A campaign walks a grid — (sentence, feature) for V1, (sentence, feature,
property) for V2 — and issues one prompt per cell. The store's exchange
log is the checkpoint: a cell whose exchange already exists (same prompt
version, model, temperature) is skipped, so an interrupted run resumes
exactly where it stopped and reruns are idempotent.

Parsed results become AnnotationRecords under an ``llm:<model>:<version>:
<temperature>`` annotator id, making LLM variants first-class annotators
for the agreement metrics.
"""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

from .corpus import Corpus
from .errors import TransportExhausted
from .gateway import CallPolicy, Gateway, PRODUCTION_POLICY
from .prompts import LlmResponse, build_v1, build_v2, effective_property_set
from .store import AnnotationRecord, AssistantExchange, Store, llm_annotator
from .taxonomy import FeatureTaxonomy


@dataclass(frozen=True)
class CampaignSummary:
    version: str
    model: str
    temperature: float
    issued: int
    skipped: int
    records_written: int
    failures: tuple[str, ...] = ()  # human-readable per-prompt failure notes

    @property
    def total(self) -> int:
        return self.issued + self.skipped


def _exchange_key(sentence_id: str, feature_id: str, property_id: str | None,
                  version: str, model: str, temperature: float) -> tuple:
    return (sentence_id, feature_id, property_id, version, model, temperature)


def _get_or_issue(store: Store, gateway: Gateway, spec, model_name: str,
                  policy: CallPolicy) -> tuple[AssistantExchange | None, bool, str | None]:
    """Returns (exchange, was_issued, failure note). Existing exchanges win."""
    key = _exchange_key(spec.sentence_id, spec.feature_id, spec.property_id,
                        spec.version, model_name, policy.temperature)
    existing = store.find_exchange(key)
    if existing is not None:
        return existing, False, None
    try:
        responses = gateway.complete(spec, model_name, policy)
    except TransportExhausted as exc:
        return None, True, f"{spec.sentence_id}/{spec.feature_id}" \
            + (f"/{spec.property_id}" if spec.property_id else "") + f": {exc}"
    exchange = AssistantExchange(
        sentence_id=spec.sentence_id,
        feature_id=spec.feature_id,
        property_id=spec.property_id,
        prompt_version=spec.version,
        request=spec.request_ref(),
        responses=tuple(r.to_json() for r in responses),
        model=model_name,
        temperature=policy.temperature,
    )
    store.record_exchange(exchange)
    return exchange, True, None


def _first_parsed_set(exchange: AssistantExchange) -> frozenset[str] | None:
    for raw in exchange.responses:
        value = effective_property_set(exchange.prompt_version,
                                       exchange.property_id,
                                       LlmResponse.from_json(raw))
        if value is not None:
            return value
    return None


def _submit_if_changed(store: Store, record: AnnotationRecord) -> bool:
    current = store.latest(record.sentence_id, record.annotator.id, record.feature_id)
    if current is not None and current.properties == record.properties:
        return False  # rerun must not append duplicate revisions
    store.submit(record)
    return True


def run_campaign(store: Store, corpus: Corpus, taxonomy: FeatureTaxonomy,
                 gateway: Gateway, feature_ids: Iterable[str], version: str,
                 model: str, policy: CallPolicy = PRODUCTION_POLICY,
                 sentence_ids: Iterable[str] | None = None,
                 progress: Callable[[int, int], None] | None = None) -> CampaignSummary:
    """Annotate sentences × features with one LLM configuration.

    V1 issues one prompt per (sentence, feature); V2 one per (sentence,
    feature, property), then rolls the yes answers up into one record per
    (sentence, feature). Per-prompt failures are collected, not fatal.
    """
    if version not in ("V1", "V2"):
        raise ValueError(f"version must be V1 or V2, got {version!r}")
    profile = gateway.profile(model)
    annotator = llm_annotator(profile.name, version, policy.temperature)
    features = [taxonomy.feature(fid) for fid in feature_ids]
    sentences = [corpus.sentence(sid) for sid in sentence_ids] \
        if sentence_ids is not None else list(corpus)

    # one work item per (sentence, feature); V2 fans out inside the item
    work = [(s, f) for s in sentences for f in features]
    issued = skipped = written = 0
    failures: list[str] = []
    counters_lock = threading.Lock()
    done = 0

    def handle(item):
        nonlocal issued, skipped, written, done
        sentence, feature = item
        local_failures = []
        if version == "V1":
            spec = build_v1(taxonomy, feature.id, sentence.text, sentence_id=sentence.id)
            specs = [spec]
        else:
            specs = [build_v2(taxonomy, feature.id, prop.id, sentence.text,
                              sentence_id=sentence.id)
                     for prop in feature.properties]
        chosen: set[str] = set()
        usable = True
        local_issued = local_skipped = 0
        for spec in specs:
            exchange, was_issued, failure = _get_or_issue(
                store, gateway, spec, profile.name, policy)
            if was_issued:
                local_issued += 1
            else:
                local_skipped += 1
            if failure is not None:
                local_failures.append(failure)
                usable = False
                continue
            value = _first_parsed_set(exchange)
            if value is None:
                local_failures.append(
                    f"{spec.sentence_id}/{spec.feature_id}"
                    + (f"/{spec.property_id}" if spec.property_id else "")
                    + ": no parseable response")
                usable = False
            else:
                chosen |= value
        wrote = False
        if usable:
            record = AnnotationRecord(
                sentence_id=sentence.id, annotator=annotator,
                feature_id=feature.id, properties=frozenset(chosen))
            wrote = _submit_if_changed(store, record)
        with counters_lock:
            issued += local_issued
            skipped += local_skipped
            written += int(wrote)
            failures.extend(local_failures)
            done += 1
            if progress is not None:
                progress(done, len(work))

    if policy.concurrency > 1 and len(work) > 1:
        with ThreadPoolExecutor(max_workers=policy.concurrency) as pool:
            list(pool.map(handle, work))
    else:
        for item in work:
            handle(item)

    return CampaignSummary(
        version=version, model=profile.name, temperature=policy.temperature,
        issued=issued, skipped=skipped, records_written=written,
        failures=tuple(failures),
    )

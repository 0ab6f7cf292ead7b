"""HTTP service for the annotation workbench.

A thin shell over the library: every endpoint body mirrors a domain type
one-to-one and delegates to store/taxonomy/agreement calls. Sessions are
persisted as store records, so a restart recovers every cursor from the
append log.

Assistant behavior follows the workbench design: submitting an annotation
can fire an advisory LLM exchange in the background (submission never
waits on it), and /assist serves the latest stored exchange, calling the
gateway only on a cache miss or an explicit POST.
"""
from __future__ import annotations

import hashlib
import json
import threading
import uuid
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import agreement
from .corpus import Corpus
from .errors import DataError, GatewayError, TransportExhausted
from .gateway import CallPolicy, Gateway, PRODUCTION_POLICY
from .prompts import LlmResponse, build_v1, effective_property_set
from .store import (AnnotationRecord, AnnotatorId, AssistantExchange,
                    Session, Store)
from .taxonomy import FeatureTaxonomy


class SessionBody(BaseModel):
    annotator_id: str
    kind: str = "human"
    session_id: str | None = None  # reclaim an existing session


class AnnotationBody(BaseModel):
    sentence_id: str
    feature_id: str
    properties: list[str]
    node_path: list[int] | None = None
    session_id: str | None = None
    annotator_id: str | None = None  # scripted clients may skip sessions
    kind: str = "human"


class AssistBody(BaseModel):
    sentence_id: str
    feature_id: str


def _taxonomy_document(taxonomy: FeatureTaxonomy) -> dict:
    return {
        "version": taxonomy.version,
        "features": [
            {
                "id": f.id,
                "name": f.name,
                "part": f.part,
                "annotation_mode": f.annotation_mode,
                "properties": [
                    {"id": p.id, "name": p.name, "definition": p.definition,
                     "examples": list(p.examples)}
                    for p in f.properties
                ],
            }
            for f in taxonomy.features
        ],
    }


def _tree_document(node) -> dict:
    return {
        "label": node.label,
        "token": node.token,
        "children": [_tree_document(c) for c in node.children],
    }


@dataclass
class ServerConfig:
    assistant_capture: bool = False
    assist_model: str | None = None
    assist_policy: CallPolicy = PRODUCTION_POLICY


def create_app(store: Store, corpus: Corpus, taxonomy: FeatureTaxonomy,
               gateway: Gateway | None = None,
               config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    app = FastAPI(title="rhetann annotation server")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"])

    sentences = list(corpus)
    features = taxonomy.manual_features()
    taxonomy_doc = _taxonomy_document(taxonomy)
    taxonomy_etag = '"' + hashlib.sha256(
        json.dumps(taxonomy_doc, sort_keys=True).encode()).hexdigest()[:16] + '"'

    def _session_or_404(session_id: str) -> Session:
        session = store.session(session_id)
        if session is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id!r}")
        return session

    def _resolve_annotator(body: AnnotationBody) -> tuple[AnnotatorId, Session | None]:
        if body.session_id:
            session = _session_or_404(body.session_id)
            return session.annotator, session
        if body.annotator_id:
            return AnnotatorId(id=body.annotator_id, kind=body.kind), None
        raise HTTPException(status_code=422,
                            detail="provide session_id or annotator_id")

    def _capture_exchange(sentence_id: str, feature_id: str):
        """Background V1 assistant call; failures only reach the ledger."""
        if gateway is None or config.assist_model is None:
            return
        try:
            _assist(sentence_id, feature_id, force=False)
        except Exception:
            pass  # submission must never observe assistant failures

    def _assist(sentence_id: str, feature_id: str, force: bool) -> dict:
        if gateway is None or config.assist_model is None:
            raise HTTPException(status_code=503, detail="no assistant configured")
        feature = taxonomy.feature(feature_id)
        if feature.annotation_mode != "manual":
            raise HTTPException(status_code=422,
                                detail=f"feature {feature_id!r} is not annotated manually")
        profile = gateway.profile(config.assist_model)
        key = (sentence_id, feature_id, None, "V1", profile.name,
               config.assist_policy.temperature)
        cached = store.find_exchange(key)
        if cached is not None and not force:
            return _assist_body(cached, cached_hit=True)
        sentence = corpus.sentence(sentence_id)
        spec = build_v1(taxonomy, feature_id, sentence.text, sentence_id=sentence_id)
        try:
            responses = gateway.complete(spec, profile.name, config.assist_policy)
        except TransportExhausted as exc:
            raise HTTPException(status_code=503, detail=str(exc),
                                headers={"Retry-After": "5"})
        exchange = AssistantExchange(
            sentence_id=sentence_id, feature_id=feature_id, prompt_version="V1",
            request=spec.request_ref(),
            responses=tuple(r.to_json() for r in responses),
            model=profile.name, temperature=config.assist_policy.temperature)
        store.record_exchange(exchange)
        return _assist_body(exchange, cached_hit=False)

    def _assist_body(exchange: AssistantExchange, cached_hit: bool) -> dict:
        first = LlmResponse.from_json(exchange.responses[0])
        value = effective_property_set(exchange.prompt_version,
                                       exchange.property_id, first)
        return {
            "advisory": True,  # a suggestion to verify, never auto-applied
            "cached": cached_hit,
            "sentence_id": exchange.sentence_id,
            "feature_id": exchange.feature_id,
            "model": exchange.model,
            "temperature": exchange.temperature,
            "parse_ok": first.parse_ok,
            "properties": sorted(value) if value is not None else None,
            "explanation": first.explanation,
        }

    @app.get("/taxonomy")
    def get_taxonomy(request: Request, response: Response):
        if request.headers.get("if-none-match") == taxonomy_etag:
            return Response(status_code=304, headers={"ETag": taxonomy_etag})
        response.headers["ETag"] = taxonomy_etag
        return taxonomy_doc

    @app.post("/sessions")
    def create_session(body: SessionBody):
        if body.session_id:
            session = _session_or_404(body.session_id)
            return {"session_id": session.session_id,
                    "annotator_id": session.annotator.id,
                    "cursor": list(session.cursor)}
        session = Session(
            session_id=uuid.uuid4().hex,
            annotator=AnnotatorId(id=body.annotator_id, kind=body.kind))
        store.save_session(session)
        return {"session_id": session.session_id,
                "annotator_id": session.annotator.id,
                "cursor": list(session.cursor)}

    @app.get("/sessions/{session_id}/next")
    def next_unit(session_id: str):
        session = _session_or_404(session_id)
        si, fi = session.cursor
        if si >= len(sentences):
            return {"status": "end_of_queue"}
        sentence = sentences[si]
        feature = features[fi]
        existing = store.latest(sentence.id, session.annotator.id, feature.id)
        return {
            "status": "ok",
            "cursor": [si, fi],
            "sentence": {
                "id": sentence.id,
                "text": sentence.text,
                "parse": _tree_document(sentence.parse.root) if sentence.parse else None,
            },
            "feature": {
                "id": feature.id,
                "name": feature.name,
                "part": feature.part,
                "properties": [{"id": p.id, "name": p.name,
                                "definition": p.definition,
                                "examples": list(p.examples)}
                               for p in feature.properties],
            },
            "existing": None if existing is None else {
                "properties": sorted(existing.properties),
                "node_path": list(existing.node_path) if existing.node_path else None,
            },
        }

    def _advance(session: Session, sentence_id: str, feature_id: str):
        si, fi = session.cursor
        if si >= len(sentences):
            return
        if sentences[si].id != sentence_id or features[fi].id != feature_id:
            return  # out-of-order submit: cursor untouched
        fi += 1
        if fi >= len(features):
            fi = 0
            si += 1
        store.save_session(Session(session_id=session.session_id,
                                   annotator=session.annotator,
                                   cursor=(si, fi),
                                   started_at=session.started_at))

    @app.post("/annotations")
    def submit_annotation(body: AnnotationBody):
        annotator, session = _resolve_annotator(body)
        record = AnnotationRecord(
            sentence_id=body.sentence_id,
            annotator=annotator,
            feature_id=body.feature_id,
            properties=frozenset(body.properties),
            node_path=tuple(body.node_path) if body.node_path else None,
            session_id=body.session_id or "",
        )
        try:
            revision = store.submit(record)
        except DataError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if session is not None:
            _advance(session, body.sentence_id, body.feature_id)
        if config.assistant_capture:
            threading.Thread(target=_capture_exchange,
                             args=(body.sentence_id, body.feature_id),
                             daemon=True).start()
        refreshed = store.session(body.session_id) if body.session_id else None
        return {"revision": revision,
                "cursor": list(refreshed.cursor) if refreshed else None}

    @app.get("/assist")
    def get_assist(sentence_id: str, feature_id: str):
        return _assist(sentence_id, feature_id, force=False)

    @app.post("/assist")
    def post_assist(body: AssistBody):
        return _assist(body.sentence_id, body.feature_id, force=True)

    @app.get("/progress")
    def progress():
        per_feature: dict[str, dict[str, int]] = {}
        per_annotator: dict[str, int] = {}
        for record in store.annotations():
            per_annotator[record.annotator.id] = \
                per_annotator.get(record.annotator.id, 0) + 1
            slot = per_feature.setdefault(record.feature_id, {})
            slot[record.annotator.id] = slot.get(record.annotator.id, 0) + 1
        return {
            "n_sentences": len(sentences),
            "n_manual_features": len(features),
            "total_units": len(sentences) * len(features),
            "per_annotator": dict(sorted(per_annotator.items())),
            "per_feature": {k: dict(sorted(v.items()))
                            for k, v in sorted(per_feature.items())},
        }

    @app.get("/reports/agreement")
    def agreement_report(annotators: str, normalization: str = "per_unit",
                         format: str = "records"):
        ids = [a.strip() for a in annotators.split(",") if a.strip()]
        if len(ids) < 2:
            raise HTTPException(status_code=422,
                                detail="need at least two annotator ids")
        reports = []
        for feature_id in store.features_with_records():
            report = agreement.compute_report(store, feature_id, ids,
                                              jaccard_normalization=normalization)
            if report.n_units:
                reports.append(report)
        consistency = agreement.consistency_by_group(
            [ex for _, ex in store.exchanges()])
        if format == "table":
            names = {f.id: f.name for f in taxonomy.features}
            text = agreement.report_table(reports, consistency, names)
            return Response(content=text, media_type="text/plain")
        return {
            "agreement": [
                {"feature_id": r.feature_id, "krippendorff": r.krippendorff,
                 "jaccard": r.jaccard, "exact": r.exact,
                 "n_units": r.n_units, "n_pairable": r.n_pairable}
                for r in reports
            ],
            "consistency": [
                {"feature_id": c.feature_id, "model": c.model,
                 "temperature": c.temperature,
                 "exact_consistency": c.exact_consistency,
                 "n_prompts": c.n_prompts, "n_flagged": c.n_flagged}
                for c in consistency
            ],
        }

    return app

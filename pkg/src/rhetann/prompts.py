"""Deterministic prompt rendering and strict response parsing.

Two prompt shapes are supported:

* V1 — all properties of one feature, model chooses many. Response schema
  is a JSON object with "Properties" (list) and "Explanation".
* V2 — one property, yes/no. Response schema is a JSON object with
  "Answer" and "Explanation".

Rendered text is a pure function of (taxonomy version, prompt version,
feature/property ids, sentence text): byte-stable across runs, which is
what makes stored exchanges reproducible and cacheable.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

from .errors import PromptError, TaxonomyError
from .taxonomy import Feature, FeatureTaxonomy, Property

SYSTEM_TEXT = "You are a rhetorician and linguist specializing in news text."

V1_TASK = (
    "Your task is to identify which, if any, of the following properties of "
    "{feature} are used in the example text. You may select multiple properties. "
    "Each line contains a property followed by a colon, followed by a brief "
    "definition and example(s):"
)
V1_FORMAT = (
    'Format your response as a JSON object with "Properties" and "Explanation" '
    'as the keys. The value of "Properties" should be a list. If none of the '
    "properties are present, return an empty list. Explain your choice in the "
    '"Explanation". Make your response as short as possible. The example text '
    "is delimited with triple backticks."
)
V2_TASK = (
    "Your task is to identify whether the following property of {feature} is "
    "used in the example text. The property is followed by a colon, followed "
    "by a brief definition and example(s):"
)
V2_FORMAT = (
    'Format your response as a JSON object with "Answer" and "Explanation" as '
    'the keys. The value of "Answer" should be either "yes" or "no". Explain '
    'your choice in the "Explanation". Make your response as short as '
    "possible. The example text is delimited with triple backticks."
)

VIOLATIONS = ("unknown_property", "missing_key", "not_json", "extra_output")

_WS = re.compile(r"\s+")


def normalize(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _quote(example: str) -> str:
    # single quotes, unless the example itself contains an apostrophe
    if "'" in example:
        return f'"{example}"'
    return f"'{example}'"


def property_line(prop: Property) -> str:
    line = f"{prop.name}: {normalize(prop.definition)}"
    if prop.examples:
        label = "Example:" if len(prop.examples) == 1 else "Examples:"
        line += f" {label} " + ", ".join(_quote(normalize(e)) for e in prop.examples)
    return line


def _check_sentence(sentence_text: str):
    if "```" in sentence_text:
        raise PromptError(
            "sentence contains a triple-backtick run, which collides with the "
            "prompt delimiter; strip or rewrite the backticks before prompting"
        )


def _manual_feature(taxonomy: FeatureTaxonomy, feature_id: str) -> Feature:
    feature = taxonomy.feature(feature_id)
    if feature.annotation_mode != "manual":
        raise PromptError(
            f"feature {feature_id!r} is {feature.annotation_mode}, not prompted"
        )
    return feature


@dataclass(frozen=True)
class PromptSpec:
    version: str  # "V1" | "V2"
    feature_id: str
    sentence_id: str
    system_text: str
    user_text: str
    expected_schema: str  # "PropertiesExplanation" | "AnswerExplanation"
    property_id: str | None = None
    taxonomy_version: str = ""

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]

    def digest(self) -> str:
        payload = json.dumps(self.messages(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def request_ref(self) -> dict:
        """Compact reference stored with exchanges; the text is recomputable."""
        return {
            "version": self.version,
            "feature_id": self.feature_id,
            "property_id": self.property_id,
            "sentence_id": self.sentence_id,
            "taxonomy_version": self.taxonomy_version,
            "digest": self.digest(),
        }


def build_v1(taxonomy: FeatureTaxonomy, feature_id: str, sentence_text: str,
             sentence_id: str = "") -> PromptSpec:
    feature = _manual_feature(taxonomy, feature_id)
    _check_sentence(sentence_text)
    lines = [V1_TASK.format(feature=feature.name)]
    lines.extend(property_line(p) for p in feature.properties)
    lines.append(V1_FORMAT)
    lines.append(f"Example text: ```{normalize(sentence_text)}```")
    return PromptSpec(
        version="V1",
        feature_id=feature.id,
        sentence_id=sentence_id,
        system_text=SYSTEM_TEXT,
        user_text="\n".join(lines),
        expected_schema="PropertiesExplanation",
        taxonomy_version=taxonomy.version,
    )


def build_v2(taxonomy: FeatureTaxonomy, feature_id: str, property_id: str,
             sentence_text: str, sentence_id: str = "") -> PromptSpec:
    feature = _manual_feature(taxonomy, feature_id)
    try:
        prop = feature.get_property(property_id)
    except TaxonomyError:
        raise PromptError(
            f"property {property_id!r} does not belong to feature {feature_id!r}"
        ) from None
    _check_sentence(sentence_text)
    lines = [
        V2_TASK.format(feature=feature.name),
        property_line(prop),
        V2_FORMAT,
        f"Example text: ```{normalize(sentence_text)}```",
    ]
    return PromptSpec(
        version="V2",
        feature_id=feature.id,
        sentence_id=sentence_id,
        system_text=SYSTEM_TEXT,
        user_text="\n".join(lines),
        expected_schema="AnswerExplanation",
        property_id=prop.id,
        taxonomy_version=taxonomy.version,
    )


@dataclass(frozen=True)
class LlmResponse:
    raw: str
    parse_ok: bool
    explanation: str = ""
    properties: frozenset[str] | None = None  # V1, present iff parse_ok
    answer: bool | None = None  # V2, present iff parse_ok
    violations: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "raw": self.raw,
            "parse_ok": self.parse_ok,
            "explanation": self.explanation,
            "properties": sorted(self.properties) if self.properties is not None else None,
            "answer": self.answer,
            "violations": list(self.violations),
        }

    @classmethod
    def from_json(cls, raw: dict) -> "LlmResponse":
        props = raw.get("properties")
        return cls(
            raw=raw["raw"],
            parse_ok=raw["parse_ok"],
            explanation=raw.get("explanation", ""),
            properties=frozenset(props) if props is not None else None,
            answer=raw.get("answer"),
            violations=tuple(raw.get("violations", ())),
        )


def _extract_object(raw: str) -> tuple[dict | None, bool]:
    """First JSON object in raw, plus whether extra prose surrounds it."""
    stripped = raw.strip()
    try:
        obj = json.loads(stripped)
        if isinstance(obj, dict):
            return obj, False
        return None, False
    except json.JSONDecodeError:
        pass
    decoder = json.JSONDecoder()
    start = stripped.find("{")
    while start != -1:
        try:
            obj, end = decoder.raw_decode(stripped, start)
        except json.JSONDecodeError:
            start = stripped.find("{", start + 1)
            continue
        if isinstance(obj, dict):
            extra = bool(stripped[:start].strip() or stripped[end:].strip())
            return obj, extra
        start = stripped.find("{", start + 1)
    return None, False


def parse_response(spec: PromptSpec, raw: str,
                   taxonomy: FeatureTaxonomy | None = None) -> LlmResponse:
    """Strict parse of a model reply against the prompt's schema.

    Never raises: every failure is encoded in parse_ok/violations so that
    consistency accounting can count malformed replies as disagreements.
    """
    obj, extra = _extract_object(raw)
    violations: list[str] = []
    if extra:
        violations.append("extra_output")
    if obj is None:
        return LlmResponse(raw=raw, parse_ok=False, violations=("not_json",))

    explanation = obj.get("Explanation")
    if not isinstance(explanation, str):
        violations.append("missing_key")
        explanation = ""

    if spec.expected_schema == "PropertiesExplanation":
        listed = obj.get("Properties")
        if not isinstance(listed, list):
            return LlmResponse(raw=raw, parse_ok=False, explanation=explanation,
                               violations=tuple(violations + ["missing_key"]))
        feature = None
        if taxonomy is not None:
            feature = taxonomy.feature(spec.feature_id)
        kept: set[str] = set()
        for name in listed:
            prop = feature.find_property_by_name(str(name)) if feature else None
            if prop is not None:
                kept.add(prop.id)
            elif feature is not None:
                if "unknown_property" not in violations:
                    violations.append("unknown_property")
            else:
                # no taxonomy to resolve against: keep names as-is
                kept.add(str(name))
        parse_ok = "missing_key" not in violations
        return LlmResponse(raw=raw, parse_ok=parse_ok, explanation=explanation,
                           properties=frozenset(kept) if parse_ok else None,
                           violations=tuple(violations))

    answer_raw = obj.get("Answer")
    answer = None
    if isinstance(answer_raw, str):
        word = answer_raw.strip().rstrip(".").lower()
        if word in ("yes", "no"):
            answer = word == "yes"
    elif isinstance(answer_raw, bool):
        answer = answer_raw
    if answer is None:
        return LlmResponse(raw=raw, parse_ok=False, explanation=explanation,
                           violations=tuple(violations + ["missing_key"]))
    parse_ok = "missing_key" not in violations
    return LlmResponse(raw=raw, parse_ok=parse_ok, explanation=explanation,
                       answer=answer if parse_ok else None,
                       violations=tuple(violations))


def effective_property_set(prompt_version: str, property_id: str | None,
                           response: LlmResponse) -> frozenset[str] | None:
    """Property set a response implies; None when it cannot be trusted."""
    if not response.parse_ok:
        return None
    if prompt_version == "V1":
        return response.properties
    if response.answer is None:
        return None
    return frozenset([property_id]) if response.answer else frozenset()

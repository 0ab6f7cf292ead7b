"""Registry of rhetorical/linguistic features and their properties.

The taxonomy ships as a versioned YAML document (``data/taxonomy.yaml``)
and is immutable after loading, so one instance can be shared freely
across threads.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib.resources import files
from typing import IO, Iterable, Union

import yaml

from .errors import TaxonomyError

PARTS = ("WordChoice", "Sentences")
ANNOTATION_MODES = ("manual", "derived", "deprecated")

MIN_PROPERTIES = 2
MAX_PROPERTIES = 14


def slugify(name: str) -> str:
    """Lowercase slug: runs of non-alphanumerics become single hyphens."""
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    if not slug:
        raise TaxonomyError(f"name {name!r} has no sluggable characters")
    return slug


@dataclass(frozen=True)
class Property:
    id: str
    name: str
    definition: str
    examples: tuple[str, ...] = ()


@dataclass(frozen=True)
class Feature:
    id: str
    name: str
    part: str
    properties: tuple[Property, ...]
    annotation_mode: str = "manual"
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {p.id: p for p in self.properties})

    @property
    def fragment_selectable(self) -> bool:
        """Whether parse-tree node selection applies (manual features only)."""
        return self.annotation_mode == "manual"

    def property_ids(self) -> frozenset[str]:
        return frozenset(self._by_id)

    def get_property(self, property_id: str) -> Property:
        try:
            return self._by_id[property_id]
        except KeyError:
            raise TaxonomyError(
                f"unknown property id {property_id!r} in feature {self.id!r}"
            ) from None

    def find_property_by_name(self, name: str) -> Property | None:
        for prop in self.properties:
            if prop.name == name:
                return prop
        lowered = name.strip().lower()
        for prop in self.properties:
            if prop.name.lower() == lowered or prop.id == lowered:
                return prop
        return None


@dataclass(frozen=True)
class FeatureTaxonomy:
    version: str
    features: tuple[Feature, ...]
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {f.id: f for f in self.features})

    def feature(self, feature_id: str) -> Feature:
        try:
            return self._by_id[feature_id]
        except KeyError:
            raise TaxonomyError(f"unknown feature id {feature_id!r}") from None

    def lookup(self, feature_id: str, property_id: str | None = None):
        """Resolve a feature, or a property within it. Never a partial match."""
        feature = self.feature(feature_id)
        if property_id is None:
            return feature
        return feature.get_property(property_id)

    def manual_features(self) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if f.annotation_mode == "manual")

    def feature_ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.features)


def _line_of(source_text: str | None, needle: str) -> str:
    if not source_text:
        return ""
    for lineno, line in enumerate(source_text.splitlines(), start=1):
        if needle in line:
            return f" (line {lineno})"
    return ""


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise TaxonomyError(f"missing field {key!r} in {context}")
    return mapping[key]


def load_taxonomy(source: Union[str, IO[str]]) -> FeatureTaxonomy:
    """Parse and validate a taxonomy document.

    ``source`` is YAML text or a readable text stream. Raises
    :class:`TaxonomyError` on malformed documents, duplicate ids, or
    property counts outside [2, 14], naming the offending feature and,
    where possible, the source line.
    """
    text = source if isinstance(source, str) else source.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise TaxonomyError(f"malformed taxonomy document: {exc}") from exc
    if not isinstance(doc, dict):
        raise TaxonomyError("malformed taxonomy document: top level must be a mapping")

    version = str(_require(doc, "version", "taxonomy document"))
    raw_features = _require(doc, "features", "taxonomy document")
    if not isinstance(raw_features, list):
        raise TaxonomyError("malformed taxonomy document: features must be a list")

    features: list[Feature] = []
    seen_feature_ids: set[str] = set()
    for raw in raw_features:
        if not isinstance(raw, dict):
            raise TaxonomyError("malformed feature record: expected a mapping")
        fid = str(_require(raw, "id", "feature record"))
        name = str(_require(raw, "name", f"feature {fid!r}"))
        part = str(_require(raw, "part", f"feature {fid!r}"))
        mode = str(raw.get("annotation_mode", "manual"))
        if fid in seen_feature_ids:
            raise TaxonomyError(
                f"duplicate feature id {fid!r}{_line_of(text, f'id: {fid}')}"
            )
        seen_feature_ids.add(fid)
        if part not in PARTS:
            raise TaxonomyError(f"feature {fid!r}: part must be one of {PARTS}, got {part!r}")
        if mode not in ANNOTATION_MODES:
            raise TaxonomyError(
                f"feature {fid!r}: annotation_mode must be one of {ANNOTATION_MODES}, got {mode!r}"
            )

        raw_props = _require(raw, "properties", f"feature {fid!r}")
        if not isinstance(raw_props, list):
            raise TaxonomyError(f"feature {fid!r}: properties must be a list")
        if not MIN_PROPERTIES <= len(raw_props) <= MAX_PROPERTIES:
            raise TaxonomyError(
                f"feature {fid!r}: property count {len(raw_props)} outside "
                f"[{MIN_PROPERTIES}, {MAX_PROPERTIES}]{_line_of(text, f'id: {fid}')}"
            )

        props: list[Property] = []
        seen_prop_ids: set[str] = set()
        for rp in raw_props:
            if not isinstance(rp, dict):
                raise TaxonomyError(f"feature {fid!r}: property record must be a mapping")
            pid = str(_require(rp, "id", f"property of feature {fid!r}"))
            pname = str(_require(rp, "name", f"property {pid!r} of feature {fid!r}"))
            definition = str(_require(rp, "definition", f"property {pid!r} of feature {fid!r}"))
            if pid in seen_prop_ids:
                raise TaxonomyError(
                    f"duplicate property id {pid!r} in feature {fid!r}"
                    f"{_line_of(text, f'id: {pid}')}"
                )
            seen_prop_ids.add(pid)
            if not definition.strip():
                raise TaxonomyError(f"property {pid!r} of feature {fid!r}: empty definition")
            examples = rp.get("examples", []) or []
            if not isinstance(examples, list):
                raise TaxonomyError(
                    f"property {pid!r} of feature {fid!r}: examples must be a list"
                )
            props.append(Property(id=pid, name=pname, definition=definition,
                                  examples=tuple(str(e) for e in examples)))
        features.append(Feature(id=fid, name=name, part=part,
                                properties=tuple(props), annotation_mode=mode))
    return FeatureTaxonomy(version=version, features=tuple(features))


def serialize_taxonomy(taxonomy: FeatureTaxonomy) -> str:
    """Render back to the taxonomy file format (YAML). Round-trips losslessly."""
    doc = {
        "version": taxonomy.version,
        "features": [
            {
                "id": f.id,
                "name": f.name,
                "part": f.part,
                "annotation_mode": f.annotation_mode,
                "properties": [
                    {
                        "id": p.id,
                        "name": p.name,
                        "definition": p.definition,
                        "examples": list(p.examples),
                    }
                    for p in f.properties
                ],
            }
            for f in taxonomy.features
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def load_taxonomy_file(path) -> FeatureTaxonomy:
    with open(path, encoding="utf-8") as handle:
        return load_taxonomy(handle)


def load_default() -> FeatureTaxonomy:
    """Load the taxonomy data file shipped with the package."""
    text = files("rhetann").joinpath("data/taxonomy.yaml").read_text(encoding="utf-8")
    return load_taxonomy(text)


def check_referential_integrity(taxonomy: FeatureTaxonomy,
                                refs: Iterable[tuple[str, str | None]]) -> list[str]:
    """Return a message per (feature_id, property_id) pair that fails to resolve."""
    problems = []
    for feature_id, property_id in refs:
        try:
            taxonomy.lookup(feature_id, property_id)
        except TaxonomyError as exc:
            problems.append(str(exc))
    return problems

"""Annotation toolkit for rhetorical/linguistic features in news text.

Combines a human annotation workbench (HTTP server + store) with an LLM
annotation pipeline: prompt construction, response validation, agreement
and consistency metrics, fine-tuning dataset builds, and cost estimation.
"""
from .agreement import (AgreementReport, AgreementUnit, ConsistencyReport,
                        exact_agreement, intra_llm_consistency,
                        jaccard_agreement, krippendorff_alpha)
from .corpus import Corpus, Sentence, load_corpus, load_corpus_file
from .errors import (AgreementError, CorpusError, DataError, FinetuneError,
                     GatewayError, PromptError, RhetAnnError, StoreError,
                     TaxonomyError, TransportExhausted, TreeParseError)
from .gateway import (CallPolicy, Gateway, MockTransport, ModelProfile,
                      estimate_cost, human_annotation_cost)
from .prompts import LlmResponse, PromptSpec, build_v1, build_v2, parse_response
from .store import (ABSENT, AnnotationRecord, AnnotatorId, AssistantExchange,
                    GroundTruthLabel, Store, llm_annotator)
from .taxonomy import (Feature, FeatureTaxonomy, Property, load_default,
                       load_taxonomy, load_taxonomy_file)
from .trees import NodePath, ParseTree, fragment, parse_bracketed, serialize_tree

__version__ = "0.1.0"

__all__ = [
    "ABSENT", "AgreementError", "AgreementReport", "AgreementUnit",
    "AnnotationRecord", "AnnotatorId", "AssistantExchange", "CallPolicy",
    "ConsistencyReport", "Corpus", "CorpusError", "DataError", "Feature",
    "FeatureTaxonomy", "FinetuneError", "Gateway", "GatewayError",
    "GroundTruthLabel", "LlmResponse", "MockTransport", "ModelProfile",
    "NodePath", "ParseTree", "PromptError", "PromptSpec", "Property",
    "RhetAnnError", "Sentence", "Store", "StoreError", "TaxonomyError",
    "TransportExhausted", "TreeParseError", "build_v1", "build_v2",
    "estimate_cost", "exact_agreement", "fragment", "human_annotation_cost",
    "intra_llm_consistency", "jaccard_agreement", "krippendorff_alpha",
    "llm_annotator", "load_corpus", "load_corpus_file", "load_default",
    "load_taxonomy", "load_taxonomy_file", "parse_bracketed",
    "parse_response", "serialize_tree",
]

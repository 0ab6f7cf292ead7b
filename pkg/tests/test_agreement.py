from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rhetann.agreement import (AgreementReport, AgreementUnit,
                               ConsistencyReport, canonical_label,
                               consistency_by_group, exact_agreement,
                               intra_llm_consistency, jaccard_agreement,
                               krippendorff_alpha, render_figure,
                               render_records, report_table)
from rhetann.errors import AgreementError
from rhetann.store import ABSENT, AssistantExchange

from oracles import oracle_alpha, oracle_exact, oracle_jaccard


def unit(sid: str, **values) -> AgreementUnit:
    return AgreementUnit(sentence_id=sid,
                         values={k: (ABSENT if v is None else frozenset(v))
                                 for k, v in values.items()})


def to_oracle(units: list[AgreementUnit]) -> list[dict]:
    return [{a: set(v) for a, v in u.values.items() if v is not ABSENT}
            for u in units]


# -- frozen hand-computed value (derived independently of the library) ------

def test_alpha_matches_frozen_coincidence_value():
    """2 annotators, unit labels [(a,a),(b,b),(a,b),(b,b)].

    Coincidence matrix: o_aa=2, o_bb=4, o_ab=o_ba=1; n_a=3, n_b=5, n=8.
    D_o = 2/8; D_e = 30/56; alpha = 1 - D_o/D_e = 8/15.
    """
    units = [unit("u1", x={"a"}, y={"a"}),
             unit("u2", x={"b"}, y={"b"}),
             unit("u3", x={"a"}, y={"b"}),
             unit("u4", x={"b"}, y={"b"})]
    expected = float(Fraction(8, 15))
    assert krippendorff_alpha(units) == pytest.approx(expected, abs=1e-12)
    assert oracle_alpha(to_oracle(units)) == pytest.approx(expected, abs=1e-12)


def test_unanimity_gives_exactly_one():
    # two distinct labels across units keep D_e > 0 while D_o = 0
    units = [unit(f"u{i}", a={"x"}, b={"x"}, c={"x"}) for i in range(5)]
    units += [unit(f"v{i}", a={"y"}, b={"y"}, c={"y"}) for i in range(5)]
    assert krippendorff_alpha(units) == 1.0
    assert jaccard_agreement(units) == 1.0
    assert exact_agreement(units) == 1.0


def test_multilabel_sets_canonicalize_to_single_nominal_label():
    assert canonical_label({"negation", "modality"}) == "modality|negation"
    # {neg, mod} vs {mod}: full nominal disagreement, not partial credit
    units = [unit("u1", x={"negation", "modality"}, y={"modality"}),
             unit("u2", x={"modality"}, y={"modality"})]
    library = krippendorff_alpha(units)
    reference = oracle_alpha(to_oracle(units))
    assert library == pytest.approx(reference, abs=1e-12)
    assert library < 1.0


def test_single_value_units_contribute_nothing():
    pairable = [unit("u1", a={"x"}, b={"x"}), unit("u2", a={"x"}, b={"y"})]
    with_lonely = pairable + [unit("u3", a={"z"}, b=None)]
    assert krippendorff_alpha(with_lonely) == \
        pytest.approx(krippendorff_alpha(pairable), abs=1e-12)


def test_alpha_undefined_when_expected_disagreement_degenerate():
    # every pairable label identical -> D_e = 0 -> undefined, not 1.0
    units = [unit(f"u{i}", a={"x"}, b={"x"}) for i in range(4)]
    assert krippendorff_alpha(units) is None


def test_alpha_empty_units_is_an_error():
    with pytest.raises(AgreementError):
        krippendorff_alpha([])


# -- jaccard / exact ---------------------------------------------------------

def test_jaccard_pair_examples():
    assert jaccard_agreement([unit("u", x={"A", "B"}, y={"A", "B"})]) == 1.0
    assert jaccard_agreement([unit("u", x={"A", "B"}, y={"B"})]) == 0.5
    # three annotators {A},{A},{A,B}: pairs 1, 0.5, 0.5 -> mean 2/3
    score = jaccard_agreement([unit("u", x={"A"}, y={"A"}, z={"A", "B"})])
    assert score == pytest.approx(2 / 3, abs=1e-12)


def test_jaccard_empty_sets():
    assert jaccard_agreement([unit("u", x=set(), y=set())]) == 1.0
    assert jaccard_agreement([unit("u", x=set(), y={"A"})]) == 0.0


def test_jaccard_excludes_single_value_units():
    units = [unit("u1", x={"A"}, y={"A"}),
             unit("u2", x={"B"}, y=None)]  # not pairable
    assert jaccard_agreement(units) == 1.0


def test_jaccard_global_vs_per_unit_switch():
    units = [unit("u1", x={"A"}, y={"A"}),  # 1 pair, score 1
             unit("u2", x={"A"}, y={"B"}, z={"A"})]  # 3 pairs: 0, 1, 0
    per_unit = jaccard_agreement(units, "per_unit")
    pooled = jaccard_agreement(units, "global")
    assert per_unit == pytest.approx((1.0 + 1 / 3) / 2, abs=1e-12)
    assert pooled == pytest.approx(2 / 4, abs=1e-12)
    with pytest.raises(AgreementError, match="normalization"):
        jaccard_agreement(units, "harmonic")


def test_exact_agreement_counts():
    units = [unit("u1", x={"A"}, y={"A"}),
             unit("u2", x={"A"}, y={"B"}),
             unit("u3", x=set(), y=set()),
             unit("u4", x={"A", "B"}, y={"A", "B"})]
    assert exact_agreement(units) == 0.75
    # one-annotator units excluded from numerator and denominator
    units.append(unit("u5", x={"A"}, y=None))
    assert exact_agreement(units) == 0.75


# -- randomized equivalence with the brute-force oracles ---------------------

def random_units(rng: random.Random):
    annotators = [f"a{i}" for i in range(rng.randint(2, 4))]
    properties = [f"p{i}" for i in range(rng.randint(2, 6))]
    units = []
    for u in range(rng.randint(5, 50)):
        values = {}
        for a in annotators:
            if rng.random() < 0.15:
                values[a] = ABSENT
            else:
                values[a] = frozenset(p for p in properties if rng.random() < 0.4)
        if all(v is ABSENT for v in values.values()):
            values[annotators[0]] = frozenset({properties[0]})
        units.append(AgreementUnit(sentence_id=f"u{u}", values=values))
    return units


def test_200_random_fixtures_match_oracles():
    rng = random.Random(2026)
    for trial in range(200):
        units = random_units(rng)
        reference = to_oracle(units)
        for library_fn, oracle_fn in ((krippendorff_alpha, oracle_alpha),
                                      (jaccard_agreement, oracle_jaccard),
                                      (exact_agreement, oracle_exact)):
            ours = library_fn(units)
            expected = oracle_fn(reference)
            if expected is None:
                assert ours is None, (trial, library_fn.__name__)
            else:
                assert ours == pytest.approx(expected, abs=1e-12), \
                    (trial, library_fn.__name__)


# -- hypothesis property tests ------------------------------------------------

label_sets = st.frozensets(st.sampled_from(["p1", "p2", "p3"]), max_size=3)


@st.composite
def unit_lists(draw):
    n_annotators = draw(st.integers(2, 4))
    annotators = [f"a{i}" for i in range(n_annotators)]
    n_units = draw(st.integers(1, 12))
    units = []
    for u in range(n_units):
        values = {a: draw(st.one_of(st.none(), label_sets)) for a in annotators}
        if all(v is None for v in values.values()):
            values[annotators[0]] = frozenset()
        units.append(AgreementUnit(
            sentence_id=f"u{u}",
            values={a: (ABSENT if v is None else v) for a, v in values.items()}))
    return units


@settings(max_examples=150, deadline=None)
@given(unit_lists(), st.randoms())
def test_metrics_invariant_under_reordering(units, rng):
    def scores(us):
        return (krippendorff_alpha(us), jaccard_agreement(us), exact_agreement(us))

    shuffled = list(units)
    rng.shuffle(shuffled)
    renamed = [AgreementUnit(sentence_id=u.sentence_id,
                             values={f"z-{a}": v for a, v in u.values.items()})
               for u in units]
    for a, b in zip(scores(units), scores(shuffled)):
        assert (a is None and b is None) or a == pytest.approx(b, abs=1e-12)
    for a, b in zip(scores(units), scores(renamed)):
        assert (a is None and b is None) or a == pytest.approx(b, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(unit_lists())
def test_ranges_and_exact_le_jaccard(units):
    alpha = krippendorff_alpha(units)
    jaccard = jaccard_agreement(units)
    exact = exact_agreement(units)
    if alpha is not None:
        assert -1.0 - 1e-9 <= alpha <= 1.0 + 1e-9
    if jaccard is not None:
        assert 0.0 <= jaccard <= 1.0
        assert 0.0 <= exact <= jaccard + 1e-12  # exact match implies Jaccard 1
    else:
        assert exact is None


@settings(max_examples=100, deadline=None)
@given(unit_lists())
def test_alpha_invariant_under_label_permutation(units):
    mapping = {"p1": "p2", "p2": "p3", "p3": "p1"}

    def relabel(value):
        if value is ABSENT:
            return ABSENT
        return frozenset(mapping[p] for p in value)

    permuted = [AgreementUnit(sentence_id=u.sentence_id,
                              values={a: relabel(v) for a, v in u.values.items()})
                for u in units]
    a, b = krippendorff_alpha(units), krippendorff_alpha(permuted)
    assert (a is None and b is None) or a == pytest.approx(b, abs=1e-12)


# -- intra-LLM consistency ----------------------------------------------------

def exchange(sid, responses, feature="aspect", model="m", temp=1.0,
             version="V1", prop=None):
    return AssistantExchange(
        sentence_id=sid, feature_id=feature, prompt_version=version,
        property_id=prop, request={},
        responses=tuple(responses), model=model, temperature=temp)


def v1_response(props):
    return {"raw": json.dumps({"Properties": sorted(props), "Explanation": "e"}),
            "parse_ok": True, "explanation": "e",
            "properties": sorted(props), "answer": None, "violations": []}


BAD = {"raw": "no json here", "parse_ok": False, "explanation": "",
       "properties": None, "answer": None, "violations": ["not_json"]}


def test_consistency_exact_and_inconsistent():
    exchanges = [
        exchange("s1", [v1_response({"negation", "modality"})] * 3),
        exchange("s2", [v1_response({"negation"}), v1_response({"negation"}),
                        v1_response(set())]),
    ]
    report = intra_llm_consistency(exchanges, "aspect")
    assert report.exact_consistency == 0.5
    assert report.n_prompts == 2
    assert report.n_flagged == 0


def test_consistency_unparseable_counts_as_inconsistent_and_flagged():
    exchanges = [exchange("s1", [v1_response({"a"}), BAD, v1_response({"a"})])]
    report = intra_llm_consistency(exchanges, "aspect")
    assert report.exact_consistency == 0.0
    assert report.n_flagged == 1


def test_consistency_rejects_mixed_groups():
    exchanges = [exchange("s1", [v1_response(set())], temp=1.0),
                 exchange("s2", [v1_response(set())], temp=0.2)]
    with pytest.raises(AgreementError, match="mix"):
        intra_llm_consistency(exchanges, "aspect")
    reports = consistency_by_group(exchanges)
    assert [(r.model, r.temperature) for r in reports] == [("m", 0.2), ("m", 1.0)]


def test_consistency_v2_uses_answer_projection():
    yes = {"raw": '{"Answer": "yes", "Explanation": "e"}', "parse_ok": True,
           "explanation": "e", "properties": None, "answer": True,
           "violations": []}
    no = dict(yes, answer=False)
    same = exchange("s1", [yes, yes, yes], version="V2", prop="simple")
    flip = exchange("s2", [yes, no, yes], version="V2", prop="simple")
    report = intra_llm_consistency([same, flip], "aspect")
    assert report.exact_consistency == 0.5


# -- rendering ----------------------------------------------------------------

def make_reports():
    reports = [
        AgreementReport("tense", 0.9234567, 0.85, 0.8, 10, 10),
        AgreementReport("aspect", None, 0.5, 0.25, 8, 7),
    ]
    consistency = [
        ConsistencyReport("aspect", "m1", 1.0, 0.75, 8),
        ConsistencyReport("tense", "m1", 1.0, 1.0, 10),
        ConsistencyReport("aspect", "m2", 0.2, 0.5, 8),
    ]
    return reports, consistency


def test_report_table_shape_and_formatting():
    reports, consistency = make_reports()
    names = {"aspect": "Aspect", "tense": "Tense"}
    table = report_table(reports, consistency, names)
    lines = table.splitlines()
    assert lines[0].split() == ["Feature", "K", "J", "E", "m1@1.0", "m2@0.2"]
    assert lines[2].startswith("Aspect")  # sorted by display name
    assert "--" in lines[2]  # undefined alpha cell
    assert "0.923" in lines[3]  # 3-decimal rendering
    # deterministic: regenerating is byte-identical
    assert report_table(reports, consistency, names) == table


def test_render_records_is_machine_readable():
    reports, consistency = make_reports()
    lines = render_records(reports, consistency).splitlines()
    parsed = [json.loads(line) for line in lines]
    kinds = {p["kind"] for p in parsed}
    assert kinds == {"agreement", "consistency"}
    agreement_rows = [p for p in parsed if p["kind"] == "agreement"]
    assert {r["feature_id"] for r in agreement_rows} == {"aspect", "tense"}
    assert agreement_rows[0]["krippendorff"] is None  # aspect sorts first


def test_render_figure_writes_file(tmp_path):
    reports, consistency = make_reports()
    out = tmp_path / "scores.png"
    render_figure(reports, consistency, str(out))
    assert out.exists() and out.stat().st_size > 1000

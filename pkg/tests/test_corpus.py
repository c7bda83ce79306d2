import random

import pytest
from hypothesis import given, settings, strategies as st

from hupipe.corpus import (CorpusError, iob_to_spans, parse_conllu, parse_ner_tsv,
                           serialize_conllu, serialize_ner_tsv, spans_to_iob)
from hupipe.doc import MorphFeats, Span

TWO_ROWS = (
    "# text = Ez jó\n"
    "1\tEz\tez\tPRON\t_\tCase=Nom|Number=Sing\t2\tnsubj\t_\t_\n"
    "2\tjó\tjó\tADJ\t_\t_\t0\troot\t_\t_\n"
    "\n"
)


def test_parse_two_rows():
    (doc,) = parse_conllu(TWO_ROWS)
    assert doc.words == ["Ez", "jó"]
    assert doc.text == "Ez jó"
    assert [t.head for t in doc] == [2, 0]
    assert [t.deprel for t in doc] == ["nsubj", "root"]
    assert doc[0].feats == MorphFeats.parse("Case=Nom|Number=Sing")
    assert doc[1].feats == MorphFeats()
    assert doc.comments == ["# text = Ez jó"]


def test_nine_columns_reports_line():
    bad = TWO_ROWS.replace("2\tjó\tjó\tADJ\t_\t_\t0\troot\t_\t_", "2\tjó\tjó\tADJ\t_\t0\troot\t_\t_")
    with pytest.raises(CorpusError) as err:
        parse_conllu(bad)
    assert err.value.line == 3


def test_nonconsecutive_ids_and_bad_head():
    with pytest.raises(CorpusError) as err:
        parse_conllu(TWO_ROWS.replace("\n2\t", "\n3\t"))
    assert err.value.line == 3
    with pytest.raises(CorpusError) as err:
        parse_conllu(TWO_ROWS.replace("\t2\tnsubj", "\t7\tnsubj"))
    assert err.value.line == 2


def test_multiword_range_skipped_and_empty_node_rejected():
    text = "1-2\tEzzel\t_\t_\t_\t_\t_\t_\t_\t_\n" + TWO_ROWS.split("\n", 1)[1]
    assert parse_conllu(text)[0].words == ["Ez", "jó"]
    with pytest.raises(CorpusError):
        parse_conllu(TWO_ROWS.replace("2\tjó", "1.1\tjó"))


def test_unset_lemma_serializes_underscore():
    (doc,) = parse_conllu(TWO_ROWS)
    doc[0].lemma = None
    assert serialize_conllu([doc]).splitlines()[1].split("\t")[2] == "_"


def test_feats_canonical_on_output():
    (doc,) = parse_conllu(TWO_ROWS.replace("Case=Nom|Number=Sing", "Number=Sing|Case=Ins"))
    assert "Case=Ins|Number=Sing" in serialize_conllu([doc])


def test_sample_roundtrip_byte_stable(sample_conllu):
    text = sample_conllu.read_text(encoding="utf-8")
    docs = parse_conllu(text)
    assert serialize_conllu(docs) == text
    again = parse_conllu(serialize_conllu(docs))
    assert [[vars(t) for t in d] for d in again] == [[vars(t) for t in d] for d in docs]


def test_space_after_no_reflected_in_text():
    text = TWO_ROWS.replace("nsubj\t_\t_", "nsubj\t_\tSpaceAfter=No")
    (doc,) = parse_conllu(text)
    assert doc.text == "Ezjó"


def test_iob_decode():
    assert iob_to_spans(["B-PER", "I-PER", "O"]) == [Span(0, 2, "PER")]


def test_iob_strict_and_lenient():
    with pytest.raises(CorpusError):
        iob_to_spans(["O", "I-PER"])
    assert iob_to_spans(["O", "I-PER", "I-PER"], strict=False) == [Span(1, 3, "PER")]
    with pytest.raises(CorpusError):
        iob_to_spans(["B-PER", "I-LOC"])


def test_bilou_tags_accepted():
    assert iob_to_spans(["U-LOC", "B-PER", "L-PER"]) == [Span(0, 1, "LOC"), Span(1, 3, "PER")]


def test_ner_tsv_strict_error_has_line():
    with pytest.raises(CorpusError) as err:
        parse_ner_tsv("Kovács\tO\nJános\tI-PER\n")
    assert err.value.line == 2


def test_ner_tsv_roundtrip(ner_sample):
    text = ner_sample.read_text(encoding="utf-8")
    assert serialize_ner_tsv(parse_ner_tsv(text)) == text


def random_layout(rng: random.Random, n: int):
    spans, i = [], 0
    while i < n:
        if rng.random() < 0.35:
            length = rng.randint(1, min(4, n - i))
            spans.append(Span(i, i + length, rng.choice(["PER", "LOC", "ORG", "MISC"])))
            i += length
        else:
            i += 1
    return spans


def test_iob_inverse_on_random_layouts():
    rng = random.Random(0)
    for _ in range(1000):
        n = rng.randint(0, 20)
        spans = random_layout(rng, n)
        assert iob_to_spans(spans_to_iob(n, spans)) == spans


@settings(max_examples=200)
@given(st.data())
def test_iob_inverse_property(data):
    n = data.draw(st.integers(0, 15))
    spans = random_layout(random.Random(data.draw(st.integers(0, 2**32))), n)
    assert iob_to_spans(spans_to_iob(n, spans)) == spans

import numpy as np
import pytest

from hupipe.corpus import parse_conllu
from hupipe.doc import Doc
from hupipe.edit_tree import TreeTable, build_edit_tree
from hupipe.lemmatizer import CasingPolicy, LemmaDict, Lemmatizer, collect_tree_labels
from hupipe.nn import ParamStore
from hupipe.tagger import (ClassifierHead, ConfigError, SentenceSplitter, Tagger,
                           collect_inventories)


def tagged(words, upos, lemmas=None, starts=None):
    doc = Doc.from_words(words)
    for i, tok in enumerate(doc.tokens):
        tok.upos = upos[i]
        tok.lemma = lemmas[i] if lemmas else None
        if starts:
            tok.is_sent_start = starts[i]
    return doc


def test_empty_inventory_is_config_error():
    with pytest.raises(ConfigError):
        ClassifierHead(ParamStore(), "x", [], 4)


def test_probabilities_sum_to_one_and_deterministic():
    head = ClassifierHead(ParamStore(), "t", ["A", "B", "C"], 5)
    X = np.random.default_rng(0).normal(size=(4, 5)).astype(np.float32)
    P = head.probabilities(X)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-6)
    assert head.predict(X)[0] == head.predict(X.copy())[0]


def test_loss_ignores_unknown_gold():
    head = ClassifierHead(ParamStore(), "t", ["A", "B"], 3)
    X = np.ones((3, 3), dtype=np.float32)
    loss, bp = head.loss(X, [None, "Z", None])
    assert loss == 0.0 and bp is None
    loss, bp = head.loss(X, ["A", None, "B"])
    dX = bp()
    assert dX.shape == X.shape and not dX[1].any()


def test_tagger_writes_tags():
    doc = Doc.from_words(["a", "ház"])
    tagger = Tagger(ParamStore(), 4, ["DET", "NOUN"], ["_", "Case=Nom"])
    tagger.predict_tags(doc, np.ones((2, 4), dtype=np.float32))
    assert all(t.upos in ("DET", "NOUN") for t in doc)
    assert all(str(t.feats) in ("_", "Case=Nom") for t in doc)


def test_senter_forces_first_token():
    splitter = SentenceSplitter(ParamStore(), 4)
    doc = Doc.from_words(["ház"])
    assert splitter.predict_sentence_starts(doc, np.zeros((1, 4), dtype=np.float32)) == [True]


def test_inventories_from_corpus(sample_conllu):
    inv = collect_inventories(parse_conllu(sample_conllu.read_text(encoding="utf-8")))
    assert "NOUN" in inv["upos"] and "root" in inv["deprel"] and inv["ents"] == []
    assert "_" in inv["feats"]


def test_casing_policy():
    policy = CasingPolicy()
    assert policy.effective_form("Ezzel", True, "PRON") == "ezzel"
    assert policy.effective_form("Budapest", True, "PROPN") == "Budapest"
    assert policy.effective_form("Ezzel", False, "PRON") == "Ezzel"
    assert policy.effective_form("ELTE", True, "NOUN") == "ELTE"
    assert CasingPolicy(enabled=False).effective_form("Ezzel", True, "PRON") == "Ezzel"


def test_dict_majority_threshold_and_conflict():
    docs = [tagged(["házakat"], ["NOUN"], ["ház"]) for _ in range(3)]
    docs.append(tagged(["kertet"], ["NOUN"], ["kert"]))
    docs += [tagged(["vár"], ["NOUN"], ["vár"]) for _ in range(5)]
    docs += [tagged(["vár"], ["NOUN"], ["várak"]) for _ in range(5)]
    d = LemmaDict.learn(docs)
    assert d.lookup("házakat", "NOUN") == "ház"
    assert d.lookup("kertet", "NOUN") is None
    assert d.lookup("vár", "NOUN") is None
    assert LemmaDict.from_tsv(d.to_tsv()).entries == d.entries


def test_dict_share_boundary():
    docs = [tagged(["a"], ["X"], ["p"]) for _ in range(9)] + [tagged(["a"], ["X"], ["q"])]
    assert LemmaDict.learn(docs, min_share=0.9).lookup("a", "X") == "p"
    docs.append(tagged(["a"], ["X"], ["q"]))
    assert LemmaDict.learn(docs, min_share=0.9).lookup("a", "X") is None


def make_lemmatizer(pairs, lemma_dict=None):
    table = TreeTable()
    for f, l in pairs:
        table.add(build_edit_tree(f, l))
    return Lemmatizer(ParamStore(), 4, table, lemma_dict)


def test_truecased_ezzel_lemma():
    lem = make_lemmatizer([("ezzel", "ez")])
    doc = tagged(["Ezzel", "a"], ["PRON", "DET"])
    lem.lemmatize_doc(doc, np.zeros((2, 4), dtype=np.float32))
    assert doc[0].lemma == "ez"


def test_propn_keeps_case_via_identity_tree():
    lem = make_lemmatizer([("ház", "ház")])
    doc = tagged(["Budapest", "van"], ["PROPN", "VERB"])
    lem.lemmatize_doc(doc, np.zeros((2, 4), dtype=np.float32))
    assert doc[0].lemma == "Budapest"


def test_dictionary_bypasses_classifier():
    lem = make_lemmatizer([("ház", "ház")], LemmaDict({("házakat", "NOUN"): "ház"}))
    doc = tagged(["házakat"], ["NOUN"])
    lem.lemmatize_doc(doc, np.zeros((1, 4), dtype=np.float32))
    assert doc[0].lemma == "ház" and lem.classifier_calls == 0
    doc = tagged(["kertet"], ["NOUN"])
    lem.lemmatize_doc(doc, np.zeros((1, 4), dtype=np.float32))
    assert lem.classifier_calls == 1


def test_identity_fallback_when_no_tree_applies():
    lem = make_lemmatizer([("házakat", "ház")])
    doc = tagged(["ab"], ["NOUN"])
    assert lem.lemmatize_doc(doc, np.zeros((1, 4), dtype=np.float32)) == 1
    assert doc[0].lemma == "ab"


def test_topk_tries_next_candidate():
    lem = make_lemmatizer([("házakat", "ház"), ("kertet", "kert")])
    store = lem.head.linear.store
    W = np.zeros_like(store["lemmatizer.W"])
    store["lemmatizer.W"] = W
    store["lemmatizer.b"] = np.array([1.0, 0.0])
    doc = tagged(["falat"], ["NOUN"])
    # tree 0 needs 4 trailing chars "akat"; tree 1 strips "et" and fails too; fall back
    assert lem.lemmatize_doc(doc, np.zeros((1, 4), dtype=np.float32), topk=2) == 1
    doc = tagged(["almát"], ["NOUN"])
    lem2 = make_lemmatizer([("házakat", "ház"), ("almát", "alma")])
    lem2.head.linear.store["lemmatizer.b"] = np.array([1.0, 0.0])
    lem2.lemmatize_doc(doc, np.zeros((1, 4), dtype=np.float32), topk=2)
    assert doc[0].lemma == "alma"
    doc = tagged(["almát"], ["NOUN"])
    assert lem2.lemmatize_doc(doc, np.zeros((1, 4), dtype=np.float32), topk=1) == 1


def test_tree_labels_use_effective_form():
    doc = tagged(["Ezzel", "Ezzel"], ["PRON", "PRON"], ["ez", "ez"], [True, True])
    table, gold = collect_tree_labels([doc])
    assert len(table) == 1
    assert str(table.tree(0)) == "match(0,3)[subst(,), subst(zel,)]"

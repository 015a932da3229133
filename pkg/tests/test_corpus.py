"""CoNLL-U parsing/serialization, type indexing, and gold distributions."""

import pytest

from altag.corpus import (
    UPOS,
    AnnotationRecord,
    AnnotationStore,
    ConlluError,
    Corpus,
    Sentence,
    Token,
    build_type_index,
    concat_with_language_tags,
    gold_tag_distribution,
    parse_conllu,
    write_conllu,
)

SAMPLE = """\
# sent_id = de-1
1\tDie\t_\tDET\t_\t_\t_\t_\t_\t_
2\tKatze\t_\tNOUN\t_\t_\t_\t_\t_\t_
3\tschläft\t_\tVERB\t_\t_\t_\t_\t_\t_

# sent_id = de-2
1\tdie\t_\tPRON\t_\t_\t_\t_\t_\t_
2\tschläft\t_\t_\t_\t_\t_\t_\t_\t_
"""


def make_token(surface, tag=None, boundary=False):
    return Token(surface=surface, type_key=surface.casefold(),
                 gold_tag=UPOS.index(tag) if tag else None, is_boundary=boundary)


def make_corpus(*sent_specs):
    sentences = [
        Sentence(id=f"s{i}", tokens=tuple(make_token(w, t) for w, t in spec))
        for i, spec in enumerate(sent_specs)
    ]
    return Corpus(sentences)


class TestTagSet:
    def test_seventeen_upos_tags(self):
        assert len(UPOS) == 17
        assert list(UPOS) == sorted(UPOS)

    def test_bijection(self):
        for i, sym in enumerate(UPOS):
            assert UPOS.index(sym) == i
            assert UPOS.symbol(i) == sym

    def test_unknown_symbol(self):
        with pytest.raises(KeyError):
            UPOS.index("NOM")


class TestParse:
    def test_direct_column_read(self):
        corpus = parse_conllu("1\tdie\t_\tDET\t_\t_\t_\t_\t_\t_\n")
        tok = corpus.sentences[0].tokens[0]
        assert tok.surface == "die"
        assert tok.gold_tag == UPOS.index("DET")

    def test_underscore_means_unannotated(self):
        corpus = parse_conllu(SAMPLE)
        assert corpus.sentences[1].tokens[1].gold_tag is None

    def test_two_blocks_two_sentences(self):
        corpus = parse_conllu(SAMPLE)
        assert len(corpus) == 2
        assert [s.id for s in corpus] == ["de-1", "de-2"]

    def test_skips_ranges_and_empty_nodes(self):
        text = ("1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n"
                "1\tde\t_\tADP\t_\t_\t_\t_\t_\t_\n"
                "2\tel\t_\tDET\t_\t_\t_\t_\t_\t_\n"
                "2.1\tnull\t_\t_\t_\t_\t_\t_\t_\t_\n")
        corpus = parse_conllu(text)
        assert [t.surface for t in corpus.sentences[0].tokens] == ["de", "el"]

    def test_wrong_column_count_reports_line(self):
        with pytest.raises(ConlluError, match="line 1"):
            parse_conllu("1\tdie\tDET\n")

    def test_unknown_upos_named(self):
        with pytest.raises(ConlluError, match="NOMEN"):
            parse_conllu("1\tdie\t_\tNOMEN\t_\t_\t_\t_\t_\t_\n")

    def test_case_folding_flag(self):
        folded = parse_conllu(SAMPLE)
        assert folded.sentences[0].tokens[0].type_key == "die"
        raw = parse_conllu(SAMPLE, fold_case=False)
        assert raw.sentences[0].tokens[0].type_key == "Die"


class TestWrite:
    def test_empty_store_all_underscores(self):
        corpus = parse_conllu(SAMPLE)
        text = write_conllu(corpus, AnnotationStore())
        upos_cells = [line.split("\t")[3] for line in text.splitlines()
                      if line and not line.startswith("#")]
        assert set(upos_cells) == {"_"}

    def test_single_annotation_written(self):
        corpus = parse_conllu(SAMPLE)
        store = AnnotationStore()
        store.put((0, 1), AnnotationRecord(tag=UPOS.index("DET")))
        lines = [l for l in write_conllu(corpus, store).splitlines()
                 if l and not l.startswith("#")]
        assert lines[1].split("\t")[3] == "DET"
        assert sum(l.split("\t")[3] != "_" for l in lines) == 1

    def test_round_trip(self):
        corpus = parse_conllu(SAMPLE)
        store = AnnotationStore()
        store.put((0, 0), AnnotationRecord(tag=UPOS.index("DET")))
        store.put((1, 1), AnnotationRecord(tag=UPOS.index("VERB")))
        replayed = parse_conllu(write_conllu(corpus, store))
        assert [t.surface for _, _, t in replayed.iter_tokens()] == \
               [t.surface for _, _, t in corpus.iter_tokens()]
        assert replayed.token(0, 0).gold_tag == UPOS.index("DET")
        assert replayed.token(1, 1).gold_tag == UPOS.index("VERB")
        # idempotence: a second round trip changes nothing
        again = parse_conllu(write_conllu(replayed, None, include_gold=True))
        assert write_conllu(again, None, include_gold=True) == \
               write_conllu(replayed, None, include_gold=True)


class TestTypeIndex:
    def test_repeated_type_counted(self):
        corpus = make_corpus([("die", "DET"), ("Katze", "NOUN"), ("die", "PRON")])
        index = build_type_index(corpus)
        assert index.occurrences("die") == [(0, 0), (0, 2)]
        assert index.frequency("die") == 2

    def test_case_folding_merges(self):
        corpus = make_corpus([("Die", "DET")], [("die", "PRON")])
        index = build_type_index(corpus)
        assert index.frequency("die") == 2

    def test_total_matches_token_count(self):
        corpus = make_corpus([("a", "DET"), ("b", "NOUN")], [("a", "DET")])
        index = build_type_index(corpus)
        assert index.total_occurrences() == corpus.num_tokens()

    def test_boundary_tokens_not_indexed(self):
        inner = make_corpus([("eins", "NUM")])
        tagged = concat_with_language_tags([(inner, "de")])
        index = build_type_index(tagged)
        assert "<de>" not in index
        assert index.types() == ["eins"]


class TestConcat:
    def test_boundary_construction(self):
        corpus = make_corpus([("a", "DET"), ("b", "NOUN"), ("c", "VERB")])
        merged = concat_with_language_tags([(corpus, "de")])
        sent = merged.sentences[0]
        assert len(sent) == 5
        assert sent.tokens[0].surface == "<de>"
        assert sent.tokens[-1].surface == "<de>"
        assert sent.tokens[0].gold_tag == UPOS.index("X")
        assert sent.tokens[0].is_boundary

    def test_concatenation_counts(self):
        c1 = make_corpus([("a", "DET")], [("b", "NOUN")])
        c2 = make_corpus([("x", "DET")], [("y", "NOUN")], [("z", "VERB")])
        merged = concat_with_language_tags([(c1, "aa"), (c2, "bb")])
        assert len(merged) == 5

    def test_id_namespacing(self):
        c1 = make_corpus([("a", "DET")])
        c2 = make_corpus([("b", "NOUN")])
        merged = concat_with_language_tags([(c1, "aa"), (c2, "bb")])
        assert [s.id for s in merged] == ["aa:s0", "bb:s0"]

    def test_empty_language_code_rejected(self):
        with pytest.raises(ValueError):
            concat_with_language_tags([(make_corpus([("a", "DET")]), "")])


class TestGoldDistribution:
    def test_zu_proportions(self):
        # gold counts ADP=194, PART=103, ADV=5, PROPN=5, ADJ=1 over 308 tokens
        specs = ([("zu", "ADP")] * 194 + [("zu", "PART")] * 103 +
                 [("zu", "ADV")] * 5 + [("zu", "PROPN")] * 5 + [("zu", "ADJ")])
        corpus = make_corpus(*[[pair] for pair in specs])
        dist = gold_tag_distribution("zu", corpus)
        assert dist[UPOS.index("ADP")] == pytest.approx(194 / 308, abs=1e-12)
        assert dist[UPOS.index("ADP")] == pytest.approx(0.6299, abs=5e-5)
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)

    def test_singleton(self):
        corpus = make_corpus([("haus", "NOUN")])
        assert gold_tag_distribution("haus", corpus) == {UPOS.index("NOUN"): 1.0}

    def test_even_split(self):
        corpus = make_corpus([("x", "DET")], [("x", "PRON")])
        dist = gold_tag_distribution("x", corpus)
        assert dist == {UPOS.index("DET"): 0.5, UPOS.index("PRON"): 0.5}

    def test_absent_type_errors(self):
        with pytest.raises(KeyError):
            gold_tag_distribution("nope", make_corpus([("a", "DET")]))

    def test_untagged_occurrence_errors(self):
        corpus = make_corpus([("a", "DET"), ("a", None)])
        with pytest.raises(ValueError):
            gold_tag_distribution("a", corpus)


class TestAnnotationStore:
    def test_double_annotation_rejected(self):
        store = AnnotationStore()
        store.put((0, 0), AnnotationRecord(tag=1))
        with pytest.raises(ValueError):
            store.put((0, 0), AnnotationRecord(tag=2))
        store.put((0, 0), AnnotationRecord(tag=2), allow_overwrite=True)
        assert store.get((0, 0)).tag == 2

    def test_labeled_sentence_count(self):
        store = AnnotationStore()
        store.put((0, 0), AnnotationRecord(tag=1))
        store.put((0, 2), AnnotationRecord(tag=1))
        store.put((3, 1), AnnotationRecord(tag=1))
        assert store.labeled_sentence_count() == 2

    def test_duplicate_sentence_ids_rejected(self):
        tok = make_token("a", "DET")
        with pytest.raises(ValueError):
            Corpus([Sentence(id="s", tokens=(tok,)),
                    Sentence(id="s", tokens=(tok,))])

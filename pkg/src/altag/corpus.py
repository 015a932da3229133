"""CoNLL-U corpora, the UPOS tag set, word-type indexing, and sparse annotations."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterator


class TagSet:
    """A fixed, ordered inventory of tag symbols with a bijective symbol/index map."""

    def __init__(self, symbols: tuple[str, ...]):
        if len(set(symbols)) != len(symbols):
            raise ValueError("tag symbols must be unique")
        self.symbols = tuple(symbols)
        self._index = {s: i for i, s in enumerate(self.symbols)}

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise KeyError(f"unknown tag symbol {symbol!r}") from None

    def symbol(self, index: int) -> str:
        return self.symbols[index]


#: The 17 Universal Dependencies POS tags, in alphabetical order.
UPOS = TagSet((
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
))


def type_key_of(surface: str, fold_case: bool = True) -> str:
    """Normalize a surface form to its word-type key (Unicode case-fold by default)."""
    return surface.casefold() if fold_case else surface


@dataclass(frozen=True)
class Token:
    surface: str
    type_key: str
    gold_tag: int | None = None
    is_boundary: bool = False

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")


@dataclass(frozen=True)
class Sentence:
    id: str
    tokens: tuple[Token, ...]
    language: str | None = None

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise ValueError(f"sentence {self.id!r} has no tokens")

    def __len__(self) -> int:
        return len(self.tokens)


class Corpus:
    """An ordered collection of sentences with unique ids."""

    def __init__(self, sentences: list[Sentence], provenance: tuple[str, ...] = ()):
        seen: set[str] = set()
        for s in sentences:
            if s.id in seen:
                raise ValueError(f"duplicate sentence id {s.id!r}")
            seen.add(s.id)
        self.sentences = list(sentences)
        self.provenance = tuple(provenance)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def token(self, si: int, ti: int) -> Token:
        return self.sentences[si].tokens[ti]

    def iter_tokens(self) -> Iterator[tuple[int, int, Token]]:
        for si, sent in enumerate(self.sentences):
            for ti, tok in enumerate(sent.tokens):
                yield si, ti, tok

    def num_tokens(self, include_boundary: bool = True) -> int:
        return sum(
            1 for _, _, tok in self.iter_tokens()
            if include_boundary or not tok.is_boundary
        )

    def fully_tagged(self) -> bool:
        return all(t.gold_tag is not None for _, _, t in self.iter_tokens())


class TypeIndex:
    """Posting lists mapping each word type to its (sentence, token) occurrences.

    Boundary tokens (language-id markers) are control symbols and are never
    indexed; everything downstream that aggregates over types goes through
    this index, so they can never enter a candidate pool.
    """

    def __init__(self, corpus: Corpus):
        postings: dict[str, list[tuple[int, int]]] = {}
        for si, ti, tok in corpus.iter_tokens():
            if tok.is_boundary:
                continue
            postings.setdefault(tok.type_key, []).append((si, ti))
        # iter_tokens yields in (sentence, token) order already; keep it explicit
        self.postings = {z: sorted(occ) for z, occ in sorted(postings.items())}

    def __len__(self) -> int:
        return len(self.postings)

    def __contains__(self, type_key: str) -> bool:
        return type_key in self.postings

    def occurrences(self, type_key: str) -> list[tuple[int, int]]:
        return self.postings.get(type_key, [])

    def frequency(self, type_key: str) -> int:
        return len(self.postings.get(type_key, ()))

    def types(self) -> list[str]:
        return list(self.postings)

    def total_occurrences(self) -> int:
        return sum(len(v) for v in self.postings.values())


@dataclass(frozen=True)
class AnnotationRecord:
    tag: int
    iteration: int = 0
    annotator: str = "simulated"
    elapsed_ms: float = 0.0


class AnnotationStore:
    """Sparse token-level labels acquired by active learning.

    A position holds at most one record at any time.  Overwrites must be
    requested explicitly (the live service allows them while a batch is
    still open); the default is to reject double annotation.
    """

    def __init__(self):
        self._records: dict[tuple[int, int], AnnotationRecord] = {}

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, pos: tuple[int, int]) -> bool:
        return pos in self._records

    def get(self, pos: tuple[int, int]) -> AnnotationRecord | None:
        return self._records.get(pos)

    def put(self, pos: tuple[int, int], record: AnnotationRecord,
            allow_overwrite: bool = False) -> None:
        if pos in self._records and not allow_overwrite:
            raise ValueError(f"position {pos} is already annotated")
        self._records[pos] = record

    def items(self) -> list[tuple[tuple[int, int], AnnotationRecord]]:
        return sorted(self._records.items())

    def positions(self) -> set[tuple[int, int]]:
        return set(self._records)

    def tags_for_type(self, type_key: str, corpus: Corpus) -> Counter:
        """Counts of annotated tags over this type's annotated occurrences."""
        counts: Counter = Counter()
        for (si, ti), rec in self._records.items():
            if corpus.token(si, ti).type_key == type_key:
                counts[rec.tag] += 1
        return counts

    def annotated_types(self, corpus: Corpus) -> list[str]:
        return sorted({corpus.token(si, ti).type_key for si, ti in self._records})

    def labeled_sentence_count(self) -> int:
        """Number of distinct sentences containing at least one annotation."""
        return len({si for si, _ in self._records})

    def copy(self) -> "AnnotationStore":
        dup = AnnotationStore()
        dup._records = dict(self._records)
        return dup


class ConlluError(ValueError):
    """Raised for malformed CoNLL-U input."""


def _is_skipped_id(token_id: str) -> bool:
    # Multiword ranges ("3-4") and empty nodes ("5.1") are not syntactic words.
    return "-" in token_id or "." in token_id


def parse_conllu(text: str, fold_case: bool = True,
                 provenance: str = "<string>") -> Corpus:
    """Parse CoNLL-U text into a Corpus.

    Comment lines start with '#'; token lines carry 10 tab-separated columns;
    a blank line ends a sentence.  UPOS is column 4 ('_' = unannotated).
    Multiword-token ranges and empty nodes are skipped.
    """
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    sent_id: str | None = None
    auto_id = 0

    def flush(lineno: int):
        nonlocal tokens, sent_id, auto_id
        if not tokens:
            sent_id = None
            return
        auto_id += 1
        sid = sent_id if sent_id is not None else f"s{auto_id}"
        sentences.append(Sentence(id=sid, tokens=tuple(tokens)))
        tokens = []
        sent_id = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(lineno)
            continue
        if line.startswith("#"):
            if "=" in line:
                key, _, value = line[1:].partition("=")
                if key.strip() == "sent_id":
                    sent_id = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(
                f"line {lineno}: expected 10 tab-separated columns, got {len(cols)}"
            )
        if _is_skipped_id(cols[0]):
            continue
        surface = cols[1]
        upos = cols[3]
        if upos == "_":
            gold = None
        elif upos in UPOS:
            gold = UPOS.index(upos)
        else:
            raise ConlluError(f"line {lineno}: unknown UPOS symbol {upos!r}")
        tokens.append(Token(
            surface=surface,
            type_key=type_key_of(surface, fold_case),
            gold_tag=gold,
        ))
    flush(lineno=-1)
    return Corpus(sentences, provenance=(provenance,))


def write_conllu(corpus: Corpus, store: AnnotationStore | None = None,
                 include_gold: bool = False) -> str:
    """Serialize a corpus to CoNLL-U.

    The UPOS column carries the store's tag when the position is annotated,
    else the gold tag when ``include_gold`` is set, else '_'.  All columns
    other than ID and FORM are '_'.
    """
    out: list[str] = []
    for si, sent in enumerate(corpus.sentences):
        out.append(f"# sent_id = {sent.id}")
        for ti, tok in enumerate(sent.tokens):
            rec = store.get((si, ti)) if store is not None else None
            if rec is not None:
                upos = UPOS.symbol(rec.tag)
            elif include_gold and tok.gold_tag is not None:
                upos = UPOS.symbol(tok.gold_tag)
            else:
                upos = "_"
            out.append("\t".join([
                str(ti + 1), tok.surface, "_", upos, "_", "_", "_", "_", "_", "_",
            ]))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def build_type_index(corpus: Corpus) -> TypeIndex:
    return TypeIndex(corpus)


def concat_with_language_tags(corpora: list[tuple[Corpus, str]]) -> Corpus:
    """Concatenate corpora, bracketing every sentence with language-id tokens.

    Each sentence gains a synthetic "<lang>" token at both ends, tagged X and
    flagged as boundary so selection pools and accuracy metrics skip them.
    Sentence ids are namespaced by language code, which also resolves id
    collisions across corpora.
    """
    x_tag = UPOS.index("X")
    sentences: list[Sentence] = []
    provenance: list[str] = []
    for corpus, code in corpora:
        if not code:
            raise ValueError("language code must be non-empty")
        marker = Token(
            surface=f"<{code}>", type_key=f"<{code}>",
            gold_tag=x_tag, is_boundary=True,
        )
        for sent in corpus.sentences:
            sentences.append(Sentence(
                id=f"{code}:{sent.id}",
                tokens=(marker, *sent.tokens, marker),
                language=code,
            ))
        provenance.extend(corpus.provenance)
    return Corpus(sentences, provenance=tuple(provenance))


def gold_tag_distribution(type_key: str, corpus: Corpus,
                          index: TypeIndex | None = None) -> dict[int, float]:
    """Proportion of each gold tag over all occurrences of a type.

    Every occurrence must carry a gold tag; probabilities sum to 1 over the
    tags observed for the type.
    """
    index = index if index is not None else TypeIndex(corpus)
    occurrences = index.occurrences(type_key)
    if not occurrences:
        raise KeyError(f"type {type_key!r} does not occur in the corpus")
    counts: Counter = Counter()
    for si, ti in occurrences:
        tok = corpus.token(si, ti)
        if tok.gold_tag is None:
            raise ValueError(
                f"occurrence ({si}, {ti}) of type {type_key!r} has no gold tag"
            )
        counts[tok.gold_tag] += 1
    total = sum(counts.values())
    return {tag: n / total for tag, n in sorted(counts.items())}

"""Synthetic language family generator for desk-scale experiments.

Builds a small family of related "languages" sharing content stems and
tag-marking suffixes but differing in (a) how they use a closed set of
function words and (b) the lexical tag preferences of a pool of bare,
suffixless stems.

Three kinds of knowledge are needed to tag the target language:

* rule-based: suffixed content words ("-na" noun, "-re" verb, ...) and the
  contextual roles of function words; transferred from related languages.
* distributional: function words like "da" serve as determiner or pronoun
  depending on context, and the target flips the source languages' balance.
* lexical: bare stems fill ambiguous "C" slots where noun and verb are both
  grammatical, so their tag is a per-type lexical property; half of the
  lexicon is flipped between sources and target, with a minority-role rate
  keeping those types syncretic.

The lexical component is what separates data-selection strategies: it cannot
be repaired by rule generalization, only by annotating the right (frequent,
confused) types.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from altag.corpus import UPOS, Corpus, Sentence, Token

TAGS_USED = ("ADJ", "ADP", "ADV", "DET", "NOUN", "PART", "PRON", "VERB")

SUFFIX = {"NOUN": "na", "VERB": "re", "ADJ": "li", "ADV": "so"}

# family-wide closed-class inventory
DET_PRON_POOL = ("da", "mo", "bi", "sa")
ADP_PART_POOL = ("ke", "ne", "po", "ti")
PURE = {"DET": "ul", "PRON": "ru", "ADP": "ga", "PART": "fo"}

# share of occurrences of a bare stem realized against its dominant tag
MINORITY_ROLE_RATE = 0.15

# tag-sequence templates; "C" slots take bare stems whose gold tag is the
# stem's lexical preference (noun or verb), not a function of position.
# C occurrences are single-word utterances (citation forms): with no context
# at all, the only signal for a C token's tag is the word type itself.
TEMPLATES = (
    (0.050, ("DET", "N", "V")),
    (0.033, ("DET", "ADJ", "N", "V")),
    (0.045, ("PRON", "V", "ADV")),
    (0.033, ("PRON", "V", "DET", "N")),
    (0.045, ("DET", "N", "V", "ADP", "N")),
    (0.045, ("PRON", "V", "PART", "V")),
    (0.035, ("DET", "N", "ADP", "DET", "N", "V")),
    (0.034, ("PRON", "V", "ADP", "DET", "N")),
    (0.680, ("C",)),
)


def _stems(count: int) -> list[str]:
    consonants = "ptkbdgmnsz"
    vowels = "aeiou"
    syllables = [c + v for c, v in itertools.product(consonants, vowels)]
    out = []
    for a, b in itertools.product(syllables, syllables):
        out.append(a + b)
        if len(out) == count:
            return out
    raise ValueError("stem inventory exhausted")


def _bare_stems(count: int) -> list[str]:
    """Three-syllable stems, strided so neighbors differ in several characters."""
    consonants = "ptkbdgmnsz"
    vowels = "aeiou"
    syllables = [c + v for c, v in itertools.product(consonants, vowels)]
    all_stems = [a + b + c for a, b, c in itertools.product(syllables, syllables, syllables)]
    stride = len(all_stems) // count
    return [all_stems[i * stride] for i in range(count)]


def _zipf(n: int, exponent: float = 1.1) -> np.ndarray:
    w = 1.0 / np.arange(2, n + 2, dtype=np.float64) ** exponent
    return w / w.sum()


@dataclass
class LanguageSpec:
    """One language: function-word role weights and a bare-stem lexicon."""

    name: str
    det_weights: dict[str, float]
    pron_weights: dict[str, float]
    adp_weights: dict[str, float]
    part_weights: dict[str, float]
    lexicon: dict[str, str]  # bare stem -> dominant tag ("NOUN" or "VERB")


@dataclass
class LanguageFamily:
    target: LanguageSpec
    sources: list[LanguageSpec]
    # disjoint stem inventories per suffixed tag; each stem forms one type
    stems_by_tag: dict[str, list[str]] = field(default_factory=dict)
    bare_stems: list[str] = field(default_factory=list)


def _lexicon(stems: list[str], flipped: bool) -> dict[str, str]:
    """Alternating dominant tags; half the stems flip between source and target.

    A type's flip cannot be predicted from other types (alternating by rank,
    so flipped and unflipped stems span the whole frequency range): transferred
    lexical knowledge is wrong on specific types, and only annotating the type
    reveals which.
    """
    lex = {}
    for i, stem in enumerate(stems):
        dominant = "NOUN" if i % 2 == 0 else "VERB"
        if flipped and (i % 4) in (1, 2):
            dominant = "VERB" if dominant == "NOUN" else "NOUN"
        lex[stem] = dominant
    return lex


def make_family(n_stems_per_tag: int = 45, n_bare_stems: int = 520) -> LanguageFamily:
    """The fixed desk-scale family: two source languages and one target.

    In the sources, "da" is determiner-heavy and "ke" adposition-heavy; the
    target flips both toward pronoun and particle use.  "mo" and "ne" keep
    their source roles as controls, and half the bare-stem lexicon swaps its
    dominant tag between sources and target.
    """
    stems = _stems(4 * n_stems_per_tag)
    bare = _bare_stems(n_bare_stems)
    sources = [
        LanguageSpec(
            name="src1",
            det_weights={"da": 0.50, "mo": 0.30, "ul": 0.20},
            pron_weights={"ru": 0.50, "bi": 0.30, "sa": 0.20},
            adp_weights={"ke": 0.50, "ne": 0.30, "ga": 0.20},
            part_weights={"fo": 0.50, "po": 0.30, "ti": 0.20},
            lexicon=_lexicon(bare, flipped=True),
        ),
        LanguageSpec(
            name="src2",
            det_weights={"da": 0.40, "mo": 0.40, "ul": 0.20},
            pron_weights={"ru": 0.40, "bi": 0.35, "sa": 0.25},
            adp_weights={"ke": 0.40, "ne": 0.40, "ga": 0.20},
            part_weights={"fo": 0.40, "po": 0.35, "ti": 0.25},
            lexicon=_lexicon(bare, flipped=True),
        ),
    ]
    target = LanguageSpec(
        name="target",
        det_weights={"mo": 0.45, "da": 0.30, "ul": 0.25},
        pron_weights={"bi": 0.45, "ru": 0.30, "sa": 0.25},
        adp_weights={"ne": 0.45, "ke": 0.30, "ga": 0.25},
        part_weights={"po": 0.45, "fo": 0.30, "ti": 0.25},
        lexicon=_lexicon(bare, flipped=False),
    )
    stems_by_tag = {
        tag: stems[i :: 4][:n_stems_per_tag] for i, tag in enumerate(SUFFIX)
    }
    return LanguageFamily(target=target, sources=sources,
                          stems_by_tag=stems_by_tag, bare_stems=bare)


def _sample(rng: np.random.Generator, weights: dict[str, float]) -> str:
    keys = sorted(weights)
    probs = np.array([weights[k] for k in keys], dtype=np.float64)
    return keys[rng.choice(len(keys), p=probs / probs.sum())]


class _ContentSampler:
    def __init__(self, family: LanguageFamily):
        self.stems_by_tag = family.stems_by_tag
        self.tag_probs = {t: _zipf(len(s)) for t, s in family.stems_by_tag.items()}
        self.bare = family.bare_stems
        # concentrated head (worth targeting) over a long thin tail
        self.bare_probs = _zipf(len(self.bare), exponent=0.8)

    def suffixed(self, rng, tag: str) -> str:
        stems = self.stems_by_tag[tag]
        stem = stems[rng.choice(len(stems), p=self.tag_probs[tag])]
        return stem + SUFFIX[tag]

    def bare_stem(self, rng) -> str:
        return self.bare[rng.choice(len(self.bare), p=self.bare_probs)]


def generate_corpus(lang: LanguageSpec, family: LanguageFamily, n_sentences: int,
                    seed: int, id_prefix: str = "") -> Corpus:
    """Sample a fully gold-tagged corpus from one language."""
    rng = np.random.default_rng(seed)
    sampler = _ContentSampler(family)
    template_probs = np.array([w for w, _ in TEMPLATES])
    template_probs = template_probs / template_probs.sum()

    def realize(slot: str) -> tuple[str, str]:
        if slot == "DET":
            return _sample(rng, lang.det_weights), "DET"
        if slot == "PRON":
            return _sample(rng, lang.pron_weights), "PRON"
        if slot == "ADP":
            return _sample(rng, lang.adp_weights), "ADP"
        if slot == "PART":
            return _sample(rng, lang.part_weights), "PART"
        if slot == "N":
            return sampler.suffixed(rng, "NOUN"), "NOUN"
        if slot == "V":
            return sampler.suffixed(rng, "VERB"), "VERB"
        if slot == "C":
            stem = sampler.bare_stem(rng)
            dominant = lang.lexicon[stem]
            minority = "VERB" if dominant == "NOUN" else "NOUN"
            tag = minority if rng.random() < MINORITY_ROLE_RATE else dominant
            return stem, tag
        return sampler.suffixed(rng, slot), slot  # ADJ / ADV

    sentences = []
    for i in range(n_sentences):
        slots = TEMPLATES[rng.choice(len(TEMPLATES), p=template_probs)][1]
        tokens = []
        for slot in slots:
            surface, tag = realize(slot)
            tokens.append(Token(surface=surface, type_key=surface,
                                gold_tag=UPOS.index(tag)))
        sentences.append(Sentence(id=f"{id_prefix}{lang.name}-{i}", tokens=tuple(tokens)))
    return Corpus(sentences, provenance=(f"synthetic:{lang.name}:{seed}",))


def measured_syncretism(corpus: Corpus, min_occurrences: int = 1) -> float:
    """Share of observed types carrying two or more distinct gold tags.

    ``min_occurrences`` restricts the population: a type seen once cannot
    display syncretism, so rates over the >= 2 population describe the
    observable inventory.
    """
    tags_by_type: dict[str, list] = {}
    for _, _, tok in corpus.iter_tokens():
        tags_by_type.setdefault(tok.type_key, []).append(tok.gold_tag)
    eligible = {z: tags for z, tags in tags_by_type.items()
                if len(tags) >= min_occurrences}
    if not eligible:
        return 0.0
    return sum(len(set(t)) >= 2 for t in eligible.values()) / len(eligible)


def constructed_syncretism(family: LanguageFamily) -> float:
    """Share of the vocabulary that is syncretic by design.

    Every bare stem can surface in either the noun or verb role; suffixed
    stems and function words are single-tag.
    """
    syncretic = len(family.bare_stems)
    total = (syncretic + len(DET_PRON_POOL) + len(ADP_PART_POOL) + len(PURE)
             + sum(len(s) for s in family.stems_by_tag.values()))
    return syncretic / total

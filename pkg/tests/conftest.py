import pytest
import torch

from altag.corpus import UPOS, Corpus, Sentence, Token
from altag.tagger.config import TaggerConfig
from altag.tagger.encoder import CharVocab
from altag.tagger.model import Tagger

torch.set_num_threads(1)


def toy_config(**overrides) -> TaggerConfig:
    base = dict(
        char_embed_dim=4, char_hidden=3, modeling_hidden=3, token_hidden=4,
        dropout_char=0.3, dropout_outputs=0.5, sgd_lr=0.05, seed=1,
        use_cvt=True, max_epochs=10, patience=3, batch_size=4,
    )
    base.update(overrides)
    return TaggerConfig(**base)


def sent(sid: str, *pairs) -> Sentence:
    tokens = tuple(
        Token(surface=w, type_key=w.casefold(),
              gold_tag=UPOS.index(t) if t else None)
        for w, t in pairs
    )
    return Sentence(id=sid, tokens=tokens)


@pytest.fixture
def tiny_corpus() -> Corpus:
    return Corpus([
        sent("s0", ("der", "DET"), ("hund", "NOUN"), ("lief", "VERB")),
        sent("s1", ("die", "DET"), ("katze", "NOUN")),
        sent("s2", ("er", "PRON"), ("lief", "VERB"), ("schnell", "ADV")),
    ])


@pytest.fixture
def tiny_model(tiny_corpus) -> Tagger:
    surfaces = [t.surface for _, _, t in tiny_corpus.iter_tokens()]
    return Tagger(toy_config(), CharVocab.from_surfaces(surfaces))

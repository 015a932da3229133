"""The full tagger: hierarchical encoder, CRF (or softmax) decoder, CVT views."""

from __future__ import annotations

import base64
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from altag.corpus import UPOS, Corpus, Sentence
from altag.tagger import crf
from altag.tagger.config import TaggerConfig
from altag.tagger.encoder import BiLstm, CharVocab, WordEncoder, dropout, uniform_

VIEWS = ("fwd", "bwd", "fut", "pst")

CHECKPOINT_SCHEMA = 1


@dataclass
class EncoderStates:
    """Per-token recurrent states for one sentence (numpy, detached)."""

    fwd: np.ndarray   # N x H
    bwd: np.ndarray   # N x H
    full: np.ndarray  # N x 2H


@dataclass
class BatchStates:
    fwd: torch.Tensor   # B x T x H
    bwd: torch.Tensor   # B x T x H
    full: torch.Tensor  # B x T x 2H
    mask: torch.Tensor  # B x T bool
    lengths: list[int]


def kl_divergence(p: torch.Tensor, log_q: torch.Tensor) -> torch.Tensor:
    """KL(p || q) per row in nats, with the 0 log 0 = 0 convention."""
    safe_log_p = torch.where(p > 0, torch.log(p.clamp(min=1e-300)), torch.zeros_like(p))
    return (p * (safe_log_p - log_q)).sum(dim=-1)


class Tagger(nn.Module):
    """Hierarchical Bi-LSTM tagger with a linear-chain CRF decoder.

    All randomness (initialization, dropout, batch order) is drawn from
    explicit seeded generators, so two taggers built from the same config and
    vocabulary are parameter-identical.
    """

    def __init__(self, config: TaggerConfig, vocab: CharVocab):
        super().__init__()
        self.config = config
        self.vocab = vocab
        self.num_tags = len(UPOS)
        gen = torch.Generator().manual_seed(config.seed)

        self.word_encoder = WordEncoder(
            vocab_size=len(vocab),
            embed_dim=config.char_embed_dim,
            char_hidden=config.char_hidden,
            modeling_hidden=config.modeling_hidden,
            dropout_char=config.dropout_char,
            dropout_out=config.dropout_outputs,
            gen=gen,
        )
        self.token_lstm = BiLstm(2 * config.modeling_hidden, config.token_hidden, gen)

        j = self.num_tags
        k = 1.0 / math.sqrt(2 * config.token_hidden)
        self.emit_w = nn.Parameter(torch.empty(j, 2 * config.token_hidden))
        uniform_(self.emit_w, k, gen)
        self.emit_b = nn.Parameter(torch.zeros(j))
        self.transitions = nn.Parameter(torch.zeros(j, j))
        self.start_scores = nn.Parameter(torch.zeros(j))
        self.stop_scores = nn.Parameter(torch.zeros(j))

        kv = 1.0 / math.sqrt(config.token_hidden)
        self.view_w = nn.ParameterDict()
        self.view_b = nn.ParameterDict()
        for view in VIEWS:
            w = nn.Parameter(torch.empty(j, config.token_hidden))
            uniform_(w, kv, gen)
            self.view_w[view] = w
            self.view_b[view] = nn.Parameter(torch.zeros(j))
        # learned states standing in for h->_0 and h<-_{N+1} at the edges
        self.boundary_fut = nn.Parameter(torch.zeros(config.token_hidden))
        self.boundary_pst = nn.Parameter(torch.zeros(config.token_hidden))

    # ------------------------------------------------------------------ #
    # encoding

    def _dtype(self) -> torch.dtype:
        return self.emit_w.dtype

    def _char_matrix(self, surfaces: list[str]) -> torch.Tensor:
        encoded = [self.vocab.encode(s) for s in surfaces]
        width = max(len(e) for e in encoded)
        ids = torch.full((len(encoded), width), CharVocab.PAD, dtype=torch.long)
        for i, e in enumerate(encoded):
            ids[i, : len(e)] = torch.tensor(e, dtype=torch.long)
        return ids

    def _word_vectors(self, surfaces: list[str], gen: torch.Generator | None,
                      cache: dict[str, torch.Tensor] | None) -> torch.Tensor:
        if cache is not None:
            missing = sorted({s for s in surfaces if s not in cache})
            if missing:
                vecs = self.word_encoder(self._char_matrix(missing), None)
                for s, v in zip(missing, vecs):
                    cache[s] = v
            return torch.stack([cache[s] for s in surfaces])
        # encode each distinct surface once per call; in training mode the
        # occurrences of a surface share one dropout draw
        unique = sorted(set(surfaces))
        vecs = self.word_encoder(self._char_matrix(unique), gen)
        lookup = {s: i for i, s in enumerate(unique)}
        idx = torch.tensor([lookup[s] for s in surfaces], dtype=torch.long)
        return vecs[idx]

    def encode_batch(self, sentences: list[Sentence],
                     gen: torch.Generator | None = None,
                     cache: dict[str, torch.Tensor] | None = None) -> BatchStates:
        """Run the full encoder over a batch of sentences.

        ``gen`` enables dropout (training mode); ``cache`` memoizes word
        vectors by surface and must only be used in evaluation mode.
        """
        if not sentences:
            raise ValueError("cannot encode an empty batch")
        if any(len(s) == 0 for s in sentences):
            raise ValueError("cannot encode an empty sentence")
        if gen is not None and cache is not None:
            raise ValueError("word-vector cache is only valid without dropout")
        lengths = [len(s) for s in sentences]
        surfaces = [tok.surface for s in sentences for tok in s.tokens]
        words = self._word_vectors(surfaces, gen, cache)

        t_max = max(lengths)
        batch = words.new_zeros(len(sentences), t_max, words.shape[1])
        mask = torch.zeros(len(sentences), t_max, dtype=torch.bool)
        offset = 0
        for i, n in enumerate(lengths):
            batch[i, :n] = words[offset : offset + n]
            mask[i, :n] = True
            offset += n

        fwd, bwd = self.token_lstm(batch, mask)
        fwd = dropout(fwd, self.config.dropout_outputs, gen)
        bwd = dropout(bwd, self.config.dropout_outputs, gen)
        full = torch.cat([fwd, bwd], dim=2)
        return BatchStates(fwd=fwd, bwd=bwd, full=full, mask=mask, lengths=lengths)

    def emissions(self, full: torch.Tensor) -> torch.Tensor:
        return full @ self.emit_w.T + self.emit_b

    def view_logits(self, states: BatchStates, view: str) -> torch.Tensor:
        """Logits of one restricted view over a batch (B x T x J)."""
        if view == "fwd":
            x = states.fwd
        elif view == "bwd":
            x = states.bwd
        elif view == "fut":
            edge = self.boundary_fut.to(states.fwd.dtype)
            x = torch.cat(
                [edge.expand(states.fwd.shape[0], 1, -1), states.fwd[:, :-1]], dim=1)
        elif view == "pst":
            edge = self.boundary_pst.to(states.bwd.dtype)
            x = torch.cat(
                [states.bwd[:, 1:], edge.expand(states.bwd.shape[0], 1, -1)], dim=1)
        else:
            raise ValueError(f"unknown view {view!r}")
        return x @ self.view_w[view].T + self.view_b[view]

    # ------------------------------------------------------------------ #
    # losses

    def sentence_marginals(self, emission_rows: torch.Tensor) -> torch.Tensor:
        """Token-tag marginals for one sentence's emission rows (N x J)."""
        if self.config.decoder == "softmax":
            return torch.softmax(emission_rows.double(), dim=1)
        return crf.crf_marginals(emission_rows, self.transitions,
                                 self.start_scores, self.stop_scores)

    def supervised_loss(self, sentences: list[Sentence],
                        constraints: list[dict[int, int]],
                        gen: torch.Generator | None = None) -> torch.Tensor:
        """Mean per-sentence negative log-likelihood of the congruent label sets."""
        states = self.encode_batch(sentences, gen=gen)
        em = self.emissions(states.full)
        if self.config.decoder == "softmax":
            losses = []
            for i, cons in enumerate(constraints):
                if not cons:
                    raise ValueError("softmax decoder needs at least one labeled token")
                rows = em[i, : states.lengths[i]]
                logp = torch.log_softmax(rows.double(), dim=1)
                losses.append(-sum(logp[pos, tag] for pos, tag in sorted(cons.items())))
            return torch.stack(losses).mean()
        for i, cons in enumerate(constraints):
            n = states.lengths[i]
            for pos, tag in cons.items():
                if not (0 <= pos < n):
                    raise IndexError(f"constraint position {pos} out of range")
                if not (0 <= tag < self.num_tags):
                    raise IndexError(f"constraint tag {tag} out of range")
        # one padded pass over [masked; unmasked]: log p(Y_L|x) = logZc - logZ
        mask = torch.zeros_like(em)
        for i, cons in enumerate(constraints):
            for pos, tag in cons.items():
                mask[i, pos, :] = crf.MASK_SCORE
                mask[i, pos, tag] = 0.0
        both = torch.cat([em + mask, em], dim=0)
        log_z = crf.batched_log_partition(
            both, states.lengths * 2, self.transitions,
            self.start_scores, self.stop_scores)
        b = len(sentences)
        return -(log_z[:b] - log_z[b:]).mean()

    def _batch_marginals(self, em: torch.Tensor,
                         lengths: list[int]) -> torch.Tensor:
        if self.config.decoder == "softmax":
            return torch.softmax(em.double(), dim=2)
        return crf.batched_marginals(em, lengths, self.transitions,
                                     self.start_scores, self.stop_scores)

    def teacher_marginals(self, sentences: list[Sentence]) -> list[torch.Tensor]:
        """Full-view token marginals computed in evaluation mode, detached."""
        with torch.no_grad():
            states = self.encode_batch(sentences, gen=None)
            em = self.emissions(states.full)
            marg = self._batch_marginals(em, states.lengths)
            return [marg[i, : states.lengths[i]].detach()
                    for i in range(len(sentences))]

    def cvt_loss(self, sentences: list[Sentence],
                 gen: torch.Generator | None = None,
                 teacher: list[torch.Tensor] | None = None) -> torch.Tensor:
        """Cross-view consistency loss, averaged over the mini-batch.

        Each auxiliary view contributes the token-level KL divergence from the
        full-view marginals (the teacher, held constant) to its own softmax.
        """
        if teacher is None:
            teacher = self.teacher_marginals(sentences)
        states = self.encode_batch(sentences, gen=gen)
        view_logp = {
            v: torch.log_softmax(self.view_logits(states, v).double(), dim=2)
            for v in VIEWS
        }
        total = torch.zeros((), dtype=torch.float64)
        for i, n in enumerate(states.lengths):
            p = teacher[i]
            for v in VIEWS:
                total = total + kl_divergence(p, view_logp[v][i, :n]).sum()
        return total / len(sentences)

    # ------------------------------------------------------------------ #
    # prediction (evaluation mode throughout)

    def _eval_batches(self, corpus_or_sentences, batch_size: int = 64):
        """Length-bucketed evaluation batches; yields original indices too."""
        sentences = (list(corpus_or_sentences.sentences)
                     if isinstance(corpus_or_sentences, Corpus)
                     else list(corpus_or_sentences))
        order = sorted(range(len(sentences)), key=lambda i: (len(sentences[i]), i))
        cache: dict[str, torch.Tensor] = {}
        with torch.no_grad():
            for i in range(0, len(order), batch_size):
                idx = order[i : i + batch_size]
                chunk = [sentences[k] for k in idx]
                states = self.encode_batch(chunk, gen=None, cache=cache)
                yield idx, chunk, states

    def predict_marginals(self, corpus) -> list[np.ndarray]:
        """Per-sentence N x J marginal tables; rows sum to 1 within 1e-9."""
        out: dict[int, np.ndarray] = {}
        for idx, chunk, states in self._eval_batches(corpus):
            em = self.emissions(states.full)
            marg = self._batch_marginals(em, states.lengths)
            for row, k in enumerate(idx):
                out[k] = marg[row, : states.lengths[row]].numpy().copy()
        return [out[k] for k in range(len(out))]

    def predict_tags(self, corpus) -> list[list[int]]:
        """Most-probable tag sequence per sentence (Viterbi for the CRF decoder)."""
        out: dict[int, list[int]] = {}
        for idx, chunk, states in self._eval_batches(corpus):
            em = self.emissions(states.full)
            for row, k in enumerate(idx):
                rows = em[row, : states.lengths[row]]
                if self.config.decoder == "softmax":
                    out[k] = [int(t) for t in rows.argmax(dim=1)]
                else:
                    out[k] = crf.viterbi(rows, self.transitions,
                                         self.start_scores, self.stop_scores)
        return [out[k] for k in range(len(out))]

    def predict_view_tags(self, corpus, view: str) -> list[list[int]]:
        """Per-token argmax of one view; 'full' uses the decoder marginals."""
        out: dict[int, list[int]] = {}
        for idx, chunk, states in self._eval_batches(corpus):
            if view == "full":
                em = self.emissions(states.full)
                marg = self._batch_marginals(em, states.lengths)
                for row, k in enumerate(idx):
                    out[k] = [int(t) for t in
                              marg[row, : states.lengths[row]].argmax(dim=1)]
            else:
                logits = self.view_logits(states, view)
                for row, k in enumerate(idx):
                    rows = logits[row, : states.lengths[row]]
                    out[k] = [int(t) for t in rows.argmax(dim=1)]
        return [out[k] for k in range(len(out))]

    def encoder_states(self, corpus) -> list[EncoderStates]:
        """Detached per-sentence encoder states, for representation-based selection."""
        out: dict[int, EncoderStates] = {}
        for idx, chunk, states in self._eval_batches(corpus):
            for row, k in enumerate(idx):
                n = states.lengths[row]
                out[k] = EncoderStates(
                    fwd=states.fwd[row, :n].numpy().copy(),
                    bwd=states.bwd[row, :n].numpy().copy(),
                    full=states.full[row, :n].numpy().copy(),
                )
        return [out[k] for k in range(len(out))]

    def encode(self, sentence: Sentence) -> EncoderStates:
        """Encoder states of a single sentence, evaluation mode."""
        return self.encoder_states([sentence])[0]

    def clone(self) -> "Tagger":
        dup = Tagger(self.config, self.vocab)
        dup.load_state_dict({k: v.clone() for k, v in self.state_dict().items()})
        return dup


# ---------------------------------------------------------------------- #
# checkpoint container


def _vocab_sha256(chars: list[str]) -> str:
    return hashlib.sha256(json.dumps(chars, ensure_ascii=False).encode()).hexdigest()


def save_checkpoint(model: Tagger, path: str) -> None:
    params = {}
    for name, tensor in sorted(model.state_dict().items()):
        arr = tensor.detach().numpy()
        params[name] = {
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
            "data": base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode(),
        }
    payload = {
        "schema_version": CHECKPOINT_SCHEMA,
        "kind": "tagger-checkpoint",
        "config": model.config.to_dict(),
        "char_vocab": model.vocab.chars,
        "vocab_sha256": _vocab_sha256(model.vocab.chars),
        "params": params,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path: str) -> Tagger:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("kind") != "tagger-checkpoint":
        raise ValueError(f"{path} is not a tagger checkpoint")
    if payload.get("schema_version") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {payload.get('schema_version')}")
    if _vocab_sha256(payload["char_vocab"]) != payload["vocab_sha256"]:
        raise ValueError("checkpoint vocabulary hash mismatch")
    config = TaggerConfig.from_dict(payload["config"])
    model = Tagger(config, CharVocab(payload["char_vocab"]))
    state = {}
    expected = model.state_dict()
    for name, spec_ in payload["params"].items():
        if name not in expected:
            raise ValueError(f"unexpected parameter {name!r} in checkpoint")
        arr = np.frombuffer(base64.b64decode(spec_["data"]),
                            dtype=np.dtype(spec_["dtype"])).reshape(spec_["shape"])
        if tuple(arr.shape) != tuple(expected[name].shape):
            raise ValueError(
                f"parameter {name!r} has shape {arr.shape}, "
                f"config implies {tuple(expected[name].shape)}")
        state[name] = torch.tensor(arr.copy())
    missing = set(expected) - set(state)
    if missing:
        raise ValueError(f"checkpoint missing parameters: {sorted(missing)}")
    model.load_state_dict(state)
    return model

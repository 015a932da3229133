"""Character-level word encoder: Bi-LSTM, self-attention, second Bi-LSTM.

The recurrent layers are written out by hand (LSTM gating) so that dropout
and initialization draw from explicit torch.Generators: training is then a
pure function of (parameters, data, seed), which the reproducibility
contract depends on.
"""

from __future__ import annotations

import math

import torch
from torch import nn


class CharVocab:
    """Character inventory with reserved padding/unknown slots."""

    PAD = 0
    UNK = 1

    def __init__(self, chars: list[str]):
        self.chars = sorted(set(chars))
        self._index = {c: i + 2 for i, c in enumerate(self.chars)}

    def __len__(self) -> int:
        return len(self.chars) + 2

    @classmethod
    def from_surfaces(cls, surfaces) -> "CharVocab":
        seen: set[str] = set()
        for surface in surfaces:
            seen.update(surface)
        return cls(sorted(seen))

    def encode(self, word: str) -> list[int]:
        return [self._index.get(c, self.UNK) for c in word]


def uniform_(tensor: torch.Tensor, bound: float, gen: torch.Generator) -> None:
    with torch.no_grad():
        tensor.copy_(torch.empty_like(tensor).uniform_(-bound, bound, generator=gen))


def dropout(x: torch.Tensor, p: float, gen: torch.Generator | None) -> torch.Tensor:
    """Inverted dropout driven by an explicit generator; identity when gen is None."""
    if gen is None or p <= 0.0:
        return x
    keep = (torch.rand(x.shape, generator=gen, dtype=x.dtype) >= p)
    return x * keep.to(x.dtype) / (1.0 - p)


class BiLstm(nn.Module):
    """Bidirectional LSTM exposing separate per-step forward/backward states."""

    def __init__(self, input_dim: int, hidden: int, gen: torch.Generator):
        super().__init__()
        self.input_dim = input_dim
        self.hidden = hidden
        k = 1.0 / math.sqrt(hidden)
        for name in ("w_ih_f", "w_ih_b"):
            p = nn.Parameter(torch.empty(4 * hidden, input_dim))
            uniform_(p, k, gen)
            setattr(self, name, p)
        for name in ("w_hh_f", "w_hh_b"):
            p = nn.Parameter(torch.empty(4 * hidden, hidden))
            uniform_(p, k, gen)
            setattr(self, name, p)
        for name in ("bias_f", "bias_b"):
            p = nn.Parameter(torch.empty(4 * hidden))
            uniform_(p, k, gen)
            setattr(self, name, p)

    def _run(self, x: torch.Tensor, mask: torch.Tensor, w_ih, w_hh, bias,
             reverse: bool) -> torch.Tensor:
        batch, steps, _ = x.shape
        h = x.new_zeros(batch, self.hidden)
        c = x.new_zeros(batch, self.hidden)
        pre = x @ w_ih.T + bias  # input contribution for all steps at once
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        out = [None] * steps
        for t in order:
            gates = pre[:, t] + h @ w_hh.T
            i, f, g, o = gates.chunk(4, dim=1)
            c_new = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
            h_new = torch.sigmoid(o) * torch.tanh(c_new)
            keep = mask[:, t : t + 1].to(x.dtype)
            # carry previous state through padded steps
            h = keep * h_new + (1.0 - keep) * h
            c = keep * c_new + (1.0 - keep) * c
            out[t] = h
        return torch.stack(out, dim=1)

    def forward(self, x: torch.Tensor,
                mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        fwd = self._run(x, mask, self.w_ih_f, self.w_hh_f, self.bias_f, reverse=False)
        bwd = self._run(x, mask, self.w_ih_b, self.w_hh_b, self.bias_b, reverse=True)
        return fwd, bwd


class SelfAttention(nn.Module):
    """Single-head scaled dot-product self-attention with a residual connection.

    The residual keeps per-position identity: without it the near-uniform
    softmax at initialization averages every sequence to almost the same
    vector and downstream layers cannot tell word types apart.
    """

    def __init__(self, dim: int, gen: torch.Generator):
        super().__init__()
        k = 1.0 / math.sqrt(dim)
        for name in ("w_q", "w_k", "w_v"):
            p = nn.Parameter(torch.empty(dim, dim))
            uniform_(p, k, gen)
            setattr(self, name, p)
        self.scale = math.sqrt(dim)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        q = x @ self.w_q
        k = x @ self.w_k
        v = x @ self.w_v
        scores = q @ k.transpose(1, 2) / self.scale
        scores = scores.masked_fill(~mask.unsqueeze(1), -1e9)
        return x + torch.softmax(scores, dim=2) @ v


class WordEncoder(nn.Module):
    """chars -> embeddings -> Bi-LSTM -> self-attention -> Bi-LSTM -> word vector.

    The word vector is the concatenation of the second Bi-LSTM's final
    forward and backward states, so its dimension is 2 * modeling_hidden.
    """

    def __init__(self, vocab_size: int, embed_dim: int, char_hidden: int,
                 modeling_hidden: int, dropout_char: float, dropout_out: float,
                 gen: torch.Generator):
        super().__init__()
        self.embed = nn.Parameter(torch.empty(vocab_size, embed_dim))
        uniform_(self.embed, 0.5, gen)
        self.char_lstm = BiLstm(embed_dim, char_hidden, gen)
        self.attention = SelfAttention(2 * char_hidden, gen)
        self.modeling_lstm = BiLstm(2 * char_hidden, modeling_hidden, gen)
        self.dropout_char = dropout_char
        self.dropout_out = dropout_out
        self.out_dim = 2 * modeling_hidden

    def forward(self, char_ids: torch.Tensor,
                gen: torch.Generator | None = None) -> torch.Tensor:
        """Encode a padded (num_words, max_len) id matrix into word vectors."""
        mask = char_ids != CharVocab.PAD
        x = self.embed[char_ids]
        x = dropout(x, self.dropout_char, gen)
        fwd, bwd = self.char_lstm(x, mask)
        states = dropout(torch.cat([fwd, bwd], dim=2), self.dropout_out, gen)
        attended = self.attention(states, mask)
        m_fwd, m_bwd = self.modeling_lstm(attended, mask)
        # carry-through masking leaves the final forward state at the last
        # real character; the backward state at index 0 covers the full word
        word = torch.cat([m_fwd[:, -1], m_bwd[:, 0]], dim=1)
        return dropout(word, self.dropout_out, gen)

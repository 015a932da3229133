"""Linear-chain CRF inference in log space.

All functions take per-position emission scores (N x J), a transition score
matrix (J x J, entry [i, j] scores the pair previous=i, next=j), and per-tag
start/stop score vectors.  Everything runs in float64 regardless of the input
dtype; autograd flows through the casts.
"""

from __future__ import annotations

import numpy as np
import torch

# Additive mask for forbidden tags.  Large enough that exp() underflows to an
# exact 0.0 in float64 under any realistic score scale, small enough to stay
# finite through chained forward steps (so autograd never sees inf - inf).
MASK_SCORE = -1e30


def _as_double(emissions, transitions, start, stop):
    em = torch.as_tensor(emissions).double()
    tr = torch.as_tensor(transitions).double()
    st = torch.as_tensor(start).double()
    en = torch.as_tensor(stop).double()
    if em.ndim != 2:
        raise ValueError(f"emissions must be N x J, got shape {tuple(em.shape)}")
    n, j = em.shape
    if n < 1:
        raise ValueError("need at least one position")
    if tr.shape != (j, j) or st.shape != (j,) or en.shape != (j,):
        raise ValueError("transition/start/stop shapes do not match emissions")
    for t in (em, tr, st, en):
        if not torch.isfinite(t).all():
            raise ValueError("CRF scores must be finite")
    return em, tr, st, en


def crf_log_partition(emissions, transitions, start, stop) -> torch.Tensor:
    """log Z(x) via the forward recursion (log-sum-exp, numerically stable)."""
    em, tr, st, en = _as_double(emissions, transitions, start, stop)
    alpha = st + em[0]
    for t in range(1, em.shape[0]):
        alpha = torch.logsumexp(alpha.unsqueeze(1) + tr, dim=0) + em[t]
    return torch.logsumexp(alpha + en, dim=0)


def sequence_log_score(emissions, transitions, start, stop, tags) -> torch.Tensor:
    """Unnormalized log score of one tag sequence."""
    em, tr, st, en = _as_double(emissions, transitions, start, stop)
    tags = list(tags)
    if len(tags) != em.shape[0]:
        raise ValueError("tag sequence length does not match emissions")
    score = st[tags[0]] + em[0, tags[0]]
    for t in range(1, len(tags)):
        score = score + tr[tags[t - 1], tags[t]] + em[t, tags[t]]
    return score + en[tags[-1]]


def crf_marginals(emissions, transitions, start, stop) -> torch.Tensor:
    """Per-position tag marginals P(y_t = j | x) from forward-backward.

    Returns an N x J float64 tensor whose rows sum to 1.
    """
    em, tr, st, en = _as_double(emissions, transitions, start, stop)
    n = em.shape[0]
    alphas = [st + em[0]]
    for t in range(1, n):
        alphas.append(torch.logsumexp(alphas[-1].unsqueeze(1) + tr, dim=0) + em[t])
    betas = [en]
    for t in range(n - 2, -1, -1):
        nxt = tr + (em[t + 1] + betas[-1]).unsqueeze(0)
        betas.append(torch.logsumexp(nxt, dim=1))
    betas.reverse()
    log_z = torch.logsumexp(alphas[-1] + en, dim=0)
    rows = [alphas[t] + betas[t] - log_z for t in range(n)]
    marg = torch.exp(torch.stack(rows))
    # renormalize away float residue so rows sum to 1 tighter than 1e-9
    return marg / marg.sum(dim=1, keepdim=True)


def viterbi(emissions, transitions, start, stop) -> list[int]:
    """Most probable tag sequence; ties break toward the lowest tag index."""
    em, tr, st, en = _as_double(emissions, transitions, start, stop)
    em_np = em.detach().numpy()
    tr_np = tr.detach().numpy()
    n, j = em_np.shape
    score = st.detach().numpy() + em_np[0]
    back = np.zeros((n, j), dtype=np.int64)
    for t in range(1, n):
        cand = score[:, None] + tr_np  # cand[i, k]: best-so-far ending at i, then k
        back[t] = np.argmax(cand, axis=0)  # argmax returns the first (lowest) index
        score = cand[back[t], np.arange(j)] + em_np[t]
    score = score + en.detach().numpy()
    path = [int(np.argmax(score))]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path


def masked_emissions(emissions: torch.Tensor,
                     constraints: dict[int, int]) -> torch.Tensor:
    """Emission scores with all but the required tag masked at annotated positions."""
    n, j = emissions.shape
    for pos, tag in constraints.items():
        if not (0 <= pos < n):
            raise IndexError(f"constraint position {pos} out of range for length {n}")
        if not (0 <= tag < j):
            raise IndexError(f"constraint tag {tag} out of range for {j} tags")
    if not constraints:
        return emissions
    mask = torch.zeros_like(emissions)
    for pos, tag in constraints.items():
        mask[pos, :] = MASK_SCORE
        mask[pos, tag] = 0.0
    return emissions + mask


def constrained_log_partition(emissions, transitions, start, stop,
                              constraints: dict[int, int]) -> torch.Tensor:
    """log of the unnormalized mass of all sequences congruent with the constraints."""
    em, tr, st, en = _as_double(emissions, transitions, start, stop)
    return crf_log_partition(masked_emissions(em, constraints), tr, st, en)


def constrained_log_likelihood(emissions, transitions, start, stop,
                               constraints: dict[int, int]) -> torch.Tensor:
    """log p(Y_L | x): the probability of the constraint-congruent sequence set.

    Computed as constrained log-partition minus the full log-partition; 0 when
    no position is constrained, and equal to log p(y|x) when every position is.
    """
    em, tr, st, en = _as_double(emissions, transitions, start, stop)
    log_z = crf_log_partition(em, tr, st, en)
    log_zc = crf_log_partition(masked_emissions(em, constraints), tr, st, en)
    return log_zc - log_z


# ------------------------------------------------------------------------- #
# batched variants: one padded (B, T, J) pass for a whole mini-batch.  These
# must agree with the per-sentence functions above (tested against them and,
# transitively, against brute-force enumeration).


def batched_log_partition(emissions: torch.Tensor, lengths: list[int],
                          transitions, start, stop) -> torch.Tensor:
    """log Z for each row of a padded (B, T, J) emission tensor."""
    b, t_max, j = emissions.shape
    em = emissions.double()
    tr = torch.as_tensor(transitions).double()
    st = torch.as_tensor(start).double()
    en = torch.as_tensor(stop).double()
    lens = torch.as_tensor(lengths).view(b, 1)
    alpha = st + em[:, 0]
    for t in range(1, t_max):
        nxt = torch.logsumexp(alpha.unsqueeze(2) + tr, dim=1) + em[:, t]
        active = (lens > t).to(em.dtype)
        alpha = active * nxt + (1.0 - active) * alpha
    return torch.logsumexp(alpha + en, dim=1)


def batched_marginals(emissions: torch.Tensor, lengths: list[int],
                      transitions, start, stop) -> torch.Tensor:
    """Per-token marginals for a padded batch; rows at padded steps are junk."""
    b, t_max, j = emissions.shape
    em = emissions.double()
    tr = torch.as_tensor(transitions).double()
    st = torch.as_tensor(start).double()
    en = torch.as_tensor(stop).double()
    lens = torch.as_tensor(lengths).view(b, 1)

    alphas = [st + em[:, 0]]
    for t in range(1, t_max):
        nxt = torch.logsumexp(alphas[-1].unsqueeze(2) + tr, dim=1) + em[:, t]
        active = (lens > t).to(em.dtype)
        alphas.append(active * nxt + (1.0 - active) * alphas[-1])
    alpha = torch.stack(alphas, dim=1)  # B x T x J

    # beta recursion runs from each row's own last position: beta = stop there
    # (and in the padded region, where the value is harmless), the standard
    # backward step before it
    last = lens - 1
    betas_rev = [en.expand(b, j)]
    for t in range(t_max - 2, -1, -1):
        nxt = torch.logsumexp(
            tr.unsqueeze(0) + (em[:, t + 1] + betas_rev[-1]).unsqueeze(1), dim=2)
        betas_rev.append(torch.where((last <= t).expand(b, j), en.expand(b, j), nxt))
    betas_rev.reverse()
    beta = torch.stack(betas_rev, dim=1)

    idx = last.view(b, 1, 1).expand(b, 1, j)
    log_z = torch.logsumexp(alpha.gather(1, idx).squeeze(1) + en, dim=1)
    marg = torch.exp(alpha + beta - log_z.view(b, 1, 1))
    return marg / marg.sum(dim=2, keepdim=True).clamp(min=1e-300)

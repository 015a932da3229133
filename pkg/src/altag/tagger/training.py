"""Seeded SGD training with early stopping and cross-view alternation."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from altag.corpus import AnnotationStore, Corpus, Sentence
from altag.tagger.model import Tagger


@dataclass
class TrainResult:
    epochs_run: int
    best_epoch: int
    best_dev_accuracy: float | None
    epoch_losses: list[float] = field(default_factory=list)


def constraints_from_store(corpus: Corpus,
                           store: AnnotationStore | None) -> list[tuple[Sentence, dict[int, int]]]:
    """Pair each sentence with its token constraints.

    With a store, only sentences containing at least one annotation are
    returned (the labeled set); without one, every gold tag becomes a
    constraint (full supervision).
    """
    if store is None:
        out = []
        for sent in corpus.sentences:
            cons = {ti: tok.gold_tag for ti, tok in enumerate(sent.tokens)
                    if tok.gold_tag is not None}
            if cons:
                out.append((sent, cons))
        return out
    by_sentence: dict[int, dict[int, int]] = {}
    for (si, ti), rec in store.items():
        by_sentence.setdefault(si, {})[ti] = rec.tag
    return [(corpus.sentences[si], cons) for si, cons in sorted(by_sentence.items())]


def dev_accuracy(model: Tagger, dev: Corpus) -> float:
    predictions = model.predict_tags(dev)
    correct = total = 0
    for sent, tags in zip(dev.sentences, predictions):
        for tok, tag in zip(sent.tokens, tags):
            if tok.is_boundary or tok.gold_tag is None:
                continue
            total += 1
            correct += int(tag == tok.gold_tag)
    return correct / total if total else 0.0


def _batches(order: list[int], size: int):
    for i in range(0, len(order), size):
        yield order[i : i + size]


def train(model: Tagger, labeled_corpus: Corpus,
          store: AnnotationStore | None = None,
          unlabeled: Corpus | None = None,
          dev: Corpus | None = None,
          *, lr: float | None = None,
          seed: int | None = None,
          max_epochs: int | None = None) -> TrainResult:
    """Fit the tagger in place and return a training summary.

    Minimizes the mean constrained negative log-likelihood over labeled
    sentences; when the config enables CVT and an unlabeled corpus is given,
    each labeled mini-batch alternates with one unlabeled mini-batch trained
    on the cross-view consistency loss.  Early-stops on dev token accuracy
    with the configured patience; deterministic for a fixed seed.
    """
    config = model.config
    labeled = constraints_from_store(labeled_corpus, store)
    if not labeled:
        raise ValueError("training requires at least one labeled token")
    lr = config.sgd_lr if lr is None else lr
    seed = config.seed if seed is None else seed
    max_epochs = config.max_epochs if max_epochs is None else max_epochs

    gen = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.SGD(model.parameters(), lr=lr,
                                momentum=config.sgd_momentum)
    use_cvt = config.use_cvt and unlabeled is not None and len(unlabeled) > 0
    unlabeled_order: list[int] = []

    def next_unlabeled_batch() -> list[Sentence]:
        nonlocal unlabeled_order
        if len(unlabeled_order) < config.batch_size:
            refill = torch.randperm(len(unlabeled), generator=gen).tolist()
            unlabeled_order = unlabeled_order + refill
        take, unlabeled_order = (unlabeled_order[: config.batch_size],
                                 unlabeled_order[config.batch_size :])
        return [unlabeled.sentences[i] for i in take]

    def step(compute_loss, what: str) -> float:
        try:
            loss = compute_loss()
        except ValueError as exc:
            # the CRF layer rejects non-finite scores before they become NaN
            raise RuntimeError(f"loss diverged at {what}: {exc}") from exc
        if not torch.isfinite(loss):
            raise RuntimeError(f"loss diverged (non-finite) at {what}")
        optimizer.zero_grad()
        loss.backward()
        if config.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
        optimizer.step()
        return float(loss.detach())

    best_state = None
    best_acc = -1.0
    best_epoch = 0
    bad_epochs = 0
    epoch_losses: list[float] = []
    epochs_run = 0
    if dev is not None:
        # the incoming parameters count as the baseline: fine-tuning that
        # never beats them on dev must hand them back unchanged
        best_acc = dev_accuracy(model, dev)
        best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    for epoch in range(1, max_epochs + 1):
        epochs_run = epoch
        order = torch.randperm(len(labeled), generator=gen).tolist()
        epoch_loss = 0.0
        for b, batch_idx in enumerate(_batches(order, config.batch_size)):
            batch = [labeled[i] for i in batch_idx]
            sentences = [s for s, _ in batch]
            constraints = [c for _, c in batch]
            epoch_loss += step(
                lambda: model.supervised_loss(sentences, constraints, gen=gen),
                f"epoch {epoch} supervised batch {b}")
            if use_cvt:
                cvt_batch = next_unlabeled_batch()
                step(lambda: model.cvt_loss(cvt_batch, gen=gen) * config.cvt_weight,
                     f"epoch {epoch} cvt batch {b}")
        epoch_losses.append(epoch_loss)

        if dev is not None:
            acc = dev_accuracy(model, dev)
            if acc > best_acc:
                best_acc = acc
                best_epoch = epoch
                best_state = {k: v.detach().clone()
                              for k, v in model.state_dict().items()}
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= config.patience:
                    break

    if best_state is not None:
        model.load_state_dict(best_state)
    return TrainResult(
        epochs_run=epochs_run,
        best_epoch=best_epoch if dev is not None else epochs_run,
        best_dev_accuracy=best_acc if dev is not None else None,
        epoch_losses=epoch_losses,
    )

"""Active-learning driver: pretraining, select/annotate/fine-tune cycles, reports."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from altag.corpus import (
    AnnotationRecord,
    AnnotationStore,
    Corpus,
    TypeIndex,
    concat_with_language_tags,
)
from altag.metrics import (
    IterationSnapshot,
    confusion_score,
    corpus_wasserstein,
    sce,
    token_accuracy,
)
from altag.strategies import (
    ORACLE_STRATEGIES,
    STRATEGIES,
    CandidatePool,
    SelectionBatch,
    batch_log_records,
    cral_select,
    select_cral_oracle,
    select_qbc,
    select_qbc_oracle,
    select_random,
    select_uns,
    select_uns_oracle,
)
from altag.tagger.config import TaggerConfig
from altag.tagger.encoder import CharVocab
from altag.tagger.model import Tagger
from altag.tagger.training import train

REPORT_SCHEMA = 1


def derive_seed(seed: int, iteration: int) -> int:
    """Stable per-iteration seed so replay and reruns agree."""
    return (seed * 1_000_003 + iteration * 7919 + 17) % (2**31 - 1)


@dataclass
class LoopConfig:
    strategy: str
    seed: int
    batch_size: int = 50
    iterations: int = 20
    fine_tune_lr_coeff: float = 2.5e-5
    tagger: TaggerConfig = field(default_factory=TaggerConfig)
    fine_tune_max_epochs: int | None = None
    warm_start: bool = True
    cvt_on_pool: bool = True
    record_timing: bool = True
    # frame target sentences with this language-id token (the pretraining
    # corpora are framed with theirs, so unframed input is out of distribution)
    language_code: str | None = None
    # optional ceiling on the fine-tuning rate; the proportional rule can
    # overshoot stable step sizes once many sentences carry annotations
    fine_tune_lr_max: float | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(
                f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.fine_tune_lr_coeff <= 0:
            raise ValueError("fine_tune_lr_coeff must be positive")

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "tagger"}
        d["tagger"] = self.tagger.to_dict()
        return d


@dataclass
class RunReport:
    config: dict
    seed: int
    rows: list[dict] = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA

    def accuracies(self) -> list[float]:
        return [row["accuracy"] for row in self.rows]

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "kind": "run-report",
            "config": self.config,
            "seed": self.seed,
            "iterations": self.rows,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        payload = json.loads(text)
        if payload.get("kind") != "run-report":
            raise ValueError("not a run report")
        return cls(config=payload["config"], seed=payload["seed"],
                   rows=payload["iterations"],
                   schema_version=payload["schema_version"])


def pretrain(train_corpora: list[tuple[Corpus, str]], dev: Corpus | None,
             config: TaggerConfig, unlabeled: Corpus | None = None) -> Tagger:
    """Train the transfer model on concatenated, language-tagged source corpora.

    Every source corpus must be fully gold-tagged.  When ``unlabeled`` is
    given (the target pool) its surfaces join the character vocabulary and,
    with CVT enabled, it supplies the consistency-training batches.
    """
    for corpus, code in train_corpora:
        if not corpus.fully_tagged():
            raise ValueError(f"pretraining corpus {code!r} is not fully labeled")
    merged = concat_with_language_tags(train_corpora)
    surfaces = [t.surface for _, _, t in merged.iter_tokens()]
    if unlabeled is not None:
        surfaces.extend(t.surface for _, _, t in unlabeled.iter_tokens())
    if dev is not None:
        surfaces.extend(t.surface for _, _, t in dev.iter_tokens())
    model = Tagger(config, CharVocab.from_surfaces(surfaces))
    train(model, merged, unlabeled=unlabeled, dev=dev, seed=config.seed)
    return model


class SimulatedAnnotator:
    """Answers with the gold tag of the exact token instance."""

    name = "simulated"

    def __init__(self, pool: Corpus):
        self._pool = pool

    def __call__(self, batch: SelectionBatch) -> list[int]:
        labels = []
        for item in batch:
            si, ti = item.position
            tag = self._pool.token(si, ti).gold_tag
            if tag is None:
                raise ValueError(f"pool position {item.position} has no gold tag")
            labels.append(tag)
        return labels


@dataclass
class LoopState:
    model: Tagger
    pool_corpus: Corpus
    index: TypeIndex
    store: AnnotationStore
    iteration: int = 0
    previous_snapshot: IterationSnapshot | None = None


def select_batch(state: LoopState, strategy: str, b: int, seed: int,
                 iteration: int) -> SelectionBatch:
    """Dispatch to a strategy with exactly the inputs it is allowed to see.

    Non-oracle strategies never receive the gold-bearing corpus.
    """
    pool = CandidatePool(state.index, state.store)
    if not pool.postings:
        return []
    model = state.model
    if strategy == "rand":
        return select_random(pool, b, seed=seed, iteration=iteration)
    if strategy == "uns":
        marginals = model.predict_marginals(state.pool_corpus)
        return select_uns(marginals, pool, b, iteration=iteration)
    if strategy == "qbc":
        committee = [model.predict_view_tags(state.pool_corpus, view)
                     for view in ("fwd", "bwd", "full")]
        return select_qbc(committee, pool, b, iteration=iteration)
    if strategy == "cral":
        marginals = model.predict_marginals(state.pool_corpus)
        states = [s.full for s in model.encoder_states(state.pool_corpus)]
        return cral_select(marginals, states, pool, b, iteration=iteration)
    if strategy == "uns-oracle":
        marginals = model.predict_marginals(state.pool_corpus)
        return select_uns_oracle(marginals, state.pool_corpus, pool, b,
                                 iteration=iteration)
    if strategy == "qbc-oracle":
        predictions = model.predict_view_tags(state.pool_corpus, "full")
        return select_qbc_oracle(predictions, state.pool_corpus, pool, b,
                                 iteration=iteration)
    if strategy == "cral-oracle":
        predictions = model.predict_view_tags(state.pool_corpus, "full")
        states = [s.full for s in model.encoder_states(state.pool_corpus)]
        return select_cral_oracle(predictions, state.pool_corpus, states, pool, b,
                                  iteration=iteration)
    raise ValueError(f"unknown strategy {strategy!r}")


def fine_tune_lr(config: LoopConfig, store: AnnotationStore) -> float:
    """lr proportional to the number of sentences carrying annotations."""
    lr = config.fine_tune_lr_coeff * store.labeled_sentence_count()
    if config.fine_tune_lr_max is not None:
        lr = min(lr, config.fine_tune_lr_max)
    return lr


def evaluate(model: Tagger, test: Corpus, store: AnnotationStore,
             pool_corpus: Corpus, iteration: int,
             previous: IterationSnapshot | None) -> tuple[IterationSnapshot, dict]:
    predictions = model.predict_tags(test)
    snapshot = IterationSnapshot(
        iteration=iteration,
        predictions=predictions,
        annotated_positions=store.positions(),
        accuracy=token_accuracy(predictions, test),
    )
    marginals = model.predict_marginals(test)
    row = {
        "iteration": iteration,
        "accuracy": snapshot.accuracy,
        "wd": corpus_wasserstein(store, pool_corpus),
        "confusion": (confusion_score(previous, snapshot, test)
                      if previous is not None else 0.0),
        "sce": sce(marginals, test),
        "n_annotations": len(store),
    }
    return snapshot, row


def run_iteration(state: LoopState, config: LoopConfig, test: Corpus,
                  annotator, dev: Corpus | None = None) -> tuple[IterationSnapshot, dict]:
    """One select -> annotate -> fine-tune -> evaluate cycle."""
    started = time.perf_counter()
    iteration = state.iteration + 1
    batch = select_batch(state, config.strategy, config.batch_size,
                         seed=derive_seed(config.seed, iteration), iteration=iteration)
    warning = None
    if len(batch) < config.batch_size:
        warning = f"pool exhausted: selected {len(batch)} of {config.batch_size}"

    labels = annotator(batch)
    for item, tag in zip(batch, labels):
        state.store.put(item.position, AnnotationRecord(
            tag=tag, iteration=iteration, annotator=getattr(annotator, "name", "?")))

    if batch:
        train(state.model, state.pool_corpus, store=state.store,
              unlabeled=state.pool_corpus if config.cvt_on_pool else None,
              dev=dev, lr=fine_tune_lr(config, state.store),
              seed=derive_seed(config.seed, 10_000 + iteration),
              max_epochs=config.fine_tune_max_epochs)

    snapshot, row = evaluate(state.model, test, state.store, state.pool_corpus,
                             iteration, state.previous_snapshot)
    row["selections"] = batch_log_records(batch, state.pool_corpus)
    row["lr"] = fine_tune_lr(config, state.store) if batch else 0.0
    row["wall_clock_s"] = (time.perf_counter() - started
                           if config.record_timing else 0.0)
    if warning:
        row["warning"] = warning
    state.iteration = iteration
    state.previous_snapshot = snapshot
    return snapshot, row


def frame_with_language(corpus: Corpus, code: str | None) -> Corpus:
    """Bracket every sentence with a language-id token; no-op without a code."""
    if code is None:
        return corpus
    return concat_with_language_tags([(corpus, code)])


def run_simulation(model: Tagger, pool: Corpus, test: Corpus, config: LoopConfig,
                   dev: Corpus | None = None) -> RunReport:
    """Full simulated run: iteration-0 evaluation plus the configured cycles.

    The pool must carry gold tags (they drive the simulated annotator and, for
    oracle strategies, selection itself).
    """
    if config.strategy in ORACLE_STRATEGIES and not pool.fully_tagged():
        raise ValueError(f"strategy {config.strategy!r} needs a fully gold pool")
    pool = frame_with_language(pool, config.language_code)
    test = frame_with_language(test, config.language_code)
    dev = frame_with_language(dev, config.language_code) if dev is not None else None
    started = time.perf_counter()
    state = LoopState(model=model, pool_corpus=pool, index=TypeIndex(pool),
                      store=AnnotationStore())
    report = RunReport(config=config.to_dict(), seed=config.seed)

    snapshot, row = evaluate(model, test, state.store, pool, 0, None)
    row["selections"] = []
    row["lr"] = 0.0
    row["wall_clock_s"] = (time.perf_counter() - started
                           if config.record_timing else 0.0)
    report.rows.append(row)
    state.previous_snapshot = snapshot

    annotator = SimulatedAnnotator(pool)
    for _ in range(config.iterations):
        _, row = run_iteration(state, config, test, annotator, dev=dev)
        report.rows.append(row)
    return report


def compare_runs(reports: list[RunReport]) -> dict:
    """Pairwise mean accuracy differences plus the per-iteration curves."""
    if not reports:
        raise ValueError("no reports to compare")
    lengths = {len(r.rows) for r in reports}
    if len(lengths) != 1:
        raise ValueError(f"reports have mismatched iteration counts: {sorted(lengths)}")
    names = []
    for i, r in enumerate(reports):
        name = r.config.get("strategy", f"run{i}")
        names.append(f"{name}#{i}" if names.count(name) else name)
    curves = {name: r.accuracies() for name, r in zip(names, reports)}
    pairs = []
    for i in range(len(reports)):
        for k in range(i + 1, len(reports)):
            a, b = reports[i].accuracies(), reports[k].accuracies()
            diff = sum(x - y for x, y in zip(a, b)) / len(a)
            pairs.append({"a": names[i], "b": names[k], "mean_accuracy_diff": diff})
    return {"curves": curves, "pairs": pairs}

"""Live annotation service: sessions, submissions, advancement, replay."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from altag.corpus import UPOS, Corpus, Sentence, Token, parse_conllu, write_conllu
from altag.service import ServiceConfig, create_app
from altag.synthetic import generate_corpus, make_family
from altag.tagger.config import TaggerConfig
from altag.tagger.encoder import CharVocab
from altag.tagger.model import Tagger, save_checkpoint

from .conftest import toy_config


def strip_gold(corpus: Corpus) -> Corpus:
    sentences = []
    for s in corpus.sentences:
        tokens = tuple(Token(surface=t.surface, type_key=t.type_key, gold_tag=None)
                       for t in s.tokens)
        sentences.append(Sentence(id=s.id, tokens=tokens))
    return Corpus(sentences)


@pytest.fixture(scope="module")
def service_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    family = make_family(n_stems_per_tag=10, n_bare_stems=30)
    pool = generate_corpus(family.target, family, 40, seed=11)
    test = generate_corpus(family.target, family, 15, seed=12)
    pool_path = root / "pool.conllu"
    test_path = root / "test.conllu"
    pool_path.write_text(write_conllu(strip_gold(pool)), encoding="utf-8")
    test_path.write_text(write_conllu(test, include_gold=True), encoding="utf-8")

    surfaces = {t.surface for _, _, t in pool.iter_tokens()}
    surfaces.update(t.surface for _, _, t in test.iter_tokens())
    model = Tagger(toy_config(seed=4, use_cvt=False), CharVocab.from_surfaces(surfaces))
    model_path = root / "model.json"
    save_checkpoint(model, str(model_path))
    return root, str(pool_path), str(test_path), str(model_path)


def make_config(service_files, log_dir, **overrides) -> ServiceConfig:
    root, pool_path, test_path, model_path = service_files
    base = dict(
        pool_path=pool_path, model_path=model_path, log_dir=str(log_dir),
        strategy="uns", batch_size=5, seed=3, test_path=test_path,
        fine_tune_lr_coeff=1e-3, fine_tune_max_epochs=2,
    )
    base.update(overrides)
    return ServiceConfig(**base)


def label_all(client, payload, annotator="ann1"):
    labels = [{"item_id": item["item_id"], "tag": "NOUN", "elapsed_ms": 120.5,
               "annotator_id": annotator} for item in payload["items"]]
    r = client.post(f"/api/sessions/{payload['session_id']}/annotations",
                    json={"labels": labels})
    assert r.status_code == 200, r.text
    return r.json()


class TestSessionLifecycle:
    def test_create_returns_first_batch(self, service_files, tmp_path):
        app = create_app(make_config(service_files, tmp_path / "a"))
        client = TestClient(app)
        r = client.post("/api/sessions", json={})
        assert r.status_code == 200
        body = r.json()
        assert len(body["items"]) == 5
        ids = [i["item_id"] for i in body["items"]]
        assert len(set(ids)) == 5
        for item in body["items"]:
            assert 0 <= item["highlight_index"] < len(item["sentence"])
            assert item["allowed_tags"] == list(UPOS.symbols)
            assert not item["sentence"][item["highlight_index"]].startswith("<")

    def test_oracle_strategy_rejected(self, service_files, tmp_path):
        app = create_app(make_config(service_files, tmp_path / "b"))
        client = TestClient(app)
        r = client.post("/api/sessions", json={"strategy": "cral-oracle"})
        assert r.status_code == 400
        assert "gold" in r.json()["message"]

    def test_unknown_strategy_rejected(self, service_files, tmp_path):
        app = create_app(make_config(service_files, tmp_path / "c"))
        client = TestClient(app)
        r = client.post("/api/sessions", json={"strategy": "nope"})
        assert r.status_code == 400
        assert r.json()["code"] == "unknown-strategy"

    def test_same_seed_identical_first_batch(self, service_files, tmp_path):
        batches = []
        for sub in ("d1", "d2"):
            app = create_app(make_config(service_files, tmp_path / sub))
            client = TestClient(app)
            body = client.post("/api/sessions", json={"seed": 99}).json()
            batches.append([(i["sentence_id"], i["token_index"])
                            for i in body["items"]])
        assert batches[0] == batches[1]


class TestSubmission:
    def test_partial_submission_keeps_batch_open(self, service_files, tmp_path):
        app = create_app(make_config(service_files, tmp_path / "e"))
        client = TestClient(app)
        body = client.post("/api/sessions", json={}).json()
        sid = body["session_id"]
        items = body["items"]
        some = [{"item_id": i["item_id"], "tag": "VERB", "elapsed_ms": 10}
                for i in items[:3]]
        r = client.post(f"/api/sessions/{sid}/annotations", json={"labels": some})
        assert r.json()["pending_count"] == 2
        r = client.post(f"/api/sessions/{sid}/advance")
        assert r.status_code == 409
        assert len(r.json()["details"]) == 2

    def test_unknown_item_and_tag(self, service_files, tmp_path):
        app = create_app(make_config(service_files, tmp_path / "f"))
        client = TestClient(app)
        body = client.post("/api/sessions", json={}).json()
        sid = body["session_id"]
        r = client.post(f"/api/sessions/{sid}/annotations",
                        json={"labels": [{"item_id": "missing", "tag": "NOUN"}]})
        assert r.status_code == 400
        assert "missing" in r.json()["details"]
        good_id = body["items"][0]["item_id"]
        r = client.post(f"/api/sessions/{sid}/annotations",
                        json={"labels": [{"item_id": good_id, "tag": "NOMEN"}]})
        assert r.status_code == 400
        assert r.json()["code"] == "unknown-tag"

    def test_duplicate_item_last_write_wins(self, service_files, tmp_path):
        app = create_app(make_config(service_files, tmp_path / "g"))
        client = TestClient(app)
        body = client.post("/api/sessions", json={}).json()
        sid = body["session_id"]
        item = body["items"][0]["item_id"]
        r = client.post(f"/api/sessions/{sid}/annotations", json={"labels": [
            {"item_id": item, "tag": "NOUN"},
            {"item_id": item, "tag": "VERB"},
        ]})
        assert r.status_code == 200
        assert r.json()["warnings"]
        # finish the batch and check the committed tag is the second one
        rest = [{"item_id": i["item_id"], "tag": "ADJ"} for i in body["items"][1:]]
        client.post(f"/api/sessions/{sid}/annotations", json={"labels": rest})
        client.post(f"/api/sessions/{sid}/advance")
        export = client.get(f"/api/sessions/{sid}/export").text
        assert "VERB" in export and "NOUN" not in export


class TestAdvanceAndExport:
    def test_advance_increments_and_reports_accuracy(self, service_files, tmp_path):
        app = create_app(make_config(service_files, tmp_path / "h"))
        client = TestClient(app)
        body = client.post("/api/sessions", json={}).json()
        sid = body["session_id"]
        label_all(client, body)
        r = client.post(f"/api/sessions/{sid}/advance")
        assert r.status_code == 200
        out = r.json()
        assert out["iteration"] == 1
        assert out["status"] == "ready"
        assert "accuracy" in out["metrics"]
        assert len(out["items"]) == 5  # next batch selected
        metrics = client.get(f"/api/sessions/{sid}/metrics").json()
        assert len(metrics["iterations"]) == 1

    def test_export_counts(self, service_files, tmp_path):
        app = create_app(make_config(service_files, tmp_path / "i"))
        client = TestClient(app)
        body = client.post("/api/sessions", json={}).json()
        sid = body["session_id"]
        export = client.get(f"/api/sessions/{sid}/export").text
        cells = [l.split("\t")[3] for l in export.splitlines()
                 if l and not l.startswith("#")]
        assert set(cells) == {"_"}

        label_all(client, body)
        client.post(f"/api/sessions/{sid}/advance")
        export = client.get(f"/api/sessions/{sid}/export").text
        cells = [l.split("\t")[3] for l in export.splitlines()
                 if l and not l.startswith("#")]
        assert sum(c != "_" for c in cells) == 5
        # round-trip: re-importing preserves the annotated tags
        replayed = parse_conllu(export)
        tagged = [(t.surface, t.gold_tag) for _, _, t in replayed.iter_tokens()
                  if t.gold_tag is not None]
        assert len(tagged) == 5


class TestReplay:
    def snapshot(self, service, sid):
        session = service.sessions[sid]
        return {
            "iteration": session.state.iteration,
            "store": [(pos, rec.tag, rec.annotator)
                      for pos, rec in session.state.store.items()],
            "open_batch": [i.item_id for i in session.open_batch],
            "open_positions": sorted(session.batch_positions.values()),
            "export": session.export_conllu(),
        }

    def test_kill_and_replay_reconstructs_state(self, service_files, tmp_path):
        log_dir = tmp_path / "replay"
        config = make_config(service_files, log_dir)
        app = create_app(config)
        client = TestClient(app)
        body = client.post("/api/sessions", json={"seed": 21}).json()
        sid = body["session_id"]
        label_all(client, body, annotator="lin1")
        body = client.post(f"/api/sessions/{sid}/advance").json()
        label_all(client, body, annotator="lin2")
        client.post(f"/api/sessions/{sid}/advance")
        # one extra partial submission on the now-open third batch
        open_batch = client.get(f"/api/sessions/{sid}/batch").json()
        first = open_batch["items"][0]["item_id"]
        client.post(f"/api/sessions/{sid}/annotations",
                    json={"labels": [{"item_id": first, "tag": "ADV",
                                      "elapsed_ms": 40}]})
        before = self.snapshot(app.state.service, sid)
        assert before["iteration"] == 2

        # hard restart: a fresh service over the same log directory
        app2 = create_app(config)
        after = self.snapshot(app2.state.service, sid)
        assert after == before
        # the replayed session still has the partial label pending
        assert first in app2.state.service.sessions[sid].pending

    def test_export_contains_exactly_logged_annotations(self, service_files, tmp_path):
        log_dir = tmp_path / "replay2"
        config = make_config(service_files, log_dir)
        app = create_app(config)
        client = TestClient(app)
        body = client.post("/api/sessions", json={"seed": 31}).json()
        sid = body["session_id"]
        label_all(client, body)
        client.post(f"/api/sessions/{sid}/advance")
        app2 = create_app(config)
        client2 = TestClient(app2)
        export = client2.get(f"/api/sessions/{sid}/export").text
        cells = [l.split("\t")[3] for l in export.splitlines()
                 if l and not l.startswith("#")]
        assert sum(c != "_" for c in cells) == 5

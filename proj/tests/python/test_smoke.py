import json
import math
import os
import subprocess

import pytest

import acrec


def test_long_term_weights():
    a = acrec.long_term_weights(3)
    assert a == pytest.approx([1 / 6, 1 / 3, 1 / 2], abs=1e-15)
    assert sum(acrec.long_term_weights(1000)) == pytest.approx(1.0, abs=1e-12)


def test_bpr_and_metrics():
    assert acrec.bpr_loss(0.0, [0.0, 0.0]) == pytest.approx(math.log(2))
    assert acrec.bpr_loss(1.0, [0.0, 0.0]) == pytest.approx(0.3132616875182228)
    assert acrec.ndcg_at_k(3, 10) == 0.5
    assert acrec.hit_ratio_at_k(11, 10) == 0


def test_even_spread():
    pos = acrec.even_spread_positions(40, 20)
    assert len(pos) == 20 and pos[0] == 0 and pos[-1] == 39
    assert acrec.select_step_indices([14, 15, 30]) == [15, 30]


def test_hash_embed_normalised():
    v = acrec.hash_embed("a quiet lake", 64)
    assert len(v) == 64
    assert sum(x * x for x in v) == pytest.approx(1.0, abs=1e-6)


def test_taxonomy():
    w = acrec.wheel()
    assert len(w["categories"]) == 27
    assert acrec.classify_emotions("I was terrified") == {"Fear"}
    assert acrec.classify_emotions("nothing at all") == {"Other"}
    stmts = acrec.extract_statements("I was completely terrified by the final chapter of this book.")
    assert stmts and "Fear" in stmts[0]["categories"]
    ids = [s["id"] for s in stmts]
    assert acrec.compose(stmts, ids) == acrec.compose(stmts, list(reversed(ids)))
    with pytest.raises(ValueError):
        acrec.compose(stmts, [])


def test_config_digest_stable():
    cfg = acrec.default_config()
    assert acrec.config_digest(cfg) == acrec.config_digest(json.loads(json.dumps(cfg)))
    cfg["seed"] = 5
    assert acrec.config_digest(cfg) != acrec.config_digest(acrec.default_config())


def test_run_synthetic_cosine():
    report = acrec.run_synthetic("cosine", n_users=8, n_books=160)
    assert report["protocol"] == "val101"
    assert 0.0 <= report["metrics"]["HR@10"] <= 100.0


@pytest.mark.skipif("ACREC_CLI" not in os.environ, reason="CLI path not provided")
def test_recommender(tmp_path):
    cli = os.environ["ACREC_CLI"]
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"embedding": {"dim": 32}}))

    def run(*args):
        subprocess.run([cli, *args], check=True, capture_output=True)

    run("synth", "--users", "8", "--books", "160", "--out", str(tmp_path / "raw"))
    run("ingest", "--books", str(tmp_path / "raw/books.jsonl"),
        "--interactions", str(tmp_path / "raw/interactions.jsonl"), "--out", str(tmp_path / "corpus"))
    run("--config", str(cfg), "embed", "--corpus", str(tmp_path / "corpus"),
        "--provider", "hash", "--out", str(tmp_path / "cache"))
    run("train", "--corpus", str(tmp_path / "corpus"), "--cache", str(tmp_path / "cache"),
        "--model", "cosine", "--out", str(tmp_path / "ckpt"))

    rec = acrec.Recommender(str(tmp_path / "ckpt"))
    status, health = rec.handle("GET", "/health")
    assert status == 200 and health["status"] == "ok"
    status, hist = rec.handle("GET", "/users/nobody/history")
    assert status == 404
    user = json.loads((tmp_path / "corpus/stats.json").read_text())["dataset_users"][0]
    out = rec.recommend(user, ac="calm and hopeful", k=5)
    assert len(out["items"]) == 5
    with pytest.raises(KeyError):
        rec.recommend("nobody", ac="calm")

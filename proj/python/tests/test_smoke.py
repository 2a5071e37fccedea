import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import storytag

CORPUS = Path(
    os.environ.get(
        "STORYTAG_TEST_CORPUS",
        Path(__file__).resolve().parents[2] / "tests" / "cli" / "data" / "corpus.jsonl",
    )
)


def test_standard_tags():
    tags = storytag.standard_tags()
    assert len(tags) == 71
    assert tags == sorted(tags)
    assert "murder" in tags


def test_load_dataset():
    records, errors = storytag.load_dataset(CORPUS)
    assert len(records) == 72
    assert errors == []
    assert {r.split for r in records} == {"train", "val", "test"}
    assert all(len(r.tags) == 2 for r in records)


def test_missing_corpus_raises():
    with pytest.raises(storytag.CorpusError):
        storytag.load_dataset("does-not-exist.jsonl")


def test_similarity_matches_closed_form():
    s1 = ["the", "cat", "sat", "down"]
    s2 = ["the", "cat", "ran"]
    expected = 2 / (math.log(4) + math.log(3))
    assert storytag.sentence_similarity(s1, s2) == pytest.approx(expected, abs=1e-12)


def test_pagerank_is_a_distribution_on_symmetric_graph():
    w = np.array([[0.0, 1.0, 0.5], [1.0, 0.0, 0.2], [0.5, 0.2, 0.0]])
    scores = storytag.pagerank(w)
    assert scores.shape == (3,)
    assert scores.sum() == pytest.approx(1.0, abs=1e-6)
    assert scores[0] > scores[2]


def test_summary_is_subset_of_review_sentences():
    reviews = ["A gripping thriller. The ending surprised me.", "Gripping and tense. The cast is great."]
    summary = storytag.summarize_reviews(reviews, ratio=0.5)
    lines = [l for l in summary.splitlines() if l]
    assert 1 <= len(lines) <= 4
    assert all(any(l in r for r in reviews) for l in lines)


def test_micro_f1_and_tags_learned():
    preds = [[0, 1, 2], [1, 2, 3]]
    golds = [[0, 1], [2, 5]]
    # tp 3, predicted 6, gold 4
    assert storytag.micro_f1(preds, golds) == pytest.approx(100 * 2 * 3 / (6 + 4))
    assert storytag.tags_learned(preds) == 4


def test_top_k_breaks_ties_by_index():
    assert storytag.top_k(np.array([0.2, 0.4, 0.2, 0.2]), 2) == [1, 0]


def test_cutoff_on_plateau():
    scores = [0.9, 0.8, 0.7, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6]
    k = storytag.cutoff_index(scores)
    assert 2 <= k < len(scores)
    with pytest.raises(ValueError):
        storytag.cutoff_index([0.1, 0.5, 0.2, 0.1, 0.0])


@pytest.fixture(scope="module")
def gated(tmp_path_factory):
    config = {
        "epochs": 2,
        "batch_size": 8,
        "seed": 3,
        "l2_lambda": 1e-4,
        "model": {"mode": "gated", "embedding_dim": 8, "hidden": 6},
    }
    records, _ = storytag.load_dataset(CORPUS)
    summaries = {r.id: storytag.summarize_reviews(r.reviews, ratio=0.5) for r in records if r.reviews}
    tagger = storytag.train(CORPUS, json.dumps(config), summaries, min_doc_freq=2)
    path = tmp_path_factory.mktemp("ckpt") / "gated.ckpt"
    tagger.save(path)
    return path


def test_train_save_load_predict(gated):
    tagger = storytag.Tagger.load(gated)
    assert tagger.mode == "gated"
    assert tagger.epoch >= 1
    synopsis = "The detective found a corpse. Lovers kiss at the wedding."
    reviews = ["A gripping story full of clues.", "Tender chemistry between the leads."]
    dist = tagger.distribution(synopsis, reviews)
    assert dist.shape == (71,)
    assert dist.sum() == pytest.approx(1.0, abs=1e-9)
    top = tagger.predict(synopsis, reviews, k=3)
    assert len(top) == 3
    assert top[0][1] >= top[1][1] >= top[2][1]
    assert top[0][1] == pytest.approx(dist.max())


def test_mining_and_export(gated):
    tagger = storytag.Tagger.load(gated)
    synopsis = "The detective found a corpse."
    reviews = ["A gripping story full of clues.", "Terrifying dread in every scene."]
    mined = tagger.mine(synopsis, reviews)
    assert all(t not in storytag.standard_tags() for t in mined)
    with pytest.raises(ValueError, match="complementary tags require reviews"):
        tagger.mine(synopsis, [])
    export = json.loads(tagger.export_attention("x", synopsis, reviews))
    assert export["movie_id"] == "x"


def test_unknown_config_key_rejected():
    with pytest.raises(ValueError, match="unknown configuration key 'epoch_count'"):
        storytag.train(CORPUS, json.dumps({"epoch_count": 1}))


def test_bad_checkpoint_rejected(tmp_path):
    bogus = tmp_path / "bogus.ckpt"
    bogus.write_bytes(b"not a checkpoint")
    with pytest.raises(storytag.CheckpointError):
        storytag.Tagger.load(bogus)

"""Tests for cosine matching, CMC evaluation and probe extension."""

import numpy as np
import pytest

from gait_koopman.data.sequence_files import split_gallery_probe
from gait_koopman.errors import ProtocolError
from gait_koopman.recognition.evaluation import (
    CmcResult,
    GalleryProbeProtocol,
    cmc_evaluate,
    cosine_similarity,
    embed_items,
    embed_sequence,
    evaluate_split,
    extend_then_match,
    truncation_sweep,
)
from gait_koopman.recognition.head import GaitEmbedding


def _unit(*values: float) -> GaitEmbedding:
    v = np.asarray(values, dtype=np.float64)
    return GaitEmbedding(v / np.linalg.norm(v))


class TestCosineSimilarity:
    """Test cosine_similarity."""

    def test_same_vector(self):
        """Test a = b gives 1."""
        assert cosine_similarity(_unit(1, 2, 3), _unit(1, 2, 3)) == pytest.approx(1.0)

    def test_orthogonal(self):
        """Test orthogonal vectors give 0."""
        assert cosine_similarity(_unit(1, 0), _unit(0, 1)) == 0.0

    def test_opposite(self):
        """Test a = -b gives -1."""
        assert cosine_similarity([1.0, 2.0], [-2.0, -4.0]) == pytest.approx(-1.0)

    def test_zero_vector_raises(self):
        """Test a zero vector is rejected."""
        with pytest.raises(ValueError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_length_mismatch_raises(self):
        """Test vectors of different lengths are rejected."""
        with pytest.raises(ValueError):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_bounded_for_embeddings_off_unit_norm(self):
        """Test embeddings within the unit-norm tolerance still give at most 1."""
        v = np.array([0.6, 0.8]) * (1.0 + 5e-10)
        a = GaitEmbedding(v)
        assert float(np.dot(a.values, a.values)) > 1.0
        assert cosine_similarity(a, a) == 1.0
        assert cosine_similarity(a, GaitEmbedding(-v)) == -1.0


class TestCmcEvaluate:
    """Test cmc_evaluate."""

    def test_probes_equal_to_gallery(self):
        """Test probes identical to gallery embeddings give rank-1 = 1."""
        gallery = [("a", _unit(1, 0, 0)), ("b", _unit(0, 1, 0)), ("c", _unit(0, 0, 1))]
        result = cmc_evaluate(GalleryProbeProtocol.from_embeddings(gallery, gallery))
        assert isinstance(result, CmcResult)
        assert result.rank(1) == 1.0
        np.testing.assert_array_equal(result.curve, [1.0, 1.0, 1.0])

    def test_curve_is_monotone_and_ends_at_one(self):
        """Test the curve never decreases and reaches 1 at rank G."""
        rng = np.random.default_rng(0)
        gallery = rng.normal(size=(12, 6))
        probes = rng.normal(size=(30, 6))
        protocol = GalleryProbeProtocol(
            gallery_labels=[f"id{i % 4}" for i in range(12)],
            gallery=gallery / np.linalg.norm(gallery, axis=1, keepdims=True),
            probe_labels=[f"id{i % 4}" for i in range(30)],
            probes=probes / np.linalg.norm(probes, axis=1, keepdims=True),
        )
        result = cmc_evaluate(protocol)
        assert len(result.curve) == 4
        assert np.all(np.diff(result.curve) >= 0)
        assert result.curve[-1] == 1.0
        assert result.rank(10) == 1.0

    def test_identity_score_is_best_gallery_match(self):
        """Test an identity is scored by its closest gallery embedding."""
        gallery = [("a", _unit(0, 1)), ("a", _unit(1, 0.05)), ("b", _unit(1, 0.5))]
        result = cmc_evaluate(GalleryProbeProtocol.from_embeddings(gallery, [("a", _unit(1, 0))]))
        assert result.rank(1) == 1.0
        assert result.per_probe.loc[0, "pred_1"] == "a"

    def test_ties_keep_gallery_order(self):
        """Test equal scores rank identities in first-appearance order."""
        gallery = [("b", _unit(1, 0)), ("a", _unit(1, 0))]
        result = cmc_evaluate(GalleryProbeProtocol.from_embeddings(gallery, [("a", _unit(1, 0))]))
        assert result.per_probe.loc[0, "pred_1"] == "b"
        assert result.per_probe.loc[0, "rank"] == 2

    def test_per_probe_columns(self):
        """Test the per-probe table lists the top predictions."""
        gallery = [("a", _unit(1, 0)), ("b", _unit(0, 1))]
        result = cmc_evaluate(GalleryProbeProtocol.from_embeddings(gallery, [("b", _unit(0.1, 1))]))
        assert list(result.per_probe.columns) == ["probe_id", "true_label", "rank", "pred_1", "sim_1", "pred_2", "sim_2"]
        assert result.summary()["rank"].tolist() == [1, 5]

    def test_missing_identity_raises(self):
        """Test a probe identity absent from the gallery is rejected."""
        protocol = GalleryProbeProtocol.from_embeddings([("a", _unit(1, 0))], [("z", _unit(1, 0))])
        with pytest.raises(ProtocolError):
            cmc_evaluate(protocol)

    def test_random_embeddings_rank1_near_chance(self):
        """Test random embeddings identify at 1/G within 3 sigma."""
        rng = np.random.default_rng(42)
        identities, trials = 10, 1000
        gallery = rng.normal(size=(identities, 16))
        probes = rng.normal(size=(trials, 16))
        protocol = GalleryProbeProtocol(
            gallery_labels=[f"id{i}" for i in range(identities)],
            gallery=gallery / np.linalg.norm(gallery, axis=1, keepdims=True),
            probe_labels=[f"id{i}" for i in rng.integers(0, identities, size=trials)],
            probes=probes / np.linalg.norm(probes, axis=1, keepdims=True),
        )
        p = 1.0 / identities
        sigma = np.sqrt(p * (1 - p) / trials)
        assert abs(cmc_evaluate(protocol).rank(1) - p) < 3 * sigma


class TestSequenceEmbedding:
    """Test embedding of pose sequences."""

    def test_embed_sequence_is_unit(self, lds_model, small_head, small_population):
        """Test the sequence embedding has the head's width and unit norm."""
        item = small_population.items[0]
        embedding = embed_sequence(lds_model, small_head, item.sequence, item.shape)
        assert embedding.dim == 8
        assert np.linalg.norm(embedding.values) == pytest.approx(1.0, abs=1e-12)

    def test_zero_extension_matches_plain_path(self, lds_model, small_head, small_population):
        """Test extra = 0 gives the plain embedding."""
        item = small_population.items[0]
        plain = embed_sequence(lds_model, small_head, item.sequence, item.shape)
        extended = extend_then_match(lds_model, item.sequence, 0, small_head, item.shape)
        np.testing.assert_array_equal(plain.values, extended.values)

    def test_extension_changes_embedding(self, lds_model, small_head, small_population):
        """Test forecasting extra frames feeds a longer sequence to the embedding."""
        item = small_population.items[0]
        short = item.sequence.truncated(6)
        plain = extend_then_match(lds_model, short, 0, small_head, item.shape)
        extended = extend_then_match(lds_model, short, 4, small_head, item.shape)
        assert not np.array_equal(plain.values, extended.values)

    def test_negative_extension_raises(self, lds_model, small_head, small_population):
        """Test a negative extension is rejected."""
        item = small_population.items[0]
        with pytest.raises(ValueError):
            extend_then_match(lds_model, item.sequence, -1, small_head, item.shape)

    def test_embed_items_order(self, lds_model, small_head, small_population):
        """Test threaded embedding preserves input order."""
        items = small_population.items[:4]
        parallel = embed_items(lds_model, small_head, items, max_workers=3, progress=False)
        serial = [embed_sequence(lds_model, small_head, i.sequence, i.shape) for i in items]
        for a, b in zip(parallel, serial):
            np.testing.assert_allclose(a.values, b.values, atol=1e-12)


class TestEvaluateSplit:
    """Test evaluate_split and truncation_sweep."""

    def test_evaluate_split(self, lds_model, small_head, small_population):
        """Test a CMC curve over the gallery identities."""
        gallery, probes = split_gallery_probe(small_population.items, gallery_per_identity=2)
        result = evaluate_split(lds_model, small_head, gallery, probes, progress=False)
        assert len(result.curve) == 3
        assert len(result.per_probe) == len(probes)
        assert result.per_probe["probe_id"].tolist() == [p.sequence_id for p in probes]

    def test_truncation_sweep_columns(self, lds_model, small_head, small_population):
        """Test one row per (truncation, extension) pair."""
        gallery, probes = split_gallery_probe(small_population.items, gallery_per_identity=2)
        sweep = truncation_sweep(
            lds_model, small_head, gallery, probes, [None, 8], extensions=[0, 4], progress=False
        )
        assert list(sweep.columns) == ["truncate", "extend", "probe_frames", "rank_1", "rank_5"]
        assert sweep["truncate"].tolist() == [-1, -1, 8, 8]
        assert sweep["probe_frames"].tolist() == [16, 20, 8, 12]
        assert sweep["rank_5"].eq(1.0).all()

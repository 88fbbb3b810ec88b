"""
Tests for sensor registries, temporal encodings and cell embeddings.
"""

from dataclasses import replace

import numpy as np
import pytest

from bataxis.data import collate
from bataxis.embedding import (
    ObservationEmbedder,
    SensorRegistry,
    TemporalEncodingConfig,
    classic_positional_encoding,
    embed_observations,
    temporal_encoding,
)
from bataxis.errors import ConfigError, DimensionError, RegistryError
from bataxis.tensor import DiffTensor
from tests.conftest import make_sample

EIGHT = [f"v{i}" for i in range(8)]
OVERLAPPING = EIGHT[4:] + [f"w{i}" for i in range(4)]


class TestSensorRegistry:
    """Vocabulary bookkeeping in shared and separate modes."""

    def test_shared_vocab_merges_overlap(self):
        registry = SensorRegistry(4, "shared")
        registry.register("a", EIGHT)
        second = registry.register("b", OVERLAPPING)
        assert registry.vocab_size == 12
        assert second[:4].tolist() == [4, 5, 6, 7]
        assert registry.identity.shape == (12, 4)

    def test_separate_vocab_keeps_datasets_apart(self):
        registry = SensorRegistry(4, "separate")
        registry.register("a", EIGHT)
        registry.register("b", OVERLAPPING)
        assert registry.vocab_size == 16
        assert "b/v4" in registry.vocabulary

    def test_rows_depend_on_entry_not_order(self):
        first, second = SensorRegistry(4, seed=1), SensorRegistry(4, seed=1)
        first.register("a", ["hr", "sbp"])
        second.register("b", ["sbp", "hr"])
        assert np.array_equal(first.row("hr"), second.row("hr"))

    def test_re_registering_is_idempotent(self):
        registry = SensorRegistry(4)
        rows = registry.register("a", ["x", "y"])
        assert registry.register("a", ["x", "y"]).tolist() == rows.tolist()
        assert registry.vocab_size == 2

    def test_conflicting_order_rejected(self):
        registry = SensorRegistry(4)
        registry.register("a", ["x", "y"])
        with pytest.raises(RegistryError, match="different sensor order"):
            registry.register("a", ["y", "x"])

    def test_duplicate_and_unknown(self):
        registry = SensorRegistry(4)
        with pytest.raises(RegistryError):
            registry.register("a", ["x", "x"])
        with pytest.raises(RegistryError, match="not registered"):
            registry.lookup("ghost")
        with pytest.raises(RegistryError):
            registry.row("ghost")

    def test_row_for_range(self):
        registry = SensorRegistry(4)
        registry.register("a", ["x", "y"])
        assert np.array_equal(registry.row_for("a", 1), registry.row("y"))
        with pytest.raises(RegistryError, match="out of range"):
            registry.row_for("a", 2)

    def test_header_round_trip_with_rows(self):
        registry = SensorRegistry(4, "separate", seed=3)
        registry.register("a", ["x", "y"])
        registry.identity.data = registry.identity.data + 1.0
        restored = SensorRegistry.from_header(registry.to_header(), registry.identity.data)
        assert restored.vocabulary == registry.vocabulary
        assert restored.lookup("a").tolist() == [0, 1]
        assert np.array_equal(restored.identity.data, registry.identity.data)

    def test_header_rows_shape_checked(self):
        registry = SensorRegistry(4)
        registry.register("a", ["x"])
        with pytest.raises(DimensionError):
            SensorRegistry.from_header(registry.to_header(), np.zeros((2, 4)))

    def test_invalid_construction(self):
        with pytest.raises(ConfigError):
            SensorRegistry(4, mode="pooled")
        with pytest.raises(DimensionError):
            SensorRegistry(0)


class TestTemporalEncoding:
    """Sinusoidal encodings of observation times."""

    def test_time_zero(self):
        out = temporal_encoding(0.0, TemporalEncodingConfig(6, 100.0))
        assert out.tolist() == [0.0, 1.0, 0.0, 1.0, 0.0, 1.0]

    def test_first_pair_is_unscaled(self):
        out = temporal_encoding(np.array([[2.0]]), TemporalEncodingConfig(4, 100.0))
        assert out.shape == (1, 1, 4)
        assert out[0, 0, 0] == pytest.approx(np.sin(2.0))
        assert out[0, 0, 1] == pytest.approx(np.cos(2.0))
        assert out[0, 0, 2] == pytest.approx(np.sin(2.0 / 10.0))

    def test_classic_encoding_uses_large_scale(self):
        assert classic_positional_encoding(3, 4)[2] == pytest.approx(np.sin(3.0 / 100.0))

    def test_rejects_negative_times(self):
        with pytest.raises(ValueError):
            temporal_encoding([-1.0], TemporalEncodingConfig(4))

    @pytest.mark.parametrize("dim,max_time", [(4, 100.0), (8, 48.0), (6, 10.0)])
    def test_distinct_times_get_distinct_encodings(self, dim, max_time):
        grid = np.arange(int(round(max_time * 10)) + 1) / 10.0
        enc = temporal_encoding(grid, TemporalEncodingConfig(dim, max_time))
        # every row has squared norm dim / 2
        gaps = np.clip(dim - 2.0 * enc @ enc.T, 0.0, None)
        np.fill_diagonal(gaps, np.inf)
        assert np.sqrt(gaps.min()) > 1e-6

    @pytest.mark.parametrize("dim,max_time", [(3, 10.0), (0, 10.0), (4, 0.0)])
    def test_bad_config(self, dim, max_time):
        with pytest.raises(ConfigError):
            TemporalEncodingConfig(dim, max_time)


@pytest.fixture
def embedder():
    registry = SensorRegistry(4, seed=0)
    registry.register("default", ["a", "b", "c"])
    return ObservationEmbedder(8, registry, max_time=50.0, seed=0)


class TestObservationEmbedder:
    """Cell embeddings and the ablation switches."""

    def test_shape(self, embedder):
        batch = collate([make_sample(n_times=4, seed=1), make_sample(n_times=6, seed=2)],
                        embedder.registry)
        assert embedder(batch).shape == (2, 6, 3, 8)

    def test_identity_half_is_registry_row_plus_encoding(self, embedder):
        batch = collate([make_sample(n_times=4, seed=1)], embedder.registry)
        out = embedder(batch).data
        encoding = temporal_encoding(batch.times[0], embedder.encoding)
        for d, sensor in enumerate("abc"):
            identity = out[0, :, d, 4:] - encoding[:, 4:]
            assert np.allclose(identity, embedder.registry.row(sensor)[None, :])

    def test_values_switch_hides_values(self, embedder):
        sample = make_sample(n_times=4, seed=1, missing=0.0)
        other = make_sample(n_times=4, seed=1, missing=0.0)
        shifted = type(other)(values=other.values + 5.0, times=other.times,
                              demographics=other.demographics, label=0, standardized=True)
        a = embedder(collate([sample], embedder.registry), use_values=False).data
        b = embedder(collate([shifted], embedder.registry), use_values=False).data
        assert np.allclose(a, b)
        assert not np.allclose(embedder(collate([sample], embedder.registry)).data,
                               embedder(collate([shifted], embedder.registry)).data)

    def test_mask_switch_hides_missingness(self, embedder):
        dense = make_sample(n_times=4, seed=3, missing=0.0)
        holes = type(dense)(values=np.where([[True, False, False]] * 4, np.nan, dense.values),
                            times=dense.times, demographics=dense.demographics, label=0,
                            standardized=True)
        a = embedder(collate([dense], embedder.registry), use_values=False, use_mask=False).data
        b = embedder(collate([holes], embedder.registry), use_values=False, use_mask=False).data
        assert np.allclose(a, b)

    def test_width_must_be_half(self):
        with pytest.raises(DimensionError):
            ObservationEmbedder(8, SensorRegistry(3), max_time=10.0)

    def test_embed_single_sample(self, embedder):
        series = embed_observations(make_sample(n_times=5), embedder)
        assert series.tensor.shape == (5, 3, 8)
        assert series.padding.all()

    def test_swapping_sensors_swaps_slices(self):
        sample = make_sample(n_times=4, seed=5)
        swapped = replace(sample, values=sample.values[:, [1, 0, 2]])

        def embed(order, s):
            registry = SensorRegistry(4, seed=0)
            registry.register("default", order)
            return embed_observations(s, ObservationEmbedder(8, registry, max_time=50.0, seed=0))

        original = embed(["a", "b", "c"], sample).tensor.data
        permuted = embed(["b", "a", "c"], swapped).tensor.data
        np.testing.assert_allclose(permuted, original[:, [1, 0, 2]], atol=1e-12)

    def test_separate_rows_only_learn_from_their_dataset(self):
        registry = SensorRegistry(4, "separate", seed=0)
        registry.register("alpha", ["a", "b", "c"])
        registry.register("beta", ["a", "b", "c"])
        embedder = ObservationEmbedder(8, registry, max_time=50.0, seed=0)
        batch = collate([make_sample(n_times=4, seed=1, source="alpha")], registry)
        weights = np.random.default_rng(0).standard_normal((1, 4, 3, 8))
        (embedder(batch) * DiffTensor(weights)).sum().backward()
        grad = registry.identity.grad
        assert np.all(grad[registry.lookup("beta")] == 0.0)
        assert np.all(np.abs(grad[registry.lookup("alpha")]).sum(axis=1) > 0)

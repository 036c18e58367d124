import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from empchat.decoder import (
    SamplingParams,
    apply_temperature,
    generate_ids,
    nucleus_filter,
    sample_index,
)
from empchat.rng import stream


class TestApplyTemperature:
    def test_unit_temperature(self):
        out = apply_temperature([1.0, 2.0], 1.0)
        e = math.e
        expected = [1 / (1 + e), e / (1 + e)]
        np.testing.assert_allclose(out, expected, atol=1e-9)
        np.testing.assert_allclose(out, [0.269, 0.731], atol=1e-3)

    def test_half_temperature_sharpens(self):
        out = apply_temperature([1.0, 2.0], 0.5)
        exp = np.exp([2.0, 4.0])
        np.testing.assert_allclose(out, exp / exp.sum(), atol=1e-12)
        np.testing.assert_allclose(out, [0.119, 0.881], atol=1e-3)

    def test_large_temperature_approaches_uniform(self):
        out = apply_temperature(stream(1, "t").uniform(-5, 5, size=32), 1e6)
        assert np.max(np.abs(out - 1 / 32)) < 1e-3

    def test_non_positive_rejected(self):
        with pytest.raises(ValueError):
            apply_temperature([0.0, 1.0], 0.0)
        with pytest.raises(ValueError):
            apply_temperature([0.0, 1.0], -1.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-20, 20), min_size=2, max_size=16),
        st.floats(0.05, 10.0),
    )
    def test_ranking_preserved(self, logits, temperature):
        probs = apply_temperature(logits, temperature)
        order_in = np.argsort(np.argsort(logits))
        order_out = np.argsort(np.argsort(probs))
        # strictly increasing in the logits, so rank vectors agree up to ties
        for i in range(len(logits)):
            for j in range(len(logits)):
                if logits[i] > logits[j]:
                    assert probs[i] > probs[j] or np.isclose(probs[i], probs[j])
        assert probs.sum() == pytest.approx(1.0)
        del order_in, order_out


class TestNucleusFilter:
    def test_worked_example(self):
        out = nucleus_filter([0.5, 0.3, 0.15, 0.05], 0.9)
        np.testing.assert_allclose(out, [0.5263, 0.3158, 0.1579, 0.0], atol=1e-4)
        assert np.count_nonzero(out) == 3

    def test_p_one_keeps_everything(self):
        probs = np.array([0.4, 0.3, 0.2, 0.1])
        np.testing.assert_allclose(nucleus_filter(probs, 1.0), probs, atol=1e-12)

    def test_tiny_p_keeps_argmax_only(self):
        out = nucleus_filter([0.05, 0.6, 0.35], 1e-9)
        np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-12)

    def test_invalid_p_rejected(self):
        with pytest.raises(ValueError):
            nucleus_filter([1.0], 0.0)
        with pytest.raises(ValueError):
            nucleus_filter([1.0], -0.5)
        with pytest.raises(ValueError):
            nucleus_filter([1.0], 1.5)

    def test_unnormalized_input_rejected(self):
        with pytest.raises(ValueError):
            nucleus_filter([0.5, 0.4], 0.9)

    def test_boundary_ties_broken_by_id(self):
        out = nucleus_filter([0.25, 0.25, 0.25, 0.25], 0.5)
        np.testing.assert_allclose(out, [0.5, 0.5, 0.0, 0.0], atol=1e-12)
        out = nucleus_filter([0.3, 0.4, 0.3], 0.7)
        np.testing.assert_allclose(out, [0.3 / 0.7, 0.4 / 0.7, 0.0], atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(0.01, 10.0), min_size=2, max_size=24),
        st.floats(0.01, 1.0),
    )
    def test_minimal_support_and_validity(self, weights, p):
        probs = np.asarray(weights) / np.sum(weights)
        probs = probs / probs.sum()
        out = nucleus_filter(probs, p)
        assert np.all(out >= 0)
        assert abs(out.sum() - 1.0) < 1e-9
        support = np.nonzero(out)[0]
        kept_mass = probs[support].sum()
        assert kept_mass >= p - 1e-12
        # argmax always survives
        assert np.argmax(probs) in support
        # minimality: dropping the least-probable survivor goes below p
        if support.size > 1:
            smallest = support[np.argmin(probs[support])]
            assert kept_mass - probs[smallest] < p


class TestSampling:
    def test_empirical_frequencies_match(self):
        probs = nucleus_filter([0.5, 0.3, 0.15, 0.05], 0.9)
        rng = stream(17, "draws")
        n = 100_000
        counts = np.zeros(4)
        for _ in range(n):
            counts[sample_index(probs, rng)] += 1
        freqs = counts / n
        for i, q in enumerate(probs):
            if q == 0:
                assert counts[i] == 0
                continue
            se = math.sqrt(q * (1 - q) / n)
            assert abs(freqs[i] - q) <= 3 * se, f"token {i}: {freqs[i]} vs {q}"

    def test_generate_ids_stops_at_eos(self):
        eos = 7
        logits = np.full(10, -100.0)
        logits[eos] = 100.0
        ids = generate_ids(lambda out: logits, eos, SamplingParams(rng_seed=1))
        assert ids == []

    def test_generate_ids_deterministic_under_seed(self):
        rng_data = stream(3, "fake-logits").normal(size=(12, 20))

        def next_logits(out):
            return rng_data[len(out)]

        a = generate_ids(next_logits, 0, SamplingParams(max_new_tokens=12, rng_seed=9))
        b = generate_ids(next_logits, 0, SamplingParams(max_new_tokens=12, rng_seed=9))
        assert a == b

    def test_generate_ids_respects_max_new_tokens(self):
        logits = np.zeros(5)
        logits[2] = 50.0
        ids = generate_ids(lambda out: logits, 4, SamplingParams(max_new_tokens=6, rng_seed=2))
        assert ids == [2] * 6

    def test_greedy_limit_reproduces_argmax_path(self):
        # T -> 0, p -> 0 degenerates to greedy decoding
        table = stream(5, "greedy").normal(size=(8, 16))

        def next_logits(out):
            return table[len(out)]

        params = SamplingParams(p=1e-9, temperature=0.01, max_new_tokens=8, rng_seed=0)
        ids = generate_ids(next_logits, eos_id=15, sampling=params)
        expected = []
        for row in table:
            best = int(np.argmax(row))
            if best == 15:
                break
            expected.append(best)
        assert ids == expected


class TestSamplingParams:
    def test_defaults_round_trip_through_config(self):
        sp = SamplingParams()
        assert sp.p == 0.9 and sp.temperature == 0.7
        again = SamplingParams.from_json(sp.to_json())
        assert again == sp

    def test_validation(self):
        with pytest.raises(ValueError):
            SamplingParams(p=0.0)
        with pytest.raises(ValueError):
            SamplingParams(p=1.2)
        with pytest.raises(ValueError):
            SamplingParams(temperature=0.0)
        with pytest.raises(ValueError):
            SamplingParams(max_new_tokens=0)

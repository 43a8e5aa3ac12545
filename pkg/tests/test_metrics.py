"""Fidelity and extraction metrics against closed forms and reference code."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inversemark.core import BitString, ImageTensor
from inversemark.errors import InvalidArgumentError
from inversemark.metrics import (binomial_match_threshold, bit_accuracy,
                                 detection_rate, multibit_detect, psnr, ssim)
from inversemark.treering import DetectionReport

from oracles import fair_binomial_threshold, reference_ssim


def img(arr):
    return ImageTensor(np.asarray(arr, dtype=np.float64))


class TestPsnr:
    def test_identical_images_are_infinite(self):
        a = img(np.full((3, 16, 16), 0.5))
        assert psnr(a, a) == math.inf

    def test_zero_vs_one_is_zero_db(self):
        a = img(np.zeros((3, 16, 16)))
        b = img(np.ones((3, 16, 16)))
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_offset_closed_form(self):
        a = img(np.full((3, 16, 16), 0.4))
        b = img(np.full((3, 16, 16), 0.5))
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-10)

    def test_symmetry_and_shape_check(self):
        rng = np.random.default_rng(0)
        a = img(rng.random((3, 16, 16)))
        b = img(rng.random((3, 16, 16)))
        assert psnr(a, b) == psnr(b, a)
        with pytest.raises(InvalidArgumentError):
            psnr(a, img(rng.random((3, 16, 32))))


class TestSsim:
    def test_identical_images_score_one(self):
        a = img(np.random.default_rng(1).random((3, 32, 32)))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_negated_pattern_scores_below_one(self):
        rng = np.random.default_rng(2)
        pattern = 0.2 * (rng.random((3, 32, 32)) - 0.5)
        a = img(0.5 + pattern)
        b = img(0.5 - pattern)
        assert ssim(a, b) < 1.0

    def test_matches_reference_reimplementation(self):
        rng = np.random.default_rng(3)
        a = rng.random((3, 16, 16))
        b = np.clip(a + 0.1 * rng.standard_normal((3, 16, 16)), 0, 1)
        assert ssim(img(a), img(b)) == pytest.approx(reference_ssim(a, b), abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a = img(rng.random((3, 16, 16)))
        b = img(rng.random((3, 16, 16)))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


class TestBitAccuracy:
    def test_identical(self):
        bits = BitString.random(np.random.default_rng(5), 32)
        assert bit_accuracy(bits, bits) == 1.0

    def test_single_mismatch_of_32(self):
        a = BitString.from_iterable([0] * 32)
        flipped = [0] * 32
        flipped[7] = 1
        assert bit_accuracy(a, BitString.from_iterable(flipped)) == pytest.approx(31 / 32)

    def test_complement_scores_zero(self):
        a = BitString.random(np.random.default_rng(6), 40)
        b = BitString(1 - a.bits)
        assert bit_accuracy(a, b) == 0.0

    def test_independent_strings_near_half(self):
        rng = np.random.default_rng(7)
        accs = [bit_accuracy(BitString.random(rng, 32), BitString.random(rng, 32))
                for _ in range(1000)]
        assert abs(np.mean(accs) - 0.5) <= 0.05

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            bit_accuracy(BitString.from_iterable([0, 1]), BitString.from_iterable([0]))

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=64))
    @settings(max_examples=50, deadline=None)
    def test_self_accuracy_is_one(self, bits):
        b = BitString.from_iterable(bits)
        assert bit_accuracy(b, b) == 1.0


class TestDetectionRate:
    def _report(self, detected):
        p = 0.1 if detected else 0.95
        return DetectionReport(mu=1.0, sigma2=1.0, p_value=p,
                               detected=detected, threshold=0.9)

    def test_rates(self):
        all_hit = [self._report(True)] * 4
        none = [self._report(False)] * 4
        half = [self._report(True), self._report(False)]
        assert detection_rate(all_hit) == 1.0
        assert detection_rate(none) == 0.0
        assert detection_rate(half) == 0.5


class TestMultibitDetect:
    def test_threshold_matches_exact_enumeration(self):
        assert binomial_match_threshold(32, 1e-6) == fair_binomial_threshold(32, 1e-6)
        for length in (8, 16, 50, 72):
            for fpr in (1e-3, 1e-6, 1e-9):
                assert binomial_match_threshold(length, fpr) == \
                    fair_binomial_threshold(length, fpr)

    def test_perfect_accuracy_detected(self):
        assert multibit_detect(1.0, 32, 1e-6)
        assert multibit_detect(1.0, 32, 1e-3)

    def test_null_mean_not_detected(self):
        assert not multibit_detect(0.5, 32, 1e-6)

    def test_impossible_budget_never_detects(self):
        # 2^-8 = 0.0039 > 1e-6: even 8/8 matches cannot meet the budget
        assert not multibit_detect(1.0, 8, 1e-6)

import numpy as np
import pytest

from gridlight.errors import DomainError
from gridlight.rng import shot_uniforms
from gridlight.stats import P_VALUE_THRESHOLD, chi_square, merge_groups, two_sample_chi_square, within_sigma


def test_exact_counts_give_zero():
    res = chi_square([25, 25, 50], [0.25, 0.25, 0.5])
    assert res.statistic == 0.0 and res.p_value == 1.0 and res.dof == 2


def test_known_statistic():
    res = chi_square([60, 40], [0.5, 0.5])
    assert res.statistic == pytest.approx(4.0, abs=1e-12)
    assert res.dof == 1


def test_single_category_is_degenerate():
    with pytest.raises(DomainError):
        chi_square([100, 0], [1.0, 0.0])


def test_mismatched_lengths():
    with pytest.raises(DomainError):
        chi_square([1, 2, 3], [0.5, 0.5])


def test_sparse_bins_merge():
    assert merge_groups([1, 1, 1, 1, 1, 10, 2]) == [[0, 1, 2, 3, 4], [5, 6]]


def test_uniform_draws_pass_in_nearly_every_seed():
    # calibration: a correct sampler should fail the threshold at rate about 1e-3
    passed = 0
    for seed in range(200):
        u = shot_uniforms(seed, 0, 100_000)[:, 0]
        counts = np.bincount((u * 4).astype(int), minlength=4)
        passed += chi_square(counts, [0.25] * 4).p_value > P_VALUE_THRESHOLD
    assert passed >= 198


def test_two_sample_same_source():
    u = shot_uniforms(1, 0, 40_000)[:, 0]
    a = np.bincount((u[:20_000] * 5).astype(int), minlength=5)
    b = np.bincount((u[20_000:] * 5).astype(int), minlength=5)
    assert two_sample_chi_square(a, b).p_value > P_VALUE_THRESHOLD
    assert two_sample_chi_square(a, np.array([4000, 0, 0, 0, 16000])).p_value < 1e-10


def test_within_sigma_exact_ends():
    assert within_sigma(100, 100, 1.0)
    assert not within_sigma(99, 100, 1.0)

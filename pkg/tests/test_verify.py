import numpy as np
import pytest

from bcp_distill.errors import ValidationError
from bcp_distill.rng import new_stream
from bcp_distill.verify import (VERIFY_SEED, CheckResult,
                                check_dirichlet_moments, check_gap_ordering,
                                check_inverse_eps_fit, run_checks)


@pytest.fixture(scope="module")
def quick_results():
    return run_checks("quick")


def test_quick_level_passes(quick_results):
    assert len(quick_results) == 11
    failures = [r for r in quick_results if not r.passed]
    assert not failures, [f"{r.name}: {r.detail}" for r in failures]


def test_quick_level_names_and_details(quick_results):
    names = [r.name for r in quick_results]
    assert len(set(names)) == len(names)
    assert "(crashed)" not in names
    assert all(isinstance(r, CheckResult) and r.detail for r in quick_results)


def test_single_check_is_reproducible(quick_results):
    first = check_dirichlet_moments(new_stream(VERIFY_SEED).child("moments"))
    second = check_dirichlet_moments(new_stream(VERIFY_SEED).child("moments"))
    assert first == second
    match = next(r for r in quick_results if r.name == first.name)
    assert match == first


def test_unknown_level_rejected():
    with pytest.raises(ValidationError, match="level"):
        run_checks("paranoid")


def synthetic_gaps(floor=0.001, c=0.02):
    reps = np.zeros(5)
    return {"true": floor + reps,
            "dir0.5": floor + c / 1.5 + reps,
            "dir2": floor + c / 3.0 + reps,
            "dir5": floor + c / 6.0 + reps,
            "onehot": floor + c + reps}


def test_inverse_eps_fit_accepts_inverse_law():
    result = check_inverse_eps_fit(synthetic_gaps())
    assert result.passed
    assert "R^2=1.0000" in result.detail


def test_inverse_eps_fit_rejects_increasing_gaps():
    gaps = synthetic_gaps()
    gaps["dir5"] = gaps["dir0.5"] + 0.05  # noisier label wins: not inverse
    result = check_inverse_eps_fit(gaps)
    assert not result.passed


def test_gap_ordering_accepts_separated_chain():
    gaps = synthetic_gaps()
    jitter = np.linspace(-1e-4, 1e-4, 5)
    spread = {name: arr + jitter for name, arr in gaps.items()}
    result = check_gap_ordering(spread, spread)
    assert result.passed
    assert "onehot" in result.detail


def test_gap_ordering_rejects_overlap():
    gaps = {name: arr + np.linspace(-1e-4, 1e-4, 5)
            for name, arr in synthetic_gaps().items()}
    flat = {name: np.full(5, 0.01) + np.linspace(-1e-3, 1e-3, 5)
            for name in gaps}
    assert not check_gap_ordering(flat, gaps).passed  # gaps indistinguishable
    assert not check_gap_ordering(gaps, flat).passed  # sigmas indistinguishable

"""Acceptance gate: one test per criterion, full profile, frozen tolerances.

The suite runs the complete criterion battery once (module scope) and checks
each result at the stated tolerance.  Criterion 7 is marked as a strict
expected failure: the commutator half of the cutoff scaling claim is not
attainable (the commutator with an order-one generator has norm Theta(1) on
the transition band, not O(nu)), so the faithful implementation measures a
spread growing like 1/nu.  A companion test pins that measured mechanism so
a silent change in either direction fails the suite.
"""

import numpy as np
import pytest

from triplex.acceptance import GALLERY, run_all


@pytest.fixture(scope="module")
def gate():
    return run_all(quick=False, seed=0)


def _res(gate, index):
    res = gate.results[index - 1]
    assert res.index == index
    print(res.line())
    return res


def test_c01_algebraic_identities(gate):
    res = _res(gate, 1)
    assert res.passed
    d = res.details
    assert d["points_per_model"] == 10000
    assert d["max_asym_over_scale"] <= 1e-13
    assert d["max_det_minus_delta_over_scale"] <= 1e-12
    assert d["max_shift_consistency_rel"] <= 1e-8
    assert d["max_vandermonde_rel"] <= 1e-8


def test_c02_root_correctness(gate):
    res = _res(gate, 2)
    assert res.passed
    d = res.details
    assert d["samples_generic"] == 10000
    assert d["worst_generic_dev_over_tol"] <= 1.0
    assert d["worst_double_root_dev_over_tol"] <= 1.0
    assert d["triple_zero_max_root"] == 0.0


def test_c03_condition_checkers(gate):
    res = _res(gate, 3)
    assert res.passed
    d = res.details
    assert d["zero_b_delta_best"] >= 4.0 * (1.0 - 1e-6)
    assert d["ex21_delta_best"] <= 1e-6
    assert d["degenerate_rel_error"] <= 0.05
    assert d["degenerate_ratio_rel_error"] <= 0.2


def test_c04_friedrichs_positivity(gate):
    res = _res(gate, 4)
    assert res.passed
    d = res.details
    assert set(d["models"]) == set(GALLERY)
    assert d["worst_min_eig_over_norm"] >= -1e-8
    # observed: the averaged part is strictly positive definite throughout
    assert d["worst_min_eig_over_norm"] > 0.0


def test_c05_sharp_bound_feasibility(gate):
    res = _res(gate, 5)
    assert res.passed
    d = res.details
    assert d["g_E"]["best"] == [1.0, 512.0]
    assert d["g_zero_b"]["best"] == [1.0, 512.0]
    assert len(d["t_grid"]) == 10


def test_c06_energy_inequality(gate):
    res = _res(gate, 6)
    assert res.passed
    d = res.details
    assert d["min_margin_dt"] >= -0.05
    assert d["min_margin_half_dt"] >= -0.05
    assert d["improvement_factor"] >= 3.0
    assert d["worst_margin_error_half_dt"] < d["worst_margin_error_dt"]


@pytest.mark.xfail(
    strict=True,
    reason="commutator with the order-one generator is Theta(1) on the "
    "transition band, so nu^-1 |R_nu| grows like 1/nu instead of "
    "staying within a factor 3",
)
def test_c07_cutoff_scalings(gate):
    res = _res(gate, 7)
    assert res.passed


def test_c07_measured_mechanism(gate):
    # regression pin for the expected failure above: the lowpass half obeys
    # its scaling, the commutator half grows like 1/nu across the nu range
    res = gate.results[6]
    d = res.details
    assert not res.passed
    assert d["lowpass_spread"] <= 3.0
    assert 4.0 <= d["commutator_spread"] <= 8.0
    comm = np.array(d["scaled_commutator_norms"])
    assert np.all(np.diff(comm) > 0)  # monotone growth as nu shrinks


def test_c08_loss_exponents(gate):
    res = _res(gate, 8)
    assert res.passed
    d = res.details
    for key in ("exponent_K64", "exponent_K128", "exponent_second_draw",
                "exponent_strict"):
        assert np.isfinite(d[key])
    assert d["doubling_change"] <= 0.5
    assert d["draw_change"] <= 1.0
    assert d["exponent_strict"] <= 0.3
    assert 0.2 <= d["exponent_K64"] <= 0.8


def test_c09_taylor_lift(gate):
    res = _res(gate, 9)
    assert res.passed
    d = res.details
    for j in range(4):
        assert d["fd_defect_over_tol"][str(j)] <= 1.0


def test_c10_extension_stability(gate):
    res = _res(gate, 10)
    assert res.passed
    d = res.details
    assert d["extension_delta_local"] > 0
    assert d["extension_delta_global"] > 0
    assert d["sweep_stable_within"] <= 2.0


def test_c11_determinism(gate):
    res = _res(gate, 11)
    assert res.passed
    d = res.details
    assert all(d["identical"].values())
    assert d["files"] == ["conditions.json", "energy.svg", "loss.svg",
                          "manifest.json", "trace.csv"]
    assert set(d["identical"]) == set(d["files"])


def test_overall_report_is_honest(gate):
    lines = [r.line() for r in gate.results]
    print("\n".join(lines))
    assert [r.index for r in gate.results] == list(range(1, 12))
    failed = [r.index for r in gate.results if not r.passed]
    assert failed == [7]
    assert gate.passed is False
    payload = gate.json_dict()
    assert payload["passed"] is False
    assert len(payload["criteria"]) == 11
    assert "elapsed" not in payload  # wall-clock stays out of the report

import pytest

from sclab.inequalities import (
    InstanceGenerator,
    check_ad_expansion,
    check_commutator_transport,
    check_diag_trace,
    check_dgamma_bound,
    check_exchange_identities,
    check_fermionic_bound,
    check_kss,
    check_nabla_u,
    check_powers_stormer,
    check_unmixing,
    run_suite,
    suite_csv,
)

GEN = InstanceGenerator(seed=5)

SMALL = {
    check_unmixing: 150,
    check_ad_expansion: 150,
    check_kss: 60,
    check_diag_trace: 40,
    check_commutator_transport: 40,
    check_powers_stormer: 200,
    check_fermionic_bound: 60,
    check_dgamma_bound: 40,
    check_nabla_u: 15,
    check_exchange_identities: 10,
}


@pytest.mark.parametrize("check", list(SMALL), ids=lambda c: c.__name__)
def test_checks_have_zero_violations(check):
    rep = check(GEN, SMALL[check])
    assert rep.violations == 0, f"{rep.name}: worst margin {rep.worst_margin}"
    assert rep.trials == SMALL[check]


def test_commuting_unmixing_tight():
    # commuting A, B: equality up to the factor 2; constant-1 PSD case is
    # exactly tight, so the worst margin sits at (numerical) zero
    rep = check_unmixing(GEN, 100, constant=2.0, constant_psd=1.0)
    assert rep.worst_margin >= -1e-12
    assert rep.worst_margin < 0.6  # PSD branch keeps it near zero


def test_mutation_weakened_constant_fails():
    # unmixing with 1.9 instead of 2 must produce violations (self-test)
    rep = check_unmixing(GEN, 400, constant=1.9, constant_psd=0.95)
    assert rep.violations > 0
    assert rep.worst_seed >= 0


def test_mutation_dgamma_shrunk_norm_fails():
    rep = check_nabla_u(GEN, 30, constant_factor=2.6)
    assert rep.violations > 0


def test_reports_deterministic():
    r1 = check_unmixing(InstanceGenerator(seed=123), 25)
    r2 = check_unmixing(InstanceGenerator(seed=123), 25)
    assert r1 == r2
    r3 = check_unmixing(InstanceGenerator(seed=124), 25)
    assert r3.worst_margin != r1.worst_margin


def test_run_suite_and_csv(tmp_path):
    trials = {k: 5 for k in
              ("unmixing", "ad_expansion", "kss", "diag_trace",
               "commutator_transport", "powers_stormer", "fermionic_bound",
               "dgamma_bound", "nabla_u", "exchange_identities")}
    reports = run_suite(seed=7, trials=trials)
    assert len(reports) == 10
    assert [r.name for r in reports] == sorted(r.name for r in reports)
    assert all(r.passed for r in reports)
    csv1 = suite_csv(reports)
    csv2 = suite_csv(run_suite(seed=7, trials=trials))
    assert csv1 == csv2  # byte-identical rerun
    lines = csv1.strip().split("\n")
    assert lines[0] == "check,trials,violations,worst_margin,worst_seed"
    assert len(lines) == 11


def test_suite_parallel_matches_serial():
    trials = {k: 4 for k in
              ("unmixing", "ad_expansion", "kss", "diag_trace",
               "commutator_transport", "powers_stormer", "fermionic_bound",
               "dgamma_bound", "nabla_u", "exchange_identities")}
    serial = suite_csv(run_suite(seed=3, trials=trials, workers=1))
    parallel = suite_csv(run_suite(seed=3, trials=trials, workers=4))
    assert serial == parallel

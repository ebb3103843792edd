from ksdl.verification import (
    check_certificate,
    check_closed_form,
    check_coherence_bound,
    check_gap_expectation,
    check_lipschitz,
    check_operator_bounds,
    check_perturbed_coherence,
    check_rip_bound,
    check_structural,
)


def test_checks_pass_at_small_counts():
    for check in (check_structural(10, 1), check_closed_form(10, 1), check_certificate(20, 1),
                  check_coherence_bound(50, 1), check_rip_bound(30, 1),
                  check_perturbed_coherence(50, 1), check_operator_bounds(20, 1),
                  check_lipschitz(50, 1)):
        assert check.passed, check
        row = check.as_row()
        assert row["violations"] == 0 and row["trials"] == check.trials


def test_gap_expectation_check():
    out = check_gap_expectation(20_000, seed=2)
    assert out["passed"], out

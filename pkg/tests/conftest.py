"""Pytest wiring: print one verdict line per acceptance criterion."""

_CRITERIA = {
    "test_c01_gradients_match_finite_differences":
        "criterion 01 gradient check vs central finite differences",
    "test_c02_pr_auc_matches_enumeration":
        "criterion 02 pr_auc equals threshold-enumeration reference",
    "test_c03_resampler_matches_enumeration":
        "criterion 03 resampler equals bin-enumeration reference",
    "test_c04_normalized_training_statistics":
        "criterion 04 normalized training values: mean 0, std 1/3",
    "test_c05_weighted_loss_spot_values":
        "criterion 05 weighted loss spot values",
    "test_c06_stratified_split_arithmetic":
        "criterion 06 stratified split and fold arithmetic",
    "test_c07_end_to_end_benchmark":
        "criterion 07 end-to-end benchmark beats both baselines",
    "test_c08_null_signal_control":
        "criterion 08 null-signal control stays at prevalence",
    "test_c09_run_determinism":
        "criterion 09 seeded quick runs are byte-identical",
    "test_c10_early_stop_contract":
        "criterion 10 early stopping and best-epoch return",
}

_outcomes = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if name not in _CRITERIA:
        return
    if report.when == "call":
        _outcomes[name] = report.outcome
    elif report.outcome != "passed":  # setup/teardown error counts as failure
        _outcomes.setdefault(name, report.outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_CRITERIA):
        if name in _outcomes:
            verdict = "PASS" if _outcomes[name] == "passed" else "FAIL"
            terminalreporter.write_line(f"{_CRITERIA[name]}: {verdict}")

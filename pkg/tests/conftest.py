"""Shared fixtures plus the acceptance summary.

Tests marked @pytest.mark.acceptance(key, title) are the acceptance
gate; after the normal pytest output a one-line PASS/FAIL verdict per
criterion is printed so the gate can be read off directly.
"""

from pathlib import Path

import pytest

CRITERIA_ORDER = (
    "published-numbers",
    "gradient-fidelity",
    "attention-pooling",
    "multitask-reduction",
    "synthetic-e2e",
    "fusion-convexity",
    "metric-oracle",
    "dsp-oracles",
    "cs-svm",
    "determinism",
)

_registered: dict[str, tuple[str, str]] = {}  # nodeid -> (key, title)
_results: dict[str, tuple[str, str]] = {}  # key -> (title, status)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(key, title): one acceptance criterion, reported in the summary"
    )


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m:
            _registered[item.nodeid] = (m.args[0], m.args[1])


def pytest_runtest_logreport(report):
    info = _registered.get(report.nodeid)
    if info is None:
        return
    key, title = info
    if report.when == "call":
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    elif report.failed:  # setup/teardown error
        status = "FAIL"
    elif report.when == "setup" and report.skipped:
        status = "SKIP"
    else:
        return
    if _results.get(key, (None, "PASS"))[1] != "FAIL":
        _results[key] = (title, status)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in CRITERIA_ORDER:
        if key not in _results:
            continue
        title, status = _results[key]
        dots = "." * max(2, 58 - len(title))
        markup = {"green": True} if status == "PASS" else {"red": True}
        terminalreporter.write_line(f"{title} {dots} {status}", **markup)
    for key in _results:
        if key not in CRITERIA_ORDER:
            title, status = _results[key]
            terminalreporter.write_line(f"{title} ... {status} (unlisted criterion)")


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory) -> Path:
    """80-utterance synthetic corpus shared by integration tests."""
    from emofuse.synthetic import make_corpus

    root = tmp_path_factory.mktemp("mini_corpus")
    return Path(make_corpus(root, size=80, seed=7))


@pytest.fixture(scope="session")
def corpus_800(tmp_path_factory) -> Path:
    """Full-size synthetic corpus for the end-to-end acceptance run."""
    from emofuse.synthetic import make_corpus

    root = tmp_path_factory.mktemp("corpus_800")
    return Path(make_corpus(root, size=800, seed=11))


@pytest.fixture(scope="session")
def small_run_config():
    """Config factory for fast pipeline runs on the mini corpus."""
    from emofuse.config import ExperimentConfig, config_from_dict

    def build(manifest: Path, out_dir: Path, **overrides) -> ExperimentConfig:
        base = {
            "manifest": str(manifest),
            "out_dir": str(out_dir),
            "seed": 7,
            "scale_factor": 0.05,
            "workers": 4,
            "dnn_functionals": {"epochs": 4, "early_stop_patience": 3},
            "dnn_embedding": {"epochs": 4, "early_stop_patience": 3},
            "attention_rnn": {"epochs": 8, "early_stop_patience": 8},
            "lexical_svm": {"epochs": 5},
        }
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(base.get(key), dict):
                base[key].update(value)
            else:
                base[key] = value
        return config_from_dict(base)

    return build

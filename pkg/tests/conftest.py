import json

import pytest


def small_config(method="DDRE-DSKL", **extra):
    """A fast simulated experiment: short series, tiny network, few trials."""
    raw = {
        "schema_version": 1,
        "method": method,
        "data": {"simulate": {"dimension": 3, "series_length": 120, "change_point": 60, "trials": 4}},
        "seed": 5,
        "figures": False,
    }
    if method.startswith("DDRE"):
        raw["ddre"] = {"hidden_layers": [16, 16], "train": {"max_epochs": 5, "minibatch_size": 40}}
    elif method in ("KLIEP", "RULSIF"):
        raw["kernel"] = {"num_centers": 20, "sigma_multipliers": [0.5, 1.0, 2.0], "cv_folds": 2}
    else:
        raw["window"] = {"half_window": 15}
    raw.update(extra)
    return raw


@pytest.fixture
def write_config(tmp_path):
    def _write(raw, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(raw))
        return path

    return _write


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

"""Shared fixtures and the acceptance-suite terminal summary.

The toy dataset and the smoke-scale training config are session scoped:
the stage-1 overfit run is the most expensive fixture in the suite and
its checkpoint is reused by the stage-2 stability check.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from salcolor.config import RunConfig, run_config_from_dict
from salcolor.data import TrainingSample, load_samples, make_toy_dataset
from salcolor.training import Checkpoint, train_stage1

TOY_N = 8
TOY_SIZE = 64
TOY_DATA_SEED = 7
SMOKE_TRAIN_SEED = 3


def smoke_config_dict(output_dir: str) -> dict:
    """Toy-scale run config: quarter-width generator on 64px inputs."""
    return {
        "generator": {
            "input_size": TOY_SIZE,
            "width_multiplier": 0.25,
            "global_feature_channels": 128,
        },
        "critic": {"base_channels": 16},
        "perceptual": {"base_channels": 8},
        "training": {
            "stage1_epochs": 500,
            "stage2_epochs": 200,
            "seed": SMOKE_TRAIN_SEED,
            "pretrained_global": False,
        },
        "output_dir": output_dir,
    }


@pytest.fixture(scope="session")
def toy_data_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("toy_data")
    make_toy_dataset(TOY_N, TOY_SIZE, TOY_DATA_SEED, out)
    return out


@pytest.fixture(scope="session")
def toy_samples(toy_data_dir) -> list[TrainingSample]:
    from salcolor.data import build_index

    index = build_index(toy_data_dir / "color", toy_data_dir / "saliency")
    return load_samples(index, TOY_SIZE)


@pytest.fixture(scope="session")
def smoke_config(tmp_path_factory) -> RunConfig:
    out = tmp_path_factory.mktemp("smoke_run")
    return run_config_from_dict(smoke_config_dict(str(out)))


@dataclass
class SmokeRun:
    checkpoint: Checkpoint
    seconds: float
    config: RunConfig
    samples: list[TrainingSample]


@pytest.fixture(scope="session")
def stage1_smoke(smoke_config, toy_samples) -> SmokeRun:
    """The 500-step stage-1 overfit run; shared by the smoke criteria."""
    start = time.perf_counter()
    checkpoint = train_stage1(smoke_config, toy_samples)
    elapsed = time.perf_counter() - start
    return SmokeRun(
        checkpoint=checkpoint, seconds=elapsed, config=smoke_config, samples=toy_samples
    )


# ---------------------------------------------------------------------------
# acceptance summary: one pass/fail line per criterion

_ACCEPTANCE_FILE = "test_acceptance.py"
_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if _ACCEPTANCE_FILE not in str(report.nodeid):
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _acceptance_results[name] = report.outcome
    elif report.outcome != "passed":
        # setup/teardown errors count against the criterion too
        _acceptance_results[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_results):
        outcome = _acceptance_results[name]
        status = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
        label = name.removeprefix("test_").replace("_", " ")
        terminalreporter.write_line(f"{status}  {label}")

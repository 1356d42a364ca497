from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

from autoform.corpus import dump_dataset
from autoform.instrumentation import MetricsWriter, RunInstrumentation
from autoform.pipeline import RunConfig
from autoform.toydata import build_toy_lemma_map, build_toy_records
from autoform.verifier import Project, SimulatedVerifier, Verifier


class EventSink:
    """Minimal metrics stand-in collecting events in memory."""

    def __init__(self):
        self.events = []

    def emit(self, event, data):
        self.events.append({"event": event, "data": data})

    def count(self, label):
        return sum(1 for e in self.events if e["event"] == label)


@pytest.fixture
def sink():
    return EventSink()


@pytest.fixture
def project(tmp_path):
    return Project(tmp_path / "project")


@pytest.fixture
def sim_verifier(sink):
    return Verifier(SimulatedVerifier(), metrics=sink)


@pytest.fixture
def toy_records():
    return build_toy_records()


@pytest.fixture
def toy_lemma_map():
    return build_toy_lemma_map()


@pytest.fixture
def toy_config(tmp_path, toy_records):
    dataset = tmp_path / "data" / "toy.json"
    dataset.parent.mkdir(parents=True, exist_ok=True)
    dump_dataset(toy_records, dataset)
    return RunConfig(
        dataset=str(dataset),
        project=str(tmp_path / "project"),
        runs_dir=str(tmp_path / "runs"),
        operators="toy",
        adapter="simulated",
    )


@pytest.fixture
def instrumentation(tmp_path):
    metrics = MetricsWriter(tmp_path / "runs" / "metrics_test.jsonl", "test_stage0_run")
    metrics.run_start({"pipeline": "test"})
    return RunInstrumentation(metrics=metrics)


def tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(root.rglob("*.lean")):
        h.update(str(f.relative_to(root)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()

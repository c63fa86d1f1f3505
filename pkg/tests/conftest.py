import sys
from datetime import datetime, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from foodgap import synth  # noqa: E402
from foodgap.geo import GeoPoint  # noqa: E402
from foodgap.ingest import Post  # noqa: E402
from foodgap.vocab import Vocabulary  # noqa: E402

WORKED_MACHINE = ("burger", "chicken", "fries", "chips", "ketchup", "milkshake")


def make_post(pid="p1", user="u1", human=(), machine=(), county="01001", lon=-100.5, lat=40.5):
    machine = tuple(m if isinstance(m, tuple) else (m, None) for m in machine)
    return Post(pid, user, datetime(2016, 1, 1, tzinfo=timezone.utc), GeoPoint(lon, lat),
                tuple(human), machine, county)


@pytest.fixture
def worked_vocab():
    return Vocabulary.from_texts(WORKED_MACHINE + ("pizza", "sushi"))


@pytest.fixture
def worked_post():
    return make_post(human=("foodie", "hungry", "yummy", "burger"), machine=WORKED_MACHINE)


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """A small written synthetic dataset with one gap and one subjective plant."""
    plan = synth.SynthPlan(
        seed=7, counties=30, users_per_county=6, images_per_user=4, vocab_size=12,
        effects=(synth.PlantedEffect("tagx", "AdultObesity", "gap", 0.7, 0.1),),
        subjective=(synth.SubjectivePlant("healthy", "dish003", "Smokers", 0.5),))
    out = tmp_path_factory.mktemp("synth")
    data = synth.generate(plan, out)
    return data


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, ok, elapsed, budget = results[n]
        limit = "no time budget" if budget is None else f"budget {budget:g}s"
        terminalreporter.write_line(
            f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({elapsed:.2f}s, {limit})")

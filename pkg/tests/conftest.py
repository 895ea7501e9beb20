import os
import shutil
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from mutforge.engine import RunConfig, run_campaign
from mutforge.mutant_store import open_store
from mutforge.operator_catalog import builtin_catalog

DATA = Path(__file__).resolve().parent.parent / "src" / "mutforge" / "data"
TOY_CORPUS = DATA / "toy_corpus"
ALIVE_FIXTURE = DATA / "alive_fixture"

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

needs_cc = pytest.mark.skipif(shutil.which("cc") is None, reason="no C compiler")
needs_cxx = pytest.mark.skipif(shutil.which("c++") is None, reason="no C++ compiler")


def toy_config(tmp_path: Path, workers: int = 4) -> RunConfig:
    return RunConfig(
        corpus_root=TOY_CORPUS,
        build_command=["sh", "build.sh"],
        test_command=["sh", "test.sh"],
        timeout=5,
        workers=workers,
        workspace_root=tmp_path / "ws",
    )


@pytest.fixture(scope="session")
def toy_campaign(tmp_path_factory):
    """One completed campaign over the toy corpus, shared across tests."""
    tmp = tmp_path_factory.mktemp("toy")
    events = []
    with open_store(tmp / "store") as store:
        summary = run_campaign(toy_config(tmp), store, builtin_catalog(),
                               progress=lambda m, s, e: events.append((m, s, e)))
    return tmp / "store", summary, events

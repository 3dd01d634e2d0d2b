import os
from pathlib import Path

import numpy as np
import pytest

from refgame.data import (FILE_BYTES, RECORD_BYTES, RECORDS_PER_FILE,
                          TEST_FILE, TRAIN_FILES)


def pytest_addoption(parser):
    parser.addoption("--cifar-dir", default=None,
                     help="directory with the real CIFAR-10 binary batches")


def cifar_dir_or_none() -> Path | None:
    """Real CIFAR-10 location: $REFGAME_CIFAR10 or ./data, when present."""
    candidates = []
    env = os.environ.get("REFGAME_CIFAR10")
    if env:
        candidates.append(Path(env))
    root = Path(__file__).resolve().parent.parent
    candidates += [root / "data", root / "data" / "cifar-10-batches-bin"]
    for cand in candidates:
        for probe in (cand, cand / "cifar-10-batches-bin"):
            if (probe / "data_batch_1.bin").is_file():
                return cand
    return None


@pytest.fixture(scope="session")
def cifar_dir():
    path = cifar_dir_or_none()
    if path is None:
        pytest.skip("CIFAR-10 binaries not found (set REFGAME_CIFAR10 or "
                    "place cifar-10-batches-bin under ./data)")
    return path


def write_fake_cifar_file(path: Path, rng: np.random.Generator) -> None:
    records = rng.integers(0, 256, size=(RECORDS_PER_FILE, RECORD_BYTES),
                           dtype=np.uint8)
    records[:, 0] = np.arange(RECORDS_PER_FILE) % 10
    assert records.nbytes == FILE_BYTES
    path.write_bytes(records.tobytes())


@pytest.fixture(scope="session")
def fake_cifar_dir(tmp_path_factory) -> Path:
    """A directory of random but format-valid CIFAR-10 binary batches."""
    root = tmp_path_factory.mktemp("fake-cifar") / "cifar-10-batches-bin"
    root.mkdir()
    rng = np.random.default_rng(1234)
    for name in (*TRAIN_FILES, TEST_FILE):
        write_fake_cifar_file(root / name, rng)
    return root.parent

import os
from pathlib import Path

import pytest

MNIST_DIR = Path(os.environ.get("MNIST_DIR", "/root/data/mnist"))


@pytest.fixture(scope="session")
def mnist_dir():
    if not (MNIST_DIR / "train-images-idx3-ubyte").exists() and not (MNIST_DIR / "train-images-idx3-ubyte.gz").exists():
        pytest.skip(f"canonical MNIST files not in {MNIST_DIR}")
    return MNIST_DIR


@pytest.fixture(scope="session")
def models():
    from approxmram.energy import default_models

    return default_models()

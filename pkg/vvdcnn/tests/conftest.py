import subprocess
import sys

import numpy as np
import pytest


def run_lab(*args: str) -> None:
    """Drive the simulator package through its CLI only."""
    cmd = [sys.executable, "-m", "vvdlab.cli", *args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"vvdlab {' '.join(args)} failed:\n{proc.stderr}")


@pytest.fixture(scope="session")
def scene_corpus(tmp_path_factory):
    """Three small scene-mode trace sets with depth sidecars."""
    root = tmp_path_factory.mktemp("corpus")
    run_lab(
        "generate",
        "--out", str(root),
        "--sets", "3",
        "--packets", "12",
        "--seed", "41",
        "--mode", "scene",
        "--snr-db", "30",
        "--spc", "2",
    )
    return root


@pytest.fixture()
def rng():
    return np.random.default_rng(7)

import os
import shutil
import subprocess
import sys

import pytest

FIXDIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if FIXDIR not in sys.path:
    sys.path.insert(0, FIXDIR)


@pytest.fixture(scope="session")
def build_dir():
    """Build every fixture once; skip the suite on toolchain-less hosts."""
    if shutil.which("cc") is None and shutil.which("gcc") is None:
        pytest.skip("no C toolchain on this host")
    result = subprocess.run(
        ["make", "-C", FIXDIR], capture_output=True, text=True)
    if result.returncode != 0:
        pytest.fail(f"fixture build failed:\n{result.stdout}\n{result.stderr}")
    return os.path.join(FIXDIR, "build")

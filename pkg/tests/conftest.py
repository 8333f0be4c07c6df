import pytest

from probes import (
    LAZY_FLAGS,
    LAZY_PROBE_C,
    RAW_FLAGS,
    RAW_PROBE_C,
    build_probe,
    find_cc,
)


@pytest.fixture(scope="session")
def cc():
    path = find_cc()
    if path is None:
        pytest.skip("no C compiler on this host")
    return path


@pytest.fixture(scope="session")
def lazy_probe_bin(cc, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("probes") / "lazy_probe")
    return build_probe(cc, LAZY_PROBE_C, out, LAZY_FLAGS)


@pytest.fixture(scope="session")
def raw_probe_bin(cc, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("probes") / "raw_probe")
    return build_probe(cc, RAW_PROBE_C, out, RAW_FLAGS)

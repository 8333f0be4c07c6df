"""Global system state: OS identity, package inventory, critical-file hashes."""

from __future__ import annotations

import glob
import hashlib
import os
import shutil
import subprocess
from dataclasses import dataclass

from .graph import MeasurementGraph

OS_RELEASE = "/etc/os-release"
DPKG_STATUS = "/var/lib/dpkg/status"
RPM_DB_DIR = "/var/lib/rpm"

# Which files count as critical is a judgment call; this default covers the
# dynamic loader machinery (preload/caching are classic persistence points),
# init, and the common shells.  Policy manifests override it.
DEFAULT_MANIFEST = (
    "/lib/x86_64-linux-gnu/ld-linux-x86-64.so.2",
    "/lib64/ld-linux-x86-64.so.2",
    "/etc/ld.so.preload",
    "/etc/ld.so.cache",
    "/sbin/init",
    "/usr/lib/systemd/systemd",
    "/bin/sh",
    "/bin/bash",
    "/bin/dash",
)


@dataclass
class SystemInfo:
    os_name: str
    os_version: str
    kernel_release: str
    architecture: str
    hostname: str


@dataclass
class PackageRecord:
    name: str
    version: str
    architecture: str
    manager: str


@dataclass
class FileMeasurement:
    path: str  # canonical absolute
    digest: str
    size_bytes: int
    mode: int
    uid: int
    gid: int
    mtime: int
    device: str
    inode: int


@dataclass
class FileError:
    path: str
    reason: str  # NotFound | PermissionDenied | <errno name>


def _parse_os_release(path=OS_RELEASE):
    out = {}
    try:
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#") or "=" not in line:
                    continue
                key, _, value = line.partition("=")
                out[key] = value.strip().strip('"').strip("'")
    except OSError:
        pass
    return out


def collect_system_info():
    """Identify the OS; missing fields come back empty with a warning."""
    warnings = []
    release = _parse_os_release()
    uts = os.uname()
    info = SystemInfo(
        os_name=release.get("NAME", ""),
        os_version=release.get("VERSION_ID", release.get("VERSION", "")),
        kernel_release=uts.release,
        architecture=uts.machine,
        hostname=uts.nodename,
    )
    for name in ("os_name", "os_version", "kernel_release", "architecture", "hostname"):
        if not getattr(info, name):
            warnings.append(f"system info field {name} unavailable")
    return info, warnings


def _parse_dpkg_status(path=DPKG_STATUS):
    records = []
    name = version = arch = status = None

    def flush():
        if name and version and status == "install ok installed":
            records.append(PackageRecord(name, version, arch or "", "dpkg"))

    with open(path, encoding="utf-8", errors="replace") as f:
        for line in f:
            if line == "\n":
                flush()
                name = version = arch = status = None
                continue
            if line.startswith("Package: "):
                name = line[9:].strip()
            elif line.startswith("Version: "):
                version = line[9:].strip()
            elif line.startswith("Architecture: "):
                arch = line[14:].strip()
            elif line.startswith("Status: "):
                status = line[8:].strip()
    flush()
    return records


def _rpm_inventory():
    proc = subprocess.run(
        ["rpm", "-qa", "--queryformat", "%{NAME}\t%{VERSION}-%{RELEASE}\t%{ARCH}\n"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    if proc.returncode != 0:
        raise OSError(f"rpm query failed: {proc.stderr.strip()[:200]}")
    records = []
    for line in proc.stdout.splitlines():
        parts = line.split("\t")
        if len(parts) == 3:
            records.append(PackageRecord(parts[0], parts[1], parts[2], "rpm"))
    return records


def inventory_packages():
    """List installed packages from whichever manager database exists.

    The dpkg status file is parsed directly (stable text format, works
    without a shell); rpm's database is not, so that backend queries the
    rpm binary.
    """
    warnings = []
    if os.path.exists(DPKG_STATUS):
        try:
            return _parse_dpkg_status(), warnings
        except OSError as exc:
            warnings.append(f"dpkg status unreadable: {exc}")
    if os.path.isdir(RPM_DB_DIR) and shutil.which("rpm"):
        try:
            return _rpm_inventory(), warnings
        except (OSError, subprocess.SubprocessError) as exc:
            warnings.append(f"rpm inventory failed: {exc}")
    warnings.append("no supported package manager database found")
    return [], warnings


def _device_str(st_dev):
    return f"{os.major(st_dev):02x}:{os.minor(st_dev):02x}"


def _hash_one(path, algo):
    h = hashlib.new(algo)
    with open(path, "rb") as f:
        while True:
            chunk = f.read(1 << 20)
            if not chunk:
                break
            h.update(chunk)
    return h.hexdigest()


def expand_manifest(patterns):
    """Expand manifest patterns to concrete paths.

    Plain paths pass through even when absent (so missing critical files
    surface as NotFound records); glob patterns contribute only matches.
    """
    paths = []
    seen = set()
    for pattern in patterns:
        if glob.has_magic(pattern):
            matches = sorted(glob.glob(pattern))
        else:
            matches = [pattern]
        for p in matches:
            if p not in seen:
                seen.add(p)
                paths.append(p)
    return paths


def hash_files(patterns, algo="sha256"):
    """Measure each manifest file; unreadable entries become error records."""
    measurements = []
    errors = []
    seen_real = set()
    for path in expand_manifest(patterns):
        real = os.path.realpath(path)
        if real in seen_real:
            continue
        try:
            st = os.stat(real)
            if not os.path.isfile(real):
                continue  # directories in a glob expansion are not content
            digest = _hash_one(real, algo)
        except FileNotFoundError:
            seen_real.add(real)
            errors.append(FileError(path=real, reason="NotFound"))
            continue
        except PermissionError:
            seen_real.add(real)
            errors.append(FileError(path=real, reason="PermissionDenied"))
            continue
        except OSError as exc:
            seen_real.add(real)
            errors.append(FileError(path=real, reason=exc.__class__.__name__))
            continue
        seen_real.add(real)
        measurements.append(
            FileMeasurement(
                path=real,
                digest=digest,
                size_bytes=st.st_size,
                mode=st.st_mode,
                uid=st.st_uid,
                gid=st.st_gid,
                mtime=int(st.st_mtime),
                device=_device_str(st.st_dev),
                inode=st.st_ino,
            )
        )
    return measurements, errors


def read_manifest(path):
    """Manifest file: one pattern per line, # starts a comment."""
    patterns = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                patterns.append(line)
    return patterns


# -- partial graph builders -------------------------------------------------


def build_system_partial(meta) -> MeasurementGraph:
    """SystemInfo node plus package inventory."""
    g = MeasurementGraph(meta)
    info, warnings = collect_system_info()
    sys_id = g.upsert_node(
        "SystemInfo",
        {
            "hostname": info.hostname or meta.host,
            "os_name": info.os_name,
            "os_version": info.os_version,
            "kernel_release": info.kernel_release,
            "architecture": info.architecture,
        },
    )
    packages, pkg_warnings = inventory_packages()
    for rec in packages:
        pkg_id = g.upsert_node(
            "Package",
            {
                "name": rec.name,
                "version": rec.version,
                "arch": rec.architecture,
                "manager": rec.manager,
            },
        )
        g.add_edge(sys_id, "installed", pkg_id)
    meta.warnings.extend(warnings + pkg_warnings)
    return g


def build_hashes_partial(meta, patterns=None) -> MeasurementGraph:
    """File nodes with digests for the configured manifest."""
    g = MeasurementGraph(meta)
    sys_id = g.upsert_node("SystemInfo", {"hostname": meta.host})
    measurements, errors = hash_files(
        DEFAULT_MANIFEST if patterns is None else patterns, meta.hash_algorithm
    )
    for m in measurements:
        fid = g.upsert_node(
            "File",
            {
                "path": m.path,
                "device": m.device,
                "inode": m.inode,
                "digest": m.digest,
                "size_bytes": m.size_bytes,
                "mode": m.mode,
                "uid": m.uid,
                "gid": m.gid,
                "mtime": m.mtime,
            },
        )
        g.add_edge(sys_id, "measured", fid)
    for err in errors:
        meta.warnings.append(f"hash skipped {err.path}: {err.reason}")
    return g

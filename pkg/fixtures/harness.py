"""Lifecycle driver for the implant-technique fixtures.

Each fixture is a small C program (see src/) that establishes one
observable anomaly and then idles. The protocol is line-based over
stdin/stdout: the fixture announces READY once its initial state is
up, accepts single-word commands, and two-phase fixtures answer a
``trigger`` command with INFECTED once the anomaly is in place. A
fixture that cannot work on the running kernel announces UNSUPPORTED
with a reason instead.

This module owns spawning, readiness, triggering, and teardown. It
deliberately knows nothing about the measurement tooling; tests that
want to verify fixture behavior read /proc themselves.
"""

import dataclasses
import itertools
import os
import select
import shutil
import signal
import subprocess
import tempfile

READY_TIMEOUT = 2.0
EXIT_TIMEOUT = 2.0

PHASE_STARTED = "started"
PHASE_READY = "ready"
PHASE_INFECTED = "infected"
PHASE_DONE = "done"


class FixtureError(Exception):
    """Base for everything the harness raises."""


class BuildMissing(FixtureError):
    """Fixture binary not found; run make first."""


class SpawnFailed(FixtureError):
    """Fixture process died or never became ready."""


class EnvironmentUnsupported(FixtureError):
    """The running kernel or its configuration forbids the technique."""


class ProtocolViolation(FixtureError):
    """Command sent in the wrong phase or answered out of protocol."""


# technique -> (binary, fixed argv tail, supports trigger, paired)
_TECHNIQUES = {
    "benign_control": ("benign_control", (), False, False),
    "wx_mapping": ("wx_mapping", (), False, False),
    "anon_exec_thread": ("anon_exec_thread", (), False, False),
    "ns_child": ("ns_child", (), False, False),
    "dlopen_inject": ("dlopen_inject", (), True, False),
    "got_hook": ("got_hook", (), True, False),
    "plt_hook": ("plt_hook", (), True, False),
    "text_modify": ("text_modify", (), True, False),
    "fd_pass_pair": ("fd_pass", (), True, True),
}

_TEXT_VARIANTS = ("patch", "remap")

_pair_counter = itertools.count()


def default_build_dir():
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), "build")


class _LineReader:
    """Line assembly over a raw pipe with a deadline per line."""

    def __init__(self, fd):
        self._fd = fd
        self._buf = b""
        self._eof = False

    def read_line(self, timeout):
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = self._buf[:nl]
                self._buf = self._buf[nl + 1:]
                return line.decode("utf-8", "replace").strip()
            if self._eof:
                return None
            ready, _, _ = select.select([self._fd], [], [], timeout)
            if not ready:
                raise TimeoutError
            chunk = os.read(self._fd, 4096)
            if not chunk:
                self._eof = True
            else:
                self._buf += chunk


@dataclasses.dataclass
class FixtureHandle:
    technique: str
    pids: list
    ready_channel: object  # _LineReader of the primary process
    phase: str
    payload_path: str = None
    _procs: list = dataclasses.field(default_factory=list)
    _readers: list = dataclasses.field(default_factory=list)
    _tmpdir: str = None


def _preexec(uid):
    def fn():
        os.setsid()  # own process group, so forced teardown can sweep
        if uid is not None:
            os.setuid(uid)
    return fn


def _spawn_one(argv, cwd, uid):
    try:
        return subprocess.Popen(
            argv,
            cwd=cwd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
            preexec_fn=_preexec(uid),
        )
    except OSError as exc:
        raise SpawnFailed(f"cannot start {argv[0]}: {exc}") from exc


def _await_line(handle, reader, want, timeout, *, during):
    err_type = SpawnFailed if during == "spawn" else ProtocolViolation
    try:
        line = reader.read_line(timeout)
    except TimeoutError:
        _force_down(handle)
        raise err_type(f"no {want} within {timeout:.0f}s") from None
    if line == want:
        return
    _force_down(handle)
    if line is None:
        raise err_type(f"fixture exited before {want}")
    if line.startswith("UNSUPPORTED"):
        raise EnvironmentUnsupported(line[len("UNSUPPORTED"):].strip() or "unsupported")
    raise err_type(f"fixture answered {line!r}, wanted {want}")


def spawn_fixture(technique, params=None, uid=None, build_dir=None):
    """Start a fixture and wait for READY.

    params: technique-specific options. text_modify takes
    {"variant": "patch"|"remap"} (default patch).
    uid: run the fixture processes under this uid; binaries are staged
    to a world-readable directory so the target user can execute them.
    """
    if technique not in _TECHNIQUES:
        raise FixtureError(f"unknown technique {technique!r}")
    binary, tail, triggers, paired = _TECHNIQUES[technique]
    params = dict(params or {})

    build_dir = build_dir or default_build_dir()
    src = os.path.join(build_dir, binary)
    if not os.path.isfile(src):
        raise BuildMissing(f"{src} not built; run make in the fixtures directory")

    tmpdir = None
    payload = None
    args = list(tail)

    if technique == "text_modify":
        variant = params.pop("variant", "patch")
        if variant not in _TEXT_VARIANTS:
            raise FixtureError(f"unknown text_modify variant {variant!r}")
        args.append(variant)
    if params.pop("variant", None) is not None:
        raise FixtureError(f"{technique} takes no variant")
    if params:
        raise FixtureError(f"unknown params {sorted(params)}")

    needs_staging = uid is not None or technique == "dlopen_inject"
    if needs_staging:
        tmpdir = tempfile.mkdtemp(prefix="fixture-")
        os.chmod(tmpdir, 0o755)
    if uid is not None:
        staged = os.path.join(tmpdir, binary)
        shutil.copy2(src, staged)
        os.chmod(staged, 0o755)
        src = staged
    if technique == "dlopen_inject":
        # per-handle payload copy: teardown owns its removal
        built = os.path.join(build_dir, "payload.so")
        if not os.path.isfile(built):
            shutil.rmtree(tmpdir, ignore_errors=True)
            raise BuildMissing(f"{built} not built; run make in the fixtures directory")
        payload = os.path.join(tmpdir, "payload.so")
        shutil.copy2(built, payload)
        os.chmod(payload, 0o755)
        args.append(payload)

    handle = FixtureHandle(
        technique=technique,
        pids=[],
        ready_channel=None,
        phase=PHASE_STARTED,
        payload_path=payload,
        _tmpdir=tmpdir,
    )

    cwd = tmpdir or build_dir
    try:
        if paired:
            name = f"fixpass-{os.getpid()}-{next(_pair_counter)}"
            for role in ("sender", "receiver"):
                proc = _spawn_one([src, role, name], cwd, uid)
                handle._procs.append(proc)
                handle._readers.append(_LineReader(proc.stdout.fileno()))
        else:
            proc = _spawn_one([src] + args, cwd, uid)
            handle._procs.append(proc)
            handle._readers.append(_LineReader(proc.stdout.fileno()))
    except SpawnFailed:
        _force_down(handle)
        raise

    handle.pids = [p.pid for p in handle._procs]
    handle.ready_channel = handle._readers[0]
    for reader in handle._readers:
        _await_line(handle, reader, "READY", READY_TIMEOUT, during="spawn")
    handle.phase = PHASE_READY
    return handle


def trigger(handle):
    """Move a two-phase fixture from ready to infected."""
    _, _, triggers, _ = _TECHNIQUES[handle.technique]
    if not triggers:
        raise ProtocolViolation(f"{handle.technique} has no trigger phase")
    if handle.phase != PHASE_READY:
        raise ProtocolViolation(f"trigger in phase {handle.phase}")
    try:
        handle._procs[0].stdin.write(b"trigger\n")
    except (OSError, ValueError) as exc:
        _force_down(handle)
        raise ProtocolViolation(f"fixture pipe closed: {exc}") from exc
    # the paired fixture announces on both sides; await every process
    for reader in handle._readers:
        _await_line(handle, reader, "INFECTED", READY_TIMEOUT, during="trigger")
    handle.phase = PHASE_INFECTED


def _force_down(handle):
    for proc in handle._procs:
        if proc.poll() is None:
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                proc.kill()
        proc.wait()
    if handle._tmpdir:
        shutil.rmtree(handle._tmpdir, ignore_errors=True)
        handle._tmpdir = None
    handle.phase = PHASE_DONE


def teardown(handle):
    """Stop the fixture processes and remove staged files. Idempotent."""
    if handle.phase == PHASE_DONE:
        return
    for proc in handle._procs:
        if proc.poll() is None:
            try:
                proc.stdin.write(b"exit\n")
            except (OSError, ValueError):
                pass
        try:
            proc.wait(EXIT_TIMEOUT)
        except subprocess.TimeoutExpired:
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                proc.kill()
            proc.wait()
    if handle._tmpdir:
        shutil.rmtree(handle._tmpdir, ignore_errors=True)
        handle._tmpdir = None
    handle.phase = PHASE_DONE

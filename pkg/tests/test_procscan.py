"""Process collector tests against live /proc state."""

import mmap
import os
import shutil
import socket
import subprocess
import sys
import time

import pytest

from uspect import procscan
from uspect.errors import ProcUnavailable
from probes import read_maps

HAVE_UNSHARE = shutil.which("unshare") is not None


def test_read_process_self():
    rec = procscan.read_process(os.getpid())
    assert rec.pid == os.getpid()
    assert rec.ppid == os.getppid()
    assert rec.uid == os.getuid()
    assert rec.gid == os.getgid()
    assert rec.start_time > 0
    assert rec.exe_path == os.path.realpath(sys.executable)
    assert not rec.kernel_thread
    assert not rec.exe_deleted
    assert rec.cmdline and "python" in rec.cmdline[0]
    assert rec.partial == []


def test_read_process_vanished():
    # pid 0 never exists in /proc
    assert procscan.read_process(0) is None


def test_comm_with_spaces_and_parens(tmp_path):
    victim = tmp_path / "we) ird (nm"
    shutil.copy("/bin/sleep", victim)
    victim.chmod(0o755)
    proc = subprocess.Popen([str(victim), "30"])
    try:
        time.sleep(0.2)
        rec = procscan.read_process(proc.pid)
        assert rec is not None
        assert rec.comm == "we) ird (nm"
        assert rec.ppid == os.getpid()
        assert rec.exe_path == str(victim)
    finally:
        proc.kill()
        proc.wait()


def test_list_pids_contains_self_and_init():
    pids = procscan.list_pids()
    assert os.getpid() in pids
    assert 1 in pids
    assert pids == sorted(pids)


def test_list_pids_bad_root(tmp_path):
    with pytest.raises(ProcUnavailable):
        procscan.list_pids(str(tmp_path / "missing"))


def test_collect_mappings_matches_independent_parse():
    ours = procscan.collect_mappings(os.getpid())
    oracle = read_maps(os.getpid())
    assert len(ours) == len(oracle)
    for got, want in zip(ours, oracle):
        assert (got.start, got.end, got.perms, got.file_offset) == (
            want.start,
            want.end,
            want.perms,
            want.file_offset,
        )
        assert (got.inode, got.path, got.backing, got.deleted) == (
            want.inode,
            want.path,
            want.backing,
            want.deleted,
        )


def test_mapping_invariants():
    maps = procscan.collect_mappings(os.getpid())
    page = os.sysconf("SC_PAGE_SIZE")
    prev_end = 0
    for m in maps:
        assert m.start < m.end
        assert (m.end - m.start) % page == 0
        assert m.start >= prev_end, "mappings overlap or are unsorted"
        prev_end = m.start
        prev_end = m.end
        assert len(m.perms) == 4


def test_mapping_taxonomy_live():
    maps = procscan.collect_mappings(os.getpid())
    by_backing = {}
    for m in maps:
        by_backing.setdefault(m.backing, []).append(m)
    exe = os.path.realpath(sys.executable)
    assert any(m.path == exe for m in by_backing["file"])
    assert any(m.path == "[vdso]" for m in by_backing.get("special", []))
    assert any(m.path in ("[heap]", "[stack]", "") for m in by_backing["anon"])


def test_memfd_mapping_is_anonymous():
    fd = os.memfd_create("probe-region")
    try:
        os.ftruncate(fd, 4096)
        with mmap.mmap(fd, 4096) as region:
            maps = procscan.collect_mappings(os.getpid())
            hits = [m for m in maps if m.path.startswith("/memfd:probe-region")]
            assert hits
            assert all(m.backing == "anon" for m in hits)
            region[0] = 1
    finally:
        os.close(fd)


def test_deleted_file_mapping(tmp_path):
    blob = tmp_path / "gone.bin"
    blob.write_bytes(b"\0" * 8192)
    fd = os.open(blob, os.O_RDWR)
    try:
        with mmap.mmap(fd, 8192) as region:
            os.unlink(blob)
            maps = procscan.collect_mappings(os.getpid())
            hits = [m for m in maps if m.path == str(blob)]
            assert hits
            assert all(m.deleted and m.backing == "file" for m in hits)
            region[0] = 1
    finally:
        os.close(fd)


def test_kernel_thread_detection():
    candidates = []
    for pid in procscan.list_pids():
        rec = procscan.read_process(pid)
        if rec is not None and rec.exe_path is None and "exe" not in rec.partial:
            candidates.append(rec)
    if not candidates:
        pytest.skip("no kernel threads visible in this pid namespace")
    for rec in candidates:
        assert rec.kernel_thread
        assert procscan.collect_mappings(rec.pid) == []


def test_namespace_collection_self():
    records, warnings = procscan.collect_namespaces([os.getpid()])
    types = {r.ns_type for r in records}
    assert types <= set(procscan.NS_TYPES)
    assert {"pid", "mnt", "net", "uts"} <= types
    for r in records:
        assert r.inode > 0
        assert r.member_pids == [os.getpid()]


def test_namespace_partition_property():
    pids = [p for p in procscan.list_pids()[:30]]
    records, _ = procscan.collect_namespaces(pids)
    per_type = {}
    for r in records:
        per_type.setdefault(r.ns_type, []).extend(r.member_pids)
    for ns_type, members in per_type.items():
        # each measured pid appears in exactly one namespace per type
        assert len(members) == len(set(members))


@pytest.mark.skipif(not HAVE_UNSHARE, reason="unshare tool missing")
def test_new_pid_namespace_is_distinct():
    proc = subprocess.Popen(
        ["unshare", "--pid", "--fork", "sleep", "30"],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        child = None
        for _ in range(100):
            time.sleep(0.05)
            try:
                with open(f"/proc/{proc.pid}/task/{proc.pid}/children") as f:
                    kids = f.read().split()
                if kids:
                    child = int(kids[0])
                    break
            except OSError:
                break
        if child is None:
            pytest.skip("pid namespace creation unavailable here")
        records, _ = procscan.collect_namespaces([os.getpid(), child])
        pid_ns = [r for r in records if r.ns_type == "pid"]
        assert len(pid_ns) == 2
        inodes = {r.inode: r.member_pids for r in pid_ns}
        assert sorted(sum(inodes.values(), [])) == sorted([os.getpid(), child])
    finally:
        proc.kill()
        proc.wait()


def test_tcp_listener_in_socket_table():
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind(("127.0.0.1", 0))
        s.listen(1)
        port = s.getsockname()[1]
        inode = os.fstat(s.fileno()).st_ino
        tables = procscan.read_socket_tables()
        rec = tables[inode]
        assert rec.family == "inet"
        assert rec.protocol == "tcp"
        assert rec.state == "listen"
        assert rec.local_addr == "127.0.0.1"
        assert rec.local_port == port


def test_tcp6_and_udp_sockets_in_tables():
    with socket.socket(socket.AF_INET6, socket.SOCK_STREAM) as s6, socket.socket(
        socket.AF_INET, socket.SOCK_DGRAM
    ) as u4:
        s6.bind(("::1", 0))
        s6.listen(1)
        u4.bind(("127.0.0.1", 0))
        tables = procscan.read_socket_tables()
        rec6 = tables[os.fstat(s6.fileno()).st_ino]
        assert (rec6.family, rec6.protocol, rec6.state) == ("inet6", "tcp", "listen")
        assert rec6.local_addr == "::1"
        recu = tables[os.fstat(u4.fileno()).st_ino]
        assert (recu.family, recu.protocol) == ("inet", "udp")
        assert recu.local_port == u4.getsockname()[1]


def test_unix_socket_in_table(tmp_path):
    path = str(tmp_path / "ctl.sock")
    with socket.socket(socket.AF_UNIX, socket.SOCK_STREAM) as s:
        s.bind(path)
        s.listen(1)
        tables = procscan.read_socket_tables()
        rec = tables[os.fstat(s.fileno()).st_ino]
        assert rec.family == "unix"
        assert rec.protocol == "stream"
        assert rec.local_addr == path


def test_connected_pair_states():
    a, b = socket.socketpair(socket.AF_UNIX, socket.SOCK_STREAM)
    with a, b:
        tables = procscan.read_socket_tables()
        for fd in (a, b):
            rec = tables[os.fstat(fd.fileno()).st_ino]
            assert rec.state == "connected"


def test_collect_fds_kinds(tmp_path):
    blob = tmp_path / "held.txt"
    blob.write_text("x")
    f = open(blob)
    d = os.open(tmp_path, os.O_RDONLY)
    null = os.open("/dev/null", os.O_WRONLY)
    rpipe, wpipe = os.pipe()
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    try:
        tables = procscan.read_socket_tables()
        records, warnings = procscan.collect_fds(os.getpid(), tables)
        assert warnings == []
        by_fd = {r.fd: r for r in records}
        assert by_fd[f.fileno()].kind == "regular"
        assert by_fd[f.fileno()].target_path == str(blob)
        assert by_fd[d].kind == "directory"
        assert by_fd[null].kind == "device"
        assert by_fd[null].target_path == "/dev/null"
        assert by_fd[rpipe].kind == "pipe" and by_fd[wpipe].kind == "pipe"
        sock_rec = by_fd[listener.fileno()]
        assert sock_rec.kind == "socket"
        assert sock_rec.socket.state == "listen"
        assert sock_rec.socket.socket_inode == os.fstat(listener.fileno()).st_ino
    finally:
        f.close()
        os.close(d)
        os.close(null)
        os.close(rpipe)
        os.close(wpipe)
        listener.close()


def test_collect_fds_unjoined_socket_kept():
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        records, _ = procscan.collect_fds(os.getpid(), socket_tables={})
        hits = [r for r in records if r.kind == "socket" and r.socket.family == "unknown"]
        assert any(r.socket.socket_inode == os.fstat(s.fileno()).st_ino for r in hits)


def test_scope_includes():
    rec = procscan.ProcessRecord(
        pid=5, ppid=1, uid=1000, gid=1000, start_time=1, comm="x", kernel_thread=False
    )
    root = procscan.ProcessRecord(
        pid=6, ppid=1, uid=0, gid=0, start_time=1, comm="y", kernel_thread=False
    )
    assert procscan.scope_includes("all", rec)
    assert not procscan.scope_includes("root_only", rec)
    assert procscan.scope_includes("root_only", root)
    assert procscan.scope_includes("uid:1000", rec)
    assert procscan.scope_includes("uid:1000,0", root)
    assert not procscan.scope_includes("uid:7", rec)
    with pytest.raises(ValueError):
        procscan.scope_includes("bogus", rec)


def test_snapshot_processes_live():
    records, vanished, warnings = procscan.snapshot_processes("all")
    pids = {r.pid for r in records}
    assert os.getpid() in pids
    assert 1 in pids
    assert vanished >= 0
    roots = [r for r in records if r.ppid not in pids]
    assert roots, "at least the init process has no measured parent"
    subset, _, _ = procscan.snapshot_processes("root_only")
    assert {r.pid for r in subset} <= pids
    assert all(r.uid == 0 for r in subset)

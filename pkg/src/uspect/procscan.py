"""Process, mapping, namespace, and file-descriptor readers over /proc.

Everything here returns plain records; graph assembly lives in the
orchestrator.  The /proc walk is inherently racy, so each reader tolerates
entries vanishing mid-read and reports what it could not see instead of
raising.
"""

from __future__ import annotations

import os
import socket
import stat as statmod
import struct
from dataclasses import dataclass, field

from .errors import ProcUnavailable

PROC = "/proc"

# Kernel-synthesized regions; no disk backing exists, so hash rules skip them.
SPECIAL_NAMES = frozenset({"[vdso]", "[vsyscall]", "[vvar]", "[vvar_vclock]", "[vectors]"})

NS_TYPES = ("cgroup", "ipc", "mnt", "net", "pid", "user", "uts")

BACKING_FILE = "file"
BACKING_ANON = "anon"
BACKING_SPECIAL = "special"

TCP_STATES = {
    1: "established",
    2: "syn_sent",
    3: "syn_recv",
    4: "fin_wait1",
    5: "fin_wait2",
    6: "time_wait",
    7: "close",
    8: "close_wait",
    9: "last_ack",
    10: "listen",
    11: "closing",
    12: "new_syn_recv",
}
UNIX_STATES = {1: "unconnected", 2: "connecting", 3: "connected", 4: "disconnecting"}
UNIX_TYPES = {1: "stream", 2: "dgram", 5: "seqpacket"}


@dataclass
class ProcessRecord:
    pid: int
    ppid: int
    uid: int
    gid: int
    start_time: int  # clock ticks since boot, from the stat file
    comm: str
    kernel_thread: bool
    exe_path: str | None = None
    exe_deleted: bool = False
    cmdline: list = field(default_factory=list)
    partial: list = field(default_factory=list)  # facets denied by the kernel


@dataclass
class MappingRecord:
    start: int
    end: int
    perms: str  # four chars as printed by the kernel, e.g. "r-xp"
    file_offset: int
    device: str
    inode: int
    path: str
    backing: str  # file | anon | special
    deleted: bool


@dataclass
class NamespaceRecord:
    ns_type: str
    inode: int
    member_pids: list


@dataclass
class SocketRecord:
    family: str  # inet | inet6 | unix | unknown
    protocol: str
    socket_inode: int
    local_addr: str = ""
    local_port: int = 0
    remote_addr: str = ""
    remote_port: int = 0
    state: str = "unknown"


@dataclass
class FdRecord:
    fd: int
    kind: str  # regular | directory | socket | pipe | device | anon | unknown
    target_path: str | None = None
    socket: SocketRecord | None = None
    target_device: str | None = None  # filled for regular files
    target_inode: int | None = None


def list_pids(proc_root=PROC):
    try:
        names = os.listdir(proc_root)
    except OSError as exc:
        raise ProcUnavailable(f"cannot list {proc_root}: {exc}") from exc
    return sorted(int(n) for n in names if n.isdigit())


def _read_status_ids(pid):
    uid = gid = None
    with open(f"{PROC}/{pid}/status") as f:
        for line in f:
            if line.startswith("Uid:"):
                uid = int(line.split()[1])
            elif line.startswith("Gid:"):
                gid = int(line.split()[1])
            if uid is not None and gid is not None:
                break
    if uid is None or gid is None:
        raise OSError(f"status file for pid {pid} lacks Uid/Gid")
    return uid, gid


def _maps_empty(pid):
    """True when the process has no userspace mappings (kernel threads)."""
    with open(f"{PROC}/{pid}/maps", "rb") as f:
        return f.read(1) == b""


def read_process(pid):
    """One process's metadata, or None if it vanished mid-read."""
    try:
        with open(f"{PROC}/{pid}/stat") as f:
            raw = f.read()
        uid, gid = _read_status_ids(pid)
    except (FileNotFoundError, ProcessLookupError):
        return None

    # comm is parenthesized and may itself contain spaces or parens
    lparen = raw.index("(")
    rparen = raw.rindex(")")
    comm = raw[lparen + 1 : rparen]
    rest = raw[rparen + 2 :].split()
    ppid = int(rest[1])
    start_time = int(rest[19])

    partial = []
    exe_path = None
    exe_deleted = False
    try:
        target = os.readlink(f"{PROC}/{pid}/exe")
        if target.endswith(" (deleted)"):
            target = target[: -len(" (deleted)")]
            exe_deleted = True
        exe_path = target
    except FileNotFoundError:
        pass  # kernel thread, or the process went away
    except PermissionError:
        partial.append("exe")
    except OSError:
        partial.append("exe")

    try:
        with open(f"{PROC}/{pid}/cmdline", "rb") as f:
            raw_cmd = f.read()
        cmdline = [a.decode("utf-8", "replace") for a in raw_cmd.split(b"\0") if a]
    except OSError:
        cmdline = []
        partial.append("cmdline")

    try:
        empty = _maps_empty(pid)
    except PermissionError:
        empty = False
        partial.append("maps")
    except (FileNotFoundError, ProcessLookupError):
        return None

    return ProcessRecord(
        pid=pid,
        ppid=ppid,
        uid=uid,
        gid=gid,
        start_time=start_time,
        comm=comm,
        kernel_thread=(exe_path is None and "exe" not in partial and empty),
        exe_path=exe_path,
        exe_deleted=exe_deleted,
        cmdline=cmdline,
        partial=partial,
    )


def scope_includes(scope, record):
    """scope is 'root_only', 'all', or 'uid:<n>[,<n>...]'."""
    if scope == "all":
        return True
    if scope == "root_only":
        return record.uid == 0
    if scope.startswith("uid:"):
        uids = {int(u) for u in scope[4:].split(",") if u}
        return record.uid in uids
    raise ValueError(f"unknown scope {scope!r}")


def snapshot_processes(scope="root_only"):
    """All in-scope processes; returns (records, vanished_count, warnings)."""
    records = []
    vanished = 0
    warnings = []
    for pid in list_pids():
        rec = read_process(pid)
        if rec is None:
            vanished += 1
            continue
        if not scope_includes(scope, rec):
            continue
        for facet in rec.partial:
            warnings.append(f"pid {pid}: {facet} unreadable")
        records.append(rec)
    return records, vanished, warnings


def collect_mappings(pid):
    """Parsed mapping list, sorted by start address as the kernel emits it."""
    out = []
    with open(f"{PROC}/{pid}/maps") as f:
        for line in f:
            addr, perms, offset, device, inode, *rest = line.split(maxsplit=5)
            path = rest[0].rstrip("\n") if rest else ""
            deleted = False
            if path.endswith(" (deleted)"):
                path = path[: -len(" (deleted)")]
                deleted = True
            start_s, _, end_s = addr.partition("-")
            inode_n = int(inode)
            if path in SPECIAL_NAMES:
                backing = BACKING_SPECIAL
            elif inode_n > 0 and not path.startswith("/memfd:"):
                backing = BACKING_FILE
            else:
                # memfd regions live on an invisible tmpfs: no on-disk
                # content to compare against, so treat them as anonymous
                backing = BACKING_ANON
            out.append(
                MappingRecord(
                    start=int(start_s, 16),
                    end=int(end_s, 16),
                    perms=perms,
                    file_offset=int(offset, 16),
                    device=device,
                    inode=inode_n,
                    path=path,
                    backing=backing,
                    deleted=deleted,
                )
            )
    return out


def collect_namespaces(pids):
    """Group measured pids by namespace; returns (records, warnings)."""
    groups = {}  # (ns_type, inode) -> [pid]
    warnings = []
    for pid in pids:
        for ns_type in NS_TYPES:
            try:
                target = os.readlink(f"{PROC}/{pid}/ns/{ns_type}")
            except FileNotFoundError:
                continue  # kernel without this type, or the pid vanished
            except PermissionError:
                warnings.append(f"pid {pid}: ns/{ns_type} unreadable")
                continue
            except OSError as exc:
                warnings.append(f"pid {pid}: ns/{ns_type} unreadable: {exc}")
                continue
            # link text looks like "pid:[4026531836]"
            inode = int(target[target.index("[") + 1 : target.index("]")])
            groups.setdefault((ns_type, inode), []).append(pid)
    records = [
        NamespaceRecord(ns_type=t, inode=i, member_pids=sorted(pids))
        for (t, i), pids in sorted(groups.items())
    ]
    return records, warnings


def _ipv4_from_hex(h):
    return socket.inet_ntop(socket.AF_INET, struct.pack("<I", int(h, 16)))


def _ipv6_from_hex(h):
    packed = b"".join(struct.pack("<I", int(h[i : i + 8], 16)) for i in range(0, 32, 8))
    return socket.inet_ntop(socket.AF_INET6, packed)


def _parse_inet_table(path, family, protocol):
    records = {}
    try:
        with open(path) as f:
            lines = f.readlines()[1:]
    except OSError:
        return records
    conv = _ipv6_from_hex if family == "inet6" else _ipv4_from_hex
    for line in lines:
        fields = line.split()
        if len(fields) < 10:
            continue
        local_addr, _, local_port = fields[1].partition(":")
        remote_addr, _, remote_port = fields[2].partition(":")
        state = int(fields[3], 16)
        inode = int(fields[9])
        if protocol == "udp" and state == 7:
            state_name = "unconnected"
        else:
            state_name = TCP_STATES.get(state, f"0x{state:02x}")
        records[inode] = SocketRecord(
            family=family,
            protocol=protocol,
            socket_inode=inode,
            local_addr=conv(local_addr),
            local_port=int(local_port, 16),
            remote_addr=conv(remote_addr),
            remote_port=int(remote_port, 16),
            state=state_name,
        )
    return records


def _parse_unix_table(path):
    records = {}
    try:
        with open(path) as f:
            lines = f.readlines()[1:]
    except OSError:
        return records
    for line in lines:
        fields = line.split()
        if len(fields) < 7:
            continue
        sock_type = int(fields[4], 16)
        state = int(fields[5], 16)
        inode = int(fields[6])
        records[inode] = SocketRecord(
            family="unix",
            protocol=UNIX_TYPES.get(sock_type, f"0x{sock_type:04x}"),
            socket_inode=inode,
            local_addr=fields[7] if len(fields) > 7 else "",
            state=UNIX_STATES.get(state, f"0x{state:02x}"),
        )
    return records


def read_socket_tables(pid=None):
    """Socket-inode -> record map for a process's network namespace.

    With pid=None the caller's own namespace is read.
    """
    base = f"{PROC}/{pid}/net" if pid is not None else f"{PROC}/net"
    tables = {}
    tables.update(_parse_inet_table(f"{base}/tcp", "inet", "tcp"))
    tables.update(_parse_inet_table(f"{base}/tcp6", "inet6", "tcp"))
    tables.update(_parse_inet_table(f"{base}/udp", "inet", "udp"))
    tables.update(_parse_inet_table(f"{base}/udp6", "inet6", "udp"))
    tables.update(_parse_unix_table(f"{base}/unix"))
    return tables


def _classify_fd_target(pid, fd, target):
    """Returns (kind, socket_inode, device, inode)."""
    if target.startswith("socket:["):
        return "socket", int(target[8:-1]), None, None
    if target.startswith("pipe:["):
        return "pipe", None, None, None
    if target.startswith("anon_inode:"):
        return "anon", None, None, None
    try:
        st = os.stat(f"{PROC}/{pid}/fd/{fd}")
    except OSError:
        return "unknown", None, None, None
    mode = st.st_mode
    device = f"{os.major(st.st_dev):02x}:{os.minor(st.st_dev):02x}"
    if statmod.S_ISREG(mode):
        return "regular", None, device, st.st_ino
    if statmod.S_ISDIR(mode):
        return "directory", None, None, None
    if statmod.S_ISCHR(mode) or statmod.S_ISBLK(mode):
        return "device", None, None, None
    if statmod.S_ISFIFO(mode):
        return "pipe", None, None, None
    if statmod.S_ISSOCK(mode):
        return "socket", st.st_ino, None, None
    return "unknown", None, None, None


def collect_fds(pid, socket_tables=None):
    """Open descriptors with socket detail joined from the given tables.

    Returns (records, warnings).  Descriptors that close mid-walk are
    skipped; an unreadable fd directory yields a single warning.
    """
    records = []
    warnings = []
    try:
        names = os.listdir(f"{PROC}/{pid}/fd")
    except PermissionError:
        return records, [f"pid {pid}: fd directory unreadable"]
    except (FileNotFoundError, ProcessLookupError):
        return records, warnings
    for name in sorted(names, key=int):
        fd = int(name)
        try:
            target = os.readlink(f"{PROC}/{pid}/fd/{name}")
        except OSError:
            continue  # closed between listdir and readlink
        kind, sock_inode, device, inode = _classify_fd_target(pid, fd, target)
        sock = None
        target_path = None
        if kind == "socket" and sock_inode is not None:
            sock = (socket_tables or {}).get(sock_inode)
            if sock is None:
                # inode not in any parsed table (netlink, raw, vanished):
                # keep it visible rather than dropping the descriptor
                sock = SocketRecord(
                    family="unknown", protocol="unknown", socket_inode=sock_inode
                )
        elif target.startswith("/"):
            target_path = target
            if target_path.endswith(" (deleted)"):
                target_path = target_path[: -len(" (deleted)")]
        records.append(
            FdRecord(
                fd=fd,
                kind=kind,
                target_path=target_path,
                socket=sock,
                target_device=device,
                target_inode=inode,
            )
        )
    return records, warnings

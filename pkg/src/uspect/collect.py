"""Snapshot orchestration.

The control process fans out one sub-collector per module (system
inventory, file hashing, process walk), each in its own subprocess, and
merges the partial graphs into a single canonical bundle.  Per-process
measurement inside the process walker is threaded; all graph mutation
happens on the assembling thread.
"""

from __future__ import annotations

import os
import subprocess
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .elfinspect import (
    ElfError,
    SearchConfig,
    compute_load_base,
    encode_got_entry,
    extract_got_entries,
    parse_elf,
    read_exec_region_hashes,
    resolve_dependency_closure,
)
from .errors import CollectError
from .graph import MeasurementGraph, SnapshotMeta, deserialize, merge, serialize_canonical
from .procscan import (
    collect_fds,
    collect_mappings,
    collect_namespaces,
    read_socket_tables,
    snapshot_processes,
)
from .sysinfo import build_hashes_partial, build_system_partial, read_manifest

ALL_MODULES = ("system", "processes", "elf", "hashes")


def make_meta(scope="root_only"):
    return SnapshotMeta(
        host=os.uname().nodename,
        taken_at=int(time.time()),
        collector_version=__version__,
        scope=scope,
    )


class _ElfCache:
    """Shared parse/closure/digest caches for one collection run."""

    def __init__(self):
        self._lock = threading.Lock()
        self._summaries = {}
        self._closures = {}
        self.expected = {}  # (path, offset, length, algo) -> digest
        self.config = SearchConfig()

    def summary(self, real):
        with self._lock:
            if real in self._summaries:
                return self._summaries[real]
        try:
            summary = parse_elf(real)
        except (ElfError, OSError):
            summary = None
        with self._lock:
            return self._summaries.setdefault(real, summary)

    def closure(self, real):
        with self._lock:
            if real in self._closures:
                return self._closures[real]
        summary = self.summary(real)
        result = None
        if summary is not None:
            try:
                result = resolve_dependency_closure(summary, self.config)
            except (ElfError, OSError):
                result = None
        with self._lock:
            return self._closures.setdefault(real, result)


def _measure_pid(rec, with_elf, cache, algo):
    """Per-process measurement off the main thread; returns plain data."""
    data = {
        "record": rec,
        "mappings": [],
        "region_hashes": [],
        "got": None,
        "closure_paths": None,
        "closure_unresolved": None,
        "interp": None,
        "elf_type": None,
        "load_base": None,
        "fds": [],
        "warnings": [],
        "failed_facets": [],
    }
    pid = rec.pid
    try:
        data["mappings"] = collect_mappings(pid)
    except PermissionError:
        data["failed_facets"].append("maps")
        data["warnings"].append(f"pid {pid}: mappings unreadable")
        return data
    except (FileNotFoundError, ProcessLookupError):
        data["failed_facets"].append("maps")
        data["warnings"].append(f"pid {pid}: vanished during mapping read")
        return data

    if not with_elf or rec.kernel_thread:
        return data

    if rec.exe_path and not rec.exe_path.startswith("/memfd:"):
        exe_real = os.path.realpath(rec.exe_path)
        summary = cache.summary(exe_real)
        if summary is None:
            data["warnings"].append(f"pid {pid}: executable {exe_real} not parsable")
        else:
            data["elf_type"] = summary.elf_type
            data["interp"] = summary.interp
            closure = cache.closure(exe_real)
            closure_set = None
            if closure is not None:
                closure_set = set(closure.paths) | {exe_real}
                data["closure_paths"] = sorted(closure_set)
                if closure.unresolved:
                    data["closure_unresolved"] = sorted(closure.unresolved)
            try:
                load_base = compute_load_base(summary, data["mappings"], exe_real)
                data["load_base"] = load_base
            except ElfError as exc:
                load_base = None
                data["warnings"].append(f"pid {pid}: {exc}")
            if load_base is not None and summary.jump_slot_relocs:
                try:
                    data["got"] = extract_got_entries(
                        pid, summary, load_base, data["mappings"], closure_set
                    )
                except OSError as exc:
                    data["warnings"].append(
                        f"pid {pid}: relocation slots unreadable: {exc}"
                    )
    elif rec.exe_path:
        data["warnings"].append(f"pid {pid}: executable is not a disk file")

    summaries = {}
    for m in data["mappings"]:
        if "x" in m.perms and m.backing == "file":
            real = os.path.realpath(m.path)
            if real not in summaries:
                summaries[real] = cache.summary(real)
    try:
        data["region_hashes"] = read_exec_region_hashes(
            pid, data["mappings"], summaries, algo, cache.expected
        )
    except (FileNotFoundError, ProcessLookupError, PermissionError) as exc:
        data["warnings"].append(f"pid {pid}: memory unreadable: {exc}")
    return data


def _process_attrs(rec, data):
    attrs = {
        "pid": rec.pid,
        "start_time": rec.start_time,
        "ppid": rec.ppid,
        "uid": rec.uid,
        "gid": rec.gid,
        "comm": rec.comm,
        "kernel_thread": rec.kernel_thread,
    }
    if rec.exe_path:
        attrs["exe_path"] = rec.exe_path
    if rec.exe_deleted:
        attrs["exe_deleted"] = True
    if rec.cmdline:
        attrs["cmdline"] = rec.cmdline
    partial = sorted(set(rec.partial) | set(data["failed_facets"]))
    if partial:
        attrs["partial"] = partial
    if data["closure_paths"] is not None:
        attrs["dep_closure"] = data["closure_paths"]
    if data["closure_unresolved"]:
        attrs["dep_unresolved"] = data["closure_unresolved"]
    if data["interp"]:
        attrs["interp"] = data["interp"]
    if data["elf_type"]:
        attrs["elf_type"] = data["elf_type"]
    if data["load_base"] is not None:
        attrs["load_base"] = f"0x{data['load_base']:x}"
    return attrs


def _add_mapping_nodes(g, proc_id, data):
    by_start = {rh.start: rh for rh in data["region_hashes"]}
    for m in data["mappings"]:
        attrs = {
            "process_id": proc_id,
            "start": f"0x{m.start:x}",
            "end": f"0x{m.end:x}",
            "perms": m.perms,
            "backing": m.backing,
            "path": m.path,
            "file_offset": m.file_offset,
            "deleted": m.deleted,
        }
        rh = by_start.get(m.start)
        if rh is not None:
            attrs["comparable"] = rh.comparable
            if rh.observed_digest is not None:
                attrs["observed_digest"] = rh.observed_digest
            if rh.expected_digest is not None:
                attrs["expected_digest"] = rh.expected_digest
            if rh.fault:
                attrs["hash_fault"] = rh.fault
        map_id = g.upsert_node("MemoryMapping", attrs)
        g.add_edge(proc_id, "maps", map_id)
        if m.backing == "file":
            file_id = g.upsert_node(
                "File", {"path": m.path, "device": m.device, "inode": m.inode}
            )
            region_id = g.upsert_node(
                "FileRegion",
                {
                    "file_id": file_id,
                    "offset": m.file_offset,
                    "length": m.end - m.start,
                    "perms": m.perms,
                },
            )
            g.add_edge(region_id, "region_of", file_id)
            g.add_edge(map_id, "backed_by", region_id)


def _add_runs_edge(g, proc_id, rec, data):
    if not rec.exe_path:
        return
    for m in data["mappings"]:
        if m.backing == "file" and m.path == rec.exe_path:
            file_id = g.upsert_node(
                "File", {"path": m.path, "device": m.device, "inode": m.inode}
            )
            g.add_edge(proc_id, "runs", file_id)
            return


def _add_fd_nodes(g, proc_id, fd_records):
    for fd in fd_records:
        attrs = {"process_id": proc_id, "fd": fd.fd, "kind": fd.kind}
        if fd.target_path:
            attrs["target_path"] = fd.target_path
        fd_id = g.upsert_node("FileDescriptor", attrs)
        g.add_edge(proc_id, "holds", fd_id)
        if fd.kind == "socket" and fd.socket is not None:
            s = fd.socket
            sock_id = g.upsert_node(
                "Socket",
                {
                    "family": s.family,
                    "socket_inode": s.socket_inode,
                    "protocol": s.protocol,
                    "local_addr": s.local_addr,
                    "local_port": s.local_port,
                    "remote_addr": s.remote_addr,
                    "remote_port": s.remote_port,
                    "state": s.state,
                },
            )
            g.add_edge(fd_id, "refers_to", sock_id)
        elif (
            fd.kind == "regular"
            and fd.target_path
            and fd.target_inode is not None
        ):
            file_id = g.upsert_node(
                "File",
                {
                    "path": fd.target_path,
                    "device": fd.target_device,
                    "inode": fd.target_inode,
                },
            )
            g.add_edge(fd_id, "refers_to", file_id)


def _add_got_table(g, proc_id, got):
    entries = sorted(got.entries, key=lambda e: e.slot_vaddr)
    g.upsert_node(
        "GotTable",
        {
            "process_id": proc_id,
            "object_path": got.object_path,
            "load_base": f"0x{got.load_base:x}",
            "entries": [encode_got_entry(e) for e in entries],
        },
    )


def build_process_partial(meta, scope="root_only", with_elf=True, max_workers=8):
    """Walk /proc and assemble the per-process subgraph."""
    records, vanished, warnings = snapshot_processes(scope)
    meta.warnings.extend(warnings)
    if vanished:
        meta.warnings.append(f"{vanished} pids vanished during the walk")
    g = MeasurementGraph(meta)

    pids = [r.pid for r in records]
    ns_records, ns_warnings = collect_namespaces(pids)
    meta.warnings.extend(ns_warnings)

    # one socket-table read per distinct network namespace
    net_ns_of = {}
    tables_of_ns = {}
    for ns in ns_records:
        if ns.ns_type != "net":
            continue
        tables_of_ns[ns.inode] = read_socket_tables(ns.member_pids[0])
        for pid in ns.member_pids:
            net_ns_of[pid] = ns.inode

    measured = {}
    algo = meta.hash_algorithm
    cache = _ElfCache()
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {
            rec.pid: pool.submit(_measure_pid, rec, with_elf, cache, algo)
            for rec in records
        }
        fd_futures = {
            rec.pid: pool.submit(
                collect_fds, rec.pid, tables_of_ns.get(net_ns_of.get(rec.pid), {})
            )
            for rec in records
            if not rec.kernel_thread
        }
        for rec in records:
            try:
                measured[rec.pid] = futures[rec.pid].result()
            except Exception as exc:  # crash-free tolerance of racing targets
                measured[rec.pid] = {
                    "record": rec,
                    "mappings": [],
                    "region_hashes": [],
                    "got": None,
                    "closure_paths": None,
                    "closure_unresolved": None,
                    "interp": None,
                    "elf_type": None,
                    "load_base": None,
                    "fds": [],
                    "warnings": [f"pid {rec.pid}: measurement failed: {exc}"],
                    "failed_facets": ["maps"],
                }
            if rec.pid in fd_futures:
                try:
                    fd_records, fd_warnings = fd_futures[rec.pid].result()
                    measured[rec.pid]["fds"] = fd_records
                    measured[rec.pid]["warnings"].extend(fd_warnings)
                except Exception as exc:
                    measured[rec.pid]["warnings"].append(
                        f"pid {rec.pid}: fd walk failed: {exc}"
                    )

    proc_ids = {}
    for rec in records:
        data = measured[rec.pid]
        meta.warnings.extend(data["warnings"])
        proc_ids[rec.pid] = g.upsert_node("Process", _process_attrs(rec, data))

    for rec in records:
        data = measured[rec.pid]
        proc_id = proc_ids[rec.pid]
        _add_mapping_nodes(g, proc_id, data)
        _add_runs_edge(g, proc_id, rec, data)
        _add_fd_nodes(g, proc_id, data["fds"])
        if data["got"] is not None:
            _add_got_table(g, proc_id, data["got"])

    by_pid = {rec.pid: rec for rec in records}
    for rec in records:
        parent = by_pid.get(rec.ppid)
        if parent is not None and parent.pid != rec.pid:
            g.add_edge(proc_ids[parent.pid], "parent_of", proc_ids[rec.pid])

    for ns in ns_records:
        ns_id = g.upsert_node(
            "Namespace", {"ns_type": ns.ns_type, "inode": ns.inode}
        )
        for pid in ns.member_pids:
            if pid in proc_ids:
                g.add_edge(proc_ids[pid], "member_of", ns_id)
    return g


def run_worker_module(module, scope="root_only", manifest=None, with_elf=True):
    """One sub-collector, in-process; returns its partial graph."""
    meta = make_meta(scope)
    if module == "system":
        return build_system_partial(meta)
    if module == "hashes":
        patterns = read_manifest(manifest) if manifest else None
        return build_hashes_partial(meta, patterns)
    if module == "processes":
        return build_process_partial(meta, scope, with_elf=with_elf)
    raise CollectError(f"unknown collector module {module!r}")


def _normalize_modules(modules):
    mods = set(modules)
    unknown = mods - set(ALL_MODULES)
    if unknown:
        raise CollectError(f"unknown modules: {sorted(unknown)}")
    if not mods:
        raise CollectError("at least one module must be selected")
    if "elf" in mods:
        mods.add("processes")
    workers = []
    if "system" in mods:
        workers.append(("system", {}))
    if "hashes" in mods:
        workers.append(("hashes", {}))
    if "processes" in mods:
        workers.append(("processes", {"with_elf": "elf" in mods}))
    return workers


def _spawn_worker(module, scope, manifest, with_elf):
    argv = [sys.executable, "-m", "uspect", "worker", module, "--scope", scope]
    if module == "hashes" and manifest:
        argv += ["--manifest", manifest]
    if module == "processes" and not with_elf:
        argv += ["--no-elf"]
    return subprocess.Popen(argv, stdout=subprocess.PIPE, stderr=subprocess.PIPE)


def collect_bundle(
    scope="root_only", modules=ALL_MODULES, manifest=None, use_subprocesses=True
):
    """Run the selected sub-collectors and merge their partial graphs."""
    workers = _normalize_modules(modules)
    partials = []
    if use_subprocesses:
        procs = [
            (name, _spawn_worker(name, scope, manifest, opts.get("with_elf", True)))
            for name, opts in workers
        ]
        for name, proc in procs:
            out, err = proc.communicate()
            if proc.returncode != 0:
                raise CollectError(
                    f"{name} collector failed (exit {proc.returncode}): "
                    f"{err.decode('utf-8', 'replace').strip()[:500]}"
                )
            partials.append(deserialize(out))
    else:
        for name, opts in workers:
            partials.append(
                run_worker_module(
                    name, scope, manifest, with_elf=opts.get("with_elf", True)
                )
            )
    result = partials[0]
    for part in partials[1:]:
        result = merge(result, part)
    return result


def write_bundle(graph, path):
    data = serialize_canonical(graph)
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        with open(path, "wb") as f:
            f.write(data)
    return len(data)


def read_bundle(path):
    if path == "-":
        return deserialize(sys.stdin.buffer.read())
    with open(path, "rb") as f:
        return deserialize(f.read())

"""Live tests for the collection orchestrator.

These spawn short-lived child processes under spare uids so a scoped
walk sees exactly one known target, then check the assembled subgraph
against /proc directly.
"""

import json
import os
import subprocess
import sys
import time

import pytest

from uspect.collect import (
    collect_bundle,
    make_meta,
    build_process_partial,
    run_worker_module,
    read_bundle,
    write_bundle,
)
from uspect.errors import CollectError
from uspect.graph import deserialize, serialize_canonical
from uspect.procscan import NS_TYPES

SLEEP_BIN = "/usr/bin/sleep"
CHILD_UID = 12345
FD_CHILD_UID = 12346


def _drop_to(uid):
    def fn():
        os.setgid(uid)
        os.setuid(uid)

    return fn


@pytest.fixture
def sleeping_child():
    proc = subprocess.Popen([SLEEP_BIN, "300"], preexec_fn=_drop_to(CHILD_UID))
    time.sleep(0.1)
    yield proc
    proc.kill()
    proc.wait()


@pytest.fixture
def fd_child():
    script = (
        "import socket, sys, time\n"
        "s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)\n"
        "s.bind(('127.0.0.1', 0))\n"
        "f = open('/etc/hostname')\n"
        "print(s.getsockname()[1], flush=True)\n"
        "time.sleep(300)\n"
    )
    proc = subprocess.Popen(
        [sys.executable, "-c", script],
        preexec_fn=_drop_to(FD_CHILD_UID),
        stdout=subprocess.PIPE,
        text=True,
    )
    port = int(proc.stdout.readline())
    yield proc, port
    proc.kill()
    proc.wait()


def _only_process(graph):
    procs = graph.nodes_of_kind("Process")
    assert len(procs) == 1, [p.attributes for p in procs]
    return procs[0]


def _targets(graph, src, label):
    return [graph.node(dst) for _, _, dst in graph.edges_from(src, label)]


class TestProcessPartial:
    def test_child_attributes_match_proc(self, sleeping_child):
        pid = sleeping_child.pid
        g = build_process_partial(make_meta(), scope=f"uid:{CHILD_UID}")
        node = _only_process(g)
        a = node.attributes
        assert a["pid"] == pid
        assert a["ppid"] == os.getpid()
        assert a["uid"] == CHILD_UID
        assert a["comm"] == "sleep"
        assert a["cmdline"] == [SLEEP_BIN, "300"]
        assert a["exe_path"] == os.path.realpath(SLEEP_BIN)
        assert not a["kernel_thread"]
        with open(f"/proc/{pid}/stat") as f:
            line = f.read()
        start_time = int(line[line.rindex(")") + 2 :].split()[19])
        assert a["start_time"] == start_time
        assert node.id == f"Process:{pid}/{start_time}"

    def test_dep_closure_and_interp(self, sleeping_child):
        g = build_process_partial(make_meta(), scope=f"uid:{CHILD_UID}")
        a = _only_process(g).attributes
        closure = a["dep_closure"]
        assert a["exe_path"] in closure
        assert any("libc.so" in p for p in closure)
        assert a["interp"].startswith("/")
        assert a["elf_type"] in ("exec", "pie_dyn")
        assert a["load_base"].startswith("0x")

    def test_runs_edge_targets_exe_file(self, sleeping_child):
        g = build_process_partial(make_meta(), scope=f"uid:{CHILD_UID}")
        node = _only_process(g)
        runs = _targets(g, node.id, "runs")
        assert len(runs) == 1
        exe_file = runs[0]
        assert exe_file.kind == "File"
        assert exe_file.attributes["path"] == node.attributes["exe_path"]
        st = os.stat(node.attributes["exe_path"])
        assert exe_file.attributes["inode"] == st.st_ino

    def test_mappings_cover_exe_and_stack(self, sleeping_child):
        g = build_process_partial(make_meta(), scope=f"uid:{CHILD_UID}")
        node = _only_process(g)
        maps = _targets(g, node.id, "maps")
        paths = {m.attributes["path"] for m in maps}
        assert node.attributes["exe_path"] in paths
        assert "[stack]" in paths
        backings = {m.attributes["backing"] for m in maps}
        assert backings <= {"file", "anon", "special"}
        # every file mapping carries its backed_by chain to a File node
        for m in maps:
            if m.attributes["backing"] != "file":
                continue
            regions = _targets(g, m.id, "backed_by")
            assert len(regions) == 1
            region = regions[0]
            assert region.kind == "FileRegion"
            assert region.attributes["length"] == int(
                m.attributes["end"], 16
            ) - int(m.attributes["start"], 16)
            files = _targets(g, region.id, "region_of")
            assert [f.kind for f in files] == ["File"]

    def test_fresh_exec_regions_hash_clean(self, sleeping_child):
        g = build_process_partial(make_meta(), scope=f"uid:{CHILD_UID}")
        node = _only_process(g)
        maps = _targets(g, node.id, "maps")
        comparable = [
            m.attributes for m in maps if m.attributes.get("comparable")
        ]
        assert comparable, "expected at least the text segment to be comparable"
        for a in comparable:
            assert a["observed_digest"] == a["expected_digest"], a["path"]

    def test_namespace_membership_matches_proc(self, sleeping_child):
        pid = sleeping_child.pid
        g = build_process_partial(make_meta(), scope=f"uid:{CHILD_UID}")
        node = _only_process(g)
        seen = {}
        for ns in _targets(g, node.id, "member_of"):
            seen[ns.attributes["ns_type"]] = ns.attributes["inode"]
        for ns_type in NS_TYPES:
            link = os.readlink(f"/proc/{pid}/ns/{ns_type}")
            inode = int(link[link.index("[") + 1 : -1])
            assert seen[ns_type] == inode

    def test_fd_and_socket_nodes(self, fd_child):
        proc, port = fd_child
        g = build_process_partial(make_meta(), scope=f"uid:{FD_CHILD_UID}")
        node = _only_process(g)
        holds = _targets(g, node.id, "holds")
        assert holds, "expected FileDescriptor nodes"
        kinds = {h.attributes["kind"] for h in holds}
        assert "socket" in kinds
        assert "regular" in kinds
        sockets = []
        hostname_files = []
        for fd_node in holds:
            for target in _targets(g, fd_node.id, "refers_to"):
                if target.kind == "Socket":
                    sockets.append(target.attributes)
                elif target.attributes.get("path") == "/etc/hostname":
                    hostname_files.append(target)
        udp = [s for s in sockets if s.get("local_port") == port]
        assert len(udp) == 1
        assert udp[0]["family"] == "inet"
        assert udp[0]["protocol"] == "udp"
        assert udp[0]["local_addr"] == "127.0.0.1"
        assert hostname_files, "regular fd should link to its File node"

    def test_without_elf_analysis(self, sleeping_child):
        g = build_process_partial(
            make_meta(), scope=f"uid:{CHILD_UID}", with_elf=False
        )
        node = _only_process(g)
        assert "dep_closure" not in node.attributes
        assert "load_base" not in node.attributes
        assert not g.nodes_of_kind("GotTable")
        maps = _targets(g, node.id, "maps")
        assert all("comparable" not in m.attributes for m in maps)
        assert maps, "mappings are still collected without analysis"

    def test_parent_of_edges_in_wide_scope(self, sleeping_child):
        g = build_process_partial(make_meta(), scope="all")
        me = None
        child = None
        for n in g.nodes_of_kind("Process"):
            if n.attributes["pid"] == os.getpid():
                me = n
            elif n.attributes["pid"] == sleeping_child.pid:
                child = n
        assert me is not None and child is not None
        assert g.has_edge(me.id, "parent_of", child.id)


class TestBundleAssembly:
    def test_module_selection_system_only(self):
        g = collect_bundle(modules=("system",), use_subprocesses=False)
        kinds = {n.kind for n in g.nodes()}
        assert "SystemInfo" in kinds
        assert "Process" not in kinds
        assert "File" not in kinds

    def test_module_selection_hashes_only(self, tmp_path):
        manifest = tmp_path / "m.txt"
        manifest.write_text("/etc/hostname\n")
        g = collect_bundle(
            modules=("hashes",), manifest=str(manifest), use_subprocesses=False
        )
        files = g.nodes_of_kind("File")
        assert [f.attributes["path"] for f in files] == ["/etc/hostname"]
        assert "digest" in files[0].attributes

    def test_elf_module_implies_processes(self, sleeping_child):
        g = collect_bundle(
            scope=f"uid:{CHILD_UID}", modules=("elf",), use_subprocesses=False
        )
        assert g.nodes_of_kind("Process")

    def test_unknown_module_rejected(self):
        with pytest.raises(CollectError):
            collect_bundle(modules=("bogus",), use_subprocesses=False)
        with pytest.raises(CollectError):
            collect_bundle(modules=(), use_subprocesses=False)

    def test_subprocess_matches_inprocess_for_system(self):
        g1 = collect_bundle(modules=("system",), use_subprocesses=True)
        g2 = collect_bundle(modules=("system",), use_subprocesses=False)
        b1 = json.loads(serialize_canonical(g1))
        b2 = json.loads(serialize_canonical(g2))
        assert b1["nodes"] == b2["nodes"]
        assert b1["edges"] == b2["edges"]

    def test_subprocess_matches_inprocess_for_hashes(self, tmp_path):
        manifest = tmp_path / "m.txt"
        manifest.write_text("/etc/os-release\n/usr/bin/sleep\n")
        kwargs = dict(modules=("hashes",), manifest=str(manifest))
        b1 = json.loads(serialize_canonical(collect_bundle(**kwargs)))
        b2 = json.loads(
            serialize_canonical(collect_bundle(use_subprocesses=False, **kwargs))
        )
        assert b1["nodes"] == b2["nodes"]

    def test_full_collection_has_all_live_kinds(self):
        g = collect_bundle(scope="all")
        kinds = {n.kind for n in g.nodes()}
        expected = {
            "SystemInfo",
            "Package",
            "File",
            "FileRegion",
            "Process",
            "MemoryMapping",
            "Namespace",
            "FileDescriptor",
            "GotTable",
        }
        assert expected <= kinds
        assert g.meta.scope == "all"
        assert g.meta.hash_algorithm == "sha256"

    def test_worker_module_stdout_is_canonical(self, sleeping_child):
        out = subprocess.run(
            [
                sys.executable,
                "-m",
                "uspect",
                "worker",
                "processes",
                "--scope",
                f"uid:{CHILD_UID}",
            ],
            capture_output=True,
            check=True,
        ).stdout
        g = deserialize(out)
        assert serialize_canonical(g) == out
        assert _only_process(g).attributes["pid"] == sleeping_child.pid

    def test_write_read_roundtrip(self, tmp_path, sleeping_child):
        g = build_process_partial(make_meta(), scope=f"uid:{CHILD_UID}")
        path = tmp_path / "bundle.json"
        n = write_bundle(g, str(path))
        assert path.stat().st_size == n
        again = read_bundle(str(path))
        assert serialize_canonical(again) == serialize_canonical(g)

    def test_run_worker_module_rejects_unknown(self):
        with pytest.raises(CollectError):
            run_worker_module("nope")

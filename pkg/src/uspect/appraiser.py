"""Policy evaluation over measurement graphs.

Eight rules: (1) no writable+executable mappings, (2) file-backed
executable mappings must belong to the dependency closure, (3) no
anonymous executable mappings, (4) the executable must appear among
file-backed mappings, (5) executable regions and critical files must hash
to their on-disk baselines, (6) init must live in the default namespaces,
(7) resolved relocation slots must not change across snapshots, (8) a
socket must not migrate to a non-descendant process.

Rules 1-6 need one snapshot; 7-8 need a previous one.  All checks are
pure functions of (graphs, policy); findings come out canonically sorted
so repeated runs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .elfinspect import (
    CLASS_ANOMALOUS,
    CLASS_RESOLVED,
    CLASS_UNREADABLE,
    CLASS_UNRESOLVED,
    decode_got_entry,
)
from .graph import serialize_canonical

SEV_ALERT = "alert"
SEV_WARNING = "warning"

VERDICT_PASS = "pass"
VERDICT_FAIL = "fail"


@dataclass
class Finding:
    rule: int
    severity: str
    subject: str  # node id in the appraised graph
    summary: str
    evidence: dict = field(default_factory=dict)

    def sort_key(self):
        return (
            self.rule,
            self.subject,
            self.severity,
            self.summary,
            json.dumps(self.evidence, sort_keys=True),
        )

    def to_dict(self):
        return {
            "rule": self.rule,
            "severity": self.severity,
            "subject": self.subject,
            "summary": self.summary,
            "evidence": dict(sorted(self.evidence.items())),
        }


@dataclass
class Report:
    current: str  # content digest of the appraised bundle
    previous: str | None
    verdict: str
    findings: list
    counters: dict

    def alerts(self):
        return [f for f in self.findings if f.severity == SEV_ALERT]

    def triggered_rules(self):
        return sorted({f.rule for f in self.findings if f.severity == SEV_ALERT})

    def to_dict(self):
        return {
            "report_version": 1,
            "current": self.current,
            "previous": self.previous,
            "verdict": self.verdict,
            "counters": dict(sorted(self.counters.items())),
            "findings": [f.to_dict() for f in self.findings],
        }


def snapshot_id(graph):
    """Content digest of the canonical bundle bytes."""
    return hashlib.sha256(serialize_canonical(graph)).hexdigest()


def _hex(value):
    return f"0x{value:x}"


class _View:
    """One-pass indices over a measurement graph."""

    def __init__(self, graph):
        self.graph = graph
        self.processes = {}  # nid -> Node
        self.by_pid = {}  # pid -> [nid]
        self.mappings = {}  # proc nid -> [Node], sorted by start
        self.namespaces_of = {}  # proc nid -> {ns_type: Node}
        self.ns_count = {}  # ns_type -> node count
        self.got_tables = {}  # proc nid -> {object_path: Node}
        self.socket_holders = {}  # socket_inode -> set(proc nid)
        self.socket_node = {}  # socket_inode -> nid
        self.parent = {}  # child proc nid -> parent proc nid
        self.files_by_path = {}  # path -> [Node]
        self.system_node = None

        for node in graph.nodes():
            if node.kind == "Process":
                self.processes[node.id] = node
                self.by_pid.setdefault(node.attributes["pid"], []).append(node.id)
            elif node.kind == "Namespace":
                t = node.attributes["ns_type"]
                self.ns_count[t] = self.ns_count.get(t, 0) + 1
            elif node.kind == "Socket":
                self.socket_node[node.attributes["socket_inode"]] = node.id
            elif node.kind == "File":
                self.files_by_path.setdefault(node.attributes["path"], []).append(node)
            elif node.kind == "SystemInfo":
                self.system_node = node.id
            elif node.kind == "GotTable":
                owner = node.attributes["process_id"]
                self.got_tables.setdefault(owner, {})[
                    node.attributes["object_path"]
                ] = node

        fd_owner = {}
        for src, label, dst in graph.edges():
            if label == "maps":
                self.mappings.setdefault(src, []).append(graph.node(dst))
            elif label == "member_of":
                ns = graph.node(dst)
                self.namespaces_of.setdefault(src, {})[ns.attributes["ns_type"]] = ns
            elif label == "parent_of":
                self.parent[dst] = src
            elif label == "holds":
                fd_owner[dst] = src
        for src, label, dst in graph.edges():
            if label == "refers_to":
                target = graph.node(dst)
                if target.kind == "Socket" and src in fd_owner:
                    inode = target.attributes["socket_inode"]
                    self.socket_holders.setdefault(inode, set()).add(fd_owner[src])
        for maps in self.mappings.values():
            maps.sort(key=lambda n: int(n.attributes["start"], 16))
        for pids in self.by_pid.values():
            pids.sort()

    def fallback_subject(self):
        if self.system_node:
            return self.system_node
        if self.processes:
            return sorted(self.processes)[0]
        return None

    def is_ancestor(self, ancestor_nid, nid):
        seen = set()
        cur = self.parent.get(nid)
        while cur is not None and cur not in seen:
            if cur == ancestor_nid:
                return True
            seen.add(cur)
            cur = self.parent.get(cur)
        return False


def _proc_label(attrs):
    exe = attrs.get("exe_path")
    return exe or attrs.get("comm", "?")


def _mapping_rules(view, policy, counters):
    """Rules 1-4 over one snapshot."""
    findings = []
    for nid in sorted(view.processes):
        attrs = view.processes[nid].attributes
        if attrs.get("kernel_thread"):
            counters["kernel_threads"] = counters.get("kernel_threads", 0) + 1
            continue
        partial = attrs.get("partial", [])
        label = _proc_label(attrs)
        if "maps" in partial:
            findings.append(
                Finding(
                    1,
                    SEV_WARNING,
                    nid,
                    "mappings unreadable; rules 1-5 not evaluated for this process",
                    {"pid": attrs["pid"], "process": label},
                )
            )
            continue
        maps = view.mappings.get(nid, [])
        exe = attrs.get("exe_path")

        if not policy.matches(exe, policy.wx_whitelist):
            for m in maps:
                perms = m.attributes["perms"]
                if "w" in perms and "x" in perms:
                    findings.append(
                        Finding(
                            1,
                            SEV_ALERT,
                            m.id,
                            "writable and executable mapping",
                            {
                                "pid": attrs["pid"],
                                "process": label,
                                "start": m.attributes["start"],
                                "end": m.attributes["end"],
                                "perms": perms,
                                "path": m.attributes.get("path", ""),
                            },
                        )
                    )

        if not policy.matches(exe, policy.arbitrary_load_whitelist):
            closure = attrs.get("dep_closure")
            exec_file_maps = [
                m
                for m in maps
                if m.attributes["backing"] == "file" and "x" in m.attributes["perms"]
            ]
            if closure is None:
                if exec_file_maps:
                    findings.append(
                        Finding(
                            2,
                            SEV_WARNING,
                            nid,
                            "dependency closure unavailable; rule 2 not evaluated",
                            {"pid": attrs["pid"], "process": label},
                        )
                    )
            else:
                members = set(closure)
                for m in exec_file_maps:
                    path = m.attributes["path"]
                    if path not in members:
                        findings.append(
                            Finding(
                                2,
                                SEV_ALERT,
                                m.id,
                                "executable mapping outside the dependency closure",
                                {
                                    "pid": attrs["pid"],
                                    "process": label,
                                    "path": path,
                                    "start": m.attributes["start"],
                                },
                            )
                        )

        if not policy.matches(exe, policy.anon_exec_whitelist):
            for m in maps:
                perms = m.attributes["perms"]
                if (
                    m.attributes["backing"] == "anon"
                    and "x" in perms
                    and "w" not in perms
                ):
                    findings.append(
                        Finding(
                            3,
                            SEV_ALERT,
                            m.id,
                            "anonymous executable mapping",
                            {
                                "pid": attrs["pid"],
                                "process": label,
                                "start": m.attributes["start"],
                                "end": m.attributes["end"],
                                "perms": perms,
                                "path": m.attributes.get("path", ""),
                            },
                        )
                    )

        if "exe" in partial:
            findings.append(
                Finding(
                    4,
                    SEV_WARNING,
                    nid,
                    "executable link unreadable; rule 4 not evaluated",
                    {"pid": attrs["pid"], "process": label},
                )
            )
        elif exe is None:
            findings.append(
                Finding(
                    4,
                    SEV_ALERT,
                    nid,
                    "no executable path for a userspace process",
                    {"pid": attrs["pid"], "process": label},
                )
            )
        else:
            file_paths = {
                m.attributes["path"]
                for m in maps
                if m.attributes["backing"] == "file"
            }
            if exe not in file_paths:
                findings.append(
                    Finding(
                        4,
                        SEV_ALERT,
                        nid,
                        "executable absent from file-backed mappings",
                        {"pid": attrs["pid"], "process": label, "exe_path": exe},
                    )
                )
    return findings


def _text_integrity(view, policy, counters):
    """Rule 5: in-memory executable regions and critical files vs disk."""
    findings = []
    for nid in sorted(view.processes):
        attrs = view.processes[nid].attributes
        if attrs.get("kernel_thread"):
            continue
        for m in view.mappings.get(nid, []):
            ma = m.attributes
            if "comparable" not in ma:
                continue
            if not ma["comparable"]:
                counters["regions_not_comparable"] = (
                    counters.get("regions_not_comparable", 0) + 1
                )
                continue
            if ma["observed_digest"] != ma["expected_digest"]:
                findings.append(
                    Finding(
                        5,
                        SEV_ALERT,
                        m.id,
                        "executable region does not match its on-disk content",
                        {
                            "pid": attrs["pid"],
                            "process": _proc_label(attrs),
                            "path": ma.get("path", ""),
                            "start": ma["start"],
                            "end": ma["end"],
                            "observed_digest": ma["observed_digest"],
                            "expected_digest": ma["expected_digest"],
                        },
                    )
                )

    for path in sorted(policy.critical_files):
        want = policy.critical_files[path]
        nodes = [n for n in view.files_by_path.get(path, []) if "digest" in n.attributes]
        if not nodes:
            subject = view.fallback_subject()
            if subject is not None:
                findings.append(
                    Finding(
                        5,
                        SEV_WARNING,
                        subject,
                        "critical file not measured",
                        {"path": path},
                    )
                )
            continue
        for node in nodes:
            got = node.attributes["digest"]
            if got != want:
                findings.append(
                    Finding(
                        5,
                        SEV_ALERT,
                        node.id,
                        "critical file does not match its baseline digest",
                        {"path": path, "observed_digest": got, "expected_digest": want},
                    )
                )
    return findings


def _namespace_rule(view, policy, counters):
    """Rule 6: init's namespaces vs policy defaults, plus count ceilings."""
    findings = []
    init_nids = view.by_pid.get(1, [])
    if not init_nids:
        subject = view.fallback_subject()
        if subject is not None:
            findings.append(
                Finding(
                    6,
                    SEV_WARNING,
                    subject,
                    "init process not measured; namespace rule not evaluated",
                    {},
                )
            )
    else:
        nid = init_nids[0]
        ns_map = view.namespaces_of.get(nid, {})
        for ns_type in sorted(policy.default_ns_inodes):
            want = policy.default_ns_inodes[ns_type]
            node = ns_map.get(ns_type)
            if node is None:
                if ns_type == "pid":
                    findings.append(
                        Finding(
                            6,
                            SEV_WARNING,
                            nid,
                            "init pid namespace membership unavailable",
                            {},
                        )
                    )
                continue
            have = node.attributes["inode"]
            if have != want:
                findings.append(
                    Finding(
                        6,
                        SEV_ALERT,
                        node.id,
                        f"init is not in the default {ns_type} namespace",
                        {"ns_type": ns_type, "expected_inode": want, "inode": have},
                    )
                )

    for ns_type in sorted(policy.expected_ns_counts):
        ceiling = policy.expected_ns_counts[ns_type]
        have = view.ns_count.get(ns_type, 0)
        if have > ceiling:
            subject = view.fallback_subject()
            if subject is not None:
                findings.append(
                    Finding(
                        6,
                        SEV_WARNING,
                        subject,
                        f"{ns_type} namespace count exceeds expectation",
                        {"ns_type": ns_type, "expected": ceiling, "count": have},
                    )
                )
    return findings


def _decode_table(node):
    entries = {}
    for text in node.attributes.get("entries", []):
        e = decode_got_entry(text)
        entries[(e["symbol"], e["slot_vaddr"])] = e
    return entries


def _relative_value(entry):
    """(module, offset) when known, else None."""
    if entry["module"] is not None and entry["module_offset"] is not None:
        return (entry["module"], entry["module_offset"])
    return None


def _got_stability(cur, prev, counters):
    """Rule 7: relocation slots across two snapshots."""
    findings = []
    for pid in sorted(set(cur.by_pid) & set(prev.by_pid)):
        for cur_nid in cur.by_pid[pid]:
            cur_attrs = cur.processes[cur_nid].attributes
            same = [
                p
                for p in prev.by_pid[pid]
                if prev.processes[p].attributes["start_time"]
                == cur_attrs["start_time"]
            ]
            restarted = not same
            prev_nid = same[0] if same else prev.by_pid[pid][0]
            cur_tables = cur.got_tables.get(cur_nid, {})
            prev_tables = prev.got_tables.get(prev_nid, {})
            if restarted and (cur_tables or prev_tables):
                findings.append(
                    Finding(
                        7,
                        SEV_WARNING,
                        cur_nid,
                        "process identity changed between snapshots; "
                        "slots compared module-relative only",
                        {
                            "pid": pid,
                            "previous_start_time": prev.processes[prev_nid].attributes[
                                "start_time"
                            ],
                            "start_time": cur_attrs["start_time"],
                        },
                    )
                )
            for obj in sorted(set(prev_tables) - set(cur_tables)):
                findings.append(
                    Finding(
                        7,
                        SEV_WARNING,
                        cur_nid,
                        "relocation table absent in current snapshot",
                        {"pid": pid, "object_path": obj},
                    )
                )
            for obj in sorted(set(cur_tables) & set(prev_tables)):
                table_node = cur_tables[obj]
                cur_entries = _decode_table(table_node)
                prev_entries = _decode_table(prev_tables[obj])
                for key in sorted(set(cur_entries) & set(prev_entries)):
                    findings.extend(
                        _slot_delta(
                            table_node.id,
                            pid,
                            obj,
                            prev_entries[key],
                            cur_entries[key],
                            restarted,
                            counters,
                        )
                    )
    return findings


def _slot_delta(subject, pid, obj, before, after, restarted, counters):
    if CLASS_UNREADABLE in (before["classification"], after["classification"]):
        counters["got_slots_unreadable"] = counters.get("got_slots_unreadable", 0) + 1
        return []
    evidence = {
        "pid": pid,
        "object_path": obj,
        "symbol": after["symbol"],
        "slot_vaddr": _hex(after["slot_vaddr"]),
        "before_class": before["classification"],
        "after_class": after["classification"],
        "before_value": "-" if before["stored"] is None else _hex(before["stored"]),
        "after_value": "-" if after["stored"] is None else _hex(after["stored"]),
        "before_module": before["module"] or "-",
        "after_module": after["module"] or "-",
    }

    def changed():
        rel_b, rel_a = _relative_value(before), _relative_value(after)
        if rel_b is not None or rel_a is not None:
            return rel_b != rel_a
        if restarted:
            return False  # absolute values not comparable across restarts
        return before["stored"] != after["stored"]

    b = before["classification"]
    a = after["classification"]
    if b == CLASS_UNRESOLVED:
        if a == CLASS_ANOMALOUS:
            return [
                Finding(
                    7,
                    SEV_ALERT,
                    subject,
                    "lazy slot resolved outside the dependency closure",
                    evidence,
                )
            ]
        return []
    if b == CLASS_RESOLVED:
        if a != CLASS_RESOLVED or changed():
            return [
                Finding(7, SEV_ALERT, subject, "resolved slot changed", evidence)
            ]
        return []
    # anomalous before: rule 7 constrains only slots seen resolved, but an
    # already-suspect slot that moves again is still worth an alert
    if a == CLASS_ANOMALOUS and changed():
        return [
            Finding(7, SEV_ALERT, subject, "anomalous slot changed", evidence)
        ]
    return []


def _socket_continuity(cur, prev, counters):
    """Rule 8: a socket may only move to descendants of its prior holders."""
    findings = []
    for inode in sorted(set(cur.socket_holders) & set(prev.socket_holders)):
        prev_holders = prev.socket_holders[inode]
        for holder in sorted(cur.socket_holders[inode]):
            if holder in prev_holders:
                continue
            if any(cur.is_ancestor(p, holder) for p in prev_holders):
                continue
            attrs = cur.processes[holder].attributes
            prev_pids = sorted(
                prev.processes[p].attributes["pid"] for p in prev_holders
            )
            findings.append(
                Finding(
                    8,
                    SEV_ALERT,
                    cur.socket_node[inode],
                    "socket moved to a process outside the holder's lineage",
                    {
                        "socket_inode": inode,
                        "previous_holder_pids": prev_pids,
                        "new_holder_pid": attrs["pid"],
                        "new_holder": _proc_label(attrs),
                    },
                )
            )
    return findings


# -- public per-rule entry points --------------------------------------------


def check_mapping_rules(graph, policy):
    return sorted(_mapping_rules(_View(graph), policy, {}), key=Finding.sort_key)


def check_text_integrity(graph, policy):
    return sorted(_text_integrity(_View(graph), policy, {}), key=Finding.sort_key)


def check_namespace_rule(graph, policy):
    return sorted(_namespace_rule(_View(graph), policy, {}), key=Finding.sort_key)


def check_got_stability(current, previous):
    return sorted(
        _got_stability(_View(current), _View(previous), {}), key=Finding.sort_key
    )


def check_socket_continuity(current, previous):
    return sorted(
        _socket_continuity(_View(current), _View(previous), {}), key=Finding.sort_key
    )


def appraise(current, previous=None, policy=None) -> Report:
    """Run all applicable rules; 7-8 only when a previous snapshot exists."""
    if policy is None:
        raise ValueError("a policy is required")
    view = _View(current)
    counters = {
        "processes": len(view.processes),
        "kernel_threads": 0,
        "rules_run": 8 if previous is not None else 6,
        "regions_not_comparable": 0,
    }
    findings = []
    findings.extend(_mapping_rules(view, policy, counters))
    findings.extend(_text_integrity(view, policy, counters))
    findings.extend(_namespace_rule(view, policy, counters))
    prev_id = None
    if previous is not None:
        prev_view = _View(previous)
        findings.extend(_got_stability(view, prev_view, counters))
        findings.extend(_socket_continuity(view, prev_view, counters))
        prev_id = snapshot_id(previous)
    findings.sort(key=Finding.sort_key)
    counters["alerts"] = sum(1 for f in findings if f.severity == SEV_ALERT)
    counters["warnings"] = sum(1 for f in findings if f.severity == SEV_WARNING)
    verdict = VERDICT_FAIL if counters["alerts"] else VERDICT_PASS
    return Report(
        current=snapshot_id(current),
        previous=prev_id,
        verdict=verdict,
        findings=findings,
        counters=counters,
    )


def render_text(report: Report) -> str:
    """Human-readable report, one line per finding."""
    lines = [
        f"snapshot {report.current[:12]} verdict {report.verdict.upper()} "
        f"({report.counters.get('alerts', 0)} alerts, "
        f"{report.counters.get('warnings', 0)} warnings)"
    ]
    if report.previous:
        lines.append(f"previous {report.previous[:12]}")
    for f in report.findings:
        ev = " ".join(f"{k}={v}" for k, v in sorted(f.evidence.items()))
        lines.append(
            f"[rule {f.rule}] {f.severity.upper()} {f.subject}: {f.summary}"
            + (f" ({ev})" if ev else "")
        )
    counters = " ".join(f"{k}={v}" for k, v in sorted(report.counters.items()))
    lines.append(f"counters: {counters}")
    return "\n".join(lines) + "\n"


def serialize_report(report: Report) -> bytes:
    doc = json.dumps(
        report.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )
    return doc.encode("utf-8") + b"\n"

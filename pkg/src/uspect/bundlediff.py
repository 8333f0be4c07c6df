"""Structural comparison of two measurement graphs.

Powers the diff command and gives operators the raw change list the
delta rules (7 and 8) reason over: node/edge churn, attribute changes,
relocation-slot deltas, and socket-holder transitions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .appraiser import _View
from .elfinspect import decode_got_entry


@dataclass
class GraphDiff:
    nodes_added: list = field(default_factory=list)
    nodes_removed: list = field(default_factory=list)
    attr_changes: list = field(default_factory=list)
    edges_added: list = field(default_factory=list)
    edges_removed: list = field(default_factory=list)
    got_deltas: list = field(default_factory=list)
    socket_transitions: list = field(default_factory=list)

    def is_empty(self):
        return not (
            self.nodes_added
            or self.nodes_removed
            or self.attr_changes
            or self.edges_added
            or self.edges_removed
            or self.got_deltas
            or self.socket_transitions
        )

    def to_dict(self):
        return {
            "diff_version": 1,
            "empty": self.is_empty(),
            "nodes_added": self.nodes_added,
            "nodes_removed": self.nodes_removed,
            "attr_changes": self.attr_changes,
            "edges_added": [list(e) for e in self.edges_added],
            "edges_removed": [list(e) for e in self.edges_removed],
            "got_deltas": self.got_deltas,
            "socket_transitions": self.socket_transitions,
        }


def _got_entry_deltas(before_node, after_node):
    deltas = []
    before = {
        (e["symbol"], e["slot_vaddr"]): e
        for e in map(decode_got_entry, before_node.attributes.get("entries", []))
    }
    after = {
        (e["symbol"], e["slot_vaddr"]): e
        for e in map(decode_got_entry, after_node.attributes.get("entries", []))
    }
    for key in sorted(set(before) & set(after)):
        b, a = before[key], after[key]
        if (b["stored"], b["classification"], b["module"], b["module_offset"]) != (
            a["stored"],
            a["classification"],
            a["module"],
            a["module_offset"],
        ):
            deltas.append(
                {
                    "object_path": after_node.attributes["object_path"],
                    "process_id": after_node.attributes["process_id"],
                    "symbol": key[0],
                    "slot_vaddr": f"0x{key[1]:x}",
                    "before_value": "-" if b["stored"] is None else f"0x{b['stored']:x}",
                    "after_value": "-" if a["stored"] is None else f"0x{a['stored']:x}",
                    "before_class": b["classification"],
                    "after_class": a["classification"],
                    "before_module": b["module"] or "-",
                    "after_module": a["module"] or "-",
                }
            )
    return deltas


def diff_graphs(before, after) -> GraphDiff:
    """Deterministic change list; diff(G, G) is empty."""
    out = GraphDiff()
    b_nodes = {n.id: n for n in before.nodes()}
    a_nodes = {n.id: n for n in after.nodes()}
    out.nodes_added = sorted(set(a_nodes) - set(b_nodes))
    out.nodes_removed = sorted(set(b_nodes) - set(a_nodes))
    for nid in sorted(set(b_nodes) & set(a_nodes)):
        b_attrs = b_nodes[nid].attributes
        a_attrs = a_nodes[nid].attributes
        for key in sorted(set(b_attrs) | set(a_attrs)):
            bv = b_attrs.get(key)
            av = a_attrs.get(key)
            if bv != av:
                out.attr_changes.append(
                    {"node": nid, "attribute": key, "before": bv, "after": av}
                )

    b_edges = set(before.edges())
    a_edges = set(after.edges())
    out.edges_added = sorted(a_edges - b_edges)
    out.edges_removed = sorted(b_edges - a_edges)

    b_tables = {
        (n.attributes["process_id"], n.attributes["object_path"]): n
        for n in before.nodes_of_kind("GotTable")
    }
    a_tables = {
        (n.attributes["process_id"], n.attributes["object_path"]): n
        for n in after.nodes_of_kind("GotTable")
    }
    for key in sorted(set(b_tables) & set(a_tables)):
        out.got_deltas.extend(_got_entry_deltas(b_tables[key], a_tables[key]))

    b_view = _View(before)
    a_view = _View(after)
    for inode in sorted(set(b_view.socket_holders) & set(a_view.socket_holders)):
        b_pids = sorted(
            b_view.processes[nid].attributes["pid"]
            for nid in b_view.socket_holders[inode]
        )
        a_pids = sorted(
            a_view.processes[nid].attributes["pid"]
            for nid in a_view.socket_holders[inode]
        )
        if b_pids != a_pids:
            out.socket_transitions.append(
                {
                    "socket_inode": inode,
                    "before_holder_pids": b_pids,
                    "after_holder_pids": a_pids,
                }
            )
    return out


def serialize_diff(diff: GraphDiff) -> bytes:
    doc = json.dumps(
        diff.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )
    return doc.encode("utf-8") + b"\n"


def render_diff_text(diff: GraphDiff) -> str:
    if diff.is_empty():
        return "no differences\n"
    lines = []
    for nid in diff.nodes_removed:
        lines.append(f"- node {nid}")
    for nid in diff.nodes_added:
        lines.append(f"+ node {nid}")
    for change in diff.attr_changes:
        lines.append(
            f"~ {change['node']} {change['attribute']}: "
            f"{change['before']!r} -> {change['after']!r}"
        )
    for edge in diff.edges_removed:
        lines.append(f"- edge {edge[0]} -{edge[1]}-> {edge[2]}")
    for edge in diff.edges_added:
        lines.append(f"+ edge {edge[0]} -{edge[1]}-> {edge[2]}")
    for delta in diff.got_deltas:
        lines.append(
            f"! slot {delta['object_path']}:{delta['symbol']} "
            f"{delta['before_value']} ({delta['before_class']}) -> "
            f"{delta['after_value']} ({delta['after_class']})"
        )
    for tr in diff.socket_transitions:
        lines.append(
            f"! socket {tr['socket_inode']} holders "
            f"{tr['before_holder_pids']} -> {tr['after_holder_pids']}"
        )
    return "\n".join(lines) + "\n"

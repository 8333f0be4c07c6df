"""Measurement graph: typed nodes, labeled edges, canonical bundle form.

The graph is the unit of evidence passed from collectors to the appraiser.
Node identity is a pure function of kind + identity-key attributes, so
independently collected partial graphs merge by id without coordination.
Serialization is canonical: equal graphs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import (
    AttributeConflict,
    DanglingEndpoint,
    GraphSealed,
    IntegrityViolation,
    InvalidAttribute,
    MetaMismatch,
    MissingIdentityKey,
    ParseError,
    SchemaViolation,
    UnknownKind,
)

BUNDLE_VERSION = 1

# Seconds of taken_at drift tolerated when merging partial graphs.
DEFAULT_MERGE_SKEW = 300

SCOPE_ROOT_ONLY = "root_only"
SCOPE_ALL = "all"

# Identity-key attributes per node kind, in the order they appear in the id.
IDENTITY_KEYS = {
    "SystemInfo": ("hostname",),
    "Package": ("name", "version", "arch"),
    "File": ("path", "device", "inode"),
    "FileRegion": ("file_id", "offset", "length", "perms"),
    "Process": ("pid", "start_time"),
    "MemoryMapping": ("process_id", "start"),
    "Namespace": ("ns_type", "inode"),
    "FileDescriptor": ("process_id", "fd"),
    "Socket": ("family", "socket_inode"),
    "GotTable": ("process_id", "object_path"),
}

KINDS = frozenset(IDENTITY_KEYS)

# label -> (source kind, allowed destination kinds)
EDGE_SCHEMA = {
    "runs": ("Process", ("File",)),
    "maps": ("Process", ("MemoryMapping",)),
    "backed_by": ("MemoryMapping", ("FileRegion",)),
    "region_of": ("FileRegion", ("File",)),
    "parent_of": ("Process", ("Process",)),
    "member_of": ("Process", ("Namespace",)),
    "holds": ("Process", ("FileDescriptor",)),
    "refers_to": ("FileDescriptor", ("File", "Socket")),
    "installed": ("SystemInfo", ("Package",)),
    "measured": ("SystemInfo", ("File",)),
}


def _check_scalar(key, value):
    # bool first: bool is an int subclass
    if isinstance(value, (bool, int, str)):
        return
    raise InvalidAttribute(f"attribute {key!r}: unsupported value {value!r}")


def check_attribute(key, value):
    """Validate one attribute value: scalar or homogeneous list of scalars.

    Floats are rejected on purpose; their textual form is not stable enough
    for bit-exact bundles.
    """
    if not isinstance(key, str) or not key:
        raise InvalidAttribute(f"attribute name must be a non-empty string, got {key!r}")
    if isinstance(value, list):
        if value:
            head = type(value[0])
            for item in value:
                _check_scalar(key, item)
                if type(item) is not head:
                    raise InvalidAttribute(f"attribute {key!r}: mixed-type list")
        return
    _check_scalar(key, value)


def node_id(kind, attributes):
    """Compute the deterministic id for a node: `<kind>:` + key fields."""
    if kind not in IDENTITY_KEYS:
        raise UnknownKind(f"unknown node kind {kind!r}")
    parts = []
    for key in IDENTITY_KEYS[kind]:
        if key not in attributes:
            raise MissingIdentityKey(f"{kind} node missing identity key {key!r}")
        value = attributes[key]
        if isinstance(value, bool) or not isinstance(value, (int, str)) or value == "":
            raise MissingIdentityKey(
                f"{kind} identity key {key!r} must be a non-empty string or integer, got {value!r}"
            )
        parts.append(str(value))
    return kind + ":" + "/".join(parts)


@dataclass
class SnapshotMeta:
    host: str
    taken_at: int  # UTC, integer seconds
    collector_version: str
    scope: str = SCOPE_ROOT_ONLY
    hash_algorithm: str = "sha256"
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "host": self.host,
            "taken_at": self.taken_at,
            "collector_version": self.collector_version,
            "scope": self.scope,
            "hash_algorithm": self.hash_algorithm,
            "warnings": sorted(set(self.warnings)),
        }

    @classmethod
    def from_dict(cls, raw):
        try:
            meta = cls(
                host=raw["host"],
                taken_at=raw["taken_at"],
                collector_version=raw["collector_version"],
                scope=raw["scope"],
                hash_algorithm=raw["hash_algorithm"],
                warnings=list(raw.get("warnings", [])),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad meta section: {exc}") from exc
        if not isinstance(meta.taken_at, int) or isinstance(meta.taken_at, bool):
            raise ParseError("meta.taken_at must be an integer")
        for name in ("host", "collector_version", "scope", "hash_algorithm"):
            if not isinstance(getattr(meta, name), str):
                raise ParseError(f"meta.{name} must be a string")
        return meta


@dataclass
class Node:
    id: str
    kind: str
    attributes: dict


class MeasurementGraph:
    """Mutable while building, sealable for read-only sharing."""

    def __init__(self, meta: SnapshotMeta):
        self.meta = meta
        self._nodes: dict[str, Node] = {}
        self._edges: set[tuple[str, str, str]] = set()
        self._sealed = False

    # -- construction ----------------------------------------------------

    def _mutating(self):
        if self._sealed:
            raise GraphSealed("graph is sealed")

    def upsert_node(self, kind, attributes) -> str:
        """Insert a node or union attributes into an existing one.

        Returns the node id.  A differing scalar value for an existing
        attribute raises AttributeConflict rather than guessing.
        """
        self._mutating()
        nid = node_id(kind, attributes)
        for key, value in attributes.items():
            check_attribute(key, value)
        existing = self._nodes.get(nid)
        if existing is None:
            if kind == "SystemInfo" and any(n.kind == "SystemInfo" for n in self._nodes.values()):
                raise IntegrityViolation("graph already holds a SystemInfo node")
            self._nodes[nid] = Node(id=nid, kind=kind, attributes=dict(attributes))
            return nid
        for key, value in attributes.items():
            if key in existing.attributes and existing.attributes[key] != value:
                raise AttributeConflict(
                    f"node {nid}: attribute {key!r} is {existing.attributes[key]!r}, refusing {value!r}"
                )
            existing.attributes[key] = value
        return nid

    def add_edge(self, src, label, dst):
        """Add one (src, label, dst) edge; duplicate insertion is a no-op."""
        self._mutating()
        if label not in EDGE_SCHEMA:
            raise SchemaViolation(f"unknown edge label {label!r}")
        src_node = self._nodes.get(src)
        dst_node = self._nodes.get(dst)
        if src_node is None or dst_node is None:
            missing = src if src_node is None else dst
            raise DanglingEndpoint(f"edge endpoint {missing!r} not in graph")
        want_src, want_dst = EDGE_SCHEMA[label]
        if src_node.kind != want_src or dst_node.kind not in want_dst:
            raise SchemaViolation(
                f"{label!r} not allowed from {src_node.kind} to {dst_node.kind}"
            )
        self._edges.add((src, label, dst))

    def seal(self):
        self._sealed = True
        return self

    # -- access ----------------------------------------------------------

    def node(self, nid) -> Node:
        return self._nodes[nid]

    def get_node(self, nid):
        return self._nodes.get(nid)

    def nodes(self):
        return list(self._nodes.values())

    def nodes_of_kind(self, kind):
        return [n for n in self._nodes.values() if n.kind == kind]

    def edges(self):
        return sorted(self._edges)

    def edges_from(self, src, label=None):
        return sorted(
            e for e in self._edges if e[0] == src and (label is None or e[1] == label)
        )

    def edges_to(self, dst, label=None):
        return sorted(
            e for e in self._edges if e[2] == dst and (label is None or e[1] == label)
        )

    def has_edge(self, src, label, dst):
        return (src, label, dst) in self._edges

    def __len__(self):
        return len(self._nodes)

    def __contains__(self, nid):
        return nid in self._nodes

    def __eq__(self, other):
        if not isinstance(other, MeasurementGraph):
            return NotImplemented
        return (
            self.meta.to_dict() == other.meta.to_dict()
            and {k: (n.kind, n.attributes) for k, n in self._nodes.items()}
            == {k: (n.kind, n.attributes) for k, n in other._nodes.items()}
            and self._edges == other._edges
        )


def merge(a: MeasurementGraph, b: MeasurementGraph, max_skew=DEFAULT_MERGE_SKEW) -> MeasurementGraph:
    """Union two partial graphs of the same snapshot.

    Commutative, associative, and idempotent: the resulting meta keeps the
    earliest taken_at and the union of warnings, so the result does not
    depend on merge order or repetition.
    """
    for name in ("host", "scope", "hash_algorithm", "collector_version"):
        va, vb = getattr(a.meta, name), getattr(b.meta, name)
        if va != vb:
            raise MetaMismatch(f"meta.{name} differs: {va!r} vs {vb!r}")
    if abs(a.meta.taken_at - b.meta.taken_at) > max_skew:
        raise MetaMismatch(
            f"taken_at skew {abs(a.meta.taken_at - b.meta.taken_at)}s exceeds {max_skew}s"
        )
    meta = SnapshotMeta(
        host=a.meta.host,
        taken_at=min(a.meta.taken_at, b.meta.taken_at),
        collector_version=a.meta.collector_version,
        scope=a.meta.scope,
        hash_algorithm=a.meta.hash_algorithm,
        warnings=sorted(set(a.meta.warnings) | set(b.meta.warnings)),
    )
    out = MeasurementGraph(meta)
    for side in (a, b):
        for node in side.nodes():
            out.upsert_node(node.kind, node.attributes)
    for side in (a, b):
        for src, label, dst in side.edges():
            out.add_edge(src, label, dst)
    return out


def verify_integrity(graph: MeasurementGraph):
    """Recheck structural invariants; raises IntegrityViolation."""
    seen_sysinfo = 0
    for node in graph.nodes():
        if node.kind not in KINDS:
            raise IntegrityViolation(f"node {node.id}: unknown kind {node.kind!r}")
        if node.kind == "SystemInfo":
            seen_sysinfo += 1
        recomputed = node_id(node.kind, node.attributes)
        if recomputed != node.id:
            raise IntegrityViolation(
                f"node id {node.id!r} does not match identity attributes ({recomputed!r})"
            )
    if seen_sysinfo > 1:
        raise IntegrityViolation("more than one SystemInfo node")
    for src, label, dst in graph.edges():
        if src not in graph or dst not in graph:
            missing = src if src not in graph else dst
            raise IntegrityViolation(f"edge endpoint {missing!r} missing")


def serialize_canonical(graph: MeasurementGraph) -> bytes:
    """Serialize to the canonical bundle form: stable bytes for equal graphs."""
    verify_integrity(graph)
    doc = {
        "bundle_version": BUNDLE_VERSION,
        "meta": graph.meta.to_dict(),
        "nodes": [
            {"id": n.id, "kind": n.kind, "attributes": n.attributes}
            for n in sorted(graph.nodes(), key=lambda n: n.id)
        ],
        "edges": [list(e) for e in sorted(graph.edges())],
    }
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return text.encode("utf-8") + b"\n"


def deserialize(data, permissive=False) -> MeasurementGraph:
    """Parse a bundle back into a graph.

    Unknown node kinds are rejected unless permissive is set (forward
    compatibility escape hatch); structural problems raise
    IntegrityViolation, malformed text raises ParseError with the byte
    offset where decoding stopped.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"bundle is not UTF-8: {exc}", offset=exc.start) from exc
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad bundle text at byte {exc.pos}: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise ParseError("bundle root must be an object")
    if doc.get("bundle_version") != BUNDLE_VERSION:
        raise ParseError(f"unsupported bundle_version {doc.get('bundle_version')!r}")
    for section in ("meta", "nodes", "edges"):
        if section not in doc:
            raise ParseError(f"bundle missing {section!r} section")
    meta = SnapshotMeta.from_dict(doc["meta"])
    graph = MeasurementGraph(meta)
    if not isinstance(doc["nodes"], list) or not isinstance(doc["edges"], list):
        raise ParseError("nodes and edges must be arrays")

    unknown: set[str] = set()
    for raw in doc["nodes"]:
        if not isinstance(raw, dict) or not {"id", "kind", "attributes"} <= set(raw):
            raise ParseError(f"malformed node entry: {raw!r}")
        kind, nid, attrs = raw["kind"], raw["id"], raw["attributes"]
        if not isinstance(attrs, dict):
            raise ParseError(f"node {nid!r}: attributes must be an object")
        if kind not in KINDS:
            if not permissive:
                raise UnknownKind(f"node {nid!r} has unknown kind {kind!r}")
            # kept verbatim; identity cannot be recomputed for foreign kinds
            unknown.add(nid)
            if nid in graph._nodes:
                raise IntegrityViolation(f"duplicate node id {nid!r}")
            graph._nodes[nid] = Node(id=nid, kind=kind, attributes=dict(attrs))
            continue
        for key, value in attrs.items():
            check_attribute(key, value)
        if node_id(kind, attrs) != nid:
            raise IntegrityViolation(
                f"node id {nid!r} does not match identity attributes"
            )
        if nid in graph._nodes:
            raise IntegrityViolation(f"duplicate node id {nid!r}")
        graph._nodes[nid] = Node(id=nid, kind=kind, attributes=dict(attrs))

    for raw in doc["edges"]:
        if not (isinstance(raw, list) and len(raw) == 3 and all(isinstance(x, str) for x in raw)):
            raise ParseError(f"malformed edge entry: {raw!r}")
        src, label, dst = raw
        if (src, label, dst) in graph._edges:
            raise IntegrityViolation(f"duplicate edge {raw!r}")
        if src not in graph._nodes or dst not in graph._nodes:
            missing = src if src not in graph._nodes else dst
            raise IntegrityViolation(f"edge references absent node {missing!r}")
        if src in unknown or dst in unknown:
            graph._edges.add((src, label, dst))  # schema unknown for foreign kinds
            continue
        try:
            graph.add_edge(src, label, dst)
        except SchemaViolation:
            raise IntegrityViolation(f"edge {raw!r} violates the schema") from None
    return graph

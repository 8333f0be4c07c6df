"""Appraisal policy: whitelists, file baselines, expected namespace inodes."""

from __future__ import annotations

import fnmatch
import json
import os
from dataclasses import dataclass, field

from .errors import PolicyParseError

MATCH_MODES = ("basename", "full_path")

# Language runtimes and JIT hosts: legitimately carry writable-executable
# or anonymous-executable regions and load extensions outside their ELF
# dependency lists, so a fresh host policy exempts them by name from the
# mapping rules rather than alerting on every interpreter process.
INTERPRETER_WHITELIST = (
    "java",
    "node",
    "perl",
    "python2*",
    "python3*",
    "ruby",
)


@dataclass
class Policy:
    wx_whitelist: list = field(default_factory=list)
    arbitrary_load_whitelist: list = field(default_factory=list)
    anon_exec_whitelist: list = field(default_factory=list)
    critical_files: dict = field(default_factory=dict)  # path -> expected digest
    default_ns_inodes: dict = field(default_factory=dict)  # ns_type -> inode
    match_mode: str = "basename"
    # optional: per-type namespace count ceiling; exceeding it is a warning
    expected_ns_counts: dict = field(default_factory=dict)

    def validate(self):
        for name, wl in (
            ("wx_whitelist", self.wx_whitelist),
            ("arbitrary_load_whitelist", self.arbitrary_load_whitelist),
            ("anon_exec_whitelist", self.anon_exec_whitelist),
        ):
            if not isinstance(wl, list) or any(
                not isinstance(e, str) or not e for e in wl
            ):
                raise PolicyParseError(f"{name} must be a list of non-empty strings")
        if not isinstance(self.critical_files, dict) or any(
            not isinstance(k, str) or not isinstance(v, str)
            for k, v in self.critical_files.items()
        ):
            raise PolicyParseError("critical_files must map paths to digest strings")
        if not isinstance(self.default_ns_inodes, dict):
            raise PolicyParseError("default_ns_inodes must be a map")
        if "pid" not in self.default_ns_inodes:
            raise PolicyParseError("default_ns_inodes must cover the pid type")
        for k, v in self.default_ns_inodes.items():
            if not isinstance(v, int) or v <= 0:
                raise PolicyParseError(f"default_ns_inodes[{k}] must be a positive integer")
        if self.match_mode not in MATCH_MODES:
            raise PolicyParseError(f"match_mode must be one of {MATCH_MODES}")
        for k, v in self.expected_ns_counts.items():
            if not isinstance(v, int) or v < 1:
                raise PolicyParseError(f"expected_ns_counts[{k}] must be a positive integer")
        return self

    def matches(self, exe_path, whitelist):
        """Whitelist membership for a process's executable path.

        Entries are compared by name (or full path, per match_mode) and
        may use shell-style wildcards, so one entry like python3* covers
        every minor version.
        """
        if not exe_path:
            return False
        name = (
            os.path.basename(exe_path)
            if self.match_mode == "basename"
            else exe_path
        )
        return any(fnmatch.fnmatchcase(name, entry) for entry in whitelist)

    def to_dict(self):
        return {
            "policy_version": 1,
            "wx_whitelist": sorted(self.wx_whitelist),
            "arbitrary_load_whitelist": sorted(self.arbitrary_load_whitelist),
            "anon_exec_whitelist": sorted(self.anon_exec_whitelist),
            "critical_files": dict(sorted(self.critical_files.items())),
            "default_ns_inodes": dict(sorted(self.default_ns_inodes.items())),
            "match_mode": self.match_mode,
            "expected_ns_counts": dict(sorted(self.expected_ns_counts.items())),
        }


def from_dict(doc):
    if not isinstance(doc, dict):
        raise PolicyParseError("policy document must be an object")
    version = doc.get("policy_version", 1)
    if version != 1:
        raise PolicyParseError(f"unsupported policy_version {version!r}")
    known = {
        "policy_version",
        "wx_whitelist",
        "arbitrary_load_whitelist",
        "anon_exec_whitelist",
        "critical_files",
        "default_ns_inodes",
        "match_mode",
        "expected_ns_counts",
    }
    unknown = set(doc) - known
    if unknown:
        raise PolicyParseError(f"unknown policy fields: {sorted(unknown)}")
    return Policy(
        wx_whitelist=list(doc.get("wx_whitelist", [])),
        arbitrary_load_whitelist=list(doc.get("arbitrary_load_whitelist", [])),
        anon_exec_whitelist=list(doc.get("anon_exec_whitelist", [])),
        critical_files=dict(doc.get("critical_files", {})),
        default_ns_inodes=dict(doc.get("default_ns_inodes", {})),
        match_mode=doc.get("match_mode", "basename"),
        expected_ns_counts=dict(doc.get("expected_ns_counts", {})),
    ).validate()


def load_policy(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise PolicyParseError(f"cannot read policy {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PolicyParseError(f"policy {path} is not valid JSON: {exc}") from exc
    return from_dict(doc)


def save_policy(policy, path):
    with open(path, "w") as f:
        json.dump(policy.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def _read_ns_inode(pid, ns_type):
    target = os.readlink(f"/proc/{pid}/ns/{ns_type}")
    return int(target[target.index("[") + 1 : target.index("]")])


def derive_host_policy(ns_types=("pid", "mnt", "net", "uts", "ipc", "user", "cgroup")):
    """Baseline policy from the running host.

    Namespace defaults come from pid 1 when readable; otherwise from the
    calling process (correct whenever the caller shares init's namespaces,
    which policy generation on a healthy host does).  Returns
    (policy, warnings).
    """
    warnings = []
    inodes = {}
    for ns_type in ns_types:
        try:
            inodes[ns_type] = _read_ns_inode(1, ns_type)
        except OSError:
            try:
                inodes[ns_type] = _read_ns_inode("self", ns_type)
                warnings.append(
                    f"init ns/{ns_type} unreadable; defaulted from the calling process"
                )
            except OSError:
                warnings.append(f"ns/{ns_type} unavailable; left out of policy")
    policy = Policy(
        wx_whitelist=list(INTERPRETER_WHITELIST),
        arbitrary_load_whitelist=list(INTERPRETER_WHITELIST),
        anon_exec_whitelist=list(INTERPRETER_WHITELIST),
        default_ns_inodes=inodes,
    )
    policy.validate()
    return policy, warnings

"""Userspace integrity measurement toolkit.

Collectors snapshot system and per-process runtime state into a portable
graph bundle; the appraiser evaluates bundles against an eight-rule policy
to surface memory-only implant techniques.
"""

__version__ = "1.0.0"

"""Reputation-based detection of malicious packet-dropping nodes in a
mobile ad hoc network: protocol library, deterministic simulator, and
experiment harness."""

__version__ = "0.1.0"

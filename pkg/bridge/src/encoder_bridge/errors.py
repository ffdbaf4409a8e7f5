from __future__ import annotations


class BridgeError(Exception):
    pass


class ModelLoadError(BridgeError):
    """Encoder name not registered or weights failed to load."""


class DecodeError(BridgeError):
    """An input image is missing or undecodable."""


class PairResolutionError(BridgeError):
    """A (prompt, seed) pair could not be matched against the manifests."""


class JobSpecError(BridgeError):
    """Malformed job-spec JSON."""

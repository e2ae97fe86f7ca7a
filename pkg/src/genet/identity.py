"""Node identifiers and the local routing function.

Every routing decision in the overlay is made from two identifiers only: the
origin of a join request and the id of the node currently holding it.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

ID_BITS = 160
ID_BYTES = ID_BITS // 8
ID_HEX_LEN = ID_BITS // 4
ID_MASK = (1 << ID_BITS) - 1

DEFAULT_CHILDREN_LIMIT = 10

FNV64_OFFSET = 14695981039346656037
FNV64_PRIME = 1099511628211
MASK64 = (1 << 64) - 1


@dataclass(frozen=True, order=True)
class NodeId:
    """A 160-bit opaque identifier, rendered as 40 lowercase hex characters."""

    value: int

    def __post_init__(self):
        if not 0 <= self.value <= ID_MASK:
            raise ValueError(f"NodeId out of range: {self.value!r}")

    @classmethod
    def from_hex(cls, text: str) -> NodeId:
        if len(text) != ID_HEX_LEN or text.lower() != text:
            raise ValueError(f"expected {ID_HEX_LEN} lowercase hex chars, got {text!r}")
        return cls(int(text, 16))

    @classmethod
    def from_bytes(cls, data: bytes) -> NodeId:
        if len(data) != ID_BYTES:
            raise ValueError(f"expected {ID_BYTES} bytes, got {len(data)}")
        return cls(int.from_bytes(data, "big"))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(ID_BYTES, "big")

    def hex(self) -> str:
        return format(self.value, f"0{ID_HEX_LEN}x")

    def __xor__(self, other: NodeId) -> NodeId:
        return NodeId(self.value ^ other.value)

    def __str__(self) -> str:
        return self.hex()

    def __repr__(self) -> str:
        return f"NodeId({self.hex()[:8]}…)"


def new_random_id(rng: random.Random) -> NodeId:
    return NodeId(rng.getrandbits(ID_BITS))


def hash64(data: bytes) -> int:
    """64-bit FNV-1a digest of ``data``."""
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & MASK64
    return h


def fmix64(h: int) -> int:
    """MurmurHash3 64-bit finalizer (bijective avalanche step)."""
    h ^= h >> 33
    h = (h * 0xFF51AFD7ED558CCD) & MASK64
    h ^= h >> 33
    h = (h * 0xC4CEB9FE1A85EC53) & MASK64
    h ^= h >> 33
    return h


def route_hash(data: bytes) -> int:
    """FNV-1a followed by the fmix64 finalizer.

    Plain FNV-1a is not usable for ``mod ChildrenLimit`` bucketing across tree
    levels: its lowest output bit is the parity of the input bytes' low bits,
    so every origin in one subtree lands on indices of a single parity one
    level down. The finalizer spreads all 64 bits into the low ones.
    """
    return fmix64(hash64(data))


HASHES: dict[str, Callable[[bytes], int]] = {
    "fnv1a-mix": route_hash,
    "fnv1a": hash64,
}
DEFAULT_HASH = "fnv1a-mix"


def route_index(
    origin: NodeId,
    node: NodeId,
    children_limit: int = DEFAULT_CHILDREN_LIMIT,
    hash_fn: Callable[[bytes], int] = route_hash,
) -> int:
    """Child slot that a request from ``origin`` is delegated to at ``node``."""
    if children_limit < 1:
        raise ValueError("children_limit must be >= 1")
    return hash_fn((origin ^ node).to_bytes()) % children_limit


def balanced_depth(n: int, children_limit: int = DEFAULT_CHILDREN_LIMIT) -> int:
    """ceil(log_L n): smallest d with L**d >= n, computed without floats."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if children_limit < 2:
        return n - 1
    depth, capacity = 0, 1
    while capacity < n:
        capacity *= children_limit
        depth += 1
    return depth

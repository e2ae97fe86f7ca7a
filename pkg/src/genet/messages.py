"""Wire messages shared by the overlay, the relay and trace files.

Serialized form is a JSON object with exactly the keys
``type, origin, to, payload, ts``; ids are 40-char hex strings.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

from genet.identity import NodeId

JOIN = "join"
SIGNAL_REPLY = "signal-reply"
STATUS = "status"
DISCONNECT = "disconnect"

MESSAGE_TYPES = (JOIN, SIGNAL_REPLY, STATUS, DISCONNECT)

WIRE_FIELDS = ("type", "origin", "to", "payload", "ts")


@dataclass(frozen=True)
class Message:
    type: str
    origin: NodeId
    to: Optional[NodeId]
    payload: str = ""
    ts: float = 0.0

    def __post_init__(self):
        if self.type not in MESSAGE_TYPES:
            raise ValueError(f"unknown message type {self.type!r}")

    def at(self, ts: float) -> Message:
        return replace(self, ts=ts)

    def addressed_to(self, to: NodeId) -> Message:
        return replace(self, to=to)

    def to_dict(self) -> dict:
        return {
            "type": self.type,
            "origin": self.origin.hex(),
            "to": self.to.hex() if self.to is not None else None,
            "payload": self.payload,
            "ts": self.ts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> Message:
        missing = [k for k in WIRE_FIELDS if k not in data]
        if missing:
            raise ValueError(f"message missing fields: {missing}")
        to = data["to"]
        return cls(
            type=data["type"],
            origin=NodeId.from_hex(data["origin"]),
            to=NodeId.from_hex(to) if to is not None else None,
            payload=data["payload"],
            ts=float(data["ts"]),
        )

    @classmethod
    def from_json(cls, text: str) -> Message:
        return cls.from_dict(json.loads(text))


def join_signal(origin: NodeId, to: NodeId, session: str, index: int, ts: float = 0.0) -> Message:
    """One trickled signal of a join attempt.

    The payload stands in for an ICE candidate. Its ``session`` prefix plays
    the role of the ICE username fragment: it identifies the connection attempt
    the signal belongs to, so a retried join is not mistaken for a late
    signal of an expired one.
    """
    return Message(JOIN, origin, to, f"{session}/{index}", ts)


def signal_session(payload: str) -> str:
    return payload.split("/", 1)[0]

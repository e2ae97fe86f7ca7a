"""Signaling relay: forwards join and reply messages between peers that do
not have a direct channel yet.

A channel is anything with a ``send(message)`` method; in the simulator it is
an in-memory link with sampled latency, in a real deployment a WebSocket.
"""
from __future__ import annotations

from typing import Optional, Protocol

from genet.identity import NodeId
from genet.messages import Message


class Channel(Protocol):
    def send(self, msg: Message) -> None: ...


class RelayError(Exception):
    pass


class DuplicateRegistration(RelayError):
    """The id already has an active channel (id collision or double join)."""


class Undeliverable(RelayError):
    def __init__(self, msg: Message):
        super().__init__(f"no channel registered for {msg.to}")
        self.message = msg


class RelayRegistry:
    """Maps node ids to their relay channel; the root is always registered."""

    def __init__(self, root: NodeId, root_channel: Channel):
        self.root = root
        self.routes: dict[NodeId, Channel] = {root: root_channel}
        self.delivered = 0
        self.undeliverable = 0

    def __contains__(self, id: NodeId) -> bool:
        return id in self.routes

    def __len__(self):
        return len(self.routes)

    def register(self, id: NodeId, channel: Channel):
        if id in self.routes:
            raise DuplicateRegistration(f"{id} already registered")
        self.routes[id] = channel

    def unregister(self, id: NodeId):
        if id == self.root:
            raise RelayError("the root stays registered")
        self.routes.pop(id, None)

    def forward(self, msg: Message) -> Channel:
        """Deliver ``msg`` on the target's channel, or raise :class:`Undeliverable`.

        A message without a destination goes to the root.
        """
        target = self.root if msg.to is None else msg.to
        channel: Optional[Channel] = self.routes.get(target)
        if channel is None:
            self.undeliverable += 1
            raise Undeliverable(msg)
        channel.send(msg)
        self.delivered += 1
        return channel

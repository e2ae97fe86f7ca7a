import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from genet.identity import NodeId
from genet.messages import JOIN, SIGNAL_REPLY, WIRE_FIELDS, Message, join_signal, signal_session
from genet.relay import DuplicateRegistration, RelayError, RelayRegistry, Undeliverable


class Inbox:
    def __init__(self):
        self.got = []

    def send(self, msg):
        self.got.append(msg)


ROOT, A, B = NodeId(1), NodeId(2), NodeId(3)


def test_wire_form_has_exactly_the_five_keys():
    msg = join_signal(A, ROOT, "a1", 0, ts=12.5)
    data = json.loads(msg.to_json())
    assert tuple(data) == WIRE_FIELDS
    assert data["origin"] == A.hex() and data["payload"] == "a1/0"
    assert Message.from_json(msg.to_json()) == msg


def test_null_destination_round_trips():
    msg = Message(JOIN, A, None)
    assert Message.from_dict(msg.to_dict()).to is None


def test_rejects_unknown_type_and_missing_fields():
    with pytest.raises(ValueError):
        Message("hello", A, B)
    with pytest.raises(ValueError):
        Message.from_dict({"type": JOIN, "origin": A.hex()})


@given(st.text(alphabet="abc0123", min_size=1, max_size=6), st.integers(0, 99))
def test_session_prefix(session, i):
    assert signal_session(join_signal(A, B, session, i).payload) == session


def registry():
    root = Inbox()
    return RelayRegistry(ROOT, root), root


def test_forward_to_registered_channel():
    reg, _ = registry()
    inbox = Inbox()
    reg.register(A, inbox)
    msg = Message(SIGNAL_REPLY, B, A, "a1/r0")
    assert reg.forward(msg) is inbox
    assert inbox.got == [msg]


def test_message_without_destination_goes_to_root():
    reg, root = registry()
    reg.forward(Message(JOIN, A, None, "a1/0"))
    assert len(root.got) == 1


def test_unregistered_target_is_reported():
    reg, _ = registry()
    msg = Message(SIGNAL_REPLY, B, A)
    with pytest.raises(Undeliverable) as err:
        reg.forward(msg)
    assert err.value.message == msg
    assert reg.undeliverable == 1


def test_duplicate_registration_rejected_but_reregister_after_close_works():
    reg, _ = registry()
    reg.register(A, Inbox())
    with pytest.raises(DuplicateRegistration):
        reg.register(A, Inbox())
    reg.unregister(A)
    with pytest.raises(Undeliverable):
        reg.forward(Message(SIGNAL_REPLY, B, A))
    second = Inbox()
    reg.register(A, second)
    reg.forward(Message(SIGNAL_REPLY, B, A))
    assert len(second.got) == 1


def test_unregister_unknown_is_noop_and_root_is_pinned():
    reg, _ = registry()
    reg.unregister(B)
    assert len(reg) == 1
    with pytest.raises(RelayError):
        reg.unregister(ROOT)


@given(st.lists(st.sampled_from([A, B, NodeId(9)]), max_size=60))
def test_fifo_and_conservation(targets):
    reg, _ = registry()
    boxes = {A: Inbox(), B: Inbox()}
    for nid, box in boxes.items():
        reg.register(nid, box)
    sent = {A: [], B: []}
    failed = 0
    for i, to in enumerate(targets):
        msg = Message(SIGNAL_REPLY, ROOT, to, str(i))
        try:
            reg.forward(msg)
            sent[to].append(msg)
        except Undeliverable:
            failed += 1
    for nid in boxes:
        assert boxes[nid].got == sent[nid]
    assert reg.delivered + reg.undeliverable == len(targets)
    assert reg.undeliverable == failed

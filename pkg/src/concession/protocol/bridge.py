"""Wire bridge that lets external agents take part in a negotiation.

Every turn the bridge sends the acting party one request and waits for one
reply, both JSON objects::

    {"type": "request", "negotiation_id": ..., "turn": t, "history": [...]}
    {"type": "reply", "negotiation_id": ..., "turn": t,
     "reply": {"message": ..., "deal": bool, "offer": number | null}}

``history`` lists the offers so far as ``{turn, role, offer, message}``.
A reply with ``deal: true`` accepts the standing opponent offer; one with
``deal: false`` and a null offer walks away.  When the negotiation ends both
parties get ``{"type": "end", ...}`` carrying the outcome.

Transports: newline-delimited JSON over a child process's stdin/stdout,
or 4-byte big-endian length-prefixed JSON frames over a socket.
"""

from __future__ import annotations

import json
import queue
import socket
import struct
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Union

from ..errors import BridgeError, BridgeTimeout, NonNumericOffer, SchemaError, SchemaViolation, TurnMismatch
from .types import (
    MALFORMED_REPLY,
    MAX_ROUNDS,
    QUIT,
    TIMEOUT,
    Action,
    Event,
    NegotiationTranscript,
    Outcome,
    ScenarioConfig,
    TurnView,
    role_for_turn,
)

DEFAULT_TIMEOUT = 60.0
REPLY_FIELDS = {"message", "deal", "offer"}


def request_message(negotiation_id: str, turn: int, history: Sequence[Event]) -> dict:
    return {
        "type": "request",
        "negotiation_id": negotiation_id,
        "turn": turn,
        "history": [
            {"turn": e.turn, "role": e.role, "offer": e.offer, "message": e.message}
            for e in history
            if e.action == "offer"
        ],
    }


def reply_message(negotiation_id: str, turn: int, action: Action) -> dict:
    """Encode an agent action as a wire reply."""
    offer = action.offer if action.kind == "offer" else None
    return {
        "type": "reply",
        "negotiation_id": negotiation_id,
        "turn": turn,
        "reply": {"message": action.message, "deal": action.kind == "accept", "offer": offer},
    }


def end_message(negotiation_id: str, outcome: Outcome) -> dict:
    return {
        "type": "end",
        "negotiation_id": negotiation_id,
        "turn": outcome.turn,
        "outcome": {"kind": outcome.kind, "price": outcome.price, "reason": outcome.reason},
    }


def history_events(request: dict) -> tuple[Event, ...]:
    """Rebuild visible history from a request, for agents on the far side."""
    return tuple(
        Event(int(h["turn"]), h["role"], "offer", offer=float(h["offer"]), message=h.get("message"))
        for h in request.get("history", [])
    )


def validate_reply(msg, negotiation_id: str, turn: int, standing: Optional[float]) -> Action:
    """Turn a wire reply into an action or raise the matching bridge error."""
    from ..ingest import parse_offer

    if not isinstance(msg, dict) or msg.get("type") != "reply":
        raise SchemaViolation("expected an object with type 'reply'")
    if msg.get("negotiation_id") != negotiation_id or msg.get("turn") != turn:
        raise TurnMismatch(
            f"reply for {msg.get('negotiation_id')!r} turn {msg.get('turn')!r}, "
            f"pending {negotiation_id!r} turn {turn}"
        )
    body = msg.get("reply")
    if not isinstance(body, dict) or not set(body) <= REPLY_FIELDS or "deal" not in body:
        raise SchemaViolation("reply must hold 'deal' plus optional 'message' and 'offer'")
    deal, message = body["deal"], body.get("message")
    if not isinstance(deal, bool):
        raise SchemaViolation("'deal' must be a boolean")
    if message is not None and not isinstance(message, str):
        raise SchemaViolation("'message' must be text")
    if deal:
        if standing is None:
            raise SchemaViolation("deal=true with no standing opponent offer")
        return Action("accept", message=message)
    try:
        offer = parse_offer(body.get("offer"))
    except SchemaError as exc:
        raise NonNumericOffer(str(exc)) from None
    if offer is None:
        return Action("quit", message=message)
    return Action("offer", offer=offer, message=message)


@dataclass
class BridgeSession:
    """State of one bridged negotiation; one prompt is pending at a time."""

    negotiation_id: str
    scenario: ScenarioConfig
    max_reprompts: int = 1
    turn: int = 1
    events: list[Event] = field(default_factory=list)
    retries: int = 0
    outcome: Optional[Outcome] = None

    @property
    def role(self) -> str:
        return role_for_turn(self.turn)

    @property
    def standing_offer(self) -> Optional[float]:
        return TurnView(self.negotiation_id, self.turn, self.role, tuple(self.events)).standing_offer

    def pending_request(self) -> dict:
        return request_message(self.negotiation_id, self.turn, self.events)

    def finish(self, outcome: Outcome) -> Outcome:
        self.outcome = outcome
        return outcome

    def transcript(self) -> NegotiationTranscript:
        if self.outcome is None:
            raise BridgeError("negotiation still running")
        return NegotiationTranscript(
            negotiation_id=self.negotiation_id,
            events=tuple(self.events),
            outcome=self.outcome,
            scenario=self.scenario.name,
            seller_reservation=self.scenario.seller_reservation,
            buyer_reservation=self.scenario.buyer_reservation,
        )


def bridge_step(session: BridgeSession, reply) -> Union[dict, Outcome]:
    """Apply one reply; return the next request or the terminal outcome.

    A malformed reply earns ``max_reprompts`` re-sends of the same request;
    after that the negotiation ends in NoDeal(malformed_reply).
    """
    if session.outcome is not None:
        raise BridgeError("negotiation already finished")
    try:
        action = validate_reply(reply, session.negotiation_id, session.turn, session.standing_offer)
    except BridgeError:
        if session.retries < session.max_reprompts:
            session.retries += 1
            return session.pending_request()
        return session.finish(Outcome.no_deal(MALFORMED_REPLY, turn=session.turn))

    session.retries = 0
    turn, role = session.turn, session.role
    if action.kind == "accept":
        price = session.standing_offer
        session.events.append(Event(turn, role, "accept", message=action.message))
        return session.finish(Outcome.deal(price, turn))
    if action.kind == "quit":
        session.events.append(Event(turn, role, "quit", message=action.message))
        return session.finish(Outcome.no_deal(QUIT, turn=turn))
    session.events.append(Event(turn, role, "offer", offer=float(action.offer), message=action.message))
    if turn >= session.scenario.max_rounds:
        return session.finish(Outcome.no_deal(MAX_ROUNDS, turn=session.scenario.max_rounds))
    session.turn += 1
    return session.pending_request()


# ---------------------------------------------------------------------------
# Transports


class Transport(Protocol):
    def send(self, obj: dict) -> None: ...

    def receive(self, timeout: float) -> object: ...

    def close(self) -> None: ...


class _Malformed:
    """Placeholder for a frame that was not valid JSON."""

    def __init__(self, raw: str):
        self.raw = raw


def _decode(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return _Malformed(raw)


def _encode(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


class LocalTransport:
    """In-process transport around an :class:`Agent`; no serialization shortcuts.

    Requests and replies still pass through JSON so the agent sees exactly
    what a remote one would.
    """

    def __init__(self, agent):
        self.agent = agent
        self._reply: Optional[str] = None

    def send(self, obj: dict) -> None:
        msg = json.loads(_encode(obj))
        if msg["type"] != "request":
            return
        view = TurnView(msg["negotiation_id"], msg["turn"], self.agent.role, history_events(msg))
        action = self.agent.decide(view)
        self._reply = _encode(reply_message(msg["negotiation_id"], msg["turn"], action))

    def receive(self, timeout: float):
        if self._reply is None:
            raise BridgeTimeout("no reply pending")
        raw, self._reply = self._reply, None
        return _decode(raw)

    def close(self) -> None:
        pass


class SubprocessTransport:
    """Newline-delimited JSON over a child process's stdin and stdout."""

    def __init__(self, argv: Sequence[str], env: Optional[dict] = None):
        self.proc = subprocess.Popen(
            list(argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
            env=env,
        )
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send(self, obj: dict) -> None:
        assert self.proc.stdin is not None
        try:
            self.proc.stdin.write(_encode(obj) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeTimeout(f"agent process unreachable: {exc}") from None

    def receive(self, timeout: float):
        while True:
            try:
                line = self._lines.get(timeout=timeout)
            except queue.Empty:
                raise BridgeTimeout(f"no reply within {timeout:g}s") from None
            if line is None:
                # Put the marker back so later calls also see end-of-stream.
                self._lines.put(None)
                raise BridgeTimeout("agent process closed its output")
            if line.strip():
                return _decode(line)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                assert self.proc.stdin is not None
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except (subprocess.TimeoutExpired, OSError):
                self.proc.kill()
                self.proc.wait()


_HEADER = struct.Struct(">I")


def send_frame(sock: socket.socket, obj: dict) -> None:
    data = _encode(obj).encode("utf-8")
    sock.sendall(_HEADER.pack(len(data)) + data)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise EOFError("socket closed")
        buf.extend(chunk)
    return bytes(buf)


def recv_frame(sock: socket.socket):
    (size,) = _HEADER.unpack(_recv_exact(sock, _HEADER.size))
    return _decode(_recv_exact(sock, size).decode("utf-8", errors="replace"))


class SocketTransport:
    """Length-prefixed JSON frames over a connected stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send(self, obj: dict) -> None:
        try:
            self.sock.settimeout(None)
            send_frame(self.sock, obj)
        except OSError as exc:
            raise BridgeTimeout(f"socket unreachable: {exc}") from None

    def receive(self, timeout: float):
        self.sock.settimeout(timeout)
        try:
            return recv_frame(self.sock)
        except socket.timeout:
            raise BridgeTimeout(f"no reply within {timeout:g}s") from None
        except (EOFError, OSError) as exc:
            raise BridgeTimeout(f"socket closed: {exc}") from None

    def close(self) -> None:
        self.sock.close()


# ---------------------------------------------------------------------------
# Driver


def run_bridged(
    scenario: ScenarioConfig,
    buyer: Transport,
    seller: Transport,
    negotiation_id: str = "",
    timeout: float = DEFAULT_TIMEOUT,
    max_reprompts: int = 1,
) -> NegotiationTranscript:
    """Run one negotiation with both parties reached through transports."""
    session = BridgeSession(negotiation_id, scenario, max_reprompts=max_reprompts)
    parties = {"buyer": buyer, "seller": seller}
    step: Union[dict, Outcome] = session.pending_request()
    while isinstance(step, dict):
        party = parties[session.role]
        party.send(step)
        try:
            reply = party.receive(timeout)
        except BridgeTimeout:
            step = session.finish(Outcome.no_deal(TIMEOUT, turn=session.turn))
            break
        step = bridge_step(session, reply)
    end = end_message(negotiation_id, step)
    for party in parties.values():
        try:
            party.send(end)
        except BridgeError:
            pass
    return session.transcript()


def reply_for(agent, request: dict) -> dict:
    """Scripted-side helper: the reply ``agent`` gives to ``request``."""
    view = TurnView(request["negotiation_id"], request["turn"], agent.role, history_events(request))
    return reply_message(request["negotiation_id"], request["turn"], agent.decide(view))


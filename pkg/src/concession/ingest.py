"""Transcript JSONL parsing, offer-trajectory extraction and corpus persistence.

A transcript file holds one JSON object per line.  Event records carry
``negotiation_id``, ``turn``, ``role``, ``offer``, ``deal`` and ``message``
(plus an optional ``action``).  Files written by this package also end each
negotiation with an outcome record (``"type": "outcome"``) so that the
result and the reservation prices survive a round trip; imported files
may omit it, in which case the outcome is inferred from the last event.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Optional

import numpy as np

from .errors import CorruptCorpusError, SchemaError
from .model import OfferTrajectory
from .protocol.types import (
    MAX_ROUNDS,
    QUIT,
    REASONS,
    ROLES,
    Event,
    NegotiationTranscript,
    Outcome,
)

TRANSCRIPTS_FILE = "transcripts.jsonl"
MANIFEST_FILE = "manifest.json"
SOURCES = ("simulated", "imported")
PROTOCOLS = ("natural_language", "alternating_only")
ACTIONS = ("offer", "accept", "quit", "message")


@dataclass(frozen=True)
class TranscriptRecord:
    negotiation_id: str
    turn: int
    role: str
    message: Optional[str] = None
    offer: Optional[float] = None
    deal: bool = False
    action: Optional[str] = None

    def resolved_action(self) -> str:
        if self.action is not None:
            return self.action
        if self.deal:
            return "accept"
        return "offer" if self.offer is not None else "message"

    def to_event(self) -> Event:
        action = self.resolved_action()
        return Event(self.turn, self.role, action, offer=self.offer, message=self.message)  # type: ignore[arg-type]


@dataclass(frozen=True)
class ParseError:
    line: int
    negotiation_id: Optional[str]
    message: str

    def __str__(self) -> str:
        where = f" ({self.negotiation_id})" if self.negotiation_id else ""
        return f"line {self.line}{where}: {self.message}"


@dataclass(frozen=True)
class Corpus:
    transcripts: tuple[NegotiationTranscript, ...]
    source: str = "simulated"
    protocol: str = "alternating_only"
    scenario: str = ""
    scenario_config: Optional[dict] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "transcripts", tuple(self.transcripts))
        if self.source not in SOURCES:
            raise SchemaError(f"source must be one of {SOURCES}")
        if self.protocol not in PROTOCOLS:
            raise SchemaError(f"protocol must be one of {PROTOCOLS}")


@dataclass(frozen=True)
class CorpusManifest:
    source: str
    protocol: str
    scenario: str
    record_count: int
    negotiation_count: int
    checksum: str
    scenario_config: Optional[dict] = field(default=None)


# ---------------------------------------------------------------------------
# Field parsing


def parse_offer(value) -> Optional[float]:
    """Offer as decimal dollars; accepts numbers and strings like ``"225,000"``."""
    if value is None:
        return None
    if isinstance(value, bool):
        raise SchemaError("offer must be a number, not a boolean")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        text = value.strip().replace(",", "").replace("$", "").replace("_", "")
        if not text:
            return None
        try:
            out = float(text)
        except ValueError:
            raise SchemaError(f"non-numeric offer {value!r}") from None
    else:
        raise SchemaError(f"offer has unsupported type {type(value).__name__}")
    if not math.isfinite(out) or out <= 0:
        raise SchemaError(f"offer must be finite and positive, got {value!r}")
    return out


def _require_id(obj: dict) -> str:
    nid = obj.get("negotiation_id")
    if not isinstance(nid, str) or not nid:
        raise SchemaError("negotiation_id must be a non-empty string")
    return nid


def _optional_text(obj: dict, key: str) -> Optional[str]:
    value = obj.get(key)
    if value is not None and not isinstance(value, str):
        raise SchemaError(f"{key} must be text or null")
    return value


def _int_field(obj: dict, key: str, optional: bool = False) -> Optional[int]:
    value = obj.get(key)
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{key} must be an integer")
    return value


def _optional_number(obj: dict, key: str) -> Optional[float]:
    value = obj.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{key} must be a number or null")
    return float(value)


def parse_record(obj: dict) -> TranscriptRecord:
    if not isinstance(obj, dict):
        raise SchemaError("record must be a JSON object")
    nid = _require_id(obj)
    turn = _int_field(obj, "turn")
    if turn < 1:
        raise SchemaError("turn must be at least 1")
    role = obj.get("role")
    if role not in ROLES:
        raise SchemaError(f"role must be buyer or seller, got {role!r}")
    deal = obj.get("deal", False)
    if not isinstance(deal, bool):
        raise SchemaError("deal must be a boolean")
    action = obj.get("action")
    if action is not None and action not in ACTIONS:
        raise SchemaError(f"unknown action {action!r}")
    offer = parse_offer(obj.get("offer"))
    if action == "offer" and offer is None:
        raise SchemaError("offer action without an offer value")
    return TranscriptRecord(nid, turn, role, _optional_text(obj, "message"), offer, deal, action)


def _parse_outcome(obj: dict) -> dict:
    kind = obj.get("outcome")
    if kind not in ("deal", "no_deal"):
        raise SchemaError("outcome must be 'deal' or 'no_deal'")
    price = _optional_number(obj, "price")
    reason = _optional_text(obj, "reason")
    if kind == "deal" and price is None:
        raise SchemaError("deal outcome without a price")
    if kind == "no_deal" and reason not in REASONS:
        raise SchemaError(f"unknown no-deal reason {reason!r}")
    scenario = obj.get("scenario", "")
    if not isinstance(scenario, str):
        raise SchemaError("scenario must be text")
    return {
        "outcome": Outcome(kind, price=price, turn=_int_field(obj, "turn", optional=True), reason=reason),
        "scenario": scenario,
        "seller_reservation": _optional_number(obj, "seller_reservation"),
        "buyer_reservation": _optional_number(obj, "buyer_reservation"),
    }


def infer_outcome(events: tuple[Event, ...]) -> Outcome:
    """Outcome implied by the last event when a file carries none."""
    if not events:
        return Outcome.no_deal(MAX_ROUNDS)
    last = events[-1]
    if last.action == "accept":
        price = last.offer
        if price is None:
            for e in reversed(events[:-1]):
                if e.role != last.role and e.offer is not None:
                    price = e.offer
                    break
        if price is not None:
            return Outcome.deal(price, last.turn)
    if last.action == "quit":
        return Outcome.no_deal(QUIT, turn=last.turn)
    return Outcome.no_deal(MAX_ROUNDS, turn=last.turn)


# ---------------------------------------------------------------------------
# Stream parsing


def parse_transcripts(lines: Iterable[str]) -> tuple[list[NegotiationTranscript], list[ParseError]]:
    """Group JSONL records into transcripts.

    Returns ``(transcripts, errors)``.  A bad record, a duplicate
    ``(negotiation_id, turn)`` or a second outcome record drops that whole
    negotiation; other negotiations are unaffected.  Lines that cannot be
    attributed to a negotiation are reported and skipped.  Transcripts come
    back in order of first appearance, events ordered by turn.
    """
    order: list[str] = []
    records: dict[str, dict[int, TranscriptRecord]] = {}
    outcomes: dict[str, dict] = {}
    bad: set[str] = set()
    errors: list[ParseError] = []

    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        nid = None
        try:
            obj = json.loads(text)
            if isinstance(obj, dict) and isinstance(obj.get("negotiation_id"), str) and obj["negotiation_id"]:
                nid = obj["negotiation_id"]
            if nid is not None and nid not in records:
                order.append(nid)
                records[nid] = {}
            if isinstance(obj, dict) and obj.get("type") == "outcome":
                nid = _require_id(obj)
                if nid in outcomes:
                    raise SchemaError("more than one outcome record")
                outcomes[nid] = _parse_outcome(obj)
                continue
            if isinstance(obj, dict) and obj.get("type", "event") != "event":
                raise SchemaError(f"unknown record type {obj.get('type')!r}")
            rec = parse_record(obj)
            if rec.turn in records[rec.negotiation_id]:
                raise SchemaError(f"duplicate record for turn {rec.turn}")
            records[rec.negotiation_id][rec.turn] = rec
        except json.JSONDecodeError as exc:
            errors.append(ParseError(lineno, None, f"invalid JSON: {exc.msg}"))
        except SchemaError as exc:
            errors.append(ParseError(lineno, nid, str(exc)))
            if nid is not None:
                bad.add(nid)

    out = []
    for nid in order:
        if nid in bad:
            continue
        events = tuple(records[nid][t].to_event() for t in sorted(records[nid]))
        meta = outcomes.get(nid)
        if meta is None:
            out.append(NegotiationTranscript(nid, events, infer_outcome(events)))
        else:
            out.append(NegotiationTranscript(nid, events, **meta))
    return out, errors


def transcript_records(t: NegotiationTranscript) -> list[dict]:
    """JSON-ready records of one transcript, outcome record last."""
    rows = []
    for e in t.events:
        rows.append(
            {
                "negotiation_id": t.negotiation_id,
                "turn": e.turn,
                "role": e.role,
                "action": e.action,
                "offer": e.offer,
                "deal": e.action == "accept",
                "message": e.message,
            }
        )
    o = t.outcome
    rows.append(
        {
            "type": "outcome",
            "negotiation_id": t.negotiation_id,
            "outcome": o.kind,
            "price": o.price,
            "turn": o.turn,
            "reason": o.reason,
            "scenario": t.scenario,
            "seller_reservation": t.seller_reservation,
            "buyer_reservation": t.buyer_reservation,
        }
    )
    return rows


def dump_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, allow_nan=False)


def serialize_transcripts(transcripts: Iterable[NegotiationTranscript]) -> str:
    lines = [dump_line(r) for t in transcripts for r in transcript_records(t)]
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# Trajectories


def extract_trajectories(
    t: NegotiationTranscript,
    indexing: Literal["global_turn", "per_role"] = "global_turn",
) -> tuple[OfferTrajectory, OfferTrajectory]:
    """Per-role offer trajectories ``(buyer, seller)``.

    Only offer events count; chat-only turns and accept/quit events are
    skipped.  ``T`` is the number of offer events in the whole negotiation
    (raised to the last offer's turn in global mode so every trajectory
    stays inside ``[1, T]``).  A role without offers gets an empty
    trajectory flagged ``"empty"``.
    """
    if indexing not in ("global_turn", "per_role"):
        raise SchemaError(f"unknown indexing {indexing!r}")
    offers = [e for e in t.events if e.action == "offer" and e.offer is not None]
    T = len(offers)
    if indexing == "global_turn" and offers:
        T = max(T, offers[-1].turn)
    trajs = []
    for role in ROLES:
        mine = [e for e in offers if e.role == role]
        if indexing == "global_turn":
            x = [e.turn for e in mine]
        else:
            x = list(range(1, len(mine) + 1))
        trajs.append(
            OfferTrajectory(
                np.array(x, dtype=float),
                np.array([e.offer for e in mine], dtype=float),
                T,
                role=role,
                negotiation_id=t.negotiation_id,
                flags=() if mine else ("empty",),
            )
        )
    return trajs[0], trajs[1]


# ---------------------------------------------------------------------------
# Corpus files


def _sha256(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def write_corpus(corpus: Corpus, path: str | Path) -> CorpusManifest:
    """Write ``transcripts.jsonl`` and ``manifest.json`` into directory ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    data = serialize_transcripts(corpus.transcripts).encode("utf-8")
    manifest = CorpusManifest(
        source=corpus.source,
        protocol=corpus.protocol,
        scenario=corpus.scenario,
        record_count=data.count(b"\n"),
        negotiation_count=len(corpus.transcripts),
        checksum=_sha256(data),
        scenario_config=corpus.scenario_config,
    )
    (root / TRANSCRIPTS_FILE).write_bytes(data)
    (root / MANIFEST_FILE).write_text(
        json.dumps(manifest.__dict__, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def read_manifest(path: str | Path) -> CorpusManifest:
    file = Path(path) / MANIFEST_FILE
    try:
        raw = json.loads(file.read_text(encoding="utf-8"))
        return CorpusManifest(**raw)
    except FileNotFoundError:
        raise CorruptCorpusError(f"missing {file}") from None
    except (json.JSONDecodeError, TypeError) as exc:
        raise CorruptCorpusError(f"unreadable manifest {file}: {exc}") from None


def load_corpus(path: str | Path) -> Corpus:
    """Load a corpus directory, verifying the manifest checksum first."""
    root = Path(path)
    manifest = read_manifest(root)
    try:
        data = (root / TRANSCRIPTS_FILE).read_bytes()
    except FileNotFoundError:
        raise CorruptCorpusError(f"missing {root / TRANSCRIPTS_FILE}") from None
    if _sha256(data) != manifest.checksum:
        raise CorruptCorpusError(f"checksum mismatch for {root / TRANSCRIPTS_FILE}")
    if data.count(b"\n") != manifest.record_count:
        raise CorruptCorpusError("record count does not match the manifest")
    transcripts, errors = parse_transcripts(data.decode("utf-8").splitlines())
    if errors or len(transcripts) != manifest.negotiation_count:
        detail = "; ".join(str(e) for e in errors[:3])
        raise CorruptCorpusError(f"corpus content does not parse cleanly: {detail}")
    try:
        return Corpus(
            transcripts=tuple(transcripts),
            source=manifest.source,
            protocol=manifest.protocol,
            scenario=manifest.scenario,
            scenario_config=manifest.scenario_config,
        )
    except SchemaError as exc:
        raise CorruptCorpusError(str(exc)) from None


def import_transcripts(path: str | Path, protocol: str = "natural_language", scenario: str = "") -> tuple[Corpus, list[ParseError]]:
    """Parse a raw JSONL transcript file into an imported corpus."""
    with open(path, encoding="utf-8") as fh:
        transcripts, errors = parse_transcripts(fh)
    return Corpus(tuple(transcripts), source="imported", protocol=protocol, scenario=scenario), errors

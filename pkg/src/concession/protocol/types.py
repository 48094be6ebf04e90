from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, Optional, Union

from ..errors import ConfigError
from ..model import PowerLawParams, TanhParams

Role = Literal["buyer", "seller"]
ROLES: tuple[Role, Role] = ("buyer", "seller")

# NoDeal reason codes.
MAX_ROUNDS = "max_rounds"
QUIT = "quit"
INTERNAL = "internal"
MALFORMED_REPLY = "malformed_reply"
TIMEOUT = "timeout"
REASONS = (MAX_ROUNDS, QUIT, INTERNAL, MALFORMED_REPLY, TIMEOUT)


def role_for_turn(turn: int) -> Role:
    """The seller opens at turn 1 and the roles alternate."""
    return "seller" if turn % 2 == 1 else "buyer"


def opponent(role: str) -> Role:
    return "buyer" if role == "seller" else "seller"


@dataclass(frozen=True)
class Action:
    kind: Literal["offer", "accept", "quit"]
    offer: Optional[float] = None
    message: Optional[str] = None


@dataclass(frozen=True)
class Event:
    turn: int
    role: Role
    action: Literal["offer", "accept", "quit", "message"]
    offer: Optional[float] = None
    message: Optional[str] = None


@dataclass(frozen=True)
class Outcome:
    kind: Literal["deal", "no_deal"]
    price: Optional[float] = None
    turn: Optional[int] = None
    reason: Optional[str] = None

    @classmethod
    def deal(cls, price: float, turn: int) -> "Outcome":
        return cls("deal", price=float(price), turn=turn)

    @classmethod
    def no_deal(cls, reason: str, turn: Optional[int] = None) -> "Outcome":
        return cls("no_deal", turn=turn, reason=reason)

    @property
    def is_deal(self) -> bool:
        return self.kind == "deal"


@dataclass(frozen=True)
class NegotiationTranscript:
    negotiation_id: str
    events: tuple[Event, ...]
    outcome: Outcome
    scenario: str = ""
    seller_reservation: Optional[float] = None
    buyer_reservation: Optional[float] = None

    @property
    def deal_outside_zopa(self) -> bool:
        """Flag deals beyond the parties' reservation prices (not enforced)."""
        if not self.outcome.is_deal or self.seller_reservation is None or self.buyer_reservation is None:
            return False
        return not (self.seller_reservation <= self.outcome.price <= self.buyer_reservation)

    @property
    def offer_count(self) -> int:
        return sum(1 for e in self.events if e.action == "offer" and e.offer is not None)


Schedule = Union[TanhParams, PowerLawParams]


@dataclass(frozen=True)
class AgentConfig:
    role: Role
    schedule: Schedule
    reservation: float
    deadline: int
    acceptance_margin: float = 0.0
    # Fixed first offer (the seller's asking price); None means use the schedule.
    opening: Optional[float] = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ConfigError(f"unknown role {self.role!r}")
        if self.deadline < 1:
            raise ConfigError("deadline must be at least 1")
        if not math.isfinite(self.reservation) or self.acceptance_margin < 0:
            raise ConfigError("reservation must be finite and margin non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = {"kind": "tanh" if isinstance(self.schedule, TanhParams) else "power_law", **asdict(self.schedule)}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "AgentConfig":
        data = dict(data)
        sched = dict(data.pop("schedule"))
        kind = sched.pop("kind", "tanh")
        schedule = TanhParams(**sched) if kind == "tanh" else PowerLawParams(**sched)
        return cls(schedule=schedule, **data)


def _check_power(name: str, value) -> tuple[int, int]:
    try:
        batna, time = (int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a (BATNA, time-pressure) pair") from None
    if batna not in (-1, 0, 1) or time not in (-1, 0, 1):
        raise ConfigError(f"{name} values must be -1, 0 or +1, got {value!r}")
    return batna, time


@dataclass(frozen=True)
class ScenarioConfig:
    """Negotiation setting and the constants that turn power labels into agents.

    Power pairs are ``(BATNA, time)`` in favourable orientation: +1 is a
    strong BATNA or low time pressure, -1 a weak BATNA or high time pressure.
    """

    name: str = "neutral"
    asking_price: float = 240_000.0
    buyer_reservation: float = 235_000.0
    seller_reservation: float = 225_000.0
    seller_power: tuple[int, int] = (0, 0)
    buyer_power: tuple[int, int] = (0, 0)
    max_rounds: int = 12
    seed: int = 0
    batna_delta: float = 2_500.0
    pace: float = 0.3
    concession_center: float = 10.0
    # Distance of each anchor from the agent's own reservation; None = half the ZOPA.
    anchor_offset: Optional[float] = None
    acceptance_margin: float = 0.0
    jitter: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "seller_power", _check_power("seller_power", self.seller_power))
        object.__setattr__(self, "buyer_power", _check_power("buyer_power", self.buyer_power))
        if self.seller_reservation > self.buyer_reservation:
            raise ConfigError("seller reservation above buyer reservation: empty ZOPA")
        if self.max_rounds < 2:
            raise ConfigError("max_rounds must be at least 2")
        if self.pace <= 0 or self.batna_delta < 0 or not (0 <= self.jitter < 1):
            raise ConfigError("pace must be positive, batna_delta >= 0 and jitter in [0, 1)")

    @property
    def zopa_midpoint(self) -> float:
        return (self.seller_reservation + self.buyer_reservation) / 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seller_power"] = list(self.seller_power)
        d["buyer_power"] = list(self.buyer_power)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        data = dict(data)
        for key in ("seller_power", "buyer_power"):
            if key in data:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class TurnView:
    """What an agent sees when asked to act."""

    negotiation_id: str
    turn: int
    role: Role
    history: tuple[Event, ...] = field(default=())

    @property
    def standing_offer(self) -> Optional[float]:
        for e in reversed(self.history):
            if e.role != self.role and e.action == "offer" and e.offer is not None:
                return e.offer
        return None

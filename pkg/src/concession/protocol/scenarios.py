"""Power-asymmetry presets and the mapping from power labels to scripted agents.

Both base agents are near mirror images around the ZOPA midpoint: the
seller's curve passes through the asking price at turn 1 and falls, the
buyer's rises from the mirrored level ``2 * midpoint - asking``, and both
curves are centred on the same round.

Power labels act on the base agents as follows:

* BATNA +1 moves the party's reservation ``batna_delta`` in its favour and
  halves its acceptance margin; BATNA -1 moves it the same amount against it.
  The anchor follows the reservation.
* time +1 (low pressure) keeps ``deadline = max_rounds``; time -1 sets
  ``deadline = ceil(max_rounds / 2)`` and doubles ``|a|`` with ``c`` fixed,
  which also pulls the concession centre forward to half the base round.
"""

from __future__ import annotations

import math

from ..errors import ConfigError
from ..model import TanhParams
from .types import AgentConfig, ScenarioConfig

# (seller_power, buyer_power) as (BATNA, time) pairs in favourable orientation.
# "Strong" means strong BATNA and low time pressure; "weak" the opposite.
PRESETS: dict[str, tuple[tuple[int, int], tuple[int, int]]] = {
    "neutral": ((0, 0), (0, 0)),
    "strong_seller": ((1, 1), (0, 0)),
    "strong_buyer": ((0, 0), (1, 1)),
    "weak_buyer": ((0, 0), (-1, -1)),
    "weak_seller": ((-1, -1), (0, 0)),
    "both_weak": ((-1, -1), (-1, -1)),
    "both_strong": ((1, 1), (1, 1)),
}


def preset(name: str, **overrides) -> ScenarioConfig:
    key = name.lower().replace(" ", "_").replace("-", "_")
    if key not in PRESETS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(PRESETS)}")
    seller_power, buyer_power = PRESETS[key]
    fields = {"name": key, "seller_power": seller_power, "buyer_power": buyer_power, **overrides}
    return ScenarioConfig(**fields)


def _agent(role: str, scenario: ScenarioConfig, batna: int, time: int) -> AgentConfig:
    delta = scenario.batna_delta * batna
    half_zopa = (scenario.buyer_reservation - scenario.seller_reservation) / 2
    offset = half_zopa if scenario.anchor_offset is None else scenario.anchor_offset
    mid = scenario.zopa_midpoint
    pace = scenario.pace * (2.0 if time < 0 else 1.0)
    deadline = math.ceil(scenario.max_rounds / 2) if time < 0 else scenario.max_rounds
    margin = scenario.acceptance_margin * (0.5 if batna > 0 else 1.0)
    c_base = scenario.pace * scenario.concession_center

    if role == "seller":
        reservation = scenario.seller_reservation + delta
        anchor = reservation + offset
        if c_base <= pace:
            raise ConfigError("concession centre must lie after the opening turn")
        # Span chosen so the curve passes exactly through the asking price at turn 1.
        span = (scenario.asking_price - anchor) / math.tanh(c_base - pace)
        schedule = TanhParams(-pace, span, -c_base, anchor)
        opening = scenario.asking_price
    else:
        reservation = scenario.buyer_reservation - delta
        anchor = reservation - offset
        span = anchor - (2 * mid - scenario.asking_price)
        schedule = TanhParams(pace, span, c_base, anchor)
        opening = None
    if span < 0:
        raise ConfigError(f"{role} anchor {anchor:.0f} lies beyond its opening price")
    return AgentConfig(
        role=role,
        schedule=schedule,
        reservation=reservation,
        deadline=deadline,
        acceptance_margin=margin,
        opening=opening,
    )


def scenario_agents(scenario: ScenarioConfig) -> tuple[AgentConfig, AgentConfig]:
    """Build the (buyer, seller) scripted agents for a scenario."""
    buyer = _agent("buyer", scenario, *scenario.buyer_power)
    seller = _agent("seller", scenario, *scenario.seller_power)
    return buyer, seller

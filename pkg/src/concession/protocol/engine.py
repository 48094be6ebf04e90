"""Deterministic alternating-offers engine and scripted agents."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Protocol, Sequence

import numpy as np

from ..errors import ProtocolViolationError
from ..model import PowerLawParams, TanhParams, power_law_offer, tanh_value
from .types import (
    INTERNAL,
    MAX_ROUNDS,
    QUIT,
    Action,
    AgentConfig,
    Event,
    NegotiationTranscript,
    Outcome,
    ScenarioConfig,
    TurnView,
    role_for_turn,
)


class Agent(Protocol):
    role: str

    def decide(self, view: TurnView) -> Action: ...


def planned_offer(agent: AgentConfig, turn: int) -> float:
    """Schedule value at ``turn``, clipped so it never crosses the reservation."""
    first_turn = 1 if agent.role == "seller" else 2
    if agent.opening is not None and turn == first_turn:
        raw = agent.opening
    elif isinstance(agent.schedule, TanhParams):
        raw = tanh_value(agent.schedule, float(turn))
    else:
        raw = _power_law_planned(agent.schedule, agent, turn)
    if agent.role == "buyer":
        raw = min(raw, agent.reservation)
    else:
        raw = max(raw, agent.reservation)
    return round(raw, 2)


def _power_law_planned(p: PowerLawParams, agent: AgentConfig, turn: int) -> float:
    t = min(1.0, max(0.0, turn / agent.deadline))
    value = power_law_offer(p, t)
    # Sellers walk the same profile downwards, from p_max to p_min.
    return value if agent.role == "buyer" else p.p_min + p.p_max - value


def _favourable(role: str, standing: float, target: float, margin: float) -> bool:
    if role == "buyer":
        return standing <= target + margin
    return standing >= target - margin


def scripted_decision(agent: AgentConfig, history: Sequence[Event], turn: int) -> Action:
    """Accept a standing offer at least as good as the planned one, else counter.

    Past its deadline the agent takes any standing offer within its
    reservation and otherwise walks away.
    """
    if role_for_turn(turn) != agent.role:
        raise ProtocolViolationError(f"turn {turn} belongs to the {role_for_turn(turn)}, not the {agent.role}")
    if history and history[-1].turn != turn - 1:
        raise ProtocolViolationError(f"history ends at turn {history[-1].turn}, cannot act at turn {turn}")
    view = TurnView("", turn, agent.role, tuple(history))
    standing = view.standing_offer

    if turn > agent.deadline:
        if standing is not None and _favourable(agent.role, standing, agent.reservation, 0.0):
            return Action("accept")
        return Action("quit")

    target = planned_offer(agent, turn)
    if standing is not None and _favourable(agent.role, standing, target, agent.acceptance_margin):
        return Action("accept")
    return Action("offer", offer=target)


class ScriptedAgent:
    def __init__(self, config: AgentConfig):
        self.config = config
        self.role = config.role

    def decide(self, view: TurnView) -> Action:
        return scripted_decision(self.config, view.history, view.turn)


def play(
    buyer: Agent,
    seller: Agent,
    scenario: ScenarioConfig,
    negotiation_id: str = "",
) -> NegotiationTranscript:
    """Run one negotiation between two agents honouring strict alternation."""
    agents = {"buyer": buyer, "seller": seller}
    events: list[Event] = []
    outcome = Outcome.no_deal(MAX_ROUNDS, turn=scenario.max_rounds)
    for turn in range(1, scenario.max_rounds + 1):
        role = role_for_turn(turn)
        view = TurnView(negotiation_id, turn, role, tuple(events))
        action = agents[role].decide(view)
        if action.kind == "accept":
            standing = view.standing_offer
            if standing is None:
                raise ProtocolViolationError(f"{role} accepted at turn {turn} with no standing offer")
            events.append(Event(turn, role, "accept", message=action.message))
            outcome = Outcome.deal(standing, turn)
            break
        if action.kind == "quit":
            events.append(Event(turn, role, "quit", message=action.message))
            outcome = Outcome.no_deal(QUIT, turn=turn)
            break
        if action.offer is None or not math.isfinite(action.offer):
            outcome = Outcome.no_deal(INTERNAL, turn=turn)
            break
        events.append(Event(turn, role, "offer", offer=float(action.offer), message=action.message))
    return NegotiationTranscript(
        negotiation_id=negotiation_id,
        events=tuple(events),
        outcome=outcome,
        scenario=scenario.name,
        seller_reservation=scenario.seller_reservation,
        buyer_reservation=scenario.buyer_reservation,
    )


def run_negotiation(
    buyer: AgentConfig,
    seller: AgentConfig,
    scenario: ScenarioConfig,
    negotiation_id: str = "",
) -> NegotiationTranscript:
    try:
        return play(ScriptedAgent(buyer), ScriptedAgent(seller), scenario, negotiation_id)
    except (ValueError, ArithmeticError):
        # A schedule that cannot be evaluated aborts the run, not the batch.
        return NegotiationTranscript(
            negotiation_id, (), Outcome.no_deal(INTERNAL), scenario.name,
            scenario.seller_reservation, scenario.buyer_reservation,
        )


def jitter_agent(agent: AgentConfig, rng: np.random.Generator, amount: float) -> AgentConfig:
    """Scale pace and span by independent factors in ``[1 - amount, 1 + amount]``.

    The curve centre ``c / a`` is held fixed, so jitter changes how fast and
    how far an agent concedes but not when.  An agent with a fixed opening
    offer keeps passing through it; its anchor moves instead.
    """
    fa, fb = rng.uniform(1.0 - amount, 1.0 + amount, size=2)
    s = agent.schedule
    if isinstance(s, TanhParams):
        a, b, c = s.a * fa, s.b * fb, s.c * fa
        d = s.d
        if agent.opening is not None:
            # Keep the curve through the fixed opening offer; the anchor absorbs the jitter.
            first_turn = 1 if agent.role == "seller" else 2
            d = agent.opening - b * math.tanh(a * first_turn - c)
        schedule = TanhParams(a, b, c, d)
    else:
        schedule = PowerLawParams(s.e * fa, s.p_min, s.p_max)
    return replace(agent, schedule=schedule)


def negotiation_id_for(scenario: ScenarioConfig, index: int) -> str:
    return f"{scenario.name}-{index:04d}"


def _run_one(job) -> NegotiationTranscript:
    scenario, index = job[0], job[3]
    buyer, seller = jittered_agents(job)
    return run_negotiation(buyer, seller, scenario, negotiation_id_for(scenario, index))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("CONCESSION_WORKERS", "1")))
    except ValueError:
        return 1


def batch_jobs(scenario: ScenarioConfig, n: int, base_seed: int | None = None, jitter: float | None = None):
    """Per-run inputs of :func:`run_batch`: (scenario, buyer, seller, index, seed, jitter)."""
    from .scenarios import scenario_agents

    base_seed = scenario.seed if base_seed is None else base_seed
    jitter = scenario.jitter if jitter is None else jitter
    buyer, seller = scenario_agents(scenario)
    return [(scenario, buyer, seller, i, base_seed + i, jitter) for i in range(n)]


def jittered_agents(job) -> tuple[AgentConfig, AgentConfig]:
    scenario, buyer, seller, _, seed, jitter = job
    if jitter > 0:
        rng = np.random.default_rng(seed)
        buyer = jitter_agent(buyer, rng, jitter)
        seller = jitter_agent(seller, rng, jitter)
    return buyer, seller


def run_batch(
    scenario: ScenarioConfig,
    n: int,
    base_seed: int | None = None,
    jitter: float | None = None,
    workers: int | None = None,
) -> list[NegotiationTranscript]:
    """Self-play ``n`` negotiations; run ``i`` is seeded with ``base_seed + i``."""
    if n < 1:
        raise ValueError("batch size must be at least 1")
    jobs = batch_jobs(scenario, n, base_seed, jitter)
    workers = workers or default_workers()
    if workers > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs, chunksize=max(1, n // (4 * workers))))
    return [_run_one(job) for job in jobs]

"""Scripted agent served over the bridge wire protocol.

Usage::

    python3 -m concession.protocol.agent_process --config agent.json
    python3 -m concession.protocol.agent_process --config agents.json --connect HOST:PORT

``agent.json`` holds one :class:`AgentConfig` as a dict, or
``{"agents": {negotiation_id: config, ...}}`` so a single process can serve
many negotiations with per-run configs.  Without ``--connect`` the agent
talks newline-delimited JSON on stdin/stdout.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys

from .bridge import _encode, recv_frame, reply_for, send_frame
from .engine import ScriptedAgent
from .types import AgentConfig


class AgentTable:
    def __init__(self, data: dict):
        if "agents" in data:
            self.by_id = {k: ScriptedAgent(AgentConfig.from_dict(v)) for k, v in data["agents"].items()}
            self.default = None
        else:
            self.by_id = {}
            self.default = ScriptedAgent(AgentConfig.from_dict(data))

    def lookup(self, negotiation_id: str) -> ScriptedAgent:
        agent = self.by_id.get(negotiation_id, self.default)
        if agent is None:
            raise KeyError(f"no agent configured for {negotiation_id!r}")
        return agent


def handle(table: AgentTable, msg) -> dict | None:
    if not isinstance(msg, dict) or msg.get("type") != "request":
        return None
    return reply_for(table.lookup(msg["negotiation_id"]), msg)


def serve_stdio(table: AgentTable) -> None:
    for line in sys.stdin:
        if not line.strip():
            continue
        reply = handle(table, json.loads(line))
        if reply is not None:
            sys.stdout.write(_encode(reply) + "\n")
            sys.stdout.flush()


def serve_socket(table: AgentTable, address: str) -> None:
    host, port = address.rsplit(":", 1)
    with socket.create_connection((host, int(port))) as sock:
        while True:
            try:
                msg = recv_frame(sock)
            except EOFError:
                return
            reply = handle(table, msg)
            if reply is not None:
                send_frame(sock, reply)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="agent config JSON file")
    parser.add_argument("--connect", help="HOST:PORT of a bridge socket instead of stdio")
    args = parser.parse_args(argv)
    with open(args.config, encoding="utf-8") as fh:
        table = AgentTable(json.load(fh))
    if args.connect:
        serve_socket(table, args.connect)
    else:
        serve_stdio(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())

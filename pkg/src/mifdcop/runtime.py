"""Deterministic synchronous message-passing simulation.

Agents communicate only through mailboxes: anything an agent sends in round
``r`` becomes readable by its recipient at the start of round ``r + 1``.
Each agent may read its own state, its inbox, and its local constraint view,
so the order in which agents are stepped within a round can never change the
outcome; a run is a pure function of (problem, config, seed).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ProtocolError, ValidationError
from .model import Problem

# salts separating the per-purpose random streams derived from one run seed
_SALT_MOVE = 1
_SALT_INIT = 2
_SALT_CE = 3
_SALT_GENERIC = 4


def _entropy(seed) -> list[int]:
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return [int(seed)]


class RngStreams:
    """Factory of independent deterministic generators derived from a run seed.

    Streams are keyed by purpose and ids, so changing the replica count or
    the number of agents never perturbs the draws of unrelated streams.
    """

    def __init__(self, seed):
        self._base = _entropy(seed)

    def move(self, agent: int, replica: int, call: int) -> np.random.Generator:
        return np.random.default_rng(self._base + [_SALT_MOVE, agent, replica, call])

    def init(self, agent: int, call: int) -> np.random.Generator:
        return np.random.default_rng(self._base + [_SALT_INIT, agent, call])

    def ce(self) -> np.random.Generator:
        return np.random.default_rng(self._base + [_SALT_CE])

    def generic(self, *ids: int) -> np.random.Generator:
        return np.random.default_rng(self._base + [_SALT_GENERIC, *ids])


# ---------------------------------------------------------------------------
# messages
# ---------------------------------------------------------------------------


@dataclass
class Message:
    sender: int = field(init=False, default=-1)


@dataclass
class ValueBroadcast(Message):
    """Replica values of one agent after iteration ``snapshot``."""

    snapshot: int
    values: np.ndarray


@dataclass
class AlsUp(Message):
    """Partial per-replica cost vector of a subtree for one snapshot."""

    snapshot: int
    partial: np.ndarray


@dataclass
class AlsDown(Message):
    """Best-state notifications travelling from the root toward the leaves.

    ``per_replica`` lists (replica, snapshot, cost) triples that became the
    best of the current call for their replica; ``overall`` optionally names
    the (call, replica, snapshot, cost) that became the best seen anywhere.
    """

    per_replica: tuple
    overall: tuple | None


@dataclass
class TemperatureSet(Message):
    """Temperature information for the next phase, flowing down the tree."""

    learning: bool
    temps: np.ndarray | None = None
    region: tuple[float, float] | None = None


@dataclass
class Control(Message):
    command: str
    data: object = None


@dataclass
class AgentStats:
    value_broadcasts: int = 0
    payload_values: int = 0
    gain_evals: int = 0
    sa_iterations: int = 0
    als_messages: int = 0


class AgentContext:
    """Mailboxes, graph/tree links, and instrumentation for one agent."""

    def __init__(self, agent_id: int, neighbors: Sequence[int]):
        self.id = agent_id
        self.neighbors = tuple(sorted(neighbors))
        self.parent: int | None = None
        self.children: tuple[int, ...] = ()
        self.depth = 0
        self.inbox: list[Message] = []
        self.outbox: list[tuple[int, Message]] = []
        self.stats = AgentStats()

    def send(self, dst: int, msg: Message) -> None:
        msg.sender = self.id
        self.outbox.append((dst, msg))

    def broadcast_values(self, snapshot: int, values: np.ndarray) -> None:
        for u in self.neighbors:
            self.send(u, ValueBroadcast(snapshot, values))
            self.stats.value_broadcasts += 1
            self.stats.payload_values += len(values)

    def _allowed(self, dst: int, msg: Message) -> bool:
        if isinstance(msg, ValueBroadcast):
            return dst in self.neighbors
        if isinstance(msg, AlsUp):
            return dst == self.parent
        if isinstance(msg, (AlsDown, TemperatureSet, Control)):
            return dst in self.children
        return False


# ---------------------------------------------------------------------------
# BFS tree
# ---------------------------------------------------------------------------


@dataclass
class BfsTree:
    root: int
    parent: tuple[int | None, ...]
    children: tuple[tuple[int, ...], ...]
    depth: tuple[int, ...]
    height: int


def build_bfs_tree(problem: Problem) -> BfsTree:
    """Deterministic breadth-first spanning tree of the constraint graph.

    The root is the lowest variable id, each level is explored in ascending
    id order, and a node reachable from several members of the previous
    level gets the lowest-id one as parent.
    """
    n = problem.n_variables
    parent: list[int | None] = [None] * n
    depth = [-1] * n
    root = 0
    depth[root] = 0
    frontier = [root]
    level = 0
    while frontier:
        level += 1
        nxt = []
        for u in sorted(frontier):
            for v in problem.neighbors[u]:
                if depth[v] == -1:
                    depth[v] = level
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt
    if any(d == -1 for d in depth):
        missing = sorted(i for i in range(n) if depth[i] == -1)
        raise ValidationError(f"constraint graph is disconnected; unreachable: {missing}")
    children: list[list[int]] = [[] for _ in range(n)]
    for v in range(n):
        if parent[v] is not None:
            children[parent[v]].append(v)
    return BfsTree(
        root=root,
        parent=tuple(parent),
        children=tuple(tuple(sorted(c)) for c in children),
        depth=tuple(depth),
        height=max(depth),
    )


def attach_tree(contexts: Sequence[AgentContext], tree: BfsTree) -> None:
    for ctx in contexts:
        ctx.parent = tree.parent[ctx.id]
        ctx.children = tree.children[ctx.id]
        ctx.depth = tree.depth[ctx.id]


# ---------------------------------------------------------------------------
# round loop
# ---------------------------------------------------------------------------


def run_rounds(
    agents: Sequence,
    step_fn: Callable,
    rounds: int,
    *,
    start_round: int = 0,
    order: Sequence[int] | None = None,
    workers: int = 1,
) -> int:
    """Execute synchronous rounds over agents exposing a ``.ctx`` AgentContext.

    Each round first delivers what was sent in the previous round (inboxes
    arrive sorted by sender id), then invokes ``step_fn(agent, round_index)``
    for every agent.  ``order`` permutes the stepping sequence and ``workers``
    > 1 steps agents on a thread pool; neither may change any result, which
    is exactly what the mailbox discipline guarantees.  Returns the next
    round index.
    """
    by_id = {a.ctx.id: a for a in agents}
    step_seq = list(order) if order is not None else sorted(by_id)
    if sorted(step_seq) != sorted(by_id):
        raise ValidationError("step order must be a permutation of the agent ids")
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for r in range(start_round, start_round + rounds):
            pending: list[tuple[int, Message]] = []
            for aid in sorted(by_id):
                ctx = by_id[aid].ctx
                for dst, msg in ctx.outbox:
                    if dst not in by_id:
                        raise ProtocolError(f"agent {aid} sent to unknown agent {dst}")
                    if not ctx._allowed(dst, msg):
                        raise ProtocolError(
                            f"agent {aid} may not send {type(msg).__name__} to agent {dst}"
                        )
                    pending.append((dst, msg))
                ctx.outbox = []
            for a in agents:
                a.ctx.inbox = []
            for dst, msg in pending:  # already ordered by sender id
                by_id[dst].ctx.inbox.append(msg)
            if pool is None:
                for aid in step_seq:
                    step_fn(by_id[aid], r)
            else:
                list(pool.map(lambda aid: step_fn(by_id[aid], r), step_seq))
        return start_round + rounds
    finally:
        if pool is not None:
            pool.shutdown()

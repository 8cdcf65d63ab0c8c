"""Round engines for FedOC and the baseline algorithms on one event clock.

A FedOC round runs five stages: overlap clients pick an initial model, every client
trains, servers average their uploads, ROCs merge a neighbour's cell model with
their own and forward it, and servers fold the relayed models into theirs. Every
``kappa`` rounds the cloud replaces all server models with the global average.

Engines are generic over an aggregation algebra, so the same code runs on parameter
vectors and on provenance tag sets.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core.aggregation import (
    TagAlgebra,
    VectorAlgebra,
    cloud_average,
    edge_average,
    edge_update,
    relay_merge,
)
from src.core.channel import (
    ChannelParams,
    EsTiming,
    GainTable,
    broadcast_latency,
    cloud_latency,
    relay_latency,
    round_times,
)
from src.core.topology import LC, ROC, Topology, relay_attachment

logger = logging.getLogger(__name__)

FEDOC_VARIANTS = ("fedoc_fastest", "fedoc_fixed")
ALGORITHMS = FEDOC_VARIANTS + ("hfl", "fedmes", "fleocd")

# (client id, initial model, 0-based round) -> trained model
Trainer = Callable[[int, Any, int], Any]


@dataclass(frozen=True)
class SelectionRecord:
    """Initial-model choice of each overlap client (alpha = 1 for the chosen server)."""

    choices: Mapping[int, int] = field(default_factory=dict)

    def alpha(self, client: int, server: int) -> int:
        return int(self.choices.get(client) == server)


@dataclass(frozen=True)
class RoundTrace:
    round: int
    algorithm: str
    timings: Tuple[EsTiming, ...]
    selections: SelectionRecord
    checksums: Tuple[str, ...]
    ready_times: Tuple[float, ...]
    cell_weights: Tuple[float, ...]
    simulated_time: float
    cloud: bool
    accuracy: Optional[float] = None
    loss: Optional[float] = None
    es_accuracy: Tuple[float, ...] = ()


@dataclass(frozen=True)
class EdgeState:
    models: Tuple[Any, ...]
    ready_times: Tuple[float, ...]
    # data weight behind each server's current model
    es_weights: Tuple[float, ...]
    # FL-EOCD: per overlap client, the edge models it received last round
    caches: Mapping[int, Tuple[Tuple[float, Any], ...]] = field(default_factory=dict)
    round_index: int = 0

    @property
    def simulated_time(self) -> float:
        return max(self.ready_times)


@dataclass
class RoundContext:
    topology: Topology
    sample_counts: np.ndarray
    home_cells: Sequence[int]
    trainer: Trainer
    kappa: int
    epochs: int = 5
    algebra: Any = field(default_factory=VectorAlgebra)
    gains: Optional[GainTable] = None
    compute_times: Optional[np.ndarray] = None
    channel: ChannelParams = field(default_factory=ChannelParams)
    # called with (round, {client: trained model}) after local training
    observer: Optional[Callable[[int, Dict[int, Any]], None]] = None


def default_home_cells(topo: Topology) -> List[int]:
    """Fixed association without a partition plan: NOCs to the left server, ROCs by attachment."""
    homes = []
    for k in range(topo.num_clients):
        role = topo.role(k)
        if role.kind == ROC:
            homes.append(relay_attachment(role.index, topo.num_servers))
        else:
            homes.append(role.index)
    return homes


def initial_state(topo: Topology, models, sample_counts: Sequence[float]) -> EdgeState:
    """Round-0 state: one shared model (or one per server), clock at zero."""
    if not isinstance(models, (list, tuple)):
        models = [models] * topo.num_servers
    weights = tuple(float(sum(sample_counts[k] for k in topo.coverage(l))) for l in range(topo.num_servers))
    return EdgeState(
        models=tuple(models),
        ready_times=tuple(0.0 for _ in range(topo.num_servers)),
        es_weights=weights,
    )


def model_checksum(model: Any) -> str:
    if isinstance(model, (frozenset, set)):
        payload = json.dumps(sorted(model)).encode("utf-8")
    else:
        payload = np.asarray(model, dtype="<f8").tobytes()
    return hashlib.sha256(payload).hexdigest()


def _execute_round(state: EdgeState, ctx: RoundContext, r: int, algorithm: str) -> Tuple[EdgeState, RoundTrace]:
    topo = ctx.topology
    algebra = ctx.algebra
    n = ctx.sample_counts
    L = topo.num_servers
    K = topo.num_clients
    fedoc = algorithm in FEDOC_VARIANTS
    cloud_round = (r + 1) % ctx.kappa == 0
    relaying = fedoc and not cloud_round

    casts = [
        broadcast_latency(l, topo, ctx.gains, ctx.channel) if ctx.gains is not None else 0.0
        for l in range(L)
    ]
    arrival = [state.ready_times[l] + casts[l] for l in range(L)]

    # Stage 1: initial models
    sources: Dict[int, Tuple[int, ...]] = {}
    choices: Dict[int, int] = {}
    for k in range(K):
        role = topo.role(k)
        if role.kind == LC:
            sources[k] = (role.index,)
            continue
        p = role.index
        if algorithm == "fedoc_fastest":
            chosen = p if arrival[p] <= arrival[p + 1] else p + 1
        elif algorithm in ("fedoc_fixed", "hfl"):
            chosen = ctx.home_cells[k]
        else:
            sources[k] = (p, p + 1)
            continue
        sources[k] = (chosen,)
        choices[k] = chosen

    init: Dict[int, Any] = {}
    start: Dict[int, float] = {}
    for k in range(K):
        src = sources[k]
        if len(src) == 1:
            init[k] = state.models[src[0]]
        else:
            init[k] = algebra.combine([(state.es_weights[l], state.models[l]) for l in src])
        start[k] = max(arrival[l] for l in src)

    # Stage 2: local training
    trained = {k: ctx.trainer(k, init[k], r) for k in range(K)}
    if ctx.observer is not None:
        ctx.observer(r, trained)
    finish = {
        k: start[k] + (ctx.epochs * float(ctx.compute_times[k]) if ctx.compute_times is not None else 0.0)
        for k in range(K)
    }

    uploaded = dict(trained)
    caches = dict(state.caches)
    if algorithm == "fleocd":
        for k in range(K):
            role = topo.role(k)
            if role.kind == LC:
                continue
            uploaded[k] = algebra.combine([(float(n[k]), trained[k])] + list(state.caches.get(k, ())))
            caches[k] = tuple((state.es_weights[l], state.models[l]) for l in (role.index, role.index + 1))

    uploaders: List[List[int]] = [[] for _ in range(L)]
    for k in range(K):
        role = topo.role(k)
        if role.kind == ROC and fedoc:
            continue
        for l in sources[k]:
            uploaders[l].append(k)
    trainers = [[k for k in range(K) if l in sources[k]] for l in range(L)]
    timings = round_times(
        topo, ctx.gains, ctx.compute_times, ctx.channel, uploaders, trainers,
        epochs=ctx.epochs, relays=relaying,
    )

    # Stage 3: cell models
    cell_weights = [float(sum(n[k] for k in uploaders[l])) for l in range(L)]
    cell_models = [
        edge_average(algebra, [(float(n[k]), uploaded[k]) for k in uploaders[l]]) if uploaders[l] else state.models[l]
        for l in range(L)
    ]
    completion = [
        max(finish[k] for k in uploaders[l]) + timings[l].t_upload if uploaders[l] else arrival[l]
        for l in range(L)
    ]

    new_models = list(cell_models)
    new_ready = list(completion)
    new_weights = [w if w > 0 else state.es_weights[l] for l, w in enumerate(cell_weights)]

    # Stages 4 and 5: ROC relays and three-way update
    if relaying:
        incoming: List[List[Optional[Tuple[float, Any]]]] = [[None, None] for _ in range(L)]
        relay_arrivals: List[List[float]] = [[] for _ in range(L)]
        for p in range(topo.num_pairs):
            b = topo.relay_client(p)
            if b is None:
                continue
            for source, target, side in ((p, p + 1, 0), (p + 1, p, 1)):
                merged, weight = relay_merge(
                    algebra, cell_weights[source], cell_models[source], float(n[b]), trained[b]
                )
                incoming[target][side] = (weight, merged)
                hop = relay_latency(p, topo, ctx.gains, ctx.channel, target=target) if ctx.gains is not None else 0.0
                relay_arrivals[target].append(max(completion[source], finish[b]) + hop)
        for l in range(L):
            left, right = incoming[l]
            if left is None and right is None:
                continue
            new_models[l] = edge_update(algebra, (cell_weights[l], cell_models[l]), left=left, right=right)
            new_weights[l] = cell_weights[l] + sum(t[0] for t in (left, right) if t is not None)
            new_ready[l] = max([completion[l]] + relay_arrivals[l])

    if cloud_round:
        if fedoc:
            cells = []
            for j in range(L):
                members = list(uploaders[j])
                members += [
                    topo.relay_client(p) for p in range(topo.num_pairs)
                    if topo.relay_client(p) is not None and relay_attachment(p, L) == j
                ]
                members.sort()
                if members:
                    weight = float(sum(n[k] for k in members))
                    cells.append((weight, edge_average(algebra, [(float(n[k]), uploaded[k]) for k in members])))
        else:
            cells = [(cell_weights[l], cell_models[l]) for l in range(L) if cell_weights[l] > 0]
        cloud = cloud_average(algebra, cells)
        sync = max(completion) + (cloud_latency(timings, ctx.channel) if ctx.gains is not None else 0.0)
        total = float(sum(w for w, _ in cells))
        new_models = [cloud] * L
        new_ready = [sync] * L
        new_weights = [total] * L
        logger.debug("Round %d: cloud aggregation, all servers synchronized at %.3f s", r, sync)

    new_state = EdgeState(
        models=tuple(new_models),
        ready_times=tuple(new_ready),
        es_weights=tuple(new_weights),
        caches=caches,
        round_index=r + 1,
    )
    trace = RoundTrace(
        round=r,
        algorithm=algorithm,
        timings=tuple(timings),
        selections=SelectionRecord(choices),
        checksums=tuple(model_checksum(m) for m in new_models),
        ready_times=tuple(new_ready),
        cell_weights=tuple(cell_weights),
        simulated_time=max(new_ready),
        cloud=cloud_round,
    )
    return new_state, trace


def run_round_fedoc(state: EdgeState, ctx: RoundContext, r: int, fastest: bool = True):
    """One FedOC round; ``fastest`` picks the Fastest Selection rule, else fixed homes."""
    return _execute_round(state, ctx, r, "fedoc_fastest" if fastest else "fedoc_fixed")


def run_round_hfl(state: EdgeState, ctx: RoundContext, r: int):
    """Per-cell FedAvg with every overlap client tied to its home server; no relays."""
    return _execute_round(state, ctx, r, "hfl")


def run_round_fedmes(state: EdgeState, ctx: RoundContext, r: int):
    """Overlap clients start from the average of both servers and upload to both."""
    return _execute_round(state, ctx, r, "fedmes")


def run_round_fleocd(state: EdgeState, ctx: RoundContext, r: int):
    """As FedMES, but overlap clients fold last round's cached edge models into their upload."""
    return _execute_round(state, ctx, r, "fleocd")


def run_round_fedavg(state: EdgeState, ctx: RoundContext, r: int):
    """Single-server FedAvg: every client trains from the global model; data-weighted mean."""
    topo = ctx.topology
    if topo.num_servers != 1:
        raise ValueError("FedAvg runs on a single server")
    clients = list(range(topo.num_clients))
    trained = [ctx.trainer(k, state.models[0], r) for k in clients]
    if ctx.observer is not None:
        ctx.observer(r, dict(enumerate(trained)))
    model = ctx.algebra.combine([(float(ctx.sample_counts[k]), trained[k]) for k in clients])
    timings = round_times(
        topo, ctx.gains, ctx.compute_times, ctx.channel, [clients], epochs=ctx.epochs, relays=False
    )
    ready = state.ready_times[0] + timings[0].t_edge
    weight = float(sum(ctx.sample_counts[k] for k in clients))
    new_state = EdgeState((model,), (ready,), (weight,), round_index=r + 1)
    trace = RoundTrace(
        round=r,
        algorithm="fedavg",
        timings=tuple(timings),
        selections=SelectionRecord(),
        checksums=(model_checksum(model),),
        ready_times=(ready,),
        cell_weights=(weight,),
        simulated_time=ready,
        cloud=False,
    )
    return new_state, trace


ROUND_ENGINES: Dict[str, Callable[[EdgeState, RoundContext, int], Tuple[EdgeState, RoundTrace]]] = {
    "fedoc_fastest": partial(run_round_fedoc, fastest=True),
    "fedoc_fixed": partial(run_round_fedoc, fastest=False),
    "hfl": run_round_hfl,
    "fedmes": run_round_fedmes,
    "fleocd": run_round_fleocd,
    "fedavg": run_round_fedavg,
}


def marker_propagation_check(topo: Topology, rounds: int) -> List[List[FrozenSet[int]]]:
    """Run cloud-free FedOC on provenance tags instead of models.

    Every server starts with the tag set {l}; training is the identity and every
    aggregation is a set union.

    Returns:
        Per-round list of per-server tag sets; entry 0 is the initial state
    """
    ctx = RoundContext(
        topology=topo,
        sample_counts=np.ones(topo.num_clients),
        home_cells=default_home_cells(topo),
        trainer=lambda k, model, r: model,
        kappa=rounds + 1,
        epochs=1,
        algebra=TagAlgebra(),
    )
    state = initial_state(topo, [frozenset({l}) for l in range(topo.num_servers)], ctx.sample_counts)
    history = [list(state.models)]
    for r in range(rounds):
        state, _ = run_round_fedoc(state, ctx, r, fastest=False)
        history.append(list(state.models))
    return history


def completion_round(history: Sequence[Sequence[FrozenSet[int]]], server: int = 0) -> Optional[int]:
    """First round after which ``server`` holds tags from every server, or None."""
    num_servers = len(history[0])
    for r, tags in enumerate(history):
        if len(tags[server]) == num_servers:
            return r
    return None

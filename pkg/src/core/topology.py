"""Chain topology of edge servers with overlapping regions.

Servers are indexed 0..L-1 along a line and overlap pair p joins servers p and p+1.
Client ids are assigned region by region along the chain: the local clients of
server 0, the overlap clients of pair 0, the local clients of server 1, and so on.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from src.core.errors import TopologyError

logger = logging.getLogger(__name__)

Point = Tuple[float, float]

LC, NOC, ROC = "LC", "NOC", "ROC"
MAX_SAMPLING_ATTEMPTS = 100_000


@dataclass(frozen=True)
class ClientRole:
    """Role of a client: LC with its home cell, or NOC/ROC with its overlap pair."""

    kind: str
    index: int


@dataclass(frozen=True)
class Violation:
    invariant: str
    ids: Tuple[int, ...]
    detail: str = ""


@dataclass(frozen=True)
class Topology:
    num_servers: int
    local_clients: Tuple[Tuple[int, ...], ...]
    overlap_clients: Tuple[Tuple[int, ...], ...]
    # One entry per overlap pair; a valid topology holds exactly one ROC per non-empty pair
    relay_clients: Tuple[Tuple[int, ...], ...]
    client_positions: Tuple[Point, ...]
    server_positions: Tuple[Point, ...]
    cell_radius: float
    roc_policy: str = "random"
    _roles: Dict[int, ClientRole] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        roles: Dict[int, ClientRole] = {}
        for l, members in enumerate(self.local_clients):
            for k in members:
                roles.setdefault(k, ClientRole(LC, l))
        for p, members in enumerate(self.overlap_clients):
            relays = self.relay_clients[p] if p < len(self.relay_clients) else ()
            for k in members:
                roles.setdefault(k, ClientRole(ROC if k in relays else NOC, p))
        object.__setattr__(self, "_roles", roles)

    @property
    def num_clients(self) -> int:
        return len(self.client_positions)

    @property
    def num_pairs(self) -> int:
        return len(self.overlap_clients)

    def role(self, client: int) -> ClientRole:
        return self._roles[client]

    def relay_client(self, pair: int) -> Optional[int]:
        relays = self.relay_clients[pair]
        return relays[0] if relays else None

    def normal_overlap_clients(self, pair: int) -> Tuple[int, ...]:
        """The NOC set of a pair: its overlap clients minus the ROC."""
        relays = set(self.relay_clients[pair])
        return tuple(k for k in self.overlap_clients[pair] if k not in relays)

    def covering_servers(self, client: int) -> Tuple[int, ...]:
        role = self.role(client)
        if role.kind == LC:
            return (role.index,)
        return (role.index, role.index + 1)

    def coverage(self, server: int) -> Tuple[int, ...]:
        """All clients inside the disk of a server, ascending."""
        members = list(self.local_clients[server])
        if server > 0:
            members.extend(self.overlap_clients[server - 1])
        if server < self.num_pairs:
            members.extend(self.overlap_clients[server])
        return tuple(sorted(members))

    def distance(self, client: int, server: int) -> float:
        cx, cy = self.client_positions[client]
        sx, sy = self.server_positions[server]
        return math.hypot(cx - sx, cy - sy)


def relay_attachment(pair: int, num_servers: int) -> int:
    """Cell a ROC is attached to when each ROC must belong to exactly one cell.

    ROCs left of the chain centre attach to their left server, the rest to their right
    server. For three servers this gives b_12 -> server 0 and b_23 -> server 2.
    """
    return pair if pair < (num_servers - 1) / 2 else pair + 1


def balanced_local_sizes(num_clients: int, overlap_sizes: Sequence[int]) -> List[int]:
    """Local client counts giving every cell the same effective load.

    Each overlap client counts half towards each covering cell, so cell l holds
    K/L - (V_{l-1} + V_l)/2 local clients. Fractional quotas are rounded by largest
    remainder, ties to the lower index.

    Raises:
        TopologyError: A cell would need a negative number of local clients
    """
    num_servers = len(overlap_sizes) + 1
    padded = [0] + list(overlap_sizes) + [0]
    quotas = [num_clients / num_servers - (padded[l] + padded[l + 1]) / 2 for l in range(num_servers)]
    if min(quotas) < 0:
        raise TopologyError(
            f"overlap sizes {list(overlap_sizes)} leave no room for balanced cells with K={num_clients}"
        )
    sizes = [math.floor(q + 1e-9) for q in quotas]
    remaining = num_clients - sum(overlap_sizes) - sum(sizes)
    order = sorted(range(num_servers), key=lambda l: (-(quotas[l] - sizes[l]), l))
    for l in order[:remaining]:
        sizes[l] += 1
    if any(abs(q - round(q)) > 1e-9 for q in quotas):
        logger.warning("Balance equations have no integer solution; rounded local sizes to %s", sizes)
    return sizes


def _server_positions(num_servers: int, radius: float, overlap_fraction: float) -> List[Point]:
    spacing = 2.0 * radius * (1.0 - overlap_fraction)
    return [(l * spacing, 0.0) for l in range(num_servers)]


def _inside(point: np.ndarray, centre: Point, radius: float) -> bool:
    return math.hypot(point[0] - centre[0], point[1] - centre[1]) <= radius


def _sample_region(
    rng: np.random.Generator,
    servers: Sequence[Point],
    radius: float,
    covering: Tuple[int, ...],
) -> Point:
    """Rejection-sample a point covered by exactly the given servers."""
    xs = [servers[l][0] for l in covering]
    low = np.array([max(xs) - radius, -radius])
    high = np.array([min(xs) + radius, radius])
    for _ in range(MAX_SAMPLING_ATTEMPTS):
        point = rng.uniform(low, high)
        if all(_inside(point, servers[l], radius) for l in covering) and not any(
            _inside(point, servers[l], radius) for l in range(len(servers)) if l not in covering
        ):
            return (float(point[0]), float(point[1]))
    raise TopologyError(f"could not place a client covered by servers {covering}; region too small")


def _pick_random(rng: np.random.Generator, members: Tuple[int, ...], **_) -> int:
    return int(members[int(rng.integers(len(members)))])


def _pick_central(
    rng: np.random.Generator,
    members: Tuple[int, ...],
    positions: Sequence[Point],
    servers: Tuple[Point, Point],
    **_,
) -> int:
    def worst_distance(k: int) -> float:
        x, y = positions[k]
        return max(math.hypot(x - sx, y - sy) for sx, sy in servers)

    return min(members, key=lambda k: (worst_distance(k), k))


ROC_POLICIES: Dict[str, Callable[..., int]] = {
    "random": _pick_random,
    "central": _pick_central,
}


def build_topology(spec, rng_seed: int) -> Topology:
    """Build a chain topology with overlapping regions and assign client roles.

    Args:
        spec: ExperimentConfig or its TopologySpec section
        rng_seed: Seed for positions and ROC selection

    Returns:
        Topology satisfying all chain invariants
    """
    spec = getattr(spec, "topology", spec)
    num_servers = spec.num_servers
    overlap_sizes = list(spec.overlap_sizes)
    if num_servers < 1:
        raise TopologyError("need at least one edge server")
    if len(overlap_sizes) != num_servers - 1:
        raise TopologyError(f"expected {num_servers - 1} overlap sizes, got {len(overlap_sizes)}")
    if any(overlap_sizes) and spec.overlap_fraction <= 0:
        raise TopologyError("overlap clients requested but overlap_fraction <= 0 makes the disks disjoint")
    if num_servers >= 3 and spec.overlap_fraction >= 0.5:
        raise TopologyError("overlap_fraction >= 0.5 creates regions covered by three servers")
    if spec.roc_policy not in ROC_POLICIES:
        raise TopologyError(f"unknown ROC policy: {spec.roc_policy}")

    if spec.local_sizes is not None:
        local_sizes = list(spec.local_sizes)
    elif spec.balance:
        local_sizes = balanced_local_sizes(spec.num_clients, overlap_sizes)
    else:
        free = spec.num_clients - sum(overlap_sizes)
        local_sizes = [free // num_servers + (1 if l < free % num_servers else 0) for l in range(num_servers)]
    if sum(local_sizes) + sum(overlap_sizes) != spec.num_clients or min(local_sizes, default=0) < 0:
        raise TopologyError(
            f"local sizes {local_sizes} plus overlap sizes {overlap_sizes} do not add up to K={spec.num_clients}"
        )

    rng = np.random.default_rng(rng_seed)
    radius = float(spec.cell_radius_m)
    servers = _server_positions(num_servers, radius, spec.overlap_fraction)

    local: List[Tuple[int, ...]] = []
    overlap: List[Tuple[int, ...]] = []
    positions: List[Point] = []
    next_id = 0
    for l in range(num_servers):
        ids = tuple(range(next_id, next_id + local_sizes[l]))
        positions.extend(_sample_region(rng, servers, radius, (l,)) for _ in ids)
        local.append(ids)
        next_id += local_sizes[l]
        if l < num_servers - 1:
            ids = tuple(range(next_id, next_id + overlap_sizes[l]))
            positions.extend(_sample_region(rng, servers, radius, (l, l + 1)) for _ in ids)
            overlap.append(ids)
            next_id += overlap_sizes[l]

    pick = ROC_POLICIES[spec.roc_policy]
    relays = []
    for p, members in enumerate(overlap):
        if members:
            roc = pick(rng, members, positions=positions, servers=(servers[p], servers[p + 1]))
            relays.append((roc,))
            logger.debug("Pair (%d, %d): ROC is client %d", p, p + 1, roc)
        else:
            relays.append(())

    topo = Topology(
        num_servers=num_servers,
        local_clients=tuple(local),
        overlap_clients=tuple(overlap),
        relay_clients=tuple(relays),
        client_positions=tuple(positions),
        server_positions=tuple(servers),
        cell_radius=radius,
        roc_policy=spec.roc_policy,
    )
    logger.info(
        "Built chain topology: L=%d, K=%d, local=%s, overlap=%s",
        num_servers, topo.num_clients, local_sizes, overlap_sizes,
    )
    return topo


def validate_topology(t: Topology) -> List[Violation]:
    """Check every chain invariant.

    Returns:
        Empty list iff the topology is valid; otherwise one Violation per problem
    """
    violations: List[Violation] = []
    if len(t.local_clients) != t.num_servers or len(t.overlap_clients) != max(t.num_servers - 1, 0):
        violations.append(Violation(
            "pair count", (),
            f"{len(t.local_clients)} cells and {len(t.overlap_clients)} overlap sets for L={t.num_servers}",
        ))
    if len(t.relay_clients) != len(t.overlap_clients):
        violations.append(Violation("pair count", (), "relay designations do not match overlap pairs"))

    seen: Dict[int, List[str]] = {}
    for l, members in enumerate(t.local_clients):
        for k in members:
            seen.setdefault(k, []).append(f"U_{l}")
    for p, members in enumerate(t.overlap_clients):
        for k in members:
            seen.setdefault(k, []).append(f"V_{p},{p + 1}")
    duplicated = {k for k, sets in seen.items() if len(sets) > 1}
    for k in sorted(duplicated):
        violations.append(Violation("duplicate membership", (k,), f"client {k} in {', '.join(seen[k])}"))
    missing = sorted(set(range(t.num_clients)) - set(seen))
    if missing:
        violations.append(Violation("missing client", tuple(missing), "not assigned to any set"))
    unknown = sorted(k for k in seen if not 0 <= k < t.num_clients)
    if unknown:
        violations.append(Violation("missing client", tuple(unknown), "ids without a position"))

    for p, relays in enumerate(t.relay_clients):
        members = t.overlap_clients[p] if p < len(t.overlap_clients) else ()
        expected = 1 if members else 0
        if len(relays) != expected:
            violations.append(Violation(
                "relay cardinality", tuple(relays),
                f"pair ({p}, {p + 1}) has {len(relays)} ROCs, expected {expected}",
            ))
        stray = tuple(k for k in relays if k not in members)
        if stray:
            violations.append(Violation("relay membership", stray, f"ROC not in V_{p},{p + 1}"))

    tolerance = 1e-9
    for k in range(t.num_clients):
        if k not in seen or k in duplicated:
            continue
        covering = t.covering_servers(k)
        for l in range(t.num_servers):
            d = t.distance(k, l)
            if l in covering and d > t.cell_radius + tolerance:
                violations.append(Violation("geometry", (k,), f"{d:.1f} m from covering server {l}"))
            elif l not in covering and d <= t.cell_radius:
                violations.append(Violation("geometry", (k,), f"inside server {l} which does not cover it"))
    return violations


def chain_graph(t: Topology) -> nx.Graph:
    """Server adjacency graph; edges carry overlap size and ROC."""
    graph = nx.Graph()
    for l in range(t.num_servers):
        graph.add_node(l, local=len(t.local_clients[l]), position=t.server_positions[l])
    for p, members in enumerate(t.overlap_clients):
        if members:
            graph.add_edge(p, p + 1, overlap=len(members), relay=t.relay_client(p))
    return graph


def topology_to_dict(t: Topology) -> dict:
    clients = []
    for k in range(t.num_clients):
        role = t.role(k) if k in t._roles else None
        clients.append({
            "id": k,
            "role": role.kind if role else None,
            "index": role.index if role else None,
            "position": list(t.client_positions[k]),
        })
    return {
        "num_servers": t.num_servers,
        "cell_radius": t.cell_radius,
        "roc_policy": t.roc_policy,
        "servers": [list(p) for p in t.server_positions],
        "local_clients": [list(m) for m in t.local_clients],
        "overlap_clients": [list(m) for m in t.overlap_clients],
        "relay_clients": [list(r) for r in t.relay_clients],
        "clients": clients,
    }


def topology_from_dict(data: dict) -> Topology:
    return Topology(
        num_servers=int(data["num_servers"]),
        local_clients=tuple(tuple(m) for m in data["local_clients"]),
        overlap_clients=tuple(tuple(m) for m in data["overlap_clients"]),
        relay_clients=tuple(tuple(r) for r in data["relay_clients"]),
        client_positions=tuple(tuple(c["position"]) for c in sorted(data["clients"], key=lambda c: c["id"])),
        server_positions=tuple(tuple(p) for p in data["servers"]),
        cell_radius=float(data["cell_radius"]),
        roc_policy=data.get("roc_policy", "random"),
    )

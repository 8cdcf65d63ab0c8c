"""Wireless latency model: channel gains, bandwidth splits and per-round timings.

Uploads share half the band equally among a cell's uploaders, the broadcast uses
the full half band, and a relay hop over a ROC uses a quarter band per leg.
Adjacent cells operate on disjoint sub-bands, so there is no interference term.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.topology import Topology

logger = logging.getLogger(__name__)

MIN_DISTANCE_M = 1.0


def dbm_per_hz_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    bandwidth_hz: float = 50e6
    client_power_w: float = 1.0
    es_power_w: float = 5.0
    noise_psd_w_hz: float = dbm_per_hz_to_watts(-174.0)
    pathloss_intercept_db: float = 128.1
    pathloss_slope_db: float = 37.6
    rayleigh_variance: float = 1.0
    rayleigh_floor: float = 1e-6
    model_bits: float = 21840 * 64
    cloud_ratio: float = 10.0
    compute_time_range: Tuple[float, float] = (0.1, 0.2)
    log_base: str = "log2"
    relay_gain: str = "shared"

    def __post_init__(self):
        positive = ("bandwidth_hz", "client_power_w", "es_power_w", "noise_psd_w_hz", "model_bits", "cloud_ratio")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def log(self, x: float) -> float:
        return math.log2(x) if self.log_base == "log2" else math.log(x)

    @classmethod
    def from_spec(cls, spec, num_params: int) -> "ChannelParams":
        """Build from a ChannelSpec; N0 is converted from dBm/Hz here and only here."""
        return cls(
            bandwidth_hz=spec.bandwidth_hz,
            client_power_w=spec.client_power_w,
            es_power_w=spec.es_power_w,
            noise_psd_w_hz=dbm_per_hz_to_watts(spec.noise_psd_dbm_hz),
            pathloss_intercept_db=spec.pathloss_intercept_db,
            pathloss_slope_db=spec.pathloss_slope_db,
            rayleigh_variance=spec.rayleigh_variance,
            rayleigh_floor=spec.rayleigh_floor,
            model_bits=float(num_params * spec.bits_per_parameter),
            cloud_ratio=spec.cloud_ratio,
            compute_time_range=(float(spec.compute_time_range[0]), float(spec.compute_time_range[-1])),
            log_base=spec.log_base,
            relay_gain=spec.relay_gain,
        )


def pathloss_db(distance_m: float, params: ChannelParams = ChannelParams()) -> float:
    return params.pathloss_intercept_db + params.pathloss_slope_db * math.log10(distance_m / 1000.0)


def link_gain(distance_m: float, fading_power: float, params: ChannelParams = ChannelParams()) -> float:
    """Power gain 10^(-PL(d)/10) * |h|^2."""
    return 10.0 ** (-pathloss_db(distance_m, params) / 10.0) * fading_power


@dataclass(frozen=True)
class GainTable:
    """Client-to-server gains; NaN where the server does not cover the client."""

    values: np.ndarray

    def gain(self, client: int, server: int) -> float:
        return float(self.values[client, server])

    def min_gain(self, clients: Sequence[int], server: int) -> float:
        return float(min(self.values[k, server] for k in clients))


def sample_gains(topo: Topology, params: ChannelParams, seed) -> GainTable:
    """Sample pathloss x Rayleigh power for every covered client-server link.

    Links are reciprocal: one fading draw serves both directions.
    """
    rng = np.random.default_rng(seed)
    values = np.full((topo.num_clients, topo.num_servers), np.nan)
    scale = math.sqrt(params.rayleigh_variance / 2.0)
    for k in range(topo.num_clients):
        for l in topo.covering_servers(k):
            d = topo.distance(k, l)
            if d < MIN_DISTANCE_M:
                logger.warning("Client %d is %.3f m from server %d; clamped to %.0f m", k, d, l, MIN_DISTANCE_M)
                d = MIN_DISTANCE_M
            h = scale * complex(rng.standard_normal(), rng.standard_normal())
            fading = max(abs(h) ** 2, params.rayleigh_floor)
            values[k, l] = link_gain(d, fading, params)
    return GainTable(values)


def sample_compute_times(num_clients: int, params: ChannelParams, seed) -> np.ndarray:
    """Per-epoch compute time of each client, uniform over the configured range."""
    low, high = params.compute_time_range
    return np.random.default_rng(seed).uniform(low, high, size=num_clients)


def upload_time(num_uploaders: int, min_gain: float, params: ChannelParams) -> float:
    """Time for |S| clients to upload over B/(2|S|) each; the worst gain dominates."""
    share = params.bandwidth_hz / (2.0 * num_uploaders)
    snr = min_gain * params.client_power_w / (share * params.noise_psd_w_hz)
    return params.model_bits / (share * params.log(1.0 + snr))


def upload_latency(cell: int, uploaders: Sequence[int], gains: GainTable, params: ChannelParams) -> float:
    if not uploaders:
        return 0.0
    return upload_time(len(uploaders), gains.min_gain(uploaders, cell), params)


def broadcast_time(min_gain: float, params: ChannelParams) -> float:
    """Server broadcast over the half band at ES power to its worst receiver."""
    band = params.bandwidth_hz / 2.0
    snr = params.es_power_w * min_gain / (band * params.noise_psd_w_hz)
    return params.model_bits / (band * params.log(1.0 + snr))


def broadcast_latency(server: int, topo: Topology, gains: GainTable, params: ChannelParams) -> float:
    receivers = topo.coverage(server)
    if not receivers:
        return 0.0
    return broadcast_time(gains.min_gain(receivers, server), params)


def relay_time(downlink_gain: float, uplink_gain: float, params: ChannelParams) -> float:
    """Two-leg ES -> ROC -> ES hop with a quarter band per leg."""
    quarter = params.bandwidth_hz / 4.0
    scale = 4.0 / (params.bandwidth_hz * params.noise_psd_w_hz)
    rate = quarter * (
        params.log(1.0 + downlink_gain * params.es_power_w * scale)
        + params.log(1.0 + uplink_gain * params.client_power_w * scale)
    )
    return params.model_bits / rate


def relay_latency(
    pair: int,
    topo: Topology,
    gains: GainTable,
    params: ChannelParams,
    target: Optional[int] = None,
) -> float:
    """Latency of forwarding a server model through the ROC of an overlap pair.

    With ``relay_gain="shared"`` both legs use the worse of the two ROC gains. With
    ``"split"`` the downlink leg uses the source server's gain and the uplink leg the
    target's. Without a ``target`` the slower direction is returned.

    Returns:
        Seconds; 0 when the pair does not exist or has no ROC
    """
    if pair < 0 or pair >= topo.num_pairs:
        return 0.0
    roc = topo.relay_client(pair)
    if roc is None:
        return 0.0
    left, right = gains.gain(roc, pair), gains.gain(roc, pair + 1)
    if params.relay_gain == "shared":
        worst = min(left, right)
        return relay_time(worst, worst, params)
    if target is None:
        return max(relay_time(left, right, params), relay_time(right, left, params))
    if target == pair + 1:
        return relay_time(left, right, params)
    return relay_time(right, left, params)


def server_relay_latency(server: int, topo: Topology, gains: GainTable, params: ChannelParams) -> float:
    """Max over the two incoming relays; boundary servers get 0 for the missing side."""
    return max(
        relay_latency(server - 1, topo, gains, params, target=server),
        relay_latency(server, topo, gains, params, target=server),
    )


@dataclass(frozen=True)
class EsTiming:
    es: int
    t_cast: float
    t_comp: float
    t_upload: float
    t_relay: float

    @property
    def t_edge(self) -> float:
        return self.t_cast + self.t_comp + self.t_upload


def round_times(
    topo: Topology,
    gains: Optional[GainTable],
    compute_times: Optional[np.ndarray],
    params: ChannelParams,
    uploaders: Sequence[Sequence[int]],
    trainers: Optional[Sequence[Sequence[int]]] = None,
    epochs: int = 5,
    relays: bool = True,
) -> List[EsTiming]:
    """Per-server latency breakdown of one edge round.

    Args:
        topo: Chain topology
        gains: Link gains; None gives an all-zero clock (tag-mode runs)
        compute_times: Per-epoch compute time per client
        params: Channel parameters
        uploaders: Clients uploading to each server
        trainers: Clients training from each server's model (defaults to uploaders)
        epochs: Local epochs E
        relays: Whether the relay stage runs this round

    Returns:
        One EsTiming per server
    """
    trainers = uploaders if trainers is None else trainers
    timings = []
    for l in range(topo.num_servers):
        if gains is None:
            timings.append(EsTiming(l, 0.0, 0.0, 0.0, 0.0))
            continue
        t_comp = max((epochs * float(compute_times[k]) for k in trainers[l]), default=0.0)
        timings.append(EsTiming(
            es=l,
            t_cast=broadcast_latency(l, topo, gains, params),
            t_comp=t_comp,
            t_upload=upload_latency(l, uploaders[l], gains, params),
            t_relay=server_relay_latency(l, topo, gains, params) if relays else 0.0,
        ))
    return timings


def cloud_latency(timings: Sequence[EsTiming], params: ChannelParams) -> float:
    """t_cloud = t_c * max_l t_edge."""
    return params.cloud_ratio * max(t.t_edge for t in timings)

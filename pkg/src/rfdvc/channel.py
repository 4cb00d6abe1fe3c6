"""Packetisation and a two-state Gilbert-Elliott packet-loss channel."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .codec import Bitstream

GOOD, BAD = 0, 1
RELIABLE = -1


@dataclass(frozen=True)
class ChannelConfig:
    p_gb: float = 0.0
    p_bg: float = 0.3
    e_g: float = 0.0
    e_b: float = 1.0
    payload_bytes: int = 1024
    t_net: float = 10e6
    tau: float = 1.0 / 3.0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_gb", "p_bg", "e_g", "e_b"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.p_gb + self.p_bg <= 0:
            raise ValueError("degenerate chain: p_gb + p_bg must be > 0")
        if self.payload_bytes < 64:
            raise ValueError("payload_bytes must be >= 64")
        if self.t_net <= 0:
            raise ValueError("t_net must be positive")

    def with_seed(self, seed: int) -> "ChannelConfig":
        return replace(self, seed=seed)


def analytical_loss_rate(cfg: ChannelConfig) -> float:
    """Stationary packet-loss probability of the chain."""
    denom = cfg.p_gb + cfg.p_bg
    if denom <= 0:
        raise ValueError("degenerate chain")
    return (cfg.p_bg * cfg.e_g + cfg.p_gb * cfg.e_b) / denom


BLER_P_BG = 0.3


def bler_to_config(target_bler: float, **overrides) -> ChannelConfig:
    """Channel whose stationary loss rate equals ``target_bler`` (fixed burstiness)."""
    if not 0.0 <= target_bler <= 0.5:
        raise ValueError(f"target BLER {target_bler} outside [0, 0.5]")
    p_bg = overrides.pop("p_bg", BLER_P_BG)
    p_gb = target_bler * p_bg / (1.0 - target_bler)
    return ChannelConfig(p_gb=p_gb, p_bg=p_bg, e_g=0.0, e_b=1.0, **overrides)


@dataclass(frozen=True)
class Packet:
    frame_idx: int
    slice_idx: int
    fragment_idx: int
    nbytes: int
    reliable: bool = False


def packetize(bits: Bitstream, cfg: ChannelConfig, control_bytes: int = 0) -> tuple[list[Packet], float]:
    """Split a bitstream into packets and estimate the transmission time.

    Packet 0 carries the header, slice directory and ``control_bytes`` of
    side-channel data on the reliable plane.  Returns ``(packets, tau_est)``.
    """
    packets = [Packet(RELIABLE, RELIABLE, 0, bits.header_size + control_bytes, reliable=True)]
    for f in range(bits.frame_count):
        for s in range(bits.slices_per_frame):
            span = bits.slice_span(f, s)
            n = math.ceil(span / cfg.payload_bytes)
            for k in range(n):
                size = min(cfg.payload_bytes, span - k * cfg.payload_bytes)
                packets.append(Packet(f, s, k, size))
    total_bits = 8 * sum(p.nbytes for p in packets)
    return packets, total_bits / cfg.t_net


def gilbert_elliott(n: int, cfg: ChannelConfig, rng: np.random.Generator | None = None):
    """Simulate ``n`` packets; returns ``(delivered, states)`` arrays.

    Starts in GOOD.  Per packet: loss drawn with the current state's error
    probability, then the state transition is drawn.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    u_loss = rng.random(n).tolist()
    u_move = rng.random(n).tolist()
    delivered = [True] * n
    states = [GOOD] * n
    e = (cfg.e_g, cfg.e_b)
    leave = (cfg.p_gb, cfg.p_bg)
    state = GOOD
    for i in range(n):
        states[i] = state
        if u_loss[i] < e[state]:
            delivered[i] = False
        if u_move[i] < leave[state]:
            state = 1 - state
    return np.array(delivered, dtype=bool), np.array(states, dtype=np.int8)


@dataclass
class PacketTrace:
    frame_idx: np.ndarray
    slice_idx: np.ndarray
    fragment_idx: np.ndarray
    delivered: np.ndarray
    state: np.ndarray          # GOOD/BAD; -1 for reliable packets (no chain step)
    reliable: np.ndarray
    availability: np.ndarray   # (frames, slices_per_frame) bool

    @property
    def n_packets(self) -> int:
        return len(self.delivered)

    @property
    def realized_loss_rate(self) -> float:
        data = ~self.reliable
        if not data.any():
            return 0.0
        return float(np.mean(~self.delivered[data]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["packet_idx", "frame_idx", "slice_idx", "fragment_idx", "state", "delivered"])
            names = {GOOD: "G", BAD: "B", RELIABLE: "R"}
            for i in range(self.n_packets):
                w.writerow([i, int(self.frame_idx[i]), int(self.slice_idx[i]), int(self.fragment_idx[i]),
                            names[int(self.state[i])], int(self.delivered[i])])


def transmit(packets: list[Packet], cfg: ChannelConfig, shape: tuple[int, int] | None = None) -> PacketTrace:
    """Send packets through the channel.  Reliable packets bypass the chain."""
    n = len(packets)
    frame_idx = np.array([p.frame_idx for p in packets], dtype=np.int64)
    slice_idx = np.array([p.slice_idx for p in packets], dtype=np.int64)
    frag_idx = np.array([p.fragment_idx for p in packets], dtype=np.int64)
    reliable = np.array([p.reliable for p in packets], dtype=bool)
    delivered = np.ones(n, dtype=bool)
    state = np.full(n, RELIABLE, dtype=np.int8)
    data = np.flatnonzero(~reliable)
    d, s = gilbert_elliott(len(data), cfg)
    delivered[data] = d
    state[data] = s

    if shape is None:
        shape = (int(frame_idx.max(initial=-1)) + 1, int(slice_idx.max(initial=-1)) + 1)
    avail = np.ones(shape, dtype=bool)
    lost = data[~d]
    avail[frame_idx[lost], slice_idx[lost]] = False
    return PacketTrace(frame_idx, slice_idx, frag_idx, delivered, state, reliable, avail)


def mean_burst_length(delivered: np.ndarray) -> float:
    """Mean length of runs of consecutive losses."""
    lost = (~np.asarray(delivered, dtype=bool)).astype(np.int8)
    if not lost.any():
        return 0.0
    edges = np.diff(np.concatenate([[0], lost, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return float(np.mean(ends - starts))

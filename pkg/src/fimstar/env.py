"""Episodic MDP over the FIM / STAR-BD-RIS downlink.

Action layout (all entries in [-1, 1]):
    heights  M          FIM element heights
    beam_re  U*N*M      beamformer real parts, C-order (u, n, m)
    beam_im  U*N*M      beamformer imaginary parts
    logits   U*N        subcarrier assignment scores, C-order (u, n)
    beta     K          transmission power fraction per RIS element
    phase_t  K          transmission-sector phases
    phase_r  K          reflection-sector phases

State layout: real/imag of g (U,N,M), h_ru (U,N,K), h_br (N,M,K), then the
SINRs (U,N) and the sum rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, FimShape, morph_bounds, sample_task
from .config import ScenarioConfig
from .metrics import (
    AllocationDecision,
    LinkMetrics,
    PowerModel,
    constraint_report,
    cross_sinr_matrix,
    effective_channels,
    energy_efficiency,
    sic_margins,
    sum_rate,
    total_power,
    transmit_power_per_subcarrier,
)
from .ris import SectorMatrices, element_power_deviation, project_raw, sector_matrices_for


@dataclass(frozen=True)
class Block:
    offset: int
    shape: tuple
    is_complex: bool

    @property
    def count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def size(self) -> int:
        return self.count * (2 if self.is_complex else 1)


class _Layout:
    def __init__(self, blocks: list[tuple[str, tuple, bool]]):
        self.blocks: dict[str, Block] = {}
        offset = 0
        for name, shape, is_complex in blocks:
            block = Block(offset, tuple(shape), is_complex)
            self.blocks[name] = block
            offset += block.size
        self.size = offset

    def extract(self, vec: np.ndarray, name: str) -> np.ndarray:
        b = self.blocks[name]
        flat = vec[..., b.offset:b.offset + b.size]
        if b.is_complex:
            flat = flat[..., :b.count] + 1j * flat[..., b.count:]
        return flat.reshape(vec.shape[:-1] + b.shape)

    def __len__(self) -> int:
        return self.size


class StateLayout(_Layout):
    def __init__(self, u: int, n: int, m: int, k: int):
        self.dims = (u, n, m, k)
        super().__init__([
            ("g", (u, n, m), True),
            ("h_ru", (u, n, k), True),
            ("h_br", (n, m, k), True),
            ("sinr", (u, n), False),
            ("rate", (), False),
        ])


class ActionLayout(_Layout):
    def __init__(self, u: int, n: int, m: int, k: int):
        self.dims = (u, n, m, k)
        super().__init__([
            ("heights", (m,), False),
            ("beams", (u, n, m), True),
            ("logits", (u, n), False),
            ("beta", (k,), False),
            ("phase_t", (k,), False),
            ("phase_r", (k,), False),
        ])


def layouts_for(cfg: ScenarioConfig) -> tuple[StateLayout, ActionLayout]:
    s = cfg.system
    dims = (s.num_users, s.n_subcarriers, s.num_antennas, s.k_ris)
    return StateLayout(*dims), ActionLayout(*dims)


def _cplx(x: np.ndarray) -> np.ndarray:
    x = np.ravel(x)
    return np.concatenate([x.real, x.imag])


def encode_state(channels: ChannelSet, sinr: np.ndarray, rate: float) -> np.ndarray:
    return np.concatenate([
        _cplx(channels.g), _cplx(channels.h_ru), _cplx(channels.h_br),
        np.ravel(sinr).astype(float), [float(rate)],
    ])


def schedule(logits: np.ndarray, u_max: int) -> np.ndarray:
    """Per subcarrier: top-u_max users with positive logit, else the argmax alone."""
    u, n = logits.shape
    alpha = np.zeros((u, n))
    for j in range(n):
        col = logits[:, j]
        order = np.argsort(-col, kind="stable")
        chosen = [i for i in order[:u_max] if col[i] > 0]
        if not chosen:
            chosen = [int(order[0])]
        alpha[chosen, j] = 1.0
    return alpha


def decode_action(a: np.ndarray, cfg: ScenarioConfig, layout: ActionLayout | None = None) -> AllocationDecision:
    if layout is None:
        layout = layouts_for(cfg)[1]
    a = np.clip(np.nan_to_num(np.asarray(a, dtype=float)), -1.0, 1.0)
    if a.shape != (layout.size,):
        raise ValueError(f"action has shape {a.shape}, expected ({layout.size},)")
    y_min, y_max = morph_bounds(cfg)
    heights = y_min + (layout.extract(a, "heights") + 1.0) / 2.0 * (y_max - y_min)
    shape = FimShape(np.clip(heights, y_min, y_max), y_min, y_max)

    alpha = schedule(layout.extract(a, "logits"), cfg.system.u_max)
    w = layout.extract(a, "beams")
    raw = np.sum(alpha * np.sum(np.abs(w) ** 2, axis=-1), axis=0)
    target = np.minimum(raw, cfg.system.p_max)
    scale = np.sqrt(np.divide(target, raw, out=np.ones_like(raw), where=raw > 0))
    # shave a few ulps off clipped subcarriers so rounding never lands above P_max
    scale = np.where(raw > cfg.system.p_max, scale * (1.0 - 4.0 * np.finfo(float).eps), scale)
    w = w * scale[None, :, None]

    ris = project_raw(layout.extract(a, "beta"), layout.extract(a, "phase_t"),
                      layout.extract(a, "phase_r"))
    return AllocationDecision(w, alpha, shape, ris)


@dataclass
class StepOutcome:
    reward: float
    raw_reward: float
    metrics: LinkMetrics
    terms: np.ndarray


def reward_terms(decision: AllocationDecision, channels: ChannelSet, sectors: SectorMatrices,
                 pm: PowerModel) -> tuple[np.ndarray, LinkMetrics, bool]:
    """Unweighted reward terms, the link metrics and whether the FIM-bound and binary-assignment constraints hold."""
    ch = channels.at_shape(decision.fim_shape)
    eff = effective_channels(ch, sectors)
    cross = cross_sinr_matrix(eff, decision, ch.noise_power)
    gamma = np.einsum("uun->un", cross).copy()
    rate = sum_rate(gamma)
    p_t, p1, p2 = total_power(decision, pm)
    ee = energy_efficiency(rate, p_t)
    metrics = LinkMetrics(gamma, rate, p_t, p1, p2, ee)
    terms = np.array([
        ee,
        float(np.sum(sic_margins(cross, decision.alpha))),
        float(np.sum(pm.u_max - decision.alpha.sum(axis=0))),
        pm.p_max - float(np.sum(transmit_power_per_subcarrier(decision))),
        -abs(float(np.sum(element_power_deviation(sectors)))),
    ])
    report = constraint_report(decision, ch, sectors, pm, cross=cross)
    feasible = report.satisfied("fim_bounds") and report.satisfied("binary_assignment")
    return terms, metrics, feasible


def reward(decision: AllocationDecision, channels: ChannelSet, sectors: SectorMatrices,
           pm: PowerModel, weights) -> float:
    return evaluate_step(decision, channels, sectors, pm, weights).reward


def evaluate_step(decision, channels, sectors, pm, weights) -> StepOutcome:
    terms, metrics, feasible = reward_terms(decision, channels, sectors, pm)
    r = float(np.dot(np.asarray(weights, dtype=float), terms))
    return StepOutcome(r if feasible else -abs(r), r, metrics, terms)


class FimStarEnv:
    """One environment instance; channels are fixed within an episode."""

    def __init__(self, cfg: ScenarioConfig, ris_mode: str | None = None):
        self.cfg = cfg
        self.ris_mode = cfg.training.ris_mode if ris_mode is None else ris_mode
        self.pm = PowerModel.from_config(cfg)
        self.weights = np.asarray(cfg.reward.weights, dtype=float)
        self.state_layout, self.action_layout = layouts_for(cfg)
        self.t_max = cfg.training.steps_per_episode
        self.channels: ChannelSet | None = None
        self.t = 0

    @property
    def state_dim(self) -> int:
        return self.state_layout.size

    @property
    def action_dim(self) -> int:
        return self.action_layout.size

    def decode(self, a: np.ndarray) -> AllocationDecision:
        return decode_action(a, self.cfg, self.action_layout)

    def sectors(self, decision: AllocationDecision) -> SectorMatrices:
        return sector_matrices_for(self.ris_mode, decision.ris)

    def evaluate(self, a: np.ndarray, channels: ChannelSet | None = None) -> tuple[StepOutcome, AllocationDecision]:
        channels = self.channels if channels is None else channels
        decision = self.decode(a)
        out = evaluate_step(decision, channels, self.sectors(decision), self.pm, self.weights)
        return out, decision

    def reset(self, rng: np.random.Generator) -> tuple[ChannelSet, np.ndarray]:
        self.channels = sample_task(rng, self.cfg)
        self.t = 0
        out, decision = self.evaluate(np.zeros(self.action_dim))
        ch = self.channels.at_shape(decision.fim_shape)
        return self.channels, encode_state(ch, out.metrics.sinr, out.metrics.sum_rate)

    def step(self, a: np.ndarray) -> tuple[np.ndarray, float, bool, StepOutcome]:
        if self.channels is None:
            raise RuntimeError("call reset() before step()")
        out, decision = self.evaluate(a)
        self.t += 1
        ch = self.channels.at_shape(decision.fim_shape)
        state = encode_state(ch, out.metrics.sinr, out.metrics.sum_rate)
        return state, out.reward, self.t >= self.t_max, out

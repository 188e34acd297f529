"""Effective channels, SINR, rate, power, energy efficiency and constraint residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, FimShape
from .config import ScenarioConfig
from .ris import SectorMatrices, StarBdRisParams, element_power_deviation


@dataclass
class AllocationDecision:
    """Decoded action. w: (U, N, M) complex, alpha: (U, N) in {0, 1}."""

    w: np.ndarray
    alpha: np.ndarray
    fim_shape: FimShape
    ris: StarBdRisParams


@dataclass(frozen=True)
class PowerModel:
    p_static_bs: float
    p_static_ris: float
    p_per_element_ris: float
    amp_efficiency: float
    u_max: int
    p_max: float

    def __post_init__(self):
        for name in ("p_static_bs", "p_static_ris", "p_per_element_ris", "p_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.amp_efficiency < 1:
            raise ValueError("amp_efficiency must lie in (0, 1)")
        if self.u_max < 1:
            raise ValueError("u_max must be >= 1")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> PowerModel:
        p = cfg.power
        return cls(p.p_static_bs, p.p_static_ris, p.p_per_element_ris,
                   p.amp_efficiency, cfg.system.u_max, cfg.system.p_max)


@dataclass
class LinkMetrics:
    sinr: np.ndarray
    sum_rate: float
    total_power: float
    static_power: float
    transmit_power: float
    ee: float


def effective_channels(channels: ChannelSet, sectors: SectorMatrices,
                       u_t: int | None = None) -> np.ndarray:
    """Composite row vectors h^H Phi^s (H^BR)^H + g^H for all (u, n); shape (U, N, M)."""
    u, n, m, k = channels.dims
    if sectors.phi_t.shape != (k, k):
        raise ValueError(f"sector matrices are {sectors.phi_t.shape}, channels expect K={k}")
    u_t = channels.u_t if u_t is None else u_t
    phi = sectors.per_user(u_t, u)
    cascade = np.einsum("unk,uk,nmk->unm", channels.h_ru.conj(), phi, channels.h_br.conj())
    return cascade + channels.g.conj()


def effective_channel(u: int, n: int, channels: ChannelSet, sectors: SectorMatrices,
                      u_t: int | None = None) -> np.ndarray:
    num_u, num_n, _, k = channels.dims
    if not (0 <= u < num_u and 0 <= n < num_n):
        raise ValueError(f"(u, n) = ({u}, {n}) out of range for U={num_u}, N={num_n}")
    if sectors.phi_t.shape != (k, k):
        raise ValueError(f"sector matrices are {sectors.phi_t.shape}, channels expect K={k}")
    u_t = channels.u_t if u_t is None else u_t
    phi = sectors.phi_t if u < u_t else sectors.phi_r
    h = channels.h_ru[u, n]
    return h.conj() @ phi @ channels.h_br[n].conj().T + channels.g[u, n].conj()


def received_power(eff: np.ndarray, w: np.ndarray) -> np.ndarray:
    """|eff_{u,n} w_{i,n}|^2 indexed [u, i, n]."""
    return np.abs(np.einsum("unm,inm->uin", eff, w)) ** 2


def cross_sinr_matrix(eff: np.ndarray, decision: AllocationDecision,
                      noise_power: np.ndarray) -> np.ndarray:
    """Gamma_u^n(i) indexed [u, i, n]: beam i decoded at user u, other beams as interference.

    The diagonal [u, u, n] is each user's own SINR.
    """
    rx = received_power(eff, decision.w) * decision.alpha[None, :, :]
    total = rx.sum(axis=1, keepdims=True)
    return rx / (total - rx + noise_power[:, None, :])


def sinr(decision: AllocationDecision, channels: ChannelSet, sectors: SectorMatrices) -> np.ndarray:
    eff = effective_channels(channels, sectors)
    cross = cross_sinr_matrix(eff, decision, channels.noise_power)
    return np.einsum("uun->un", cross).copy()


def cross_sinr(u: int, i: int, n: int, decision: AllocationDecision,
               channels: ChannelSet, sectors: SectorMatrices) -> float:
    eff = effective_channel(u, n, channels, sectors)
    w = decision.w[:, n]
    alpha = decision.alpha[:, n]
    rx = alpha * np.abs(w @ eff) ** 2
    return float(rx[i] / (rx.sum() - rx[i] + channels.noise_power[u, n]))


def sum_rate(sinr_values) -> float:
    return float(np.sum(np.log2(1.0 + np.asarray(sinr_values, dtype=float))))


def transmit_power_per_subcarrier(decision: AllocationDecision) -> np.ndarray:
    return np.sum(decision.alpha * np.sum(np.abs(decision.w) ** 2, axis=-1), axis=0)


def total_power(decision: AllocationDecision, pm: PowerModel) -> tuple[float, float, float]:
    """(P_T, P_T1, P_T2) in watts."""
    p1 = pm.p_static_bs + pm.p_static_ris + decision.ris.k_ris * pm.p_per_element_ris
    p2 = float(np.sum(transmit_power_per_subcarrier(decision))) / pm.amp_efficiency
    return p1 + p2, p1, p2


def energy_efficiency(rate: float, power: float) -> float:
    if not power > 0:
        raise ValueError(f"total power must be positive, got {power}")
    return rate / power


def evaluate(decision: AllocationDecision, channels: ChannelSet, sectors: SectorMatrices,
             pm: PowerModel) -> LinkMetrics:
    g = sinr(decision, channels.at_shape(decision.fim_shape), sectors)
    rate = sum_rate(g)
    p_t, p1, p2 = total_power(decision, pm)
    return LinkMetrics(g, rate, p_t, p1, p2, energy_efficiency(rate, p_t))


def sic_margins(cross: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Gamma_u^n(i) - Gamma_u^n(u) for every ordered pair u != i sharing subcarrier n.

    Returns an array [u, i, n]; entries for u == i or for pairs not
    co-scheduled on n are zero.
    """
    own = np.einsum("uun->un", cross)
    margin = cross - own[:, None, :]
    u = cross.shape[0]
    pair = alpha[:, None, :] * alpha[None, :, :] * (1.0 - np.eye(u))[:, :, None]
    return margin * pair


@dataclass
class ConstraintReport:
    """Residual per constraint; a constraint holds iff its residual is >= 0.

    ``sic`` is the summed SIC margin used by the reward; ``users_per_subcarrier``
    and ``power_per_subcarrier`` are per-subcarrier slacks.
    """

    sic: float
    users_per_subcarrier: np.ndarray
    power_per_subcarrier: np.ndarray
    fim_bounds: float
    binary_assignment: float
    ris_power: float

    def satisfied(self, name: str) -> bool:
        return bool(np.all(np.asarray(getattr(self, name)) >= 0))

    def residuals(self) -> dict:
        return {
            "sic": self.sic,
            "users_per_subcarrier": float(np.min(self.users_per_subcarrier)),
            "power_per_subcarrier": float(np.min(self.power_per_subcarrier)),
            "fim_bounds": self.fim_bounds,
            "binary_assignment": self.binary_assignment,
            "ris_power": self.ris_power,
        }


def constraint_report(decision: AllocationDecision, channels: ChannelSet,
                      sectors: SectorMatrices, pm: PowerModel,
                      cross: np.ndarray | None = None) -> ConstraintReport:
    if cross is None:
        eff = effective_channels(channels.at_shape(decision.fim_shape), sectors)
        cross = cross_sinr_matrix(eff, decision, channels.noise_power)
    alpha = decision.alpha
    y = decision.fim_shape
    binary_dev = np.minimum(np.abs(alpha), np.abs(alpha - 1.0))
    return ConstraintReport(
        sic=float(np.sum(sic_margins(cross, alpha))),
        users_per_subcarrier=pm.u_max - alpha.sum(axis=0),
        power_per_subcarrier=pm.p_max - transmit_power_per_subcarrier(decision),
        fim_bounds=float(min(np.min(y.y - y.y_min), np.min(y.y_max - y.y))),
        binary_assignment=-float(np.max(binary_dev)) if binary_dev.size else 0.0,
        ris_power=-float(np.max(np.abs(element_power_deviation(sectors)))),
    )

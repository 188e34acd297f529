"""Dual-sector STAR-BD-RIS under the cell-wise single-connected architecture.

Each sector matrix is diagonal. Element k splits its power between the
transmission sector (fraction beta_k) and the reflection sector (1 - beta_k),
so sum_s |Phi^{s,k}|^2 = 1 holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StarBdRisParams:
    beta: np.ndarray
    phase_t: np.ndarray
    phase_r: np.ndarray

    @property
    def k_ris(self) -> int:
        return self.beta.shape[0]

    @classmethod
    def uniform(cls, k_ris: int, beta: float = 0.5) -> StarBdRisParams:
        return cls(np.full(k_ris, beta), np.zeros(k_ris), np.zeros(k_ris))


@dataclass(frozen=True)
class SectorMatrices:
    phi_t: np.ndarray
    phi_r: np.ndarray

    @property
    def diag_t(self) -> np.ndarray:
        return np.diagonal(self.phi_t)

    @property
    def diag_r(self) -> np.ndarray:
        return np.diagonal(self.phi_r)

    def per_user(self, u_t: int, num_users: int) -> np.ndarray:
        """Diagonal seen by each user, shape (U, K): T sector for u < u_t."""
        sector_t = (np.arange(num_users) < u_t)[:, None]
        return np.where(sector_t, self.diag_t[None, :], self.diag_r[None, :])

    @classmethod
    def zeros(cls, k_ris: int) -> SectorMatrices:
        z = np.zeros((k_ris, k_ris), dtype=complex)
        return cls(z, z.copy())


def build_sector_matrices(params: StarBdRisParams) -> SectorMatrices:
    beta = np.asarray(params.beta, dtype=float)
    if np.any(~np.isfinite(beta)) or np.any(beta < 0) or np.any(beta > 1):
        raise ValueError("beta must lie in [0, 1]")
    t = np.sqrt(beta) * np.exp(1j * np.asarray(params.phase_t, dtype=float))
    r = np.sqrt(1.0 - beta) * np.exp(1j * np.asarray(params.phase_r, dtype=float))
    return SectorMatrices(np.diag(t), np.diag(r))


def check_joint_unitary(m: SectorMatrices) -> float:
    """Max-norm of sum_s (Phi^s)^H Phi^s - I."""
    k = m.phi_t.shape[0]
    gram = m.phi_t.conj().T @ m.phi_t + m.phi_r.conj().T @ m.phi_r
    return float(np.max(np.abs(gram - np.eye(k))))


def element_power_deviation(m: SectorMatrices) -> np.ndarray:
    """Per-element sum_s |Phi^{s,k}|^2 - 1."""
    return np.abs(m.diag_t) ** 2 + np.abs(m.diag_r) ** 2 - 1.0


def project_raw(raw_beta, raw_phase_t, raw_phase_r) -> StarBdRisParams:
    """Map squashed agent outputs in [-1, 1] to valid RIS parameters."""
    beta = np.clip((np.asarray(raw_beta, dtype=float) + 1.0) / 2.0, 0.0, 1.0)

    def phase(raw):
        return np.mod(np.pi * (np.asarray(raw, dtype=float) + 1.0), 2.0 * np.pi)

    return StarBdRisParams(beta, phase(raw_phase_t), phase(raw_phase_r))


def d_ris_baseline(params: StarBdRisParams) -> SectorMatrices:
    """Conventional reflect-only diagonal RIS with unit-modulus entries."""
    k = params.k_ris
    return SectorMatrices(np.zeros((k, k), dtype=complex),
                          np.diag(np.exp(1j * np.asarray(params.phase_r, dtype=float))))


def sector_matrices_for(mode: str, params: StarBdRisParams) -> SectorMatrices:
    """Sector matrices for a RIS variant: ``star``, ``d_ris`` or ``none``."""
    if mode == "star":
        return build_sector_matrices(params)
    if mode == "d_ris":
        return d_ris_baseline(params)
    if mode == "none":
        return SectorMatrices.zeros(params.k_ris)
    raise ValueError(f"unknown RIS mode {mode!r}")

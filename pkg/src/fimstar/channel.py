"""FIM array geometry, deformable steering vectors and multipath channel sampling.

All array-valued functions broadcast over leading batch dimensions so a whole
task (every user, subcarrier and RIS element) is built with a handful of
vectorised calls. The single-cluster forms are the same functions called with
1-D inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import ScenarioConfig


@dataclass(frozen=True)
class CarrierConfig:
    carrier_wavelength_m: float

    def __post_init__(self):
        if not self.carrier_wavelength_m > 0:
            raise ValueError("carrier wavelength must be positive")

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.carrier_wavelength_m


@dataclass(frozen=True)
class FimGeometry:
    m_x: int
    m_z: int
    d_x: float
    d_z: float
    x_coords: np.ndarray
    z_coords: np.ndarray

    @property
    def num_elements(self) -> int:
        return self.m_x * self.m_z


@dataclass(frozen=True)
class FimShape:
    y: np.ndarray
    y_min: float
    y_max: float

    def __post_init__(self):
        if not self.y_max > self.y_min:
            raise ValueError("morphing range y_max - y_min must be positive")

    @property
    def morph_range(self) -> float:
        return self.y_max - self.y_min

    def within_bounds(self) -> bool:
        return bool(np.all(self.y >= self.y_min) and np.all(self.y <= self.y_max))

    @classmethod
    def flat(cls, m: int, y_max: float, y_min: float = 0.0) -> FimShape:
        return cls(np.full(m, y_min, dtype=float), y_min, y_max)


@dataclass(frozen=True)
class PathCluster:
    """Multipath cluster(s); arrays have shape ``batch + (P,)``, pathloss ``batch``."""

    gains: np.ndarray
    elevations: np.ndarray
    azimuths: np.ndarray
    per_path_power: np.ndarray
    total_pathloss: np.ndarray

    @property
    def num_paths(self) -> int:
        return self.gains.shape[-1]


def build_fim_geometry(m_x: int, m_z: int, d_x: float, d_z: float) -> FimGeometry:
    if m_x < 1 or m_z < 1:
        raise ValueError(f"element counts must be >= 1, got m_x={m_x}, m_z={m_z}")
    if not (d_x > 0 and d_z > 0):
        raise ValueError(f"spacings must be positive, got d_x={d_x}, d_z={d_z}")
    idx = np.arange(m_x * m_z)
    x = d_x * (idx % m_x)
    z = d_z * (idx // m_x)
    return FimGeometry(m_x, m_z, float(d_x), float(d_z), x.astype(float), z.astype(float))


def steering_vector(geom: FimGeometry, shape: FimShape | np.ndarray | None,
                    azimuth, elevation, carrier: CarrierConfig) -> np.ndarray:
    """Deformable array response, shape ``broadcast(azimuth, elevation) + (M,)``.

    ``shape=None`` means a rigid array (all heights zero).
    """
    m = geom.num_elements
    if shape is None:
        y = np.zeros(m)
    else:
        y = np.asarray(shape.y if isinstance(shape, FimShape) else shape, dtype=float)
    if y.shape != (m,):
        raise ValueError(f"shape has {y.shape} heights, geometry has {m} elements")
    az = np.asarray(azimuth, dtype=float)[..., None]
    el = np.asarray(elevation, dtype=float)[..., None]
    if not (np.all(np.isfinite(az)) and np.all(np.isfinite(el))):
        raise ValueError("angles must be finite")
    sin_el = np.sin(el)
    phase = (geom.x_coords * sin_el * np.cos(az)
             + y * sin_el * np.sin(az)
             + geom.z_coords * np.cos(el))
    return np.exp(1j * carrier.wavenumber * phase)


def sample_path_clusters(rng: np.random.Generator, num_paths: int, pathloss,
                         batch_shape: tuple = ()) -> PathCluster:
    """CSCG path gains with uniform power profile sigma_p^2 = pathloss / P."""
    if num_paths < 1:
        raise ValueError("num_paths must be >= 1")
    eta = np.broadcast_to(np.asarray(pathloss, dtype=float), batch_shape).copy()
    if np.any(eta <= 0):
        raise ValueError("pathloss must be positive")
    full = batch_shape + (num_paths,)
    power = np.repeat((eta / num_paths)[..., None], num_paths, axis=-1)
    gains = np.sqrt(power / 2.0) * (rng.standard_normal(full) + 1j * rng.standard_normal(full))
    elevations = rng.uniform(0.0, np.pi, full)
    azimuths = rng.uniform(0.0, np.pi, full)
    return PathCluster(gains, elevations, azimuths, power, eta)


def _multipath(geom, shape, cluster: PathCluster, carrier) -> np.ndarray:
    v = steering_vector(geom, shape, cluster.azimuths, cluster.elevations, carrier)
    return np.einsum("...p,...pm->...m", cluster.gains, v)


def bs_user_channel(geom: FimGeometry, shape: FimShape, cluster: PathCluster,
                    carrier: CarrierConfig) -> np.ndarray:
    """g(y) = sum_p gamma_p v(y, phi_p, theta_p); shape ``batch + (M,)``."""
    return _multipath(geom, shape, cluster, carrier)


def bs_ris_channel(geom: FimGeometry, shape: FimShape, clusters: PathCluster,
                   carrier: CarrierConfig, k_ris: int | None = None) -> np.ndarray:
    """H^BR(y) with column k built from the k-th cluster; shape ``batch + (M, K)``.

    ``clusters`` carries the RIS elements on its last batch axis.
    """
    if clusters.gains.ndim < 2:
        raise ValueError("bs_ris_channel needs one cluster per RIS element")
    if k_ris is not None and clusters.gains.shape[-2] != k_ris:
        raise ValueError(f"expected {k_ris} element clusters, got {clusters.gains.shape[-2]}")
    cols = _multipath(geom, shape, clusters, carrier)  # batch + (K, M)
    return np.swapaxes(cols, -1, -2)


def ris_user_channel(ris_geometry: FimGeometry, cluster: PathCluster,
                     carrier: CarrierConfig) -> np.ndarray:
    """RIS-to-user vector over a rigid RIS UPA; shape ``batch + (K,)``."""
    return _multipath(ris_geometry, None, cluster, carrier)


def pathloss(distance, c0_db: float, exponent: float, extra_loss_db: float = 0.0,
             min_distance: float = 1.0) -> np.ndarray:
    """Linear power gain C0 * d^-a (d in metres, clamped at ``min_distance``)."""
    d = np.maximum(np.asarray(distance, dtype=float), min_distance)
    return 10.0 ** ((c0_db - extra_loss_db) / 10.0) * d ** (-exponent)


@dataclass
class ChannelSet:
    """All channels of one task, evaluated at the FIM shape ``shape``.

    g: (U, N, M), h_br: (N, M, K), h_ru: (U, N, K), noise_power: (U, N).
    The BS-side clusters are kept so the channels can be re-evaluated for a
    new morphing profile with :meth:`at_shape`.
    """

    g: np.ndarray
    h_br: np.ndarray
    h_ru: np.ndarray
    noise_power: np.ndarray
    shape: FimShape
    geometry: FimGeometry
    carrier: CarrierConfig
    direct_clusters: PathCluster
    br_clusters: PathCluster
    user_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    u_t: int = 0

    @property
    def dims(self) -> tuple[int, int, int, int]:
        u, n, m = self.g.shape
        return u, n, m, self.h_br.shape[-1]

    def at_shape(self, shape: FimShape) -> ChannelSet:
        if shape is self.shape:
            return self
        g = bs_user_channel(self.geometry, shape, self.direct_clusters, self.carrier)
        h_br = bs_ris_channel(self.geometry, shape, self.br_clusters, self.carrier)
        return replace(self, g=g, h_br=h_br, shape=shape)


def carrier_from(cfg: ScenarioConfig) -> CarrierConfig:
    return CarrierConfig(cfg.system.wavelength)


def fim_geometry_from(cfg: ScenarioConfig) -> FimGeometry:
    s = cfg.system
    return build_fim_geometry(s.m_x, s.m_z, s.spacing, s.spacing)


def ris_geometry_from(cfg: ScenarioConfig) -> FimGeometry:
    s = cfg.system
    return build_fim_geometry(s.ris_mx, s.ris_mz, s.ris_spacing, s.ris_spacing)


def morph_bounds(cfg: ScenarioConfig) -> tuple[float, float]:
    return 0.0, cfg.system.morph_range * cfg.system.wavelength


def place_users(rng: np.random.Generator, cfg: ScenarioConfig) -> np.ndarray:
    """Uniform positions in the user disc; T-sector users on the y < 0 half."""
    s, g = cfg.system, cfg.geometry
    u = s.num_users
    radius = g.user_disc_radius * np.sqrt(rng.uniform(0.0, 1.0, u))
    angle = rng.uniform(0.0, np.pi, u)
    sign = np.where(np.arange(u) < s.u_t, -1.0, 1.0)
    pos = np.zeros((u, 3))
    pos[:, 0] = g.user_disc_distance + radius * np.cos(angle)
    pos[:, 1] = sign * radius * np.sin(angle)
    return pos


def sample_task(rng: np.random.Generator, cfg: ScenarioConfig,
                shape: FimShape | None = None) -> ChannelSet:
    """Draw user positions and every channel of one episode."""
    s, geo = cfg.system, cfg.geometry
    u, n, k, p = s.num_users, s.n_subcarriers, s.k_ris, geo.num_paths
    carrier = carrier_from(cfg)
    fim = fim_geometry_from(cfg)
    ris = ris_geometry_from(cfg)
    if shape is None:
        y_min, y_max = morph_bounds(cfg)
        shape = FimShape.flat(fim.num_elements, y_max, y_min)

    users = place_users(rng, cfg)
    ris_pos = np.asarray(geo.ris_position, dtype=float)
    d_bu = np.linalg.norm(users, axis=1)
    d_ru = np.linalg.norm(users - ris_pos, axis=1)
    d_br = np.linalg.norm(ris_pos)

    eta_bu = pathloss(d_bu, geo.c0_db, geo.exponent_direct, geo.direct_blockage_db, geo.min_distance)
    eta_ru = pathloss(d_ru, geo.c0_db, geo.exponent_ris, 0.0, geo.min_distance)
    eta_br = pathloss(d_br, geo.c0_db, geo.exponent_ris, 0.0, geo.min_distance)

    direct = sample_path_clusters(rng, p, eta_bu[:, None], (u, n))
    br = sample_path_clusters(rng, p, eta_br, (n, k))
    ru = sample_path_clusters(rng, p, eta_ru[:, None], (u, n))

    g = bs_user_channel(fim, shape, direct, carrier)
    h_br = bs_ris_channel(fim, shape, br, carrier, k_ris=k)
    h_ru = ris_user_channel(ris, ru, carrier)
    noise = np.full((u, n), s.noise_power)
    return ChannelSet(g, h_br, h_ru, noise, shape, fim, carrier, direct, br, users, s.u_t)

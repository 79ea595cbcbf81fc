"""Network geometry and block-fading channel generation.

Scene layout: the base station sits at (D0, 0, Hb), the jammer at
(xJ, yJ, 0), and the reflecting surface is a uniform rectangular array on
the x = 0 plane whose (iota, kappa)-th element has coordinates
(0, iota*delta, Hr + kappa*delta), iota in 1..Ny, kappa in 1..Nz.
Users are dropped uniformly in a square on the ground plane.

Direct links (BS-user, jammer-user) are Rayleigh and redrawn
independently per subchannel; the three surface-side links are Rician
and frequency-flat. Element spacing is locked to half a carrier
wavelength, which makes the deterministic line-of-sight phase factor
exp(-j*pi*phi) independent of the carrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryConfig",
    "PropagationConfig",
    "DistanceTable",
    "ChannelRealization",
    "sample_user_positions",
    "compute_geometry",
    "sample_channels",
]


@dataclass(frozen=True)
class GeometryConfig:
    """Static scene geometry. Distances in meters, N = ris_cols * ris_rows."""

    bs_offset: float = 2.0          # D0, BS x-coordinate
    bs_height: float = 10.0         # Hb
    ris_height: float = 10.0        # Hr, height of the array's lowest row
    jammer_x: float = 50.0
    jammer_y: float = 150.0
    carrier_wavelength: float = 0.1
    ris_cols: int = 8               # Ny, elements per row (y direction)
    ris_rows: int = 5               # Nz, elements per column (z direction)
    ris_offset_y: float = 0.0       # shifts the whole array along y
    user_area_center: tuple[float, float, float] = (100.0, 100.0, 0.0)
    user_area_side: float = 100.0

    def __post_init__(self):
        if self.carrier_wavelength <= 0:
            raise ValueError("carrier_wavelength must be > 0")
        if self.bs_offset <= 0 or self.bs_height <= 0 or self.ris_height <= 0:
            raise ValueError("bs_offset, bs_height, ris_height must be > 0")
        if self.ris_cols < 0 or self.ris_rows < 0:
            raise ValueError("ris_cols/ris_rows must be >= 0")
        if (self.ris_cols == 0) != (self.ris_rows == 0):
            raise ValueError("ris_cols and ris_rows must be both zero or both positive")
        if self.user_area_side < 0:
            raise ValueError("user_area_side must be >= 0")

    @property
    def element_spacing(self) -> float:
        # delta = lambda_c / 2 by construction; the spacing is not an
        # independent knob.
        return self.carrier_wavelength / 2.0

    @property
    def num_elements(self) -> int:
        return self.ris_cols * self.ris_rows


@dataclass(frozen=True)
class PropagationConfig:
    """Large-scale fading constants and the OFDMA channelization."""

    ref_pathloss: float = 1e-3      # power gain at 1 m (-30 dB)
    alpha_direct: float = 3.0       # BS-user exponent
    alpha_bs_ris: float = 2.5
    alpha_ris_user: float = 2.2
    alpha_jam_direct: float = 3.0   # jammer links mirror the BS links
    alpha_jam_ris: float = 2.5
    rician_k1: float = 1.0          # BS-RIS
    rician_k2: float = 3.0          # RIS-user
    rician_k3: float = 1.0          # jammer-RIS
    noise_density: float = 10 ** (-169 / 10) * 1e-3   # W/Hz
    bandwidth: float = 100e6        # Hz
    subchannels: int = 16
    los_phase: str = "angle"        # "angle" | "cosine"

    def __post_init__(self):
        if not (0 < self.ref_pathloss <= 1):
            raise ValueError("ref_pathloss must be in (0, 1]")
        for name in ("alpha_direct", "alpha_bs_ris", "alpha_ris_user",
                     "alpha_jam_direct", "alpha_jam_ris"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        for name in ("rician_k1", "rician_k2", "rician_k3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.noise_density <= 0 or self.bandwidth <= 0 or self.subchannels < 1:
            raise ValueError("noise_density, bandwidth must be > 0 and subchannels >= 1")
        if self.los_phase not in ("angle", "cosine"):
            raise ValueError("los_phase must be 'angle' or 'cosine'")

    @property
    def noise_power(self) -> float:
        """Noise power per subchannel in watts."""
        return self.noise_density * self.bandwidth / self.subchannels


@dataclass(frozen=True)
class DistanceTable:
    """All link distances and the arrival/departure angles at the array.

    Element grids are indexed [iota-1, kappa-1] with shape (Ny, Nz); the
    flat element index used by the channel arrays is
    n = (iota-1)*Nz + (kappa-1) (C order).
    """

    d_bs_ue: np.ndarray       # (M,)
    d_bs_ris: np.ndarray      # (Ny, Nz)
    d_ris_ue: np.ndarray      # (Ny, Nz, M)
    d_jam_ue: np.ndarray      # (M,)
    d_jam_ris: np.ndarray     # (Ny, Nz)
    aoa_bs_ris: np.ndarray    # (Ny, Nz), radians
    aod_ris_ue: np.ndarray    # (Ny, Nz, M), radians
    aoa_jam_ris: np.ndarray   # (Ny, Nz), radians

    @property
    def num_users(self) -> int:
        return self.d_bs_ue.shape[0]


@dataclass(frozen=True)
class ChannelRealization:
    """Complex link gains for one fading block.

    Surface-side links carry no subchannel axis (frequency-flat); the
    direct links are i.i.d. across the K subchannels.
    """

    h_d: np.ndarray           # (M, K) BS -> user
    h_br: np.ndarray          # (N,)   BS -> RIS
    h_ru: np.ndarray          # (N, M) RIS -> user
    h_jd: np.ndarray          # (M, K) jammer -> user
    h_jr: np.ndarray          # (N,)   jammer -> RIS


def sample_user_positions(geometry: GeometryConfig, n_users: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Drop n_users uniformly in the ground-plane square, z = 0."""
    cx, cy, _ = geometry.user_area_center
    half = geometry.user_area_side / 2.0
    xy = rng.uniform(-half, half, size=(n_users, 2)) + np.array([cx, cy])
    return np.column_stack([xy, np.zeros(n_users)])


def _clamped_arccos(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(num / den, -1.0, 1.0))


def compute_geometry(geometry: GeometryConfig, users: np.ndarray) -> DistanceTable:
    """Evaluate every link distance and array angle for fixed user drops.

    Raises ValueError on a coincident transmitter/receiver pair (zero
    distance), which would make the path-loss law singular.
    """
    users = np.asarray(users, dtype=float)
    if users.ndim != 2 or users.shape[1] != 3:
        raise ValueError("users must have shape (M, 3)")
    xm, ym = users[:, 0], users[:, 1]
    d0, hb, hr = geometry.bs_offset, geometry.bs_height, geometry.ris_height
    xj, yj = geometry.jammer_x, geometry.jammer_y
    delta = geometry.element_spacing
    ny, nz = geometry.ris_cols, geometry.ris_rows

    iota = np.arange(1, ny + 1)[:, None]        # (Ny, 1)
    kappa = np.arange(1, nz + 1)[None, :]       # (1, Nz)
    ey = geometry.ris_offset_y + iota * delta   # element y-coordinate
    ez = hr + kappa * delta                     # element z-coordinate

    d_bs_ue = np.sqrt((d0 - xm) ** 2 + ym ** 2 + hb ** 2)
    d_jam_ue = np.sqrt((xj - xm) ** 2 + (yj - ym) ** 2)
    d_bs_ris = np.sqrt((ez - hb) ** 2 + ey ** 2 + d0 ** 2)
    d_jam_ris = np.sqrt(ez ** 2 + (ey - yj) ** 2 + xj ** 2)
    d_ris_ue = np.sqrt(xm[None, None, :] ** 2 + (ez ** 2)[:, :, None]
                       + (ym[None, None, :] - ey[:, :, None]) ** 2)

    for name, arr in (("d_bs_ue", d_bs_ue), ("d_jam_ue", d_jam_ue),
                      ("d_bs_ris", d_bs_ris), ("d_jam_ris", d_jam_ris),
                      ("d_ris_ue", d_ris_ue)):
        if arr.size and np.min(arr) <= 0:
            raise ValueError(f"coincident endpoints: {name} contains a zero distance")

    aoa_bs_ris = _clamped_arccos(np.broadcast_to(ey, d_bs_ris.shape), d_bs_ris)
    aod_ris_ue = _clamped_arccos(ym[None, None, :] - ey[:, :, None], d_ris_ue)
    aoa_jam_ris = _clamped_arccos(np.broadcast_to(yj - ey, d_jam_ris.shape), d_jam_ris)

    return DistanceTable(d_bs_ue=d_bs_ue, d_bs_ris=d_bs_ris, d_ris_ue=d_ris_ue,
                         d_jam_ue=d_jam_ue, d_jam_ris=d_jam_ris,
                         aoa_bs_ris=aoa_bs_ris, aod_ris_ue=aod_ris_ue,
                         aoa_jam_ris=aoa_jam_ris)


def _cscg(rng: np.random.Generator, shape) -> np.ndarray:
    # Zero-mean circularly-symmetric complex Gaussian, unit variance.
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _los_factor(prop: PropagationConfig, angle: np.ndarray) -> np.ndarray:
    # Half-wavelength spacing: 2*pi*delta/lambda = pi regardless of carrier.
    phase = angle if prop.los_phase == "angle" else np.cos(angle)
    return np.exp(-1j * math.pi * phase)


def _rician(prop: PropagationConfig, dist: np.ndarray, alpha: float, k_factor: float,
            angle: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    amp = np.sqrt(prop.ref_pathloss * dist ** (-alpha))
    los = _los_factor(prop, angle)
    nlos = _cscg(rng, dist.shape)
    return amp * (math.sqrt(k_factor / (1 + k_factor)) * los
                  + math.sqrt(1 / (1 + k_factor)) * nlos)


def sample_channels(prop: PropagationConfig, dist: DistanceTable,
                    rng: np.random.Generator) -> ChannelRealization:
    """Draw one fading block.

    Rayleigh links: sqrt(eps_o * d^-alpha) * CSCG(0,1), independent per
    (user, subchannel). Rician links mix the unit-modulus line-of-sight
    factor with a CSCG scatter term. Draw order is fixed (h_d, h_br,
    h_ru, h_jd, h_jr) so a seeded generator reproduces blocks exactly.
    """
    m = dist.num_users
    k = prop.subchannels

    amp_d = np.sqrt(prop.ref_pathloss * dist.d_bs_ue ** (-prop.alpha_direct))
    h_d = amp_d[:, None] * _cscg(rng, (m, k))

    h_br = _rician(prop, dist.d_bs_ris, prop.alpha_bs_ris, prop.rician_k1,
                   dist.aoa_bs_ris, rng).reshape(-1)
    h_ru = _rician(prop, dist.d_ris_ue, prop.alpha_ris_user, prop.rician_k2,
                   dist.aod_ris_ue, rng).reshape(-1, m)

    amp_jd = np.sqrt(prop.ref_pathloss * dist.d_jam_ue ** (-prop.alpha_jam_direct))
    h_jd = amp_jd[:, None] * _cscg(rng, (m, k))

    h_jr = _rician(prop, dist.d_jam_ris, prop.alpha_jam_ris, prop.rician_k3,
                   dist.aoa_jam_ris, rng).reshape(-1)

    return ChannelRealization(h_d=h_d, h_br=h_br, h_ru=h_ru, h_jd=h_jd, h_jr=h_jr)

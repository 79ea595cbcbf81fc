"""Effective channels under a surface configuration, SINR, BER, and power.

The per-element reflection coefficient is exp(j*theta_n); applying the
conjugated reflection matrix to the cascade gives the effective gain

    h[m,k] = sum_n conj(h_br[n]) * exp(-j*theta_n) * h_ru[n,m] + h_d[m,k]

and the jammer analogue with (h_jr, h_jd). Link quality follows the
exponential BER model ber = beta1 * exp(-|beta2| * gamma / (2^r - 1)).
beta2 is quoted as a negative constant (-1.6); the magnitude is used in
the exponent and in the inverted power formula so that BER decreases
with SINR and powers come out positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RisConfig",
    "EffectiveLinkTable",
    "ModulationTable",
    "QosProfile",
    "effective_gains",
    "sinr",
    "ber",
    "min_power",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RisConfig:
    """Phase shifts theta_n, one per reflecting element, in [0, 2*pi).

    Inputs are wrapped modulo 2*pi, so a clipped action hitting exactly
    2*pi maps back to 0 (same reflection coefficient).
    """

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(theta)):
            raise ValueError("phase shifts must be finite")
        object.__setattr__(self, "theta", np.mod(theta, TWO_PI))

    @property
    def num_elements(self) -> int:
        return self.theta.shape[0]

    def reflection(self) -> np.ndarray:
        """Diagonal entries of the reflection matrix, |phi_n| = 1."""
        return np.exp(1j * self.theta)


@dataclass(frozen=True)
class EffectiveLinkTable:
    """Squared-magnitude effective gains plus the interference context."""

    g: np.ndarray            # (M, K), |h[m,k]|^2
    gj: np.ndarray           # (M, K), |h_J[m,k]|^2
    noise_power: float       # W per subchannel
    jam_power: np.ndarray    # (K,), W per subchannel

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        gj = np.asarray(self.gj, dtype=float)
        jp = np.asarray(self.jam_power, dtype=float).reshape(-1)
        if g.shape != gj.shape or g.ndim != 2:
            raise ValueError("g and gj must share shape (M, K)")
        if jp.shape[0] != g.shape[1]:
            raise ValueError("jam_power must have length K")
        for name, arr in (("g", g), ("gj", gj), ("jam_power", jp)):
            if arr.size and (not np.all(np.isfinite(arr)) or np.min(arr) < 0):
                raise ValueError(f"{name} entries must be finite and >= 0")
        if not (self.noise_power > 0 and math.isfinite(self.noise_power)):
            raise ValueError("noise_power must be positive and finite")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "gj", gj)
        object.__setattr__(self, "jam_power", jp)

    @property
    def num_users(self) -> int:
        return self.g.shape[0]

    @property
    def num_subchannels(self) -> int:
        return self.g.shape[1]


@dataclass(frozen=True)
class ModulationTable:
    """Discrete rate ladder; index 0 is the no-transmission mode (r_0 = 0)."""

    rates: tuple = (0.0, 2.0, 4.0, 6.0)   # bits/symbol
    beta1: float = 0.2
    beta2: float = -1.6

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if not rates or rates[0] != 0.0:
            raise ValueError("rates[0] must be 0 (no transmission)")
        if any(b >= a for a, b in zip(rates[1:], rates)):
            raise ValueError("rates must be strictly increasing")
        if self.beta1 <= 0 or self.beta2 == 0:
            raise ValueError("beta1 must be > 0 and beta2 nonzero")
        object.__setattr__(self, "rates", rates)

    @property
    def num_modes(self) -> int:
        """Number of transmitting modes (excludes mode 0)."""
        return len(self.rates) - 1

    @property
    def beta2_mag(self) -> float:
        return abs(self.beta2)

    @property
    def rate_quantum(self) -> float:
        """Smallest gap between adjacent rates."""
        return min(b - a for a, b in zip(self.rates, self.rates[1:]))


@dataclass(frozen=True)
class QosProfile:
    """Per-stream-class BER targets and the class-1/class-2 rate ratio chi."""

    ber_targets: tuple = (1e-6, 1e-2)     # index q-1, q in 1..Q
    chi: float = 1.0
    beta1: float = 0.2

    def __post_init__(self):
        targets = tuple(float(t) for t in self.ber_targets)
        if not targets:
            raise ValueError("at least one stream class required")
        for t in targets:
            if not (0 < t < self.beta1):
                raise ValueError(f"BER target {t} outside (0, beta1={self.beta1})")
        if self.chi <= 0:
            raise ValueError("chi must be > 0")
        object.__setattr__(self, "ber_targets", targets)

    @property
    def num_streams(self) -> int:
        return len(self.ber_targets)


def effective_gains(ch, ris: RisConfig, noise_power: float,
                    jam_power: np.ndarray) -> EffectiveLinkTable:
    """Combine direct and surface-cascaded paths into per-(m,k) power gains.

    With zero elements the cascade vanishes and the table reduces to the
    direct links alone.
    """
    phase = np.exp(-1j * ris.theta)                      # conj(phi_n)
    if ris.num_elements != ch.h_br.shape[0]:
        raise ValueError("phase vector length does not match channel elements")
    casc_sig = (np.conj(ch.h_br) * phase) @ ch.h_ru      # (M,) via (N,)@(N,M)
    casc_jam = (np.conj(ch.h_jr) * phase) @ ch.h_ru
    h = ch.h_d + casc_sig[:, None]                       # (M, K)
    hj = ch.h_jd + casc_jam[:, None]
    return EffectiveLinkTable(g=np.abs(h) ** 2, gj=np.abs(hj) ** 2,
                              noise_power=noise_power, jam_power=jam_power)


def sinr(p, g, gj, jam_power_k, noise):
    """Received signal-to-interference-plus-noise ratio (linear)."""
    return p * g / (jam_power_k * gj + noise)


def ber(gamma, rate, mods: ModulationTable):
    """Bit error rate of a transmitting mode at linear SINR gamma."""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate <= 0):
        raise ValueError("ber is undefined for the no-transmission mode (rate 0)")
    return mods.beta1 * np.exp(-mods.beta2_mag * np.asarray(gamma, dtype=float)
                               / (2.0 ** rate - 1.0))


def min_power(g, gj, jam_power_k, noise, rate, ber_target, mods: ModulationTable):
    """Smallest transmit power meeting ber_target; inverts the BER model.

    Mode 0 (rate 0) costs nothing. A dead link (g = 0) with a positive
    rate is unservable and reported as infinite power.
    """
    g = np.asarray(g, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(ber_target <= 0) or np.any(ber_target >= mods.beta1):
        raise ValueError("ber_target must lie in (0, beta1)")
    denom = np.asarray(jam_power_k * gj + noise, dtype=float)
    factor = (2.0 ** rate - 1.0) * np.log(mods.beta1 / ber_target)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = factor * denom / (mods.beta2_mag * g)
    # rate 0 transmits nothing even on a dead link (0/0 guard)
    p = np.where(rate == 0, 0.0, p)
    return p if p.ndim else float(p)

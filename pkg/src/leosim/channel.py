"""Rician fading, the four-term path-loss stack, SNR coefficients, and
Shannon rates for individual user-satellite-beam links.

Every dB <-> linear conversion in the package goes through
:func:`db_to_linear` / :func:`linear_to_db` so there is exactly one place
for a factor-of-10 bug to live.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .orbital import LinkGeometry


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x_lin: float) -> float:
    if x_lin <= 0.0:
        raise ValueError(f"cannot convert non-positive value {x_lin} to dB")
    return 10.0 * math.log10(x_lin)


# ---------------------------------------------------------------------------
# Fading
# ---------------------------------------------------------------------------

@dataclass
class ChannelRealization:
    """One complex Rician channel draw.  With the unit line-of-sight
    component used here, E[|h|^2] = 1 at every K."""

    h: complex
    k_factor_db: float

    @property
    def power_gain(self) -> float:
        return abs(self.h) ** 2


def draw_channel(rng: np.random.Generator, k_factor_db: float) -> ChannelRealization:
    """Rician draw h = sqrt(K/(K+1)) * h_los + sqrt(1/(K+1)) * h_nlos.

    h_los is the deterministic unit component (1 + 0j); h_nlos is a
    circularly symmetric complex Gaussian of unit variance.  K is the
    linear Rician factor; ``-inf`` dB maps to K = 0 (pure scattering).
    """
    k = db_to_linear(k_factor_db) if math.isfinite(k_factor_db) else (
        0.0 if k_factor_db < 0 else math.inf)
    if math.isinf(k):
        return ChannelRealization(h=1.0 + 0.0j, k_factor_db=k_factor_db)
    re, im = rng.standard_normal(2)
    h_nlos = complex(re, im) / math.sqrt(2.0)
    h = math.sqrt(k / (k + 1.0)) + math.sqrt(1.0 / (k + 1.0)) * h_nlos
    return ChannelRealization(h=h, k_factor_db=k_factor_db)


def draw_channel_gains(
    rng: np.random.Generator, k_factor_db: float, shape: tuple[int, ...]
) -> np.ndarray:
    """Vectorized |h|^2 draws with the same model as :func:`draw_channel`."""
    k = db_to_linear(k_factor_db) if math.isfinite(k_factor_db) else (
        0.0 if k_factor_db < 0 else math.inf)
    if math.isinf(k):
        return np.ones(shape)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    h = math.sqrt(k / (k + 1.0)) + math.sqrt(1.0 / (k + 1.0)) * (re + 1j * im) / math.sqrt(2.0)
    return np.abs(h) ** 2


# ---------------------------------------------------------------------------
# Path loss
# ---------------------------------------------------------------------------

@dataclass
class PathLossBreakdown:
    fs_db: float
    atm_db: float
    iono_db: float
    rain_db: float
    total_db: float


class LossTable:
    """Elevation-interpolated ionospheric/tropospheric loss lookup.

    Rows are (frequency_ghz, elevation_deg, loss_db).  Lookups pick the
    nearest tabulated frequency (ties go to the lower one) and
    interpolate piecewise-linearly in elevation, clamping at the grid
    edges.
    """

    def __init__(self, rows: list[tuple[float, float, float]]):
        by_freq: dict[float, list[tuple[float, float]]] = {}
        for f_ghz, elev, loss in rows:
            by_freq.setdefault(float(f_ghz), []).append((float(elev), float(loss)))
        self._freqs = sorted(by_freq)
        self._grids: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        for f_ghz, pts in by_freq.items():
            pts.sort()
            elevs = np.array([e for e, _ in pts])
            if np.any(np.diff(elevs) <= 0):
                raise ValueError(f"duplicate elevation grid points at {f_ghz} GHz")
            self._grids[f_ghz] = (elevs, np.array([l for _, l in pts]))

    @classmethod
    def zero(cls, f_ghz: float = 20.0) -> "LossTable":
        return cls([(f_ghz, 0.0, 0.0), (f_ghz, 90.0, 0.0)])

    @classmethod
    def from_csv(cls, path: str) -> "LossTable":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            expected = {"frequency_ghz", "elevation_deg", "loss_db"}
            if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
                raise ValueError(
                    f"{path}: expected CSV header frequency_ghz,elevation_deg,loss_db"
                )
            for row in reader:
                rows.append(
                    (float(row["frequency_ghz"]), float(row["elevation_deg"]),
                     float(row["loss_db"]))
                )
        return cls(rows)

    def lookup(self, f_ghz: float, elevation_deg):
        """Loss in dB; ``elevation_deg`` may be a scalar or an array."""
        if not self._freqs:
            raise ValueError("empty loss table")
        nearest = min(self._freqs, key=lambda f: (abs(f - f_ghz), f))
        elevs, losses = self._grids[nearest]
        out = np.interp(elevation_deg, elevs, losses)
        return float(out) if np.ndim(elevation_deg) == 0 else out


def fspl(f_mhz: float, d_km):
    """Free-space path loss in dB: 32.45 + 20 log10(f_MHz) + 20 log10(d_km).

    ``d_km`` may be a scalar or an array of distances.
    """
    if f_mhz <= 0.0 or np.any(np.asarray(d_km) <= 0.0):
        raise ValueError(f"fspl requires positive frequency and distance, got "
                         f"f={f_mhz} MHz, d={d_km} km")
    out = 32.45 + 20.0 * np.log10(f_mhz) + 20.0 * np.log10(d_km)
    return float(out) if np.ndim(d_km) == 0 else out


def atm_loss(a_zenith_db: float, elevation_deg):
    """Atmospheric absorption: zenith attenuation scaled by 1/sin(elevation).

    ``elevation_deg`` may be a scalar or an array.
    """
    if np.any(np.asarray(elevation_deg) <= 0.0):
        raise ValueError(
            f"atmospheric loss is undefined at elevation {elevation_deg} deg; "
            "links below the horizon must be filtered out upstream"
        )
    out = a_zenith_db / np.sin(np.radians(elevation_deg))
    return float(out) if np.ndim(elevation_deg) == 0 else out


def iono_loss(f_ghz: float, elevation_deg, table: LossTable):
    """Ionospheric/tropospheric loss interpolated from the lookup table."""
    return table.lookup(f_ghz, elevation_deg)


def rain_loss(override_db: float | None = None) -> float:
    """Rain attenuation.  Zero in the default temperate-climate model at
    frequencies up to 20 GHz; an override hook passes a fixed value through."""
    return 0.0 if override_db is None else override_db


def total_loss(geom: LinkGeometry, cfg) -> PathLossBreakdown:
    """Sum of the four loss terms for a visible link.

    ``cfg`` is a :class:`~leosim.config.ScenarioConfig` supplying the
    carrier frequency, zenith attenuation, loss table, and rain override.
    """
    if geom.visible is not None and not geom.visible:
        raise ValueError("total_loss called on an invisible link")
    fs = fspl(cfg.f_c_ghz * 1000.0, geom.distance_km)
    atm = atm_loss(cfg.a_zenith_db, geom.elevation_deg)
    iono = iono_loss(cfg.f_c_ghz, geom.elevation_deg, cfg.iono_table)
    rain = rain_loss(cfg.rain_override_db)
    return PathLossBreakdown(
        fs_db=fs, atm_db=atm, iono_db=iono, rain_db=rain,
        total_db=fs + atm + iono + rain,
    )


# ---------------------------------------------------------------------------
# SNR and rate
# ---------------------------------------------------------------------------

@dataclass
class LinkQuality:
    """SNR-per-watt coefficient of one link: SNR = gamma_per_watt * P."""

    gamma_per_watt: float
    bandwidth_hz: float

    def rate_at(self, p_w: float) -> float:
        return rate(self, p_w, self.bandwidth_hz)


def snr_coeff(
    h: ChannelRealization, loss: PathLossBreakdown, n0_w_per_hz: float, w_hz: float
) -> LinkQuality:
    """gamma = |h|^2 / (N0 * W * 10^(L/10))."""
    if n0_w_per_hz <= 0.0 or w_hz <= 0.0:
        raise ValueError("noise density and bandwidth must be positive")
    gamma = h.power_gain / (n0_w_per_hz * w_hz * db_to_linear(loss.total_db))
    return LinkQuality(gamma_per_watt=gamma, bandwidth_hz=w_hz)


def rate(q: LinkQuality, p_w: float, w_hz: float) -> float:
    """Shannon rate W * log2(1 + gamma * P) in bit/s."""
    if p_w < 0.0:
        raise ValueError(f"negative power {p_w}")
    return w_hz * math.log2(1.0 + q.gamma_per_watt * p_w)

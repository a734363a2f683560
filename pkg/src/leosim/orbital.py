"""Orbit and geometry layer: TLE parsing, Keplerian propagation, Walker
constellations, and user-satellite visibility geometry.

The propagator is deliberately simple: two-body motion from TLE mean
elements with an optional secular J2 correction of RAAN and argument of
perigee.  That is accurate enough for minute-scale association studies
and keeps everything testable against closed forms (Kepler's third law,
vis-viva, orbital periodicity).  It is *not* SGP4; B* is parsed but not
used.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------
MU_EARTH_KM3_S2 = 398600.4418      # gravitational parameter [km^3/s^2]
R_EARTH_EQ_KM = 6378.137           # WGS-84 equatorial radius [km]
WGS84_F = 1.0 / 298.257223563      # WGS-84 flattening
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)
OMEGA_EARTH_RAD_S = 7.2921158553e-5  # Earth rotation rate [rad/s]
J2 = 1.08262668e-3
SECONDS_PER_DAY = 86400.0

_UTC = timezone.utc


class TleParseError(ValueError):
    """Raised for malformed two-line element text."""


class PropagationError(RuntimeError):
    """Raised when orbit propagation cannot proceed (e >= 1, divergence)."""


# ---------------------------------------------------------------------------
# TLE parsing
# ---------------------------------------------------------------------------

def tle_checksum(line: str) -> int:
    """Modulo-10 checksum of a TLE line body: digits count face value,
    '-' counts 1, everything else 0."""
    total = 0
    for ch in line[:68]:
        if ch.isdigit():
            total += int(ch)
        elif ch == "-":
            total += 1
    return total % 10


@dataclass
class Tle:
    """Parsed two-line element set (angles in degrees, epoch in UTC)."""

    name: str
    catalog_number: int
    epoch: datetime
    inclination_deg: float
    raan_deg: float
    eccentricity: float
    arg_perigee_deg: float
    mean_anomaly_deg: float
    mean_motion_rev_day: float
    bstar: float = 0.0
    # Raw 69-column lines kept for bit-exact round-tripping of parsed sets.
    line1: str | None = field(default=None, repr=False)
    line2: str | None = field(default=None, repr=False)

    @property
    def period_s(self) -> float:
        return SECONDS_PER_DAY / self.mean_motion_rev_day

    @property
    def semi_major_axis_km(self) -> float:
        """Kepler's third law from the mean motion."""
        return (MU_EARTH_KM3_S2 * (self.period_s / (2.0 * math.pi)) ** 2) ** (1.0 / 3.0)

    @property
    def mean_motion_rad_s(self) -> float:
        return self.mean_motion_rev_day * 2.0 * math.pi / SECONDS_PER_DAY

    def to_lines(self) -> tuple[str, str]:
        """Serialize back to 69-column lines.

        Parsed TLEs return their original lines verbatim; synthetic ones
        are formatted canonically with valid checksums.
        """
        if self.line1 is not None and self.line2 is not None:
            return self.line1, self.line2
        return _format_tle_lines(self)


def _format_tle_lines(tle: Tle) -> tuple[str, str]:
    yy = tle.epoch.year % 100
    jan1 = datetime(tle.epoch.year, 1, 1, tzinfo=_UTC)
    day = (tle.epoch - jan1).total_seconds() / SECONDS_PER_DAY + 1.0
    body1 = (
        f"1 {tle.catalog_number:05d}U 00000A   "
        f"{yy:02d}{day:012.8f}  .00000000  00000-0  00000-0 0  999"
    )
    body1 = f"{body1:<68s}"[:68]
    ecc7 = f"{tle.eccentricity:.7f}"[2:]
    body2 = (
        f"2 {tle.catalog_number:05d} {tle.inclination_deg:8.4f} {tle.raan_deg:8.4f} "
        f"{ecc7} {tle.arg_perigee_deg:8.4f} {tle.mean_anomaly_deg:8.4f} "
        f"{tle.mean_motion_rev_day:11.8f}    1"
    )
    body2 = f"{body2:<68s}"[:68]
    return body1 + str(tle_checksum(body1)), body2 + str(tle_checksum(body2))


def _require_field(line: str, start: int, stop: int, what: str, lineno: int) -> str:
    raw = line[start:stop].strip()
    if not raw:
        raise TleParseError(f"line {lineno}: empty {what} field")
    return raw


def _parse_float(line: str, start: int, stop: int, what: str, lineno: int) -> float:
    raw = _require_field(line, start, stop, what, lineno)
    try:
        return float(raw)
    except ValueError:
        raise TleParseError(f"line {lineno}: unparseable {what} field {raw!r}") from None


def _parse_bstar(line: str, lineno: int) -> float:
    # Columns 54-61, assumed-decimal mantissa with one-digit exponent,
    # e.g. " 36258-4" == 0.36258e-4.
    raw = line[53:61]
    if not raw.strip():
        return 0.0
    try:
        sign = -1.0 if raw[0] == "-" else 1.0
        mantissa = float("0." + raw[1:6].replace(" ", "0"))
        exponent = int(raw[6:8].replace(" ", "0"))
        return sign * mantissa * 10.0 ** exponent
    except ValueError:
        raise TleParseError(f"line {lineno}: unparseable B* field {raw!r}") from None


def _check_line(line: str, expect_first: str, lineno: int) -> None:
    if len(line) != 69:
        raise TleParseError(f"line {lineno}: expected 69 characters, got {len(line)}")
    if not line.startswith(expect_first + " "):
        raise TleParseError(f"line {lineno}: expected a '{expect_first} ' line")
    if not line[68].isdigit():
        raise TleParseError(f"line {lineno}: checksum column is not a digit")
    expected = tle_checksum(line)
    if int(line[68]) != expected:
        raise TleParseError(
            f"line {lineno}: checksum mismatch (computed {expected}, found {line[68]})"
        )


def _parse_epoch(line1: str, lineno: int) -> datetime:
    yy = int(_require_field(line1, 18, 20, "epoch year", lineno))
    day = _parse_float(line1, 20, 32, "epoch day", lineno)
    year = 1900 + yy if yy >= 57 else 2000 + yy
    return datetime(year, 1, 1, tzinfo=_UTC) + timedelta(days=day - 1.0)


def parse_tle(text: str) -> list[Tle]:
    """Parse 2-line or 3-line (name + data lines) element sets.

    Input order is preserved.  Raises :class:`TleParseError` naming the
    offending line for length violations, checksum mismatches, bad
    numeric fields, and dangling lines.
    """
    entries: list[tuple[int, str]] = [
        (i + 1, ln.rstrip("\r\n")) for i, ln in enumerate(text.splitlines())
    ]
    entries = [(n, ln) for n, ln in entries if ln.strip()]

    out: list[Tle] = []
    i = 0
    while i < len(entries):
        lineno, line = entries[i]
        if line.startswith("1 "):
            name = ""
        else:
            name = line.strip()
            i += 1
            if i >= len(entries):
                raise TleParseError(f"line {lineno}: dangling name line {name!r}")
            lineno, line = entries[i]
        _check_line(line, "1", lineno)
        if i + 1 >= len(entries):
            raise TleParseError(f"line {lineno}: element set is missing its second line")
        lineno2, line2 = entries[i + 1]
        _check_line(line2, "2", lineno2)

        catalog = int(_require_field(line, 2, 7, "catalog number", lineno))
        epoch = _parse_epoch(line, lineno)
        bstar = _parse_bstar(line, lineno)

        inclination = _parse_float(line2, 8, 16, "inclination", lineno2) % 360.0
        raan = _parse_float(line2, 17, 25, "RAAN", lineno2) % 360.0
        ecc_raw = _require_field(line2, 26, 33, "eccentricity", lineno2)
        try:
            eccentricity = float("0." + ecc_raw)
        except ValueError:
            raise TleParseError(
                f"line {lineno2}: unparseable eccentricity field {ecc_raw!r}"
            ) from None
        argp = _parse_float(line2, 34, 42, "argument of perigee", lineno2) % 360.0
        mean_anomaly = _parse_float(line2, 43, 51, "mean anomaly", lineno2) % 360.0
        mean_motion = _parse_float(line2, 52, 63, "mean motion", lineno2)

        if not 0.0 <= eccentricity < 1.0:
            raise TleParseError(f"line {lineno2}: eccentricity {eccentricity} out of [0, 1)")
        if mean_motion <= 0.0:
            raise TleParseError(f"line {lineno2}: non-positive mean motion {mean_motion}")

        out.append(
            Tle(
                name=name,
                catalog_number=catalog,
                epoch=epoch,
                inclination_deg=inclination,
                raan_deg=raan,
                eccentricity=eccentricity,
                arg_perigee_deg=argp,
                mean_anomaly_deg=mean_anomaly,
                mean_motion_rev_day=mean_motion,
                bstar=bstar,
                line1=line,
                line2=line2,
            )
        )
        i += 2
    return out


# ---------------------------------------------------------------------------
# Time and frames
# ---------------------------------------------------------------------------

def julian_date(t: datetime) -> float:
    if t.tzinfo is None:
        t = t.replace(tzinfo=_UTC)
    t = t.astimezone(_UTC)
    # Fliegel-Van Flandern day number, then add the time of day.
    y, m = t.year, t.month
    a = (14 - m) // 12
    yy = y + 4800 - a
    mm = m + 12 * a - 3
    jdn = t.day + (153 * mm + 2) // 5 + 365 * yy + yy // 4 - yy // 100 + yy // 400 - 32045
    frac = (t.hour - 12) / 24.0 + t.minute / 1440.0 + (t.second + t.microsecond / 1e6) / 86400.0
    return jdn + frac


def gmst_rad(t: datetime) -> float:
    """Greenwich mean sidereal time, IAU 1982 polynomial."""
    tu = (julian_date(t) - 2451545.0) / 36525.0
    gmst_s = (
        67310.54841
        + (876600.0 * 3600.0 + 8640184.812866) * tu
        + 0.093104 * tu**2
        - 6.2e-6 * tu**3
    )
    return (gmst_s % SECONDS_PER_DAY) / SECONDS_PER_DAY * 2.0 * math.pi


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def eci_to_ecef(r_eci: np.ndarray, v_eci: np.ndarray, t: datetime) -> tuple[np.ndarray, np.ndarray]:
    theta = gmst_rad(t)
    rot = _rot_z(theta)
    r_ecef = rot @ r_eci
    omega = np.array([0.0, 0.0, OMEGA_EARTH_RAD_S])
    v_ecef = rot @ v_eci - np.cross(omega, r_ecef)
    return r_ecef, v_ecef


def geodetic_to_ecef(lat_deg: float, lon_deg: float, alt_m: float) -> np.ndarray:
    """WGS-84 geodetic coordinates to ECEF position [km]."""
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    alt_km = alt_m / 1000.0
    n = R_EARTH_EQ_KM / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
    x = (n + alt_km) * math.cos(lat) * math.cos(lon)
    y = (n + alt_km) * math.cos(lat) * math.sin(lon)
    z = (n * (1.0 - WGS84_E2) + alt_km) * math.sin(lat)
    return np.array([x, y, z])


def ecef_to_geodetic(pos_km: np.ndarray) -> tuple[float, float, float]:
    """ECEF position [km] to WGS-84 (lat deg, lon deg, alt m), iterative."""
    x, y, z = float(pos_km[0]), float(pos_km[1]), float(pos_km[2])
    lon = math.atan2(y, x)
    p = math.hypot(x, y)
    lat = math.atan2(z, p * (1.0 - WGS84_E2))
    for _ in range(12):
        n = R_EARTH_EQ_KM / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
        alt = p / math.cos(lat) - n if abs(math.cos(lat)) > 1e-12 else abs(z) - n * (1 - WGS84_E2)
        lat = math.atan2(z, p * (1.0 - WGS84_E2 * n / (n + alt)))
    n = R_EARTH_EQ_KM / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
    alt = p / math.cos(lat) - n if abs(math.cos(lat)) > 1e-12 else abs(z) - n * (1 - WGS84_E2)
    lon_deg = math.degrees(lon)
    if lon_deg >= 180.0:
        lon_deg -= 360.0
    elif lon_deg < -180.0:
        lon_deg += 360.0
    return math.degrees(lat), lon_deg, alt * 1000.0


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class SatelliteState:
    """Propagated satellite position/velocity in ECEF at a given time."""

    sat_id: int
    time: datetime
    position_ecef_km: np.ndarray
    velocity_ecef_km_s: np.ndarray


@dataclass
class GroundUser:
    """Fixed ground terminal with WGS-84 geodetic and derived ECEF position."""

    user_id: int
    latitude_deg: float
    longitude_deg: float
    altitude_m: float
    position_ecef_km: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError(f"latitude {self.latitude_deg} out of [-90, 90]")
        lon = self.longitude_deg
        lon = (lon + 180.0) % 360.0 - 180.0
        self.longitude_deg = lon
        if self.position_ecef_km is None:
            self.position_ecef_km = geodetic_to_ecef(
                self.latitude_deg, self.longitude_deg, self.altitude_m
            )


@dataclass
class LinkGeometry:
    """Per (user, satellite) slant range and elevation; visibility is set
    by :func:`visibility` against the configured threshold."""

    distance_km: float
    elevation_deg: float
    visible: bool | None = None


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

def _solve_kepler(mean_anomaly: float, ecc: float, max_iter: int = 50) -> float:
    """Newton iteration for the eccentric anomaly; raises on divergence."""
    m = math.fmod(mean_anomaly, 2.0 * math.pi)
    e_anom = m if ecc < 0.8 else math.pi
    for _ in range(max_iter):
        f = e_anom - ecc * math.sin(e_anom) - m
        e_anom -= f / (1.0 - ecc * math.cos(e_anom))
        if abs(f) < 1e-13:
            return e_anom
    raise PropagationError(
        f"Kepler equation did not converge after {max_iter} Newton iterations "
        f"(M={mean_anomaly}, e={ecc})"
    )


def propagate_eci(tle: Tle, t: datetime, j2: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Two-body propagation of TLE mean elements to ECI position/velocity [km, km/s].

    With ``j2=True`` the RAAN and argument of perigee drift at their
    secular J2 rates; the in-plane motion stays Keplerian.
    """
    if tle.eccentricity >= 1.0:
        raise PropagationError(f"hyperbolic or parabolic elements (e={tle.eccentricity})")
    dt = (t - tle.epoch).total_seconds()
    if abs(dt) > 30 * SECONDS_PER_DAY:
        warnings.warn(
            f"propagating {dt / SECONDS_PER_DAY:.1f} days from the TLE epoch; "
            "mean-element accuracy degrades well before this",
            stacklevel=2,
        )

    a = tle.semi_major_axis_km
    ecc = tle.eccentricity
    inc = math.radians(tle.inclination_deg)
    n = tle.mean_motion_rad_s

    raan = math.radians(tle.raan_deg)
    argp = math.radians(tle.arg_perigee_deg)
    if j2:
        p_semi = a * (1.0 - ecc**2)
        factor = 1.5 * n * J2 * (R_EARTH_EQ_KM / p_semi) ** 2
        raan += -factor * math.cos(inc) * dt
        argp += factor * (2.0 - 2.5 * math.sin(inc) ** 2) * dt

    m_anom = math.radians(tle.mean_anomaly_deg) + n * dt
    e_anom = _solve_kepler(m_anom, ecc)

    cos_e, sin_e = math.cos(e_anom), math.sin(e_anom)
    r_mag = a * (1.0 - ecc * cos_e)
    # Perifocal position/velocity.
    x_p = a * (cos_e - ecc)
    y_p = a * math.sqrt(1.0 - ecc**2) * sin_e
    vx_p = -math.sqrt(MU_EARTH_KM3_S2 * a) / r_mag * sin_e
    vy_p = math.sqrt(MU_EARTH_KM3_S2 * a * (1.0 - ecc**2)) / r_mag * cos_e

    cr, sr = math.cos(raan), math.sin(raan)
    ci, si = math.cos(inc), math.sin(inc)
    cw, sw = math.cos(argp), math.sin(argp)
    # R3(-raan) R1(-inc) R3(-argp), written out.
    rot = np.array(
        [
            [cr * cw - sr * sw * ci, -cr * sw - sr * cw * ci, sr * si],
            [sr * cw + cr * sw * ci, -sr * sw + cr * cw * ci, -cr * si],
            [sw * si, cw * si, ci],
        ]
    )
    r_eci = rot @ np.array([x_p, y_p, 0.0])
    v_eci = rot @ np.array([vx_p, vy_p, 0.0])
    return r_eci, v_eci


def propagate(tle: Tle, t: datetime, j2: bool = False) -> SatelliteState:
    """Propagate to ``t`` and rotate into ECEF via GMST."""
    r_eci, v_eci = propagate_eci(tle, t, j2=j2)
    r_ecef, v_ecef = eci_to_ecef(r_eci, v_eci, t)
    return SatelliteState(
        sat_id=tle.catalog_number,
        time=t,
        position_ecef_km=r_ecef,
        velocity_ecef_km_s=v_ecef,
    )


# ---------------------------------------------------------------------------
# Synthetic Walker-delta constellations
# ---------------------------------------------------------------------------

def walker_tles(
    total_sats: int,
    planes: int,
    inclination_deg: float,
    altitude_km: float,
    phasing: int,
    epoch: datetime,
) -> list[Tle]:
    """Circular Walker-delta constellation as synthetic TLE elements.

    RAAN is spread evenly over 360 degrees; satellites within a plane are
    evenly spaced in mean anomaly, with the standard inter-plane phase
    offset ``phasing * 360 / total_sats`` degrees.
    """
    if total_sats % planes != 0:
        raise ValueError(f"total_sats={total_sats} not divisible by planes={planes}")
    per_plane = total_sats // planes
    a = R_EARTH_EQ_KM + altitude_km
    n_rad_s = math.sqrt(MU_EARTH_KM3_S2 / a**3)
    mean_motion = n_rad_s * SECONDS_PER_DAY / (2.0 * math.pi)

    tles = []
    idx = 0
    for p in range(planes):
        raan = 360.0 * p / planes
        for k in range(per_plane):
            anomaly = (360.0 * k / per_plane + 360.0 * phasing * p / total_sats) % 360.0
            tles.append(
                Tle(
                    name=f"WALKER-{idx:03d}",
                    catalog_number=90000 + idx,
                    epoch=epoch,
                    inclination_deg=inclination_deg % 360.0,
                    raan_deg=raan,
                    eccentricity=0.0,
                    arg_perigee_deg=0.0,
                    mean_anomaly_deg=anomaly,
                    mean_motion_rev_day=mean_motion,
                )
            )
            idx += 1
    return tles


def synth_walker(
    total_sats: int,
    planes: int,
    inclination_deg: float,
    altitude_km: float,
    phasing: int,
    t: datetime,
) -> list[SatelliteState]:
    """Walker-delta satellite states at time ``t`` (epoch == ``t``)."""
    return [propagate(tle, t) for tle in walker_tles(
        total_sats, planes, inclination_deg, altitude_km, phasing, epoch=t)]


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def elevation_and_range(user: GroundUser, sat: SatelliteState) -> LinkGeometry:
    """Slant range and elevation of the satellite above the user's
    topocentric horizon (SEZ frame at the user's geodetic position)."""
    los = sat.position_ecef_km - user.position_ecef_km
    dist = float(np.linalg.norm(los))
    if dist < 1e-9:
        raise ValueError("coincident user and satellite positions")
    lat = math.radians(user.latitude_deg)
    lon = math.radians(user.longitude_deg)
    up = np.array(
        [math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]
    )
    sin_el = float(np.dot(up, los)) / dist
    sin_el = min(1.0, max(-1.0, sin_el))
    return LinkGeometry(distance_km=dist, elevation_deg=math.degrees(math.asin(sin_el)))


def visibility(geom: LinkGeometry, threshold_deg: float) -> bool:
    """A link can be established iff the elevation reaches the threshold
    (closed boundary: equality counts as visible)."""
    return geom.elevation_deg >= threshold_deg

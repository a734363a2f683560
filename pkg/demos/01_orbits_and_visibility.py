"""Parse a TLE, propagate it, and watch a ground user's visibility window.

Run:  python demos/01_orbits_and_visibility.py
"""

from datetime import timedelta

import numpy as np

from leosim.orbital import (
    GroundUser,
    elevation_and_range,
    parse_tle,
    propagate,
    propagate_eci,
    synth_walker,
    visibility,
)

ISS_TLE = """ISS (ZARYA)
1 25544U 98067A   08264.51782528 -.00002182  00000-0 -11606-4 0  2927
2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.72125391563537
"""


def main():
    print("=" * 70)
    print("TLE parsing and two-body propagation")
    print("=" * 70)

    tle = parse_tle(ISS_TLE)[0]
    print(f"name            : {tle.name}")
    print(f"catalog number  : {tle.catalog_number}")
    print(f"epoch           : {tle.epoch.isoformat()}")
    print(f"inclination     : {tle.inclination_deg:.4f} deg")
    print(f"eccentricity    : {tle.eccentricity:.7f}")
    print(f"mean motion     : {tle.mean_motion_rev_day:.8f} rev/day")
    print(f"semi-major axis : {tle.semi_major_axis_km:.1f} km "
          f"(altitude ~ {tle.semi_major_axis_km - 6378.137:.0f} km)")

    r, v = propagate_eci(tle, tle.epoch)
    print(f"\nECI state at epoch: |r| = {np.linalg.norm(r):.1f} km, "
          f"|v| = {np.linalg.norm(v):.3f} km/s")

    # A ground user under the orbit: sweep elevation over half an orbit.
    user = GroundUser(user_id=0, latitude_deg=46.17, longitude_deg=1.87,
                      altitude_m=0.0)
    print(f"\nVisibility sweep from ({user.latitude_deg}, {user.longitude_deg}), "
          "threshold 20 deg:")
    print(f"{'minute':>7} {'distance km':>12} {'elevation deg':>14} {'visible':>8}")
    for minute in range(0, 95, 5):
        state = propagate(tle, tle.epoch + timedelta(minutes=minute))
        geom = elevation_and_range(user, state)
        vis = visibility(geom, 20.0)
        print(f"{minute:>7} {geom.distance_km:>12.1f} {geom.elevation_deg:>14.2f} "
              f"{str(vis):>8}")

    print("\n" + "=" * 70)
    print("Synthetic Walker-delta shell")
    print("=" * 70)
    states = synth_walker(total_sats=12, planes=3, inclination_deg=53.0,
                          altitude_km=550.0, phasing=1, t=tle.epoch)
    radii = [np.linalg.norm(s.position_ecef_km) for s in states]
    print(f"12 satellites / 3 planes at 550 km: radius spread "
          f"{max(radii) - min(radii):.2e} km (all identical by construction)")


if __name__ == "__main__":
    main()

"""Walk the link budget: Rician fading, the path-loss stack, SNR per
watt, and achievable rate at the reference radio parameters (20 GHz,
200 MHz, N0 = 1e-20 W/Hz, 1 kW satellites).

Run:  python demos/02_link_budget.py
"""

import numpy as np

from leosim.channel import (
    LossTable,
    PathLossBreakdown,
    atm_loss,
    draw_channel,
    draw_channel_gains,
    fspl,
    iono_loss,
    rain_loss,
    snr_coeff,
)

F_C_GHZ = 20.0
BANDWIDTH_HZ = 200e6
N0 = 1e-20
P_MAX_W = 1000.0
A_ZENITH_DB = 0.5


def slant_range_km(elevation_deg: float, altitude_km: float = 550.0) -> float:
    re = 6378.137
    r = (re + altitude_km) / re
    e = np.radians(elevation_deg)
    return re * (np.sqrt(r**2 - np.cos(e) ** 2) - np.sin(e))


def main():
    print("=" * 70)
    print("Rician channel draws (K = 10 dB)")
    print("=" * 70)
    rng = np.random.default_rng(7)
    for _ in range(3):
        h = draw_channel(rng, 10.0)
        print(f"  h = {h.h:.4f}   |h|^2 = {h.power_gain:.4f}")
    gains = draw_channel_gains(rng, 10.0, (200_000,))
    print(f"  mean |h|^2 over 2e5 draws: {gains.mean():.4f} (unit power model)")

    print("\n" + "=" * 70)
    print("Path-loss stack and rate vs elevation (550 km shell, 1 kW)")
    print("=" * 70)
    table = LossTable.zero(F_C_GHZ)
    print(f"{'elev deg':>9} {'slant km':>9} {'fspl dB':>9} {'atm dB':>7} "
          f"{'total dB':>9} {'gamma*P':>10} {'rate Mbps':>10}")
    for elev in (20, 30, 45, 60, 90):
        d = slant_range_km(elev)
        fs = fspl(F_C_GHZ * 1000.0, d)
        at = atm_loss(A_ZENITH_DB, elev)
        io = iono_loss(F_C_GHZ, elev, table)
        ra = rain_loss()
        loss = PathLossBreakdown(fs, at, io, ra, fs + at + io + ra)
        h = draw_channel(rng, 10.0)
        q = snr_coeff(h, loss, N0, BANDWIDTH_HZ)
        snr = q.gamma_per_watt * P_MAX_W
        print(f"{elev:>9} {d:>9.0f} {fs:>9.2f} {at:>7.2f} {loss.total_db:>9.2f} "
              f"{snr:>10.2e} {q.rate_at(P_MAX_W) / 1e6:>10.3f}")

    print("\nRate is concave in power: doubling power far less than doubles rate")
    d = slant_range_km(45.0)
    fs = fspl(F_C_GHZ * 1000.0, d)
    loss = PathLossBreakdown(fs, 0.7, 0.0, 0.0, fs + 0.7)
    q = snr_coeff(draw_channel(rng, 200.0), loss, N0, BANDWIDTH_HZ)
    for p in (125.0, 250.0, 500.0, 1000.0):
        print(f"  P = {p:6.0f} W -> {q.rate_at(p) / 1e6:7.3f} Mbps")


if __name__ == "__main__":
    main()

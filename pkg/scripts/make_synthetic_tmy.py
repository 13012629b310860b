"""Generate the synthetic Madrid-like TMY file shipped in ``data/``.

No real PVGIS export is redistributed. The series is a smooth climatology
(annual and diurnal harmonics) plus a seeded AR(1) daily anomaly, and three
hours used by the example configs are pinned through a smooth one-day bump
so their values are explicit rather than accidental:

    08-10 15:00 UTC  (summer constant-ambient case)
    07-19 16:00 UTC  (summer afternoon scenario)
    01-05 10:00 UTC  (winter morning scenario)

Usage: python scripts/make_synthetic_tmy.py [OUT]
"""

from __future__ import annotations

import sys
from datetime import datetime, timedelta

import numpy as np

from tclflex.weather import REFERENCE_YEAR, AmbientSeries, write_tmy_csv

SEED = 20230810
ANNUAL_MEAN = 15.0
ANNUAL_AMP = 10.5  # Jan ~5 degC, Jul ~25.5 degC daily means
WARMEST_DOY = 205
DIURNAL_AMP_SUMMER = 7.5
DIURNAL_AMP_WINTER = 4.5
PEAK_HOUR_UTC = 15.0

PINNED = {
    (8, 10, 15): 37.5,
    (7, 19, 16): 40.0,
    (1, 5, 10): 5.0,
}


def climatology(t: np.ndarray) -> np.ndarray:
    doy = t[:, 0]
    hour = t[:, 1]
    season = np.cos(2 * np.pi * (doy - WARMEST_DOY) / 365.0)
    daily_mean = ANNUAL_MEAN + ANNUAL_AMP * season
    amp = 0.5 * (DIURNAL_AMP_SUMMER + DIURNAL_AMP_WINTER) + \
        0.5 * (DIURNAL_AMP_SUMMER - DIURNAL_AMP_WINTER) * season
    return daily_mean + amp * np.cos(2 * np.pi * (hour - PEAK_HOUR_UTC) / 24.0)


def build() -> AmbientSeries:
    start = datetime(REFERENCE_YEAR, 1, 1)
    times = [start + timedelta(hours=k) for k in range(8760)]
    t = np.array([[ts.timetuple().tm_yday, ts.hour] for ts in times], dtype=float)
    temps = climatology(t)

    rng = np.random.default_rng(SEED)
    daily = np.zeros(365)
    for d in range(1, 365):
        daily[d] = 0.7 * daily[d - 1] + rng.normal(0.0, 1.5)
    hourly = np.interp(np.arange(8760) / 24.0, np.arange(365) + 0.5, daily)
    temps = temps + hourly + rng.normal(0.0, 0.3, size=8760)

    for (month, day, hour), target in PINNED.items():
        k = next(i for i, ts in enumerate(times) if (ts.month, ts.day, ts.hour) == (month, day, hour))
        bump = np.exp(-0.5 * ((np.arange(8760) - k) / 10.0) ** 2)
        temps = temps + (target - temps[k]) * bump
    temps = np.round(temps, 2)
    return AmbientSeries(np.array(times, dtype="datetime64[m]"), temps, typical=True,
                         source="synthetic")


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    out = argv[0] if argv else "data/madrid_tmy_synthetic.csv"
    write_tmy_csv(out, build(), latitude=40.417, longitude=-3.704,
                  note="SYNTHETIC typical-year stand-in generated by "
                       "scripts/make_synthetic_tmy.py; not PVGIS data")
    print(out)


if __name__ == "__main__":
    main()

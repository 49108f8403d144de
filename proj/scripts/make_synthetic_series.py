#!/usr/bin/env python3
"""Generate the synthetic hourly input series committed under scenarios/.

The shapes are deliberately simple (seasonal + diurnal sinusoids with a
seeded jitter) but exercise everything the representative-day builder
cares about: seasonal spread, daylight-only solar, noisy wind, a spring
inflow bump, and an evening demand peak. Deterministic: rerunning the
script reproduces the committed files byte for byte.
"""

import argparse
import math
import random
from pathlib import Path

HOURS = 8760


def write_series(path: Path, name: str, values):
    with open(path, "w") as f:
        f.write(f"{name}\n")
        for v in values:
            f.write(f"{v:.6g}\n")


def demand(base: float, peak_lift: float, rng: random.Random):
    out = []
    for t in range(HOURS):
        day = t // 24
        hour = t % 24
        seasonal = 1.0 + 0.10 * math.cos(2 * math.pi * (day - 20) / 365.0)
        diurnal = 1.0 - 0.12 * math.cos(2 * math.pi * (hour - 1) / 24.0)
        evening = peak_lift if 18 <= hour <= 21 else 0.0
        jitter = 1.0 + 0.02 * (rng.random() - 0.5)
        out.append(base * seasonal * diurnal * (1.0 + evening) * jitter)
    return out


def cf_solar(rng: random.Random):
    out = []
    for t in range(HOURS):
        day = t // 24
        hour = t % 24
        seasonal = 0.75 + 0.25 * math.cos(2 * math.pi * (day - 172) / 365.0)
        if 6 <= hour <= 18:
            bell = math.sin(math.pi * (hour - 6) / 12.0) ** 1.4
        else:
            bell = 0.0
        cloud = 1.0 - 0.25 * rng.random()
        out.append(min(1.0, 0.85 * seasonal * bell * cloud))
    return out


def cf_wind(mean: float, spread: float, rng: random.Random):
    out = []
    level = mean
    for t in range(HOURS):
        day = t // 24
        seasonal = 1.0 + 0.20 * math.cos(2 * math.pi * (day - 30) / 365.0)
        # slow AR(1) walk keeps multi-hour fronts in the averaged days
        level += 0.15 * (mean - level) + spread * (rng.random() - 0.5)
        level = min(0.95, max(0.02, level))
        out.append(min(1.0, level * seasonal))
    return out


def inflow(base_mwh: float, rng: random.Random):
    out = []
    for t in range(HOURS):
        day = t // 24
        melt = 1.0 + 0.9 * math.exp(-((day - 130) ** 2) / (2 * 40.0**2))
        jitter = 1.0 + 0.10 * (rng.random() - 0.5)
        out.append(base_mwh * melt * jitter)
    return out


PROFILES = {
    # tight two-technology system: ~240 MW thermal fleet vs ~235 MW peaks
    "toy": dict(demand_base=185.0, peak_lift=0.14, wind=False, water=False),
    # desk-scale eight-technology system, ~30 GW mean demand
    "base": dict(demand_base=30000.0, peak_lift=0.12, wind=True, water=True),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("profile", choices=sorted(PROFILES))
    ap.add_argument("out_dir", type=Path)
    args = ap.parse_args()
    p = PROFILES[args.profile]
    args.out_dir.mkdir(parents=True, exist_ok=True)

    rng = random.Random(20250101)
    write_series(args.out_dir / "demand.csv", "demand_mwh",
                 demand(p["demand_base"], p["peak_lift"], rng))
    write_series(args.out_dir / "cf_solar.csv", "cf", cf_solar(rng))
    if p["wind"]:
        write_series(args.out_dir / "cf_onshore.csv", "cf",
                     cf_wind(0.32, 0.10, rng))
        write_series(args.out_dir / "cf_offshore.csv", "cf",
                     cf_wind(0.45, 0.08, rng))
    if p["water"]:
        write_series(args.out_dir / "inflow.csv", "inflow_mwh",
                     inflow(900.0, rng))


if __name__ == "__main__":
    main()

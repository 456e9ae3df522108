"""Regenerates the bundled profile CSVs (five-minute steps over one day)."""

import math
from pathlib import Path

STEPS = 288
DT_H = 5.0 / 60.0
HERE = Path(__file__).resolve().parent


def write(name, fn):
    with open(HERE / name, "w") as f:
        f.write("step,value\n")
        for k in range(STEPS):
            f.write(f"{k},{fn(k * DT_H):.6f}\n")


def pv_shape(h):
    return max(0.0, math.sin(math.pi * (h - 6.0) / 12.0)) if 6.0 <= h <= 18.0 else 0.0


def ambient(mean, swing):
    return lambda h: mean + swing * math.sin(2.0 * math.pi * (h - 9.0) / 24.0)


def load_shape(h):
    morning = 0.25 * math.exp(-(((h - 8.0) / 2.0) ** 2))
    afternoon = 0.45 * math.exp(-(((h - 15.0) / 3.5) ** 2))
    return 0.4 + morning + afternoon


def afternoon_peak(h):
    return 0.5 + 0.5 * math.exp(-(((h - 14.5) / 1.5) ** 2))


if __name__ == "__main__":
    write("pv_shape.csv", pv_shape)
    write("ambient_hot.csv", ambient(27.0, 6.0))
    write("ambient_mild.csv", ambient(24.0, 5.0))
    peak = max(load_shape(k * DT_H) for k in range(STEPS))
    write("load_shape.csv", lambda h: load_shape(h) / peak)
    write("afternoon_peak.csv", afternoon_peak)

#!/usr/bin/env python3
"""Straight-line evaluation of the grading pipeline, used to freeze the
golden vector in tests/unit/test_cdl.cpp.

Stage order: gain, clamp, adaptive lift, clamp, gamma (x^(1/g), 0^p = 0),
contrast about pivot, saturation (Rec.709 luma lerp), exponential shoulder
above tau, final clamp.
"""
import math
import random

W = (0.2126, 0.7152, 0.0722)

def clamp01(v):
    return min(1.0, max(0.0, v))

def shoulder(x, tau):
    if x <= tau:
        return x
    return tau + (1.0 - tau) * (1.0 - math.exp(-(x - tau) / (1.0 - tau)))

def pipeline(rgb, lift, gamma, gain, sat, con, piv, tau=0.8, rolloff=True):
    v = [clamp01(rgb[i] * gain[i]) for i in range(3)]
    v = [clamp01(v[i] + lift[i] * (1.0 - v[i])) for i in range(3)]
    v = [0.0 if v[i] == 0.0 else v[i] ** (1.0 / gamma[i]) for i in range(3)]
    v = [(v[i] - piv) * con + piv for i in range(3)]
    luma = W[0] * v[0] + W[1] * v[1] + W[2] * v[2]
    v = [luma + sat * (v[i] - luma) for i in range(3)]
    if rolloff:
        v = [shoulder(x, tau) for x in v]
    return [clamp01(x) for x in v]

if __name__ == "__main__":
    print("shoulder(1.0, 0.8) = %.12f" % shoulder(1.0, 0.8))
    rng = random.Random(20240611)
    r = lambda lo, hi: round(rng.uniform(lo, hi), 4)
    for n in range(20):
        rgb = [r(0, 1) for _ in range(3)]
        lift = [r(-0.2, 0.2) for _ in range(3)]
        gamma = [r(0.5, 2.0) for _ in range(3)]
        gain = [r(0.5, 1.8) for _ in range(3)]
        sat, con, piv = r(0.0, 2.0), r(0.5, 2.0), r(0.2, 0.7)
        roll = n % 4 != 3
        out = pipeline(rgb, lift, gamma, gain, sat, con, piv, rolloff=roll)
        fmt = lambda v: "{" + ", ".join("%.4f" % x for x in v) + "}"
        print("    {%s, %s, %s, %s, %.4f, %.4f, %.4f, %s, {%s}},"
              % (fmt(rgb), fmt(lift), fmt(gamma), fmt(gain), sat, con, piv,
                 "true" if roll else "false", ", ".join("%.12f" % x for x in out)))

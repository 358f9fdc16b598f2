#!/usr/bin/env python3
"""Independent reference values for the color-science tests.

Straight transcriptions of the vendor white papers and the CAT02 definition,
written without reference to the C++ sources. Values printed here are frozen
into tests/unit/test_color_science.cpp.
"""
import math
import numpy as np

# --- Sony S-Log3 (Sony "Technical Summary for S-Gamut3.Cine/S-Log3") ---
def slog3_encode(x):
    if x >= 0.01125000:
        return (420.0 + math.log10((x + 0.01) / (0.18 + 0.01)) * 261.5) / 1023.0
    return (x * (171.2102946929 - 95.0) / 0.01125000 + 95.0) / 1023.0

def slog3_decode(y):
    if y >= 171.2102946929 / 1023.0:
        return (10.0 ** ((y * 1023.0 - 420.0) / 261.5)) * (0.18 + 0.01) - 0.01
    return (y * 1023.0 - 95.0) * 0.01125000 / (171.2102946929 - 95.0)

# --- RED Log3G10 (RED "White Paper on REDWideGamutRGB and Log3G10", v2) ---
def log3g10_decode(y):
    a, b, c, g = 0.224282, 155.975327, 0.01, 15.1927
    if y < 0.0:
        return y / g - c
    return (10.0 ** (y / a) - 1.0) / b - c

# --- ARRI LogC3, EI 800 (ARRI "ALEXA Log C Curve - Usage in VFX") ---
def logc3_decode(t):
    cut, a, b, c, d, e, f = 0.010591, 5.555556, 0.052272, 0.247190, 0.385537, 5.367655, 0.092809
    if t > e * cut + f:
        return (10.0 ** ((t - d) / c) - b) / a
    return (t - f) / e

# --- Panasonic V-Log (Panasonic "V-Log/V-Gamut Reference Manual") ---
def vlog_decode(y):
    b, c, d = 0.00873, 0.241514, 0.598206
    if y < 0.181:
        return (y - 0.125) / 5.6
    return 10.0 ** ((y - d) / c) - b

def xy_to_XYZ(x, y):
    return np.array([x / y, 1.0, (1.0 - x - y) / y])

def rgb_to_xyz(prim, white):
    P = np.array([xy_to_XYZ(*p) for p in prim]).T
    S = np.linalg.solve(P, xy_to_XYZ(*white))
    return P * S

CAT02 = np.array([[0.7328, 0.4296, -0.1624],
                  [-0.7036, 1.6975, 0.0061],
                  [0.0030, 0.0136, 0.9834]])

def cat02(xyz, src, dst):
    ls = CAT02 @ xy_to_XYZ(*src)
    ld = CAT02 @ xy_to_XYZ(*dst)
    M = np.linalg.inv(CAT02) @ np.diag(ld / ls) @ CAT02
    return M @ np.asarray(xyz)

def oetf709(l):
    return 1.099 * l ** 0.45 - 0.099 if l >= 0.018 else 4.5 * l

D65 = (0.3127, 0.3290)
D50 = (0.3457, 0.3585)
D60 = (0.32168, 0.33767)
REC709 = [(0.64, 0.33), (0.30, 0.60), (0.15, 0.06)]
SGAMUT3CINE = [(0.766, 0.275), (0.225, 0.800), (0.089, -0.087)]
AP0 = [(0.7347, 0.2653), (0.0, 1.0), (0.0001, -0.0770)]

def cst(rgb, prim, white):
    xyz = rgb_to_xyz(prim, white) @ np.asarray(rgb)
    xyz = cat02(xyz, white, D65)
    lin = np.linalg.inv(rgb_to_xyz(REC709, D65)) @ xyz
    return [min(1.0, max(0.0, oetf709(max(0.0, v)))) for v in lin]

if __name__ == "__main__":
    print("slog3 code(0.18) = %.12f" % slog3_encode(0.18))
    print("slog3 decode(code(0.18)) = %.12f" % slog3_decode(slog3_encode(0.18)))
    print("slog3 decode(0) = %.12f" % slog3_decode(0.0))
    print("log3g10 decode(0) = %.12f" % log3g10_decode(0.0))
    print("logc3 decode(0) = %.12f" % logc3_decode(0.0))
    print("vlog decode(0) = %.12f" % vlog_decode(0.0))
    print("slog3 decode(1) = %.9f  log3g10 decode(1) = %.9f  logc3 decode(1) = %.9f  vlog decode(1) = %.9f"
          % (slog3_decode(1), log3g10_decode(1), logc3_decode(1), vlog_decode(1)))
    gray = 0.18 * xy_to_XYZ(*D50)
    print("cat02 D50->D65 of", gray, "=", ["%.10f" % v for v in cat02(gray, D50, D65)])
    s = [0.2, 0.18, 0.1]
    print("cat02 D50->D65 of", s, "=", ["%.10f" % v for v in cat02(s, D50, D65)])
    red = [0.6, 0.05, 0.02]
    print("cst sgamut3cine", red, "=", ["%.10f" % v for v in cst(red, SGAMUT3CINE, D65)])
    print("cst ap0", red, "=", ["%.10f" % v for v in cst(red, AP0, D60)])
    print("cst ap0 white =", ["%.10f" % v for v in cst([1, 1, 1], AP0, D60)])
    for s in ([0.30, 0.12, 0.08], [0.25, 0.15, 0.10]):
        print("cst sgamut3cine", s, "=", ["%.10f" % v for v in cst(s, SGAMUT3CINE, D65)])
        print("cst ap0", s, "=", ["%.10f" % v for v in cst(s, AP0, D60)])

#!/usr/bin/env python3
"""Independent reference values for the C++ test suite.

Every number here is recomputed from first principles with numpy (no code
shared with the C++ library) and written to tests/support/goldens.hpp.

    python3 tools/oracles/compute_goldens.py > tests/support/goldens.hpp
"""
import math

import numpy as np

MASK64 = (1 << 64) - 1


def mix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def uniform_at(seed, k):
    bits = mix64(seed ^ mix64(k))
    return ((bits >> 11) + 0.5) * 2.0 ** -53


def normal_at(seed, i):
    u1, u2 = uniform_at(seed, 2 * i), uniform_at(seed, 2 * i + 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def alpha_bar(T, b0, b1, kind):
    frac = np.arange(T) / (T - 1) if T > 1 else np.zeros(1)
    if kind == "linear":
        beta = b0 + (b1 - b0) * frac
    else:
        beta = (math.sqrt(b0) + (math.sqrt(b1) - math.sqrt(b0)) * frac) ** 2
    out, run = [], 1.0
    for b in beta:
        run *= 1.0 - b
        out.append(run)
    return out


def gauss_kernel(sigma):
    r = math.ceil(3 * sigma)
    k = np.array([math.exp(-(i * i) / (2 * sigma * sigma)) for i in range(-r, r + 1)])
    return k / k.sum()


def lowpass_reflect(img, sigma):
    k = gauss_kernel(sigma)
    r = len(k) // 2
    p = np.pad(img, r, mode="reflect")
    rows = np.array([[np.dot(k, p[y, x:x + 2 * r + 1]) for x in range(img.shape[1])] for y in range(p.shape[0])])
    return np.array([[np.dot(k, rows[y:y + 2 * r + 1, x]) for x in range(img.shape[1])] for y in range(img.shape[0])])


def dilated_conv_bruteforce(x, k, d):
    H, W = x.shape
    r = k.shape[0] // 2
    out = np.zeros_like(x)
    for o in range(H):
        for p in range(W):
            s = 0.0
            for i in range(k.shape[0]):
                for j in range(k.shape[1]):
                    yy, xx = o + d * (i - r), p + d * (j - r)
                    if 0 <= yy < H and 0 <= xx < W:
                        s += k[i, j] * x[yy, xx]
            out[o, p] = s
    return out


def softmax(v):
    e = np.exp(v - v.max())
    return e / e.sum()


def emit_array(name, vals):
    body = ", ".join(repr(float(v)) for v in np.ravel(vals))
    print(f"inline constexpr double {name}[] = {{{body}}};")


def emit(name, v):
    print(f"inline constexpr double {name} = {float(v)!r};")


def main():
    print("// Generated by tools/oracles/compute_goldens.py; do not edit.")
    print("#pragma once\n\n#include <cstdint>\n\nnamespace goldens {\n")

    ab = alpha_bar(1000, 1e-4, 0.02, "linear")
    emit("kLinearAlphaBar0", ab[0])
    emit("kLinearAlphaBar499", ab[499])
    emit("kLinearAlphaBar999", ab[999])
    emit("kScaledAlphaBar999", alpha_bar(1000, 0.00085, 0.012, "scaled_linear")[999])
    # DDIM with eps = 0 from T to 0 telescopes to z_T / sqrt(alpha_bar_T)
    emit("kZeroEpsGain", 1.0 / math.sqrt(ab[999]))

    emit_array("kGaussSigma1", gauss_kernel(1.0))
    emit_array("kGaussSigmaHalf", gauss_kernel(0.5))

    ramp = np.arange(16, dtype=float).reshape(4, 4)
    emit_array("kRampConvD2", dilated_conv_bruteforce(ramp, np.ones((3, 3)), 2))

    emit("kNtkLambda256to1024d64", math.exp(64.0 / 62.0 * math.log(4.0)))
    emit("kTemperature1024to4096", math.sqrt(math.log(4096) / math.log(1024)))

    # hand DDIM: z_t = 0.3, eps = -0.7, alpha_bar 0.25 -> 0.81
    z0 = (0.3 - math.sqrt(0.75) * -0.7) / math.sqrt(0.25)
    emit("kDdimHand", math.sqrt(0.81) * z0 + math.sqrt(0.19) * -0.7)

    # counter RNG draws
    print("inline constexpr std::uint64_t kMix64Of0 = " + f"{mix64(0)}ULL;")
    print("inline constexpr std::uint64_t kMix64Of42 = " + f"{mix64(42)}ULL;")
    emit_array("kNormalSeed42", [normal_at(42, i) for i in range(5)])
    emit_array("kUniformSeed7", [uniform_at(7, i) for i in range(5)])

    # two-token attention: Q, K, V hand-set, scale 1/sqrt(2)
    Q = np.array([[1.0, 0.5], [-0.3, 2.0]])
    K = np.array([[0.2, -1.0], [1.5, 0.4]])
    V = np.array([[1.0, 2.0], [-3.0, 0.5]])
    out = np.array([softmax(Q[i] @ K.T / math.sqrt(2.0)) @ V for i in range(2)])
    emit_array("kTwoTokenQ", Q)
    emit_array("kTwoTokenK", K)
    emit_array("kTwoTokenV", V)
    emit_array("kTwoTokenOut", out)

    # exact LoRA factorization of a rank-3 update via SVD
    rng = np.random.default_rng(1234)
    W = rng.standard_normal((3, 4))
    dW = rng.standard_normal((3, 4))
    U, S, Vt = np.linalg.svd(dW, full_matrices=False)
    emit_array("kLoraW", W)
    emit_array("kLoraUp", U * S)
    emit_array("kLoraDown", Vt)
    emit_array("kLoraExpected", W + dW)

    # region alpha fixture: x + y < 3 -> 1, x + y > 3 -> 3, default 2
    fixture = [[1.0 if x + y < 3 else (3.0 if x + y > 3 else 2.0) for x in range(4)] for y in range(4)]
    emit_array("kRegionAlpha4x4", fixture)

    # checkerboard high-frequency ratio at sigma 2
    cb = np.array([[1.0 if (x + y) % 2 else -1.0 for x in range(32)] for y in range(32)])
    hi = cb - lowpass_reflect(cb, 2.0)
    emit("kCheckerboardHfRatio", (hi ** 2).sum() / ((cb - cb.mean()) ** 2).sum())

    print("\n}  // namespace goldens")


if __name__ == "__main__":
    main()

"""Writes the byte-exact PPM and JSON fixtures used by the CLI tests."""

import json
import math
import os
import random

HERE = os.path.join(os.path.dirname(__file__), "..", "..", "tests", "fixtures")


def to_byte(v):
    s = math.floor((v + 1.0) * 127.5 + 0.5)
    return max(0, min(255, s))


def write_ppm(name, w, h, pixels):
    with open(os.path.join(HERE, name), "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(bytes(pixels))


def main():
    # 3 x 2 ramp: channel c at (y, x) holds -1 + (c + 3 * (x + 3 * y)) / 9
    px = []
    for y in range(2):
        for x in range(3):
            for c in range(3):
                px.append(to_byte(-1.0 + (c + 3 * (x + 3 * y)) / 9.0))
    write_ppm("ramp_3x2.ppm", 3, 2, px)

    write_ppm("constant_16x16.ppm", 16, 16, [128] * (16 * 16 * 3))

    rng = random.Random(5)
    tile = [[rng.randrange(256) for _ in range(8)] for _ in range(8)]
    px = []
    for y in range(32):
        for x in range(32):
            px += [tile[y % 8][x % 8]] * 3
    write_ppm("tiled_32x32.ppm", 32, 32, px)

    base = {
        "backbone": "dit",
        "task": "t2i",
        "seed": 11,
        "base": {"height": 8, "width": 8, "steps": 4},
        "stages": [{"level": 2, "k_fraction": 0.5, "alpha_default": 2.0,
                    "regions": [{"rect": [0, 0, 8, 8], "alpha": 0.5, "prompt": "left"}]}],
        "output": {"dir": "run"},
    }
    with open(os.path.join(HERE, "toy_generate.json"), "w") as f:
        json.dump(base, f, indent=2)
        f.write("\n")

    unet = {
        "backbone": "unet",
        "task": "t2i",
        "seed": 2,
        "guidance": 2.0,
        "base": {"height": 8, "width": 8, "steps": 4},
        "stages": [{"level": 2, "upsample_mode": "latent", "fusion": {"mode": "fused", "sigma": 1.5},
                    "dilation": {"factor": 2, "blocks": ["down.1", "mid"]}}],
        "metrics": {"hf_sigma": 1.5, "repetition_min_lag": 3},
    }
    with open(os.path.join(HERE, "toy_unet.json"), "w") as f:
        json.dump(unet, f, indent=2)
        f.write("\n")

    overlap = json.loads(json.dumps(base))
    overlap["stages"][0]["regions"] = [{"rect": [0, 0, 8, 8], "alpha": 0.5},
                                       {"rect": [4, 4, 12, 12], "alpha": 2.0}]
    with open(os.path.join(HERE, "overlap.json"), "w") as f:
        json.dump(overlap, f, indent=2)
        f.write("\n")

    unknown = json.loads(json.dumps(base))
    unknown["stages"][0]["dilaton"] = {}
    with open(os.path.join(HERE, "unknown_key.json"), "w") as f:
        json.dump(unknown, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()

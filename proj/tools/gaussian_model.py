#!/usr/bin/env python3
"""Reference external sampler: N(theta, sigma^2 I) over the fimest-philox-v1 stream.

Reads one request line {"theta": [...], "n": N, "seed": S} on stdin and writes
N rows of len(theta) comma-separated floats on stdout. Draws match the builtin
Gaussian model bit for bit.
"""

import argparse
import json
import math
import sys

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF


def philox4x32_10(ctr, key):
    c0, c1, c2, c3 = ctr
    k0, k1 = key
    for rnd in range(10):
        if rnd > 0:
            k0 = (k0 + 0x9E3779B9) & MASK32
            k1 = (k1 + 0xBB67AE85) & MASK32
        p0 = 0xD2511F53 * c0
        p1 = 0xCD9E8D57 * c2
        c0, c1, c2, c3 = (
            ((p1 >> 32) ^ c1 ^ k0) & MASK32,
            p1 & MASK32,
            ((p0 >> 32) ^ c3 ^ k1) & MASK32,
            p0 & MASK32,
        )
    return c0, c1, c2, c3


def unit_open(word):
    return ((word >> 12) + 0.5) * 2.0**-52


def normals(seed, stream, count):
    key = (seed & MASK32, (seed >> 32) & MASK32)
    out = []
    block = 0
    while len(out) < count:
        x = philox4x32_10((block & MASK32, block >> 32, stream & MASK32, stream >> 32), key)
        u1 = unit_open(x[0] | (x[1] << 32))
        u2 = unit_open(x[2] | (x[3] << 32))
        r = math.sqrt(-2.0 * math.log(u1))
        angle = 2.0 * math.pi * u2
        out.append(r * math.cos(angle))
        out.append(r * math.sin(angle))
        block += 1
    return out[:count]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sigma", type=float, default=1.0)
    args = parser.parse_args()

    request = json.loads(sys.stdin.readline())
    theta = [float(t) for t in request["theta"]]
    n = int(request["n"])
    seed = int(request["seed"]) & MASK64
    k = len(theta)
    z = normals(seed, 0, n * k)
    lines = []
    for i in range(n):
        lines.append(",".join(repr(theta[j] + args.sigma * z[i * k + j]) for j in range(k)))
    sys.stdout.write("\n".join(lines))
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()

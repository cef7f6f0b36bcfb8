#!/usr/bin/env python3
"""Dump an attention score matrix in the fusioncim trace format.

Scores come from random Q/K projections with rotary position encoding,
standing in for a real model dump. Writes a sidecar JSON with the shape and
the FNV-1a 64 checksum of the payload so loaders can verify the file.
"""
import argparse
import json

import numpy as np


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def rotary(x: np.ndarray, positions: np.ndarray, base: float = 10000.0) -> np.ndarray:
    half = x.shape[1] // 2
    freqs = base ** (-np.arange(half) / half)
    ang = positions[:, None] * freqs[None, :]
    cos, sin = np.cos(ang), np.sin(ang)
    a, b = x[:, :half], x[:, half:]
    return np.concatenate([a * cos - b * sin, a * sin + b * cos], axis=1)


def make_scores(rows: int, cols: int, dim: int, seed: int, causal: bool) -> np.ndarray:
    rng = np.random.default_rng(seed)
    shared = rng.standard_normal(dim)
    q = rng.standard_normal((rows, dim)) + shared
    k = rng.standard_normal((cols, dim)) + shared
    q = rotary(q, np.arange(cols - rows, cols, dtype=np.float64))
    k = rotary(k, np.arange(cols, dtype=np.float64))
    s = (q @ k.T) / np.sqrt(dim)
    if causal:
        i = np.arange(rows)[:, None] + (cols - rows)
        j = np.arange(cols)[None, :]
        s = np.where(j <= i, s, -np.inf)
    return s.astype("<f4")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--causal", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True)
    args = p.parse_args()
    if args.causal and args.rows > args.cols:
        p.error("causal trace needs rows <= cols")

    scores = make_scores(args.rows, args.cols, args.dim, args.seed, args.causal)
    payload = scores.tobytes(order="C")
    header = {"rows": args.rows, "cols": args.cols, "dtype": "f32le", "causal": args.causal}
    with open(args.out, "wb") as f:
        f.write(json.dumps(header, separators=(",", ":")).encode() + b"\n")
        f.write(payload)
    meta = dict(header, checksum=f"{fnv1a64(payload):016x}")
    with open(args.out + ".json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    print(f"{args.out}: {args.rows}x{args.cols} checksum {meta['checksum']}")


if __name__ == "__main__":
    main()

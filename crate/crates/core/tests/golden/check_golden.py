#!/usr/bin/env python3
"""Repacks the golden index lists with a plain Python packer and compares bytes."""
import json
import pathlib
import struct
import sys

here = pathlib.Path(__file__).resolve().parent
ok = True
for k in range(1, 7):
    frames = json.loads((here / f"k{k}.json").read_text())
    out = b"LRAC" + bytes([1]) + struct.pack("<I", 24000) + bytes([100, k, 10])
    for f in frames:
        bits = "".join(format(i, "010b") for i in f)
        bits += "0" * (-len(bits) % 8)
        out += int(bits, 2).to_bytes(len(bits) // 8, "big")
    same = out == (here / f"k{k}.lracb").read_bytes()
    ok &= same
    print(f"k={k}: {'ok' if same else 'MISMATCH'}")
sys.exit(0 if ok else 1)

#!/usr/bin/env python3
"""Generates the key-derivation test vectors committed under
crates/core/tests/data/key_derivation_vectors.txt.

Derivation contract: key = HMAC-SHA256(master, index as 8-byte big-endian).
Computed here with the standard library so the Rust implementation is
checked against an independent HMAC.
"""

import hashlib
import hmac
import random

def derive(master: bytes, index: int) -> bytes:
    return hmac.new(master, index.to_bytes(8, "big"), hashlib.sha256).digest()

def main():
    rows = []
    zero = bytes(32)
    rows.append((zero, 0))
    rows.append((zero, 1))
    rows.append((zero, 2**64 - 1))
    ff = bytes([0xFF] * 32)
    rows.append((ff, 0))
    rows.append((ff, 7))
    rng = random.Random(0xD17A)
    for _ in range(27):
        master = bytes(rng.randrange(256) for _ in range(32))
        index = rng.randrange(0, 2**32)
        rows.append((master, index))
    for master, index in rows:
        print(f"{master.hex()} {index} {derive(master, index).hex()}")

if __name__ == "__main__":
    main()

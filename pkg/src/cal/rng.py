"""Seedable counter-based random streams.

Every random decision is drawn from a Philox stream whose 128-bit key is a
hash of ``(seed, label, index)``.  Position ``t`` of a stream is the ``t``-th
draw, so a single decision can be replayed without regenerating its
neighbours, and results do not depend on evaluation order.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *labels) -> int:
    """Derive a 64-bit sub-seed from ``seed`` and a sequence of labels.

    Labels may be strings or integers.  The mapping is a keyed BLAKE2b hash,
    so distinct label paths give statistically independent seeds.
    """
    h = hashlib.blake2b(digest_size=8, person=b"cal-seed")
    h.update(struct.pack("<Q", int(seed) & _MASK64))
    for label in labels:
        raw = str(label).encode()
        h.update(struct.pack("<I", len(raw)))
        h.update(raw)
    return int.from_bytes(h.digest(), "little")


def _key(seed: int, label: str, index: int) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16, person=b"cal-key")
    h.update(struct.pack("<Q", int(seed) & _MASK64))
    raw = label.encode()
    h.update(struct.pack("<I", len(raw)))
    h.update(raw)
    h.update(struct.pack("<q", int(index)))
    return np.frombuffer(h.digest(), dtype=np.uint64).copy()


def stream(seed: int, label: str, index: int = 0, start: int = 0) -> np.random.Generator:
    """Return the generator for substream ``(seed, label, index)``.

    ``start`` skips that many 53-bit uniform draws (each consumes one 64-bit
    Philox output), which lets callers replay draw ``start`` directly.
    """
    bitgen = np.random.Philox(key=_key(seed, label, index))
    if start:
        # Philox emits four 64-bit words per counter increment.
        q, r = divmod(int(start), 4)
        bitgen.advance(q)
        if r:
            bitgen.random_raw(r)
    return np.random.Generator(bitgen)


def uniforms(seed: int, label: str, index: int, count: int, start: int = 0) -> np.ndarray:
    """``count`` uniform doubles in [0, 1) from positions ``start..start+count-1``."""
    return stream(seed, label, index, start).random(count)

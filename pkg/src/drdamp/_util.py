"""Shared plumbing: seed derivation and deterministic number formatting."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master, *tokens):
    """Deterministic 63-bit seed from a master seed and string tokens.

    Stages and solver candidates derive their own seeds this way, so any
    stage can re-run independently yet reproducibly and results do not
    depend on evaluation order.
    """
    digest = hashlib.sha256()
    digest.update(str(int(master)).encode())
    for token in tokens:
        digest.update(b"\x00" + str(token).encode())
    return int.from_bytes(digest.digest()[:8], "big") >> 1


def fmt_float(x):
    """Fixed 17-significant-digit text so artifacts are byte-stable."""
    return format(float(x), ".17g")


def coords_token(values):
    """Canonical text for a coordinate vector, for seed derivation."""
    return ",".join(format(float(v), ".12e") for v in np.atleast_1d(values))

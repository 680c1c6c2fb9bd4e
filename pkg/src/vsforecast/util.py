"""Small shared utilities: named RNG streams and table formatting."""

from __future__ import annotations

import zlib

import numpy as np


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Return a Generator for a named substream of a master seed.

    Every (seed, labels) combination maps to a distinct, platform-stable
    stream, so replicates and modules can draw independently while the
    whole run stays reproducible from a single integer.
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for label in labels:
        entropy.append(zlib.crc32(str(label).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def format_float(value: float, digits: int = 6) -> str:
    """Fixed-width float formatting so report files are byte-stable."""
    if value is None or (isinstance(value, float) and not np.isfinite(value)):
        return "nan"
    return f"{value:.{digits}f}"


def markdown_table(headers: list[str], rows: list[list[str]], bold_mask=None) -> str:
    """Render a GitHub-style markdown table.

    bold_mask, when given, has the same shape as rows and marks cells to
    wrap in ** ** (used for the best-within-tolerance highlighting).
    """
    out = ["| " + " | ".join(headers) + " |"]
    out.append("|" + "|".join([" --- "] * len(headers)) + "|")
    for i, row in enumerate(rows):
        cells = []
        for j, cell in enumerate(row):
            if bold_mask is not None and bold_mask[i][j]:
                cells.append(f"**{cell}**")
            else:
                cells.append(str(cell))
        out.append("| " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"

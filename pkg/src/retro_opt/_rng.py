"""Counter-based random draws keyed by ``(stream_seed, index)``.

Streaming oracles must regenerate the same realization for the same sample
identifier without storing anything, and they must do it for a whole batch
of identifiers at once. A SplitMix64 hash of the key plays the role of the
counter-based generator.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_TWO_POW_M53 = 2.0**-53


def _mix(z):
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _MUL1
    z ^= z >> np.uint64(27)
    z *= _MUL2
    z ^= z >> np.uint64(31)
    return z


def _keys(stream_seed, indices):
    idx = np.asarray(indices, dtype=np.uint64).reshape(-1)
    base = _mix(np.array([stream_seed], dtype=np.uint64) ^ _GOLDEN)
    return _mix(base + (idx + np.uint64(1)) * _GOLDEN)


def uniforms(stream_seed, indices, width):
    """Uniform draws in (0, 1], shape ``(len(indices), width)``."""
    with np.errstate(over="ignore"):
        keys = _keys(stream_seed, indices)
        ctr = (np.arange(width, dtype=np.uint64) + np.uint64(1)) * _MUL2
        z = _mix(keys[:, None] + ctr[None, :])
    return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_POW_M53


def normals(stream_seed, indices, width):
    """Standard normal draws, shape ``(len(indices), width)`` (Box-Muller)."""
    u = uniforms(stream_seed, indices, 2 * width)
    radius = np.sqrt(-2.0 * np.log(u[:, :width]))
    return radius * np.cos(2.0 * np.pi * u[:, width:])

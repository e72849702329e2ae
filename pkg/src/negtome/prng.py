"""SplitMix64 pseudo-random streams.

The generator keeps a 64-bit state ``s`` and produces outputs by::

    s = s + 0x9E3779B97F4A7C15                    (mod 2**64)
    z = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9      (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB      (mod 2**64)
    out = z ^ (z >> 31)

Uniforms in [0, 1) are ``(out >> 11) * 2**-53``. Normals use the cosine
branch of Box-Muller on consecutive pairs ``(u1, u2)``:
``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``.

Independent streams are keyed by integer tuples: ``derive_seed(seed, k1,
k2, ...)`` folds each key in with ``s = mix(s + GAMMA + k)``, where ``mix`` is
the output function above applied to its argument.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix64(value):
    """Scalar SplitMix64 finalizer on a Python int."""
    with np.errstate(over="ignore"):
        return int(_mix(np.array([value & _MASK], dtype=np.uint64))[0])


def derive_seed(seed, *keys):
    s = int(seed) & _MASK
    for k in keys:
        s = mix64((s + GAMMA + int(k)) & _MASK)
    return s


class SplitMix64:
    """Sequential SplitMix64 stream with vectorized draws."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next_u64(self, n):
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * np.uint64(GAMMA)
            out = _mix(states)
        self.state = (self.state + n * GAMMA) & _MASK
        return out

    def uniform(self, n):
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, shape):
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        n = int(np.prod(shape, dtype=np.int64))
        u = self.uniform(2 * n)
        u1, u2 = u[0::2], u[1::2]
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        return z.reshape(shape)

"""Platform-independent xoshiro256** generator.

The update rule follows the public-domain reference implementation by
Blackman and Vigna (xoshiro256starstar.c). State is seeded from a single
64-bit integer with splitmix64, as recommended by the same authors, so a
seed yields the same stream on every platform and Python build.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

_JUMP = (0x180EC6D33CFD0ABA, 0xD5A61266F0C9392C, 0xA9582618E03FC9AA, 0x39ABDC4529B1661C)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """Return ``(new_state, output)`` of one splitmix64 step."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** with helpers for floats, bounded ints and shuffles."""

    def __init__(self, seed: int):
        if not 0 <= seed <= MASK64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        sm = seed
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def jump(self) -> None:
        """Advance by 2**128 steps; used to carve out independent substreams."""
        s0 = s1 = s2 = s3 = 0
        for word in _JUMP:
            for b in range(64):
                if word & (1 << b):
                    s0 ^= self._s[0]
                    s1 ^= self._s[1]
                    s2 ^= self._s[2]
                    s3 ^= self._s[3]
                self.next_u64()
        self._s = [s0, s1, s2, s3]

    def random(self) -> float:
        """Uniform double in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        bits = (n - 1).bit_length()
        while True:
            r = self.next_u64() >> (64 - bits)
            if r < n:
                return r

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(n)``."""
        items = list(range(n))
        self.shuffle(items)
        return items

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def substream(seed: int, index: int) -> Xoshiro256:
    """Generator for substream ``index`` of ``seed`` (``index`` jumps ahead)."""
    gen = Xoshiro256(seed)
    for _ in range(index):
        gen.jump()
    return gen

"""Fixed-point encoding of reals into the ring Z_q with q = 2^q_bits.

Secret sharing and homomorphic encryption operate on ring integers, so every
real value is scaled by 2^frac_bits and reduced mod q. The upper half of the
ring represents negative numbers (two's-complement style centered lift, with
q/2 mapping to -q/2). Vectors are numpy uint64 arrays; q_bits <= 64 always,
so arithmetic relies on native uint64 wraparound plus a mask for smaller
rings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_U64 = np.uint64


@dataclass(frozen=True)
class FieldParams:
    """Ring and precision parameters shared by every party in a run."""

    q_bits: int = 64
    frac_bits: int = 24
    # strict=False admits toy rings (e.g. q=256, f=0) for docs and tests;
    # real runs keep the headroom guard below.
    strict: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not 1 <= self.q_bits <= 64:
            raise ValueError(f"q_bits must be in [1, 64], got {self.q_bits}")
        if self.strict:
            # headroom >= 16 bits above one full-precision product: protocols
            # that accumulate inner products must budget scales explicitly
            # (labels at scale 0, matrices at reduced scale) so sums stay
            # below q/2; this guard only rules out configurations where even
            # a single product of unit-scale values can wrap.
            if self.q_bits < 2 * self.frac_bits + 16:
                raise ValueError(
                    f"q_bits={self.q_bits} leaves less than 16 headroom bits "
                    f"above 2*frac_bits={2 * self.frac_bits}"
                )
            if self.frac_bits < 1:
                raise ValueError("frac_bits must be >= 1")
        elif self.frac_bits < 0:
            raise ValueError("frac_bits must be >= 0")

    @property
    def q(self) -> int:
        return 1 << self.q_bits

    @property
    def half(self) -> int:
        return 1 << (self.q_bits - 1)

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def mask(self) -> np.uint64:
        return _U64((1 << self.q_bits) - 1) if self.q_bits < 64 else _U64(0xFFFFFFFFFFFFFFFF)

    @property
    def max_abs(self) -> float:
        """Largest representable magnitude, 2^(q_bits - frac_bits - 1)."""
        return float(1 << (self.q_bits - self.frac_bits - 1))


def _as_raw(x, params: FieldParams) -> np.ndarray:
    out = np.asarray(x, dtype=_U64)
    if params.q_bits < 64:
        out = out & params.mask
    return out


def encode(x, params: FieldParams) -> np.ndarray:
    """Map reals to ring elements: raw = round(x * 2^frac_bits) mod q."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(arr) >= params.max_abs):
        raise OverflowError(
            f"|x| must stay below 2^{params.q_bits - params.frac_bits - 1}"
        )
    scaled = np.rint(arr * params.scale).astype(np.int64)
    return _as_raw(scaled.view(_U64), params)


def centered_lift(raw, params: FieldParams) -> np.ndarray:
    """Signed representative in [-q/2, q/2), as int64."""
    arr = np.asarray(raw, dtype=_U64)
    if params.q_bits == 64:
        return arr.view(np.int64)
    signed = arr.astype(np.int64)
    return np.where(signed >= params.half, signed - params.q, signed)


def decode(raw, params: FieldParams) -> np.ndarray:
    """Inverse of encode up to 2^-frac_bits: centered_lift(raw) / 2^frac_bits."""
    return centered_lift(raw, params).astype(np.float64) / params.scale


def ring_add(a, b, params: FieldParams) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _as_raw(np.asarray(a, _U64) + np.asarray(b, _U64), params)


def ring_sub(a, b, params: FieldParams) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _as_raw(np.asarray(a, _U64) - np.asarray(b, _U64), params)


def ring_neg(a, params: FieldParams) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _as_raw(-np.asarray(a, _U64), params)


def ring_mul(a, b, params: FieldParams) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _as_raw(np.asarray(a, _U64) * np.asarray(b, _U64), params)


def ring_matvec(mat, vec, params: FieldParams) -> np.ndarray:
    """mat @ vec over Z_q; mat and vec must already be ring elements."""
    with np.errstate(over="ignore"):
        return _as_raw(np.asarray(mat, _U64) @ np.asarray(vec, _U64), params)


def ring_uniform(shape, params: FieldParams, rng: np.random.Generator) -> np.ndarray:
    """Uniform ring elements, the share-hiding distribution."""
    return _as_raw(rng.integers(0, 2**64, size=shape, dtype=_U64), params)


def trunc_exact(raw, params: FieldParams) -> np.ndarray:
    """Divide by 2^frac_bits with floor on the centered value, back into Z_q.

    Used on reconstructed (non-shared) values, where the true magnitude is
    known to fit; arithmetic right shift on int64 is floor division.
    """
    shifted = centered_lift(raw, params) >> np.int64(params.frac_bits)
    return _as_raw(shifted.view(_U64), params)


def trunc_share(raw, params: FieldParams, lead: bool) -> np.ndarray:
    """Local per-share truncation after a fixed-point multiplication.

    The lead party shifts its share as an unsigned integer; the follower
    negates, shifts, and negates back. The reconstructed result is off by at
    most 2^-frac_bits except with probability ~2^(value_bits + 1 - q_bits).
    """
    arr = _as_raw(raw, params)
    f = _U64(params.frac_bits)
    if lead:
        return arr >> f
    return ring_neg(ring_neg(arr, params) >> f, params)


def fx_mul_trunc(a, b, params: FieldParams) -> np.ndarray:
    """Product of two encoded values with the 2^frac_bits rescale applied."""
    return trunc_exact(ring_mul(a, b, params), params)

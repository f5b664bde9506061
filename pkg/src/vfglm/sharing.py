"""Additive secret sharing over Z_q and Beaver-triple multiplication.

A secret vector z is held as two uniformly random summands, one per
computing party. Linear operations are local; products consume a
pre-distributed triple (mu, nu, omega = mu * nu) and one exchange of the
masked differences e = x - mu, f = y - nu, which reveal nothing because mu
and nu are uniform.

Shares carry a scale (fractional bits of the encoded secret) so pipelines
that mix scales, for example integer labels against 24-bit predictors, fail
loudly instead of silently misdecoding. The triple relation is the raw ring
product, so a product share carries the sum of its operands' scales until a
caller truncates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from vfglm import fixedpoint as fx
from vfglm.fixedpoint import FieldParams

LEAD = 0  # share index that applies public constants and lead truncation


@dataclass
class Share:
    owner: int
    tag: str
    value: np.ndarray
    params: FieldParams
    scale: int  # fractional bits carried by the underlying secret

    def __len__(self) -> int:
        return int(np.asarray(self.value).size)

    def is_lead(self) -> bool:
        return self.owner == LEAD


def _check_pair(a: Share, b: Share, same_owner: bool) -> None:
    if same_owner and a.owner != b.owner:
        raise ValueError(f"owner mismatch: {a.owner} vs {b.owner}")
    if not same_owner and a.owner == b.owner:
        raise ValueError("need shares from distinct parties")
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if a.scale != b.scale:
        raise ValueError(f"scale mismatch: {a.scale} vs {b.scale}")


def split(
    z,
    params: FieldParams,
    rng: np.random.Generator,
    tag: str = "",
    scale: int | None = None,
    owners: tuple[int, int] = (0, 1),
) -> tuple[Share, Share]:
    """Split a ring vector into two uniform summands."""
    z = np.atleast_1d(np.asarray(z, dtype=np.uint64))
    s0 = fx.ring_uniform(z.shape, params, rng)
    s1 = fx.ring_sub(z, s0, params)
    sc = params.frac_bits if scale is None else scale
    return (
        Share(owners[0], tag, s0, params, sc),
        Share(owners[1], tag, s1, params, sc),
    )


def reconstruct(a: Share, b: Share) -> np.ndarray:
    if a.tag != b.tag:
        raise ValueError(f"tag mismatch: {a.tag!r} vs {b.tag!r}")
    _check_pair(a, b, same_owner=False)
    return fx.ring_add(a.value, b.value, a.params)


def share_add(a: Share, b: Share, tag: str | None = None) -> Share:
    _check_pair(a, b, same_owner=True)
    return Share(
        a.owner, tag if tag is not None else a.tag,
        fx.ring_add(a.value, b.value, a.params), a.params, a.scale,
    )


def share_sub(a: Share, b: Share, tag: str | None = None) -> Share:
    _check_pair(a, b, same_owner=True)
    return Share(
        a.owner, tag if tag is not None else a.tag,
        fx.ring_sub(a.value, b.value, a.params), a.params, a.scale,
    )


def share_add_public(a: Share, const, tag: str | None = None) -> Share:
    """Add a public ring vector; only the lead share absorbs it."""
    value = fx.ring_add(a.value, const, a.params) if a.is_lead() else a.value.copy()
    return Share(a.owner, tag if tag is not None else a.tag, value, a.params, a.scale)


def share_scale_int(a: Share, k: int, tag: str | None = None) -> Share:
    """Multiply by a public integer; exact, scale unchanged."""
    kk = np.uint64(k % a.params.q)
    return Share(
        a.owner, tag if tag is not None else a.tag,
        fx.ring_mul(a.value, kk, a.params), a.params, a.scale,
    )


def share_shift_up(a: Share, bits: int, tag: str | None = None) -> Share:
    """Multiply by 2^bits; exact rescale used to align mixed-scale terms."""
    s = share_scale_int(a, 1 << bits, tag)
    s.scale = a.scale + bits
    return s


def share_trunc(a: Share, bits: int, tag: str | None = None) -> Share:
    """Local share truncation by 2^bits (probabilistic low-bit error)."""
    p = FieldParams(a.params.q_bits, bits, strict=False)
    value = fx.trunc_share(a.value, p, lead=a.is_lead())
    return Share(a.owner, tag if tag is not None else a.tag, value, a.params, a.scale - bits)


def share_scale_public(a: Share, k: float, tag: str | None = None) -> Share:
    """Multiply by a public real and truncate back to the share's scale."""
    raw = fx.encode(np.float64(k), a.params)
    scaled = Share(
        a.owner, a.tag, fx.ring_mul(a.value, raw, a.params), a.params,
        a.scale + a.params.frac_bits,
    )
    return share_trunc(scaled, a.params.frac_bits, tag)


@dataclass
class TripleShare:
    """One party's half of a Beaver triple (element-wise vectors)."""

    index: int
    owner: int
    mu: np.ndarray
    nu: np.ndarray
    omega: np.ndarray
    params: FieldParams
    consumed: bool = False

    def __len__(self) -> int:
        return int(self.mu.size)


@dataclass
class TripleDealer:
    """Trusted out-of-band source of single-use multiplication triples."""

    params: FieldParams
    rng: np.random.Generator
    issued_count: int = field(default=0)

    def deal(self, length: int) -> tuple[TripleShare, TripleShare]:
        mu = fx.ring_uniform(length, self.params, self.rng)
        nu = fx.ring_uniform(length, self.params, self.rng)
        omega = fx.ring_mul(mu, nu, self.params)
        idx = self.issued_count
        self.issued_count += 1
        mu0 = fx.ring_uniform(length, self.params, self.rng)
        nu0 = fx.ring_uniform(length, self.params, self.rng)
        om0 = fx.ring_uniform(length, self.params, self.rng)
        t0 = TripleShare(idx, 0, mu0, nu0, om0, self.params)
        t1 = TripleShare(
            idx, 1,
            fx.ring_sub(mu, mu0, self.params),
            fx.ring_sub(nu, nu0, self.params),
            fx.ring_sub(omega, om0, self.params),
            self.params,
        )
        return t0, t1

    def deal_many(self, count: int, length: int) -> list[tuple[TripleShare, TripleShare]]:
        return [self.deal(length) for _ in range(count)]


def beaver_mask(x: Share, y: Share, t: TripleShare) -> tuple[np.ndarray, np.ndarray]:
    """Local step one: this party's shares of e = x - mu and f = y - nu."""
    if t.consumed:
        raise RuntimeError(f"triple {t.index} already consumed")
    if t.owner != x.owner or x.owner != y.owner:
        raise ValueError("triple and operand shares must share an owner")
    if len(x) != len(t) or len(y) != len(t):
        raise ValueError("triple length mismatch")
    e = fx.ring_sub(x.value, t.mu, x.params)
    f = fx.ring_sub(y.value, t.nu, y.params)
    return e, f


def beaver_combine(
    t: TripleShare, e: np.ndarray, f: np.ndarray, out_scale: int,
    params: FieldParams, tag: str = "",
) -> Share:
    """Local step two, after e and f are revealed.

    z_share = omega + e * nu + f * mu, plus the public e * f term at the
    lead. Result carries the raw product scale; callers truncate if needed.
    """
    if t.consumed:
        raise RuntimeError(f"triple {t.index} already consumed")
    t.consumed = True
    z = fx.ring_add(t.omega, fx.ring_mul(e, t.nu, params), params)
    z = fx.ring_add(z, fx.ring_mul(f, t.mu, params), params)
    if t.owner == LEAD:
        z = fx.ring_add(z, fx.ring_mul(e, f, params), params)
    return Share(t.owner, tag, z, params, out_scale)


def beaver_mul_pair(
    x0: Share, x1: Share, y0: Share, y1: Share,
    t0: TripleShare, t1: TripleShare,
    trunc: bool = True, tag: str = "",
) -> tuple[Share, Share]:
    """Both halves of one multiplication in-process (tests and local math).

    The protocol engine performs the same steps with the e/f exchange going
    over transport. With trunc=True the product is truncated back to the
    operands' scale, which must match.
    """
    params = x0.params
    e0, f0 = beaver_mask(x0, y0, t0)
    e1, f1 = beaver_mask(x1, y1, t1)
    e = fx.ring_add(e0, e1, params)
    f = fx.ring_add(f0, f1, params)
    out_scale = x0.scale + y0.scale
    z0 = beaver_combine(t0, e, f, out_scale, params, tag)
    z1 = beaver_combine(t1, e, f, out_scale, params, tag)
    if trunc:
        if x0.scale != y0.scale:
            raise ValueError("truncating product of mixed scales")
        z0 = share_trunc(z0, x0.scale, tag)
        z1 = share_trunc(z1, x0.scale, tag)
    return z0, z1


def split_local_pair(
    z, params: FieldParams, rng: np.random.Generator, tag: str = "",
    scale: int | None = None,
) -> tuple[Share, Share]:
    """Alias of split with the default two-party owner layout."""
    return split(z, params, rng, tag=tag, scale=scale)

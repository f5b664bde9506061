"""Additively homomorphic Paillier cryptosystem on gmpy2 big integers.

Supports what the training protocol needs: probabilistic encryption,
ciphertext addition, plaintext-scalar multiplication, and a signed bridge
from ring elements (centered mod q) into the plaintext space Z_N. Encryption
uses the g = N + 1 variant, so (1 + mN) replaces the g^m power, and the
random obfuscator r^N is produced from a precomputed table h = r0^N raised
to a fresh short exponent, which is the standard shortcut for bulk
encryption. Decryption runs on the CRT halves.

Ciphertext-vector weighted sums (the gradient matvec) use bucket
multi-exponentiation, which is algebraically identical to composing
ct_scalar_mul and ct_add but an order of magnitude faster for long vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2
import numpy as np

from vfglm.fixedpoint import FieldParams, centered_lift

SUPPORTED_KEY_BITS = (256, 1024, 2048)

# short obfuscator exponent: 320 bits keeps ~2^-128 statistical distance in
# the subgroup generated by h while costing a fraction of a full r^N power
_OBF_EXP_BITS = 320
_WINDOW = 8


def _rand_int(rng: np.random.Generator, bits: int) -> gmpy2.mpz:
    return gmpy2.mpz(int.from_bytes(rng.bytes((bits + 7) // 8), "big") | 1)


def _rand_below(rng: np.random.Generator, n: gmpy2.mpz) -> gmpy2.mpz:
    nbytes = (n.bit_length() + 64) // 8
    return gmpy2.mpz(int.from_bytes(rng.bytes(nbytes), "big")) % n


@dataclass
class PaillierPublicKey:
    n: gmpy2.mpz
    key_bits: int
    h: gmpy2.mpz  # r0^n mod n^2, base of the obfuscator shortcut
    n_sq: gmpy2.mpz = field(init=False, repr=False)
    _h_table: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.n_sq = self.n * self.n

    @property
    def ct_bytes(self) -> int:
        """Serialized ciphertext width: residues mod n^2."""
        return 2 * self.key_bits // 8

    @property
    def plain_bytes(self) -> int:
        return self.key_bits // 8

    def _table(self) -> list:
        # fixed-base window table: row i holds h^(d * 256^i) for d in [0, 256)
        if self._h_table is None:
            rows = []
            base = self.h
            for _ in range(_OBF_EXP_BITS // _WINDOW):
                row = [gmpy2.mpz(1)]
                for _ in range(255):
                    row.append(row[-1] * base % self.n_sq)
                rows.append(row)
                base = row[255] * base % self.n_sq
            self._h_table = rows
        return self._h_table

    def obfuscator(self, rng: np.random.Generator) -> gmpy2.mpz:
        """A fresh r^n factor via the precomputed table."""
        alpha = int.from_bytes(rng.bytes(_OBF_EXP_BITS // 8), "big")
        acc = gmpy2.mpz(1)
        for row in self._table():
            digit = alpha & 0xFF
            if digit:
                acc = acc * row[digit] % self.n_sq
            alpha >>= 8
        return acc


@dataclass
class PaillierPrivateKey:
    p: gmpy2.mpz
    q: gmpy2.mpz
    public: PaillierPublicKey
    # CRT decryption material
    p_sq: gmpy2.mpz = field(init=False, repr=False)
    q_sq: gmpy2.mpz = field(init=False, repr=False)
    hp: gmpy2.mpz = field(init=False, repr=False)
    hq: gmpy2.mpz = field(init=False, repr=False)
    q_inv_p: gmpy2.mpz = field(init=False, repr=False)

    def __post_init__(self):
        n = self.public.n
        self.p_sq = self.p * self.p
        self.q_sq = self.q * self.q
        g = n + 1
        self.hp = gmpy2.invert(self._l(gmpy2.powmod(g, self.p - 1, self.p_sq), self.p), self.p)
        self.hq = gmpy2.invert(self._l(gmpy2.powmod(g, self.q - 1, self.q_sq), self.q), self.q)
        self.q_inv_p = gmpy2.invert(self.q, self.p)

    @staticmethod
    def _l(x: gmpy2.mpz, d: gmpy2.mpz) -> gmpy2.mpz:
        return (x - 1) // d


@dataclass(frozen=True)
class Ciphertext:
    value: gmpy2.mpz
    pk_id: int  # id of the encrypting key, guards against cross-key mixing


@dataclass
class PaillierKeyPair:
    pk: PaillierPublicKey
    sk: PaillierPrivateKey
    key_bits: int
    pk_id: int


def _gen_prime(rng: np.random.Generator, bits: int) -> gmpy2.mpz:
    while True:
        cand = _rand_int(rng, bits)
        cand |= gmpy2.mpz(3) << (bits - 2)  # top two bits set, keeps n at size
        p = gmpy2.next_prime(cand)
        if p.bit_length() == bits:
            return p


def keygen(key_bits: int, rng: np.random.Generator, pk_id: int = 0) -> PaillierKeyPair:
    if key_bits not in SUPPORTED_KEY_BITS:
        raise ValueError(f"key_bits must be one of {SUPPORTED_KEY_BITS}")
    half = key_bits // 2
    while True:
        p = _gen_prime(rng, half)
        q = _gen_prime(rng, half)
        if p != q and (p * q).bit_length() == key_bits:
            break
    return from_primes(p, q, rng, pk_id=pk_id, key_bits=key_bits)


def from_primes(
    p, q, rng: np.random.Generator, pk_id: int = 0, key_bits: int | None = None
) -> PaillierKeyPair:
    """Key pair from explicit primes; used for pinned textbook-size tests."""
    p, q = gmpy2.mpz(p), gmpy2.mpz(q)
    n = p * q
    bits = key_bits if key_bits is not None else n.bit_length()
    r0 = _rand_below(rng, n)
    while gmpy2.gcd(r0, n) != 1:
        r0 = _rand_below(rng, n)
    pk = PaillierPublicKey(n=n, key_bits=bits, h=gmpy2.powmod(r0, n, n * n))
    sk = PaillierPrivateKey(p=p, q=q, public=pk)
    return PaillierKeyPair(pk=pk, sk=sk, key_bits=bits, pk_id=pk_id)


def encrypt(
    m: int,
    pk: PaillierPublicKey,
    rng: np.random.Generator,
    pk_id: int = 0,
    nonce: int | None = None,
) -> Ciphertext:
    m = gmpy2.mpz(m)
    if not 0 <= m < pk.n:
        raise ValueError("plaintext out of [0, n)")
    raw = (1 + m * pk.n) % pk.n_sq
    if nonce is not None:
        obf = gmpy2.powmod(gmpy2.mpz(nonce), pk.n, pk.n_sq)
    else:
        obf = pk.obfuscator(rng)
    return Ciphertext(value=raw * obf % pk.n_sq, pk_id=pk_id)


def decrypt(ct: Ciphertext, kp: PaillierKeyPair) -> int:
    if ct.pk_id != kp.pk_id:
        raise ValueError("ciphertext was not produced under this key")
    sk = kp.sk
    c = gmpy2.mpz(ct.value)
    mp = sk._l(gmpy2.powmod(c % sk.p_sq, sk.p - 1, sk.p_sq), sk.p) * sk.hp % sk.p
    mq = sk._l(gmpy2.powmod(c % sk.q_sq, sk.q - 1, sk.q_sq), sk.q) * sk.hq % sk.q
    # CRT combine
    m = mq + sk.q * ((mp - mq) * sk.q_inv_p % sk.p)
    return int(m % kp.pk.n)


def ct_add(a: Ciphertext, b: Ciphertext, pk: PaillierPublicKey) -> Ciphertext:
    if a.pk_id != b.pk_id:
        raise ValueError("ciphertexts under different keys")
    return Ciphertext(value=a.value * b.value % pk.n_sq, pk_id=a.pk_id)


def ct_add_plain(a: Ciphertext, k: int, pk: PaillierPublicKey) -> Ciphertext:
    """Add a public plaintext without a fresh encryption: multiply by 1 + kN."""
    k = gmpy2.mpz(k) % pk.n
    return Ciphertext(value=a.value * (1 + k * pk.n) % pk.n_sq, pk_id=a.pk_id)


def ct_scalar_mul(a: Ciphertext, k: int, pk: PaillierPublicKey) -> Ciphertext:
    k = gmpy2.mpz(k)
    if not 0 <= k < pk.n:
        raise ValueError("scalar out of [0, n)")
    return Ciphertext(value=gmpy2.powmod(a.value, k, pk.n_sq), pk_id=a.pk_id)


def encrypt_signed(
    raw, params: FieldParams, pk: PaillierPublicKey, rng: np.random.Generator, pk_id: int = 0
) -> list[Ciphertext]:
    """Encrypt a ring vector by its centered representatives, mapped into Z_N."""
    out = []
    for v in np.atleast_1d(centered_lift(np.asarray(raw), params)):
        out.append(encrypt(int(v) % pk.n, pk, rng, pk_id=pk_id))
    return out


def decrypt_signed(cts, kp: PaillierKeyPair, params: FieldParams) -> np.ndarray:
    """Decrypt, center mod N, and reduce into the ring."""
    vals = []
    for ct in cts:
        m = decrypt(ct, kp)
        if m >= kp.pk.n // 2:
            m -= kp.pk.n
        vals.append(m % params.q)
    return np.array(vals, dtype=np.uint64 if params.q_bits <= 64 else object)


def weighted_sum(
    cts: list[Ciphertext], weights, pk: PaillierPublicKey, window: int = 9
) -> Ciphertext:
    """sum_i weights[i] * cts[i] over signed integer weights.

    Bucket multi-exponentiation: per window position, group bases by digit,
    then fold buckets with the running-suffix trick. Negative weights get
    their own accumulator and a single inversion at the end. Matches the
    ct_scalar_mul/ct_add composition exactly.
    """
    if not cts:
        raise ValueError("empty ciphertext vector")
    pk_id = cts[0].pk_id
    ws = [int(w) for w in weights]
    if len(ws) != len(cts):
        raise ValueError("length mismatch")
    n_sq = pk.n_sq
    result = gmpy2.mpz(1)
    for negate in (False, True):
        pairs = [
            (ct.value, -w if negate else w)
            for ct, w in zip(cts, ws)
            if (w < 0) == negate and w != 0
        ]
        if not pairs:
            continue
        max_bits = max(w.bit_length() for _, w in pairs)
        nwin = max(1, (max_bits + window - 1) // window)
        mask = (1 << window) - 1
        acc = gmpy2.mpz(1)
        for win in range(nwin - 1, -1, -1):
            if win != nwin - 1:
                for _ in range(window):
                    acc = acc * acc % n_sq
            shift = win * window
            buckets: dict[int, gmpy2.mpz] = {}
            for base, w in pairs:
                digit = (w >> shift) & mask
                if digit:
                    cur = buckets.get(digit)
                    buckets[digit] = base if cur is None else cur * base % n_sq
            run = gmpy2.mpz(1)
            total = gmpy2.mpz(1)
            for digit in range(mask, 0, -1):
                b = buckets.get(digit)
                if b is not None:
                    run = run * b % n_sq
                total = total * run % n_sq
            acc = acc * total % n_sq
        if negate:
            acc = gmpy2.invert(acc, n_sq)
        result = result * acc % n_sq
    return Ciphertext(value=result, pk_id=pk_id)


def serialize_ct(ct: Ciphertext, pk: PaillierPublicKey) -> bytes:
    return int(ct.value).to_bytes(pk.ct_bytes, "big")


def deserialize_ct(buf: bytes, pk: PaillierPublicKey, pk_id: int) -> Ciphertext:
    return Ciphertext(value=gmpy2.mpz(int.from_bytes(buf, "big")), pk_id=pk_id)


def serialize_pk(pk: PaillierPublicKey) -> bytes:
    n_bytes = int(pk.n).to_bytes(pk.plain_bytes, "big")
    h_bytes = int(pk.h).to_bytes(pk.ct_bytes, "big")
    head = len(n_bytes).to_bytes(4, "big") + n_bytes
    return head + len(h_bytes).to_bytes(4, "big") + h_bytes


def deserialize_pk(buf: bytes, key_bits: int) -> PaillierPublicKey:
    ln = int.from_bytes(buf[:4], "big")
    n = gmpy2.mpz(int.from_bytes(buf[4 : 4 + ln], "big"))
    off = 4 + ln
    lh = int.from_bytes(buf[off : off + 4], "big")
    h = gmpy2.mpz(int.from_bytes(buf[off + 4 : off + 4 + lh], "big"))
    return PaillierPublicKey(n=n, key_bits=key_bits, h=h)

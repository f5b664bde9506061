"""Multi-party training engine: share distribution, secure gradient and
loss evaluation, and the iteration loop that stitches them together.

Each party runs as an isolated worker with its own randomness streams and
talks to the others only through the transport layer, so the same code
drives in-memory simulation and socket loopback runs identically.

Fixed-point scale plan (64-bit ring):
  - predictor shares carry 24 fractional bits; labels are shared as exact
    integers at scale 0, so label products never need truncation
  - the logistic predictor gradient is a linear combination of those two,
    carried at scale 26 with no secure multiplication at all
  - Poisson exp factors are shared at 16 bits; the chained factor products
    are truncated from 32 back to 16 bits each step
  - features enter the encrypted gradient product at 16 bits; the final
    division by the batch size happens in plaintext after unmasking
  - loss terms are combined with integer coefficients and revealed as one
    exact ring scalar (scale 35 logistic, 24 Poisson)
"""

from __future__ import annotations

import math
import random
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import fixedpoint as fx
from . import glm, paillier, sharing
from . import transport as tp
from .data import VerticalDataset
from .fixedpoint import FieldParams
from .transport import Envelope, Phase

PREDICTOR_BITS = 24
FEATURE_BITS = 16
FACTOR_BITS = 16
LOGISTIC_PG_SCALE = 26
POISSON_PG_SCALE = 16
LOGISTIC_LOSS_BITS = 35
POISSON_LOSS_BITS = 24

# triple slots per iteration: chain steps use 0..k-2
SLOT_LABEL_PRODUCT = 100
SLOT_SQUARE = 101

CP_POLICIES = ("fixed", "random")

# stream labels for per-purpose seed derivation
_SEED_SHARES = 0x51
_SEED_NOISE = 0x52
_SEED_ENCRYPT = 0x53
_SEED_KEYGEN = 0x54
_SEED_TRIPLES = 0x55
_SEED_CPS = 0x56


@dataclass(frozen=True)
class LeakageVerdict:
    safe: bool
    reason: str


def leakage_guard(
    sample_rows: int,
    adversary_width: int,
    victim_width: int,
    rounds: int,
) -> LeakageVerdict:
    """Dimension-counting check on cross-party reconstruction.

    Exactly recovering the victim's feature block from per-round
    observations needs strictly more scalar equations (rounds * sample_rows)
    than unknowns (the block itself plus one victim weight vector per
    round).  The verdict is a warning, never a hard stop: the counting
    argument is necessary for recovery, not sufficient.
    """
    for name, v in (
        ("sample_rows", sample_rows),
        ("adversary_width", adversary_width),
        ("victim_width", victim_width),
        ("rounds", rounds),
    ):
        if v < 1:
            raise ValueError(f"{name} must be a positive integer")
    if sample_rows > adversary_width:
        return LeakageVerdict(True, "sample rows exceed adversary feature count")
    if sample_rows <= min(adversary_width, victim_width):
        return LeakageVerdict(True, "sample rows within both feature counts")
    # victim_width < sample_rows <= adversary_width: unknowns grow by
    # victim_width per round while equations grow by sample_rows
    bound = sample_rows * victim_width / (sample_rows - victim_width)
    if rounds <= bound:
        return LeakageVerdict(
            True, f"round budget {rounds} within counting bound {bound:g}"
        )
    return LeakageVerdict(
        False,
        f"observations can outnumber unknowns after {rounds} rounds "
        f"(bound {bound:g})",
    )


@dataclass(frozen=True)
class TrainConfig:
    family: str
    learning_rate: float
    max_iterations: int = 30
    tolerance: float = 1e-4
    batch_size: int = 1024
    key_bits: int = 1024
    cp_policy: str = "fixed"
    seed: int = 0
    predictor_clip: float | None = None
    ring: FieldParams = FieldParams()
    timeout: float = 120.0
    keep_payloads: bool = False
    debug_capture: bool = False

    def __post_init__(self):
        if self.family not in glm.FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.cp_policy not in CP_POLICIES:
            raise ValueError(f"cp_policy must be one of {CP_POLICIES}")

    @property
    def clip(self) -> float:
        if self.predictor_clip is not None:
            return self.predictor_clip
        return glm.default_clip(self.family)

    @property
    def pg_scale(self) -> int:
        return LOGISTIC_PG_SCALE if self.family == "logistic" else POISSON_PG_SCALE

    def glm_spec(self) -> glm.GlmSpec:
        return glm.GlmSpec(
            self.family,
            self.learning_rate,
            self.max_iterations,
            self.tolerance,
            self.batch_size,
            self.seed,
            self.clip,
        )


def select_cps(
    k: int, policy: str, iteration: int, seed: int, label_owner: int = 0
) -> tuple[int, int]:
    """Pick the two computing parties for one iteration.

    Every party evaluates this identically from shared inputs, so no
    coordination messages are needed.  The fixed policy always pairs the
    label owner with the lowest other id.
    """
    if k < 2:
        raise ValueError("need at least two parties")
    if policy == "fixed":
        first = label_owner
        second = min(p for p in range(k) if p != first)
        return first, second
    rng = np.random.default_rng(np.random.SeedSequence((seed, _SEED_CPS, iteration)))
    pair = rng.choice(k, size=2, replace=False)
    return int(pair[0]), int(pair[1])


class TripleBank:
    """Trusted-dealer stand-in.

    Each triple is derived from (seed, iteration, slot) alone, so both
    computing parties pull matching halves without coordination and runs
    are reproducible regardless of thread interleaving.  Dealer delivery
    is out of band and never touches the traffic ledger.
    """

    def __init__(self, params: FieldParams, seed: int):
        self._params = params
        self._seed = seed
        self._lock = threading.Lock()
        self._cache: dict[tuple[int, int], list] = {}
        self._taken: dict[tuple[int, int], set[int]] = {}

    def take(
        self, iteration: int, slot: int, length: int, half: int
    ) -> sharing.TripleShare:
        key = (iteration, slot)
        with self._lock:
            if key not in self._cache:
                rng = np.random.default_rng(
                    np.random.SeedSequence((self._seed, _SEED_TRIPLES, *key))
                )
                dealer = sharing.TripleDealer(self._params, rng)
                self._cache[key] = list(dealer.deal(length))
                self._taken[key] = set()
            if half in self._taken[key]:
                raise RuntimeError(f"triple {key} half {half} already taken")
            self._taken[key].add(half)
            t = self._cache[key][half]
            if len(self._taken[key]) == 2:
                del self._cache[key], self._taken[key]
            return t


def _party_rng(seed: int, purpose: int, pid: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, purpose, pid)))


def _party_random(seed: int, purpose: int, pid: int) -> random.Random:
    state = np.random.SeedSequence((seed, purpose, pid)).generate_state(4)
    return random.Random(int.from_bytes(state.tobytes(), "big"))


def _ring_sum(vec: np.ndarray) -> int:
    return int(np.sum(vec, dtype=np.uint64))


def _centered(value: int) -> int:
    return value - 2**64 if value >= 2**63 else value


@dataclass
class TrainOutcome:
    weights: list[np.ndarray]
    losses: list[float]
    iterations: int
    stopped_early: bool
    ledger: tp.TrafficLedger
    report: dict
    debug: dict


class _Worker:
    """One party's full protocol run."""

    def __init__(
        self,
        pid: int,
        k: int,
        block: np.ndarray,
        labels: np.ndarray | None,
        label_owner: int,
        config: TrainConfig,
        endpoint,
        bank: TripleBank,
        kp: paillier.PaillierKeyPair,
        peer_pks: dict[int, paillier.PaillierPublicKey],
    ):
        self.pid = pid
        self.k = k
        self.block = block
        self.labels = labels
        self.label_owner = label_owner
        self.cfg = config
        self.ep = endpoint
        self.bank = bank
        self.kp = kp
        self.peer_pks = peer_pks
        self.params = config.ring
        self.p_feat = FieldParams(self.params.q_bits, FEATURE_BITS)
        self.weights = np.zeros(block.shape[1])
        self.schedule = glm.BatchSchedule(
            block.shape[0], config.batch_size, config.seed
        )
        self.share_rng = _party_rng(config.seed, _SEED_SHARES, pid)
        self.enc_rng = _party_rng(config.seed, _SEED_ENCRYPT, pid)
        self.noise = _party_random(config.seed, _SEED_NOISE, pid)
        self.losses: list[float] = []
        self.prev_loss: float | None = None
        self.stopped_early = False
        self.iterations = 0
        self.error: BaseException | None = None
        self.debug: dict = {"pg_shares": {}, "loss_shares": {}}

    # share bookkeeping per iteration, CP-side
    # predictor: Share of the summed clipped predictor, scale 24
    # label: Share of the label vector, scale 0
    # factors: per-party exp factor Shares in id order, scale 16 (Poisson)

    def run(self):
        try:
            self._run()
        except BaseException as exc:
            self.error = exc

    def _run(self):
        cfg = self.cfg
        for t in range(cfg.max_iterations):
            cp0, cp1 = select_cps(
                self.k, cfg.cp_policy, t, cfg.seed, self.label_owner
            )
            idx = self.schedule.next_batch()
            state = self._share_phase(t, idx, cp0, cp1)
            pg = self._predictor_gradient_phase(t, cp0, cp1, state)
            self._gradient_phase(t, idx, cp0, cp1, pg)
            flag = self._loss_and_control_phase(t, idx, cp0, cp1, state)
            self.iterations = t + 1
            if flag:
                self.stopped_early = True
                break

    # ---- phase 1: secret sharing ----------------------------------------

    def _local_items(self, idx) -> list[np.ndarray]:
        """Raw ring vectors this party contributes, in wire order."""
        wx = glm.partial_predictor(self.block[idx], self.weights, self.cfg.clip)
        items = [fx.encode(wx, self.params)]
        if self.cfg.family == "poisson":
            p_fac = FieldParams(self.params.q_bits, FACTOR_BITS)
            items.append(fx.encode(np.exp(wx), p_fac))
        if self.pid == self.label_owner:
            p_int = FieldParams(self.params.q_bits, 0, strict=False)
            items.append(fx.encode(np.rint(self.labels[idx]), p_int))
        return items

    def _sender_item_count(self, sender: int) -> int:
        n = 1
        if self.cfg.family == "poisson":
            n += 1
        if sender == self.label_owner:
            n += 1
        return n

    def _share_phase(self, t: int, idx, cp0: int, cp1: int) -> dict | None:
        b = idx.size
        items = self._local_items(idx)
        halves = [
            sharing.split(raw, self.params, self.share_rng) for raw in items
        ]
        if self.pid not in (cp0, cp1):
            for half, cp in ((0, cp0), (1, cp1)):
                payload = b"".join(tp.pack_uint64_array(h[half].value) for h in halves)
                self.ep.send(
                    Envelope(self.pid, cp, Phase.SHARE, t, payload, "shares")
                )
            return None

        half = 0 if self.pid == cp0 else 1
        other = cp1 if half == 0 else cp0
        payload = b"".join(
            tp.pack_uint64_array(h[1 - half].value) for h in halves
        )
        self.ep.send(Envelope(self.pid, other, Phase.SHARE, t, payload, "shares"))

        # collect every party's contributions, own included
        per_party: dict[int, list[np.ndarray]] = {
            self.pid: [h[half].value for h in halves]
        }
        senders = [other] + [p for p in range(self.k) if p not in (cp0, cp1)]
        for sender in senders:
            env = self.ep.recv(Phase.SHARE, sender, timeout=self.cfg.timeout)
            arrs = tp.unpack_uint64_array(env.payload).reshape(
                self._sender_item_count(sender), b
            )
            per_party[sender] = [np.ascontiguousarray(a) for a in arrs]

        predictor = np.zeros(b, dtype=np.uint64)
        for p in range(self.k):
            predictor = fx.ring_add(predictor, per_party[p][0], self.params)
        state = {
            "half": half,
            "other": other,
            "predictor": sharing.Share(half, "wx", predictor, self.params, PREDICTOR_BITS),
            "label": sharing.Share(
                half, "y", per_party[self.label_owner][-1], self.params, 0
            ),
        }
        if self.cfg.family == "poisson":
            state["factors"] = [
                sharing.Share(half, f"fac{p}", per_party[p][1], self.params, FACTOR_BITS)
                for p in range(self.k)
            ]
        return state

    # ---- phase 2: predictor gradient ------------------------------------

    def _beaver_round(self, t, slot, x, y, state, phase, square=False):
        """One multiplication: exchange mask openings, combine locally."""
        b = len(x.value)
        triple = self.bank.take(t, slot, b, state["half"])
        e_half, f_half = sharing.beaver_mask(x, y, triple)
        if square:
            payload = tp.pack_uint64_array(e_half)
        else:
            payload = tp.pack_uint64_array(e_half) + tp.pack_uint64_array(f_half)
        self.ep.send(
            Envelope(self.pid, state["other"], phase, t, payload, "shares")
        )
        env = self.ep.recv(phase, state["other"], timeout=self.cfg.timeout)
        theirs = tp.unpack_uint64_array(env.payload)
        if square:
            e = fx.ring_add(e_half, theirs, self.params)
            f = e
        else:
            e = fx.ring_add(e_half, theirs[:b], self.params)
            f = fx.ring_add(f_half, theirs[b:], self.params)
        return sharing.beaver_combine(
            triple, e, f, x.scale + y.scale, self.params, f"{x.tag}*{y.tag}"
        )

    def _predictor_gradient_phase(self, t, cp0, cp1, state):
        """Shares of the loss derivative with respect to the predictor."""
        if state is None:
            return None
        label = state["label"]
        if self.cfg.family == "logistic":
            # d = wx/4 - y/2, carried at scale 26: wx_raw - y_raw*2^25, exact
            value = fx.ring_sub(
                state["predictor"].value,
                fx.ring_mul(label.value, np.uint64(1 << 25), self.params),
                self.params,
            )
            return sharing.Share(state["half"], "pg", value, self.params, LOGISTIC_PG_SCALE)

        # Poisson: multiply per-party exp factors pairwise, then subtract y
        acc = state["factors"][0]
        for i, nxt in enumerate(state["factors"][1:]):
            prod = self._beaver_round(t, i, acc, nxt, state, Phase.PGRAD)
            acc = sharing.share_trunc(prod, FACTOR_BITS)
        state["exp_predictor"] = acc
        value = fx.ring_sub(
            acc.value,
            fx.ring_mul(label.value, np.uint64(1 << FACTOR_BITS), self.params),
            self.params,
        )
        return sharing.Share(state["half"], "pg", value, self.params, POISSON_PG_SCALE)

    # ---- phase 3: gradients ---------------------------------------------

    def _feature_codes(self, idx) -> tuple[np.ndarray, np.ndarray]:
        ring_mat = fx.encode(self.block[idx], self.p_feat)
        int_mat = np.rint(self.block[idx] * (1 << FEATURE_BITS)).astype(np.int64)
        return ring_mat, int_mat

    def _masked_product(self, cts, int_mat, pk):
        """Per-column ciphertext products, masked with fresh uniform noise."""
        masks = []
        out = []
        n = int(pk.n)
        for j in range(int_mat.shape[1]):
            u = paillier.weighted_sum(cts, int_mat[:, j], pk)
            r = self.noise.randrange(n)
            masks.append(r)
            out.append(paillier.ct_add_plain(u, (n - r) % n, pk))
        return out, masks

    def _bridge(self, returned: list[int], masks: list[int], n: int) -> np.ndarray:
        """Unmask mod N, center, and reduce into the 64-bit ring."""
        vals = []
        for ret, r in zip(returned, masks):
            v = (ret + r) % n
            if v >= n // 2:
                v -= n
            vals.append(v % 2**64)
        return np.array(vals, dtype=np.uint64)

    def _serve_decrypt(self, t: int, requester: int):
        """Decrypt a masked product vector for its owner and send it back."""
        env = self.ep.recv(Phase.GRAD, requester, timeout=self.cfg.timeout)
        width = self.kp.pk.ct_bytes
        cts = [
            paillier.deserialize_ct(env.payload[i : i + width], self.kp.pk, self.pid)
            for i in range(0, len(env.payload), width)
        ]
        plain = [paillier.decrypt(ct, self.kp) for ct in cts]
        self.ep.send(
            Envelope(
                self.pid,
                requester,
                Phase.GRAD,
                t,
                tp.pack_bigints(plain, self.kp.pk.plain_bytes),
                "plain_scalars",
            )
        )

    def _apply_gradient(self, g_raw: np.ndarray, pg_scale: int, b: int):
        shift = 2.0 ** (FEATURE_BITS + pg_scale)
        g = fx.centered_lift(g_raw, self.params).astype(np.float64) / shift / b
        self.weights = glm.weight_update(self.weights, g, self.cfg.learning_rate)

    def _gradient_phase(self, t, idx, cp0, cp1, pg):
        b = idx.size
        noncps = [p for p in range(self.k) if p not in (cp0, cp1)]
        ring_mat, int_mat = self._feature_codes(idx)
        if pg is not None:
            # computing party
            other = cp1 if self.pid == cp0 else cp0
            if self.cfg.debug_capture:
                self.debug["pg_shares"].setdefault(t, {})[
                    "half%d" % (0 if self.pid == cp0 else 1)
                ] = (pg.value.copy(), pg.scale)
            own_cts = paillier.encrypt_signed(
                pg.value, self.params, self.kp.pk, self.enc_rng, pk_id=self.pid
            )
            enc_payload = b"".join(
                paillier.serialize_ct(ct, self.kp.pk) for ct in own_cts
            )
            for dest in [other] + noncps:
                self.ep.send(
                    Envelope(self.pid, dest, Phase.GRAD, t, enc_payload, "ciphertexts")
                )
            env = self.ep.recv(Phase.GRAD, other, timeout=self.cfg.timeout)
            pk_o = self.peer_pks[other]
            width = pk_o.ct_bytes
            their_cts = [
                paillier.deserialize_ct(env.payload[i : i + width], pk_o, other)
                for i in range(0, len(env.payload), width)
            ]
            masked, masks = self._masked_product(their_cts, int_mat, pk_o)
            self.ep.send(
                Envelope(
                    self.pid,
                    other,
                    Phase.GRAD,
                    t,
                    b"".join(paillier.serialize_ct(ct, pk_o) for ct in masked),
                    "ciphertexts",
                )
            )
            self._serve_decrypt(t, other)
            ret_env = self.ep.recv(Phase.GRAD, other, timeout=self.cfg.timeout)
            returned = tp.unpack_bigints(ret_env.payload, pk_o.plain_bytes)
            bridged = self._bridge(returned, masks, int(pk_o.n))
            local = fx.ring_matvec(ring_mat.T, pg.value, self.params)
            g_raw = fx.ring_add(local, bridged, self.params)
            self._apply_gradient(g_raw, pg.scale, b)
            for p in noncps:
                self._serve_decrypt(t, p)
        else:
            # non-computing party: two ciphertext-vector products, one per CP
            parts = []
            for cp in (cp0, cp1):
                env = self.ep.recv(Phase.GRAD, cp, timeout=self.cfg.timeout)
                pk = self.peer_pks[cp]
                width = pk.ct_bytes
                cts = [
                    paillier.deserialize_ct(env.payload[i : i + width], pk, cp)
                    for i in range(0, len(env.payload), width)
                ]
                masked, masks = self._masked_product(cts, int_mat, pk)
                self.ep.send(
                    Envelope(
                        self.pid,
                        cp,
                        Phase.GRAD,
                        t,
                        b"".join(paillier.serialize_ct(ct, pk) for ct in masked),
                        "ciphertexts",
                    )
                )
                parts.append((cp, masks))
            g_raw = np.zeros(self.block.shape[1], dtype=np.uint64)
            for cp, masks in parts:
                ret_env = self.ep.recv(Phase.GRAD, cp, timeout=self.cfg.timeout)
                pk = self.peer_pks[cp]
                returned = tp.unpack_bigints(ret_env.payload, pk.plain_bytes)
                g_raw = fx.ring_add(
                    g_raw, self._bridge(returned, masks, int(pk.n)), self.params
                )
            self._apply_gradient(g_raw, self.cfg.pg_scale, b)

    # ---- phase 4: loss and stop flag ------------------------------------

    def _loss_scalar(self, t, idx, state) -> int:
        """This CP's additive share of the integer-coded batch loss sum."""
        b = idx.size
        label, predictor = state["label"], state["predictor"]
        # logistic: loss*2^35*b = b*round(ln2*2^35) - sum(ywx_raw)*2^10 + sum(sq_raw)
        # the y*wx openings share one message with the square-term opening
        triple_y = self.bank.take(t, SLOT_LABEL_PRODUCT, b, state["half"])
        ey, fy = sharing.beaver_mask(label, predictor, triple_y)
        parts = [ey, fy]
        if self.cfg.family == "logistic":
            wx16 = sharing.share_trunc(state["predictor"], PREDICTOR_BITS - 16)
            triple_s = self.bank.take(t, SLOT_SQUARE, b, state["half"])
            es, fs = sharing.beaver_mask(wx16, wx16, triple_s)
            parts += [es, fs]
        payload = b"".join(tp.pack_uint64_array(a) for a in parts)
        self.ep.send(
            Envelope(self.pid, state["other"], Phase.LOSS, t, payload, "shares")
        )
        env = self.ep.recv(Phase.LOSS, state["other"], timeout=self.cfg.timeout)
        theirs = tp.unpack_uint64_array(env.payload)
        e_y = fx.ring_add(ey, theirs[:b], self.params)
        f_y = fx.ring_add(fy, theirs[b : 2 * b], self.params)
        ywx = sharing.beaver_combine(
            triple_y, e_y, f_y, 24, self.params, "y*wx"
        )
        total = 0
        if self.cfg.family == "logistic":
            e_s = fx.ring_add(es, theirs[2 * b : 3 * b], self.params)
            f_s = fx.ring_add(fs, theirs[3 * b :], self.params)
            sq = sharing.beaver_combine(triple_s, e_s, f_s, 32, self.params, "wx^2")
            if state["half"] == 0:
                total += b * round(math.log(2.0) * 2**LOGISTIC_LOSS_BITS)
            total -= _ring_sum(ywx.value) << 10
            total += _ring_sum(sq.value)
        else:
            # loss*2^24*b = sum(expwx_raw)*2^8 - sum(ywx_raw); the label
            # factorial constant is added in plaintext by the label owner
            total += _ring_sum(state["exp_predictor"].value) << 8
            total -= _ring_sum(ywx.value)
        return total % 2**64

    def _loss_and_control_phase(self, t, idx, cp0, cp1, state) -> bool:
        c = self.label_owner
        if state is not None:
            scalar = self._loss_scalar(t, idx, state)
            if self.cfg.debug_capture:
                self.debug["loss_shares"].setdefault(t, {})[state["half"]] = scalar
            if self.pid != c:
                self.ep.send(
                    Envelope(
                        self.pid,
                        c,
                        Phase.LOSS,
                        t,
                        tp.pack_uint64_array(np.array([scalar], dtype=np.uint64)),
                        "plain_scalars",
                    )
                )
        if self.pid == c:
            total = scalar if state is not None else 0
            cp_senders = [p for p in (cp0, cp1) if p != c]
            for sender in cp_senders:
                env = self.ep.recv(Phase.LOSS, sender, timeout=self.cfg.timeout)
                total = (total + int(tp.unpack_uint64_array(env.payload)[0])) % 2**64
            bits = (
                LOGISTIC_LOSS_BITS
                if self.cfg.family == "logistic"
                else POISSON_LOSS_BITS
            )
            loss = _centered(total) / 2.0**bits / idx.size
            if self.cfg.family == "poisson":
                loss += float(np.mean(glm.log_factorial(self.labels[idx])))
            self.losses.append(loss)
            flag = (
                self.prev_loss is not None
                and abs(loss - self.prev_loss) <= self.cfg.tolerance
            )
            self.prev_loss = loss
            for p in range(self.k):
                if p != c:
                    self.ep.send(
                        Envelope(
                            self.pid,
                            p,
                            Phase.CONTROL,
                            t,
                            b"\x01" if flag else b"\x00",
                            "flag",
                        )
                    )
            return flag
        env = self.ep.recv(Phase.CONTROL, c, timeout=self.cfg.timeout)
        return env.payload == b"\x01"


def _build_report(cfg: TrainConfig, workers, ledger, wall_s, leakage) -> dict:
    c_worker = next(w for w in workers if w.labels is not None)
    return {
        "config": {
            "family": cfg.family,
            "learning_rate": cfg.learning_rate,
            "max_iterations": cfg.max_iterations,
            "tolerance": cfg.tolerance,
            "batch_size": cfg.batch_size,
            "key_bits": cfg.key_bits,
            "cp_policy": cfg.cp_policy,
            "seed": cfg.seed,
            "predictor_clip": cfg.clip,
            "ring_bits": cfg.ring.q_bits,
            "frac_bits": cfg.ring.frac_bits,
            "parties": len(workers),
        },
        "iterations": c_worker.iterations,
        "stopped_early": c_worker.stopped_early,
        "losses": list(c_worker.losses),
        "weights": [w.weights.tolist() for w in workers],
        "traffic": ledger.report(),
        "leakage": leakage,
        "wall_time_s": wall_s,
    }


def train(ds: VerticalDataset, config: TrainConfig, endpoints=None) -> TrainOutcome:
    """Run the full secure loop over every party of a vertical dataset.

    Parties execute on concurrent threads and exchange data only through
    transport endpoints; pass prebuilt endpoints (e.g. TCP loopback ones)
    to override the default in-memory hub.
    """
    k = ds.n_parties
    if k < 2:
        raise ValueError("need at least two parties")
    m = ds.n_rows
    b = min(config.batch_size, m)

    widths = ds.widths()
    cp0, cp1 = select_cps(k, "fixed", 0, config.seed, ds.label_owner)
    leakage = []
    for adversary, victim in ((cp0, cp1), (cp1, cp0)):
        verdict = leakage_guard(
            b, widths[adversary], widths[victim], config.max_iterations
        )
        leakage.append(
            {
                "adversary": adversary,
                "victim": victim,
                "safe": verdict.safe,
                "reason": verdict.reason,
            }
        )

    keypairs = {
        p: paillier.keygen(
            config.key_bits, _party_rng(config.seed, _SEED_KEYGEN, p), pk_id=p
        )
        for p in range(k)
    }
    public_keys = {p: kp.pk for p, kp in keypairs.items()}

    if endpoints is None:
        hub = tp.MemoryHub(
            range(k), tp.TrafficLedger(keep_payloads=config.keep_payloads)
        )
        endpoints = [hub.endpoint(p) for p in range(k)]
    ledger = endpoints[0].ledger
    bank = TripleBank(config.ring, config.seed)

    workers = [
        _Worker(
            p,
            k,
            ds.blocks[p],
            ds.labels if p == ds.label_owner else None,
            ds.label_owner,
            config,
            endpoints[p],
            bank,
            keypairs[p],
            public_keys,
        )
        for p in range(k)
    ]
    started = time.perf_counter()
    threads = [threading.Thread(target=w.run, name=f"party-{w.pid}") for w in workers]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    wall_s = time.perf_counter() - started
    for w in workers:
        if w.error is not None:
            raise RuntimeError(f"party {w.pid} failed") from w.error

    c_worker = workers[ds.label_owner]
    debug: dict = {}
    if config.debug_capture:
        debug = _merge_debug(workers, config)
    report = _build_report(config, workers, ledger, wall_s, leakage)
    return TrainOutcome(
        [w.weights for w in workers],
        list(c_worker.losses),
        c_worker.iterations,
        c_worker.stopped_early,
        ledger,
        report,
        debug,
    )


def _merge_debug(workers, config: TrainConfig) -> dict:
    """Reconstruct per-iteration secret values from captured CP shares."""
    pg: dict[int, tuple] = {}
    for w in workers:
        for t, halves in w.debug["pg_shares"].items():
            pg.setdefault(t, {}).update(halves)
    out_pg = {}
    for t, halves in pg.items():
        if len(halves) == 2:
            (v0, s0), (v1, _) = halves["half0"], halves["half1"]
            raw = fx.ring_add(v0, v1, config.ring)
            out_pg[t] = fx.centered_lift(raw, config.ring).astype(np.float64) / 2.0**s0
    return {"pg": out_pg}

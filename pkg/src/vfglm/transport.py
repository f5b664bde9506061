"""Message delivery between parties with exact byte accounting.

Two interchangeable backends speak the same wire format: an in-process hub
for simulation and a TCP loopback endpoint for socket runs.  The ledger
counts payload and framing overhead separately so communication totals can
be reported both ways.
"""

from __future__ import annotations

import socket
import struct
import threading
from collections import deque
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

# 1B phase, 4B iteration, 2B sender, 2B receiver, 4B payload length
HEADER = struct.Struct(">BIHHI")
HEADER_BYTES = HEADER.size

MIB = float(2**20)


class Phase(IntEnum):
    """Protocol stages in per-iteration send order."""

    SHARE = 1
    PGRAD = 2
    GRAD = 3
    LOSS = 4
    CONTROL = 5


@dataclass(frozen=True)
class Envelope:
    sender: int
    receiver: int
    phase: Phase
    iteration: int
    payload: bytes
    # audit metadata, not serialized: shares / ciphertexts / plain_scalars / flag
    kind: str = ""

    def wire_bytes(self) -> int:
        return HEADER_BYTES + len(self.payload)


def encode_envelope(env: Envelope) -> bytes:
    return (
        HEADER.pack(
            int(env.phase), env.iteration, env.sender, env.receiver, len(env.payload)
        )
        + env.payload
    )


def decode_envelope(buf: bytes) -> Envelope:
    phase, iteration, sender, receiver, length = HEADER.unpack(buf[:HEADER_BYTES])
    payload = buf[HEADER_BYTES : HEADER_BYTES + length]
    if len(payload) != length:
        raise ValueError("truncated payload")
    return Envelope(sender, receiver, Phase(phase), iteration, payload)


def pack_uint64_array(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype=np.uint64).astype(">u8").tobytes()


def unpack_uint64_array(buf: bytes) -> np.ndarray:
    return np.frombuffer(buf, dtype=">u8").astype(np.uint64)


def pack_bigints(values: list[int], width: int) -> bytes:
    """Fixed-width big-endian integers; width in bytes per element."""
    out = bytearray()
    for v in values:
        out += int(v).to_bytes(width, "big")
    return bytes(out)


def unpack_bigints(buf: bytes, width: int) -> list[int]:
    if len(buf) % width:
        raise ValueError("buffer length not a multiple of element width")
    return [
        int.from_bytes(buf[i : i + width], "big") for i in range(0, len(buf), width)
    ]


@dataclass
class LinkStats:
    messages: int = 0
    payload_bytes: int = 0
    overhead_bytes: int = 0

    def add(self, payload_len: int):
        self.messages += 1
        self.payload_bytes += payload_len
        self.overhead_bytes += HEADER_BYTES


class TrafficLedger:
    """Append-only tally of every sent envelope, grouped three ways."""

    def __init__(self, keep_payloads: bool = False):
        self._lock = threading.Lock()
        self._by_link: dict[tuple[int, int], LinkStats] = {}
        self._by_phase: dict[Phase, LinkStats] = {}
        self._by_iteration: dict[int, int] = {}
        self._messages = 0
        self._payload_bytes = 0
        self.keep_payloads = keep_payloads
        self.envelopes: list[Envelope] = []

    def record(self, env: Envelope):
        n = len(env.payload)
        with self._lock:
            self._by_link.setdefault((env.sender, env.receiver), LinkStats()).add(n)
            self._by_phase.setdefault(env.phase, LinkStats()).add(n)
            self._by_iteration[env.iteration] = (
                self._by_iteration.get(env.iteration, 0) + env.wire_bytes()
            )
            self._messages += 1
            self._payload_bytes += n
            if self.keep_payloads:
                self.envelopes.append(env)

    @property
    def message_count(self) -> int:
        return self._messages

    @property
    def total_payload_bytes(self) -> int:
        return self._payload_bytes

    @property
    def total_overhead_bytes(self) -> int:
        return self._messages * HEADER_BYTES

    @property
    def total_bytes(self) -> int:
        return self.total_payload_bytes + self.total_overhead_bytes

    def link_stats(self, sender: int, receiver: int) -> LinkStats:
        return self._by_link.get((sender, receiver), LinkStats())

    def phase_stats(self, phase: Phase) -> LinkStats:
        return self._by_phase.get(phase, LinkStats())

    def iteration_bytes(self, iteration: int) -> int:
        return self._by_iteration.get(iteration, 0)

    def report(self) -> dict:
        with self._lock:
            per_link = {
                f"{s}->{r}": {
                    "messages": st_.messages,
                    "payload_bytes": st_.payload_bytes,
                    "overhead_bytes": st_.overhead_bytes,
                }
                for (s, r), st_ in sorted(self._by_link.items())
            }
            per_phase = {
                ph.name: {
                    "messages": st_.messages,
                    "payload_bytes": st_.payload_bytes,
                    "overhead_bytes": st_.overhead_bytes,
                }
                for ph, st_ in sorted(self._by_phase.items())
            }
            per_iteration = [
                [it, b] for it, b in sorted(self._by_iteration.items())
            ]
            return {
                "messages": self._messages,
                "payload_bytes": self._payload_bytes,
                "overhead_bytes": self._messages * HEADER_BYTES,
                "total_bytes": self._payload_bytes + self._messages * HEADER_BYTES,
                "payload_mib": self._payload_bytes / MIB,
                "total_mib": (self._payload_bytes + self._messages * HEADER_BYTES)
                / MIB,
                "per_link": per_link,
                "per_phase": per_phase,
                "per_iteration": per_iteration,
            }


class _OrderGuard:
    """Rejects per-link regressions in (iteration, phase) send order."""

    def __init__(self):
        self._last: dict[tuple[int, int], tuple[int, int]] = {}
        self._lock = threading.Lock()

    def check(self, env: Envelope):
        key = (env.sender, env.receiver)
        mark = (env.iteration, int(env.phase))
        with self._lock:
            prev = self._last.get(key)
            if prev is not None and mark < prev:
                raise ValueError(
                    f"out-of-order send on link {key}: {mark} after {prev}"
                )
            self._last[key] = mark


class MemoryHub:
    """Shared in-process message fabric; one endpoint per party."""

    def __init__(self, party_ids, ledger: TrafficLedger | None = None):
        self.parties = set(party_ids)
        self.ledger = ledger if ledger is not None else TrafficLedger()
        self._cond = threading.Condition()
        self._queues: dict[tuple[int, int, Phase], deque[Envelope]] = {}
        self._guard = _OrderGuard()

    def endpoint(self, party_id: int) -> "MemoryEndpoint":
        if party_id not in self.parties:
            raise ValueError(f"unknown party {party_id}")
        return MemoryEndpoint(self, party_id)

    def send(self, env: Envelope):
        if env.sender not in self.parties or env.receiver not in self.parties:
            raise ValueError(f"unknown party on link {env.sender}->{env.receiver}")
        self._guard.check(env)
        self.ledger.record(env)
        key = (env.sender, env.receiver, env.phase)
        with self._cond:
            self._queues.setdefault(key, deque()).append(env)
            self._cond.notify_all()

    def recv(
        self, receiver: int, phase: Phase, sender: int, timeout: float
    ) -> Envelope:
        key = (sender, receiver, phase)
        with self._cond:
            ok = self._cond.wait_for(
                lambda: self._queues.get(key), timeout=timeout
            )
            if not ok:
                raise TimeoutError(
                    f"no {phase.name} message from {sender} to {receiver} "
                    f"within {timeout}s"
                )
            return self._queues[key].popleft()


class MemoryEndpoint:
    def __init__(self, hub: MemoryHub, party_id: int):
        self._hub = hub
        self.party_id = party_id
        self.ledger = hub.ledger

    def send(self, env: Envelope):
        if env.sender != self.party_id:
            raise ValueError("endpoint can only send as its own party")
        self._hub.send(env)

    def recv(self, phase: Phase, sender: int, timeout: float = 60.0) -> Envelope:
        return self._hub.recv(self.party_id, phase, sender, timeout)

    def close(self):
        pass


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


class TcpEndpoint:
    """One party's socket endpoint: a listener plus cached outbound links.

    The ledger records on send only, so passing one shared ledger to every
    loopback endpoint reproduces the in-memory accounting exactly.
    """

    def __init__(
        self,
        party_id: int,
        ledger: TrafficLedger | None = None,
        bind_host: str = "127.0.0.1",
    ):
        self.party_id = party_id
        self.ledger = ledger if ledger is not None else TrafficLedger()
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((bind_host, 0))
        self._listener.listen()
        self.address = self._listener.getsockname()
        self._peers: dict[int, tuple[str, int]] = {}
        self._out: dict[int, socket.socket] = {}
        self._out_lock = threading.Lock()
        self._cond = threading.Condition()
        self._queues: dict[tuple[int, Phase], deque[Envelope]] = {}
        self._guard = _OrderGuard()
        self._closing = False
        self._threads: list[threading.Thread] = []
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)

    def set_peers(self, addresses: dict[int, tuple[str, int]]):
        self._peers = dict(addresses)

    def _accept_loop(self):
        while not self._closing:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            t = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _read_loop(self, conn: socket.socket):
        with conn:
            while True:
                header = _read_exact(conn, HEADER_BYTES)
                if header is None:
                    return
                _, _, _, _, length = HEADER.unpack(header)
                payload = _read_exact(conn, length)
                if payload is None:
                    return
                env = decode_envelope(header + payload)
                with self._cond:
                    self._queues.setdefault(
                        (env.sender, env.phase), deque()
                    ).append(env)
                    self._cond.notify_all()

    def send(self, env: Envelope):
        if env.sender != self.party_id:
            raise ValueError("endpoint can only send as its own party")
        if env.receiver not in self._peers:
            raise ValueError(f"unknown party {env.receiver}")
        self._guard.check(env)
        frame = encode_envelope(env)
        with self._out_lock:
            sock = self._out.get(env.receiver)
            if sock is None:
                sock = socket.create_connection(self._peers[env.receiver])
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self._out[env.receiver] = sock
            sock.sendall(frame)
        self.ledger.record(env)

    def recv(self, phase: Phase, sender: int, timeout: float = 60.0) -> Envelope:
        key = (sender, phase)
        with self._cond:
            ok = self._cond.wait_for(lambda: self._queues.get(key), timeout=timeout)
            if not ok:
                raise TimeoutError(
                    f"no {phase.name} message from {sender} to {self.party_id} "
                    f"within {timeout}s"
                )
            return self._queues[key].popleft()

    def close(self):
        self._closing = True
        try:
            self._listener.close()
        except OSError:
            pass
        with self._out_lock:
            for sock in self._out.values():
                try:
                    sock.close()
                except OSError:
                    pass
            self._out.clear()

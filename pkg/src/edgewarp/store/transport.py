"""Ways for a source store to reach a peer store.

A transport carries request frames to one destination and hands back the
reply frames in send order.  Frames are numbered per transport so a session
can recognise (and drop) replies that belong to a session it superseded.
"""

from __future__ import annotations

import collections
import socket
import socketserver
import threading
from typing import TYPE_CHECKING, Callable, Deque, Optional

from . import wire
from .clock import SimClock

if TYPE_CHECKING:
    from .store import EdgeStore


class PeerUnreachable(ConnectionError):
    code = "PEER_UNREACHABLE"


class Transport:
    """Base class; subclasses implement ``_send_raw`` and ``_recv_raw``."""

    #: max frames outstanding before the sender waits for replies; None = unbounded
    window: Optional[int] = None

    def __init__(self, name: str) -> None:
        self.name = name
        self._sent = 0
        self._received = 0
        self.lock = threading.RLock()

    @property
    def outstanding(self) -> int:
        return self._sent - self._received

    def send(self, frame: bytes) -> int:
        """Send one frame; returns its index on this transport."""
        self._send_raw(frame)
        idx = self._sent
        self._sent += 1
        return idx

    def recv(self) -> tuple[int, bytes]:
        """Next reply and the index of the frame it answers."""
        if self._received >= self._sent:
            raise RuntimeError("recv with no frame outstanding")
        reply = self._recv_raw()
        idx = self._received
        self._received += 1
        return idx, reply

    def _send_raw(self, frame: bytes) -> None:
        raise NotImplementedError

    def _recv_raw(self) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LocalPeer(Transport):
    """In-process peer: frames are handed straight to ``target.handle_frame``.

    ``up`` toggles reachability; ``tamper`` may rewrite outgoing frames, which
    the tests use to inject bit flips.
    """

    def __init__(self, target: "EdgeStore", name: Optional[str] = None,
                 tamper: Optional[Callable[[bytes], bytes]] = None) -> None:
        super().__init__(name or target.name)
        self.target = target
        self.up = True
        self.tamper = tamper
        self._replies: Deque[bytes] = collections.deque()

    def _send_raw(self, frame: bytes) -> None:
        if not self.up:
            raise PeerUnreachable(self.name)
        if self.tamper is not None:
            frame = self.tamper(frame)
        self._replies.append(self.target.handle_frame(frame))

    def _recv_raw(self) -> bytes:
        if not self.up:
            raise PeerUnreachable(self.name)
        return self._replies.popleft()


class Link:
    """One direction of a throttled link: serialization at ``bandwidth_bps``
    followed by a fixed one-way ``latency_ms``.  Frames queue behind each
    other (token-bucket with a one-frame bucket)."""

    def __init__(self, bandwidth_bps: float, latency_ms: float) -> None:
        if bandwidth_bps <= 0:
            raise ValueError("bandwidth must be positive")
        if latency_ms < 0:
            raise ValueError("latency must be non-negative")
        self.bandwidth_bps = float(bandwidth_bps)
        self.latency_ms = float(latency_ms)
        self.busy_until = 0.0
        self.bytes_sent = 0

    def tx_ms(self, nbytes: int) -> float:
        return nbytes * 8000.0 / self.bandwidth_bps

    def transmit(self, nbytes: int, now: float) -> float:
        """Queue ``nbytes`` at ``now``; returns the arrival time at the far end."""
        start = max(now, self.busy_until)
        self.busy_until = start + self.tx_ms(nbytes)
        self.bytes_sent += nbytes
        return self.busy_until + self.latency_ms


class SimPeer(Transport):
    """Peer reached over a simulated link on a :class:`SimClock`.

    The target applies each frame at its arrival time; the reply travels back
    over the reverse link.  ``recv`` advances the shared clock to the reply's
    arrival, which is how synchronous calls such as a blocking sync consume
    simulated time.
    """

    def __init__(self, target: "EdgeStore", clock: SimClock, bandwidth_bps: float = 1e9,
                 latency_ms: float = 1.0, name: Optional[str] = None) -> None:
        super().__init__(name or target.name)
        self.target = target
        self.clock = clock
        self.forward = Link(bandwidth_bps, latency_ms)
        self.reverse = Link(bandwidth_bps, latency_ms)
        self.up = True
        self._replies: Deque[tuple[float, bytes]] = collections.deque()

    def _send_raw(self, frame: bytes) -> None:
        if not self.up:
            raise PeerUnreachable(self.name)
        arrival = self.forward.transmit(len(frame), self.clock.now)
        reply = self.target.handle_frame(frame, now=arrival)
        self._replies.append((self.reverse.transmit(len(reply), arrival), reply))

    def next_reply_time(self) -> Optional[float]:
        return self._replies[0][0] if self._replies else None

    def _recv_raw(self) -> bytes:
        t, reply = self._replies.popleft()
        self.clock.advance_to(t)
        return reply

    @property
    def link_free_at(self) -> float:
        return self.forward.busy_until


class TcpPeer(Transport):
    """Peer reached through a :class:`StoreServer` over TCP."""

    window = 64

    def __init__(self, host: str, port: int, name: Optional[str] = None, timeout: float = 10.0) -> None:
        super().__init__(name or f"{host}:{port}")
        self.addr = (host, port)
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None
        self._rfile = None

    def _connect(self) -> None:
        try:
            self._sock = socket.create_connection(self.addr, timeout=self.timeout)
        except OSError as exc:
            raise PeerUnreachable(f"{self.name}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._rfile = self._sock.makefile("rb")

    def _send_raw(self, frame: bytes) -> None:
        if self._sock is None:
            self._connect()
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            self.close()
            raise PeerUnreachable(f"{self.name}: {exc}") from exc

    def _recv_raw(self) -> bytes:
        try:
            frame = wire.read_frame(self._rfile)
        except OSError as exc:
            self.close()
            raise PeerUnreachable(f"{self.name}: {exc}") from exc
        if frame is None:
            self.close()
            raise PeerUnreachable(f"{self.name}: connection closed")
        return frame

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._rfile.close()
                self._sock.close()
            finally:
                self._sock = None
                self._rfile = None
                # replies for frames in flight are gone with the connection
                self._received = self._sent


class _FrameHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        store = self.server.store  # type: ignore[attr-defined]
        while True:
            try:
                frame = wire.read_frame(self.rfile)
            except wire.FrameError:
                return
            if frame is None:
                return
            self.wfile.write(store.handle_frame(frame))
            self.wfile.flush()


class StoreServer(socketserver.ThreadingTCPServer):
    """Serves the sync protocol for ``store`` on a TCP port (0 = ephemeral)."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, store: "EdgeStore", host: str = "127.0.0.1", port: int = 0) -> None:
        super().__init__((host, port), _FrameHandler)
        self.store = store
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start(self) -> "StoreServer":
        self._thread = threading.Thread(target=self.serve_forever, name="store-server", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()

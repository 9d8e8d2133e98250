"""Per-user key-value store with sync meta-state and two-step migration.

Every key carries first/last update time, an update count and the time it
was last synced to a peer.  From these the store derives each key's update
rate and whether it changed since its last sync.  A background session
pushes dirty keys, least frequently updated first, while the app keeps
running; a blocking session freezes the user, pushes whatever is still
dirty, and commits on the peer.

Time comparisons use a store-wide write sequence alongside the millisecond
timestamps, so a write landing in the same millisecond as a sync snapshot
(but after it) still counts as dirty.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Optional

from . import wire
from .clock import WallClock
from .transport import PeerUnreachable, Transport

log = logging.getLogger(__name__)

NEVER = None
MAX_RETRIES = 3


class StoreError(Exception):
    code = "STORE_ERROR"


class NotFound(StoreError, KeyError):
    code = "NOT_FOUND"

    def __str__(self) -> str:
        return Exception.__str__(self)


class Frozen(StoreError):
    code = "FROZEN"


class SyncError(StoreError):
    code = "SYNC_ERROR"


@dataclass
class StoredObject:
    user_id: str
    key: bytes
    value: bytes
    version: int


@dataclass
class KeyMeta:
    first_update_time: float
    last_update_time: float
    updates_count: int
    last_sync_time: Optional[float] = NEVER
    update_seq: int = 0
    sync_seq: int = -1
    sync_dest: Optional[str] = None
    # sync state from before the current destination took over, for rollback
    saved_sync: Optional[tuple[Optional[float], int, Optional[str]]] = field(default=None, repr=False)

    def update_rate(self) -> float:
        """Average updates per second; a once-written key has rate 0."""
        if self.updates_count <= 1:
            return 0.0
        elapsed_ms = max(self.last_update_time - self.first_update_time, 1.0)
        return (self.updates_count - 1) * 1000.0 / elapsed_ms

    def is_dirty(self, dest: Optional[str] = None) -> bool:
        if self.update_seq > self.sync_seq:
            return True
        return dest is not None and self.sync_dest != dest


@dataclass
class _Tomb:
    t_ms: float
    seq: int
    version: int
    sync_seq: int = -1
    sync_dest: Optional[str] = None
    saved_sync: Optional[tuple[Optional[float], int, Optional[str]]] = None

    def is_dirty(self, dest: Optional[str] = None) -> bool:
        if self.seq > self.sync_seq:
            return True
        return dest is not None and self.sync_dest != dest


@dataclass
class SyncReport:
    phase: str
    keys_transferred: int = 0
    tombstones_transferred: int = 0
    value_bytes: int = 0
    overhead_bytes: int = 0
    wall_time_ms: float = 0.0
    retries: int = 0
    cancelled: bool = False
    error: Optional[str] = None

    @property
    def bytes_transferred(self) -> int:
        return self.value_bytes + self.overhead_bytes


@dataclass
class BlockingReport:
    blocking_ms: float
    residual_keys: int
    retained: bool
    sync: SyncReport


class _Namespace:
    __slots__ = ("objects", "meta", "tombs", "frozen", "lock", "background")

    def __init__(self) -> None:
        self.objects: dict[bytes, StoredObject] = {}
        self.meta: dict[bytes, KeyMeta] = {}
        self.tombs: dict[bytes, _Tomb] = {}
        self.frozen = False
        self.lock = threading.RLock()
        self.background: Optional[BackgroundSync] = None


@dataclass
class _Pending:
    kind: wire.FrameType
    frame: bytes
    key: bytes = b""
    sync_time: float = 0.0
    sync_seq: int = 0
    value_len: int = 0
    retries: int = 0


class _Incoming:
    __slots__ = ("session_id", "staged")

    def __init__(self) -> None:
        self.session_id = 0
        # key -> (value, version, is_tombstone)
        self.staged: dict[bytes, tuple[Optional[bytes], int, bool]] = {}


class EdgeStore:
    """In-memory store for per-user state, able to migrate a user to a peer.

    ``clock`` returns milliseconds; pass a :class:`~edgewarp.store.clock.SimClock`
    for deterministic runs.  The same instance acts as a sync source (through
    :meth:`background_sync` / :meth:`blocking_sync`) and as a sync target
    (through :meth:`handle_frame`).
    """

    def __init__(self, name: str = "store", clock: Optional[Callable[[], float]] = None) -> None:
        self.name = name
        self.clock = clock or WallClock()
        self._ns: dict[str, _Namespace] = {}
        self._ns_lock = threading.Lock()
        self._seq = itertools.count(1)
        self._session_ids = itertools.count(1)
        self._incoming: dict[str, _Incoming] = {}
        self._rx_lock = threading.Lock()

    # -- namespaces -------------------------------------------------------

    def _namespace(self, user_id: str, create: bool = False) -> _Namespace:
        ns = self._ns.get(user_id)
        if ns is None:
            if not create:
                raise NotFound(f"unknown user {user_id!r}")
            with self._ns_lock:
                ns = self._ns.setdefault(user_id, _Namespace())
        return ns

    def users(self) -> list[str]:
        return sorted(u for u, ns in self._ns.items() if ns.objects)

    def keys(self, user_id: str) -> list[bytes]:
        ns = self._ns.get(user_id)
        if ns is None:
            return []
        with ns.lock:
            return sorted(ns.objects)

    def is_frozen(self, user_id: str) -> bool:
        ns = self._ns.get(user_id)
        return ns is not None and ns.frozen

    # -- client operations ------------------------------------------------

    def put(self, user_id: str, key: bytes, value: bytes, now: Optional[float] = None) -> int:
        if not key:
            raise ValueError("key must be non-empty")
        ns = self._namespace(user_id, create=True)
        with ns.lock:
            if ns.frozen:
                raise Frozen(f"user {user_id!r} is frozen for migration")
            t = self.clock() if now is None else now
            seq = next(self._seq)
            obj = ns.objects.get(key)
            meta = ns.meta.get(key)
            if obj is None:
                tomb = ns.tombs.pop(key, None)
                version = tomb.version + 1 if tomb else 1
                ns.objects[key] = StoredObject(user_id, key, bytes(value), version)
                ns.meta[key] = KeyMeta(t, t, 1, update_seq=seq)
                return version
            obj.value = bytes(value)
            obj.version += 1
            meta.last_update_time = max(meta.last_update_time, t)
            meta.updates_count += 1
            meta.update_seq = seq
            return obj.version

    def get(self, user_id: str, key: bytes) -> bytes:
        ns = self._namespace(user_id)
        with ns.lock:
            obj = ns.objects.get(key)
            if obj is None:
                raise NotFound(f"{user_id!r}/{key!r}")
            return obj.value

    def get_object(self, user_id: str, key: bytes) -> StoredObject:
        ns = self._namespace(user_id)
        with ns.lock:
            obj = ns.objects.get(key)
            if obj is None:
                raise NotFound(f"{user_id!r}/{key!r}")
            return replace(obj)

    def delete(self, user_id: str, key: bytes, now: Optional[float] = None) -> None:
        ns = self._namespace(user_id)
        with ns.lock:
            if ns.frozen:
                raise Frozen(f"user {user_id!r} is frozen for migration")
            obj = ns.objects.pop(key, None)
            if obj is None:
                raise NotFound(f"{user_id!r}/{key!r}")
            del ns.meta[key]
            t = self.clock() if now is None else now
            ns.tombs[key] = _Tomb(t, next(self._seq), obj.version)

    def meta(self, user_id: str, key: bytes) -> KeyMeta:
        ns = self._namespace(user_id)
        with ns.lock:
            m = ns.meta.get(key)
            if m is None:
                raise NotFound(f"{user_id!r}/{key!r}")
            return replace(m)

    def update_rate(self, user_id: str, key: bytes) -> float:
        return self.meta(user_id, key).update_rate()

    def dirty_keys(self, user_id: str, dest: Optional[str] = None) -> list[bytes]:
        """Keys changed since their last sync, lowest update rate first.

        With ``dest`` given, keys last synced to a different destination also
        count as dirty.
        """
        ns = self._namespace(user_id)
        with ns.lock:
            return self._dirty_locked(ns, dest)

    @staticmethod
    def _dirty_locked(ns: _Namespace, dest: Optional[str]) -> list[bytes]:
        dirty = [(m.update_rate(), k) for k, m in ns.meta.items() if m.is_dirty(dest)]
        dirty.sort()
        return [k for _, k in dirty]

    def pending_tombstones(self, user_id: str, dest: Optional[str] = None) -> list[bytes]:
        ns = self._namespace(user_id)
        with ns.lock:
            return sorted(k for k, t in ns.tombs.items() if t.is_dirty(dest))

    def checksum(self, user_id: str) -> str:
        """SHA-256 over the user's sorted (key, value) pairs."""
        h = hashlib.sha256()
        ns = self._ns.get(user_id)
        if ns is not None:
            with ns.lock:
                items = sorted((k, o.value) for k, o in ns.objects.items())
            for k, v in items:
                h.update(len(k).to_bytes(4, "big"))
                h.update(k)
                h.update(len(v).to_bytes(8, "big"))
                h.update(v)
        return h.hexdigest()

    def state_bytes(self, user_id: str) -> int:
        ns = self._ns.get(user_id)
        if ns is None:
            return 0
        with ns.lock:
            return sum(len(o.value) for o in ns.objects.values())

    # -- sync bookkeeping -------------------------------------------------

    def _snapshot(self, ns: _Namespace, key: bytes) -> tuple[float, int, StoredObject]:
        # caller holds ns.lock: this is the only window where writes to the key wait
        return self.clock(), next(self._seq), replace(ns.objects[key])

    def _mark_synced(self, user_id: str, p: _Pending, dest: str) -> None:
        ns = self._ns.get(user_id)
        if ns is None:
            return
        with ns.lock:
            rec = ns.meta.get(p.key) if p.kind == wire.FrameType.OBJECT else ns.tombs.get(p.key)
            if rec is None:
                return
            if rec.sync_dest != dest:
                last = rec.last_sync_time if isinstance(rec, KeyMeta) else None
                rec.saved_sync = (last, rec.sync_seq, rec.sync_dest)
                rec.sync_dest = dest
                rec.sync_seq = p.sync_seq
            elif p.sync_seq > rec.sync_seq:
                rec.sync_seq = p.sync_seq
            else:
                return
            if isinstance(rec, KeyMeta):
                rec.last_sync_time = p.sync_time

    def _rollback(self, ns: _Namespace, dest: str) -> int:
        n = 0
        with ns.lock:
            for rec in itertools.chain(ns.meta.values(), ns.tombs.values()):
                if rec.sync_dest == dest:
                    last, seq, prev = rec.saved_sync or (NEVER, -1, None)
                    if isinstance(rec, KeyMeta):
                        rec.last_sync_time = last
                    rec.sync_seq, rec.sync_dest, rec.saved_sync = seq, prev, None
                    n += 1
        return n

    # -- migration API ----------------------------------------------------

    def open_background(self, user_id: str, dest: Transport) -> "BackgroundSession":
        """Create a background session without running it (for simulators)."""
        ns = self._namespace(user_id)
        with ns.lock:
            if ns.frozen:
                raise Frozen(f"blocking sync in progress for {user_id!r}")
            self._supersede(ns)
            session = BackgroundSession(self, user_id, dest)
            ns.background = BackgroundSync(session, None)
        return session

    def background_sync(self, user_id: str, dest: Transport, inline: bool = False) -> "BackgroundSync":
        """Start pushing the user's dirty keys to ``dest``.

        Runs on its own thread unless ``inline``; the returned handle yields the
        :class:`SyncReport` once the dirty set is empty or the session is
        cancelled by a blocking sync.
        """
        session = self.open_background(user_id, dest)
        handle = self._ns[user_id].background
        if inline:
            handle._run()
        else:
            handle.thread = threading.Thread(target=handle._run, name=f"bgsync-{user_id}", daemon=True)
            handle.thread.start()
        return handle

    def _supersede(self, ns: _Namespace) -> None:
        bg = ns.background
        if bg is not None:
            bg.session.cancel()
            if bg.thread is not None and bg.thread is not threading.current_thread():
                bg.thread.join()
            ns.background = None

    def blocking_sync(self, user_id: str, dest: Transport, retain: bool = False,
                      callback: Optional[Callable[[BlockingReport], None]] = None) -> BlockingReport:
        """Freeze the user, push everything still dirty, commit on ``dest``.

        ``callback`` fires once the peer acknowledged the commit; the elapsed
        time from this call to that point is ``blocking_ms``.  Without
        ``retain`` the user's state is dropped locally afterwards.
        """
        t0 = self.clock()
        ns = self._namespace(user_id, create=True)
        with ns.lock:
            if ns.frozen:
                raise Frozen(f"blocking sync already running for {user_id!r}")
            ns.frozen = True
        try:
            self._supersede(ns)
            session = BlockingSession(self, user_id, dest)
            session.run()
        except BaseException:
            with ns.lock:
                ns.frozen = False
            raise
        report = BlockingReport(self.clock() - t0, session.residual_keys, retain, session.report)
        if callback is not None:
            callback(report)
        with ns.lock:
            if not retain:
                ns.objects.clear()
                ns.meta.clear()
                ns.tombs.clear()
            ns.frozen = False
        return report

    def abort_sync(self, user_id: str, dest: Transport, wait: bool = True) -> int:
        """Discard state pushed to a wrongly predicted ``dest``.

        Cancels a background session bound for it, tells the peer to drop what
        it staged, and rolls back the sync times recorded for that destination.
        Returns the number of keys rolled back.  The peer being unreachable is
        tolerated: its staged state can never be committed without us.  With
        ``wait=False`` the ABORT is sent but its reply is left on the transport
        for the caller to drain.
        """
        ns = self._namespace(user_id)
        bg = ns.background
        if bg is not None and bg.session.dest.name == dest.name:
            self._supersede(ns)
        try:
            with dest.lock:
                dest.send(wire.encode(wire.Abort(user_id, 0)))
                while wait and dest.outstanding:
                    dest.recv()
        except PeerUnreachable:
            log.warning("abort to %s for %s not delivered", dest.name, user_id)
        return self._rollback(ns, dest.name)

    # -- target side ------------------------------------------------------

    def handle_frame(self, frame: bytes, now: Optional[float] = None) -> bytes:
        """Process one incoming sync frame and return the encoded reply."""
        t = self.clock() if now is None else now
        try:
            ftype, payload, rest = wire.split_frame(frame)
            if rest:
                raise wire.FrameError("trailing bytes")
            msg = wire.decode_payload(ftype, payload)
        except wire.ChecksumMismatch as exc:
            return wire.encode(wire.Ack(exc.frame_type, wire.AckStatus.CHECKSUM_MISMATCH, 0, ""))
        except (wire.FrameError, ValueError, UnicodeDecodeError):
            return wire.encode(wire.Ack(0, wire.AckStatus.ERROR, 0, ""))
        with self._rx_lock:
            inc = self._incoming.get(getattr(msg, "user_id", ""))
            if isinstance(msg, wire.OpenSession):
                inc = self._incoming.setdefault(msg.user_id, _Incoming())
                inc.session_id = msg.session_id
            elif isinstance(msg, wire.ObjectFrame):
                inc = inc or self._incoming.setdefault(msg.user_id, _Incoming())
                inc.staged[msg.key] = (msg.value, msg.version, False)
                return wire.encode(wire.Ack(ftype, wire.AckStatus.OK, inc.session_id, msg.user_id,
                                            msg.key, msg.version))
            elif isinstance(msg, wire.Tombstone):
                inc = inc or self._incoming.setdefault(msg.user_id, _Incoming())
                inc.staged[msg.key] = (None, 0, True)
                return wire.encode(wire.Ack(ftype, wire.AckStatus.OK, inc.session_id, msg.user_id, msg.key))
            elif isinstance(msg, wire.Commit):
                staged = self._incoming.pop(msg.user_id, _Incoming()).staged
                for key, (value, version, tomb) in staged.items():
                    self.apply_remote(msg.user_id, key, value, version, tomb, now=t)
            elif isinstance(msg, wire.Abort):
                self._incoming.pop(msg.user_id, None)
            else:
                return wire.encode(wire.Ack(ftype, wire.AckStatus.ERROR, 0, ""))
            sid = getattr(msg, "session_id", 0)
            return wire.encode(wire.Ack(ftype, wire.AckStatus.OK, sid, msg.user_id))

    def staged_keys(self, user_id: str) -> list[bytes]:
        inc = self._incoming.get(user_id)
        return sorted(inc.staged) if inc else []

    def apply_remote(self, user_id: str, key: bytes, value: Optional[bytes], source_version: int,
                     tombstone: bool = False, now: Optional[float] = None) -> None:
        """Install one object received from a peer (idempotent per version)."""
        t = self.clock() if now is None else now
        ns = self._namespace(user_id, create=True)
        with ns.lock:
            if tombstone:
                ns.objects.pop(key, None)
                ns.meta.pop(key, None)
                return
            obj = ns.objects.get(key)
            if obj is not None and obj.version == source_version and obj.value == value:
                return
            seq = next(self._seq)
            ns.tombs.pop(key, None)
            if obj is None:
                ns.meta[key] = KeyMeta(t, t, 1, update_seq=seq)
            else:
                m = ns.meta[key]
                m.last_update_time = max(m.last_update_time, t)
                m.updates_count += 1
                m.update_seq = seq
            ns.objects[key] = StoredObject(user_id, key, bytes(value), source_version)


class _Session:
    phase: wire.Phase

    def __init__(self, store: EdgeStore, user_id: str, dest: Transport) -> None:
        self.store = store
        self.user_id = user_id
        self.dest = dest
        self.session_id = next(store._session_ids)
        self.report = SyncReport(phase=self.phase.name.lower())
        self.cancelled = False
        self._pending: dict[int, _Pending] = {}
        self._t0 = store.clock()

    def cancel(self) -> None:
        self.cancelled = True
        self.report.cancelled = True
        self._pending.clear()

    @property
    def in_flight(self) -> int:
        return len(self._pending)

    def _send(self, p: _Pending) -> int:
        idx = self.dest.send(p.frame)
        self._pending[idx] = p
        self.report.value_bytes += p.value_len
        self.report.overhead_bytes += len(p.frame) - p.value_len
        return idx

    def _object(self, key: bytes, obj: StoredObject, sync_time: float, seq: int) -> _Pending:
        frame = wire.encode(wire.ObjectFrame(self.user_id, key, obj.version, obj.value))
        return _Pending(wire.FrameType.OBJECT, frame, key, sync_time, seq, len(obj.value))

    def _tomb(self, key: bytes, sync_time: float, seq: int) -> _Pending:
        frame = wire.encode(wire.Tombstone(self.user_id, key, int(sync_time)))
        return _Pending(wire.FrameType.TOMBSTONE, frame, key, sync_time, seq)

    def open(self) -> None:
        frame = wire.encode(wire.OpenSession(self.user_id, self.session_id, int(self.store.clock()), self.phase))
        self._send(_Pending(wire.FrameType.OPEN_SESSION, frame))

    def handle_reply(self, idx: int, reply: bytes) -> Optional[_Pending]:
        """Match a reply to its frame; returns the pending entry once acked."""
        p = self._pending.pop(idx, None)
        if p is None or self.cancelled:
            return None
        try:
            ack = wire.decode(reply)
        except wire.FrameError:
            ack = None
        if not isinstance(ack, wire.Ack) or ack.status != wire.AckStatus.OK:
            if isinstance(ack, wire.Ack) and ack.status == wire.AckStatus.ERROR:
                raise SyncError(f"peer {self.dest.name} rejected {p.kind.name}")
            p.retries += 1
            self.report.retries += 1
            if p.retries > MAX_RETRIES:
                raise SyncError(f"{p.kind.name} for {p.key!r} failed after {MAX_RETRIES} retries")
            self._send(p)
            return None
        if p.kind == wire.FrameType.OBJECT:
            self.store._mark_synced(self.user_id, p, self.dest.name)
            self.report.keys_transferred += 1
        elif p.kind == wire.FrameType.TOMBSTONE:
            self.store._mark_synced(self.user_id, p, self.dest.name)
            self.report.tombstones_transferred += 1
        return p

    def _recv_one(self) -> Optional[_Pending]:
        idx, reply = self.dest.recv()
        return self.handle_reply(idx, reply)

    def _finish(self) -> None:
        self.report.wall_time_ms = self.store.clock() - self._t0


class BackgroundSession(_Session):
    """Pushes dirty keys one at a time, lowest update rate first.

    Drivers call :meth:`send_next` whenever the link can take another frame
    and feed replies back through :meth:`handle_reply`; :meth:`run` is the
    stop-and-wait driver used on real transports.
    """

    phase = wire.Phase.BACKGROUND

    def __init__(self, store: EdgeStore, user_id: str, dest: Transport) -> None:
        super().__init__(store, user_id, dest)
        self._in_flight_keys: set[bytes] = set()

    def send_next(self) -> Optional[_Pending]:
        """Snapshot and send the next dirty key; ``None`` when nothing is left."""
        if self.cancelled:
            return None
        ns = self.store._ns.get(self.user_id)
        if ns is None:
            return None
        dest = self.dest.name
        with ns.lock:
            if ns.frozen:
                return None
            p = None
            for key in sorted(ns.tombs):
                if key not in self._in_flight_keys and ns.tombs[key].is_dirty(dest):
                    t, seq = self.store.clock(), next(self.store._seq)
                    p = self._tomb(key, t, seq)
                    break
            if p is None:
                for key in self.store._dirty_locked(ns, dest):
                    if key not in self._in_flight_keys:
                        t, seq, obj = self.store._snapshot(ns, key)
                        p = self._object(key, obj, t, seq)
                        break
            if p is None:
                return None
            self._in_flight_keys.add(p.key)
        self._send(p)
        return p

    def handle_reply(self, idx: int, reply: bytes) -> Optional[_Pending]:
        done = super().handle_reply(idx, reply)
        if done is not None:
            self._in_flight_keys.discard(done.key)
        return done

    def cancel(self) -> None:
        super().cancel()
        self._in_flight_keys.clear()

    def finish(self) -> SyncReport:
        self._finish()
        return self.report

    def run(self) -> SyncReport:
        with self.dest.lock:
            try:
                self.open()
                self._recv_one()
                while not self.cancelled:
                    if self.send_next() is None:
                        break
                    while self.in_flight and not self.cancelled:
                        self._recv_one()
            finally:
                self._finish()
        return self.report


class BlockingSession(_Session):
    phase = wire.Phase.BLOCKING

    def __init__(self, store: EdgeStore, user_id: str, dest: Transport) -> None:
        super().__init__(store, user_id, dest)
        self.residual_keys = 0

    def run(self) -> SyncReport:
        ns = self.store._namespace(self.user_id)
        dest = self.dest.name
        with ns.lock:
            batch: list[_Pending] = []
            for key in sorted(ns.tombs):
                if ns.tombs[key].is_dirty(dest):
                    batch.append(self._tomb(key, self.store.clock(), next(self.store._seq)))
            for key in self.store._dirty_locked(ns, dest):
                t, seq, obj = self.store._snapshot(ns, key)
                batch.append(self._object(key, obj, t, seq))
        self.residual_keys = sum(1 for p in batch if p.kind == wire.FrameType.OBJECT)
        window = self.dest.window
        commit = self._commit()
        with self.dest.lock:
            try:
                self.open()
                for p in itertools.chain(batch, (commit,)):
                    while window is not None and self.in_flight >= window:
                        self._recv_one()
                    self._send(p)
                retries_at_commit = self.report.retries
                committed = self._drain(commit)
                if self.report.retries > retries_at_commit:
                    # frames resent after the commit are still staged at the peer
                    commit = self._commit()
                    self._send(commit)
                    committed = self._drain(commit)
                if not committed:
                    raise SyncError("commit was not acknowledged")
            finally:
                self._finish()
        return self.report

    def _commit(self) -> _Pending:
        return _Pending(wire.FrameType.COMMIT, wire.encode(
            wire.Commit(self.user_id, self.session_id, int(self.store.clock()))))

    def _drain(self, commit: _Pending) -> bool:
        committed = False
        while self._pending or self.dest.outstanding:
            got = self._recv_one()
            committed = committed or got is commit
        return committed


class BackgroundSync:
    """Handle on a running (or finished) background session."""

    def __init__(self, session: BackgroundSession, thread: Optional[threading.Thread]) -> None:
        self.session = session
        self.thread = thread
        self._error: Optional[BaseException] = None
        self._done = threading.Event()

    def _run(self) -> None:
        try:
            self.session.run()
        except BaseException as exc:  # surfaced through result()
            self._error = exc
            self.session.report.error = getattr(exc, "code", type(exc).__name__)
        finally:
            self._done.set()

    def done(self) -> bool:
        return self._done.is_set()

    def cancel(self) -> None:
        self.session.cancel()

    def result(self, timeout: Optional[float] = None) -> SyncReport:
        if self.thread is not None:
            self.thread.join(timeout)
            if self.thread.is_alive():
                raise TimeoutError("background sync still running")
        if self._error is not None:
            raise self._error
        return self.session.report


def iter_objects(store: EdgeStore, user_id: str) -> Iterator[StoredObject]:
    for key in store.keys(user_id):
        yield store.get_object(user_id, key)

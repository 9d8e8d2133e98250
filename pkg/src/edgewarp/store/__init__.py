from .clock import SimClock, WallClock
from .store import (
    NEVER,
    BackgroundSession,
    BackgroundSync,
    BlockingReport,
    EdgeStore,
    Frozen,
    KeyMeta,
    NotFound,
    StoredObject,
    StoreError,
    SyncError,
    SyncReport,
)
from .transport import LocalPeer, PeerUnreachable, SimPeer, StoreServer, TcpPeer, Transport

__all__ = [
    "NEVER", "BackgroundSession", "BackgroundSync", "BlockingReport", "EdgeStore", "Frozen", "KeyMeta",
    "NotFound", "StoredObject", "StoreError", "SyncError", "SyncReport", "SimClock", "WallClock",
    "LocalPeer", "PeerUnreachable", "SimPeer", "StoreServer", "TcpPeer", "Transport",
]

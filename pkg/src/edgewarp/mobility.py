"""Mobility event bus: predictions and handovers in, per-app events out.

Cells resolve to edge hosts through a topology table.  A hint is only worth
sending when the predicted target sits behind a different edge host than
the serving cell; several cells usually share one host.
"""

from __future__ import annotations

import csv
import os
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Union

from .predictor.pipeline import HandoverPrediction


class UnknownCell(KeyError):
    code = "UNKNOWN_CELL"

    def __str__(self) -> str:
        return Exception.__str__(self)


class TopologyError(ValueError):
    code = "INVALID_TOPOLOGY"


@dataclass(frozen=True)
class EdgeHost:
    address: str
    port: int

    @property
    def name(self) -> str:
        return f"{self.address}:{self.port}"


class EdgeTopology:
    def __init__(self, cells: dict[int, EdgeHost]) -> None:
        self.cells = dict(cells)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, str, int]]) -> "EdgeTopology":
        cells: dict[int, EdgeHost] = {}
        for cell, host, port in rows:
            if int(cell) in cells:
                raise TopologyError(f"cell {cell} mapped twice")
            cells[int(cell)] = EdgeHost(str(host), int(port))
        return cls(cells)

    @classmethod
    def from_csv(cls, path: Union[str, os.PathLike]) -> "EdgeTopology":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["cell_id", "edge_host", "port"]:
                raise TopologyError("topology header must be cell_id,edge_host,port")
            rows = []
            for row in reader:
                if not row:
                    continue
                if len(row) != 3:
                    raise TopologyError(f"line {reader.line_num}: expected 3 fields")
                try:
                    rows.append((int(row[0]), row[1].strip(), int(row[2])))
                except ValueError as exc:
                    raise TopologyError(f"line {reader.line_num}: {exc}") from None
        return cls.from_rows(rows)

    def host_for(self, cell: int) -> EdgeHost:
        try:
            return self.cells[cell]
        except KeyError:
            raise UnknownCell(f"cell {cell} has no edge host") from None

    def hosts(self) -> list[EdgeHost]:
        return sorted(set(self.cells.values()), key=lambda h: (h.address, h.port))


class EventKind(Enum):
    HINT = "HINT"
    HANDOVER_START = "HANDOVER_START"
    HANDOVER_COMPLETE = "HANDOVER_COMPLETE"


@dataclass(frozen=True)
class MobilityEvent:
    kind: EventKind
    ue_id: str
    t: float
    target_cell: int
    target_host: EdgeHost
    predicted: bool
    # set on HANDOVER_START when the last hint named a different host
    misprediction: bool = False
    hinted_host: Optional[EdgeHost] = None
    source_host: Optional[EdgeHost] = None


Sink = Callable[[MobilityEvent], None]


class _UeState:
    __slots__ = ("serving", "last_hint", "last_hint_t", "lock")

    def __init__(self) -> None:
        self.serving: Optional[int] = None
        self.last_hint: Optional[EdgeHost] = None
        self.last_hint_t = float("-inf")
        self.lock = threading.Lock()


class MobilityHandler:
    """Turns predictor output and handover signals into app events.

    Sinks run on the caller's thread, serialized per UE; they should hand
    work off rather than block.  An app registered with ``users`` only sees
    events for those UEs.
    """

    def __init__(self, topology: EdgeTopology, debounce_ms: float = 500.0) -> None:
        self.topology = topology
        self.debounce_ms = debounce_ms
        self._apps: dict[str, tuple[Sink, Optional[frozenset[str]]]] = {}
        self._ues: dict[str, _UeState] = {}
        self._lock = threading.Lock()

    def register_app(self, app_id: str, sink: Sink, users: Optional[Iterable[str]] = None) -> None:
        with self._lock:
            self._apps[app_id] = (sink, frozenset(users) if users is not None else None)

    def unregister_app(self, app_id: str) -> None:
        with self._lock:
            self._apps.pop(app_id, None)

    def _ue(self, ue_id: str) -> _UeState:
        with self._lock:
            return self._ues.setdefault(ue_id, _UeState())

    def _emit(self, event: MobilityEvent) -> None:
        with self._lock:
            sinks = [s for s, users in self._apps.values() if users is None or event.ue_id in users]
        for sink in sinks:
            sink(event)

    def set_serving(self, ue_id: str, cell: int) -> None:
        self.topology.host_for(cell)
        st = self._ue(ue_id)
        with st.lock:
            st.serving = cell

    def serving(self, ue_id: str) -> Optional[int]:
        return self._ue(ue_id).serving

    def on_prediction(self, ue_id: str, prediction: HandoverPrediction,
                      t: Optional[float] = None) -> list[MobilityEvent]:
        if not prediction.handover_likely or not prediction.targets:
            return []
        now = prediction.t if t is None else t
        target = prediction.targets[0]
        host = self.topology.host_for(target)
        st = self._ue(ue_id)
        with st.lock:
            here = self.topology.host_for(st.serving) if st.serving is not None else None
            if host == here:
                return []
            if st.last_hint == host and now - st.last_hint_t < self.debounce_ms:
                return []
            st.last_hint, st.last_hint_t = host, now
            ev = MobilityEvent(EventKind.HINT, ue_id, now, target, host, True, source_host=here)
            self._emit(ev)
        return [ev]

    def on_handover_start(self, ue_id: str, target_cell: int, t: float) -> list[MobilityEvent]:
        host = self.topology.host_for(target_cell)
        st = self._ue(ue_id)
        with st.lock:
            here = self.topology.host_for(st.serving) if st.serving is not None else None
            hinted = st.last_hint
            ev = MobilityEvent(EventKind.HANDOVER_START, ue_id, t, target_cell, host,
                               predicted=hinted == host, misprediction=hinted is not None and hinted != host,
                               hinted_host=hinted, source_host=here)
            st.serving = target_cell
            st.last_hint, st.last_hint_t = None, float("-inf")
            self._emit(ev)
        return [ev]

    def on_handover_complete(self, ue_id: str, cell: int, t: float) -> list[MobilityEvent]:
        host = self.topology.host_for(cell)
        st = self._ue(ue_id)
        with st.lock:
            st.serving = cell
            ev = MobilityEvent(EventKind.HANDOVER_COMPLETE, ue_id, t, cell, host, predicted=False)
            self._emit(ev)
        return [ev]

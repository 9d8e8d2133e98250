"""UE registry with the AF priority APIs at the AMF and the RAN."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .scheduler import Klass


class ControlPlaneError(Exception):
    code = "ERROR"


class UnknownIp(ControlPlaneError):
    code = "UNKNOWN_IP"


class UnknownUe(ControlPlaneError):
    code = "UNKNOWN_UE"


class NotEligible(ControlPlaneError):
    code = "NOT_ELIGIBLE"


class Stage(Enum):
    RRC_AT_BS = 0
    NGAP_AT_AMF = 1
    NGAP_AT_BS = 2


# stage visited by each of the four handover messages
HANDOVER_PATH: tuple[Stage, ...] = (
    Stage.RRC_AT_BS,
    Stage.NGAP_AT_AMF,
    Stage.NGAP_AT_BS,
    Stage.RRC_AT_BS,
)


@dataclass
class UeRecord:
    ue_id: str
    ip_address: str
    ran_ngap_id: int
    amf_ngap_id: int
    klass: Klass
    base_klass: Klass


def parse_klass(value: "str | int | Klass") -> Klass:
    if isinstance(value, Klass):
        return value
    if isinstance(value, int):
        return Klass(value)
    try:
        return Klass[value.upper()]
    except KeyError:
        raise ValueError(f"unknown priority class {value!r}") from None


class Ran:
    """RAN-side view: class per RAN UE NGAP ID."""

    def __init__(self) -> None:
        self._klass: dict[int, Klass] = {}
        self._base: dict[int, Klass] = {}

    def attach(self, ran_ngap_id: int, klass: Klass) -> None:
        self._klass[ran_ngap_id] = klass
        self._base[ran_ngap_id] = klass

    def set_priority(self, ran_ngap_id: int, priority: Klass) -> None:
        if ran_ngap_id not in self._klass:
            raise UnknownUe(ran_ngap_id)
        self._klass[ran_ngap_id] = priority

    def revert_priority(self, ran_ngap_id: int) -> None:
        if ran_ngap_id not in self._klass:
            raise UnknownUe(ran_ngap_id)
        self._klass[ran_ngap_id] = self._base[ran_ngap_id]

    def klass_of(self, ran_ngap_id: int) -> Klass:
        return self._klass[ran_ngap_id]


class Amf:
    """AMF holding the complete UE control-plane context.

    ``set_priority``/``revert_priority`` are the AF-facing APIs; the AMF
    translates the IP address to its NGAP IDs and forwards the change to the
    RAN keyed by the RAN UE NGAP ID.  All calls are serialized on one lock so
    they may arrive from other threads while a simulation runs.
    """

    def __init__(self, ran: Optional[Ran] = None) -> None:
        self.ran = ran if ran is not None else Ran()
        self._by_ip: dict[str, UeRecord] = {}
        self._by_id: dict[str, UeRecord] = {}
        self._next_ngap = 1
        self._lock = threading.Lock()
        self.listeners: list[Callable[[UeRecord], None]] = []

    def attach(self, ue_id: str, ip_address: str, klass: "str | Klass" = Klass.MP) -> UeRecord:
        base = parse_klass(klass)
        if base is Klass.HP:
            raise NotEligible("UEs attach as MP or LP; HP is granted through set_priority")
        with self._lock:
            ngap = self._next_ngap
            self._next_ngap += 1
            rec = UeRecord(ue_id, ip_address, ran_ngap_id=ngap, amf_ngap_id=ngap, klass=base, base_klass=base)
            self._by_ip[ip_address] = rec
            self._by_id[ue_id] = rec
            self.ran.attach(rec.ran_ngap_id, base)
        return rec

    def ue(self, ue_id: str) -> UeRecord:
        try:
            return self._by_id[ue_id]
        except KeyError:
            raise UnknownUe(ue_id) from None

    def by_ip(self, ip_address: str) -> UeRecord:
        try:
            return self._by_ip[ip_address]
        except KeyError:
            raise UnknownIp(ip_address) from None

    def set_priority(self, ip_address: str, priority: "str | Klass" = Klass.HP) -> None:
        prio = parse_klass(priority)
        with self._lock:
            rec = self.by_ip(ip_address)
            # HP is drawn from MP only; LP devices are never promoted
            if rec.base_klass is not Klass.MP or prio is Klass.LP:
                raise NotEligible(ip_address)
            rec.klass = prio
            self.ran.set_priority(rec.ran_ngap_id, prio)
        for fn in self.listeners:
            fn(rec)

    def revert_priority(self, ip_address: str) -> None:
        with self._lock:
            rec = self.by_ip(ip_address)
            rec.klass = rec.base_klass
            self.ran.revert_priority(rec.ran_ngap_id)
        for fn in self.listeners:
            fn(rec)

    def klass_at(self, ue_id: str, stage: Stage) -> Klass:
        rec = self.ue(ue_id)
        if stage is Stage.NGAP_AT_AMF:
            return rec.klass
        return self.ran.klass_of(rec.ran_ngap_id)

    def handle_command(self, line: str) -> str:
        """One line of the AF text protocol; returns the reply line."""
        parts = line.strip().split()
        try:
            if len(parts) == 3 and parts[0] == "SET_PRIORITY":
                self.set_priority(parts[1], parts[2])
            elif len(parts) == 2 and parts[0] == "REVERT_PRIORITY":
                self.revert_priority(parts[1])
            else:
                return "ERR BAD_COMMAND\n"
        except ControlPlaneError as exc:
            return f"ERR {exc.code}\n"
        except ValueError:
            return "ERR BAD_PRIORITY\n"
        return "OK\n"

"""Line-oriented TCP endpoint for the AF priority API.

Requests are ``SET_PRIORITY <ip> HP`` or ``REVERT_PRIORITY <ip>``, one per
line; each gets ``OK`` or ``ERR <code>`` back.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from typing import Optional

from .core import Amf, ControlPlaneError


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        amf: Amf = self.server.amf  # type: ignore[attr-defined]
        for raw in self.rfile:
            try:
                line = raw.decode("ascii")
            except UnicodeDecodeError:
                reply = "ERR BAD_COMMAND\n"
            else:
                reply = amf.handle_command(line)
            self.wfile.write(reply.encode("ascii"))
            self.wfile.flush()


class AfServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, amf: Amf, host: str = "127.0.0.1", port: int = 0) -> None:
        super().__init__((host, port), _LineHandler)
        self.amf = amf
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start(self) -> "AfServer":
        self._thread = threading.Thread(target=self.serve_forever, name="af-server", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


class AfClient:
    """Blocking client; raises :class:`ControlPlaneError` on an ``ERR`` reply."""

    def __init__(self, host: str, port: int, timeout: float = 5.0) -> None:
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self._sock.makefile("rb")

    def _call(self, line: str) -> None:
        self._sock.sendall(line.encode("ascii"))
        reply = self._rfile.readline().decode("ascii").strip()
        if reply != "OK":
            code = reply.split(maxsplit=1)[1] if reply.startswith("ERR ") else "BAD_REPLY"
            err = ControlPlaneError(reply)
            err.code = code
            raise err

    def set_priority(self, ip_address: str) -> None:
        self._call(f"SET_PRIORITY {ip_address} HP\n")

    def revert_priority(self, ip_address: str) -> None:
        self._call(f"REVERT_PRIORITY {ip_address}\n")

    def close(self) -> None:
        self._rfile.close()
        self._sock.close()

    def __enter__(self) -> "AfClient":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

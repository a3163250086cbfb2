"""NTRIP 1.0-subset caster and client plus an in-process loopback transport.

The caster speaks the classic dialect: a mountpoint request with HTTP Basic
credentials is answered with "ICY 200 OK" followed by raw correction frames;
a request for an unknown mountpoint returns the sourcetable; bad credentials
get a 401. The loopback transport carries the same encoded bytes through the
same codec so in-process runs are numerically identical to TCP runs.
"""

import base64
import queue
import socket
import threading
import time
from dataclasses import dataclass

from .wire import CorrectionFrame, FrameDecoder


class TransportError(Exception):
    pass


class BindFailure(TransportError):
    pass


class ConnectFailure(TransportError):
    pass


class AuthRejected(TransportError):
    pass


class StreamClosed(TransportError):
    pass


@dataclass(frozen=True)
class Credential:
    user: str
    password: str

    def basic(self) -> str:
        raw = f"{self.user}:{self.password}".encode()
        return base64.b64encode(raw).decode()


class NtripCaster:
    """Single-mountpoint caster; fan-out preserves per-client frame order."""

    def __init__(self, host: str, port: int, mountpoint: str, auth: Credential):
        self.mountpoint = mountpoint
        self.auth = auth
        self._clients: list[queue.Queue] = []
        self._lock = threading.Lock()
        self._closing = threading.Event()
        try:
            self._sock = socket.create_server((host, port))
        except OSError as err:
            raise BindFailure(f"cannot bind {host}:{port}: {err}") from err
        self.host, self.port = self._sock.getsockname()[:2]
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    # -- station side -----------------------------------------------------
    def publish(self, data: bytes) -> None:
        with self._lock:
            for q in self._clients:
                q.put(data)

    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)

    def close(self) -> None:
        self._closing.set()
        try:
            self._sock.close()
        except OSError:
            pass
        with self._lock:
            for q in self._clients:
                q.put(None)

    # -- connection handling ----------------------------------------------
    def _accept_loop(self) -> None:
        while not self._closing.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_client, args=(conn,), daemon=True).start()

    def _serve_client(self, conn: socket.socket) -> None:
        try:
            request = self._read_request(conn)
        except OSError:
            conn.close()
            return
        line = request.split("\r\n", 1)[0]
        parts = line.split()
        if len(parts) < 2 or parts[0] != "GET":
            conn.close()
            return
        mount = parts[1].lstrip("/")
        if mount != self.mountpoint:
            self._send_sourcetable(conn)
            conn.close()
            return
        if not self._authorized(request):
            try:
                conn.sendall(b"HTTP/1.1 401 Unauthorized\r\n\r\n")
            except OSError:
                pass
            conn.close()
            return
        try:
            conn.sendall(b"ICY 200 OK\r\n\r\n")
        except OSError:
            conn.close()
            return
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._clients.append(q)
        try:
            while not self._closing.is_set():
                data = q.get()
                if data is None:
                    break
                conn.sendall(data)
        except OSError:
            pass  # client went away; non-fatal
        finally:
            with self._lock:
                if q in self._clients:
                    self._clients.remove(q)
            conn.close()

    @staticmethod
    def _read_request(conn: socket.socket) -> str:
        conn.settimeout(5.0)
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = conn.recv(1024)
            if not chunk:
                break
            data += chunk
        conn.settimeout(None)
        return data.decode("latin-1", errors="replace")

    def _authorized(self, request: str) -> bool:
        want = f"Basic {self.auth.basic()}"
        for line in request.split("\r\n")[1:]:
            if line.lower().startswith("authorization:"):
                return line.split(":", 1)[1].strip() == want
        return False

    def _send_sourcetable(self, conn: socket.socket) -> None:
        row = (f"STR;{self.mountpoint};{self.mountpoint};RTCM-like;1(1),2(1);"
               f"0;GPS+GAL;rtksim;XXX;0.00;0.00;0;0;rtksim;none;B;N;0;\r\n")
        body = row + "ENDSOURCETABLE\r\n"
        head = ("SOURCETABLE 200 OK\r\n"
                f"Content-Type: text/plain\r\nContent-Length: {len(body)}\r\n\r\n")
        try:
            conn.sendall((head + body).encode())
        except OSError:
            pass


class NtripClient:
    """Blocking NTRIP client yielding decoded frames with arrival timestamps."""

    def __init__(self, host: str, port: int, mountpoint: str, auth: Credential,
                 connect_timeout: float = 5.0):
        self.host, self.port, self.mountpoint, self.auth = host, port, mountpoint, auth
        self._decoder = FrameDecoder()
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as err:
            raise ConnectFailure(f"cannot connect {host}:{port}: {err}") from err
        req = (f"GET /{mountpoint} HTTP/1.1\r\n"
               f"Host: {host}\r\n"
               f"User-Agent: NTRIP rtksim/0.1\r\n"
               f"Authorization: Basic {auth.basic()}\r\n\r\n")
        self._sock.sendall(req.encode())
        header = self._read_header()
        if header.startswith("ICY 200 OK"):
            return
        self._sock.close()
        if "401" in header.split("\r\n", 1)[0]:
            raise AuthRejected(header.split("\r\n", 1)[0])
        raise ConnectFailure(f"unexpected caster reply: {header.split(chr(13), 1)[0]!r}")

    def _read_header(self) -> str:
        data = b""
        while b"\r\n\r\n" not in data:
            chunk = self._sock.recv(1024)
            if not chunk:
                raise StreamClosed("caster closed during handshake")
            data += chunk
        header, _, rest = data.partition(b"\r\n\r\n")
        if rest:
            self._decoder.feed(rest)
        return header.decode("latin-1", errors="replace")

    def poll(self, timeout: float = 0.0) -> list[tuple[CorrectionFrame, float]]:
        """Frames received within timeout seconds, tagged with arrival time."""
        out = [(f, time.monotonic()) for f in self._decoder.feed(b"")]
        deadline = time.monotonic() + timeout
        self._sock.settimeout(max(timeout, 1e-3))
        while True:
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                break
            except OSError as err:
                raise StreamClosed(str(err)) from err
            if not chunk:
                raise StreamClosed("caster closed the stream")
            now = time.monotonic()
            out.extend((f, now) for f in self._decoder.feed(chunk))
            if out or now >= deadline:
                break
        return out

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def request_sourcetable(host: str, port: int, mountpoint: str = "") -> str:
    """Fetch the caster sourcetable (any non-mountpoint GET returns it)."""
    with socket.create_connection((host, port), timeout=5.0) as sock:
        sock.sendall(f"GET /{mountpoint} HTTP/1.1\r\nHost: {host}\r\n\r\n".encode())
        data = b""
        while True:
            chunk = sock.recv(4096)
            if not chunk:
                break
            data += chunk
    return data.decode("latin-1", errors="replace")


class LoopbackTransport:
    """Deterministic in-process byte pipe with the same codec semantics.

    Optionally corrupts the stream by injecting garbage bytes before
    payloads, which exercises decoder resynchronization.
    """

    def __init__(self, garbage_prefix: bytes = b""):
        self._decoder = FrameDecoder()
        self._pending: list[CorrectionFrame] = []
        self._garbage = garbage_prefix
        self._sent_garbage = False

    def publish(self, data: bytes) -> None:
        if not self._sent_garbage and self._garbage:
            self._pending.extend(self._decoder.feed(self._garbage))
            self._sent_garbage = True
        self._pending.extend(self._decoder.feed(data))

    def poll(self) -> list[CorrectionFrame]:
        out, self._pending = self._pending, []
        return out

    def close(self) -> None:
        self._pending.clear()

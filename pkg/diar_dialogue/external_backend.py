import json
import logging
import queue
import shlex
import socket
import subprocess
import threading
from typing import IO

from .exceptions import BackendError
from .inference_harness import BackendCapabilities

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
ENDPOINT_PREFIX = "external:"
TCP_SCHEME = "tcp://"
_EOF = object()


class ExternalBackend:
    """Backend speaking line-delimited JSON to a process or a TCP server."""

    def __init__(self, endpoint: str, timeout: float) -> None:
        self.endpoint = endpoint
        self.timeout = timeout

    def new_session(self) -> "ExternalSession":
        if self.endpoint.startswith(TCP_SCHEME):
            transport = _SocketTransport.connect(self.endpoint, self.timeout)
        else:
            transport = _ProcessTransport.spawn(self.endpoint)
        return ExternalSession(transport, self.timeout)


class ExternalSession:
    """
    One connection to an external recognizer.

    A reply that is not a JSON object with a string ``text`` aborts the
    session, as does a reply timeout; every later call then fails fast.
    An ``error`` field in a well-formed reply fails only that request.
    """

    def __init__(self, transport: "_LineTransport", timeout: float) -> None:
        self.transport = transport
        self.timeout = timeout
        self.capabilities = BackendCapabilities()
        self.chunk_id = None
        self.aborted = None

    def open_audio(self, chunk_id: str, audio_ref: dict) -> None:
        if self.chunk_id is not None:
            raise BackendError("open_audio called twice on one session.")
        self.chunk_id = chunk_id
        reply = self._request({
            "type": "open_audio",
            "protocol": PROTOCOL_VERSION,
            "chunk_id": chunk_id,
            "audio_ref": audio_ref,
        })
        caps = reply.get("capabilities")
        if isinstance(caps, dict):
            self.capabilities = BackendCapabilities(
                supports_context_reuse=bool(
                    caps.get("supports_context_reuse", True)),
                supports_timestamps=bool(caps.get("supports_timestamps", True))
            )

    def turn(self, prompt: str) -> str:
        if self.chunk_id is None:
            raise BackendError("turn called before open_audio.")
        reply = self._request({
            "type": "turn",
            "chunk_id": self.chunk_id,
            "prompt": prompt,
        })
        return reply["text"]

    def close(self) -> None:
        if self.aborted is None:
            try:
                self.transport.send(json.dumps(
                    {"type": "close", "chunk_id": self.chunk_id}
                ))
            except BackendError as e:
                logger.debug(f"Close request not delivered: {e}")
            self.aborted = "session closed"
        self.transport.close()

    def _request(self, message: dict) -> dict:
        if self.aborted is not None:
            raise BackendError(f"Session unusable: {self.aborted}.")
        try:
            self.transport.send(json.dumps(message, ensure_ascii=False))
            line = self.transport.receive(self.timeout)
        except BackendError as e:
            self._abort(str(e))
            raise
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            self._abort(f"malformed reply {line[:80]!r}")
            raise BackendError(
                f"Protocol violation: malformed JSON reply {line[:80]!r}."
            ) from None
        if not isinstance(reply, dict) or not isinstance(reply.get("text"),
                                                         str):
            self._abort("reply without a string 'text'")
            raise BackendError(
                "Protocol violation: reply must be an object with a string "
                "'text'."
            )
        if reply.get("error"):
            raise BackendError(f"Backend reported: {reply['error']}")
        return reply

    def _abort(self, reason: str) -> None:
        logger.warning(
            f"Aborting backend session for '{self.chunk_id}': {reason}"
        )
        self.aborted = reason
        self.transport.close()


def external_backend(endpoint: str, timeout: float = 30.0) -> ExternalBackend:
    """
    Create a backend that talks to an external recognizer.

    Requests are single-line JSON objects ``{"type": "open_audio" | "turn" |
    "close", "chunk_id", "audio_ref"?, "prompt"?}``; ``open_audio`` also
    carries ``"protocol": 1``. Each request except ``close`` is answered by
    one line ``{"text": ..., "error"?: ...}``. The ``open_audio`` reply may
    declare ``capabilities``.

    Parameters
    ----------
    endpoint : str
        ``tcp://host:port`` for a server, otherwise a command line that is
        spawned once per session and spoken to over stdin/stdout. An
        ``external:`` prefix is accepted and ignored.

    timeout : float, optional
        Seconds to wait for each reply. Default is 30.

    Returns
    -------
    ExternalBackend

    Raises
    ------
    ValueError
        If the endpoint is empty or the timeout is not positive.

    Examples
    --------
    .. code-block:: python

        from diar_dialogue.external_backend import external_backend

        backend = external_backend("python my_server.py --model ckpt",
                                   timeout=60)
        backend = external_backend("tcp://localhost:9000")
    """
    if endpoint.startswith(ENDPOINT_PREFIX):
        endpoint = endpoint[len(ENDPOINT_PREFIX):]
    if not endpoint.strip():
        raise ValueError("'endpoint' must name a command or tcp://host:port.")
    if timeout <= 0:
        raise ValueError(f"'timeout' must be positive. Got {timeout}.")
    return ExternalBackend(endpoint.strip(), timeout)


# Level 1 definitions ----------------------------------------------------------


class _LineTransport:
    """Writes lines to a stream and reads replies through a reader thread."""

    def __init__(self, reader: IO[str], writer: IO[str]) -> None:
        self.writer = writer
        self.lines = queue.Queue()
        self.closed = False
        self.thread = threading.Thread(target=self._pump, args=(reader,),
                                       daemon=True)
        self.thread.start()

    def _pump(self, reader: IO[str]) -> None:
        try:
            for line in reader:
                self.lines.put(line.rstrip("\r\n"))
        except (OSError, ValueError):
            pass
        self.lines.put(_EOF)

    def send(self, line: str) -> None:
        if self.closed:
            raise BackendError("Connection already closed.")
        try:
            self.writer.write(line + "\n")
            self.writer.flush()
        except (OSError, ValueError) as e:
            raise BackendError(f"Could not send request: {e}") from None

    def receive(self, timeout: float) -> str:
        try:
            line = self.lines.get(timeout=timeout)
        except queue.Empty:
            raise BackendError(
                f"No reply within {timeout} s."
            ) from None
        if line is _EOF:
            raise BackendError("Backend closed the connection.")
        return line

    def close(self) -> None:
        self.closed = True


class _ProcessTransport(_LineTransport):
    def __init__(self, process: subprocess.Popen) -> None:
        self.process = process
        super().__init__(process.stdout, process.stdin)

    @classmethod
    def spawn(cls, command: str) -> "_ProcessTransport":
        try:
            process = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1
            )
        except (OSError, ValueError) as e:
            raise BackendError(
                f"Could not start backend '{command}': {e}"
            ) from None
        return cls(process)

    def close(self) -> None:
        if self.closed:
            return
        super().close()
        try:
            self.process.stdin.close()
        except OSError:
            pass
        try:
            self.process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.process.kill()
            self.process.wait()


class _SocketTransport(_LineTransport):
    def __init__(self, sock: socket.socket) -> None:
        self.sock = sock
        stream = sock.makefile("rw", encoding="utf-8", newline="\n")
        super().__init__(stream, stream)

    @classmethod
    def connect(cls, endpoint: str, timeout: float) -> "_SocketTransport":
        host, _, port = endpoint[len(TCP_SCHEME):].rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(
                f"TCP endpoint must be tcp://host:port. Got '{endpoint}'."
            )
        try:
            sock = socket.create_connection((host, int(port)), timeout=timeout)
        except OSError as e:
            raise BackendError(f"Could not connect to {endpoint}: {e}") from None
        sock.settimeout(None)
        return cls(sock)

    def close(self) -> None:
        if self.closed:
            return
        super().close()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

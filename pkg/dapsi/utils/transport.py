"""
Two-party channels with framed messages and per-phase byte accounting.

Frame layout: ``<I`` length (tag byte + payload), one tag byte, payload.
"""

import logging
import queue
import socket
import struct
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from enum import IntEnum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from dapsi import config
from dapsi.exceptions import ChannelClosed, FrameTooLarge, ProtocolViolation, TagUnknown

logger = logging.getLogger(__name__)

HEADER = struct.Struct('<IB')
REPORT_COLUMNS = ['phase', 'dir', 'bytes', 'frames']


class Tag(IntEnum):
    """Message kinds on the wire."""
    HELLO = 1
    DONE = 2
    PUBKEY = 3
    QUERY = 4
    SEED = 5
    AHE_BITS = 6
    KEYSET = 7
    OLE_X = 8
    OLE_UV = 9
    OLE_Z = 10
    VOLE_X = 11
    VOLE_UV = 12
    VOLE_Z = 13
    RECOVER = 14
    RELEASE = 15
    REJECT = 16
    SUBSAMPLE_KEY = 17
    SUBSAMPLE_VEC = 18
    SUBSAMPLE_SET = 19
    PSI_BLINDED = 20
    PSI_REBLINDED = 21
    PSI_RESULT = 22
    MATCH_SOURCES = 23
    MATCH_PAIRS = 24


# Every tag belongs to exactly one protocol phase.
TAG_PHASES = {
    Tag.HELLO: 'setup',
    Tag.DONE: 'setup',
    Tag.PUBKEY: 'setup',
    Tag.QUERY: 'setup',
    Tag.SEED: 'setup',
    Tag.AHE_BITS: 'restricted',
    Tag.KEYSET: 'restricted',
    Tag.OLE_X: 'recon',
    Tag.OLE_UV: 'recon',
    Tag.OLE_Z: 'recon',
    Tag.VOLE_X: 'recon',
    Tag.VOLE_UV: 'recon',
    Tag.VOLE_Z: 'recon',
    Tag.RECOVER: 'recover',
    Tag.RELEASE: 'recover',
    Tag.REJECT: 'recover',
    Tag.SUBSAMPLE_KEY: 'subsample',
    Tag.SUBSAMPLE_VEC: 'subsample',
    Tag.SUBSAMPLE_SET: 'subsample',
    Tag.PSI_BLINDED: 'psi',
    Tag.PSI_REBLINDED: 'psi',
    Tag.PSI_RESULT: 'psi',
    Tag.MATCH_SOURCES: 'match',
    Tag.MATCH_PAIRS: 'match',
}


def encode_frame(tag: int, payload: bytes = b'', max_size: int = config.MAX_FRAME_SIZE) -> bytes:
    length = 1 + len(payload)
    if length > max_size:
        raise FrameTooLarge(f"Frame of {length} bytes exceeds {max_size}")
    return HEADER.pack(length, int(tag)) + payload


def decode_header(header: bytes, max_size: int = config.MAX_FRAME_SIZE) -> Tuple[int, Tag]:
    """
    Parse a frame header.

    Returns:
        Tuple of (payload length, tag)
    """
    length, raw_tag = HEADER.unpack(header)
    if length > max_size:
        raise FrameTooLarge(f"Incoming frame of {length} bytes exceeds {max_size}")
    if length < 1:
        raise ProtocolViolation("Frame length must cover the tag byte")
    try:
        tag = Tag(raw_tag)
    except ValueError:
        raise TagUnknown(f"Unknown tag {raw_tag}") from None
    return length - 1, tag


class Transcript:
    """Per-party byte and frame counters, keyed by phase label and direction."""

    def __init__(self, role: str = ''):
        self.role = role
        self._counters: Dict[Tuple[str, str], List[int]] = {}
        self._lock = threading.Lock()

    def record(self, phase: str, direction: str, nbytes: int) -> None:
        with self._lock:
            entry = self._counters.setdefault((phase, direction), [0, 0])
            entry[0] += nbytes
            entry[1] += 1

    def bytes_for(self, phase: Optional[str] = None, direction: Optional[str] = None) -> int:
        return sum(v[0] for (ph, dr), v in self._counters.items()
                   if (phase is None or ph == phase) and (direction is None or dr == direction))

    def frames_for(self, phase: Optional[str] = None, direction: Optional[str] = None) -> int:
        return sum(v[1] for (ph, dr), v in self._counters.items()
                   if (phase is None or ph == phase) and (direction is None or dr == direction))

    def rows(self) -> List[Tuple[str, str, int, int]]:
        with self._lock:
            return [(ph, dr, v[0], v[1]) for (ph, dr), v in self._counters.items()]

    @property
    def total_bytes(self) -> int:
        return self.bytes_for()


class Channel:
    """Reliable, ordered, framed duplex link to one peer."""

    def __init__(self, transcript: Optional[Transcript] = None,
                 max_frame: int = config.MAX_FRAME_SIZE,
                 timeout: float = config.CHANNEL_TIMEOUT):
        self.transcript = transcript if transcript is not None else Transcript()
        self.max_frame = max_frame
        self.timeout = timeout
        self.closed = False

    def send(self, tag: Tag, payload: bytes = b'') -> None:
        if self.closed:
            raise ChannelClosed("send on closed channel")
        frame = encode_frame(tag, payload, self.max_frame)
        self._send_frame(frame)
        self.transcript.record(TAG_PHASES[Tag(tag)], 'sent', len(frame))

    def recv(self) -> Tuple[Tag, bytes]:
        if self.closed:
            raise ChannelClosed("recv on closed channel")
        tag, payload = self._recv_frame()
        self.transcript.record(TAG_PHASES[tag], 'recv', HEADER.size + len(payload))
        return tag, payload

    def expect(self, *tags: Tag) -> Tuple[Tag, bytes]:
        """Receive a frame and require one of the given tags."""
        tag, payload = self.recv()
        if tag not in tags:
            raise ProtocolViolation(f"Expected {[t.name for t in tags]}, got {tag.name}")
        return tag, payload

    def close(self) -> None:
        self.closed = True

    def _send_frame(self, frame: bytes) -> None:
        raise NotImplementedError

    def _recv_frame(self) -> Tuple[Tag, bytes]:
        raise NotImplementedError


class PipeChannel(Channel):
    """In-process channel over a pair of queues."""

    def __init__(self, inbox: 'queue.Queue', outbox: 'queue.Queue', **kwargs):
        super().__init__(**kwargs)
        self._inbox = inbox
        self._outbox = outbox

    def _send_frame(self, frame: bytes) -> None:
        self._outbox.put(frame)

    def _recv_frame(self) -> Tuple[Tag, bytes]:
        try:
            frame = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise ChannelClosed(f"No frame within {self.timeout}s") from None
        if frame is None:
            self.closed = True
            raise ChannelClosed("Peer closed the channel")
        length, tag = decode_header(frame[:HEADER.size], self.max_frame)
        return tag, frame[HEADER.size:HEADER.size + length]

    def close(self) -> None:
        if not self.closed:
            self._outbox.put(None)
        super().close()


def pipe_pair(left: Optional[Transcript] = None,
              right: Optional[Transcript] = None) -> Tuple[PipeChannel, PipeChannel]:
    """Two connected in-process channel ends."""
    a_to_b: 'queue.Queue' = queue.Queue()
    b_to_a: 'queue.Queue' = queue.Queue()
    return (PipeChannel(b_to_a, a_to_b, transcript=left),
            PipeChannel(a_to_b, b_to_a, transcript=right))


class SocketChannel(Channel):
    """Framed TCP channel."""

    def __init__(self, sock: socket.socket, **kwargs):
        super().__init__(**kwargs)
        self._sock = sock
        self._sock.settimeout(self.timeout)

    def _send_frame(self, frame: bytes) -> None:
        try:
            self._sock.sendall(frame)
        except OSError as e:
            self.closed = True
            raise ChannelClosed(f"send failed: {e}") from e

    def _recv_exact(self, count: int) -> bytes:
        chunks = []
        remaining = count
        while remaining:
            try:
                chunk = self._sock.recv(min(remaining, 1 << 20))
            except OSError as e:
                self.closed = True
                raise ChannelClosed(f"recv failed: {e}") from e
            if not chunk:
                self.closed = True
                raise ChannelClosed("Peer closed the connection")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b''.join(chunks)

    def _recv_frame(self) -> Tuple[Tag, bytes]:
        length, tag = decode_header(self._recv_exact(HEADER.size), self.max_frame)
        return tag, self._recv_exact(length)

    def close(self) -> None:
        if not self.closed:
            try:
                self._sock.close()
            except OSError:
                pass
        super().close()


def parse_address(address: str) -> Tuple[str, int]:
    """Split ``host:port``."""
    host, sep, port = address.rpartition(':')
    if not sep or not port.isdigit():
        raise ValueError(f"Expected host:port, got {address!r}")
    return host or '0.0.0.0', int(port)


def listen(host: str, port: int, count: int = 1,
           transcripts: Optional[Sequence[Transcript]] = None) -> List[SocketChannel]:
    """Accept ``count`` connections on host:port."""
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    server.bind((host, port))
    server.listen(count)
    logger.info("Listening on %s:%d for %d peer(s)", host, port, count)
    channels = []
    try:
        for i in range(count):
            conn, peer = server.accept()
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            transcript = transcripts[i] if transcripts else None
            channels.append(SocketChannel(conn, transcript=transcript))
            logger.debug("Accepted connection from %s", peer)
    finally:
        server.close()
    return channels


def connect(host: str, port: int, transcript: Optional[Transcript] = None,
            retries: int = 50, delay: float = 0.2) -> SocketChannel:
    """Connect to a listening peer, retrying while it starts up."""
    last_error: Optional[OSError] = None
    for _ in range(retries):
        try:
            sock = socket.create_connection((host, port))
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return SocketChannel(sock, transcript=transcript)
        except OSError as e:
            last_error = e
            time.sleep(delay)
    raise ChannelClosed(f"Could not connect to {host}:{port}: {last_error}")


def send(channel: Channel, tag: Tag, payload: bytes = b'') -> None:
    channel.send(tag, payload)


def recv(channel: Channel) -> Tuple[Tag, bytes]:
    return channel.recv()


def run_session(tasks: Dict[str, Callable[[], Any]],
                channels: Sequence[Channel] = ()) -> Dict[str, Any]:
    """
    Run each role on its own thread and collect the results.

    If any role fails, every channel is closed so the peers stop waiting,
    and the first error is re-raised.

    Args:
        tasks: Role name -> zero-argument callable
        channels: Channels to close on failure

    Returns:
        Role name -> return value
    """
    with ThreadPoolExecutor(max_workers=len(tasks)) as pool:
        futures = {pool.submit(fn): role for role, fn in tasks.items()}
        done, pending = wait(futures, return_when=FIRST_EXCEPTION)
        failed = [f for f in done if f.exception() is not None]
        if failed:
            logger.warning("Role %s failed: %s", futures[failed[0]], failed[0].exception())
            for ch in channels:
                ch.close()
            wait(pending)
            raise failed[0].exception()
    return {role: f.result() for f, role in futures.items()}


def phase_report(transcript: Transcript) -> pd.DataFrame:
    """Per-phase byte table with columns phase, dir, bytes, frames, sorted by phase then dir."""
    report = pd.DataFrame(transcript.rows(), columns=REPORT_COLUMNS)
    return report.sort_values(['phase', 'dir'], ignore_index=True)


def compare_reports(measured: pd.DataFrame, baseline: pd.DataFrame) -> pd.DataFrame:
    """Join two phase reports and add ``ratio`` = measured bytes / baseline bytes."""
    merged = measured.merge(baseline, on=['phase', 'dir'], how='outer',
                            suffixes=('', '_baseline')).fillna(0)
    merged['ratio'] = merged['bytes'] / merged['bytes_baseline'].where(merged['bytes_baseline'] != 0)
    return merged


class LocalSession:
    """
    In-process wiring of several roles: one transcript per role and one
    pipe per linked pair.
    """

    def __init__(self, roles: Sequence[str], links: Sequence[Tuple[str, str]]):
        self.transcripts: Dict[str, Transcript] = {role: Transcript(role) for role in roles}
        self._ends: Dict[Tuple[str, str], Channel] = {}
        for left, right in links:
            a, b = pipe_pair(self.transcripts[left], self.transcripts[right])
            self._ends[(left, right)] = a
            self._ends[(right, left)] = b

    def channel(self, owner: str, peer: str) -> Channel:
        return self._ends[(owner, peer)]

    @property
    def channels(self) -> List[Channel]:
        return list(self._ends.values())

    def run(self, tasks: Dict[str, Callable[[], Any]]) -> Dict[str, Any]:
        return run_session(tasks, self.channels)

"""
Datagram path between the bench and the readout network.

A request carries the 64 ZC22 values of one streamed digit; the service
answers with the decoded digit and its score. Layout (little-endian):

    request: magic[8] seq:u32 label:u8 features:f64[64]   (525 bytes)
    reply:   magic[8] seq:u32 digit:u8 score:f64          (21 bytes)
"""
import logging
import socket
import struct
import threading
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel, Field

from ferrolab.experiments import DigitBitmaps
from ferrolab.instruments import Testbench, write_csv
from ferrolab.readout import N_FEATURES, ReadoutModel, infer
from ferrolab.reservoir import PrcReset, acquire_digit
from ferrolab.utils import MalformedDatagram, ServiceStartError

logger = logging.getLogger(__name__)

MAGIC = b"FFPRC\x00\x00\x01"
UNKNOWN_LABEL = 255
REQUEST = struct.Struct("<8sIB64d")
REPLY = struct.Struct("<8sIBd")
MAX_DATAGRAM = 65535


class DigitRequest(BaseModel):
    seq: int = Field(ge=0, lt=2 ** 32)
    label: Optional[int] = None
    features: List[float]


class DigitReply(BaseModel):
    seq: int
    digit: int
    score: float


class InferenceRecord(BaseModel):
    seq: int
    label: Optional[int]
    predicted: int
    score: float


def encode_request(seq: int, features: Sequence[float], label: Optional[int] = None) -> bytes:
    features = list(features)
    if len(features) != N_FEATURES:
        raise MalformedDatagram(f"Request needs {N_FEATURES} features, got {len(features)}")
    return REQUEST.pack(MAGIC, seq, UNKNOWN_LABEL if label is None else label, *features)


def decode_request(data: bytes) -> DigitRequest:
    """
    Raises:
        MalformedDatagram: On a wrong length or magic
    """
    if len(data) != REQUEST.size:
        raise MalformedDatagram(f"Request has {len(data)} bytes, expected {REQUEST.size}")
    magic, seq, label, *features = REQUEST.unpack(data)
    if magic != MAGIC:
        raise MalformedDatagram(f"Bad magic {magic!r}")
    return DigitRequest(seq=seq, label=None if label == UNKNOWN_LABEL else label, features=features)


def encode_reply(seq: int, digit: int, score: float) -> bytes:
    return REPLY.pack(MAGIC, seq, digit, score)


def decode_reply(data: bytes) -> DigitReply:
    if len(data) != REPLY.size:
        raise MalformedDatagram(f"Reply has {len(data)} bytes, expected {REPLY.size}")
    magic, seq, digit, score = REPLY.unpack(data)
    if magic != MAGIC:
        raise MalformedDatagram(f"Bad magic {magic!r}")
    return DigitReply(seq=seq, digit=digit, score=score)


class InferenceService:
    """
    UDP inference server running on a background thread.

    Datagrams are handled one at a time. Malformed and oversized payloads are
    counted and dropped; the results log is readable from other threads.
    """

    def __init__(self, model: ReadoutModel, host: str = "127.0.0.1", port: int = 0):
        self.model = model
        self.host = host
        self.port = port
        self.malformed = 0
        self.oversized = 0
        self._records: List[InferenceRecord] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._sock: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Tuple[str, int]:
        if self._sock is None:
            raise ServiceStartError("Service is not running")
        return self._sock.getsockname()[:2]

    def start(self) -> "InferenceService":
        """
        Bind the socket and start serving.

        Raises:
            ServiceStartError: If the address cannot be bound
        """
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            sock.bind((self.host, self.port))
        except OSError as e:
            sock.close()
            raise ServiceStartError(f"Cannot bind {self.host}:{self.port}: {e.strerror or e}") from None
        sock.settimeout(0.1)
        self._sock = sock
        self._stop.clear()
        self._thread = threading.Thread(target=self._serve, name="ferrolab-prc-service", daemon=True)
        self._thread.start()
        logger.info("Inference service listening on %s:%d", *self.address)
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self) -> "InferenceService":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def serve_forever(self) -> None:
        """Block until interrupted."""
        try:
            while self._thread is not None and self._thread.is_alive():
                self._thread.join(0.5)
        finally:
            self.stop()

    def handle(self, data: bytes) -> Optional[bytes]:
        """Process one datagram; returns the reply or None when it was dropped."""
        if len(data) > REQUEST.size:
            with self._lock:
                self.oversized += 1
            logger.warning("Dropped oversized datagram of %d bytes", len(data))
            return None
        try:
            request = decode_request(data)
        except MalformedDatagram as e:
            with self._lock:
                self.malformed += 1
            logger.warning("Dropped datagram: %s", e)
            return None

        score, digit = infer(self.model, request.features)
        with self._lock:
            self._records.append(InferenceRecord(seq=request.seq, label=request.label, predicted=digit, score=score))
        logger.debug("seq %d -> digit %d (score %.3f)", request.seq, digit, score)
        return encode_reply(request.seq, digit, score)

    def _serve(self) -> None:
        while not self._stop.is_set():
            try:
                data, peer = self._sock.recvfrom(MAX_DATAGRAM)
            except socket.timeout:
                continue
            except OSError:
                break
            reply = self.handle(data)
            if reply is not None:
                self._sock.sendto(reply, peer)

    def results(self) -> List[InferenceRecord]:
        with self._lock:
            return list(self._records)

    def results_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.results()], columns=["seq", "label", "predicted", "score"])

    def export_results(self, path: Path) -> Path:
        write_csv(self.results_frame(), path)
        return Path(path)


def send_digit(address: Tuple[str, int], seq: int, features: Sequence[float], label: Optional[int] = None,
               timeout: float = 5.0) -> DigitReply:
    """Send one request and wait for the reply."""
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.settimeout(timeout)
        sock.sendto(encode_request(seq, features, label), address)
        data, _ = sock.recvfrom(MAX_DATAGRAM)
    return decode_reply(data)


def stream(bench: Testbench, digits: DigitBitmaps, sequence: Sequence[int], address: Tuple[str, int],
           pixel_dwell: float = 2.0, v_black: float = -3.3, reset: Optional[PrcReset] = None,
           first_seq: int = 0, timeout: float = 5.0) -> List[DigitReply]:
    """
    Stream digits on the bench and send one request per completed digit.

    Args:
        bench: Bench to drive
        digits: Dataset
        sequence: Digits to stream; each is also sent as the true label
        address: Service address
        pixel_dwell: Duration of every pixel (s)
        v_black: Bias of a black pixel (V)
        reset: Reset endpoints
        first_seq: Sequence number of the first request

    Returns:
        Replies in sending order
    """
    replies = []
    for offset, digit in enumerate(sequence):
        _, trace = acquire_digit(bench, digits, digit, pixel_dwell, v_black, reset)
        replies.append(send_digit(address, first_seq + offset, trace, label=digit, timeout=timeout))
    return replies


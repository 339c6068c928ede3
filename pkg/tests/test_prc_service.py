"""
Unit tests for the datagram inference service in ferrolab.prc_service.
"""
import socket

import pytest

from ferrolab.prc_service import (
    MAGIC,
    REPLY,
    REQUEST,
    InferenceService,
    decode_reply,
    decode_request,
    encode_reply,
    encode_request,
    send_digit,
    stream,
)
from ferrolab.readout import infer
from ferrolab.utils import MalformedDatagram, ServiceStartError

FEATURES = [16400.0 - i for i in range(64)]


class TestCodec:
    """Tests for the request and reply wire format."""

    def test_sizes(self):
        """Test the fixed datagram sizes."""
        assert REQUEST.size == 525
        assert REPLY.size == 21
        assert len(MAGIC) == 8

    def test_request(self):
        """Test that a request keeps its sequence number, label and features."""
        request = decode_request(encode_request(42, FEATURES, label=3))
        assert (request.seq, request.label) == (42, 3)
        assert request.features == FEATURES

    def test_unlabelled(self):
        """Test that a missing label travels as the unknown marker."""
        assert decode_request(encode_request(1, FEATURES)).label is None

    def test_reply(self):
        """Test the reply fields."""
        reply = decode_reply(encode_reply(9, 2, 0.625))
        assert (reply.seq, reply.digit, reply.score) == (9, 2, 0.625)

    def test_malformed(self):
        """Test wrong lengths, wrong magic and wrong feature counts."""
        data = encode_request(1, FEATURES)
        with pytest.raises(MalformedDatagram):
            decode_request(data[:-1])
        with pytest.raises(MalformedDatagram):
            decode_request(b"X" * 8 + data[8:])
        with pytest.raises(MalformedDatagram):
            encode_request(1, FEATURES[:10])
        with pytest.raises(MalformedDatagram):
            decode_reply(encode_reply(1, 0, 0.0)[:-2])


class TestInferenceService:
    """Tests for the InferenceService class."""

    def test_handle(self, prc_model):
        """Test that a valid datagram is scored and recorded."""
        service = InferenceService(prc_model)
        reply = decode_reply(service.handle(encode_request(5, FEATURES, label=1)))
        score, digit = infer(prc_model, FEATURES)
        assert (reply.seq, reply.digit) == (5, digit)
        assert reply.score == pytest.approx(score)
        assert [r.seq for r in service.results()] == [5]

    def test_drops(self, prc_model):
        """Test that truncated and oversized payloads are counted and dropped."""
        service = InferenceService(prc_model)
        data = encode_request(1, FEATURES)
        assert service.handle(data[:100]) is None
        assert service.handle(data + b"\x00" * 10) is None
        assert (service.malformed, service.oversized) == (1, 1)
        assert service.results() == []

    def test_loopback(self, prc_model, temp_output_dir):
        """Test a round trip over UDP and the exported results."""
        with InferenceService(prc_model) as service:
            reply = send_digit(service.address, 7, FEATURES, label=2)
        assert reply.seq == 7
        assert reply.digit == infer(prc_model, FEATURES)[1]
        frame = service.results_frame()
        assert list(frame.columns) == ["seq", "label", "predicted", "score"]
        assert frame["label"].tolist() == [2]
        path = service.export_results(temp_output_dir / "inference.csv")
        assert path.read_text(encoding="utf-8").startswith("seq,label,predicted,score\n")

    def test_garbage_keeps_serving(self, prc_model):
        """Test that a malformed datagram does not stop the service."""
        with InferenceService(prc_model) as service:
            with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
                sock.sendto(b"garbage", service.address)
            reply = send_digit(service.address, 1, FEATURES)
            assert reply.seq == 1
            assert service.malformed == 1

    def test_port_in_use(self, prc_model):
        """Test that binding a taken port fails cleanly."""
        with InferenceService(prc_model) as first:
            second = InferenceService(prc_model, port=first.address[1])
            with pytest.raises(ServiceStartError):
                second.start()

    def test_address_when_stopped(self, prc_model):
        """Test that a stopped service has no address."""
        with pytest.raises(ServiceStartError):
            InferenceService(prc_model).address

    def test_stream(self, prc_model, bench, digits):
        """Test streaming digits from a bench to the service."""
        with InferenceService(prc_model) as service:
            replies = stream(bench, digits, [0, 3], service.address, first_seq=10)
        assert [r.seq for r in replies] == [10, 11]
        assert [r.label for r in service.results()] == [0, 3]

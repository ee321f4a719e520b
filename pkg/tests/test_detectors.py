import math
import random
import sys
from pathlib import Path

import pytest

from faceprobe.detectors import (
    ConstantScorer,
    DetectorScore,
    FixedRatesScorer,
    InProcessChannel,
    OracleScorer,
    SubprocessChannel,
    encode_error,
    encode_hello_request,
    encode_hello_response,
    encode_score_request,
    encode_score_response,
    flip_threshold,
    hashed_image_stats,
    image_channel_stats,
    parse_score_response,
    should_flip,
    unit_draw,
)
from faceprobe.errors import DetectorError, DetectorProtocolError, ValidationError
from faceprobe.model import GenMethod, ProbeImage, ProbeKind, normalize_identity

HELPER = str(Path(__file__).parent / "helper_stub_server.py")


def _probe(pid="p-001", uri="/data/p-001.png"):
    return ProbeImage(pid, uri, ProbeKind.REAL, GenMethod.NOT_APPLICABLE, "d",
                      target=normalize_identity("a"))


class TestWireEncoding:
    def test_canonical_request_bytes(self):
        assert encode_hello_request() == '{"op":"hello"}'
        assert (
            encode_score_request("p-001", "/data/p-001.png")
            == '{"op":"score","probe_id":"p-001","image_path":"/data/p-001.png"}'
        )

    def test_canonical_response_bytes(self):
        assert encode_hello_response("stub-1") == '{"detector_id":"stub-1","protocol":1}'
        assert (
            encode_score_response("p-001", "stub-1", 0.5)
            == '{"probe_id":"p-001","detector_id":"stub-1","p_fake":0.500000}'
        )
        assert (
            encode_score_response("p", "s", 1.0)
            == '{"probe_id":"p","detector_id":"s","p_fake":1.000000}'
        )
        assert encode_error("malformed request") == '{"error":"malformed request"}'

    def test_strings_are_json_escaped(self):
        line = encode_score_request('we"ird', "/tmp/a b.png")
        import json

        doc = json.loads(line)
        assert doc["probe_id"] == 'we"ird'

    def test_parse_accepts_valid_response(self):
        score = parse_score_response('{"probe_id":"p","detector_id":"d","p_fake":0.25}', "p")
        assert score == DetectorScore("d", 0.25)

    @pytest.mark.parametrize("line", [
        "not json",
        '{"probe_id":"p","detector_id":"d"}',
        '{"probe_id":"p","detector_id":"d","p_fake":1.3}',
        '{"probe_id":"p","detector_id":"d","p_fake":"high"}',
        '[1,2,3]',
    ])
    def test_parse_rejects_protocol_violations(self, line):
        with pytest.raises(DetectorProtocolError):
            parse_score_response(line)

    def test_parse_surfaces_detector_errors(self):
        with pytest.raises(DetectorError, match="boom"):
            parse_score_response('{"error":"boom"}')

    def test_parse_checks_probe_identity(self):
        with pytest.raises(DetectorProtocolError, match="expected"):
            parse_score_response('{"probe_id":"x","detector_id":"d","p_fake":0.1}', "p")


class TestFlipDerivation:
    def test_deterministic(self):
        assert should_flip("d1", 7, "p-1", 0.5) == should_flip("d1", 7, "p-1", 0.5)

    def test_rate_bounds(self):
        assert not should_flip("d1", 7, "p-1", 0.0)
        assert should_flip("d1", 7, "p-1", 1.0)
        with pytest.raises(ValidationError):
            should_flip("d1", 7, "p-1", 1.5)

    def test_threshold_arithmetic(self):
        assert flip_threshold(0.0) == 0
        assert flip_threshold(1.0) == 2**64
        assert flip_threshold(0.5) == 2**63

    def test_empirical_rate_within_binomial_tolerance(self):
        """10,000 draws at rate 0.021: frequency within 3 binomial sigma."""
        rate = 0.021
        n = 10_000
        flips = sum(should_flip("d1", 7, f"probe-{i}", rate) for i in range(n))
        sigma = math.sqrt(rate * (1 - rate) / n)
        assert abs(flips / n - rate) <= 3 * sigma

    def test_different_detectors_flip_independently(self):
        n = 5_000
        rate = 0.3
        both = sum(
            should_flip("d1", 7, f"p{i}", rate) and should_flip("d2", 7, f"p{i}", rate)
            for i in range(n)
        )
        sigma = math.sqrt(rate**2 * (1 - rate**2) / n)
        assert abs(both / n - rate**2) <= 3 * sigma


class TestScorers:
    def test_oracle(self, tiny_manifest):
        oracle = OracleScorer(tiny_manifest)
        assert oracle.score("f-swap", "x") == 1.0
        assert oracle.score("r-emma-1", "x") == 0.0
        with pytest.raises(DetectorError, match="not in manifest"):
            oracle.score("ghost", "x")

    def test_fixed_rates_flip_matches_derivation(self, tiny_manifest):
        scorer = FixedRatesScorer(tiny_manifest, "d1", fnr=0.4, fpr=0.1, seed=3)
        for pid, truth in [("f-swap", 1.0), ("r-emma-1", 0.0)]:
            rate = 0.4 if truth == 1.0 else 0.1
            expected = 1.0 - truth if should_flip("d1", 3, pid, rate) else truth
            assert scorer.score(pid, "x") == expected

    def test_constant_validation(self):
        with pytest.raises(ValidationError):
            ConstantScorer(1.5)


class TestInProcessChannel:
    def test_scores_and_identity(self, tiny_manifest):
        channel = InProcessChannel("stub-1", ConstantScorer(0.979))
        score = channel.score(_probe())
        assert score == DetectorScore("stub-1", 0.979)

    def test_out_of_range_score_is_a_protocol_violation(self):
        class Broken:
            def score(self, probe_id, image_path):
                return 1.3

        channel = InProcessChannel("bad", Broken())
        with pytest.raises(DetectorProtocolError, match="outside"):
            channel.score(_probe())


class TestSubprocessChannel:
    def _channel(self, *extra, timeout_s=10.0):
        return SubprocessChannel(
            [sys.executable, HELPER, *extra], timeout_s=timeout_s
        )

    def test_handshake_and_scoring(self):
        with self._channel("--p-fake", "0.25", "--detector-id", "ext-1") as channel:
            score = channel.score(_probe("p-1"))
            assert score == DetectorScore("ext-1", 0.25)
            assert channel.detector_id == "ext-1"
            # order-preserving across multiple requests
            assert channel.score(_probe("p-2")).p_fake == 0.25

    def test_timeout_is_a_detector_error(self):
        with self._channel("--sleep", "2", timeout_s=0.2) as channel:
            with pytest.raises(DetectorError, match="timed out"):
                channel.score(_probe())

    def test_crash_is_a_detector_error(self):
        with self._channel("--die-after", "1") as channel:
            channel.score(_probe("p-1"))
            with pytest.raises(DetectorError):
                channel.score(_probe("p-2"))
                channel.score(_probe("p-3"))

    def test_garbage_line_is_a_protocol_violation(self):
        with self._channel("--garbage") as channel:
            with pytest.raises(DetectorProtocolError):
                channel.score(_probe())

    def test_unstartable_command(self):
        channel = SubprocessChannel(["/nonexistent-binary"])
        with pytest.raises(DetectorError, match="cannot start"):
            channel.score(_probe())


class TestGoldenFixtures:
    FIXDIR = Path(__file__).parent / "fixtures" / "protocol"

    def test_encoders_reproduce_request_fixture_lines(self):
        lines = (self.FIXDIR / "requests.golden.jsonl").read_text().splitlines()
        assert lines[0] == encode_hello_request()
        assert lines[1] == encode_score_request("p-001", "/data/p-001.png")
        assert lines[2] == encode_score_request("p-002", "/data/sub dir/p-002.png")
        assert lines[3] == encode_score_request('p-"quoted"', "/data/p-003.png")
        assert lines[6] == encode_score_request("p-004", "/data/p-004.png")

    def test_helper_server_reproduces_response_fixture_bytes(self):
        import subprocess

        requests = (self.FIXDIR / "requests.golden.jsonl").read_bytes()
        expected = (self.FIXDIR / "responses_const_0.5.golden.jsonl").read_bytes()
        proc = subprocess.run(
            [sys.executable, HELPER, "--p-fake", "0.5", "--detector-id", "stub-1"],
            input=requests, capture_output=True, timeout=30,
        )
        assert proc.stdout == expected

    def test_flip_vector_fixture_matches_derivation(self):
        import json

        vectors = json.loads((self.FIXDIR / "fixedrates_vectors.json").read_text())
        assert len(vectors) >= 20
        for v in vectors:
            assert str(unit_draw(v["detector_id"], v["seed"], v["probe_id"])) == v["u"]
            assert should_flip(v["detector_id"], v["seed"], v["probe_id"], v["rate"]) == v["flip"]


class TestAuxFeatures:
    def test_hashed_stats_shape_and_determinism(self):
        probe = _probe()
        stats = hashed_image_stats(probe)
        assert stats == hashed_image_stats(probe)
        assert len(stats) == 6
        assert all(0.0 <= v <= 1.0 for v in stats[:3])
        assert all(0.0 <= v <= 0.25 for v in stats[3:])
        assert stats != hashed_image_stats(_probe("p-002", "/data/p-002.png"))

    def test_image_stats_on_a_real_file(self, tmp_path):
        PIL = pytest.importorskip("PIL.Image")
        path = tmp_path / "gray.png"
        PIL.new("RGB", (8, 8), color=(128, 64, 0)).save(path)
        stats = image_channel_stats(_probe(uri=str(path)))
        assert stats[0] == pytest.approx(128 / 255)
        assert stats[1] == pytest.approx(64 / 255)
        assert stats[2] == pytest.approx(0.0)
        assert stats[3:] == pytest.approx([0.0, 0.0, 0.0])

    def test_image_stats_unreadable_file(self, tmp_path):
        pytest.importorskip("PIL.Image")
        with pytest.raises(DetectorError, match="cannot read"):
            image_channel_stats(_probe(uri=str(tmp_path / "missing.png")))

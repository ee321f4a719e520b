"""Deepfake-detector plugins: wire protocol, channels, and stub scorers.

Detectors are opaque processes speaking line-delimited JSON over
stdin/stdout. The wire format is bit-exact so independent implementations
can be validated against shared golden fixtures:

    request   {"op":"hello"}
    response  {"detector_id":"...","protocol":1}
    request   {"op":"score","probe_id":"...","image_path":"..."}
    response  {"probe_id":"...","detector_id":"...","p_fake":0.500000}
    error     {"error":"malformed request"} | {"error":"unsupported op"}

One response line per request line, order-preserving, UTF-8; ``p_fake`` is
always printed with exactly six fractional digits.

The stub scorers stand in for real detection models: an oracle that reads
ground truth from a manifest, a fixed-error-rate scorer that flips the
oracle deterministically, and a constant scorer. The flip decision is a
pure function of (detector_id, seed, probe_id) built on SHA-256 so any
language reproduces it bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import queue
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

from .errors import DetectorError, DetectorProtocolError, ValidationError
from .manifest import DatasetManifest
from .model import ProbeImage

PROTOCOL_VERSION = 1
ERR_MALFORMED = "malformed request"
ERR_UNSUPPORTED = "unsupported op"


@dataclass(frozen=True, slots=True)
class DetectorScore:
    detector_id: str
    p_fake: float

    def __post_init__(self):
        if not 0.0 <= self.p_fake <= 1.0:
            raise ValidationError(f"p_fake {self.p_fake} outside [0, 1]")


# ---------------------------------------------------------------------------
# Canonical wire encoding


def encode_hello_request() -> str:
    return '{"op":"hello"}'


def encode_score_request(probe_id: str, image_path: str) -> str:
    return '{"op":"score","probe_id":%s,"image_path":%s}' % (
        json.dumps(probe_id, ensure_ascii=False),
        json.dumps(image_path, ensure_ascii=False),
    )


def encode_hello_response(detector_id: str) -> str:
    return '{"detector_id":%s,"protocol":%d}' % (
        json.dumps(detector_id, ensure_ascii=False),
        PROTOCOL_VERSION,
    )


def encode_score_response(probe_id: str, detector_id: str, p_fake: float) -> str:
    return '{"probe_id":%s,"detector_id":%s,"p_fake":%.6f}' % (
        json.dumps(probe_id, ensure_ascii=False),
        json.dumps(detector_id, ensure_ascii=False),
        p_fake,
    )


def encode_error(message: str) -> str:
    return '{"error":%s}' % json.dumps(message, ensure_ascii=False)


def parse_score_response(line: str, expect_probe_id: str | None = None) -> DetectorScore:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as e:
        raise DetectorProtocolError(f"response is not JSON: {line!r}") from e
    if not isinstance(doc, dict):
        raise DetectorProtocolError(f"response is not an object: {line!r}")
    if "error" in doc:
        raise DetectorError(f"detector reported error: {doc['error']}")
    for key in ("probe_id", "detector_id", "p_fake"):
        if key not in doc:
            raise DetectorProtocolError(f"response missing {key!r}: {line!r}")
    if expect_probe_id is not None and doc["probe_id"] != expect_probe_id:
        raise DetectorProtocolError(
            f"response for {doc['probe_id']!r}, expected {expect_probe_id!r}"
        )
    p = doc["p_fake"]
    if not isinstance(p, (int, float)) or isinstance(p, bool) or not 0.0 <= float(p) <= 1.0:
        raise DetectorProtocolError(f"p_fake out of range in {line!r}")
    return DetectorScore(detector_id=str(doc["detector_id"]), p_fake=float(p))


# ---------------------------------------------------------------------------
# Deterministic flip shared with out-of-process stubs


def flip_threshold(rate: float) -> int:
    # int(float) truncation matches BigInt(Math.floor(x)) in JS for x >= 0
    return int(rate * 2**64)


def unit_draw(detector_id: str, seed: int, probe_id: str) -> int:
    digest = hashlib.sha256(f"{detector_id}|{seed}|{probe_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def should_flip(detector_id: str, seed: int, probe_id: str, rate: float) -> bool:
    if not 0.0 <= rate <= 1.0:
        raise ValidationError(f"rate {rate} outside [0, 1]")
    return unit_draw(detector_id, seed, probe_id) < flip_threshold(rate)


# ---------------------------------------------------------------------------
# Stub scorers


class Scorer(Protocol):
    def score(self, probe_id: str, image_path: str) -> float:
        """Fake-probability in [0, 1] for the given probe."""
        ...


class ConstantScorer:
    def __init__(self, p_fake: float):
        if not 0.0 <= p_fake <= 1.0:
            raise ValidationError(f"p_fake {p_fake} outside [0, 1]")
        self.p_fake = p_fake

    def score(self, probe_id: str, image_path: str) -> float:
        return self.p_fake


class OracleScorer:
    """Answers ground truth from the manifest: 1.0 for fakes, 0.0 for reals."""

    def __init__(self, manifest: DatasetManifest):
        self._fake = {p.probe_id: p.is_fake for p in manifest.probes}

    def score(self, probe_id: str, image_path: str) -> float:
        if probe_id not in self._fake:
            raise DetectorError(f"probe {probe_id!r} not in manifest")
        return 1.0 if self._fake[probe_id] else 0.0


class FixedRatesScorer:
    """Oracle with configured error rates: the answer flips with
    probability ``fnr`` on fakes and ``fpr`` on reals, deterministically in
    (detector_id, seed, probe_id)."""

    def __init__(self, manifest: DatasetManifest, detector_id: str,
                 fnr: float = 0.0, fpr: float = 0.0, seed: int = 0):
        for rate in (fnr, fpr):
            if not 0.0 <= rate <= 1.0:
                raise ValidationError(f"rate {rate} outside [0, 1]")
        self._oracle = OracleScorer(manifest)
        self.detector_id = detector_id
        self.fnr = fnr
        self.fpr = fpr
        self.seed = seed

    def score(self, probe_id: str, image_path: str) -> float:
        truth = self._oracle.score(probe_id, image_path)
        rate = self.fnr if truth == 1.0 else self.fpr
        if should_flip(self.detector_id, self.seed, probe_id, rate):
            return 1.0 - truth
        return truth


# ---------------------------------------------------------------------------
# Channels


class DetectorChannel(Protocol):
    detector_id: str

    def score(self, probe: ProbeImage) -> DetectorScore:
        ...


class InProcessChannel:
    """Runs a scorer in this process while enforcing the same contract the
    wire protocol would (range validation, detector identity)."""

    def __init__(self, detector_id: str, scorer: Scorer):
        self.detector_id = detector_id
        self._scorer = scorer

    def score(self, probe: ProbeImage) -> DetectorScore:
        p = self._scorer.score(probe.probe_id, probe.uri)
        if not isinstance(p, (int, float)) or not 0.0 <= float(p) <= 1.0:
            raise DetectorProtocolError(
                f"{self.detector_id}: score {p!r} outside [0, 1]"
            )
        return DetectorScore(detector_id=self.detector_id, p_fake=float(p))


class SubprocessChannel:
    """Talks to a detector process over its stdin/stdout."""

    def __init__(self, command: Sequence[str], timeout_s: float = 10.0):
        self.command = list(command)
        self.timeout_s = timeout_s
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._lock = threading.Lock()
        self.detector_id = ""

    def _ensure_started(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise DetectorError(f"cannot start detector {self.command}: {e}") from e
        threading.Thread(target=self._pump, daemon=True).start()
        reply = self._exchange(encode_hello_request())
        try:
            doc = json.loads(reply)
            if doc.get("protocol") != PROTOCOL_VERSION or "detector_id" not in doc:
                raise DetectorProtocolError(f"bad handshake: {reply!r}")
        except json.JSONDecodeError as e:
            raise DetectorProtocolError(f"bad handshake: {reply!r}") from e
        self.detector_id = doc["detector_id"]

    def _pump(self) -> None:
        assert self._proc is not None and self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line.rstrip("\n"))
        self._lines.put(None)  # EOF marker

    def _exchange(self, request_line: str) -> str:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(request_line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise DetectorError(f"detector process died: {e}") from e
        try:
            line = self._lines.get(timeout=self.timeout_s)
        except queue.Empty:
            raise DetectorError(
                f"detector timed out after {self.timeout_s}s on {request_line!r}"
            ) from None
        if line is None:
            raise DetectorError("detector closed its output stream")
        return line

    def score(self, probe: ProbeImage) -> DetectorScore:
        with self._lock:
            self._ensure_started()
            reply = self._exchange(encode_score_request(probe.probe_id, probe.uri))
        return parse_score_response(reply, expect_probe_id=probe.probe_id)

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin is not None:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------------------
# Auxiliary image-statistic features for the stacking combiner


def hashed_image_stats(probe: ProbeImage, seed: int = 0) -> list[float]:
    """Deterministic stand-in for per-channel mean/variance when probes are
    locators without readable pixel data (synthetic campaigns)."""
    digest = hashlib.sha256(f"{seed}|aux|{probe.probe_id}|{probe.uri}".encode()).digest()
    units = [
        int.from_bytes(digest[i: i + 4], "big") / 2**32 for i in range(0, 24, 4)
    ]
    return [*units[:3], *(0.25 * u for u in units[3:])]


def image_channel_stats(probe: ProbeImage) -> list[float]:
    """Per-channel mean and variance of the actual image, scaled to [0, 1]."""
    try:
        from PIL import Image
    except ImportError as e:  # pragma: no cover - optional extra
        raise DetectorError("Pillow is required for image statistics") from e
    import numpy as np

    try:
        with Image.open(probe.uri) as img:
            arr = np.asarray(img.convert("RGB"), dtype=float) / 255.0
    except OSError as e:
        raise DetectorError(f"cannot read image {probe.uri!r}: {e}") from e
    means = arr.mean(axis=(0, 1))
    variances = arr.var(axis=(0, 1))
    return [*means.tolist(), *variances.tolist()]

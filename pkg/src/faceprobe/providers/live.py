"""Live HTTP adapter with configuration-driven response mapping.

Provider payload schemas differ, so each adapter is data: a dotted path to
the predicted name, a path to the confidence, and a scale factor. The only
code is the transport, which is injectable for testing and signing.
"""

from __future__ import annotations

import base64
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from ..errors import ProbeUnreadableError, ProviderError, TransientProviderError
from ..model import Match, Prediction, ProbeImage, normalize_identity


@dataclass(frozen=True)
class TransportResponse:
    status: int
    payload: Any
    latency_ms: float


Transport = Callable[[str, str, Mapping[str, str], Any], TransportResponse]
SignHook = Callable[[str, Mapping[str, str], Any], Mapping[str, str]]


@dataclass(frozen=True)
class LiveEndpoint:
    url: str
    method: str = "POST"
    # body is a JSON template; string values may use the placeholders
    # {image_b64}, {image_b64_2}, {image_uri}, {image_uri_2}
    body: Mapping[str, Any] = field(default_factory=dict)
    name_path: str = "name"
    confidence_path: str = "confidence"
    confidence_scale: float = 1.0  # multiplier turning the raw value into percent
    similarity_path: str = "similarity"
    similarity_scale: float = 1.0


@dataclass(frozen=True)
class LiveProviderConfig:
    provider_id: str
    recognition: LiveEndpoint
    similarity: LiveEndpoint | None = None
    headers: Mapping[str, str] = field(default_factory=dict)
    timeout_s: float = 30.0


def extract_path(payload: Any, path: str) -> Any:
    """Walk a dotted path; integer segments index arrays. None when absent."""
    node = payload
    for part in path.split("."):
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                return None
        elif isinstance(node, dict):
            if part not in node:
                return None
            node = node[part]
        else:
            return None
    return node


def resolve_headers(headers: Mapping[str, str]) -> dict[str, str]:
    """Expand ``env:VAR`` values; credentials stay out of config files."""
    resolved = {}
    for key, value in headers.items():
        if value.startswith("env:"):
            var = value[4:]
            if var not in os.environ:
                raise ProviderError(f"credential environment variable {var!r} is not set")
            resolved[key] = os.environ[var]
        else:
            resolved[key] = value
    return resolved


class RequestsTransport:
    def __init__(self, timeout_s: float = 30.0):
        self.timeout_s = timeout_s

    def __call__(self, method: str, url: str, headers: Mapping[str, str], body: Any) -> TransportResponse:
        import requests

        start = time.monotonic()
        try:
            resp = requests.request(method, url, headers=dict(headers), json=body,
                                    timeout=self.timeout_s)
        except requests.RequestException as e:
            raise TransientProviderError(f"network failure calling {url}: {e}") from e
        latency = (time.monotonic() - start) * 1000.0
        try:
            payload = resp.json()
        except ValueError:
            payload = None
        return TransportResponse(resp.status_code, payload, latency)


def _probe_placeholders(probe: ProbeImage, suffix: str = "") -> dict[str, str]:
    if probe.uri.startswith(("http://", "https://")):
        return {f"image_uri{suffix}": probe.uri, f"image_b64{suffix}": ""}
    try:
        raw = Path(probe.uri).read_bytes()
    except OSError as e:
        raise ProbeUnreadableError(f"probe {probe.probe_id!r}: cannot read {probe.uri!r}: {e}") from e
    return {f"image_b64{suffix}": base64.b64encode(raw).decode("ascii"),
            f"image_uri{suffix}": probe.uri}


def _render(template: Any, values: Mapping[str, str]) -> Any:
    if isinstance(template, str):
        for key, val in values.items():
            template = template.replace("{%s}" % key, val)
        return template
    if isinstance(template, dict):
        return {k: _render(v, values) for k, v in template.items()}
    if isinstance(template, list):
        return [_render(v, values) for v in template]
    return template


class LiveBackend:
    def __init__(self, config: LiveProviderConfig, transport: Transport | None = None,
                 sign_hook: SignHook | None = None):
        self.config = config
        self.provider_id = config.provider_id
        self._transport = transport or RequestsTransport(config.timeout_s)
        self._sign_hook = sign_hook

    def _call(self, endpoint: LiveEndpoint, body: Any) -> TransportResponse:
        headers = resolve_headers(self.config.headers)
        if self._sign_hook is not None:
            headers = dict(self._sign_hook(endpoint.url, headers, body))
        resp = self._transport(endpoint.method, endpoint.url, headers, body)
        if resp.status == 429:
            raise TransientProviderError(f"{self.provider_id}: throttled (429)", billable=True)
        if resp.status >= 500:
            raise TransientProviderError(f"{self.provider_id}: server error {resp.status}")
        if resp.status >= 400:
            raise ProviderError(f"{self.provider_id}: request rejected with {resp.status}")
        if resp.payload is None:
            raise ProviderError(f"{self.provider_id}: response is not JSON")
        return resp

    def recognize_celebrity(self, probe: ProbeImage) -> tuple[Prediction, float]:
        endpoint = self.config.recognition
        body = _render(endpoint.body, _probe_placeholders(probe))
        resp = self._call(endpoint, body)
        name = extract_path(resp.payload, endpoint.name_path)
        if name in (None, ""):
            return Prediction(None), resp.latency_ms
        raw_conf = extract_path(resp.payload, endpoint.confidence_path)
        if raw_conf is None:
            raise ProviderError(f"{self.provider_id}: match without confidence in response")
        confidence = round(float(raw_conf) * endpoint.confidence_scale, 2)
        return Prediction(Match(normalize_identity(str(name)), confidence)), resp.latency_ms

    def face_similarity(self, real_probe: ProbeImage, fake_probe: ProbeImage) -> tuple[float, float]:
        endpoint = self.config.similarity
        if endpoint is None:
            raise ProviderError(f"{self.provider_id}: no similarity endpoint configured")
        values = {**_probe_placeholders(real_probe), **_probe_placeholders(fake_probe, "_2")}
        resp = self._call(endpoint, _render(endpoint.body, values))
        raw = extract_path(resp.payload, endpoint.similarity_path)
        if raw is None:
            raise ProviderError(f"{self.provider_id}: response lacks similarity value")
        return round(float(raw) * endpoint.similarity_scale, 2), resp.latency_ms

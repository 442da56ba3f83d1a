"""HTTP bridge to a real model.

Wire contract (POST, JSON)::

    request:  {"instruction": str, "history": [str], "image_b64": str | null,
               "elements": [{"id": str, "bbox": [4 ints], "label": str}] | null,
               "n": int, "temperature": float}
    response: {"outputs": [str]}
"""

from __future__ import annotations

import logging
import os
import time
from typing import Optional

import httpx

from guire.policies import Observation, PolicyError

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "GUIRE_ENDPOINT"


class RemoteError(PolicyError):
    pass


class RemoteTimeout(RemoteError):
    pass


class BadStatus(RemoteError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"remote returned HTTP {status}: {body[:200]}")
        self.status = status


class RemoteSchemaError(RemoteError):
    pass


def resolve_endpoint(flag: Optional[str] = None) -> str:
    """Flag wins over the environment variable."""
    endpoint = flag or os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise RemoteError(f"no endpoint: pass one explicitly or set {ENDPOINT_ENV}")
    return endpoint


def build_request(obs: Observation, n: int, temperature: float) -> dict:
    elements = None
    if obs.elements is not None:
        elements = [e.as_dict() for e in obs.elements]
    return {
        "instruction": obs.instruction,
        "history": list(obs.history),
        "image_b64": obs.image_b64,
        "elements": elements,
        "n": int(n),
        "temperature": float(temperature),
    }


def parse_response(doc, n: int) -> list[str]:
    if not isinstance(doc, dict) or not isinstance(doc.get("outputs"), list):
        raise RemoteSchemaError("response must be an object with an 'outputs' list")
    outputs = doc["outputs"]
    if not all(isinstance(o, str) for o in outputs):
        raise RemoteSchemaError("every output must be a string")
    if len(outputs) != n:
        raise RemoteSchemaError(f"asked for {n} outputs, got {len(outputs)}")
    return outputs


def remote_generate(endpoint: str, obs: Observation, n: int, temperature: float = 1.0, *,
                    timeout: float = 30.0, retries: int = 2, backoff: float = 0.5,
                    client: Optional[httpx.Client] = None) -> list[str]:
    """One POST per attempt; at most ``1 + retries`` attempts.

    Only timeouts, connection failures and 5xx responses are retried, with
    exponential backoff. 4xx responses and malformed bodies fail immediately.
    """
    payload = build_request(obs, n, temperature)
    own = client is None
    client = client or httpx.Client(timeout=timeout)
    try:
        attempt = 0
        while True:
            try:
                resp = client.post(endpoint, json=payload)
            except httpx.TimeoutException as e:
                err: RemoteError = RemoteTimeout(f"request to {endpoint} timed out: {e}")
            except httpx.TransportError as e:
                err = RemoteError(f"transport error talking to {endpoint}: {e}")
            else:
                if resp.status_code >= 500:
                    err = BadStatus(resp.status_code, resp.text)
                elif resp.status_code != 200:
                    raise BadStatus(resp.status_code, resp.text)
                else:
                    try:
                        doc = resp.json()
                    except ValueError as e:
                        raise RemoteSchemaError(f"response is not JSON: {e}") from e
                    return parse_response(doc, n)
            if attempt >= retries:
                raise err
            delay = backoff * (2 ** attempt)
            logger.warning("remote attempt %d failed (%s); retrying in %.2fs", attempt + 1, err, delay)
            time.sleep(delay)
            attempt += 1
    finally:
        if own:
            client.close()


class RemotePolicy:
    def __init__(self, endpoint: Optional[str] = None, timeout: float = 30.0, retries: int = 2,
                 backoff: float = 0.5):
        self.endpoint = resolve_endpoint(endpoint)
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._client = httpx.Client(timeout=timeout)

    def generate(self, obs: Observation, n: int, temperature: float = 1.0) -> list[str]:
        return remote_generate(self.endpoint, obs, n, temperature, timeout=self.timeout,
                               retries=self.retries, backoff=self.backoff, client=self._client)

    def close(self) -> None:
        self._client.close()

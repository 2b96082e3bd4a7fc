"""JSON-over-HTTP calls with timeouts and capped exponential backoff."""

from __future__ import annotations

import base64
import logging
import time

import requests

from .errors import BackendTimeout, BackendUnavailable, MalformedResponse
from .pixels import PixelBuffer, encode_png

log = logging.getLogger(__name__)


def image_payload(img: PixelBuffer) -> dict:
    return {"image_b64": base64.b64encode(encode_png(img)).decode("ascii"), "format": "png"}


def post_json(
    url: str,
    payload: dict,
    *,
    timeout: float = 30.0,
    retries: int = 3,
    backoff: float = 0.5,
    max_backoff: float = 8.0,
    session: requests.Session | None = None,
) -> dict:
    """POST ``payload`` and return the decoded JSON object.

    Connection errors, timeouts and 5xx responses are retried, ``retries``
    attempts in total. Other non-200 statuses and undecodable bodies raise
    MalformedResponse immediately.
    """
    http = session or requests
    attempts = max(1, int(retries))
    last = None
    for attempt in range(attempts):
        if attempt:
            time.sleep(min(max_backoff, backoff * 2 ** (attempt - 1)))
        try:
            resp = http.post(url, json=payload, timeout=timeout)
        except requests.Timeout as exc:
            last = BackendTimeout(f"{url} timed out after {timeout}s")
            last.__cause__ = exc
            continue
        except requests.RequestException as exc:
            last = BackendUnavailable(f"{url} unreachable: {exc}")
            last.__cause__ = exc
            continue
        if resp.status_code >= 500:
            last = BackendUnavailable(f"{url} returned HTTP {resp.status_code}")
            continue
        if resp.status_code != 200:
            raise MalformedResponse(f"{url} returned HTTP {resp.status_code}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"{url} returned a non-JSON body") from exc
        if not isinstance(body, dict):
            raise MalformedResponse(f"{url} returned {type(body).__name__}, expected an object")
        return body
    log.warning("giving up on %s after %d attempts", url, attempts)
    raise last


def get_ok(url: str, timeout: float = 5.0) -> bool:
    try:
        return requests.get(url, timeout=timeout).status_code == 200
    except requests.RequestException:
        return False

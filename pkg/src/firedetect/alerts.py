"""Webhook alert delivery with retries and idempotency keys.

Alerts go out as an HTTP POST of a JSON body:

    {"event": "fire"|"smoke", "timestamp": ISO-8601, "confidence": number,
     "snapshot_ref": string|null, "idempotency_key": string}

Delivery is at-least-once: transport failures and 5xx responses are retried
with exponential backoff, and every attempt for the same alert carries the
same idempotency key (derived from the event kind and timestamp) so the
receiver can deduplicate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import httpx

from .fusion import AlertMessage


@dataclass
class DeliveryResult:
    ok: bool
    attempts: int
    status: int | None = None
    error: str | None = None


def idempotency_key(message: AlertMessage) -> str:
    return f"{message.event_kind}:{message.timestamp}"


def alert_body(message: AlertMessage) -> dict:
    return {
        "event": message.event_kind,
        "timestamp": message.timestamp,
        "confidence": message.confidence,
        "snapshot_ref": message.snapshot_ref,
        "idempotency_key": idempotency_key(message),
    }


class WebhookNotifier:
    """POSTs alerts to a configured endpoint, retrying transient failures.

    4xx responses are treated as permanent and fail immediately; 5xx and
    transport errors are retried up to ``max_attempts`` with exponential
    backoff starting at ``backoff_s``.
    """

    def __init__(
        self,
        endpoint: str,
        max_attempts: int = 3,
        backoff_s: float = 0.5,
        timeout_s: float = 5.0,
    ):
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        self.endpoint = endpoint
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s

    def send(self, message: AlertMessage) -> DeliveryResult:
        body = alert_body(message)
        last_status = None
        last_error = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = httpx.post(self.endpoint, json=body, timeout=self.timeout_s)
                last_status = response.status_code
                if 200 <= response.status_code < 300:
                    return DeliveryResult(ok=True, attempts=attempt, status=response.status_code)
                if 400 <= response.status_code < 500:
                    return DeliveryResult(
                        ok=False,
                        attempts=attempt,
                        status=response.status_code,
                        error=f"rejected with status {response.status_code}",
                    )
                last_error = f"server error {response.status_code}"
            except httpx.HTTPError as exc:
                last_error = str(exc)
            if attempt < self.max_attempts:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
        return DeliveryResult(
            ok=False, attempts=self.max_attempts, status=last_status, error=last_error
        )


class DryRunNotifier:
    """Collects alerts instead of sending them; used by --dry-run paths and tests."""

    def __init__(self):
        self.sent: list[dict] = []

    def send(self, message: AlertMessage) -> DeliveryResult:
        self.sent.append(alert_body(message))
        return DeliveryResult(ok=True, attempts=1, status=None)

"""Shared mock clients and helpers. Tests never hit live endpoints."""

from __future__ import annotations

import pytest

from inkatlas.clients import ClientError, RetryPolicy


FAST_RETRY = RetryPolicy(retries=3, base_delay=0.0, sleep=lambda _: None)


class EchoTextClient:
    """Returns its own prompt; used to assert containment contracts."""

    def __init__(self):
        self.calls = []

    def complete(self, prompt, image_ref=None):
        self.calls.append((prompt, image_ref))
        return prompt


class SequenceTextClient:
    """Plays back canned responses in order."""

    def __init__(self, responses):
        self._responses = list(responses)
        self.calls = []

    def complete(self, prompt, image_ref=None):
        self.calls.append((prompt, image_ref))
        if not self._responses:
            raise ClientError("sequence exhausted")
        return self._responses.pop(0)


class FailingTextClient:
    def __init__(self, message="endpoint down"):
        self.calls = 0
        self._message = message

    def complete(self, prompt, image_ref=None):
        self.calls += 1
        raise ConnectionError(self._message)


class FlakyTextClient:
    """Fails `failures` times, then delegates to the inner client."""

    def __init__(self, inner, failures):
        self._inner = inner
        self._remaining = failures
        self.calls = 0

    def complete(self, prompt, image_ref=None):
        self.calls += 1
        if self._remaining > 0:
            self._remaining -= 1
            raise ConnectionError("transient")
        return self._inner.complete(prompt, image_ref)


class StubImageClient:
    """Writes n placeholder refs; optionally records reference images."""

    def __init__(self, prefix="generated"):
        self.prefix = prefix
        self.requests = []
        self._counter = 0

    def generate(self, prompt, n, reference_image=None):
        self.requests.append({"prompt": prompt, "n": n, "reference_image": reference_image})
        refs = [f"{self.prefix}/{self._counter + i}.png" for i in range(n)]
        self._counter += n
        return refs


class FailingImageClient:
    def __init__(self, message="image endpoint down"):
        self.calls = 0
        self._message = message

    def generate(self, prompt, n, reference_image=None):
        self.calls += 1
        raise ConnectionError(self._message)


@pytest.fixture
def fast_retry():
    return FAST_RETRY

"""Token-bucket admission control with pluggable clocks.

The core ``admit`` step is a pure function of (state, now) so its schedule
can be verified exactly under a simulated clock.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, replace


@dataclass(frozen=True, slots=True)
class BucketState:
    capacity: float
    refill_per_s: float
    tokens: float
    updated_at: float

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("bucket capacity must be >= 1")
        if self.refill_per_s <= 0:
            raise ValueError("refill rate must be positive")


def new_bucket(capacity: float, refill_per_s: float, now: float = 0.0) -> BucketState:
    """A bucket starts full: bursts up to ``capacity`` are admitted at once."""
    return BucketState(capacity, refill_per_s, tokens=capacity, updated_at=now)


@dataclass(frozen=True, slots=True)
class Admission:
    proceed: bool
    wait_s: float = 0.0


# Refill arithmetic accumulates float error as timestamps grow; a request
# short of a full token by less than this is admitted so that the computed
# wait can never be smaller than the clock's resolution (which would spin).
_TOKEN_EPS = 1e-9


def admit(state: BucketState, now: float) -> tuple[Admission, BucketState]:
    """Decide one request: proceed now, or wait ``wait_s`` and ask again.

    Pure function; a clock moving backwards is clamped to the last update.
    """
    now = max(now, state.updated_at)
    tokens = min(state.capacity, state.tokens + (now - state.updated_at) * state.refill_per_s)
    if tokens >= 1.0 - _TOKEN_EPS:
        return Admission(True), replace(state, tokens=max(0.0, tokens - 1.0), updated_at=now)
    wait = (1.0 - tokens) / state.refill_per_s
    return Admission(False, wait), replace(state, tokens=tokens, updated_at=now)


class Clock:
    """Monotone clock interface used by the orchestrator."""

    def now(self) -> float:
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        raise NotImplementedError


class SystemClock(Clock):
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class SimulatedClock(Clock):
    """Deterministic clock: sleeping advances time instantly."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        self._now += max(0.0, seconds)


class RateLimiter:
    """Thread-safe wrapper: blocks (via the clock) until a token is granted."""

    def __init__(self, capacity: float, refill_per_s: float, clock: Clock):
        self._clock = clock
        self._lock = threading.Lock()
        self._state = new_bucket(capacity, refill_per_s, clock.now())

    def acquire(self) -> float:
        """Block until admitted; returns the admission time."""
        while True:
            with self._lock:
                decision, self._state = admit(self._state, self._clock.now())
                if decision.proceed:
                    return self._clock.now()
                wait = decision.wait_s
            self._clock.sleep(wait)

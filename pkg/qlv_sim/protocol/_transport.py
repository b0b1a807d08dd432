"""Low-level event queue and light-speed classical transport."""

from __future__ import annotations

import heapq
import logging
from contextlib import AbstractContextManager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, MutableMapping, Optional, Tuple

from ..errors import ProtocolOrderError
from .types import ClassicalMessage, ChannelKind, Geometry, Point

logger = logging.getLogger(__name__)

EVENT_MESSAGE_SENT = "message-sent"
EVENT_MESSAGE_DELIVERED = "message-delivered"
MAX_EVENTS = 10_000_000

Handler = Callable[["TraceEvent"], None]


@dataclass(frozen=True)
class TraceEvent:
    """One processed event; the JSON-lines trace is a list of these."""

    seq: int
    time_s: float
    kind: str
    actor: str
    payload: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> MutableMapping[str, object]:
        return {
            "seq": self.seq,
            "time_s": self.time_s,
            "kind": self.kind,
            "actor": self.actor,
            "payload": dict(self.payload),
        }

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "TraceEvent":
        return cls(
            seq=int(payload["seq"]),
            time_s=float(payload["time_s"]),
            kind=str(payload["kind"]),
            actor=str(payload["actor"]),
            payload=dict(payload.get("payload", {})),
        )


class EventTransport(AbstractContextManager):
    """Discrete-event queue ordered by ``(time, sequence number)``.

    Messages are delivered at ``emit + distance / c``. Processed events are appended to
    :attr:`trace` in processing order.
    """

    def __init__(self, geometry: Geometry) -> None:
        self._geometry = geometry
        self._queue: List[Tuple[float, int, str, str, Dict[str, Any], Optional[Handler]]] = []
        self._seq = 0
        self._now = 0.0
        self._closed = False
        self.trace: List[TraceEvent] = []
        self.messages: List[ClassicalMessage] = []

    def __enter__(self) -> "EventTransport":
        return self

    def __exit__(self, exc_type, exc, tb) -> Optional[bool]:
        self.close()
        return None

    def close(self) -> None:
        self._closed = True

    @property
    def is_closed(self) -> bool:
        return self._closed

    @property
    def now(self) -> float:
        return self._now

    @property
    def pending(self) -> int:
        return len(self._queue)

    def schedule(
        self,
        time: float,
        kind: str,
        actor: str,
        payload: Optional[Mapping[str, Any]] = None,
        handler: Optional[Handler] = None,
    ) -> int:
        if self._closed:
            raise ProtocolOrderError("transport is closed")
        if time < self._now:
            raise ProtocolOrderError(
                f"cannot schedule '{kind}' at {time!r}, the clock is already at {self._now!r}"
            )
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (time, seq, kind, actor, dict(payload or {}), handler))
        return seq

    def send(
        self,
        sender: str,
        receiver: str,
        payload: Mapping[str, Any],
        *,
        emit_time: float,
        channel: ChannelKind = "open",
        origin: Optional[Point] = None,
        destination: Optional[Point] = None,
        on_delivery: Optional[Handler] = None,
    ) -> ClassicalMessage:
        """Queue a message; ``origin``/``destination`` override the named positions."""

        source = origin if origin is not None else self._geometry.position(sender)
        target = destination if destination is not None else self._geometry.position(receiver)
        message = ClassicalMessage(
            sender=sender,
            receiver=receiver,
            payload=dict(payload),
            emit_time=emit_time,
            arrive_time=emit_time + self._geometry.delay(source, target),
            channel=channel,
        )
        self.messages.append(message)
        envelope = {"to": receiver, "channel": channel, **message.payload}
        self.schedule(emit_time, EVENT_MESSAGE_SENT, sender, envelope)
        self.schedule(
            message.arrive_time,
            EVENT_MESSAGE_DELIVERED,
            receiver,
            {"from": sender, "channel": channel, **message.payload},
            on_delivery,
        )
        return message

    def run(self, until: Optional[float] = None) -> int:
        """Process queued events (up to ``until`` inclusive); return how many ran."""

        processed = 0
        while self._queue:
            if until is not None and self._queue[0][0] > until:
                break
            time, seq, kind, actor, payload, handler = heapq.heappop(self._queue)
            self._now = time
            event = TraceEvent(seq=seq, time_s=time, kind=kind, actor=actor, payload=payload)
            self.trace.append(event)
            logger.debug("t=%.12e %s %s %s", time, actor, kind, payload)
            if handler is not None:
                handler(event)
            processed += 1
            if len(self.trace) > MAX_EVENTS:
                raise ProtocolOrderError("event limit exceeded")
        if until is not None and until > self._now:
            self._now = until
        return processed

    def open_channel_view(self) -> List[ClassicalMessage]:
        """Everything an eavesdropper on the open channel can read."""

        return [message for message in self.messages if message.channel == "open"]

"""The boundary to a social platform.

The port contract: post one message, observe the public keyword stream, and
receive notifications (replies to the bot, retweets, favorites). Two concrete
adapters ship: a deterministic SimulatedPlatform driven by the agent
population model, and a read-only ReplayPlatform over a recorded event log.
A real HTTP adapter would implement the same surface; credentials and network
clients are out of scope here.

Streams are single-consumer and ordered; post() must be called from one
dispatcher thread only.
"""

from __future__ import annotations

import heapq
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Iterator, Optional, Sequence

from .model import BOT_ACTOR, CampaignError, EventKind
from .text import match_keyword

if TYPE_CHECKING:  # avoid a runtime cycle with the strategy module
    from .simulator import AgentPopulation
    from .strategy import OutboundMessage


class RateLimited(CampaignError):
    """Transient rejection: the caller must back off and retry."""

    def __init__(self, retry_after_ms: int):
        super().__init__(f"rate limited, retry after {retry_after_ms} ms")
        self.retry_after_ms = retry_after_ms


class PlatformRejected(CampaignError):
    """Permanent rejection: the conversation is aborted and logged."""


class StreamInterrupted(CampaignError):
    """A stream broke; consumption can resume from the last position."""

    def __init__(self, last_seq: int):
        super().__init__(f"stream interrupted after item {last_seq}")
        self.last_seq = last_seq


@dataclass(frozen=True)
class PlatformCapabilities:
    char_limit: int = 140
    max_mentions_per_message: int = 3
    supports_favorites: bool = True


class ItemKind(str, Enum):
    PUBLIC_POST = "PublicPost"
    REPLY_TO_BOT = "ReplyToBot"
    RETWEET = "Retweet"
    FAVORITE = "Favorite"


NOTIFICATION_KINDS = frozenset(
    {ItemKind.REPLY_TO_BOT, ItemKind.RETWEET, ItemKind.FAVORITE}
)


@dataclass(frozen=True)
class InboundItem:
    kind: ItemKind
    author: str
    message_id: str
    timestamp: int
    in_reply_to: Optional[str] = None
    text: str = ""


MENTION_SIGIL = "@"


def format_mention(user_id: str) -> str:
    return MENTION_SIGIL + user_id


def format_mentions(user_ids: Sequence[str]) -> str:
    return " ".join(format_mention(u) for u in user_ids)


class Platform(ABC):
    """Port every adapter implements."""

    capabilities: PlatformCapabilities

    @abstractmethod
    def now_ms(self) -> int: ...

    def advance_to(self, ts: int) -> None:
        """Move the platform clock forward; a no-op for real-time adapters."""

    @abstractmethod
    def post(self, message: "OutboundMessage", *, turn: int = 0) -> str:
        """Deliver one outbound message, at most once per idempotency key
        (conversation, kind, turn); returns the durable message id."""

    @abstractmethod
    def stream_public(self, keywords: Sequence[str], after: int = 0) -> Iterator[InboundItem]:
        """Public posts whose text contains any keyword (folded substring)."""

    @abstractmethod
    def stream_notifications(self, after: int = 0) -> Iterator[InboundItem]:
        """Replies to the bot, retweets and favorites, in order."""

    def inbound(self, keywords: Sequence[str]) -> Iterator[InboundItem]:
        """Both streams merged by timestamp; what the campaign loop consumes."""
        return _merge_streams(self.stream_public(keywords), self.stream_notifications())

    def _check_message(self, message: "OutboundMessage") -> None:
        if len(message.mentions) > self.capabilities.max_mentions_per_message:
            raise PlatformRejected(
                f"message mentions {len(message.mentions)} users, "
                f"limit is {self.capabilities.max_mentions_per_message}"
            )
        if len(message.text) > self.capabilities.char_limit:
            raise PlatformRejected(
                f"message is {len(message.text)} characters, "
                f"limit is {self.capabilities.char_limit}"
            )


def _merge_streams(*streams: Iterator[InboundItem]) -> Iterator[InboundItem]:
    heads: list[tuple[int, int, InboundItem, Iterator[InboundItem]]] = []
    for i, stream in enumerate(streams):
        item = next(stream, None)
        if item is not None:
            heads.append((item.timestamp, i, item, stream))
    heapq.heapify(heads)
    while heads:
        _, i, item, stream = heapq.heappop(heads)
        yield item
        nxt = next(stream, None)
        if nxt is not None:
            heapq.heappush(heads, (nxt.timestamp, i, nxt, stream))


class ReplayPlatform(Platform):
    """Read-only adapter that replays the inbound side of a recorded log.

    The event-log format records outbound messages and inbound reactions;
    public posts are not part of it, so the public stream is empty unless a
    supplementary item list is provided. post() is always rejected.
    """

    def __init__(
        self,
        events: Iterable,
        *,
        public_items: Sequence[InboundItem] = (),
        capabilities: PlatformCapabilities = PlatformCapabilities(),
    ):
        self.capabilities = capabilities
        self._public = list(public_items)
        self._notifications: list[InboundItem] = []
        kind_map = {
            EventKind.INBOUND_REPLY: ItemKind.REPLY_TO_BOT,
            EventKind.RETWEET: ItemKind.RETWEET,
            EventKind.FAVORITE: ItemKind.FAVORITE,
        }
        for event in events:
            mapped = kind_map.get(event.kind)
            if mapped is None:
                continue
            self._notifications.append(
                InboundItem(
                    kind=mapped,
                    author=event.actor,
                    message_id=event.message_id or "",
                    timestamp=event.ts,
                    in_reply_to=event.in_reply_to,
                    text=event.text or "",
                )
            )
        self._now = self._notifications[0].timestamp if self._notifications else 0

    def now_ms(self) -> int:
        return self._now

    def post(self, message: "OutboundMessage", *, turn: int = 0) -> str:
        raise PlatformRejected("replay platform is read-only")

    def stream_public(self, keywords: Sequence[str], after: int = 0) -> Iterator[InboundItem]:
        for item in self._public[after:]:
            if match_keyword(item.text, keywords) is not None:
                self._now = max(self._now, item.timestamp)
                yield item

    def stream_notifications(self, after: int = 0) -> Iterator[InboundItem]:
        for item in self._notifications[after:]:
            self._now = max(self._now, item.timestamp)
            yield item


class SimulatedPlatform(Platform):
    """Deterministic adapter over an agent population and a virtual clock.

    One master queue orders every pending item (agent posts and scheduled
    reactions); consuming items or posting messages advances the clock, never
    the wall clock. A fixed rng makes two runs byte-identical.
    """

    def __init__(
        self,
        population: "AgentPopulation",
        rng,
        *,
        capabilities: PlatformCapabilities = PlatformCapabilities(),
        start_ms: int = 1_430_000_000_000,
        posts_per_minute_limit: Optional[int] = None,
    ):
        self.capabilities = capabilities
        self.population = population
        self.rng = rng
        self._now = start_ms
        self._heap: list[tuple[int, int, str, object]] = []
        self._tiebreak = 0
        self._posted: dict[tuple, str] = {}
        self._message_counter = 0
        self._bot_messages: dict[str, object] = {}
        self._conversation_members: dict[str, tuple[str, ...]] = {}
        self._public_buffer: deque[InboundItem] = deque()
        self._notif_buffer: deque[InboundItem] = deque()
        self._posts_limit = posts_per_minute_limit
        self._post_times: deque[int] = deque()
        for agent in population.agents:
            self._schedule_agent_post(agent, start_ms)

    # -- clock ---------------------------------------------------------------

    def now_ms(self) -> int:
        return self._now

    def advance_to(self, ts: int) -> None:
        self._now = max(self._now, ts)

    # -- internal queue -------------------------------------------------------

    def _push(self, ts: int, tag: str, payload: object) -> None:
        self._tiebreak += 1
        heapq.heappush(self._heap, (ts, self._tiebreak, tag, payload))

    def _schedule_agent_post(self, agent, base_ts: int) -> None:
        gap = self.population.next_post_gap_ms(agent, self.rng)
        if gap is not None:
            self._push(base_ts + gap, "post", agent)

    def _next_item(self) -> Optional[InboundItem]:
        while self._heap:
            ts, _, tag, payload = heapq.heappop(self._heap)
            self._now = max(self._now, ts)
            if tag == "post":
                item = self.population.make_public_post(payload, ts, self.rng)
                self._schedule_agent_post(payload, ts)
                return item
            return payload  # a concrete InboundItem
        return None

    def _peek_ts(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    # -- port operations --------------------------------------------------------

    def post(self, message: "OutboundMessage", *, turn: int = 0) -> str:
        key = (message.conversation_id, message.kind.value, turn)
        already = self._posted.get(key)
        if already is not None:
            return already
        self._check_message(message)
        if self._posts_limit is not None:
            cutoff = self._now - 60_000
            while self._post_times and self._post_times[0] <= cutoff:
                self._post_times.popleft()
            if len(self._post_times) >= self._posts_limit:
                raise RateLimited(retry_after_ms=self._post_times[0] + 60_000 - self._now)
            self._post_times.append(self._now)

        from .simulator import BotMessageMeta
        from .strategy import MessageKind

        self._message_counter += 1
        message_id = f"m{self._message_counter:07d}"
        self._posted[key] = message_id
        meta = BotMessageMeta(
            message_id=message_id,
            conversation_id=message.conversation_id,
            strategy=message.strategy,
            topic=message.topic,
            solicits=message.kind is not MessageKind.QUOTE,
        )
        self._bot_messages[message_id] = meta
        if message.kind is MessageKind.CALL:
            self._conversation_members[message.conversation_id] = tuple(message.mentions)
        members = self._conversation_members.get(message.conversation_id, tuple(message.mentions))
        favorites = self.capabilities.supports_favorites
        for user in message.mentions:
            reactions = self.population.react(
                user, meta, self._now, self.rng, favorites_enabled=favorites
            )
            for item in reactions:
                self._push(item.timestamp, "item", item)
                if item.kind is ItemKind.REPLY_TO_BOT:
                    # Co-members see the reply in their thread and may share it.
                    for other in members:
                        if other == user:
                            continue
                        for extra in self.population.interaction_draws(
                            other,
                            message.strategy,
                            item.message_id,
                            item.timestamp,
                            self.rng,
                            favorites_enabled=favorites,
                        ):
                            self._push(extra.timestamp, "item", extra)
        return message_id

    def author_of(self, message_id: str) -> Optional[str]:
        """BOT for bot messages, the agent for simulated items, else None."""
        if message_id in self._bot_messages:
            return BOT_ACTOR
        return None

    def stream_public(self, keywords: Sequence[str], after: int = 0) -> Iterator[InboundItem]:
        while True:
            if self._public_buffer:
                item = self._public_buffer.popleft()
            else:
                item = self._next_item()
                if item is None:
                    return
                if item.kind is not ItemKind.PUBLIC_POST:
                    self._notif_buffer.append(item)
                    continue
            if match_keyword(item.text, keywords) is not None:
                yield item

    def stream_notifications(self, after: int = 0) -> Iterator[InboundItem]:
        while True:
            if self._notif_buffer:
                yield self._notif_buffer.popleft()
                continue
            item = self._next_item()
            if item is None:
                return
            if item.kind is ItemKind.PUBLIC_POST:
                self._public_buffer.append(item)
                continue
            yield item

    def inbound(self, keywords: Sequence[str]) -> Iterator[InboundItem]:
        while True:
            candidates = []
            if self._public_buffer:
                candidates.append((self._public_buffer[0].timestamp, "pub"))
            if self._notif_buffer:
                candidates.append((self._notif_buffer[0].timestamp, "notif"))
            heap_ts = self._peek_ts()
            if heap_ts is not None:
                candidates.append((heap_ts, "heap"))
            if not candidates:
                return
            _, source = min(candidates)
            if source == "pub":
                item = self._public_buffer.popleft()
            elif source == "notif":
                item = self._notif_buffer.popleft()
            else:
                nxt = self._next_item()
                if nxt is None:
                    return
                item = nxt
            if item.kind is ItemKind.PUBLIC_POST and match_keyword(item.text, keywords) is None:
                continue
            yield item

"""Agent-population model behind the simulated platform.

Agents post keyword-bearing messages at Poisson rates and respond to bot
messages with per-strategy Bernoulli reply draws, independent retweet and
favorite draws, and a per-agent conversation-depth cap with a geometric tail.
Everything is driven by a caller-supplied rng and a virtual clock, so a fixed
seed yields byte-identical behavior run over run.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence, Union

from .model import CampaignError, Topic, VolunteerLabel, LabelValue
from .platform import InboundItem, ItemKind

# Machine-readable stance tags appended to generated replies so label
# fixtures can be derived from a log without human coders.
ON_TOPIC_TAG = "#ontopic"
OFF_TOPIC_TAG = "#offtopic"

HOUR_MS = 3_600_000

# A propensity is either one float for every arm or a per-arm mapping with an
# optional "default" key.
Propensity = Union[float, Mapping[str, float]]


def resolve_propensity(value: Propensity, strategy: str) -> float:
    if isinstance(value, Mapping):
        if strategy in value:
            return float(value[strategy])
        return float(value.get("default", 0.0))
    return float(value)


@dataclass(frozen=True)
class SimulationProfile:
    """Config-side description of the agent population."""

    population: int = 1000
    post_rate: float = 0.2  # keyword posts per agent per simulated hour
    mean_turns: float = 2.0  # geometric mean of per-agent reply depth
    reply_propensity: Propensity = 0.3
    interaction_propensity: Propensity = 0.1
    on_topic_probability: Propensity = 0.8
    reply_delay_min_s: int = 60
    reply_delay_max_s: int = 6 * 3600
    posts_per_minute_limit: Optional[int] = None
    clock: str = "virtual"
    mixture: tuple[Mapping[str, Any], ...] = ()

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SimulationProfile":
        clock = str(raw.get("clock", "virtual"))
        if clock != "virtual":
            raise CampaignError(
                f"unsupported clock {clock!r}: only the deterministic virtual clock is implemented"
            )
        delay = raw.get("reply_delay", {})
        limit = raw.get("posts_per_minute_limit")
        return cls(
            population=int(raw.get("population", 1000)),
            post_rate=float(raw.get("post_rate", 0.2)),
            mean_turns=float(raw.get("mean_turns", 2.0)),
            reply_propensity=raw.get("reply_propensity", 0.3),
            interaction_propensity=raw.get("interaction_propensity", 0.1),
            on_topic_probability=raw.get("on_topic_probability", 0.8),
            reply_delay_min_s=int(delay.get("min_s", 60)),
            reply_delay_max_s=int(delay.get("max_s", 6 * 3600)),
            posts_per_minute_limit=None if limit is None else int(limit),
            clock=clock,
            mixture=tuple(raw.get("mixture", ())),
        )


@dataclass
class AgentProfile:
    user_id: str
    reply_propensity: Propensity
    interaction_propensity: Propensity
    on_topic_probability: Propensity
    max_turns: int
    post_rate: float


@dataclass
class _AgentState:
    replies_made: int = 0
    on_topic: Optional[bool] = None  # stance drawn at first reply, then fixed


@dataclass(frozen=True)
class BotMessageMeta:
    """What the population needs to know about a delivered bot message."""

    message_id: str
    conversation_id: str
    strategy: str
    topic: str
    solicits: bool  # calls and follow-ups solicit replies; quotes do not


_POST_PATTERNS = (
    "Ya no soporto la {keyword} en mi ciudad",
    "Otra vez {keyword} en las noticias, que verguenza",
    "Cuando acabara la {keyword}? Estoy harto",
)

_ON_TOPIC_PATTERNS = (
    "Propongo denunciar cada caso de {topic} y darle seguimiento {tag}",
    "Podemos organizar vigilancia ciudadana contra la {topic} {tag}",
    "Hay que exigir transparencia para frenar la {topic} {tag}",
)

_OFF_TOPIC_PATTERNS = (
    "Lo siento, no colaboro con bots {tag}",
    "Desde cuando los bots quieren arreglar el mundo? {tag}",
)


def _geometric(mean: float, rng: random.Random) -> int:
    """Geometric draw on {1, 2, ...} with the given mean."""
    if mean <= 1.0:
        return 1
    p = 1.0 / mean
    n = 1
    while rng.random() > p:
        n += 1
    return n


class AgentPopulation:
    """Deterministic population of simulated platform users."""

    def __init__(self, profile: SimulationProfile, topics: Sequence[Topic], rng: random.Random):
        self.profile = profile
        self.topics = tuple(topics)
        self.agents: list[AgentProfile] = []
        self._states: dict[str, _AgentState] = {}
        self._item_counter = 0
        components = self._mixture_components(profile)
        for i in range(profile.population):
            comp = components[i % len(components)]
            agent = AgentProfile(
                user_id=f"u{i:05d}",
                reply_propensity=comp.get("reply_propensity", profile.reply_propensity),
                interaction_propensity=comp.get(
                    "interaction_propensity", profile.interaction_propensity
                ),
                on_topic_probability=comp.get(
                    "on_topic_probability", profile.on_topic_probability
                ),
                max_turns=_geometric(float(comp.get("mean_turns", profile.mean_turns)), rng),
                post_rate=float(comp.get("post_rate", profile.post_rate)),
            )
            self.agents.append(agent)
            self._states[agent.user_id] = _AgentState()
        self.by_id = {a.user_id: a for a in self.agents}

    @staticmethod
    def _mixture_components(profile: SimulationProfile) -> list[Mapping[str, Any]]:
        if not profile.mixture:
            return [{}]
        # Expand weights into a small deterministic assignment cycle so the
        # population fractions track the requested mixture.
        cycle: list[Mapping[str, Any]] = []
        for comp in profile.mixture:
            weight = float(comp.get("weight", 1.0))
            cycle.extend([comp] * max(1, round(weight * 100)))
        return cycle

    def _mint(self, prefix: str) -> str:
        self._item_counter += 1
        return f"{prefix}{self._item_counter:08d}"

    # -- public posting ----------------------------------------------------

    def next_post_gap_ms(self, agent: AgentProfile, rng: random.Random) -> Optional[int]:
        if agent.post_rate <= 0:
            return None
        gap = rng.expovariate(agent.post_rate / HOUR_MS)
        return max(1, int(round(gap)))

    def make_public_post(self, agent: AgentProfile, ts: int, rng: random.Random) -> InboundItem:
        topic = rng.choice(self.topics)
        keyword = rng.choice(topic.keywords)
        pattern = rng.choice(_POST_PATTERNS)
        return InboundItem(
            kind=ItemKind.PUBLIC_POST,
            author=agent.user_id,
            message_id=self._mint("t"),
            timestamp=ts,
            text=pattern.format(keyword=keyword),
        )

    # -- reactions ----------------------------------------------------------

    def _reply_delay_ms(self, rng: random.Random) -> int:
        lo = math.log(self.profile.reply_delay_min_s * 1000)
        hi = math.log(self.profile.reply_delay_max_s * 1000)
        return int(round(math.exp(rng.uniform(lo, hi))))

    def react(
        self,
        user_id: str,
        message: BotMessageMeta,
        now: int,
        rng: random.Random,
        *,
        favorites_enabled: bool = True,
    ) -> list[InboundItem]:
        """Reactions of one recipient to one delivered bot message.

        At most one reply per received message; replies stop once the agent's
        turn budget is spent. Retweet and favorite draws are independent of
        the reply draw.
        """
        agent = self.by_id.get(user_id)
        if agent is None:
            return []
        state = self._states[user_id]
        items: list[InboundItem] = []
        if message.solicits and state.replies_made < agent.max_turns:
            if rng.random() < resolve_propensity(agent.reply_propensity, message.strategy):
                state.replies_made += 1
                if state.on_topic is None:
                    state.on_topic = rng.random() < resolve_propensity(
                        agent.on_topic_probability, message.strategy
                    )
                pattern = rng.choice(
                    _ON_TOPIC_PATTERNS if state.on_topic else _OFF_TOPIC_PATTERNS
                )
                items.append(
                    InboundItem(
                        kind=ItemKind.REPLY_TO_BOT,
                        author=user_id,
                        message_id=self._mint("r"),
                        timestamp=now + self._reply_delay_ms(rng),
                        in_reply_to=message.message_id,
                        text=pattern.format(
                            topic=message.topic,
                            tag=ON_TOPIC_TAG if state.on_topic else OFF_TOPIC_TAG,
                        ),
                    )
                )
        items.extend(
            self.interaction_draws(
                user_id,
                message.strategy,
                message.message_id,
                now,
                rng,
                favorites_enabled=favorites_enabled,
            )
        )
        return items

    def interaction_draws(
        self,
        user_id: str,
        strategy: str,
        target_message_id: str,
        base_ts: int,
        rng: random.Random,
        *,
        favorites_enabled: bool = True,
    ) -> list[InboundItem]:
        """Independent retweet/favorite draws toward one message."""
        agent = self.by_id.get(user_id)
        if agent is None:
            return []
        propensity = resolve_propensity(agent.interaction_propensity, strategy)
        items: list[InboundItem] = []
        if rng.random() < propensity:
            items.append(
                InboundItem(
                    kind=ItemKind.RETWEET,
                    author=user_id,
                    message_id=self._mint("x"),
                    timestamp=base_ts + self._reply_delay_ms(rng),
                    in_reply_to=target_message_id,
                )
            )
        if favorites_enabled and rng.random() < propensity:
            items.append(
                InboundItem(
                    kind=ItemKind.FAVORITE,
                    author=user_id,
                    message_id=self._mint("x"),
                    timestamp=base_ts + self._reply_delay_ms(rng),
                    in_reply_to=target_message_id,
                )
            )
        return items


def derive_labels(events, coder_id: str = "sim") -> list[VolunteerLabel]:
    """Volunteer labels recovered from the stance tags in simulated replies.

    A volunteer is on-topic when any of their replies carries the on-topic
    tag; simulated agents keep a fixed stance, so first reply decides.
    """
    from .eventlog import conversation_members
    from .model import EventKind

    members = conversation_members(events)
    stance: dict[str, bool] = {}
    for event in events:
        if event.kind is not EventKind.INBOUND_REPLY or event.text is None:
            continue
        conv = event.conversation_id
        if conv is None or event.actor not in members.get(conv, ()):
            continue
        if event.actor not in stance:
            stance[event.actor] = ON_TOPIC_TAG in event.text
    return [
        VolunteerLabel(
            user_id=user,
            label=LabelValue.ON_TOPIC if on else LabelValue.OFF_TOPIC,
            coder_id=coder_id,
        )
        for user, on in sorted(stance.items())
    ]

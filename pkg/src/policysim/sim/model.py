"""Agent-based model of venues, posts, engagements, moderators and potential demand.

Venue state is kept as parallel numpy arrays indexed by venue id; ``WorldState.venue``
returns a per-venue snapshot. A venue's engagement rate ``lam`` is the sum of a
base rate, which decays each week, and ``lam_converted``, the part gained from
converted potential demand, which does not decay unless
``SimConfig.decay_converted`` is set. Weeks are numbered from 1: ``world.t`` counts completed
steps, and a step simulates week ``world.t + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import RngStream, VenueParams, sample_venue_params
from .config import SimConfig


class SequencingError(RuntimeError):
    """Raised when stepping a world that has already reached t_max."""


@dataclass
class RemovalRecord:
    week: int
    removed_posts: int = 0
    removed_post_engagements: float = 0.0
    spawned_moderators: int = 0
    removed_venues: list[tuple[int, float]] = field(default_factory=list)  # (venue id, lambda at removal)


@dataclass(frozen=True)
class VenueState:
    params: VenueParams
    active: bool
    removed: bool
    activation_week: int
    lam: float
    moderators: int
    week_posts: int
    week_engagements: float


@dataclass
class WorldState:
    t: int
    a: np.ndarray
    b: np.ndarray
    lambda0: np.ndarray
    lam: np.ndarray
    lam_converted: np.ndarray
    active: np.ndarray
    removed: np.ndarray
    activation_week: np.ndarray  # 0 for venues active at initialisation
    moderators: np.ndarray
    week_posts: np.ndarray  # posts that survived moderation this week
    week_engagements: np.ndarray
    generated_posts: np.ndarray  # posts before moderation this week
    potential_demand: float = 0.0
    moderators_deployed: bool = False
    removal_log: list[RemovalRecord] = field(default_factory=list)
    # (running total of per-post engagements, first post index per venue) when the circuit breaker is on
    _post_engagements: tuple | None = field(default=None, repr=False)

    @property
    def n_venues(self) -> int:
        return len(self.a)

    @property
    def total_moderators(self) -> int:
        return int(self.moderators.sum())

    @property
    def venues(self) -> list[VenueState]:
        return [self.venue(i) for i in range(self.n_venues)]

    def venue(self, i: int) -> VenueState:
        return VenueState(
            params=VenueParams(float(self.a[i]), float(self.b[i]), float(self.lambda0[i])),
            active=bool(self.active[i]),
            removed=bool(self.removed[i]),
            activation_week=int(self.activation_week[i]),
            lam=float(self.lam[i]),
            moderators=int(self.moderators[i]),
            week_posts=int(self.week_posts[i]),
            week_engagements=float(self.week_engagements[i]),
        )


def init_world(config: SimConfig, rng: RngStream) -> WorldState:
    gen = rng.generator
    n = config.v_max
    a, b, lam0 = sample_venue_params(config.archetype, gen, n)
    activation = np.zeros(n, dtype=np.int64)
    n_pending = n - config.v_initial
    if n_pending:
        activation[config.v_initial:] = gen.integers(1, config.t_max_venues + 1, size=n_pending)
    return WorldState(
        t=0,
        a=a,
        b=b,
        lambda0=lam0,
        lam=lam0.copy(),
        lam_converted=np.zeros(n),
        active=activation == 0,
        removed=np.zeros(n, dtype=bool),
        activation_week=activation,
        moderators=np.zeros(n, dtype=np.int64),
        week_posts=np.zeros(n, dtype=np.int64),
        week_engagements=np.zeros(n),
        generated_posts=np.zeros(n, dtype=np.int64),
    )


def _allocate(gen: np.random.Generator, count: int, weights: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    """Multinomial allocation of ``count`` items with probabilities proportional to ``weights``."""
    total = weights.sum()
    if total > 0:
        p = weights / total
    else:
        k = fallback.sum()
        if k == 0:
            return np.zeros(len(weights), dtype=np.int64)
        p = fallback / k
    return gen.multinomial(count, p)


def _generate(world: WorldState, config: SimConfig, gen: np.random.Generator, week: int) -> None:
    active = world.active
    idx = np.flatnonzero(active)
    posts = np.zeros(world.n_venues, dtype=np.int64)
    eng = np.zeros(world.n_venues)
    if len(idx):
        # gamma-Poisson form of the negative binomial with mean exp(a) and dispersion b
        disp = world.b[idx]
        posts[idx] = gen.poisson(gen.gamma(disp, np.exp(world.a[idx]) / disp))
        rate = world.lam[idx]
        # soft remedies (nudge, circuit breaker) are policies, so they start at t_policy
        remedies = week >= config.t_policy
        if config.nudge_n and remedies:
            rate = rate * (1.0 - config.nudge_n)
        if config.vcb_cap is None or not remedies:
            eng[idx] = gen.poisson(rate * posts[idx])
            world._post_engagements = None
        else:
            per_post = np.minimum(gen.poisson(np.repeat(rate, posts[idx])), config.vcb_cap)
            # running total over posts, venue by venue; venue v owns [start[v], start[v] + posts[v])
            csum = np.r_[0, np.cumsum(per_post)]
            start = np.zeros(world.n_venues, dtype=np.int64)
            start[idx] = np.r_[0, np.cumsum(posts[idx])[:-1]]
            eng[idx] = csum[start[idx] + posts[idx]] - csum[start[idx]]
            world._post_engagements = (csum, start)
    world.generated_posts = posts
    world.week_posts = posts.copy()
    world.week_engagements = eng


def moderate(world: WorldState, config: SimConfig, rng) -> tuple[WorldState, RemovalRecord]:
    """Moderators remove posts, reproduce, feed potential demand, and idle ones move."""
    gen = rng.generator if isinstance(rng, RngStream) else rng
    week = world.t + 1
    record = RemovalRecord(week=week)
    posts = world.generated_posts
    fallback = world.active.astype(float)
    if not world.moderators_deployed:
        world.moderators = _allocate(gen, config.m0, posts * world.active, fallback)
        world.moderators_deployed = True

    mods = world.moderators
    removed = np.minimum(mods, posts)
    hit = np.flatnonzero(removed)
    removed_eng = np.zeros(world.n_venues)
    if len(hit):
        if world._post_engagements is None:
            removed_eng[hit] = gen.binomial(world.week_engagements[hit].astype(np.int64),
                                            removed[hit] / posts[hit])
        else:
            csum, start = world._post_engagements
            removed_eng[hit] = csum[start[hit] + removed[hit]] - csum[start[hit]]
    world.week_posts = posts - removed
    world.week_engagements = world.week_engagements - removed_eng

    n_removed = int(removed.sum())
    record.removed_posts = n_removed
    record.removed_post_engagements = float(removed_eng.sum())
    if n_removed:
        world.potential_demand += record.removed_post_engagements / n_removed

    spawned = np.zeros_like(removed)
    if config.r > 0 and len(hit):
        spawned[hit] = gen.binomial(removed[hit], config.r)
    idle = int((mods - removed).sum())
    # idle moderators are redrawn in proportion to this week's generated posts
    moved = _allocate(gen, idle, (posts * world.active).astype(float), fallback) if idle else 0
    world.moderators = removed + spawned + moved
    record.spawned_moderators = int(spawned.sum())
    return world, record


def remove_venue_wave(world: WorldState, config: SimConfig, rng, record: RemovalRecord | None = None) -> WorldState:
    """Remove a wave of venues when total moderators exceed T; otherwise a no-op."""
    if not world.total_moderators > config.T:
        return world
    gen = rng.generator if isinstance(rng, RngStream) else rng
    candidates = np.flatnonzero(world.active)
    w = int(gen.integers(config.w_min, config.w_max + 1))
    if w >= len(candidates):
        victims = candidates
    elif config.wave_selection == "moderators" and world.moderators[candidates].sum() > 0:
        weights = world.moderators[candidates].astype(float)
        k = min(w, int(np.count_nonzero(weights)))
        victims = np.sort(gen.choice(candidates, size=k, replace=False, p=weights / weights.sum()))
    else:
        victims = np.sort(gen.choice(candidates, size=w, replace=False))
    if record is None:
        record = RemovalRecord(week=world.t + 1)
        world.removal_log.append(record)
    record.removed_venues.extend((int(v), float(world.lam[v])) for v in victims)
    world.potential_demand += float(world.lam[victims].sum())
    world.active[victims] = False
    world.removed[victims] = True
    world.moderators[victims] = 0
    world.week_posts[victims] = 0
    world.week_engagements[victims] = 0.0
    return world


def convert_demand(world: WorldState, config: SimConfig) -> WorldState:
    """Move a fraction g of potential demand into active venues' engagement rates, by share of posts."""
    h = world.potential_demand
    posts = world.week_posts * world.active
    total = posts.sum()
    if h <= 0 or total == 0 or config.g == 0:
        return world
    increment = h * config.g * (posts / total)
    world.lam = world.lam + increment
    world.lam_converted = world.lam_converted + increment
    if config.deplete_demand:
        world.potential_demand = h * (1.0 - config.g)
    return world


def step(world: WorldState, config: SimConfig, rng) -> WorldState:
    """Advance one week: decay, generate posts and engagements, activate venues, then moderation.

    Venues due this week activate after generating nothing, so they first post next week.
    """
    if world.t >= config.t_max:
        raise SequencingError(f"world is at t={world.t}, already at t_max={config.t_max}")
    gen = rng.generator if isinstance(rng, RngStream) else rng
    week = world.t + 1
    if config.d:
        keep = np.where(world.active, 1.0 - config.d, 1.0)
        base = (world.lam - world.lam_converted) * keep
        if config.decay_converted:
            world.lam_converted = world.lam_converted * keep
        world.lam = base + world.lam_converted
    _generate(world, config, gen, week)
    # activation follows its schedule even past t_policy, so every venue is live by t_max_venues
    world.active |= world.activation_week == week
    if week >= config.t_policy:
        world, record = moderate(world, config, gen)
        world.removal_log.append(record)
        world = remove_venue_wave(world, config, gen, record)
        world = convert_demand(world, config)
    world.t = week
    return world


TRAJECTORY_FIELDS = ("posts", "engagements", "moderators", "demand", "active_venues")


@dataclass
class Trajectory:
    """Per-week totals, index 0 is week 1."""

    posts: np.ndarray
    engagements: np.ndarray
    moderators: np.ndarray
    demand: np.ndarray
    active_venues: np.ndarray

    @property
    def weeks(self) -> np.ndarray:
        return np.arange(1, len(self.posts) + 1)


def run(config: SimConfig, seed: int | RngStream) -> Trajectory:
    rng = seed if isinstance(seed, RngStream) else RngStream(seed)
    gen = rng.generator
    world = init_world(config, rng)
    n = config.t_max
    out = {name: np.zeros(n) for name in TRAJECTORY_FIELDS}
    for i in range(n):
        step(world, config, gen)
        out["posts"][i] = world.week_posts.sum()
        out["engagements"][i] = world.week_engagements.sum()
        out["moderators"][i] = world.moderators.sum()
        out["demand"][i] = world.potential_demand
        out["active_venues"][i] = world.active.sum()
    return Trajectory(**out)

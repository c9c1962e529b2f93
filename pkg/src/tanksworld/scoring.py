"""Per-tank reward decomposition and team scores.

Rewards are never pre-summed: each tank carries separate counts for enemy
kills, allied kills, neutral kills, and its own death, so callers can
scalarize under any weighting they like.  The default weights give +1 per
enemy kill and -1 each for dying, fratricide, and collateral damage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .world import KillEvent, Team


@dataclass(slots=True)
class RewardComponents:
    enemy_kills: int = 0
    ally_kills: int = 0
    neutral_kills: int = 0
    died: int = 0

    def add(self, other: "RewardComponents") -> None:
        self.enemy_kills += other.enemy_kills
        self.ally_kills += other.ally_kills
        self.neutral_kills += other.neutral_kills
        # death is idempotent: a tank dies at most once per episode
        self.died = min(1, self.died + other.died)

    def copy(self) -> "RewardComponents":
        return RewardComponents(
            self.enemy_kills, self.ally_kills, self.neutral_kills, self.died
        )

    def as_dict(self) -> dict[str, int]:
        return {
            "enemy_kills": self.enemy_kills,
            "ally_kills": self.ally_kills,
            "neutral_kills": self.neutral_kills,
            "died": self.died,
        }


@dataclass(frozen=True, slots=True)
class RewardWeights:
    w_enemy: float = 1.0
    w_death: float = -1.0
    w_ally: float = -1.0
    w_neutral: float = -1.0

    def validate(self) -> None:
        for name in ("w_enemy", "w_death", "w_ally", "w_neutral"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"reward weight {name} must be finite")


def accumulate(events: Iterable[KillEvent]) -> dict[int, RewardComponents]:
    """Fold one tick's kill events into per-tank component deltas.

    The victim records a death; the shooter records the kill under the
    bucket matching the victim's allegiance.  Neutral shooters are
    hazards, not players, and accrue nothing.
    """
    deltas: dict[int, RewardComponents] = {}

    def entry(tank_id: int) -> RewardComponents:
        if tank_id not in deltas:
            deltas[tank_id] = RewardComponents()
        return deltas[tank_id]

    for event in events:
        entry(event.victim_id).died = 1
        if event.shooter_team is Team.NEUTRAL:
            continue
        shooter = entry(event.shooter_id)
        if event.victim_team is Team.NEUTRAL:
            shooter.neutral_kills += 1
        elif event.victim_team is event.shooter_team:
            shooter.ally_kills += 1
        else:
            shooter.enemy_kills += 1
    return deltas


def scalarize(components: RewardComponents, weights: RewardWeights) -> float:
    return (
        weights.w_enemy * components.enemy_kills
        + weights.w_death * components.died
        + weights.w_ally * components.ally_kills
        + weights.w_neutral * components.neutral_kills
    )


def team_score(
    components: Mapping[int, RewardComponents],
    teams: Mapping[int, Team],
    team: Team,
    include_ally_kills: bool = False,
) -> float:
    """Unit-weight team aggregate: enemy kills minus deaths minus collateral.

    Fratricide is excluded by default so a wiped 5-tank team with both
    neutrals destroyed bottoms out at exactly -7; ``include_ally_kills``
    switches to the stricter double-count reading.
    """
    score = 0.0
    for tank_id, c in components.items():
        if teams.get(tank_id) is not team:
            continue
        score += c.enemy_kills - c.died - c.neutral_kills
        if include_ally_kills:
            score -= c.ally_kills
    return score

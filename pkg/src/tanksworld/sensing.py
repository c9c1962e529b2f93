"""Ally communication graph and what each tank can perceive.

Alive teammates within ``comm_range`` of each other form communication
links; by default perception is shared across whole connected components
(relay chains of any length), so everyone in a component sees the same
threats.  ``two_hop_only`` restricts relaying to direct neighbors of the
observer.  One radius serves both ally-ally links and ally-enemy sensing.
Dead tanks neither relay nor appear in anyone's visible sets.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DeadObserverError
from .world import Team, WorldState


@dataclass(frozen=True, slots=True)
class CommGraph:
    team: Team
    comm_range: float
    components: tuple[frozenset[int], ...]

    def component_of(self, tank_id: int) -> frozenset[int]:
        for component in self.components:
            if tank_id in component:
                return component
        raise KeyError(f"tank {tank_id} is in no component (dead or wrong team)")


@dataclass(frozen=True, slots=True)
class VisibilitySet:
    observer_id: int
    visible_enemies: frozenset[int]
    visible_neutrals: frozenset[int]


def _within(state: WorldState, a: int, b: int, radius: float) -> bool:
    return (
        state.tanks[a].pose.distance_to(state.tanks[b].pose) <= radius
    )


def ally_components(
    state: WorldState, team: Team, comm_range: float
) -> CommGraph:
    """Connected components of alive team members under the link radius."""
    if comm_range < 0:
        raise ValueError("comm_range must be >= 0")
    members = [t.id for t in state.tanks if t.alive and t.team is team]
    parent = {i: i for i in members}

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for idx, a in enumerate(members):
        for b in members[idx + 1:]:
            if _within(state, a, b, comm_range):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, set[int]] = {}
    for i in members:
        groups.setdefault(find(i), set()).add(i)
    components = tuple(
        frozenset(groups[root]) for root in sorted(groups)
    )
    return CommGraph(team=team, comm_range=comm_range, components=components)


def _enemy_team_ids(state: WorldState, team: Team) -> list[int]:
    if team is Team.NEUTRAL:
        return [t.id for t in state.tanks if t.alive and t.team is not Team.NEUTRAL]
    return [
        t.id for t in state.tanks
        if t.alive and t.team is not team and t.team is not Team.NEUTRAL
    ]


def _visible_from(
    state: WorldState, relays: frozenset[int], targets: list[int], radius: float
) -> frozenset[int]:
    return frozenset(
        target for target in targets
        if any(_within(state, relay, target, radius) for relay in relays)
    )


def visibility_sets(
    state: WorldState,
    tank_id: int,
    comm_range: float,
    *,
    two_hop_only: bool = False,
    neutral_always_visible: bool = False,
) -> VisibilitySet:
    """Enemies and neutrals perceivable by one tank through its relays."""
    observer = state.tank_by_id(tank_id)
    if not observer.alive:
        raise DeadObserverError(f"observer {tank_id} is dead")

    if two_hop_only:
        relays = frozenset(
            t.id for t in state.tanks
            if t.alive and t.team is observer.team
            and _within(state, tank_id, t.id, comm_range)
        ) | {tank_id}
    else:
        graph = ally_components(state, observer.team, comm_range)
        relays = graph.component_of(tank_id)

    enemies = _visible_from(
        state, relays, _enemy_team_ids(state, observer.team), comm_range
    )
    neutral_ids = [
        t.id for t in state.tanks
        if t.alive and t.team is Team.NEUTRAL and t.id != tank_id
    ]
    if neutral_always_visible:
        neutrals = frozenset(neutral_ids)
    else:
        neutrals = _visible_from(state, relays, neutral_ids, comm_range)
    return VisibilitySet(
        observer_id=tank_id, visible_enemies=enemies, visible_neutrals=neutrals
    )


def team_visibility(
    state: WorldState,
    team: Team,
    comm_range: float,
    *,
    two_hop_only: bool = False,
    neutral_always_visible: bool = False,
) -> dict[int, VisibilitySet]:
    """Visibility for every alive member of a team.

    On the default transitive model the visible sets are computed once per
    communication component and shared, which is both the semantics and
    the fast path.
    """
    if two_hop_only:
        return {
            t.id: visibility_sets(
                state, t.id, comm_range,
                two_hop_only=True, neutral_always_visible=neutral_always_visible,
            )
            for t in state.tanks if t.alive and t.team is team
        }

    graph = ally_components(state, team, comm_range)
    enemy_ids = _enemy_team_ids(state, team)
    neutral_ids = [
        t.id for t in state.tanks if t.alive and t.team is Team.NEUTRAL
    ]
    out: dict[int, VisibilitySet] = {}
    for component in graph.components:
        enemies = _visible_from(state, component, enemy_ids, comm_range)
        if neutral_always_visible:
            neutrals = frozenset(neutral_ids)
        else:
            neutrals = _visible_from(state, component, neutral_ids, comm_range)
        for tank_id in component:
            out[tank_id] = VisibilitySet(
                observer_id=tank_id,
                visible_enemies=enemies,
                visible_neutrals=frozenset(
                    n for n in neutrals if n != tank_id
                ),
            )
    return out

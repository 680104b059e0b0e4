"""Conflict detection between rules: exact satisfiability over atom domains.

Two rules conflict when they (a) target the same controlled variable with
overlapping room scopes, (b) have satisfiable condition overlap, and (c)
demand incompatible directives. Overlap is decided by pushing conditions to
disjunctive normal form and checking each merged conjunction over finite atom
domains: presence/activity booleans (with one-place-at-a-time exclusions),
day-period/season/day-of-week interval sets, and numeric comparison intervals
per (variable, scope) axis. Named calendar days constrain only the season
dimension, which errs toward reporting overlap — the safe direction for a
gatekeeper.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .controlflow import keep_band
from .dsl.ast import (
    Activity, Comparison, ConditionNode, KeepAction, Logical, NotifyAction,
    Presence, RuleAST, SetAction, TimeAtom,
)
from .model import HomeConfig
from .timeutil import PERIODS, SEASON_MONTHS_NORTH, clock_minutes

_ALL_MINUTES = ((0, 1440),)
_ALL_SEASONS = frozenset(SEASON_MONTHS_NORTH)
_ALL_DOW = frozenset(range(7))
_WEEKEND = frozenset((5, 6))
_EPS = 1e-9


# -- literals ------------------------------------------------------------------


@dataclass(frozen=True)
class _BoolLit:
    atom: tuple            # ("presence", resident, room) | ("activity", resident, act)
    positive: bool


@dataclass(frozen=True)
class _NumLit:
    axis: tuple            # (variable lower, room-or-None)
    intervals: tuple[tuple[float, float], ...]  # union of closed intervals


@dataclass(frozen=True)
class _TimeLit:
    minutes: tuple[tuple[int, int], ...] = _ALL_MINUTES
    seasons: frozenset = _ALL_SEASONS
    dow: frozenset = _ALL_DOW
    holiday: frozenset = frozenset((True, False))


_TRUE = object()   # statically true leaf
_FALSE = object()  # statically false leaf


def _minute_set(keyword: str) -> tuple[tuple[int, int], ...]:
    start, end = PERIODS[keyword]
    if start <= end:
        return ((start, end),)
    return ((start, 1440), (0, end))


def _complement_minutes(spans: tuple[tuple[int, int], ...]) -> tuple[tuple[int, int], ...]:
    marks = sorted(spans)
    out = []
    cursor = 0
    for lo, hi in marks:
        if lo > cursor:
            out.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < 1440:
        out.append((cursor, 1440))
    return tuple(out)


def _intersect_spans(a, b):
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo < hi:
                out.append((lo, hi))
    return tuple(out)


def _time_literal(atom: TimeAtom, positive: bool):
    if atom.clock is not None:
        m = clock_minutes(atom.clock)
        spans: tuple[tuple[int, int], ...] = ((m, m + 1),)
        return _TimeLit(minutes=spans if positive else _complement_minutes(spans))
    k = (atom.keyword or "").lower()
    canon = {name.lower(): name for name in PERIODS}.get(k)
    if canon:
        spans = _minute_set(canon)
        return _TimeLit(minutes=spans if positive else _complement_minutes(spans))
    season = {name.lower(): name for name in SEASON_MONTHS_NORTH}.get(k)
    if season:
        chosen = frozenset((season,))
        return _TimeLit(seasons=chosen if positive else _ALL_SEASONS - chosen)
    if k == "weekend":
        return _TimeLit(dow=_WEEKEND if positive else _ALL_DOW - _WEEKEND)
    if k == "holiday":
        want = frozenset((positive,))
        return _TimeLit(holiday=want)
    if k == "xmas":
        return _TimeLit(seasons=frozenset(("Winter",))) if positive else _TRUE
    if k == "easter":
        return _TimeLit(seasons=frozenset(("Spring",))) if positive else _TRUE
    if k == "always" or k == "today":
        return _TRUE if positive else _FALSE
    if k == "tomorrow":
        return _FALSE if positive else _TRUE
    return _TRUE  # keywords without semantics never rule out overlap


def _num_intervals(op: str, value: float, positive: bool
                   ) -> tuple[tuple[float, float], ...]:
    inf = float("inf")
    if op == "ABOVE":
        return ((value + _EPS, inf),) if positive else ((-inf, value),)
    if op == "BELOW":
        return ((-inf, value - _EPS),) if positive else ((value, inf),)
    if positive:
        return ((value, value),)
    return ((-inf, value - _EPS), (value + _EPS, inf))


def _presence_literals(node: Presence, config: HomeConfig, positive: bool):
    """Expand subjects and the Home location into concrete boolean formulas.

    Returns a DNF (list of conjunctions of _BoolLit) for the atom.
    """
    if node.subject.kind == "resident":
        residents = [config.find_resident(node.subject.name or "")]
        residents = [r for r in residents if r]
        quantifier = "any"
    elif node.subject.kind == "role":
        residents = list(config.residents_with_role(node.subject.name or ""))
        quantifier = "any"
    elif node.subject.kind == "all":
        residents = list(config.residents)
        quantifier = "all"
    else:
        residents = list(config.residents)
        quantifier = "any"
    if not residents:
        return _FALSE if positive else _TRUE
    home_wide = node.location.lower() in ("home", "allrooms")
    rooms = list(config.rooms) if home_wide else [config.find_room(node.location)]
    if rooms == [None]:
        # A registered location with no configured room: nobody can be there.
        return _FALSE if positive else _TRUE

    def one(resident: str, wanted: bool):
        # presence of one resident at the location, as DNF over room atoms
        lits = [_BoolLit(("presence", resident, room), True) for room in rooms]
        if wanted:
            return [[lit] for lit in lits]                      # OR of rooms
        return [[_BoolLit(lit.atom, False) for lit in lits]]   # AND of negations

    per_resident = [one(r, positive) for r in residents]
    want_all = (quantifier == "all") == positive  # de Morgan under negation
    if want_all:
        combined = [[]]
        for dnf in per_resident:
            combined = [c + d for c in combined for d in dnf]
        return combined
    out = []
    for dnf in per_resident:
        out.extend(dnf)
    return out


def _activity_literals(node: Activity, config: HomeConfig, positive: bool):
    if node.subject.kind == "resident":
        residents = [r for r in [config.find_resident(node.subject.name or "")] if r]
        quantifier = "any"
    elif node.subject.kind == "role":
        residents = list(config.residents_with_role(node.subject.name or ""))
        quantifier = "any"
    elif node.subject.kind == "all":
        residents = list(config.residents)
        quantifier = "all"
    else:
        residents = list(config.residents)
        quantifier = "any"
    if not residents:
        return _FALSE if positive else _TRUE
    lits = [_BoolLit(("activity", r, node.activity.lower()), positive) for r in residents]
    want_all = (quantifier == "all") == positive
    if want_all:
        return [lits]
    return [[lit] for lit in lits]


def _to_dnf(node: ConditionNode, config: HomeConfig, positive: bool = True) -> list[list]:
    """DNF as a list of conjunctions; literals are _BoolLit/_NumLit/_TimeLit."""
    if isinstance(node, Logical):
        if node.op == "NOT":
            return _to_dnf(node.children[0], config, not positive)
        op = node.op if positive else ("OR" if node.op == "AND" else "AND")
        parts = [_to_dnf(c, config, positive) for c in node.children]
        if op == "OR":
            return [conj for part in parts for conj in part]
        combined: list[list] = [[]]
        for part in parts:
            combined = [c + d for c in combined for d in part]
        return combined
    if isinstance(node, Presence):
        dnf = _presence_literals(node, config, positive)
    elif isinstance(node, Activity):
        dnf = _activity_literals(node, config, positive)
    elif isinstance(node, TimeAtom):
        lit = _time_literal(node, positive)
        dnf = lit if lit in (_TRUE, _FALSE) else [[lit]]
    elif isinstance(node, Comparison):
        decl_room = node.room
        axis = (node.variable.lower(), decl_room)
        dnf = [[_NumLit(axis, _num_intervals(node.op, node.value, positive))]]
    else:
        raise TypeError(f"not a condition node: {node!r}")
    if dnf is _TRUE:
        return [[]]
    if dnf is _FALSE:
        return []
    return dnf


def _consistent(conjunction: list, config: HomeConfig) -> dict | None:
    """Merged-constraint witness when the conjunction is satisfiable, else None."""
    booleans: dict[tuple, bool] = {}
    axes: dict[tuple, tuple[tuple[float, float], ...]] = {}
    time = _TimeLit()
    for lit in conjunction:
        if isinstance(lit, _BoolLit):
            held = booleans.get(lit.atom)
            if held is not None and held != lit.positive:
                return None
            booleans[lit.atom] = lit.positive
        elif isinstance(lit, _NumLit):
            held_iv = axes.get(lit.axis, ((-float("inf"), float("inf")),))
            merged = _intersect_float_spans(held_iv, lit.intervals)
            if not merged:
                return None
            axes[lit.axis] = merged
        else:
            time = _TimeLit(
                minutes=_intersect_spans(time.minutes, lit.minutes),
                seasons=time.seasons & lit.seasons,
                dow=time.dow & lit.dow,
                holiday=time.holiday & lit.holiday)
            if not (time.minutes and time.seasons and time.dow and time.holiday):
                return None
    # one place at a time
    rooms_of: dict[str, set[str]] = {}
    for (kind, who, what), pol in booleans.items():
        if kind == "presence" and pol:
            rooms_of.setdefault(who, set()).add(what)
    for who, rooms in rooms_of.items():
        if len(rooms) > 1:
            return None
    # one activity at a time, and activity implies present somewhere
    acts_of: dict[str, set[str]] = {}
    for (kind, who, what), pol in booleans.items():
        if kind == "activity" and pol:
            acts_of.setdefault(who, set()).add(what)
    for who, acts in acts_of.items():
        if len(acts) > 1:
            return None
        if config.rooms and all(
                booleans.get(("presence", who, room)) is False
                for room in config.rooms):
            return None
    return {
        "presence": {f"{who}@{what}": pol
                     for (k, who, what), pol in booleans.items() if k == "presence"},
        "activity": {f"{who}:{what}": pol
                     for (k, who, what), pol in booleans.items() if k == "activity"},
        "minutes": list(time.minutes),
        "seasons": sorted(time.seasons),
        "axes": {f"{var}@{room or 'Home'}":
                 [[lo, hi] for lo, hi in spans] for (var, room), spans in axes.items()},
    }


def _intersect_float_spans(a, b):
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo <= hi:
                out.append((lo, hi))
    return tuple(out)


def conditions_overlap(a: ConditionNode, b: ConditionNode, config: HomeConfig
                       ) -> dict | None:
    """A witness of a satisfiable joint assignment, or None when disjoint."""
    for conj_a in _to_dnf(a, config):
        for conj_b in _to_dnf(b, config):
            witness = _consistent(conj_a + conj_b, config)
            if witness is not None:
                return witness
    return None


# -- directive compatibility ---------------------------------------------------


def _directive_incompatible(action_a, action_b, config: HomeConfig) -> str | None:
    set_a, set_b = isinstance(action_a, SetAction), isinstance(action_b, SetAction)
    if set_a and set_b:
        if action_a.value.lower() != action_b.value.lower():
            return f"disjoint SET values {action_a.value} vs {action_b.value}"
        return None
    if set_a != set_b:
        return "SET and KEEP demands on the same variable"
    lo_a, hi_a = keep_band(action_a, config)
    lo_b, hi_b = keep_band(action_b, config)
    if max(lo_a, lo_b) > min(hi_a, hi_b):
        return (f"KEEP bands [{lo_a:g}, {hi_a:g}] and [{lo_b:g}, {hi_b:g}] "
                "do not intersect")
    return None


@dataclass(frozen=True)
class Conflict:
    rule_a: str
    rule_b: str
    variable: str
    rooms: tuple[str, ...]
    reason: str
    witness: dict = field(compare=False, default_factory=dict)


def detect_conflicts(new_rule: RuleAST, script: list[RuleAST], config: HomeConfig
                     ) -> list[Conflict]:
    """All conflicts between a candidate rule and the rules of a script."""
    from .controlflow import scope_rooms  # local import avoids a cycle at startup

    conflicts: list[Conflict] = []
    for other in script:
        if other.id == new_rule.id:
            continue
        overlap: dict | None = None
        overlap_checked = False
        for action_a in new_rule.actions:
            if isinstance(action_a, NotifyAction):
                continue
            for action_b in other.actions:
                if isinstance(action_b, NotifyAction):
                    continue
                if action_a.variable.lower() != action_b.variable.lower():
                    continue
                rooms = tuple(sorted(
                    set(scope_rooms(action_a.scope, config))
                    & set(scope_rooms(action_b.scope, config))))
                if not rooms:
                    continue
                reason = _directive_incompatible(action_a, action_b, config)
                if reason is None:
                    continue
                if not overlap_checked:
                    overlap = conditions_overlap(new_rule.condition, other.condition,
                                                 config)
                    overlap_checked = True
                if overlap is None:
                    continue
                conflicts.append(Conflict(
                    rule_a=new_rule.id, rule_b=other.id,
                    variable=action_a.variable, rooms=rooms,
                    reason=reason, witness=overlap))
    return conflicts

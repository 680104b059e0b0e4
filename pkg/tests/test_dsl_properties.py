"""Round-trip and rejection properties of the rule language."""

import pytest
from hypothesis import given, settings, strategies as st

from hearth.dsl import format_rule, parse_rule
from hearth.dsl.ast import (
    Above, Activity, Below, Between, Comparison, KeepAction, Logical,
    NotifyAction, Presence, RuleAST, Scope, SetAction, Subject, TimeAtom,
)
from hearth.dsl.parser import MisplacedVariable, _Parser
from hearth.model import load_home_config

from conftest import DEMO

CONFIG = load_home_config(DEMO / "home.json")
REGISTRY = CONFIG.registry

RESIDENTS = sorted(CONFIG.residents)
ROOMS = sorted(CONFIG.rooms)
ACTIVITIES = sorted(CONFIG.registry.names("Activity"))
TIME_KEYWORDS = ["Morning", "Afternoon", "Evening", "Night", "Weekend",
                 "Holiday", "Always", "Summer", "Winter"]

subjects = st.one_of(
    st.sampled_from(RESIDENTS).map(lambda n: Subject("resident", n)),
    st.just(Subject("any")),
    st.just(Subject("all")),
    st.sampled_from(["CleaningPerson"]).map(lambda n: Subject("role", n)),
)

numbers = st.integers(min_value=0, max_value=40).map(float)

atoms = st.one_of(
    st.builds(Presence, subjects, st.sampled_from(ROOMS + ["Home"])),
    st.builds(Activity, subjects, st.sampled_from(ACTIVITIES)),
    st.sampled_from(TIME_KEYWORDS).map(lambda k: TimeAtom(keyword=k)),
    st.builds(lambda h, m: TimeAtom(clock=f"{h:02d}:{m:02d}"),
              st.integers(0, 23), st.integers(0, 59)),
    st.builds(Comparison, st.just("TemperatureVAL"),
              st.one_of(st.none(), st.sampled_from(ROOMS)),
              st.sampled_from(["EQUAL", "ABOVE", "BELOW"]), numbers),
)


def conditions(depth: int = 2):
    if depth == 0:
        return atoms
    sub = conditions(depth - 1)
    return st.one_of(
        atoms,
        st.builds(lambda c: Logical("NOT", (c,)), sub),
        st.lists(sub, min_size=2, max_size=3).map(
            lambda cs: Logical("AND", tuple(cs))),
        st.lists(sub, min_size=2, max_size=3).map(
            lambda cs: Logical("OR", tuple(cs))),
    )


scopes = st.one_of(
    st.just(Scope.home()),
    st.sampled_from(ROOMS).map(Scope.room),
    st.sampled_from(RESIDENTS).map(Scope.resident_room),
)

keep_targets = st.one_of(
    st.tuples(numbers, numbers).map(lambda ab: Between(*ab)),
    numbers.map(Above),
    numbers.map(Below),
)

actions = st.one_of(
    st.builds(SetAction, st.just("LightSET"), scopes, st.sampled_from(["ON", "OFF"])),
    st.builds(SetAction, st.just("ExternalDoorsSET"), scopes,
              st.sampled_from(["OPEN", "CLOSE"])),
    st.builds(KeepAction, st.just("TemperatureKEEP"), scopes, keep_targets),
    st.builds(NotifyAction, subjects, st.sampled_from(["NOTIFY", "WARN"]),
              st.one_of(st.none(), st.just("check the stove"))),
)

rules = st.builds(
    lambda c, a: RuleAST(id="g", owner="", condition=c, actions=tuple(a)),
    conditions(), st.lists(actions, min_size=1, max_size=3))


@settings(max_examples=200, deadline=None)
@given(rules)
def test_format_parse_round_trip(ast):
    text = format_rule(ast, CONFIG)
    reparsed = parse_rule(text, REGISTRY, CONFIG)
    assert reparsed.same_shape(ast), text


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["TemperatureKEEP", "LightSET", "VolumeKEEP"]),
       st.sampled_from(["EQUAL", "ABOVE", "BELOW"]),
       numbers)
def test_controlled_variables_never_accepted_in_conditions(name, op, value):
    with pytest.raises(MisplacedVariable):
        parse_rule(f"IF {name} {op} {value:g} THEN SET Light IN Kitchen ON",
                   REGISTRY, CONFIG)


@settings(max_examples=60, deadline=None)
@given(st.tuples(numbers, numbers))
def test_keep_between_always_normalized(bounds):
    a, b = bounds
    ast = parse_rule(f"IF Always THEN KEEP Home Temperature BETWEEN {a:g} {b:g}",
                     REGISTRY, CONFIG)
    (action,) = ast.actions
    assert action.target.lo <= action.target.hi

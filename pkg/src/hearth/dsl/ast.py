"""Rule AST node types.

Conditions reference measured variables, presence/activity atoms, and time
atoms only; actions reference controlled variables or notification targets
only. The parser enforces that separation by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Subject:
    """Who a presence/activity/notification atom is about.

    kind: resident | role | any | all. "any" is the Anyone alias (at least
    one resident); "all" is AllTenants (every resident).
    """

    kind: str
    name: str | None = None

    def display(self) -> str:
        if self.kind == "any":
            return "Anyone"
        if self.kind == "all":
            return "AllTenants"
        return self.name or ""


@dataclass(frozen=True)
class Scope:
    """Where an action applies: the whole home, a room, or a resident's room."""

    kind: str  # home | room | resident-room
    name: str | None = None

    @staticmethod
    def home() -> "Scope":
        return Scope("home")

    @staticmethod
    def room(name: str) -> "Scope":
        return Scope("room", name)

    @staticmethod
    def resident_room(name: str) -> "Scope":
        return Scope("resident-room", name)


class ConditionNode:
    pass


@dataclass(frozen=True)
class Logical(ConditionNode):
    op: str  # AND | OR | NOT
    children: tuple[ConditionNode, ...]

    def __post_init__(self):
        if self.op == "NOT" and len(self.children) != 1:
            raise ValueError("NOT takes exactly one operand")
        if self.op in ("AND", "OR"):
            # canonical form: same-op chains are flat
            flat: list[ConditionNode] = []
            for child in self.children:
                if isinstance(child, Logical) and child.op == self.op:
                    flat.extend(child.children)
                else:
                    flat.append(child)
            if len(flat) < 2:
                raise ValueError(f"{self.op} takes at least two operands")
            object.__setattr__(self, "children", tuple(flat))


@dataclass(frozen=True)
class Presence(ConditionNode):
    subject: Subject
    location: str


@dataclass(frozen=True)
class Activity(ConditionNode):
    subject: Subject
    activity: str


@dataclass(frozen=True)
class TimeAtom(ConditionNode):
    keyword: str | None = None
    clock: str | None = None  # normalized HH:MM


@dataclass(frozen=True)
class Comparison(ConditionNode):
    variable: str            # measured variable name (VAL postfix)
    room: str | None         # optional location scope
    op: str                  # EQUAL | ABOVE | BELOW
    value: float


class ActionNode:
    pass


@dataclass(frozen=True)
class Between:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            lo, hi = self.hi, self.lo
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)


@dataclass(frozen=True)
class Above:
    value: float


@dataclass(frozen=True)
class Below:
    value: float


@dataclass(frozen=True)
class SetAction(ActionNode):
    variable: str           # controlled SET variable name
    scope: Scope
    value: str              # member of the declared discrete domain


@dataclass(frozen=True)
class KeepAction(ActionNode):
    variable: str           # controlled KEEP variable name
    scope: Scope
    target: Between | Above | Below


@dataclass(frozen=True)
class NotifyAction(ActionNode):
    target: Subject
    severity: str           # NOTIFY | WARN
    message: str | None = None


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    rule_id: str | None = None


@dataclass(frozen=True)
class RuleAST:
    id: str
    owner: str
    condition: ConditionNode
    actions: tuple[ActionNode, ...]
    source: str = ""
    warnings: tuple[Diagnostic, ...] = field(default=(), compare=False)

    def same_shape(self, other: "RuleAST") -> bool:
        """Structural equality on condition and actions only."""
        return self.condition == other.condition and self.actions == other.actions

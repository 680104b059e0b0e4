"""Canonical rule text. parse(format(ast)) is structurally identical to ast."""

from __future__ import annotations

from ..model import HomeConfig
from .ast import (
    ActionNode, Activity, Above, Below, Between, Comparison, ConditionNode,
    KeepAction, Logical, NotifyAction, Presence, RuleAST, Scope, SetAction,
    TimeAtom,
)

_PREC = {"OR": 1, "AND": 2, "NOT": 3}


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _condition(node: ConditionNode, parent_prec: int = 0) -> str:
    if isinstance(node, Logical):
        if node.op == "NOT":
            inner = node.children[0]
            if isinstance(inner, Presence):
                return f"{inner.subject.display()} NOT IN {inner.location}"
            return f"NOT {_condition(inner, _PREC['NOT'])}"
        sep = f" {node.op} "
        text = sep.join(_condition(c, _PREC[node.op]) for c in node.children)
        if _PREC[node.op] < parent_prec:
            return f"({text})"
        return text
    if isinstance(node, Presence):
        return f"{node.subject.display()} IN {node.location}"
    if isinstance(node, Activity):
        return f"{node.subject.display()} ACTIVITY IS {node.activity}"
    if isinstance(node, TimeAtom):
        return f"AT {node.clock}" if node.clock else str(node.keyword)
    if isinstance(node, Comparison):
        where = f" IN {node.room}" if node.room else ""
        return f"{node.variable}{where} {node.op} {_num(node.value)}"
    raise TypeError(f"not a condition node: {node!r}")


def _quantity(variable: str, config: HomeConfig | None) -> str:
    if config is not None:
        decl = config.variable(variable)
        if decl is not None:
            return decl.quantity
    return variable


def _action(node: ActionNode, config: HomeConfig | None) -> str:
    if isinstance(node, SetAction):
        q = _quantity(node.variable, config)
        if node.scope.kind == "resident-room":
            return f"SET {node.scope.name} ROOM {q} {node.value}"
        if node.scope.kind == "room":
            return f"SET {q} IN {node.scope.name} {node.value}"
        return f"SET {q} {node.value}"
    if isinstance(node, KeepAction):
        q = _quantity(node.variable, config)
        if node.scope.kind == "resident-room":
            prefix = f"{node.scope.name} ROOM "
        elif node.scope.kind == "room":
            prefix = f"{node.scope.name} "
        else:
            prefix = "Home "
        if isinstance(node.target, Between):
            target = f"BETWEEN {_num(node.target.lo)} {_num(node.target.hi)}"
        elif isinstance(node.target, Above):
            target = f"ABOVE {_num(node.target.value)}"
        else:
            target = f"BELOW {_num(node.target.value)}"
        return f"KEEP {prefix}{q} {target}"
    if isinstance(node, NotifyAction):
        text = f"{node.severity} {node.target.display()}"
        if node.message:
            text += f' "{node.message}"'
        return text
    raise TypeError(f"not an action node: {node!r}")


def format_rule(ast: RuleAST, config: HomeConfig | None = None) -> str:
    """Render canonical text for a rule."""
    condition = _condition(ast.condition)
    actions = " AND ".join(_action(a, config) for a in ast.actions)
    return f"IF ({condition}) THEN {actions}"

"""Recursive-descent parser producing RuleAST.

Grammar (conditions bind NOT > AND > OR; parentheses optional):

    rule      := IF condition THEN action (AND action)*
    condition := and-expr (OR and-expr)*
    and-expr  := not-expr (AND not-expr)*
    not-expr  := NOT not-expr | atom
    atom      := '(' condition ')' | time | presence | activity | comparison
    time      := [AT] (CLOCK | date-time-keyword)
    presence  := subject [NOT] IN location
    activity  := subject [ACTIVITY] IS activity-keyword
    comparison:= measured-var [IN location] (EQUAL|ABOVE|BELOW) number
    action    := SET set-tail | KEEP keep-tail | (NOTIFY|WARN) subject [message]
    set-tail  := [scope] quantity [IN location] set-value
    keep-tail := [scope] quantity [KEEP] [IN location]
                 (BETWEEN number number | ABOVE number | BELOW number)
    scope     := resident ROOM | location

Normalizations (all surfaced as warnings on the AST):
- a quantity token maps to the declared variable of the kind the clause
  needs (ROOM_TEMPERATURE -> TemperatureKEEP, LIGHT -> LightSET);
- a VAL-postfixed variable in a SET clause rewrites to its SET sibling;
- SET with a relational bound (ABOVE/BELOW) rewrites to a KEEP action;
- an All-prefixed quantity (AllVolume) means home scope;
- reversed BETWEEN bounds are stored normalized lo <= hi.
"""

from __future__ import annotations

import hashlib

from ..errors import HearthError
from ..model import HomeConfig, KeywordRegistry, VariableDecl, norm_name, norm_quantity
from .ast import (
    ActionNode, Activity, Above, Below, Between, Comparison, ConditionNode,
    Diagnostic, KeepAction, Logical, NotifyAction, Presence, RuleAST, Scope,
    SetAction, Subject, TimeAtom,
)
from .tokens import Token, tokenize


class ParseError(HearthError):
    def __init__(self, message: str, offset: int = 0, expected: tuple[str, ...] = ()):
        detail = f"{message} at byte {offset}"
        if expected:
            detail += f" (expected one of: {', '.join(expected)})"
        super().__init__(detail, offset=offset, expected=expected)
        self.offset = offset
        self.expected = expected


class UnknownIdentifier(HearthError):
    def __init__(self, name: str, offset: int = 0):
        super().__init__(f"unknown identifier {name!r} at byte {offset}",
                         name=name, offset=offset)
        self.name = name


class MisplacedVariable(HearthError):
    def __init__(self, name: str, where: str, offset: int = 0):
        super().__init__(
            f"{name!r} cannot appear in a rule {where} at byte {offset}",
            name=name, offset=offset)
        self.name = name


_SWITCH_VALUES = ("ON", "OFF", "OPEN", "CLOSE")


class _Parser:
    def __init__(self, tokens: list[Token], registry: KeywordRegistry, config: HomeConfig):
        self.tokens = tokens
        self.pos = 0
        self.registry = registry
        self.config = config
        self.warnings: list[Diagnostic] = []

    # -- cursor helpers -------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def expect_kw(self, *names: str) -> Token:
        tok = self.next()
        if not tok.is_kw(*names):
            raise ParseError(f"unexpected {tok.text or 'end of rule'!r}",
                             tok.offset, expected=names)
        return tok

    def warn(self, code: str, message: str) -> None:
        self.warnings.append(Diagnostic(code, message))

    # -- condition ------------------------------------------------------

    def parse_condition(self) -> ConditionNode:
        return self._or_expr()

    def _or_expr(self) -> ConditionNode:
        parts = [self._and_expr()]
        while self.peek().is_kw("OR"):
            self.next()
            parts.append(self._and_expr())
        return parts[0] if len(parts) == 1 else Logical("OR", tuple(parts))

    def _and_expr(self) -> ConditionNode:
        parts = [self._not_expr()]
        while self.peek().is_kw("AND"):
            self.next()
            parts.append(self._not_expr())
        return parts[0] if len(parts) == 1 else Logical("AND", tuple(parts))

    def _not_expr(self) -> ConditionNode:
        if self.peek().is_kw("NOT"):
            self.next()
            return Logical("NOT", (self._not_expr(),))
        return self._atom()

    def _atom(self) -> ConditionNode:
        tok = self.peek()
        if tok.kind == "LPAREN":
            self.next()
            inner = self.parse_condition()
            closing = self.next()
            if closing.kind != "RPAREN":
                raise ParseError("unbalanced parenthesis", closing.offset, (")",))
            return inner
        if tok.is_kw("AT"):
            self.next()
            return self._time_atom(self.next())
        if tok.kind == "CLOCK":
            self.next()
            return TimeAtom(clock=tok.text)
        if tok.kind == "IDENT":
            return self._ident_atom(self.next())
        raise ParseError(f"unexpected {tok.text or 'end of rule'!r} in condition",
                         tok.offset, expected=("identifier", "(", "NOT", "AT"))

    def _time_atom(self, tok: Token) -> TimeAtom:
        if tok.kind == "CLOCK":
            return TimeAtom(clock=tok.text)
        if tok.kind == "IDENT":
            canon = self.registry.resolve_in("DateTimeEvent", tok.text)
            if canon:
                return TimeAtom(keyword=canon)
        raise ParseError(f"expected a time after AT, got {tok.text!r}", tok.offset)

    def _ident_atom(self, tok: Token) -> ConditionNode:
        subject = self._as_subject(tok.text)
        if subject is not None:
            return self._subject_atom(subject, tok)
        canon = self.registry.resolve_in("DateTimeEvent", tok.text)
        if canon:
            return TimeAtom(keyword=canon)
        decl = self.config.variable(tok.text)
        if decl is not None:
            if decl.controlled:
                raise MisplacedVariable(decl.name, "condition", tok.offset)
            return self._comparison(decl, tok)
        decl = self.config.variable_for_quantity(tok.text, "VAL")
        if decl is not None:
            return self._comparison(decl, tok)
        if (self.config.variable_for_quantity(tok.text, "SET")
                or self.config.variable_for_quantity(tok.text, "KEEP")):
            raise MisplacedVariable(tok.text, "condition", tok.offset)
        raise UnknownIdentifier(tok.text, tok.offset)

    def _as_subject(self, name: str) -> Subject | None:
        low = name.lower()
        if low == "anyone":
            return Subject("any")
        if low == "alltenants":
            return Subject("all")
        resident = self.config.find_resident(name)
        if resident:
            return Subject("resident", resident)
        role = self.config.find_role(name)
        if role:
            return Subject("role", role)
        canon = self.registry.resolve_in("Resident", name)
        if canon:
            return Subject("resident", canon)
        canon = self.registry.resolve_in("Role", name)
        if canon:
            return Subject("role", canon)
        return None

    def _subject_atom(self, subject: Subject, at: Token) -> ConditionNode:
        tok = self.peek()
        if tok.is_kw("NOT") and self.peek(1).is_kw("IN"):
            self.next()
            self.next()
            return Logical("NOT", (Presence(subject, self._location()),))
        if tok.is_kw("IN"):
            self.next()
            return Presence(subject, self._location())
        if tok.is_kw("ACTIVITY"):
            self.next()
            self.expect_kw("IS", "EQUAL")
            return Activity(subject, self._activity_keyword())
        if tok.is_kw("IS"):
            self.next()
            return Activity(subject, self._activity_keyword())
        raise ParseError(f"expected IN/IS/ACTIVITY after {subject.display()!r}",
                         tok.offset, expected=("IN", "IS", "ACTIVITY", "NOT IN"))

    def _location(self) -> str:
        tok = self.next()
        if tok.kind != "IDENT":
            raise ParseError("expected a location", tok.offset)
        canon = self.registry.resolve_in("Location", tok.text)
        if canon is None:
            canon = self.config.find_room(tok.text)
        if canon is None:
            raise UnknownIdentifier(tok.text, tok.offset)
        return canon

    def _activity_keyword(self) -> str:
        tok = self.next()
        if tok.kind != "IDENT":
            raise ParseError("expected an activity", tok.offset)
        canon = self.registry.resolve_in("Activity", tok.text)
        if canon is None:
            raise UnknownIdentifier(tok.text, tok.offset)
        return canon

    def _comparison(self, decl: VariableDecl, at: Token) -> Comparison:
        room = None
        if self.peek().is_kw("IN"):
            self.next()
            room = self._location()
        op = self.next()
        if not op.is_kw("EQUAL", "ABOVE", "BELOW"):
            raise ParseError(f"expected EQUAL/ABOVE/BELOW after {decl.name}",
                             op.offset, expected=("EQUAL", "ABOVE", "BELOW"))
        num = self.next()
        if num.kind != "NUMBER":
            raise ParseError("expected a number", num.offset, expected=("number",))
        return Comparison(decl.name, room, op.text, float(num.text))

    # -- actions ---------------------------------------------------------

    def parse_actions(self) -> tuple[ActionNode, ...]:
        actions = list(self._action())
        while self.peek().is_kw("AND"):
            self.next()
            actions.extend(self._action())
        return tuple(actions)

    def _action(self) -> list[ActionNode]:
        tok = self.peek()
        if tok.kind == "STRING":
            # Typographically quoted action clause: re-tokenize the content.
            self.next()
            sub = _Parser(tokenize(tok.text), self.registry, self.config)
            actions = sub.parse_actions()
            end = sub.next()
            if end.kind != "EOF":
                raise ParseError(f"unexpected {end.text!r} in quoted action",
                                 tok.offset + end.offset)
            self.warnings.extend(sub.warnings)
            return list(actions)
        if tok.is_kw("SET"):
            self.next()
            return [self._set_tail(tok)]
        if tok.is_kw("KEEP"):
            self.next()
            return [self._keep_tail()]
        if tok.is_kw("NOTIFY", "WARN"):
            self.next()
            return [self._notify_tail(tok.text)]
        raise ParseError(f"unexpected {tok.text or 'end of rule'!r}; an action starts "
                         "with SET, KEEP, NOTIFY or WARN", tok.offset,
                         expected=("SET", "KEEP", "NOTIFY", "WARN"))

    def _maybe_scope_prefix(self) -> Scope | None:
        tok = self.peek()
        if tok.kind != "IDENT":
            return None
        low = tok.text.lower()
        if low in ("home", "allrooms"):
            self.next()
            return Scope.home()
        resident = self.config.find_resident(tok.text)
        if resident and self.peek(1).kind == "IDENT":
            follower = norm_name(self.peek(1).text)
            if follower == "room":
                self.next()
                self.next()
                return Scope.resident_room(resident)
            # Fused form "Joe ROOM_TEMPERATURE", or a bare controlled quantity.
            if (follower.startswith("room")
                    or self.config.variable_for_quantity(self.peek(1).text, "SET")
                    or self.config.variable_for_quantity(self.peek(1).text, "KEEP")):
                self.next()
                return Scope.resident_room(resident)
        room = self.config.find_room(tok.text)
        if room:
            self.next()
            return Scope.room(room)
        return None

    def _postfix_scope(self, scope: Scope | None) -> Scope | None:
        if not self.peek().is_kw("IN"):
            return scope
        at = self.next()
        if scope is not None:
            raise ParseError("action has both a scope prefix and IN <location>",
                             at.offset)
        tok = self.next()
        if tok.kind != "IDENT":
            raise ParseError("expected a location after IN", tok.offset)
        if tok.text.lower() in ("home", "allrooms"):
            return Scope.home()
        room = self.config.find_room(tok.text)
        if room is None:
            raise UnknownIdentifier(tok.text, tok.offset)
        return Scope.room(room)

    def _controlled_for_set(self, tok: Token) -> tuple[VariableDecl, Scope | None]:
        """Resolve the quantity token of a SET clause; may imply home scope."""
        name = tok.text
        decl = self.config.variable(name)
        if decl is not None:
            if decl.kind == "VAL":
                decl = self._val_to_set(decl.quantity, decl.name, tok)
            return decl, None  # KEEP decls: caller rewrites relational SETs
        decl = self.config.variable_for_quantity(name, "SET")
        if decl is not None:
            return decl, None
        low = name.lower()
        postfix = next((p for p in ("keep", "val", "set")
                        if low.endswith(p) and len(low) > len(p)), None)
        if postfix is not None:
            base = name[: -len(postfix)]
            if postfix == "val" and self.config.variable_for_quantity(base, "SET"):
                return self._val_to_set(base, name, tok), None
            if postfix != "val":
                hit = self.config.variable_for_quantity(base, postfix.upper())
                if hit is not None:
                    return hit, None
        if low.startswith("all") and len(low) > 3:
            rest = name[3:]
            inner = (self.config.variable_for_quantity(rest, "SET")
                     or self.config.variable_for_quantity(rest, "KEEP"))
            if inner is not None:
                return inner, Scope.home()
        decl = self.config.variable_for_quantity(name, "KEEP")
        if decl is not None:
            return decl, None
        if self.config.variable_for_quantity(name, "VAL") is not None:
            raise MisplacedVariable(name, "action", tok.offset)
        raise UnknownIdentifier(name, tok.offset)

    def _val_to_set(self, quantity: str, written: str, tok: Token) -> VariableDecl:
        sibling = self.config.variable_for_quantity(quantity, "SET")
        if sibling is None:
            raise MisplacedVariable(written, "action", tok.offset)
        self.warn("postfix-rewrite",
                  f"{written} names a measured reading; writing its "
                  f"controlled sibling {sibling.name}")
        return sibling

    def _set_tail(self, at: Token) -> ActionNode:
        scope = self._maybe_scope_prefix()
        tok = self.next()
        if tok.kind != "IDENT":
            raise ParseError("expected a variable or quantity after SET", tok.offset)
        decl, implied = self._controlled_for_set(tok)
        if implied is not None:
            if scope is not None:
                raise ParseError("conflicting scopes in SET action", tok.offset)
            scope = implied
        scope = self._postfix_scope(scope) or scope
        nxt = self.peek()
        if decl.kind == "KEEP" or nxt.is_kw("ABOVE", "BELOW", "BETWEEN"):
            if decl.kind != "KEEP":
                keep = self.config.variable_for_quantity(decl.quantity, "KEEP")
                if keep is None:
                    raise MisplacedVariable(decl.name, "relational SET action", tok.offset)
                decl = keep
            target = self._keep_target(decl)
            self.warn("relational-set-rewrite",
                      f"SET with a bound is kept as a {decl.name} band")
            return KeepAction(decl.name, scope or Scope.home(), target)
        value_tok = self.next()
        if value_tok.is_kw(*_SWITCH_VALUES) or value_tok.kind in ("IDENT", "NUMBER"):
            value = decl.domain.canonical(value_tok.text)  # type: ignore[union-attr]
            if value is None:
                raise ParseError(
                    f"{value_tok.text!r} is not in the domain of {decl.name}",
                    value_tok.offset,
                    expected=tuple(decl.domain.values))  # type: ignore[union-attr]
            return SetAction(decl.name, scope or Scope.home(), value)
        raise ParseError("expected a value for SET", value_tok.offset)

    def _keep_tail(self) -> ActionNode:
        scope = self._maybe_scope_prefix()
        tok = self.next()
        if tok.kind != "IDENT":
            raise ParseError("expected a variable or quantity after KEEP", tok.offset)
        decl = self.config.variable(tok.text)
        if decl is not None and decl.kind != "KEEP":
            raise MisplacedVariable(decl.name, "KEEP action", tok.offset)
        if decl is None:
            decl = self.config.variable_for_quantity(tok.text, "KEEP")
        if decl is None:
            if (self.config.variable_for_quantity(tok.text, "VAL")
                    or self.config.variable_for_quantity(tok.text, "SET")):
                raise MisplacedVariable(tok.text, "KEEP action", tok.offset)
            raise UnknownIdentifier(tok.text, tok.offset)
        if self.peek().is_kw("KEEP"):  # the doubled-postfix prose form
            self.next()
        scope = self._postfix_scope(scope)
        target = self._keep_target(decl)
        return KeepAction(decl.name, scope or Scope.home(), target)

    def _keep_target(self, decl: VariableDecl):
        tok = self.next()
        if tok.is_kw("BETWEEN"):
            lo = self._number()
            hi = self._number()
            if lo > hi:
                self.warn("band-normalized",
                          f"BETWEEN {lo:g} {hi:g} stored as {hi:g}..{lo:g}")
            return Between(lo, hi)
        if tok.is_kw("ABOVE"):
            return Above(self._number())
        if tok.is_kw("BELOW"):
            return Below(self._number())
        raise ParseError("expected BETWEEN/ABOVE/BELOW", tok.offset,
                         expected=("BETWEEN", "ABOVE", "BELOW"))

    def _number(self) -> float:
        tok = self.next()
        if tok.kind != "NUMBER":
            raise ParseError("expected a number", tok.offset, expected=("number",))
        return float(tok.text)

    def _notify_tail(self, severity: str) -> NotifyAction:
        tok = self.next()
        if tok.kind != "IDENT":
            raise ParseError(f"expected a recipient after {severity}", tok.offset)
        subject = self._as_subject(tok.text)
        if subject is None:
            raise UnknownIdentifier(tok.text, tok.offset)
        message = None
        if self.peek().kind == "STRING":
            message = self.next().text
        return NotifyAction(subject, severity, message)

    # -- rule -------------------------------------------------------------

    def parse_rule(self) -> tuple[ConditionNode, tuple[ActionNode, ...]]:
        self.expect_kw("IF")
        condition = self.parse_condition()
        self.expect_kw("THEN")
        actions = self.parse_actions()
        tail = self.next()
        if tail.kind != "EOF":
            raise ParseError(f"unexpected trailing {tail.text!r}", tail.offset)
        if not actions:
            raise ParseError("a rule needs at least one action", tail.offset)
        return condition, actions


def _auto_id(text: str) -> str:
    return "r" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:8]


def parse_rule(text: str, registry: KeywordRegistry, config: HomeConfig,
               rule_id: str | None = None, owner: str = "") -> RuleAST:
    """Parse one rule. Raises ParseError / UnknownIdentifier / MisplacedVariable."""
    parser = _Parser(tokenize(text), registry, config)
    condition, actions = parser.parse_rule()
    return RuleAST(
        id=rule_id or _auto_id(text.strip()),
        owner=owner,
        condition=condition,
        actions=actions,
        source=text.strip(),
        warnings=tuple(parser.warnings),
    )


def parse_script(text: str, registry: KeywordRegistry, config: HomeConfig,
                 owner: str = "") -> list[RuleAST]:
    """Parse a script file: one rule per line, '#' comments, blank lines allowed."""
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        rules.append(parse_rule(line, registry, config,
                                rule_id=f"r{len(rules) + 1}", owner=owner))
    return rules

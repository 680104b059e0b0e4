"""Script-level semantic checks. Diagnostics are values, never exceptions."""

from __future__ import annotations

from ..model import ContinuousDomain, DiscreteDomain, HomeConfig
from .ast import (
    Above, Below, Between, Diagnostic, KeepAction, NotifyAction, RuleAST,
    Scope, SetAction,
)


def _scope_ok(scope: Scope, config: HomeConfig) -> bool:
    if scope.kind == "home":
        return True
    if scope.kind == "room":
        return scope.name in config.rooms
    return scope.name in config.residents


def validate_script(rules: list[RuleAST], config: HomeConfig) -> list[Diagnostic]:
    """All diagnostics for a parsed script; an empty list means clean."""
    diagnostics: list[Diagnostic] = []
    seen_ids: set[str] = set()
    for rule in rules:
        if rule.id in seen_ids:
            diagnostics.append(Diagnostic(
                "DuplicateRuleId", f"rule id {rule.id!r} appears more than once",
                rule_id=rule.id))
        seen_ids.add(rule.id)
        diagnostics.extend(w if w.rule_id else Diagnostic(w.code, w.message, rule.id)
                           for w in rule.warnings)
        for action in rule.actions:
            if isinstance(action, NotifyAction):
                continue
            if not _scope_ok(action.scope, config):
                diagnostics.append(Diagnostic(
                    "UnknownScope",
                    f"scope {action.scope.kind}:{action.scope.name!r} does not resolve",
                    rule_id=rule.id))
            decl = config.variable(action.variable)
            if decl is None:
                diagnostics.append(Diagnostic(
                    "UnknownVariable", f"{action.variable!r} is not declared",
                    rule_id=rule.id))
                continue
            if isinstance(action, SetAction):
                domain = decl.domain
                if isinstance(domain, DiscreteDomain) and not domain.contains(action.value):
                    diagnostics.append(Diagnostic(
                        "OutOfDomain",
                        f"{action.value!r} is outside the domain of {decl.name}",
                        rule_id=rule.id))
            elif isinstance(action, KeepAction):
                domain = decl.domain
                if not isinstance(domain, ContinuousDomain):
                    continue
                target = action.target
                if isinstance(target, Between):
                    bad = target.lo < domain.lo or target.hi > domain.hi
                elif isinstance(target, Above):
                    bad = not domain.contains(target.value)
                else:
                    assert isinstance(target, Below)
                    bad = not domain.contains(target.value)
                if bad:
                    diagnostics.append(Diagnostic(
                        "OutOfDomain",
                        f"KEEP target outside [{domain.lo:g}, {domain.hi:g}] "
                        f"for {decl.name}", rule_id=rule.id))
    return diagnostics

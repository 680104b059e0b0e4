"""Policy-driven rule management: intake, checks, conflicts, quiescent swap.

A proposal passes through the same pipeline regardless of its source: ticket
verification, syntax check, permission check against the ACL, and conflict
check against the executing script. Conflicts resolve through the owner
hierarchy — lower depth wins, equal depth escalates to the closest shared
parent — and the loser stays in the script as a dormant entry that revives if
its superseder is later deleted. Script changes activate only at a tick
boundary (the quiescent point), never mid-tick.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .conflicts import Conflict, detect_conflicts
from .controlflow import ActiveRule
from .dsl.ast import Comparison, KeepAction, Logical, NotifyAction, RuleAST, SetAction
from .dsl.parser import parse_rule
from .errors import HearthError
from .model import HomeConfig
from .security import Acl, AuditLog, TrustStore, UserAccount, parse_wire_ticket, verify_ticket


class SwapPending(HearthError):
    pass


class TicketInvalid(HearthError):
    pass


class PermissionDenied(HearthError):
    pass


class UnknownProposal(HearthError):
    pass


# -- owner hierarchy -----------------------------------------------------------


@dataclass(frozen=True)
class OwnerNode:
    id: str
    role: str
    parent: str | None  # None only at the root (the rule administrator)


class OwnerTree:
    """Single-rooted priority tree; an owner's priority is its depth."""

    def __init__(self, nodes: list[OwnerNode]):
        self.nodes = {n.id: n for n in nodes}
        roots = [n for n in nodes if n.parent is None]
        if len(roots) != 1:
            raise ValueError(f"the owner tree needs exactly one root, got {len(roots)}")
        self.root = roots[0].id
        for node in nodes:
            if node.parent is not None and node.parent not in self.nodes:
                raise ValueError(f"owner {node.id!r} has unknown parent {node.parent!r}")
        # reject cycles by forcing every chain to terminate at the root
        for node in nodes:
            self.depth(node.id)

    def depth(self, owner_id: str) -> int:
        depth = 0
        seen = set()
        node = self.nodes[owner_id]
        while node.parent is not None:
            if node.id in seen:
                raise ValueError("owner tree contains a cycle")
            seen.add(node.id)
            node = self.nodes[node.parent]
            depth += 1
        return depth

    def ancestors(self, owner_id: str) -> list[str]:
        chain = [owner_id]
        node = self.nodes[owner_id]
        while node.parent is not None:
            chain.append(node.parent)
            node = self.nodes[node.parent]
        return chain

    def closest_shared_parent(self, a: str, b: str) -> str:
        if a == b:
            return self.nodes[a].parent or self.root
        chain_b = set(self.ancestors(b))
        for owner in self.ancestors(a):
            if owner in chain_b:
                return owner
        return self.root

    def role_of(self, owner_id: str) -> str:
        return self.nodes[owner_id].role


@dataclass(frozen=True)
class RuleManagementPolicy:
    conflict_mode: str = "priority-auto"   # priority-auto | drop | warn-source | escalate
    update_mode: str = "quiescent-swap"
    recommend_only: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.conflict_mode not in ("priority-auto", "drop", "warn-source", "escalate"):
            raise ValueError(f"unknown conflict mode {self.conflict_mode!r}")
        if self.update_mode != "quiescent-swap":
            raise ValueError("the only supported update mode is quiescent-swap")


@dataclass
class PolicyBundle:
    policy: RuleManagementPolicy
    tree: OwnerTree
    acl: Acl
    users: dict[str, UserAccount]


def load_policy(document: dict | str | Path) -> PolicyBundle:
    if isinstance(document, Path):
        document = json.loads(document.read_text())
    elif isinstance(document, str):
        document = json.loads(document)
    policy = RuleManagementPolicy(
        conflict_mode=document.get("conflict_mode", "priority-auto"),
        recommend_only=frozenset(document.get("recommend_only", ())))
    tree = OwnerTree([OwnerNode(id=n["id"], role=n.get("role", "Resident"),
                                parent=n.get("parent"))
                      for n in document["owners"]])
    from .security import AclEntry
    acl = Acl([AclEntry.parse(e) for e in document.get("acl", ())])
    users = {}
    for entry in document.get("users", ()):
        users[entry["name"]] = UserAccount.create(
            name=entry["name"], secret=entry["secret"],
            role=entry.get("role", "Resident"),
            owner_id=entry.get("owner_id", entry["name"]),
            origin=entry.get("origin", "local"))
    return PolicyBundle(policy=policy, tree=tree, acl=acl, users=users)


# -- proposals -----------------------------------------------------------------


@dataclass(frozen=True)
class RuleProposal:
    id: str
    rule_text: str
    owner: str
    status: str                         # Pending | Accepted | Rejected | Escalated | RecommendationOnly
    reason: str | None = None
    escalated_to: str | None = None
    conflicts: tuple[Conflict, ...] = ()
    rule_id: str | None = None


@dataclass
class ScriptEntry:
    rule: RuleAST
    owner: str
    depth: int
    dormant: bool = False
    superseded_by: str | None = None

    def to_active(self) -> ActiveRule:
        return ActiveRule(rule=self.rule, owner=self.owner, depth=self.depth,
                          dormant=self.dormant)


@dataclass(frozen=True)
class SwapReceipt:
    requested_at_tick: int
    activated_at_tick: int
    script_hash: str


def _script_hash(entries: list[ScriptEntry]) -> str:
    import hashlib
    blob = "\n".join(f"{e.rule.id}:{e.rule.source}:{int(e.dormant)}" for e in entries)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _condition_reads(rule: RuleAST, config: HomeConfig) -> set[str]:
    reads: set[str] = set()

    def walk(node):
        if isinstance(node, Logical):
            for child in node.children:
                walk(child)
        elif isinstance(node, Comparison):
            decl = config.variable(node.variable)
            reads.add(decl.quantity if decl else node.variable)

    walk(rule.condition)
    return reads


def _action_writes(rule: RuleAST, config: HomeConfig) -> list[tuple[str, object]]:
    writes: list[tuple[str, object]] = []
    for action in rule.actions:
        if isinstance(action, NotifyAction):
            continue
        decl = config.variable(action.variable)
        state = decl.quantity if decl else action.variable
        if isinstance(action, SetAction):
            writes.append((state, action.value))
        elif isinstance(action, KeepAction):
            from .controlflow import keep_band
            writes.append((state, keep_band(action, config)))
    return writes


class RuleScriptManager:
    """The single writer of the active script and its staging slot."""

    def __init__(self, bundle: PolicyBundle, config: HomeConfig,
                 trust: TrustStore, audit: AuditLog,
                 log_path: Path | None = None):
        self.policy = bundle.policy
        self.tree = bundle.tree
        self.acl = bundle.acl
        self.users = bundle.users
        self.config = config
        self.trust = trust
        self.audit = audit
        self.log_path = log_path
        self.log: list[dict] = []
        self.active: list[ScriptEntry] = []
        self._staged: list[ScriptEntry] | None = None
        self._scheduled: list[ScriptEntry] | None = None
        self._swap_requested_tick: int | None = None
        self.receipts: list[SwapReceipt] = []
        self.proposals: dict[str, RuleProposal] = {}
        self._counter = 0
        if log_path is not None:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            log_path.write_text("")
        self._log_event("policy-loaded", conflict_mode=self.policy.conflict_mode,
                        update_mode=self.policy.update_mode,
                        recommend_only=sorted(self.policy.recommend_only))

    # -- logging ----------------------------------------------------------

    def _log_event(self, event: str, **payload) -> None:
        record = {"event": event, **payload}
        self.log.append(record)
        if self.log_path is not None:
            with self.log_path.open("a") as fh:
                fh.write(json.dumps(record, separators=(",", ":"), sort_keys=True) + "\n")

    # -- script bootstrap ---------------------------------------------------

    def install_script(self, rules: list[RuleAST], owner: str | None = None) -> None:
        """Initial script load, before the engine starts ticking."""
        entries = []
        for rule in rules:
            owner_id = rule.owner or owner or self.tree.root
            entries.append(ScriptEntry(rule=replace(rule, owner=owner_id),
                                       owner=owner_id,
                                       depth=self.tree.depth(owner_id)))
        self.active = entries
        self._log_event("script-installed", rules=[e.rule.id for e in entries],
                        hash=_script_hash(entries))

    def active_rules(self) -> list[ActiveRule]:
        return [e.to_active() for e in self.active]

    def script_hash(self) -> str:
        return _script_hash(self.active)

    def _pending_view(self) -> list[ScriptEntry]:
        """The script as it will look once every queued change lands."""
        if self._staged is not None:
            return self._staged
        if self._scheduled is not None:
            return self._scheduled
        return self.active

    # -- proposal pipeline ----------------------------------------------------

    def propose_rule(self, rule_text: str, owner: str, ticket_wire: str | None,
                     now: float, tick: int = 0) -> RuleProposal:
        self._counter += 1
        pid = f"p{self._counter}"
        self._log_event("proposal-received", proposal=pid, owner=owner,
                        rule=rule_text, tick=tick)
        if owner not in self.tree.nodes:
            return self._finish(pid, rule_text, owner, "Rejected", "UnknownOwner")

        # authentication: the proposer's identity ticket must verify and map
        # to this owner id (the learning process proposes under its own node)
        if ticket_wire is not None:
            verdict = verify_ticket(ticket_wire, self.trust, now)
            if not verdict.ok:
                self.audit.append(service="rule-admin", op="propose", owner=owner,
                                  outcome="deny", reason=verdict.reason, at=now)
                return self._finish(pid, rule_text, owner, "Rejected",
                                    f"TicketInvalid:{verdict.reason}")
            subject = parse_wire_ticket(ticket_wire).subject
            account = self.users.get(subject)
            if account is None or account.owner_id != owner:
                self.audit.append(service="rule-admin", op="propose", owner=owner,
                                  outcome="deny", reason="SubjectMismatch", at=now)
                return self._finish(pid, rule_text, owner, "Rejected",
                                    "TicketInvalid:SubjectMismatch")

        # syntax
        try:
            rule = parse_rule(rule_text, self.config.registry, self.config,
                              rule_id=f"{pid}-rule", owner=owner)
            syntax = "ok"
        except HearthError as exc:
            self._log_event("checks", proposal=pid, syntax=f"error: {exc}")
            return self._finish(pid, rule_text, owner, "Rejected",
                                f"SyntaxError: {exc}")

        # permissions: reads from conditions, writes from actions
        role = self.tree.role_of(owner)
        for state in sorted(_condition_reads(rule, self.config)):
            entry = self.acl.match(owner, role, state, "read")
            if entry is None or not entry.constraint.grants_anything():
                self._log_event("checks", proposal=pid, syntax=syntax,
                                permissions=f"denied read {state}")
                self.audit.append(service="rule-admin", op="propose", owner=owner,
                                  outcome="deny", reason=f"read:{state}", at=now)
                return self._finish(pid, rule_text, owner, "Rejected",
                                    f"PermissionDenied: read {state}")
        for state, value in _action_writes(rule, self.config):
            entry = self.acl.match(owner, role, state, "set")
            if entry is None or not entry.constraint.grants_anything():
                self._log_event("checks", proposal=pid, syntax=syntax,
                                permissions=f"denied set {state}")
                self.audit.append(service="rule-admin", op="propose", owner=owner,
                                  outcome="deny", reason=f"set:{state}", at=now)
                return self._finish(pid, rule_text, owner, "Rejected",
                                    f"PermissionDenied: set {state}")
            if not entry.constraint.allows(value):  # type: ignore[arg-type]
                self._log_event("checks", proposal=pid, syntax=syntax,
                                permissions=f"value denied {state}")
                return self._finish(pid, rule_text, owner, "Rejected",
                                    f"PermissionDenied: {state} value outside "
                                    f"{entry.constraint.describe()}")

        # conflicts against the executing script plus queued additions
        conflicts = detect_conflicts(
            rule, [e.rule for e in self._pending_view() if not e.dormant],
            self.config)
        self._log_event("checks", proposal=pid, syntax=syntax, permissions="ok",
                        conflicts=[c.rule_b for c in conflicts])

        if owner in self.policy.recommend_only:
            return self._finish(pid, rule_text, owner, "RecommendationOnly",
                                rule=rule, conflicts=tuple(conflicts))

        if conflicts:
            return self._resolve_conflicts(pid, rule_text, owner, rule,
                                           tuple(conflicts), tick)
        return self._accept(pid, rule_text, owner, rule, tick)

    def _resolve_conflicts(self, pid: str, text: str, owner: str, rule: RuleAST,
                           conflicts: tuple[Conflict, ...], tick: int) -> RuleProposal:
        mode = self.policy.conflict_mode
        if mode == "drop":
            return self._finish(pid, text, owner, "Rejected", "Dropped",
                                conflicts=conflicts)
        if mode == "warn-source":
            return self._finish(pid, text, owner, "Rejected", "ConflictWarning",
                                conflicts=conflicts, warn_source=True)
        if mode == "escalate":
            target = self.tree.root
            return self._finish(pid, text, owner, "Escalated", rule=rule,
                                escalated_to=target, conflicts=conflicts)
        # priority-auto
        my_depth = self.tree.depth(owner)
        beaten: list[str] = []
        for conflict in conflicts:
            other_entry = self._entry(conflict.rule_b)
            other_depth = other_entry.depth if other_entry else 0
            if my_depth > other_depth:
                return self._finish(pid, text, owner, "Rejected",
                                    "SupersededByPriority", conflicts=conflicts)
            if my_depth == other_depth:
                other_owner = other_entry.owner if other_entry else self.tree.root
                target = self.tree.closest_shared_parent(owner, other_owner)
                return self._finish(pid, text, owner, "Escalated", rule=rule,
                                    escalated_to=target, conflicts=conflicts)
            beaten.append(conflict.rule_b)
        return self._accept(pid, text, owner, rule, tick, supersede=beaten,
                            conflicts=conflicts)

    def _entry(self, rule_id: str) -> ScriptEntry | None:
        for entry in self._pending_view():
            if entry.rule.id == rule_id:
                return entry
        return None

    def _accept(self, pid: str, text: str, owner: str, rule: RuleAST, tick: int,
                supersede: list[str] | None = None,
                conflicts: tuple[Conflict, ...] = ()) -> RuleProposal:
        staged = [replace_entry(e) for e in self._pending_view()]
        for rule_id in supersede or ():
            for entry in staged:
                if entry.rule.id == rule_id:
                    entry.dormant = True
                    entry.superseded_by = rule.id
        staged.append(ScriptEntry(rule=rule, owner=owner,
                                  depth=self.tree.depth(owner)))
        self._staged = staged
        self._log_event("staged", proposal=pid, rule=rule.id,
                        superseded=sorted(supersede or ()),
                        hash=_script_hash(staged))
        try:
            self.swap_script(tick)
        except SwapPending:
            pass  # rides the already-requested swap's successor
        return self._finish(pid, text, owner, "Accepted", rule=rule,
                            conflicts=conflicts)

    def _finish(self, pid: str, text: str, owner: str, status: str,
                reason: str | None = None, rule: RuleAST | None = None,
                escalated_to: str | None = None,
                conflicts: tuple[Conflict, ...] = (),
                warn_source: bool = False) -> RuleProposal:
        proposal = RuleProposal(id=pid, rule_text=text, owner=owner, status=status,
                                reason=reason, escalated_to=escalated_to,
                                conflicts=conflicts,
                                rule_id=rule.id if rule else None)
        self.proposals[pid] = proposal
        self._log_event("proposal-status", proposal=pid, status=status,
                        reason=reason, escalated_to=escalated_to)
        if warn_source:
            self._log_event("warning-to-source", proposal=pid, owner=owner,
                            reason=reason)
        return proposal

    # -- escalation resolution (the human-in-the-loop path) --------------------

    def pending(self) -> list[RuleProposal]:
        return [p for p in self.proposals.values()
                if p.status in ("Pending", "Escalated")]

    def resolve(self, proposal_id: str, accept: bool, resolver: str,
                tick: int = 0) -> RuleProposal:
        proposal = self.proposals.get(proposal_id)
        if proposal is None:
            raise UnknownProposal(f"no proposal {proposal_id!r}")
        if proposal.status != "Escalated":
            raise PermissionDenied(f"proposal {proposal_id} is {proposal.status}, "
                                   "not awaiting resolution")
        target = proposal.escalated_to or self.tree.root
        allowed = {target, *self.tree.ancestors(target)}
        if resolver not in allowed:
            raise PermissionDenied(
                f"{resolver!r} may not resolve an escalation addressed to {target!r}")
        if not accept:
            updated = replace(proposal, status="Rejected", reason="EscalationRejected")
            self.proposals[proposal_id] = updated
            self._log_event("escalation-resolved", proposal=proposal_id,
                            verdict="reject", by=resolver)
            return updated
        rule = parse_rule(proposal.rule_text, self.config.registry, self.config,
                          rule_id=proposal.rule_id or f"{proposal_id}-rule",
                          owner=proposal.owner)
        beaten = [c.rule_b for c in proposal.conflicts]
        self._log_event("escalation-resolved", proposal=proposal_id,
                        verdict="accept", by=resolver)
        accepted = self._accept(proposal_id, proposal.rule_text, proposal.owner,
                                rule, tick, supersede=beaten,
                                conflicts=proposal.conflicts)
        return accepted

    # -- rule removal and dormant revival ---------------------------------------

    def delete_rule(self, rule_id: str, tick: int = 0) -> None:
        staged = [replace_entry(e) for e in self._pending_view()]
        staged = [e for e in staged if e.rule.id != rule_id]
        for entry in staged:
            if entry.dormant and entry.superseded_by == rule_id:
                others = [e.rule for e in staged
                          if not e.dormant and e.rule.id != entry.rule.id]
                if not detect_conflicts(entry.rule, others, self.config):
                    entry.dormant = False
                    entry.superseded_by = None
        self._staged = staged
        self._log_event("rule-deleted", rule=rule_id, hash=_script_hash(staged))
        try:
            self.swap_script(tick)
        except SwapPending:
            pass

    # -- quiescent swap -----------------------------------------------------------

    def swap_script(self, tick: int) -> None:
        """Schedule the staged script; it activates at the next tick boundary."""
        if self._staged is None:
            return
        if self._scheduled is not None:
            raise SwapPending("a previous swap has not been applied yet")
        self._scheduled = self._staged
        self._staged = None
        self._swap_requested_tick = tick
        self._log_event("swap-requested", tick=tick, hash=_script_hash(self._scheduled))

    def apply_pending_swap(self, tick: int) -> SwapReceipt | None:
        """Called by the engine at the start of each tick (the quiescent point)."""
        if self._scheduled is None:
            return None
        self.active = self._scheduled
        self._scheduled = None
        receipt = SwapReceipt(
            requested_at_tick=self._swap_requested_tick or 0,
            activated_at_tick=tick, script_hash=_script_hash(self.active))
        self.receipts.append(receipt)
        self._swap_requested_tick = None
        self._log_event("swap-applied", tick=tick, hash=receipt.script_hash)
        if self._staged is not None:  # changes accepted while the swap was queued
            self.swap_script(tick)
        return receipt


def replace_entry(entry: ScriptEntry) -> ScriptEntry:
    return ScriptEntry(rule=entry.rule, owner=entry.owner, depth=entry.depth,
                       dormant=entry.dormant, superseded_by=entry.superseded_by)

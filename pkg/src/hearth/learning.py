"""Behavior-pattern learning over the event repository.

A count-based network over the discretized snapshots: context variables
(sensor bins, presence, activities, time) are root causes, actuator states
are effects, and every cause may parent every effect. Parameters are plain
count ratios with optional add-1 smoothing; inference is exact enumeration,
which is comfortable at desk scale. Mining scores a candidate pattern with
the conditional estimate on the pattern's own subnet and emits a rule in the
DSL when the score clears the pattern's threshold with enough support.
Rejecting a recommendation raises that pattern's threshold, so only stronger
evidence can resurface it.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from math import fsum

from .dsl.ast import (
    Comparison, ConditionNode, KeepAction, Logical, Presence, RuleAST, Scope,
    SetAction, TimeAtom, Between,
)
from .dsl.formatter import format_rule
from .errors import HearthError
from .model import DiscreteDomain, HomeConfig, norm_quantity
from .stateflow import ColumnSpec, Discretizer, EventRecord, event_columns


class EmptyLog(HearthError):
    pass


class SchemaMismatch(HearthError):
    pass


class PartialAssignment(HearthError):
    pass


class EvidenceOnEffect(HearthError):
    pass


class ZeroEvidenceProbability(HearthError):
    pass


class UnknownRecommendation(HearthError):
    pass


Assignment = dict[str, str]


class BayesNet:
    """(structure, counts) over discrete variables split into causes and effects.

    Causes are mutually independent roots; each effect's parents are a fixed
    subset of the causes (all of them by default). Parameters derive from
    counts: theta(x | pa) = D(x, pa) / D(pa), with add-1 smoothing available
    to keep every conditional well-defined.
    """

    def __init__(self, causes: dict[str, tuple[str, ...]],
                 effects: dict[str, tuple[str, ...]],
                 parents: dict[str, tuple[str, ...]] | None = None):
        overlap = set(causes) & set(effects)
        if overlap:
            raise ValueError(f"variables cannot be both cause and effect: {overlap}")
        self.causes = dict(causes)
        self.effects = dict(effects)
        self.parents = {e: tuple(parents[e]) if parents else tuple(causes)
                        for e in effects}
        for effect, pa in self.parents.items():
            unknown = [p for p in pa if p not in causes]
            if unknown:
                raise ValueError(f"effect {effect} has non-cause parents {unknown}")
        self.n = 0
        self.marginals: dict[str, Counter] = {v: Counter() for v in
                                              itertools.chain(causes, effects)}
        # effect -> parent-config tuple -> Counter(effect value)
        self.cpt: dict[str, dict[tuple, Counter]] = {e: {} for e in effects}
        self.pa_counts: dict[str, Counter] = {e: Counter() for e in effects}

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(self.causes) + tuple(self.effects)

    def domain(self, var: str) -> tuple[str, ...]:
        return self.causes.get(var) or self.effects[var]

    # -- counting ---------------------------------------------------------

    def increment(self, values: Assignment) -> None:
        """Online update: one record folds into every count table."""
        missing = [v for v in self.variables if v not in values]
        if missing:
            raise SchemaMismatch(f"record lacks variables {missing[:3]}",
                                 missing=missing)
        self.n += 1
        for var in self.variables:
            self.marginals[var][values[var]] += 1
        for effect, pa in self.parents.items():
            key = tuple(values[p] for p in pa)
            self.cpt[effect].setdefault(key, Counter())[values[effect]] += 1
            self.pa_counts[effect][key] += 1

    @staticmethod
    def from_records(records: list[EventRecord] | list[Assignment],
                     causes: dict[str, tuple[str, ...]],
                     effects: dict[str, tuple[str, ...]],
                     parents: dict[str, tuple[str, ...]] | None = None) -> "BayesNet":
        if not records:
            raise EmptyLog("cannot estimate parameters from an empty log")
        net = BayesNet(causes, effects, parents)
        for record in records:
            values = record.values if isinstance(record, EventRecord) else record
            known = {k: v for k, v in values.items() if k in net.marginals}
            net.increment(known)
        return net

    # -- parameters ---------------------------------------------------------

    def theta(self, var: str, value: str, parent_config: tuple | None = None,
              smoothed: bool = True) -> float:
        s = 1 if smoothed else 0
        k = len(self.domain(var))
        if var in self.causes:
            num = self.marginals[var][value] + s
            den = self.n + s * k
        else:
            pa = parent_config if parent_config is not None else ()
            num = self.cpt[var].get(pa, Counter())[value] + s
            den = self.pa_counts[var][pa] + s * k
        if den == 0:
            raise ZeroEvidenceProbability(
                f"no observations for {var} given {parent_config}")
        return num / den

    # -- inference -------------------------------------------------------------

    def joint_probability(self, assignment: Assignment, smoothed: bool = True) -> float:
        missing = [v for v in self.variables if v not in assignment]
        if missing:
            raise PartialAssignment(f"assignment lacks {missing[:3]}", missing=missing)
        p = 1.0
        for cause in self.causes:
            p *= self.theta(cause, assignment[cause], smoothed=smoothed)
        for effect, pa in self.parents.items():
            key = tuple(assignment[p_] for p_ in pa)
            p *= self.theta(effect, assignment[effect], key, smoothed=smoothed)
        return p

    def _cause_completions(self, fixed: Assignment):
        free = [c for c in self.causes if c not in fixed]
        for combo in itertools.product(*(self.domain(c) for c in free)):
            full = dict(fixed)
            full.update(zip(free, combo))
            yield full

    def probability_of_evidence(self, evidence: Assignment,
                                smoothed: bool = True) -> float:
        """P(evidence); unobserved effects marginalize out of the product."""
        for var in evidence:
            if var not in self.marginals:
                raise SchemaMismatch(f"unknown variable {var!r}")
        cause_ev = {v: x for v, x in evidence.items() if v in self.causes}
        effect_ev = {v: x for v, x in evidence.items() if v in self.effects}
        total = 0.0
        for config in self._cause_completions(cause_ev):
            weight = 1.0
            for cause in self.causes:
                weight *= self.theta(cause, config[cause], smoothed=smoothed)
            for effect, value in effect_ev.items():
                key = tuple(config[p] for p in self.parents[effect])
                weight *= self.theta(effect, value, key, smoothed=smoothed)
            total += weight
        return total

    def posterior_marginal(self, effect: str, value: str, evidence: Assignment,
                           smoothed: bool = True) -> float:
        """P(effect=value | evidence over causes), by exact enumeration."""
        if effect not in self.effects:
            raise EvidenceOnEffect(f"{effect!r} is not an effect variable")
        on_effects = [v for v in evidence if v in self.effects]
        if on_effects:
            raise EvidenceOnEffect(
                f"evidence must assign causes only, got {on_effects}")
        denominator = self.probability_of_evidence(evidence, smoothed=smoothed)
        if denominator == 0.0:
            raise ZeroEvidenceProbability("the evidence has probability zero")
        numerator = self.probability_of_evidence(
            {**evidence, effect: value}, smoothed=smoothed)
        return numerator / denominator

    def most_probable_explanation(self, effect_evidence: Assignment,
                                  smoothed: bool = True) -> Assignment:
        """argmax over cause assignments of the joint with the given effects.

        Ties break to the lexicographically first assignment in variable order.
        """
        on_causes = [v for v in effect_evidence if v in self.causes]
        if on_causes:
            raise EvidenceOnEffect(
                f"explanation evidence must assign effects, got {on_causes}")
        best: Assignment | None = None
        best_p = -1.0
        for config in self._cause_completions({}):
            p = 1.0
            for cause in self.causes:
                p *= self.theta(cause, config[cause], smoothed=smoothed)
            for effect, value in effect_evidence.items():
                key = tuple(config[p_] for p_ in self.parents[effect])
                p *= self.theta(effect, value, key, smoothed=smoothed)
            if p > best_p:
                best_p = p
                best = config
        if best is None or best_p <= 0.0:
            raise ZeroEvidenceProbability("no explanation has positive probability")
        return best


def estimate_parameters(records: list[EventRecord] | list[Assignment],
                        causes: dict[str, tuple[str, ...]],
                        effects: dict[str, tuple[str, ...]],
                        parents: dict[str, tuple[str, ...]] | None = None) -> BayesNet:
    """Batch estimation; equivalent to folding increments over the same log."""
    return BayesNet.from_records(records, causes, effects, parents)


def full_joint_oracle(net: BayesNet, smoothed: bool = True) -> dict[tuple, float]:
    """Brute force: the explicit joint table over every full assignment.

    Kept deliberately naive (and summed with fsum) so inference has an
    independent reference; tests compare the production path against this.
    """
    table: dict[tuple, float] = {}
    names = net.variables
    for combo in itertools.product(*(net.domain(v) for v in names)):
        assignment = dict(zip(names, combo))
        table[combo] = net.joint_probability(assignment, smoothed=smoothed)
    return table


def oracle_posterior(net: BayesNet, effect: str, value: str, evidence: Assignment,
                     smoothed: bool = True) -> float:
    table = full_joint_oracle(net, smoothed=smoothed)
    names = net.variables
    idx = {v: i for i, v in enumerate(names)}
    num = fsum(p for combo, p in table.items()
               if all(combo[idx[v]] == x for v, x in evidence.items())
               and combo[idx[effect]] == value)
    den = fsum(p for combo, p in table.items()
               if all(combo[idx[v]] == x for v, x in evidence.items()))
    if den == 0:
        raise ZeroEvidenceProbability("oracle: evidence has probability zero")
    return num / den


# -- mining -------------------------------------------------------------------


@dataclass(frozen=True)
class Recommendation:
    id: str
    pattern: tuple[tuple[str, str], ...]      # ((cause var, value), ...)
    effect: tuple[str, str]                    # (effect var, value)
    rule_text: str
    score: float
    support: int
    threshold: float
    status: str = "Proposed"                   # Proposed | Rejected | Promoted

    def to_json(self) -> dict:
        return {"id": self.id, "pattern": [list(p) for p in self.pattern],
                "effect": list(self.effect), "rule": self.rule_text,
                "score": round(self.score, 6), "support": self.support,
                "threshold": round(self.threshold, 6), "status": self.status}


def _pattern_key(pattern: tuple[tuple[str, str], ...], effect: tuple[str, str]) -> str:
    atoms = "&".join(f"{v}={x}" for v, x in sorted(pattern))
    return f"{effect[0]}={effect[1]}|{atoms}"


def _rec_id(key: str) -> str:
    return "rec-" + hashlib.sha256(key.encode("utf-8")).hexdigest()[:10]


class RuleMiner:
    """Derives DSL rule recommendations from the event log."""

    def __init__(self, config: HomeConfig, threshold: float = 0.9,
                 min_support: int = 20, width: int = 2, margin: float = 0.05,
                 discretizer: Discretizer | None = None):
        self.config = config
        self.columns: dict[str, ColumnSpec] = event_columns(config)
        self.causes = {n: s.domain for n, s in self.columns.items() if s.kind != "device"}
        self.effects = {n: s.domain for n, s in self.columns.items() if s.kind == "device"}
        self.default_threshold = threshold
        self.min_support = min_support
        self.width = width
        self.margin = margin
        self.discretizer = discretizer or Discretizer(config)
        self.thresholds: dict[str, float] = {}
        self.items: dict[str, Recommendation] = {}
        self._records: list[Assignment] = []
        self._assignments: Counter = Counter()

    # -- counting -------------------------------------------------------------

    def ingest(self, records: list[EventRecord]) -> None:
        if not records:
            raise EmptyLog("the event log is empty")
        names = tuple(self.columns)
        for record in records:
            missing = [n for n in names if n not in record.values]
            if missing:
                raise SchemaMismatch(f"record lacks {missing[:3]}")
            row = tuple(record.values[n] for n in names)
            self._assignments[row] += 1
            self._records.append({n: record.values[n] for n in names})

    def _count(self, constraints: dict[str, str]) -> int:
        names = tuple(self.columns)
        idx = {n: i for i, n in enumerate(names)}
        return sum(count for row, count in self._assignments.items()
                   if all(row[idx[v]] == x for v, x in constraints.items()))

    def score(self, pattern: tuple[tuple[str, str], ...], effect: tuple[str, str]
              ) -> tuple[float, int]:
        """Smoothed conditional estimate on the pattern subnet, plus support."""
        base = dict(pattern)
        d_pattern = self._count(base)
        d_joint = self._count({**base, effect[0]: effect[1]})
        k = len(self.effects[effect[0]])
        score = (d_joint + 1) / (d_pattern + k)
        return score, d_joint

    def subnet(self, pattern_vars: tuple[str, ...], effect: str) -> BayesNet:
        """The pattern's own network, for checking scores against enumeration."""
        causes = {v: self.causes[v] for v in pattern_vars}
        return BayesNet.from_records(self._records, causes,
                                     {effect: self.effects[effect]},
                                     parents={effect: pattern_vars})

    # -- pattern enumeration -----------------------------------------------------

    def _pattern_atoms(self) -> list[tuple[str, str]]:
        atoms: list[tuple[str, str]] = []
        for name, spec in self.columns.items():
            if spec.kind == "device":
                continue
            for value in spec.domain:
                if spec.kind == "sensor" and value == "unknown":
                    continue
                if spec.kind == "activity" and value == "none":
                    continue
                if spec.kind == "time" and spec.facet == "dayType" \
                        and value == "weekday":
                    continue  # no single DSL keyword expresses "weekday"
                atoms.append((name, value))
        return atoms

    def recommend(self) -> list[Recommendation]:
        """Every pattern whose score clears its threshold with enough support."""
        if not self._records:
            raise EmptyLog("nothing ingested yet")
        out: list[Recommendation] = []
        atoms = self._pattern_atoms()
        for effect_var, domain in self.effects.items():
            for effect_value in domain:
                if effect_value in ("unknown",):
                    continue
                effect = (effect_var, effect_value)
                informative: set[tuple[str, str]] = set()
                for atom in atoms:
                    score, support = self.score((atom,), effect)
                    if score >= self.default_threshold and support >= self.min_support:
                        # wider patterns that contain this atom add nothing,
                        # whatever verdicts the atom's own pattern has seen
                        informative.add(atom)
                    candidate = self._evaluate((atom,), effect)
                    if candidate is not None and candidate.status == "Proposed":
                        out.append(candidate)
                if self.width < 2:
                    continue
                for a, b in itertools.combinations(atoms, 2):
                    if a[0] == b[0] or a in informative or b in informative:
                        continue
                    candidate = self._evaluate(tuple(sorted((a, b))), effect)
                    if candidate is not None and candidate.status == "Proposed":
                        out.append(candidate)
        return out

    def _evaluate(self, pattern: tuple[tuple[str, str], ...],
                  effect: tuple[str, str]) -> Recommendation | None:
        score, support = self.score(pattern, effect)
        key = _pattern_key(pattern, effect)
        threshold = self.thresholds.get(key, self.default_threshold)
        if score < threshold or support < self.min_support:
            return None
        # An effect that holds unconditionally teaches nothing; the pattern
        # must actually raise the conditional above its baseline.
        n = sum(self._assignments.values())
        k = len(self.effects[effect[0]])
        baseline = (self._count({effect[0]: effect[1]}) + 1) / (n + k)
        if baseline >= threshold:
            return None
        rule = self._emit_rule(pattern, effect)
        if rule is None:
            return None
        rec = Recommendation(
            id=_rec_id(key), pattern=pattern, effect=effect,
            rule_text=format_rule(rule, self.config), score=score,
            support=support, threshold=threshold)
        held = self.items.get(rec.id)
        if held is not None and held.status in ("Rejected", "Promoted"):
            # A rejected pattern only reappears past its raised threshold,
            # which the gate above already enforced; re-propose it.
            rec = replace(rec, status="Proposed")
        self.items[rec.id] = rec
        return rec

    # -- verdicts -----------------------------------------------------------------

    def reject(self, rec_id: str) -> Recommendation:
        """Raise the pattern's threshold above its score; monotone, capped at 1."""
        rec = self.items.get(rec_id)
        if rec is None:
            raise UnknownRecommendation(f"no recommendation {rec_id!r}")
        key = _pattern_key(rec.pattern, rec.effect)
        current = self.thresholds.get(key, self.default_threshold)
        raised = min(1.0, max(current, rec.score + self.margin))
        self.thresholds[key] = raised
        updated = replace(rec, status="Rejected", threshold=raised)
        self.items[rec_id] = updated
        return updated

    def promote(self, rec_id: str) -> Recommendation:
        rec = self.items.get(rec_id)
        if rec is None:
            raise UnknownRecommendation(f"no recommendation {rec_id!r}")
        updated = replace(rec, status="Promoted")
        self.items[rec_id] = updated
        return updated

    def save_state(self, path) -> None:
        doc = {"thresholds": self.thresholds,
               "items": {rid: rec.to_json() for rid, rec in self.items.items()}}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True))

    def load_state(self, path) -> None:
        if not path.exists():
            return
        doc = json.loads(path.read_text())
        self.thresholds.update(doc.get("thresholds", {}))

    # -- DSL emission ---------------------------------------------------------------

    def _emit_rule(self, pattern: tuple[tuple[str, str], ...],
                   effect: tuple[str, str]) -> RuleAST | None:
        conditions: list[ConditionNode] = []
        for var, value in pattern:
            node = self._condition_atom(self.columns[var], value)
            if node is None:
                return None
            conditions.append(node)
        condition = conditions[0] if len(conditions) == 1 \
            else Logical("AND", tuple(conditions))
        action = self._effect_action(self.columns[effect[0]], effect[1])
        if action is None:
            return None
        key = _pattern_key(pattern, effect)
        return RuleAST(id=_rec_id(key), owner="learning-process",
                       condition=condition, actions=(action,))

    def _condition_atom(self, spec: ColumnSpec, value: str) -> ConditionNode | None:
        from .dsl.ast import Subject
        if spec.kind == "presence":
            atom = Presence(Subject("resident", spec.resident), spec.location or "Home")
            return atom if value == "true" else Logical("NOT", (atom,))
        if spec.kind == "activity":
            if value == "none":
                return None
            from .dsl.ast import Activity as ActivityNode
            return ActivityNode(Subject("resident", spec.resident), value)
        if spec.kind == "time":
            if spec.facet == "dayType":
                if value == "weekend":
                    return TimeAtom(keyword="Weekend")
                if value == "holiday":
                    return TimeAtom(keyword="Holiday")
                return None
            return TimeAtom(keyword=value)
        if spec.kind == "sensor":
            decl = self.config.variable_for_quantity(spec.quantity or "", "VAL")
            if decl is None or value == "unknown":
                return None
            edges = self.discretizer.bin_edges(spec.quantity or "", value)
            if edges is None:
                return None
            lo, hi = edges
            all_edges = self.discretizer.edges.get(norm_quantity(spec.quantity or ""), [])
            parts: list[ConditionNode] = []
            if not all_edges or lo > all_edges[0]:
                parts.append(Comparison(decl.name, spec.room, "ABOVE", lo))
            if not all_edges or hi < all_edges[-1]:
                parts.append(Comparison(decl.name, spec.room, "BELOW", hi))
            if not parts:
                return None
            return parts[0] if len(parts) == 1 else Logical("AND", tuple(parts))
        return None

    def _effect_action(self, spec: ColumnSpec, value: str):
        device = self.config.device(spec.device or "")
        if device is None:
            return None
        decl = self.config.variable(device.variable)
        if decl is None:
            return None
        if device.mode == "direct" and isinstance(decl.domain, DiscreteDomain):
            canonical = decl.domain.canonical(value)
            if canonical is None:
                return None
            return SetAction(decl.name, Scope.room(device.room), canonical)
        if value != "on":
            return None  # releasing a KEEP has no rule form
        # Loop device: the band is the modal bin of the served quantity while on.
        column = f"{decl.quantity}_{device.room}"
        if column not in self.columns:
            return None
        names = tuple(self.columns)
        idx = {n: i for i, n in enumerate(names)}
        bins: Counter = Counter()
        for row, count in self._assignments.items():
            if row[idx[spec.device or ""]] == "on":
                label = row[idx[column]]
                if label != "unknown":
                    bins[label] += count
        if not bins:
            return None
        label = bins.most_common(1)[0][0]
        edges = self.discretizer.bin_edges(decl.quantity, label)
        if edges is None:
            return None
        return KeepAction(decl.name, Scope.room(device.room),
                          Between(edges[0], edges[1]))

"""Deterministic token simulation over a validated model.

Tokens flow along enabled flow edges, oldest token first; traversing into a
process or create stage fires that stage's outgoing triggers in declaration
order.  Guards route tokens by payload field or device attribute.  Branch
points draw from the scenario's choice list (strict mode) or a seeded
generator (explore mode), so a (model, scenario) pair always replays to the
identical step log.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .behavior import EventTrace, extract_events
from .errors import TmError
from .model import (
    FLOW,
    AttrRef,
    Domain,
    Edge,
    Model,
    StageKind,
    StageRef,
    ThingKind,
    resolve_path,
    validate,
)
from .diagnostics import errors_only
from .scenario import CLICK, INJECT, SET, Action, Scenario

QUIESCENT = "quiescent"
NEEDS_CHOICE = "needs_choice"

ANOMALY_TRANSFER_WITHOUT_RECEIVE = "TRANSFER_WITHOUT_RECEIVE"
DEFAULT_ANOMALY_WINDOW = 10


@dataclass
class Token:
    id: str
    kind: str
    serial: int
    payload: dict = field(default_factory=dict)
    location: StageRef | None = None
    settled: bool = False
    parked: bool = False          # waiting resident, movable only by trigger
    created_at: int = 0
    arrival: int = 0


@dataclass
class StepRecord:
    index: int
    time: int
    token: str | None
    element: str                  # edge traversed, stage acted on, or attribute set
    fired_triggers: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"index": self.index, "time": self.time, "token": self.token,
                "element": self.element, "fired_triggers": list(self.fired_triggers)}


@dataclass
class StepLog:
    model_hash: str
    scenario: Scenario
    steps: list[StepRecord]
    model: Model | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {"model_hash": self.model_hash,
                "scenario": self.scenario.to_dict(),
                "steps": [s.to_dict() for s in self.steps]}


@dataclass
class Anomaly:
    rule: str
    token: str
    from_stage: StageRef
    expected: StageRef
    window: int
    detected_at: int

    def to_dict(self, model: Model) -> dict:
        return {"rule": self.rule, "token": self.token,
                "from": self.from_stage.display(model),
                "expected": self.expected.display(model),
                "window": self.window, "detected_at": self.detected_at}


@dataclass
class PendingChoice:
    label: str
    options: list[str]


class _NeedsChoice(Exception):
    """Internal: a strict-mode run exhausted its scenario choices."""


class SimState:
    """One live simulation session.  Owned by a single activity at a time."""

    def __init__(self, model: Model, scenario: Scenario):
        self.model = model
        self.scenario = scenario
        self.mode = scenario.mode
        self.rng = random.Random(scenario.seed)
        self.choices: list[tuple[str, str]] = list(scenario.choices)
        self.choice_cursor = 0
        self.action_cursor = 0
        self.tokens: list[Token] = []
        self.attrs: dict[str, object] = {}
        self.clock = 0
        self.steps: list[StepRecord] = []
        self.pending_choice: PendingChoice | None = None
        self._serial = 0
        for machine in model.machines:
            for attr in machine.attributes:
                self.attrs[f"{machine.id}.{attr.name}"] = attr.initial
        for machine in model.machines:
            for res in machine.residents:
                self._spawn(res.kind, StageRef(machine.id, res.stage),
                            parked=res.waiting)

    # -- token plumbing ------------------------------------------------------

    def _spawn(self, kind: str, at: StageRef, parked: bool = False) -> Token:
        self._serial += 1
        token = Token(id=f"t{self._serial}", kind=kind, serial=self._serial,
                      location=at, parked=parked,
                      created_at=self.clock, arrival=self.clock)
        self.tokens.append(token)
        return token

    def token(self, token_id: str) -> Token | None:
        for t in self.tokens:
            if t.id == token_id:
                return t
        return None

    def thing(self, token: Token) -> ThingKind:
        return self.model.thing(token.kind)

    def navigation_token(self) -> Token | None:
        """The session's user-driven token: first token of a manual kind."""
        for t in self.tokens:
            if not t.settled and self.thing(t).manual:
                return t
        return None

    # -- choices ---------------------------------------------------------------

    def _take_choice(self, label: str, options: list[str]) -> str:
        if self.choice_cursor < len(self.choices):
            got_label, value = self.choices[self.choice_cursor]
            if got_label.lower() != label.lower():
                raise TmError("E_CHOICE_NEEDED",
                              f"scenario expected a choice for {label!r} next, "
                              f"but lists {got_label!r}")
            self.choice_cursor += 1
            return value
        if self.mode == "explore":
            return self.rng.choice(options)
        raise _NeedsChoice(PendingChoice(label, options))

    def supply_choice(self, value: str) -> None:
        """Answer the pending choice (interactive sessions)."""
        pending = self.pending_choice
        if pending is None:
            raise TmError("E_NOT_ENABLED", "no choice is pending")
        if not any(value.lower() == opt.lower() for opt in pending.options):
            raise TmError("E_DOMAIN",
                          f"{value!r} is not one of {pending.options}")
        self.choices.append((pending.label, value))
        self.pending_choice = None

    # -- payload and guards -------------------------------------------------------

    def _payload_value(self, token: Token, fieldname: str):
        """Read a payload field, drawing its value on first use.

        Returns None when the token's kind does not declare the field (a
        trigger guard probing a foreign field).
        """
        if fieldname in token.payload:
            return token.payload[fieldname]
        dom = self.thing(token).field_domain(fieldname)
        if dom is None:
            return None
        options = [_literal_text(v) for v in dom.members()]
        raw = self._take_choice(f"{token.kind}.{fieldname}", options)
        value = _coerce(dom, raw)
        token.payload[fieldname] = value
        return value

    def _guard_passes(self, edge: Edge, token: Token) -> bool:
        g = edge.guard
        if g is None:
            return True
        if g.is_attribute:
            ref = resolve_path(self.model, g.subject)
            return g.holds(self.attrs[ref.element_id])
        value = self._payload_value(token, g.subject)
        if value is None:
            return False
        return g.holds(value)

    # -- the scheduler ---------------------------------------------------------

    def _candidates(self, token: Token) -> list[Edge]:
        return [e for e in self.model.flows_from(token.location)
                if e.carries is None or e.carries == token.kind]

    def step(self):
        """Move one token along one edge.

        Returns the StepRecord, or QUIESCENT when nothing can move, or
        NEEDS_CHOICE after parking a branch decision in ``pending_choice``.
        """
        if self.pending_choice is not None:
            return NEEDS_CHOICE
        try:
            return self._step_inner()
        except _NeedsChoice as exc:
            self.pending_choice = exc.args[0]
            return NEEDS_CHOICE

    def _step_inner(self):
        movable = [t for t in self.tokens
                   if not t.settled and not t.parked and not self.thing(t).manual]
        movable.sort(key=lambda t: (t.arrival, t.serial))
        for token in movable:
            candidates = self._candidates(token)
            if not candidates:
                token.settled = True
                continue
            enabled = [e for e in candidates if self._guard_passes(e, token)]
            if not enabled:
                if any(e.guard is not None and e.guard.is_attribute
                       for e in candidates):
                    continue          # an attribute flip may re-enable it later
                token.settled = True  # payload guards cannot change; dead end
                continue
            edge = self._pick_edge(token, enabled)
            return self._traverse(token, edge)
        return QUIESCENT

    def _pick_edge(self, token: Token, enabled: list[Edge]) -> Edge:
        if len(enabled) == 1:
            return enabled[0]
        label = token.location.display(self.model)
        options = [e.target.display(self.model) for e in enabled]
        value = self._take_choice(label, options)
        low = value.lower()
        for e in enabled:
            if low in (e.id.lower(), e.target.display(self.model).lower(),
                       e.target.element_id.lower()):
                return e
        raise TmError("E_CHOICE_NEEDED",
                      f"choice {value!r} for {label!r} matches no enabled edge "
                      f"(options: {options})")

    def _traverse(self, token: Token, edge: Edge) -> StepRecord:
        # guard evaluation (and so choice consumption) happens before any
        # mutation, so a run paused on a missing choice resumes cleanly
        planned = self._plan_triggers(edge.target, token)
        self.clock += 1
        token.location = edge.target
        token.arrival = self.clock
        token.parked = False
        fired = self._apply_triggers(planned)
        record = StepRecord(len(self.steps), self.clock, token.id, edge.id, fired)
        self.steps.append(record)
        return record

    def _plan_triggers(self, stage: StageRef, processed: Token) -> list[Edge]:
        if stage.kind not in (StageKind.PROCESS, StageKind.CREATE):
            return []
        return [tg for tg in self.model.triggers_from(stage)
                if self._guard_passes(tg, processed)]

    def _apply_triggers(self, planned: list[Edge]) -> list[str]:
        fired = []
        for tg in planned:
            target = tg.target
            if target.kind is StageKind.CREATE:
                self._spawn(tg.carries, target)
            else:
                moved = self._oldest_waiting(tg.carries, target.machine)
                if moved is None:
                    raise TmError("E_NO_RESIDENT",
                                  f"trigger {tg.id}: no {tg.carries!r} token in "
                                  f"{target.machine!r} to move")
                moved.location = target
                moved.parked = False
                moved.arrival = self.clock
            fired.append(tg.id)
        return fired

    def _oldest_waiting(self, kind: str, machine_id: str) -> Token | None:
        pool = [t for t in self.tokens
                if not t.settled and t.kind == kind
                and t.location is not None and t.location.machine == machine_id]
        pool.sort(key=lambda t: (t.arrival, t.serial))
        return pool[0] if pool else None

    # -- external actions ---------------------------------------------------------

    def apply_action(self, action: Action) -> StepRecord:
        try:
            if action.type == SET:
                return self._do_set(action)
            if action.type == INJECT:
                return self._do_inject(action)
            if action.type == CLICK:
                return self._do_click(action)
        except _NeedsChoice as exc:
            # actions are atomic; they cannot pause mid-way like the scheduler
            pending: PendingChoice = exc.args[0]
            raise TmError("E_CHOICE_NEEDED",
                          f"action needs a value for {pending.label!r} "
                          f"(options: {pending.options})")
        raise TmError("E_PARSE", f"unknown action type {action.type!r}")

    def _do_set(self, action: Action) -> StepRecord:
        ref = resolve_path(self.model, action.path)
        if not isinstance(ref, AttrRef):
            raise TmError("E_NOPATH", f"{action.path!r} is not an attribute")
        dom = self.model.machine(ref.machine).attribute(ref.name).domain
        value = _coerce(dom, action.value)
        self.attrs[ref.element_id] = value
        self.clock += 1
        record = StepRecord(len(self.steps), self.clock, None, ref.element_id, [])
        self.steps.append(record)
        return record

    def _do_inject(self, action: Action) -> StepRecord:
        if self.model.thing(action.thing) is None:
            raise TmError("E_NOPATH", f"unknown thing {action.thing!r}")
        ref = resolve_path(self.model, action.path)
        if not isinstance(ref, StageRef):
            raise TmError("E_NOPATH", f"{action.path!r} is not a stage")
        if not self.model.machine(ref.machine).declares(ref.kind):
            raise TmError("E_NOPATH", f"{ref.element_id} is not declared")
        token = self._spawn(action.thing, ref)
        try:
            planned = self._plan_triggers(ref, token)
        except _NeedsChoice:
            self.tokens.pop()
            self._serial -= 1
            raise
        self.clock += 1
        token.created_at = token.arrival = self.clock
        fired = self._apply_triggers(planned)
        record = StepRecord(len(self.steps), self.clock, token.id,
                            ref.element_id, fired)
        self.steps.append(record)
        return record

    def _do_click(self, action: Action) -> StepRecord:
        nav = self.navigation_token()
        if nav is None:
            raise TmError("E_NOT_ENABLED", "session has no navigation token")
        ref = resolve_path(self.model, action.path)
        if not isinstance(ref, StageRef):
            raise TmError("E_NOPATH", f"{action.path!r} is not a stage")
        if not self._stage_visible(nav, ref):
            raise TmError("E_NOT_ENABLED",
                          f"{ref.element_id} is not visible from "
                          f"{nav.location.machine}")
        edge = self._click_edge(nav, ref)
        if edge is None:
            raise TmError("E_NOT_ENABLED",
                          f"no enabled edge takes the navigation token to "
                          f"{ref.element_id}")
        return self._traverse(nav, edge)

    def _stage_visible(self, nav: Token, ref: StageRef) -> bool:
        focus = nav.location.machine
        visible = {focus} | {m.id for m in self.model.children(focus)}
        return ref.machine in visible

    def _click_edge(self, nav: Token, ref: StageRef) -> Edge | None:
        enabled = [e for e in self._candidates(nav) if self._guard_passes(e, nav)]
        for e in enabled:
            if e.target == ref:
                return e
        # clicking the stage the token occupies advances it, if unambiguous
        if ref == nav.location and len(enabled) == 1:
            return enabled[0]
        return None

    def click_enabled(self, ref: StageRef) -> bool:
        """Dry-run of a stage click, for reporting views."""
        nav = self.navigation_token()
        if nav is None or not self._stage_visible(nav, ref):
            return False
        try:
            return self._click_edge(nav, ref) is not None
        except _NeedsChoice:
            return False

    # -- bookkeeping ----------------------------------------------------------------

    def log(self) -> StepLog:
        from .render import model_hash
        return StepLog(model_hash(self.model), self.scenario,
                       list(self.steps), model=self.model)


def _literal_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(dom: Domain, raw):
    """Turn a raw scenario/service value into a domain member, or E_DOMAIN."""
    if isinstance(raw, str):
        if dom.kind == "bool":
            if raw.lower() in ("true", "false"):
                value = raw.lower() == "true"
            else:
                value = raw
        elif dom.kind == "int":
            try:
                value = int(raw)
            except ValueError:
                value = raw
        else:
            value = raw
    else:
        value = raw
    if not dom.contains(value):
        raise TmError("E_DOMAIN", f"value {raw!r} outside the domain")
    return value


# ---------------------------------------------------------------------------
# Session-level operations
# ---------------------------------------------------------------------------

def new_session(model: Model, scenario: Scenario | None = None) -> SimState:
    """Fresh simulation state; residents placed, clock at zero.

    Raises E_INVALID_MODEL when the model has validation errors.
    """
    if errors_only(validate(model)):
        raise TmError("E_INVALID_MODEL", "model has validation errors")
    return SimState(model, scenario or Scenario())


def step(state: SimState):
    return state.step()


def apply_action(state: SimState, action: Action) -> StepRecord:
    return state.apply_action(action)


def run(state: SimState, max_steps: int = 1000) -> StepLog:
    """Step until quiescent, feeding scenario actions at each quiescence.

    Stops early when a branch decision is missing (``state.pending_choice``
    set) or after ``max_steps`` total steps.  Step errors propagate with the
    failing step index attached.
    """
    taken = 0
    while taken < max_steps:
        if state.pending_choice is not None:
            break
        try:
            result = state.step()
        except TmError as err:
            raise TmError(err.code, f"{err.message} (at step {len(state.steps)})")
        if result is NEEDS_CHOICE:
            break
        if result is QUIESCENT:
            if state.action_cursor < len(state.scenario.actions):
                action = state.scenario.actions[state.action_cursor]
                state.action_cursor += 1
                try:
                    state.apply_action(action)
                except TmError as err:
                    raise TmError(err.code,
                                  f"{err.message} (at step {len(state.steps)})")
                taken += 1
                continue
            break
        taken += 1
    return state.log()


def session_trace(state: SimState) -> EventTrace:
    return extract_events(state.log(), state.model)


# ---------------------------------------------------------------------------
# Anomaly detection
# ---------------------------------------------------------------------------

def detect_transfer_without_receive(log: StepLog,
                                    window: int = DEFAULT_ANOMALY_WINDOW) -> list[Anomaly]:
    """Tokens handed to a machine that never executes its receive stage.

    For every cross-machine transfer step, the same token must traverse into
    the target machine's receive stage within ``window`` logical time units;
    otherwise one anomaly is reported (a log that simply ends counts as
    never received).
    """
    if window < 1:
        raise TmError("E_DOMAIN", "window must be >= 1")
    model = log.model
    if model is None:
        raise TmError("E_MODEL_MISMATCH", "step log carries no model")
    anomalies: list[Anomaly] = []
    for i, step_record in enumerate(log.steps):
        edge = model.edge(step_record.element)
        if edge is None or edge.kind != FLOW or edge.same_machine:
            continue
        target_machine = edge.target.machine
        expected = StageRef(target_machine, StageKind.RECEIVE)
        deadline = step_record.time + window
        received = False
        for later in log.steps[i + 1:]:
            if later.time > deadline:
                break
            if later.token != step_record.token:
                continue
            later_edge = model.edge(later.element)
            if later_edge is not None and later_edge.target == expected:
                received = True
                break
        if not received:
            anomalies.append(Anomaly(ANOMALY_TRANSFER_WITHOUT_RECEIVE,
                                     step_record.token, edge.source, expected,
                                     window, deadline))
    return anomalies

"""Scenario files: named choice lists and external actions driving a run.

Line-oriented format, ``#`` comments::

    scenario elder_fall
    seed 0
    mode strict
    do set Bed.occupied = false
    choose Hall.Transfer = Hall.Receive
    choose Hall.Transfer = Bathroom.Transfer

Choices resolve nondeterministic branch points in the order they arise;
``do`` actions run one at a time whenever the simulation goes quiescent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import TmError

SET = "set"
INJECT = "inject"
CLICK = "click"


@dataclass
class Action:
    type: str                  # SET | INJECT | CLICK
    path: str = ""             # attribute path (set), stage path (inject/click)
    value: str = ""            # raw literal text (set)
    thing: str = ""            # thing kind (inject)

    def to_dict(self) -> dict:
        if self.type == SET:
            return {"type": SET, "path": self.path, "value": self.value}
        if self.type == INJECT:
            return {"type": INJECT, "thing": self.thing, "at": self.path}
        return {"type": CLICK, "path": self.path}


@dataclass
class Scenario:
    name: str = "empty"
    choices: list[tuple[str, str]] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    seed: int = 0
    mode: str = "strict"       # strict | explore

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "mode": self.mode,
            "choices": [[label, value] for label, value in self.choices],
            "actions": [a.to_dict() for a in self.actions],
        }


def _strip_literal(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        return text[1:-1]
    return text


def parse_scenario(text: str, filename: str = "<scenario>") -> Scenario:
    """Parse ``.scenario`` text; raises E_PARSE on malformed lines."""
    scenario = Scenario()
    named = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue

        def bad(msg: str) -> TmError:
            return TmError("E_PARSE", f"{filename}:{lineno}: {msg}")

        words = line.split(None, 1)
        head, rest = words[0], (words[1] if len(words) > 1 else "")
        if head == "scenario":
            if not rest:
                raise bad("scenario needs a name")
            scenario.name = rest.strip()
            named = True
        elif head == "seed":
            try:
                scenario.seed = int(rest)
            except ValueError:
                raise bad(f"bad seed {rest!r}")
        elif head == "mode":
            mode = rest.strip()
            if mode not in ("strict", "explore"):
                raise bad(f"mode must be strict or explore, got {mode!r}")
            scenario.mode = mode
        elif head == "choose":
            if "=" not in rest:
                raise bad("choose needs LABEL = VALUE")
            label, value = rest.split("=", 1)
            scenario.choices.append((label.strip(), _strip_literal(value)))
        elif head == "do":
            scenario.actions.append(_parse_action(rest, bad))
        else:
            raise bad(f"unknown directive {head!r}")
    if not named:
        raise TmError("E_PARSE", f"{filename}: missing `scenario NAME` header")
    return scenario


def _parse_action(rest: str, bad) -> Action:
    words = rest.split(None, 1)
    if not words:
        raise bad("empty action")
    verb, tail = words[0], (words[1] if len(words) > 1 else "")
    if verb == "set":
        if "=" not in tail:
            raise bad("set needs PATH = VALUE")
        path, value = tail.split("=", 1)
        return Action(SET, path=path.strip(), value=_strip_literal(value))
    if verb == "inject":
        if " at " not in f" {tail} ":
            raise bad("inject needs THING at PATH")
        thing, path = tail.split(" at ", 1) if " at " in tail else (tail, "")
        return Action(INJECT, thing=thing.strip(), path=path.strip())
    if verb == "click":
        if not tail:
            raise bad("click needs a stage path")
        return Action(CLICK, path=tail.strip())
    raise bad(f"unknown action {verb!r}")

"""Parser for the ``.tm`` surface language.

The grammar is documented in docs/grammar.ebnf.  Parsing is two-pass: a
recursive-descent pass builds raw statements while registering machines and
things, then edge endpoints are resolved to stage references.  All
diagnostics carry source spans; after a syntax error the parser skips to
the next statement boundary and keeps going, so one run reports every
problem it can find.
"""

from __future__ import annotations

from dataclasses import dataclass

from .behavior import Arc, BehaviorGraph, Event
from .diagnostics import Diagnostic, SourceSpan, make_error
from .errors import TmError
from .model import (
    FLOW,
    TRIGGER,
    Attribute,
    Domain,
    Edge,
    Guard,
    Machine,
    Model,
    Resident,
    StageKind,
    StageRef,
    ThingKind,
)

_KEYWORDS = {
    "model", "thing", "machine", "flow", "trigger", "event", "behavior",
    "stages", "attr", "resident", "processes", "at", "carries", "as",
    "region", "anchor", "loop", "waiting", "manual", "bool", "int",
    "true", "false",
}

_STATEMENT_STARTERS = {
    "thing", "machine", "flow", "trigger", "event", "behavior",
    "stages", "attr", "resident", "processes",
}


class ParseFailure(TmError):
    """Raised when the text cannot be parsed into a model."""

    def __init__(self, diagnostics: list[Diagnostic]):
        first = diagnostics[0] if diagnostics else None
        message = first.message if first else "parse failed"
        super().__init__("E_PARSE", message)
        self.diagnostics = diagnostics


@dataclass
class Token:
    type: str            # IDENT | STRING | INT | punctuation | EOF
    value: str
    line: int
    col: int
    end_line: int
    end_col: int

    def span(self, filename: str) -> SourceSpan:
        return SourceSpan(filename, self.line, self.col, self.end_line, self.end_col)


def _lex(source: str, filename: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def push(tok_type: str, value: str, l0: int, c0: int):
        tokens.append(Token(tok_type, value, l0, c0, line, max(col - 1, c0)))

    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        l0, c0 = line, col
        if ch == '"':
            i += 1
            col += 1
            buf = []
            closed = False
            while i < n:
                c = source[i]
                if c == "\n":
                    break
                i += 1
                col += 1
                if c == '"':
                    closed = True
                    break
                if c == "\\" and i < n:
                    esc = source[i]
                    i += 1
                    col += 1
                    buf.append({"n": "\n", "t": "\t"}.get(esc, esc))
                else:
                    buf.append(c)
            if not closed:
                diags.append(make_error("E_PARSE", "unterminated string literal",
                                        SourceSpan(filename, l0, c0, line, col)))
            push("STRING", "".join(buf), l0, c0)
            continue
        two = source[i:i + 2]
        if two in ("->", "~>", "!=", ".."):
            i += 2
            col += 2
            push(two, two, l0, c0)
            continue
        if ch in "{}[],;:=.":
            i += 1
            col += 1
            push(ch, ch, l0, c0)
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and source[i + 1].isdigit()):
            start = i
            i += 1
            col += 1
            while i < n and source[i].isdigit():
                i += 1
                col += 1
            push("INT", source[start:i], l0, c0)
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
                col += 1
            push("IDENT", source[start:i], l0, c0)
            continue
        diags.append(make_error("E_PARSE", f"unexpected character {ch!r}",
                                SourceSpan(filename, l0, c0, line, col)))
        i += 1
        col += 1
    tokens.append(Token("EOF", "", line, col, line, col))
    return tokens, diags


# ---------------------------------------------------------------------------
# Raw statement forms collected in the first pass
# ---------------------------------------------------------------------------

@dataclass
class _RawEdge:
    kind: str
    source_path: str
    target_path: str
    guard: Guard | None
    carries: str | None
    name: str | None
    container: str | None
    span: SourceSpan


class _Parser:
    def __init__(self, tokens: list[Token], filename: str):
        self.tokens = tokens
        self.filename = filename
        self.pos = 0
        self.diags: list[Diagnostic] = []
        self.model: Model | None = None
        self.raw_edges: list[_RawEdge] = []
        self.machine_stack: list[Machine] = []
        self.seen_behavior = False

    # -- token plumbing ------------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.type != "EOF":
            self.pos += 1
        return tok

    def at(self, tok_type: str, value: str | None = None) -> bool:
        tok = self.peek()
        return tok.type == tok_type and (value is None or tok.value == value)

    def at_keyword(self, *names: str) -> bool:
        tok = self.peek()
        return tok.type == "IDENT" and tok.value in names

    def expect(self, tok_type: str, what: str) -> Token:
        tok = self.peek()
        if tok.type != tok_type:
            raise self.error(f"expected {what}, got {tok.value or 'end of input'!r}")
        return self.advance()

    def expect_keyword(self, name: str) -> Token:
        tok = self.peek()
        if not self.at_keyword(name):
            raise self.error(f"expected {name!r}, got {tok.value or 'end of input'!r}")
        return self.advance()

    def error(self, message: str) -> ParseFailure:
        span = self.peek().span(self.filename)
        diag = make_error("E_PARSE", message, span)
        self.diags.append(diag)
        return ParseFailure([diag])

    def fail(self, message: str, span: SourceSpan) -> None:
        self.diags.append(make_error("E_PARSE", message, span))

    def skip_statement(self) -> None:
        """Recover after an error: drop tokens to the next statement boundary.

        Always consumes at least one token (unless at a closing brace or
        EOF), so recovery can never stall on the offending token.
        """
        if not self.at("EOF") and not self.at("}"):
            if self.advance().type == "{":
                self._skip_braces(1)
        depth = 0
        while not self.at("EOF"):
            tok = self.peek()
            if tok.type == ";" and depth == 0:
                self.advance()
                return
            if tok.type == "{":
                depth += 1
            elif tok.type == "}":
                if depth == 0:
                    return
                depth -= 1
            elif depth == 0 and tok.type == "IDENT" \
                    and tok.value in _STATEMENT_STARTERS:
                return
            self.advance()

    def _skip_braces(self, depth: int) -> None:
        while depth and not self.at("EOF"):
            tok = self.advance()
            if tok.type == "{":
                depth += 1
            elif tok.type == "}":
                depth -= 1

    def eat_semicolon(self) -> None:
        if self.at(";"):
            self.advance()

    # -- entry ----------------------------------------------------------------

    def parse_model(self) -> Model | None:
        try:
            self.expect_keyword("model")
            name = self.expect("IDENT", "model name").value
        except ParseFailure:
            return None
        self.model = Model(name=name)
        while not self.at("EOF"):
            try:
                self.parse_top_item()
            except ParseFailure:
                self.skip_statement()
        self.resolve_edges()
        return self.model

    def parse_top_item(self) -> None:
        if self.at_keyword("thing"):
            self.parse_thing()
        elif self.at_keyword("machine"):
            self.parse_machine(parent=None)
        elif self.at_keyword("flow", "trigger"):
            self.parse_edge(container=None)
        elif self.at_keyword("event"):
            self.parse_event()
        elif self.at_keyword("behavior"):
            self.parse_behavior()
        else:
            raise self.error("expected a declaration (thing, machine, flow, "
                             "trigger, event or behavior)")

    # -- things ----------------------------------------------------------------

    def parse_thing(self) -> None:
        start = self.expect_keyword("thing")
        name = self.expect("IDENT", "thing name").value
        manual = False
        if self.at_keyword("manual"):
            self.advance()
            manual = True
        self.expect("{", "'{'")
        fields: list[tuple[str, Domain]] = []
        while not self.at("}") and not self.at("EOF"):
            fname = self.expect("IDENT", "field name").value
            self.expect(":", "':'")
            dom = self.parse_domain()
            fields.append((fname, dom))
            self.eat_semicolon()
        end = self.expect("}", "'}'")
        thing = ThingKind(id=name, name=name, payload_fields=fields, manual=manual,
                          span=self._span(start, end))
        self.model.things.append(thing)
        self.model.top_order.append(("thing", name))

    def parse_domain(self) -> Domain:
        if self.at("{"):
            self.advance()
            values = [self.expect("STRING", "enum value").value]
            while self.at(","):
                self.advance()
                values.append(self.expect("STRING", "enum value").value)
            self.expect("}", "'}'")
            return Domain("enum", values=tuple(values))
        if self.at_keyword("bool"):
            self.advance()
            return Domain("bool")
        if self.at_keyword("int"):
            self.advance()
            low = int(self.expect("INT", "lower bound").value)
            self.expect("..", "'..'")
            high = int(self.expect("INT", "upper bound").value)
            if high < low:
                raise self.error("empty integer range")
            return Domain("int", low=low, high=high)
        raise self.error("expected a domain ({\"...\"}, bool or int lo..hi)")

    # -- machines ----------------------------------------------------------------

    def parse_machine(self, parent: Machine | None) -> None:
        start = self.expect_keyword("machine")
        name = self.expect("IDENT", "machine name").value
        at_stage = None
        if self.at_keyword("at"):
            self.advance()
            at_stage = self.parse_stage_kind()
        machine_id = f"{parent.id}.{name}" if parent else name
        machine = Machine(id=machine_id, name=name,
                          parent=parent.id if parent else None,
                          at_stage=at_stage)
        self.model.machines.append(machine)
        if parent is None:
            self.model.top_order.append(("machine", machine_id))
        else:
            parent.body.append(("machine", machine_id))
        self.expect("{", "'{'")
        self.machine_stack.append(machine)
        try:
            while not self.at("}") and not self.at("EOF"):
                try:
                    self.parse_machine_item(machine)
                except ParseFailure:
                    self.skip_statement()
        finally:
            self.machine_stack.pop()
        end = self.expect("}", "'}'")
        machine.span = self._span(start, end)

    def parse_machine_item(self, machine: Machine) -> None:
        if self.at_keyword("stages"):
            self.advance()
            kinds = [self.parse_stage_kind()]
            while self.at(","):
                self.advance()
                kinds.append(self.parse_stage_kind())
            self.eat_semicolon()
            machine.stages.extend(kinds)
            machine.body.append(("stages", tuple(kinds)))
        elif self.at_keyword("attr"):
            start = self.advance()
            name = self.expect("IDENT", "attribute name").value
            self.expect(":", "':'")
            dom = self.parse_domain()
            self.expect("=", "'='")
            initial = self.parse_literal()
            end = self.tokens[self.pos - 1]
            self.eat_semicolon()
            attr = Attribute(name, dom, initial, span=self._span(start, end))
            machine.attributes.append(attr)
            machine.body.append(("attr", attr))
        elif self.at_keyword("resident"):
            start = self.advance()
            kind = self.expect("IDENT", "thing name").value
            self.expect_keyword("at")
            stage = self.parse_stage_kind()
            waiting = False
            if self.at_keyword("waiting"):
                self.advance()
                waiting = True
            end = self.tokens[self.pos - 1]
            self.eat_semicolon()
            res = Resident(kind, stage, waiting, span=self._span(start, end))
            machine.residents.append(res)
            machine.body.append(("resident", res))
        elif self.at_keyword("processes"):
            self.advance()
            labels = [self.expect("STRING", "process label").value]
            while self.at(","):
                self.advance()
                labels.append(self.expect("STRING", "process label").value)
            self.eat_semicolon()
            machine.processes.extend(labels)
            machine.body.append(("processes", tuple(labels)))
        elif self.at_keyword("machine"):
            self.parse_machine(parent=machine)
        elif self.at_keyword("flow", "trigger"):
            self.parse_edge(container=machine)
        else:
            raise self.error("expected a machine item (stages, attr, resident, "
                             "processes, machine, flow or trigger)")

    def parse_stage_kind(self) -> StageKind:
        tok = self.expect("IDENT", "stage kind")
        kind = StageKind.parse(tok.value)
        if kind is None:
            raise self.error_at(tok, f"unknown stage kind {tok.value!r}")
        return kind

    def error_at(self, tok: Token, message: str) -> ParseFailure:
        diag = make_error("E_PARSE", message, tok.span(self.filename))
        self.diags.append(diag)
        return ParseFailure([diag])

    # -- edges ----------------------------------------------------------------

    def parse_edge(self, container: Machine | None) -> None:
        start = self.advance()                 # flow | trigger
        kind = FLOW if start.value == "flow" else TRIGGER
        arrow = "->" if kind == FLOW else "~>"
        source = self.parse_path()
        self.expect(arrow, f"'{arrow}'")
        target = self.parse_path()
        guard = None
        if self.at("["):
            guard = self.parse_guard()
        carries = None
        if self.at_keyword("carries"):
            self.advance()
            carries = self.expect("IDENT", "thing name").value
        name = None
        if self.at_keyword("as"):
            self.advance()
            name = self.expect("IDENT", "edge name").value
        end = self.tokens[self.pos - 1]
        self.eat_semicolon()
        raw = _RawEdge(kind, source, target, guard, carries, name,
                       container.id if container else None,
                       self._span(start, end))
        self.raw_edges.append(raw)
        placeholder = ("edge", len(self.raw_edges) - 1)
        if container is None:
            self.model.top_order.append(placeholder)
        else:
            container.body.append(placeholder)

    def parse_path(self) -> str:
        parts = [self.expect("IDENT", "a dotted path").value]
        while self.at("."):
            self.advance()
            parts.append(self.expect("IDENT", "path segment").value)
        return ".".join(parts)

    def parse_guard(self) -> Guard:
        self.expect("[", "'['")
        subject = self.parse_path()
        if self.at("=") or self.at("!="):
            op = self.advance().value
        else:
            raise self.error("expected '=' or '!=' in guard")
        literal = self.parse_literal()
        self.expect("]", "']'")
        return Guard(subject, op, literal)

    def parse_literal(self):
        tok = self.peek()
        if tok.type == "STRING":
            return self.advance().value
        if tok.type == "INT":
            return int(self.advance().value)
        if self.at_keyword("true"):
            self.advance()
            return True
        if self.at_keyword("false"):
            self.advance()
            return False
        raise self.error("expected a literal (string, integer, true or false)")

    # -- events and behavior ----------------------------------------------------

    def parse_event(self) -> None:
        start = self.expect_keyword("event")
        name = self.expect("IDENT", "event name").value
        label = self.expect("STRING", "event label").value
        self.expect_keyword("region")
        self.expect("{", "'{'")
        refs: list[str] = []
        if not self.at("}"):
            refs.append(self.parse_path())
            while self.at(","):
                self.advance()
                refs.append(self.parse_path())
        self.expect("}", "'}'")
        self.expect_keyword("anchor")
        anchor = self.parse_path()
        end = self.tokens[self.pos - 1]
        self.eat_semicolon()
        event = Event(name, label, refs, anchor, span=self._span(start, end))
        self.model.events.append(event)
        self.model.top_order.append(("event", name))

    def parse_behavior(self) -> None:
        start = self.expect_keyword("behavior")
        if self.seen_behavior:
            raise self.error_at(start, "behavior block declared twice")
        self.seen_behavior = True
        self.expect("{", "'{'")
        arcs: list[Arc] = []
        while not self.at("}") and not self.at("EOF"):
            a0 = self.expect("IDENT", "event name")
            self.expect("->", "'->'")
            dst = self.expect("IDENT", "event name")
            loop = False
            if self.at_keyword("loop"):
                self.advance()
                loop = True
            self.eat_semicolon()
            arcs.append(Arc(a0.value, dst.value, loop, span=self._span(a0, dst)))
        self.expect("}", "'}'")
        self.model.behavior = BehaviorGraph(nodes=[], arcs=arcs)
        self.model.top_order.append(("behavior", ""))

    # -- second pass -------------------------------------------------------------

    def resolve_edges(self) -> None:
        """Turn raw path endpoints into stage references and number the edges."""
        from .model import resolve_path

        counters = {FLOW: 0, TRIGGER: 0}
        resolved: list[Edge | None] = []
        for raw in self.raw_edges:
            counters[raw.kind] += 1
            edge_id = raw.name or f"{raw.kind}_{counters[raw.kind]}"
            refs = []
            ok = True
            for path in (raw.source_path, raw.target_path):
                try:
                    ref = resolve_path(self.model, path)
                except TmError as err:
                    self.fail(f"edge endpoint {path!r}: {err.message}", raw.span)
                    ok = False
                    continue
                if not isinstance(ref, StageRef):
                    self.fail(f"edge endpoint {path!r} is not a stage", raw.span)
                    ok = False
                    continue
                refs.append(ref)
            if not ok:
                resolved.append(None)
                continue
            resolved.append(Edge(edge_id, refs[0], refs[1], raw.kind,
                                 raw.carries, raw.guard, named=raw.name is not None,
                                 container=raw.container, span=raw.span))
        self.model.edges = [e for e in resolved if e is not None]
        # replace placeholders with real edge ids, dropping broken ones
        self.model.top_order = self._patch_order(self.model.top_order, resolved)
        for m in self.model.machines:
            m.body = self._patch_order(m.body, resolved)
        if self.model.behavior is not None:
            self.model.behavior.nodes = [ev.id for ev in self.model.events]
            BehaviorGraph.__post_init__(self.model.behavior)
        from .printer import normalize_refs
        normalize_refs(self.model)

    @staticmethod
    def _patch_order(items: list, resolved: list[Edge | None]) -> list:
        out = []
        for item in items:
            if item[0] == "edge":
                edge = resolved[item[1]]
                if edge is not None:
                    out.append(("edge", edge.id))
            else:
                out.append(item)
        return out

    def _span(self, start: Token, end: Token) -> SourceSpan:
        return SourceSpan(self.filename, start.line, start.col,
                          end.end_line, end.end_col)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def parse_with_diagnostics(text: str, filename: str = "<input>") \
        -> tuple[Model | None, list[Diagnostic]]:
    """Parse ``.tm`` text; returns the model (or None) plus parse diagnostics."""
    normalized = text.replace("\r\n", "\n").replace("\r", "\n")
    tokens, diags = _lex(normalized, filename)
    parser = _Parser(tokens, filename)
    model = parser.parse_model()
    all_diags = diags + parser.diags
    if all_diags:
        return None, all_diags
    return model, []


def parse(text: str, filename: str = "<input>") -> Model:
    """Parse ``.tm`` text into a Model; raises ParseFailure with one
    E_PARSE diagnostic per problem found."""
    model, diags = parse_with_diagnostics(text, filename)
    if model is None:
        if not diags:
            diags = [make_error("E_PARSE", "empty input")]
        raise ParseFailure(diags)
    return model

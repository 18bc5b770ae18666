"""Source spans and diagnostics reported by the parser and the validator."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SourceSpan:
    """1-based, inclusive region of a source file."""

    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.file}:{self.start_line}:{self.start_col}"


# Codes the parser/validator may attach to a Diagnostic.  Kept in one
# place so tests can assert nothing drifts outside the documented set.
DIAGNOSTIC_CODES = frozenset({
    "E_PARSE",        # syntax error
    "E_ADJ",          # flow edge violates the stage adjacency table
    "E_BOUNDARY",     # cross-machine flow that is not Transfer -> Transfer
    "E_NOPATH",       # reference does not resolve
    "E_AMBIG",        # reference resolves to more than one element
    "E_GUARD_TYPE",   # literal does not fit the subject's declared domain
    "E_REGION_EMPTY", # event declared with an empty region
    "E_ANCHOR",       # event anchor outside its region
    "E_FOREST",       # machine tree malformed (no single root / cycle)
    "E_CYCLE",        # behavior graph has a cycle not flagged `loop`
    "W_TRIG_SRC",     # trigger source is neither Process nor Create
    "W_UNREACHABLE",  # stage unreachable from any Create stage or resident
})

WARNING_CODES = frozenset(c for c in DIAGNOSTIC_CODES if c.startswith("W_"))


@dataclass
class Diagnostic:
    severity: str                     # "error" | "warning"
    code: str
    message: str
    span: SourceSpan | None = None
    element: str | None = None

    def render(self) -> str:
        where = f"{self.span} " if self.span else ""
        return f"{where}{self.severity} {self.code}: {self.message}"


def errors_only(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]


def make_error(code: str, message: str, span: SourceSpan | None = None,
               element: str | None = None) -> Diagnostic:
    return Diagnostic("error", code, message, span, element)


def make_warning(code: str, message: str, span: SourceSpan | None = None,
                 element: str | None = None) -> Diagnostic:
    return Diagnostic("warning", code, message, span, element)

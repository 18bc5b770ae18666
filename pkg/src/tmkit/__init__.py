"""tmkit: parse, validate, simulate, render and serve Thinging Machine models."""

from .behavior import (
    BehaviorGraph,
    ConformanceReport,
    Event,
    EventOccurrence,
    EventTrace,
    conforms,
    extract_events,
    topo_layers,
)
from .diagnostics import Diagnostic, SourceSpan
from .errors import TmError
from .model import (
    Attribute,
    Domain,
    Edge,
    Guard,
    Machine,
    Model,
    StageKind,
    StageRef,
    ThingKind,
    adjacency_allowed,
    reachable_stages,
    resolve_path,
    subdiagram,
    validate,
)
from .parser import ParseFailure, parse, parse_with_diagnostics
from .printer import serialize
from .render import model_hash, render_behavior, to_dot, to_json
from .scenario import Action, Scenario, parse_scenario
from .sim import (
    Anomaly,
    SimState,
    StepLog,
    StepRecord,
    Token,
    apply_action,
    detect_transfer_without_receive,
    new_session,
    run,
    step,
)

__version__ = "0.1.0"

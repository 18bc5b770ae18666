"""Command-line entry point: ``tm {validate|render|sim|serve}``.

Exit codes are uniform across subcommands: 0 success, 1 semantic failure
(validation errors, conformance violation, anomaly found with the flag
set), 2 environmental or usage failure (unreadable file, parse error, bad
flags, bind failure).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .behavior import conforms, extract_events
from .diagnostics import Diagnostic, errors_only
from .errors import TmError
from .model import Model, validate
from .parser import ParseFailure, parse
from .render import (
    anomalies_to_dict,
    conformance_to_dict,
    render_behavior,
    to_dot,
    to_json,
    trace_to_dict,
)
from .scenario import Scenario, parse_scenario
from .service import DEFAULT_SESSION_CAP, TmService, make_server
from .sim import detect_transfer_without_receive, new_session, run


def _color_enabled() -> bool:
    return os.environ.get("TM_NO_COLOR", "") == "" and sys.stdout.isatty()


def _print_diagnostic(d: Diagnostic) -> None:
    text = d.render()
    if _color_enabled():
        color = "\x1b[31m" if d.severity == "error" else "\x1b[33m"
        text = f"{color}{text}\x1b[0m"
    print(text)


def _emit_diagnostics(diags: list[Diagnostic], as_json: bool) -> None:
    if as_json:
        print(json.dumps({"diagnostics": [{
            "severity": d.severity, "code": d.code, "message": d.message,
            "span": None if d.span is None else {
                "file": d.span.file,
                "start_line": d.span.start_line, "start_col": d.span.start_col,
                "end_line": d.span.end_line, "end_col": d.span.end_col},
            "element": d.element,
        } for d in diags]}, indent=2))
    else:
        for d in diags:
            _print_diagnostic(d)


def _load_model(path: str, as_json: bool) -> Model | int:
    """Read and parse a model file; an int return is the exit code."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        print(f"error: cannot read {path}: {err}", file=sys.stderr)
        return 2
    try:
        return parse(text, path)
    except ParseFailure as failure:
        _emit_diagnostics(failure.diagnostics, as_json)
        return 2


def _load_scenario(spec: str | None, model_path: str) -> Scenario | int:
    if spec is None:
        return Scenario()
    candidate = Path(spec)
    if not candidate.exists():
        candidate = Path(model_path).parent / "scenarios" / f"{spec}.scenario"
    try:
        text = candidate.read_text(encoding="utf-8")
    except OSError as err:
        print(f"error: cannot read scenario {spec!r}: {err}", file=sys.stderr)
        return 2
    try:
        return parse_scenario(text, str(candidate))
    except TmError as err:
        print(f"error: {err.message}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    model = _load_model(args.path, args.json)
    if isinstance(model, int):
        return model
    diags = validate(model)
    _emit_diagnostics(diags, args.json)
    if not args.json and not diags:
        print(f"{args.path}: ok")
    return 1 if errors_only(diags) else 0


def cmd_render(args) -> int:
    model = _load_model(args.path, as_json=False)
    if isinstance(model, int):
        return model
    if errors_only(validate(model)):
        print("error: model has validation errors; run `tm validate`",
              file=sys.stderr)
        return 1
    if args.format == "dot":
        output = to_dot(model)
    elif args.format == "json":
        output = to_json(model)
    else:
        if model.behavior is None:
            print("error: model declares no behavior graph", file=sys.stderr)
            return 1
        try:
            output = render_behavior(model.behavior)
        except TmError as err:
            print(f"error: {err}", file=sys.stderr)
            return 1
    if args.out:
        try:
            Path(args.out).write_text(output, encoding="utf-8")
        except OSError as err:
            print(f"error: cannot write {args.out}: {err}", file=sys.stderr)
            return 2
    else:
        sys.stdout.write(output)
    return 0


def cmd_sim(args) -> int:
    model = _load_model(args.path, args.json)
    if isinstance(model, int):
        return model
    if errors_only(validate(model)):
        print("error: model has validation errors; run `tm validate`",
              file=sys.stderr)
        return 2
    scenario = _load_scenario(args.scenario, args.path)
    if isinstance(scenario, int):
        return scenario
    try:
        state = new_session(model, scenario)
        log = run(state, args.max_steps)
    except TmError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if state.pending_choice is not None:
        print(f"error: run stopped needing a choice for "
              f"{state.pending_choice.label!r} (options: "
              f"{state.pending_choice.options})", file=sys.stderr)
        return 2
    trace = extract_events(log, model)

    report = None
    if args.check:
        if model.behavior is None:
            print("error: --check needs a behavior graph in the model",
                  file=sys.stderr)
            return 2
        try:
            report = conforms(trace, model.behavior)
        except TmError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
    anomalies = None
    if args.anomalies is not None:
        try:
            anomalies = detect_transfer_without_receive(log, args.anomalies)
        except TmError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2

    if args.json:
        doc = {"steplog": log.to_dict(), "trace": trace_to_dict(trace, model)}
        if report is not None:
            doc["conformance"] = conformance_to_dict(report)
        if anomalies is not None:
            doc["anomalies"] = anomalies_to_dict(anomalies, model)["anomalies"]
        print(json.dumps(doc, indent=2))
    else:
        print(f"{len(log.steps)} steps, {len(trace.occurrences)} event occurrences")
        for occ in trace.occurrences:
            ev = model.event(occ.event)
            label = ev.label if ev else occ.event
            print(f"  t={occ.time:<4} {occ.event}: {label}")
        if report is not None:
            if report.conformant:
                print("conformance: ok")
            else:
                for v in report.violations:
                    print(f"conformance violation at {v.position}: {v.event} "
                          f"missing predecessor {v.missing}")
        if anomalies is not None:
            for a in anomalies:
                print(f"anomaly {a.rule}: token {a.token} expected "
                      f"{a.expected.display(model)} within {a.window} steps "
                      f"of {a.from_stage.display(model)}")
            if not anomalies:
                print("anomalies: none")

    if report is not None and not report.conformant:
        return 1
    if anomalies:
        return 1
    return 0


def cmd_serve(args) -> int:
    model = _load_model(args.path, as_json=False)
    if isinstance(model, int):
        return model
    diags = validate(model)
    if errors_only(diags):
        _emit_diagnostics(diags, as_json=False)
        return 1
    cap = args.session_cap
    if cap is None:
        cap = int(os.environ.get("TM_SESSION_CAP", DEFAULT_SESSION_CAP))
    scenario_dir = Path(args.path).parent / "scenarios"
    service = TmService(model, scenario_dir if scenario_dir.is_dir() else None,
                        session_cap=cap)
    static_dir = Path(args.static) if args.static else None
    if static_dir is None:
        fallback = Path.cwd() / "frontend" / "dist"
        static_dir = fallback if fallback.is_dir() else None
    try:
        server = make_server(service, args.host, args.port, static_dir)
    except OSError as err:
        print(f"error: cannot bind {args.host}:{args.port}: {err}",
              file=sys.stderr)
        return 2
    print(f"serving {model.name} on http://{args.host}:{server.server_port}/",
          file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------


def build_arg_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="tm",
                                  description="Thinging Machine model toolchain")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("path")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("render", help="export DOT or JSON")
    p.add_argument("path")
    p.add_argument("--format", choices=["dot", "json", "behavior"], default="dot")
    p.add_argument("--out", help="write to a file instead of stdout")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("sim", help="run a scenario")
    p.add_argument("path")
    p.add_argument("--scenario", help="scenario name (scenarios/<name>.scenario "
                                      "beside the model) or a file path")
    p.add_argument("--max-steps", type=int, default=1000)
    p.add_argument("--check", action="store_true",
                   help="check the trace against the model's behavior graph")
    p.add_argument("--anomalies", type=int, metavar="W",
                   help="report transfer-without-receive anomalies with window W")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("serve", help="serve the session API over HTTP")
    p.add_argument("path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--session-cap", type=int, default=None)
    p.add_argument("--static", help="directory of frontend assets to serve")
    p.set_defaults(func=cmd_serve)
    return top


def main(argv: list[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

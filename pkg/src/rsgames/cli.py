"""Command-line client for the solver service.

The CLI is a thin client: it reads files, sends their content to the
service endpoints and writes the responses back to disk.  By default the
service runs in-process (no network); ``--server`` (or ``RSGAMES_SERVER``)
points it at a remote instance instead.

Every run emits exactly one manifest, embedded under the ``manifest`` key of
the output document; identical invocations produce byte-identical outputs.

Exit codes (stable contract): 0 success, 2 input error, 3 assumption
failure, 4 verification failure, 5 ergodic search failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

from rsgames import __version__

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ASSUMPTION = 3
EXIT_VERIFICATION = 4
EXIT_SEARCH = 5


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _open_client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # starlette testclient deprecation chatter
        from fastapi.testclient import TestClient

    from rsgames.service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _post(client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code in (400, 422):
        detail = resp.json().get("detail", resp.text)
        raise CliError(f"input rejected: {detail}", EXIT_INPUT)
    if resp.status_code != 200:
        raise CliError(f"service error {resp.status_code}: {resp.text}", 1)
    return resp.json()


def _read_json(path: str, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"{what} file not found: {path}")
    except json.JSONDecodeError as err:
        raise CliError(f"{what} file {path} is not valid JSON: {err}")
    if not isinstance(doc, dict):
        raise CliError(f"{what} file {path} must hold a JSON object")
    return doc


def _sha256(path: str) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except FileNotFoundError:
        raise CliError(f"spec file not found: {path}")


def _manifest(command: str, args: argparse.Namespace, outputs: list[str]) -> dict:
    options = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in {"func", "command"} and value is not None
    }
    return {
        "command": command,
        "spec_path": getattr(args, "spec", None),
        "spec_sha256": _sha256(args.spec) if getattr(args, "spec", None) else None,
        "options": options,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "outputs": outputs,
    }


def _emit(doc: dict, out_path: str | None, manifest: dict) -> None:
    doc = dict(doc)
    doc["manifest"] = manifest
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _spec_payload(path: str) -> dict:
    return _read_json(path, "spec")


def cmd_check(args: argparse.Namespace) -> int:
    with _open_client(args.server) as client:
        doc = _post(client, "/check", {"spec": _spec_payload(args.spec)})
    outputs = [args.out] if args.out else []
    report = dict(doc["report"])
    report["kind"] = "recurrence_report"
    report["status"] = doc["status"]
    _emit(report, args.out, _manifest("check", args, outputs))
    if args.strict and doc["status"] != "ok":
        return EXIT_ASSUMPTION
    return EXIT_OK


def cmd_solve_discounted(args: argparse.Namespace) -> int:
    payload = {
        "spec": _spec_payload(args.spec),
        "eps": args.eps,
        "verify_tol": args.verify_tol,
        "workers": args.threads,
    }
    with _open_client(args.server) as client:
        doc = _post(client, "/solve/discounted", payload)
    solution = {
        "kind": "discounted",
        "spec_sha256": _sha256(args.spec),
        "status": doc["status"],
        "horizon": doc["horizon"],
        "tail_bound": doc["tail_bound"],
        "profile": doc["profile"],
        "psi1": doc["psi1"],
        "psi2": doc["psi2"],
        "gaps": doc["gaps"],
    }
    outputs = [args.out] if args.out else []
    _emit(solution, args.out, _manifest("solve-discounted", args, outputs))
    return EXIT_OK if doc["status"] == "ok" else EXIT_VERIFICATION


def cmd_solve_ergodic(args: argparse.Namespace) -> int:
    payload = {
        "spec": _spec_payload(args.spec),
        "tol": args.tol,
        "force": args.force,
        "max_rounds": args.max_rounds,
        "damping": args.damping,
        "enumeration_cap": args.enumeration_cap,
    }
    with _open_client(args.server) as client:
        doc = _post(client, "/solve/ergodic", payload)
    outputs = [args.out] if args.out else []
    manifest = _manifest("solve-ergodic", args, outputs)
    status = doc["status"]
    if status == "assumption_failure":
        _emit(
            {"kind": "ergodic_failure", "status": status, "recurrence": doc["recurrence"]},
            args.out,
            manifest,
        )
        return EXIT_ASSUMPTION
    if status == "search_failure":
        _emit(
            {
                "kind": "ergodic_failure",
                "status": status,
                "failure": doc["failure"],
                "recurrence": doc["recurrence"],
                "warnings": doc["warnings"],
            },
            args.out,
            manifest,
        )
        return EXIT_SEARCH
    solution = {
        "kind": "ergodic",
        "spec_sha256": _sha256(args.spec),
        "status": status,
        "lambda1": doc["lambda1"],
        "lambda2": doc["lambda2"],
        "h1": doc["h1"],
        "h2": doc["h2"],
        "profile": doc["profile"],
        "gaps": doc["gaps"],
        "recurrence": doc["recurrence"],
        "warnings": doc["warnings"],
        "tol": args.tol,
    }
    _emit(solution, args.out, manifest)
    return EXIT_OK


def _solution_payload(args: argparse.Namespace) -> tuple[dict, str]:
    solution = _read_json(args.solution, "solution")
    kind = solution.get("kind")
    if kind not in ("discounted", "ergodic"):
        raise CliError(f"solution file has unsupported kind {kind!r}")
    if solution.get("spec_sha256") != _sha256(args.spec):
        raise CliError(
            "solution/spec hash mismatch: the solution was produced from a "
            "different spec file"
        )
    return solution, kind


def cmd_simulate(args: argparse.Namespace) -> int:
    solution, kind = _solution_payload(args)
    payload = {
        "spec": _spec_payload(args.spec),
        "kind": kind,
        "paths": args.paths,
        "batches": args.batches,
        "horizon": args.horizon,
        "seed": args.seed,
        "start_state": args.start_state,
    }
    if kind == "discounted":
        payload["markov_profile"] = solution["profile"]
    else:
        payload["stationary_profile"] = solution["profile"]
    with _open_client(args.server) as client:
        doc = _post(client, "/simulate", payload)
    outputs = [p for p in (args.out, args.csv) if p]
    manifest = _manifest("simulate", args, outputs)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["batch", "n", "player1", "player2"])
            for row in doc["batch_stats"]:
                writer.writerow([row["batch"], row["n"], row["player1"], row["player2"]])
    _emit(
        {
            "kind": f"simulation_{kind}",
            "status": doc["status"],
            "player1": doc["player1"],
            "player2": doc["player2"],
            "batch_stats": doc["batch_stats"],
        },
        args.out,
        manifest,
    )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    solution, kind = _solution_payload(args)
    payload = {
        "spec": _spec_payload(args.spec),
        "kind": kind,
        "tol": args.tol,
    }
    if kind == "discounted":
        payload["markov_profile"] = solution["profile"]
    else:
        payload["stationary_profile"] = solution["profile"]
    with _open_client(args.server) as client:
        doc = _post(client, "/verify", payload)
    outputs = [args.out] if args.out else []
    _emit(
        {
            "kind": f"verification_{kind}",
            "status": doc["status"],
            "gaps": doc["discounted_gaps"] if kind == "discounted" else doc["ergodic_gaps"],
        },
        args.out,
        _manifest("verify", args, outputs),
    )
    return EXIT_OK if doc["status"] == "ok" else EXIT_VERIFICATION


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from rsgames.service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, spec: bool = True) -> None:
    if spec:
        parser.add_argument("--spec", required=True, help="game spec JSON file")
    parser.add_argument(
        "--server",
        default=os.environ.get("RSGAMES_SERVER"),
        help="remote service URL (default: run the service in-process)",
    )
    parser.add_argument("--out", default=None, help="output JSON file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsgames",
        description="Risk-sensitive stochastic game solver (service client)",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="assumption and recurrence report")
    _add_common(p)
    p.add_argument("--strict", action="store_true", help="exit 3 when assumptions fail")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve-discounted", help="solve the discounted game")
    _add_common(p)
    p.add_argument("--eps", type=float, default=1e-8, help="tail bound on the horizon")
    p.add_argument("--verify-tol", type=float, default=1e-8, dest="verify_tol")
    p.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("RSGAMES_THREADS", "1")),
        help="worker cap for per-state stage games",
    )
    p.set_defaults(func=cmd_solve_discounted)

    p = sub.add_parser("solve-ergodic", help="solve the ergodic game")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-8, help="verification gap tolerance")
    p.add_argument("--force", action="store_true", help="solve even if assumptions fail")
    p.add_argument("--max-rounds", type=int, default=200, dest="max_rounds")
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument(
        "--enumeration-cap", type=int, default=10_000, dest="enumeration_cap"
    )
    p.set_defaults(func=cmd_solve_ergodic)

    p = sub.add_parser("simulate", help="Monte Carlo estimates under a solution")
    _add_common(p)
    p.add_argument("--solution", required=True, help="solution JSON file")
    p.add_argument("--paths", type=int, default=1000, help="paths (discounted)")
    p.add_argument("--batches", type=int, default=200, help="batches (ergodic/CSV)")
    p.add_argument("--horizon", type=int, default=2000, help="steps per batch (ergodic)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start-state", type=int, default=None, dest="start_state")
    p.add_argument("--csv", default=None, help="per-batch statistics CSV file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="re-verify a solution file")
    _add_common(p)
    p.add_argument("--solution", required=True, help="solution JSON file")
    p.add_argument("--tol", type=float, default=None, help="gap tolerance")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"rsgames: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front door.

The CLI is a thin HTTP client of the service: without --server it mounts
the ASGI app in-process, with --server it talks to a running instance.
Either way every request crosses the same API surface.

Exit codes: 0 on success (a failed training run is still a result),
2 on configuration/input errors, 3 on internal invariant violations.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path

import httpx

from .config import ConfigError, load_config
from .experiments import GridReport, RecommendReport, RunReport, SweepReport
from .metrics import emit_csv, emit_round_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _post(server: str | None, path: str, payload: dict) -> dict:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            response = client.post(path, json=payload)
    else:
        response = asyncio.run(_post_inprocess(path, payload))
    if response.status_code in (400, 422):
        raise CliError(f"configuration rejected: {response.json().get('detail')}", EXIT_CONFIG)
    if response.status_code >= 500:
        raise CliError(f"service error: {response.text}", EXIT_INTERNAL)
    return response.json()


async def _post_inprocess(path: str, payload: dict) -> httpx.Response:
    from .service import create_app

    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(transport=transport, base_url="http://flbreak.local", timeout=None) as client:
        return await client.post(path, json=payload)


def _load_config_payload(path: str) -> dict:
    return load_config(path).model_dump(mode="json")


def _write_outputs(out_dir: str, rows, round_rows, quiet: bool) -> None:
    out = Path(out_dir)
    runs_path = emit_csv(rows, out / "runs.csv")
    emit_round_csv(round_rows, out / "rounds.csv")
    if not quiet:
        print(f"wrote {runs_path} ({len(rows)} runs)")


def cmd_run(args) -> int:
    payload = {"config": _load_config_payload(args.config)}
    report = RunReport.model_validate(_post(args.server, "/run", payload))
    _write_outputs(args.out, report.rows, report.round_rows, args.quiet)
    if not args.quiet:
        print(report.summary)
    return EXIT_OK


def cmd_sweep(args) -> int:
    payload = {"config": _load_config_payload(args.config), "seeds": args.seeds}
    report = SweepReport.model_validate(_post(args.server, "/sweep", payload))
    _write_outputs(args.out, report.rows, report.round_rows, args.quiet)
    if not args.quiet:
        print(report.table)
    return EXIT_OK


def cmd_grid(args) -> int:
    payload = {"config": _load_config_payload(args.config)}
    report = GridReport.model_validate(_post(args.server, "/grid", payload))
    _write_outputs(args.out, report.rows, report.round_rows, args.quiet)
    matrix_path = Path(args.out) / "grid_matrix.csv"
    matrix_path.parent.mkdir(parents=True, exist_ok=True)
    matrix_path.write_text(report.matrix_csv)
    if not args.quiet:
        print(report.summary)
    return EXIT_OK


def cmd_recommend(args) -> int:
    csv_path = Path(args.csv)
    if not csv_path.exists():
        raise CliError(f"CSV file not found: {csv_path}", EXIT_CONFIG)
    report = RecommendReport.model_validate(
        _post(args.server, "/recommend", {"csv_text": csv_path.read_text()})
    )
    print(report.report)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flbreak", description="federated-learning breaking-point simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default="out", help="output directory for CSV files")
        p.add_argument("--quiet", action="store_true", help="suppress summary output")
        p.add_argument("--server", default=None, help="URL of a running service; default runs in-process")

    p_run = sub.add_parser("run", help="execute one experiment")
    p_run.add_argument("--config", required=True)
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one impairment axis")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seeds", type=int, default=None, help="seeds per swept value")
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_grid = sub.add_parser("grid", help="tcp parameter x latency grid")
    p_grid.add_argument("--config", required=True)
    common(p_grid)
    p_grid.set_defaults(func=cmd_grid)

    p_rec = sub.add_parser("recommend", help="remediation advice from a results CSV")
    p_rec.add_argument("--csv", required=True, help="runs.csv produced by this tool")
    p_rec.add_argument("--quiet", action="store_true")
    p_rec.add_argument("--server", default=None)
    p_rec.set_defaults(func=cmd_recommend)

    p_srv = sub.add_parser("serve", help="run the HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except httpx.HTTPError as exc:
        print(f"cannot reach service: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # invariant violations surface as exit 3
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line client for the dispatch service.

Every subcommand drives the same HTTP surface the FastAPI service exposes;
by default an in-process instance is used, ``--server URL`` targets a
running one. Exit codes: 0 ok, 2 infeasible, 3 numeric failure, 4 input
error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NUMERIC = 3
EXIT_INPUT = 4


class ServiceClient:
    """Thin client: in-process ASGI app by default, remote via base URL."""

    def __init__(self, server: str | None = None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict):
        return self._client.post(path, json=payload)

    def get(self, path: str):
        return self._client.get(path)


def _fail(response) -> None:
    """Translate an error response into a message and exit code."""
    try:
        detail = response.json().get("detail", {})
    except Exception:
        detail = {}
    kind = detail.get("kind", "input")
    message = detail.get("message", response.text)
    click.echo(f"error ({kind}): {message}", err=True)
    if kind == "infeasible":
        sys.exit(EXIT_INFEASIBLE)
    if kind == "numeric":
        sys.exit(EXIT_NUMERIC)
    sys.exit(EXIT_INPUT)


def _register_case(client: ServiceClient, case: str) -> str:
    """Bundled case names pass through; file paths are uploaded."""
    from .cases import BUNDLED

    if case in BUNDLED:
        return case
    path = Path(case)
    if not path.exists():
        click.echo(f"error (input): no such case file {case!r}", err=True)
        sys.exit(EXIT_INPUT)
    resp = client.post("/networks", {"name": path.stem, "case_text": path.read_text()})
    if resp.status_code != 200:
        _fail(resp)
    return resp.json()["network_id"]


def _load_config(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            click.echo("error (input): TOML configs need Python 3.11+; use JSON", err=True)
            sys.exit(EXIT_INPUT)
        return tomllib.loads(text)
    return json.loads(text)


def _emit(doc: dict, output: str | None) -> None:
    text = json.dumps(doc, indent=1)
    if output:
        Path(output).write_text(text + "\n")
        click.echo(f"wrote {output}")
    else:
        click.echo(text)


@click.group()
@click.option("--server", default=None, help="Base URL of a running service (default: in-process)")
@click.pass_context
def main(ctx, server):
    """Loss-aware DC dispatch toolkit."""
    ctx.obj = ServiceClient(server)


@main.command()
@click.option("--case", "case", required=True, help="Bundled case name or .m file path")
@click.option("--method", type=click.Choice(["dc", "lllf", "llqcp", "lloa"]), default="lloa")
@click.option("--epsilon", type=float, default=1e-3, help="LLOA convergence tolerance")
@click.option("--warm-start/--cold-start", default=True)
@click.option("--variant", type=click.Choice(["angle", "ptdf"]), default="angle")
@click.option("--backend", type=click.Choice(["auto", "highs", "clarabel", "static"]), default="auto")
@click.option("--output", default=None, help="Write the solution JSON here")
@click.pass_obj
def solve(client, case, method, epsilon, warm_start, variant, backend, output):
    """Solve one dispatch problem."""
    network_id = _register_case(client, case)
    resp = client.post(
        f"/networks/{network_id}/solve",
        {
            "method": method,
            "epsilon": epsilon,
            "warm_start": warm_start,
            "variant": variant,
            "backend": backend,
        },
    )
    if resp.status_code != 200:
        _fail(resp)
    doc = resp.json()
    click.echo(
        f"{method}: objective {doc['objective']:.6f}  losses {doc['loss_total']:.6f} pu  "
        f"iterations {doc['iterations']}  ({doc['solve_seconds']:.3f}s)"
    )
    _emit(doc, output) if output else None


@main.command()
@click.option("--case", "case", required=True)
@click.option("--method", type=click.Choice(["dc", "lllf", "llqcp", "lloa"]), default="lloa")
@click.option("--config", "config_path", default=None, help="ScedConfig JSON/TOML file")
@click.option("--epsilon", type=float, default=1e-3)
@click.option("--output", default=None)
@click.pass_obj
def sced(client, case, method, config_path, epsilon, output):
    """Security-constrained economic dispatch."""
    network_id = _register_case(client, case)
    cfg = _load_config(config_path) if config_path else {}
    resp = client.post(
        f"/networks/{network_id}/sced",
        {"method": method, "epsilon": epsilon, "config": cfg},
    )
    if resp.status_code != 200:
        _fail(resp)
    doc = resp.json()
    click.echo(
        f"{method} sced: objective {doc['objective']:.6f}  "
        f"reserve shortfall {doc['reserve_shortfall']:.6f}  "
        f"violations bal {doc['balance_violation']:.6f} / trans {doc['transmission_violation']:.6f}"
    )
    _emit(doc, output) if output else None


@main.command()
@click.option("--case", "case", required=True)
@click.option("--solutions", multiple=True, help="Solution JSON files from `solve --output`")
@click.option("--methods", default=None, help="Comma list of methods to solve and restore")
@click.option("--output", default=None, help="Write the violation CSV here")
@click.pass_obj
def restore(client, case, solutions, methods, output):
    """AC power-flow restoration and violation accounting."""
    network_id = _register_case(client, case)
    payload = {"solutions": [], "methods": []}
    for path in solutions:
        payload["solutions"].append(json.loads(Path(path).read_text()))
    if methods:
        payload["methods"] = [m.strip() for m in methods.split(",") if m.strip()]
    if not payload["solutions"] and not payload["methods"]:
        click.echo("error (input): give --solutions and/or --methods", err=True)
        sys.exit(EXIT_INPUT)
    resp = client.post(f"/networks/{network_id}/restore", payload)
    if resp.status_code != 200:
        _fail(resp)
    doc = resp.json()
    click.echo(doc["table"])
    if output:
        Path(output).write_text(doc["csv"])
        click.echo(f"wrote {output}")


@main.command()
@click.option("--config", "config_path", required=True, help="SweepConfig JSON/TOML file")
@click.option("--output", default=None, help="Write the sweep archive JSON here")
@click.option("--csv", "csv_path", default=None, help="Write the metric rows CSV here")
@click.pass_obj
def sweep(client, config_path, output, csv_path):
    """Load-scaling sensitivity sweep."""
    cfg = _load_config(config_path)
    resp = client.post("/sweep", cfg)
    if resp.status_code != 200:
        _fail(resp)
    doc = resp.json()
    solved = len(doc["rows"])
    excluded = len(doc["exclusions"])
    click.echo(f"sweep: {solved} solved, {excluded} excluded, {doc['total_instances']} total")
    if csv_path:
        Path(csv_path).write_text(doc["csv"])
        click.echo(f"wrote {csv_path}")
    if output:
        _emit(doc, output)


@main.command()
@click.option("--archive", required=True, help="Sweep archive JSON from `sweep --output`")
@click.option("--format", "fmt", type=click.Choice(["csv", "json", "table"]), default="table")
@click.pass_obj
def report(client, archive, fmt):
    """Re-emit a sweep archive as CSV, JSON, or an aligned table."""
    doc = json.loads(Path(archive).read_text())
    if fmt == "json":
        click.echo(json.dumps(doc, indent=1))
        return
    if fmt == "csv":
        click.echo(doc.get("csv", "").rstrip("\n"))
        return
    rows = doc.get("seed_averages", [])
    header = f"{'case':<10} {'alpha':>6} {'method':<7} {'n':>3} {'gap%':>9} {'mae':>9} {'loss':>9} {'time':>8}"
    click.echo(header)
    click.echo("-" * len(header))
    for r in rows:
        click.echo(
            f"{r['case']:<10} {r['alpha']:>6.2f} {r['method']:<7} {r['n']:>3} "
            f"{r['gap_mean']:>9.4f} {r['mae_mean']:>9.5f} {r['loss_mean']:>9.5f} {r['time_mean']:>8.4f}"
        )


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the dispatch service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()

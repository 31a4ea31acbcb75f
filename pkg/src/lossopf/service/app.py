"""FastAPI app exposing the dispatch toolkit to long-running clients.

Networks are uploaded once and solved many times; each registered network
keeps its factorized susceptance system so PTDF work amortizes across
requests. The CLI drives these same handlers in-process.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..acpf import restore_and_compare, violation_table_csv, violation_table_text
from ..cases import BUNDLED, case_text
from ..formulations import DispatchSolution, solve_method
from ..kernel import SusceptanceSystem, factorize
from ..network import CaseError, PowerNetwork, parse_case
from ..sced import ScedConfig, solve_sced
from ..solver import Status
from ..sweep import SweepConfig, run_sweep
from . import schemas

__all__ = ["create_app", "NetworkStore"]


class NetworkStore:
    """Thread-safe registry of uploaded networks and their factorizations."""

    def __init__(self):
        self._lock = threading.Lock()
        self._items: dict[str, tuple[PowerNetwork, SusceptanceSystem, str]] = {}

    def add(self, net: PowerNetwork, text: str) -> str:
        network_id = uuid.uuid4().hex[:12]
        sys = factorize(net)
        with self._lock:
            self._items[network_id] = (net, sys, text)
        return network_id

    def get(self, network_id: str) -> tuple[PowerNetwork, SusceptanceSystem]:
        with self._lock:
            item = self._items.get(network_id)
        if item is None:
            raise KeyError(network_id)
        return item[0], item[1]

    def text(self, network_id: str) -> str:
        with self._lock:
            item = self._items.get(network_id)
        if item is None:
            raise KeyError(network_id)
        return item[2]

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


def _summary(network_id: str, net: PowerNetwork) -> schemas.NetworkSummary:
    return schemas.NetworkSummary(
        network_id=network_id,
        name=net.name,
        buses=net.n_bus,
        branches=len(net.branches),
        generators=len(net.generators),
        base_mva=net.base_mva,
        total_load=net.total_load(),
    )


def _solution_model(sol, net) -> dict:
    return sol.to_json_dict(net)


def _check_solved(sol) -> None:
    if sol.status is Status.OPTIMAL:
        return
    kind = "infeasible" if sol.status in (Status.INFEASIBLE, Status.UNBOUNDED) else "numeric"
    code = 409 if kind == "infeasible" else 500
    raise HTTPException(
        status_code=code,
        detail={"kind": kind, "message": f"solve ended with status {sol.status.value}"},
    )


def create_app(store: NetworkStore | None = None) -> FastAPI:
    app = FastAPI(title="lossopf dispatch service", version=__version__)
    app.state.store = store or NetworkStore()

    def resolve(case_or_id: str) -> tuple[PowerNetwork, SusceptanceSystem]:
        if case_or_id in BUNDLED:
            net = parse_case(case_text(case_or_id), name=case_or_id)
            return net, factorize(net)
        try:
            return app.state.store.get(case_or_id)
        except KeyError:
            raise HTTPException(
                status_code=404,
                detail={"kind": "input", "message": f"unknown network {case_or_id!r}"},
            )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__, "networks": len(app.state.store)}

    @app.post("/networks", response_model=schemas.NetworkSummary)
    def upload_network(body: schemas.NetworkUpload):
        try:
            net = parse_case(body.case_text, name=body.name)
            network_id = app.state.store.add(net, body.case_text)
        except CaseError as exc:
            raise HTTPException(status_code=400, detail={"kind": "input", "message": str(exc)})
        return _summary(network_id, net)

    @app.get("/networks/{network_id}")
    def network_json(network_id: str):
        net, _ = resolve(network_id)
        import json

        return json.loads(net.to_json())

    @app.post("/networks/{network_id}/solve")
    def solve(network_id: str, body: schemas.SolveRequest):
        net, sys = resolve(network_id)
        kwargs = {"backend": body.backend}
        if body.method == "dc":
            kwargs["variant"] = body.variant
        if body.method == "lloa":
            kwargs.update(
                epsilon=body.epsilon,
                max_iter=body.max_iter,
                seed_points="dc" if body.warm_start else None,
            )
        if body.method == "llqcp":
            kwargs["static_tangents"] = body.static_tangents
        sol = solve_method(net, body.method, sys=sys, **kwargs)
        _check_solved(sol)
        return _solution_model(sol, net)

    @app.post("/networks/{network_id}/sced")
    def sced(network_id: str, body: schemas.ScedRequest):
        net, sys = resolve(network_id)
        try:
            cfg = ScedConfig(**body.config.model_dump())
            cfg.validate()
        except ValueError as exc:
            raise HTTPException(status_code=400, detail={"kind": "input", "message": str(exc)})
        sol = solve_sced(net, body.method, cfg, sys=sys, epsilon=body.epsilon)
        _check_solved(sol.dispatch)
        return sol.to_json_dict(net)

    @app.post("/networks/{network_id}/restore", response_model=schemas.RestoreResponse)
    def restore(network_id: str, body: schemas.RestoreRequest):
        net, sys = resolve(network_id)
        solutions: list[DispatchSolution] = []
        if body.solutions:
            for doc in body.solutions:
                if doc.pg is None:
                    raise HTTPException(
                        status_code=400,
                        detail={"kind": "input", "message": "solution without pg"},
                    )
                solutions.append(
                    DispatchSolution(
                        method=doc.method,
                        status=Status.OPTIMAL,
                        objective=doc.objective,
                        pg=np.asarray(doc.pg, dtype=float),
                        loss_total=doc.loss_total,
                    )
                )
        for method in body.methods or []:
            kwargs = {"epsilon": body.epsilon} if method == "lloa" else {}
            sol = solve_method(net, method, sys=sys, **kwargs)
            _check_solved(sol)
            solutions.append(sol)
        if not solutions:
            return schemas.RestoreResponse(rows=[], table="", csv="")
        rows = restore_and_compare(net, solutions)
        out = []
        for row in rows:
            rep, state = row["report"], row["state"]
            if rep is None:
                out.append(
                    schemas.ViolationRow(
                        method=row["method"], converged=False, error=row["error"],
                        active=schemas.ViolationSectionModel(count=0, max=0.0),
                        reactive=schemas.ViolationSectionModel(count=0, max=0.0),
                        voltage=schemas.ViolationSectionModel(count=0, max=0.0),
                        thermal=schemas.ViolationSectionModel(count=0, max=0.0),
                    )
                )
                continue
            out.append(
                schemas.ViolationRow(
                    method=row["method"],
                    converged=rep.valid,
                    newton_iterations=state.newton_iterations,
                    ac_losses=state.total_losses(net) if rep.valid else None,
                    active=schemas.ViolationSectionModel(count=rep.active.count, max=rep.active.max),
                    reactive=schemas.ViolationSectionModel(count=rep.reactive.count, max=rep.reactive.max),
                    voltage=schemas.ViolationSectionModel(count=rep.voltage.count, max=rep.voltage.max),
                    thermal=schemas.ViolationSectionModel(count=rep.thermal.count, max=rep.thermal.max),
                )
            )
        return schemas.RestoreResponse(
            rows=out, table=violation_table_text(rows), csv=violation_table_csv(rows)
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(body: schemas.SweepRequest):
        cases = []
        for entry in body.cases:
            if entry in BUNDLED:
                cases.append((entry, case_text(entry)))
            else:
                net, _ = resolve(entry)
                cases.append((net.name or entry, app.state.store.text(entry)))
        cfg = SweepConfig(
            cases=cases,
            alphas=tuple(body.alphas) if body.alphas else SweepConfig.alphas,
            sigma=body.sigma,
            seeds=tuple(body.seeds) if body.seeds else SweepConfig.seeds,
            methods=tuple(body.methods) if body.methods else SweepConfig.methods,
            problem=body.problem,
            sced=ScedConfig(**body.sced.model_dump()) if body.sced else None,
            epsilon=body.epsilon,
            reference_method=body.reference_method,
            reference_dispatch=body.reference_dispatch,
        )
        try:
            result = run_sweep(cfg)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail={"kind": "input", "message": str(exc)})
        import json as _json

        doc = _json.loads(result.to_json())
        return schemas.SweepResponse(
            total_instances=doc["total_instances"],
            rows=doc["rows"],
            exclusions=doc["exclusions"],
            seed_averages=doc["seed_averages"],
            csv=result.to_csv(),
        )

    return app

"""Load-scaling sensitivity sweeps and report emission.

A sweep solves every (case, load-scale alpha, noise seed, method) instance,
collects objective gap / MAE / estimated losses per instance, and records
infeasible instances separately so that rows plus exclusions always add up
to the full instance count. Gaps are measured against the convex quadratic
solution by default; an external reference-dispatch file can substitute a
caller-supplied baseline (e.g. from an AC solver).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .formulations import solve_method
from .kernel import factorize
from .metrics import dispatch_mae, objective_gap, perturb_loads
from .network import PowerNetwork, parse_case
from .sced import ScedConfig, solve_sced

__all__ = ["SweepConfig", "MetricRow", "SweepResult", "run_sweep"]

DEFAULT_ALPHAS = tuple(round(0.90 + 0.02 * k, 2) for k in range(11))
METHODS = ("dc", "lllf", "llqcp", "lloa")


@dataclass
class SweepConfig:
    """What to sweep: cases, scaling grid, noise, seeds, methods, problem."""

    cases: list[tuple[str, str]]  # (name, case text)
    alphas: tuple = DEFAULT_ALPHAS
    sigma: float = 0.05
    seeds: tuple = tuple(range(10))
    methods: tuple = METHODS
    problem: str = "opf"  # "opf" | "sced"
    sced: ScedConfig | None = None
    epsilon: float = 1e-3
    reference_method: str = "llqcp"
    reference_dispatch: dict | None = None  # case name -> {"pg": [...], "objective": float}

    def validate(self) -> None:
        if not self.cases:
            raise ValueError("no cases configured")
        if any(a <= 0 for a in self.alphas):
            raise ValueError("alphas must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.problem not in ("opf", "sced"):
            raise ValueError(f"unknown problem {self.problem!r}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        doc = dict(doc)
        if "sced" in doc and doc["sced"] is not None:
            doc["sced"] = ScedConfig.from_dict(doc["sced"])
        for key in ("alphas", "seeds", "methods"):
            if key in doc and doc[key] is not None:
                doc[key] = tuple(doc[key])
        cases = []
        for entry in doc.pop("cases"):
            if isinstance(entry, str):
                from .cases import BUNDLED, case_text

                if entry in BUNDLED:
                    cases.append((entry, case_text(entry)))
                else:
                    from pathlib import Path

                    cases.append((Path(entry).stem, Path(entry).read_text()))
            else:
                cases.append((entry["name"], entry["text"]))
        return cls(cases=cases, **doc)


@dataclass
class MetricRow:
    case: str
    alpha: float
    seed: int
    method: str
    objective: float
    gap_pct: float
    mae: float
    loss_total: float
    iterations: int
    time_s: float

    KEY = ("case", "alpha", "seed", "method")
    COLUMNS = (
        "case", "alpha", "seed", "method", "objective",
        "gap_pct", "mae", "loss_total", "iterations", "time_s",
    )


@dataclass
class ExclusionRow:
    case: str
    alpha: float
    seed: int
    method: str
    reason: str


@dataclass
class SweepResult:
    rows: list[MetricRow] = field(default_factory=list)
    exclusions: list[ExclusionRow] = field(default_factory=list)
    total_instances: int = 0

    def to_csv(self, include_timing: bool = True) -> str:
        """Deterministic CSV; the timing column is last so it can be isolated."""
        cols = MetricRow.COLUMNS if include_timing else MetricRow.COLUMNS[:-1]
        out = [",".join(cols)]
        for r in sorted(self.rows, key=lambda r: (r.case, r.alpha, r.seed, r.method)):
            vals = []
            for c in cols:
                v = getattr(r, c)
                vals.append(f"{v:.10g}" if isinstance(v, float) else str(v))
            out.append(",".join(vals))
        return "\n".join(out) + "\n"

    def exclusions_csv(self) -> str:
        out = ["case,alpha,seed,method,reason"]
        for r in sorted(self.exclusions, key=lambda r: (r.case, r.alpha, r.seed, r.method)):
            out.append(f"{r.case},{r.alpha:.10g},{r.seed},{r.method},{r.reason}")
        return "\n".join(out) + "\n"

    def seed_averages(self) -> list[dict]:
        """Mean/std across seeds per (case, alpha, method), solved rows only."""
        groups: dict[tuple, list[MetricRow]] = {}
        for r in self.rows:
            groups.setdefault((r.case, r.alpha, r.method), []).append(r)
        out = []
        for (case, alpha, method), rows in sorted(groups.items()):
            gaps = np.array([r.gap_pct for r in rows])
            maes = np.array([r.mae for r in rows])
            losses = np.array([r.loss_total for r in rows])
            times = np.array([r.time_s for r in rows])
            out.append(
                {
                    "case": case,
                    "alpha": alpha,
                    "method": method,
                    "n": len(rows),
                    "gap_mean": float(gaps.mean()),
                    "gap_std": float(gaps.std()),
                    "mae_mean": float(maes.mean()),
                    "loss_mean": float(losses.mean()),
                    "time_mean": float(times.mean()),
                }
            )
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "total_instances": self.total_instances,
                "rows": [
                    {c: getattr(r, c) for c in MetricRow.COLUMNS}
                    for r in sorted(self.rows, key=lambda r: (r.case, r.alpha, r.seed, r.method))
                ],
                "exclusions": [
                    {
                        "case": r.case, "alpha": r.alpha, "seed": r.seed,
                        "method": r.method, "reason": r.reason,
                    }
                    for r in sorted(
                        self.exclusions, key=lambda r: (r.case, r.alpha, r.seed, r.method)
                    )
                ],
                "seed_averages": self.seed_averages(),
            },
            indent=1,
        )


def _solve_instance(net, method, cfg: SweepConfig, sys):
    if cfg.problem == "sced":
        sced_cfg = cfg.sced or ScedConfig()
        sol = solve_sced(net, method, sced_cfg, sys=sys, epsilon=cfg.epsilon)
        return sol.dispatch
    kwargs = {}
    if method == "lloa":
        kwargs["epsilon"] = cfg.epsilon
    return solve_method(net, method, sys=sys, **kwargs)


def run_sweep(cfg: SweepConfig) -> SweepResult:
    """Solve the whole (case x alpha x seed x method) grid.

    Individual failures become exclusion rows and the sweep continues. When
    the reference solve itself fails, every method of that instance is
    excluded with reason ``reference-<status>``.
    """
    cfg.validate()
    result = SweepResult()
    nets: dict[str, PowerNetwork] = {
        name: parse_case(text, name=name) for name, text in cfg.cases
    }
    for name, base in nets.items():
        for alpha in cfg.alphas:
            for seed in cfg.seeds:
                result.total_instances += len(cfg.methods)
                net = perturb_loads(base, alpha, cfg.sigma, seed)
                try:
                    sys = factorize(net)
                except Exception as exc:  # islanding cannot happen here, but be safe
                    for method in cfg.methods:
                        result.exclusions.append(
                            ExclusionRow(name, alpha, seed, method, f"factorize: {exc}")
                        )
                    continue

                if cfg.reference_dispatch and name in cfg.reference_dispatch:
                    ref = cfg.reference_dispatch[name]
                    ref_pg = np.asarray(ref["pg"], dtype=float)
                    ref_obj = float(ref["objective"])
                else:
                    ref_sol = _solve_instance(net, cfg.reference_method, cfg, sys)
                    if not ref_sol.ok:
                        for method in cfg.methods:
                            result.exclusions.append(
                                ExclusionRow(
                                    name, alpha, seed, method,
                                    f"reference-{ref_sol.status.value}",
                                )
                            )
                        continue
                    ref_pg, ref_obj = ref_sol.pg, ref_sol.objective

                for method in cfg.methods:
                    sol = _solve_instance(net, method, cfg, sys)
                    if not sol.ok:
                        result.exclusions.append(
                            ExclusionRow(name, alpha, seed, method, sol.status.value)
                        )
                        continue
                    result.rows.append(
                        MetricRow(
                            case=name,
                            alpha=alpha,
                            seed=seed,
                            method=method,
                            objective=float(sol.objective),
                            gap_pct=objective_gap(sol.objective, ref_obj),
                            mae=dispatch_mae(sol.pg, ref_pg),
                            loss_total=float(sol.loss_total),
                            iterations=int(sol.iterations),
                            time_s=float(sol.solve_seconds),
                        )
                    )
    return result

"""Report models and output formatting (table, json, csv)."""

from __future__ import annotations

import csv
import io
import json
import math
from importlib import resources
from typing import Literal

from pydantic import BaseModel, ConfigDict

SCHEMA_VERSION = 1


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LossValue(_Model):
    method: str
    value: float
    raw_value: float
    halfwidth: float | None = None
    replications: int = 1
    effective_sample_size: float | None = None
    clamped: bool = False

    @classmethod
    def from_estimate(cls, est) -> LossValue:
        d = est.as_dict()
        if not math.isfinite(d["halfwidth"]):
            d["halfwidth"] = None
        return cls(**d)

    @classmethod
    def exact(cls, method: str, value: float) -> LossValue:
        return cls(method=method, value=min(max(value, 0.0), 1.0), raw_value=value,
                   halfwidth=0.0, clamped=not 0.0 <= value <= 1.0)


class ResidualSummary(_Model):
    max_abs: float
    max_relative: float
    max_z: float | None = None
    residual: list[list[float]]
    standard_error: list[list[float]] | None = None


class LiteralVariant(_Model):
    direct: float
    balance: float
    occupancy: float
    residual_norm: float


class NResult(_Model):
    n: int
    losses: list[LossValue]
    distribution: list[list[float]] | None = None
    residuals: ResidualSummary | None = None
    literal_corollary: LiteralVariant | None = None


class ProbeModel(_Model):
    n: int
    value: float
    halfwidth: float | None
    evaluator: str
    effort: int
    verdict: Literal["feasible", "infeasible", "undecided"]


class SearchModel(_Model):
    alpha: float
    n_lower: int
    n_upper: int
    bound_n: int | None = None
    probes: list[ProbeModel]
    result: int | None
    status: Literal["optimal", "inconclusive"]
    message: str = ""


class RunReport(_Model):
    schema_version: int = SCHEMA_VERSION
    command: Literal["analyze", "simulate", "bound", "optimize"]
    status: Literal["ok", "inconclusive"] = "ok"
    seed: int
    config: dict
    results: list[NResult] = []
    search: SearchModel | None = None
    notes: list[str] = []
    timings: dict[str, float] = {}

    def deterministic_part(self) -> dict:
        """Everything except wall-clock timings."""
        return self.model_dump(mode="json", exclude={"timings"})


def report_schema() -> dict:
    return RunReport.model_json_schema()


def published_schema(name: str = "report") -> dict:
    return json.loads(resources.files("retrialq").joinpath(f"schemas/{name}.schema.json").read_text())


def to_json(report: RunReport) -> str:
    return report.model_dump_json(indent=2)


CSV_FIELDS = ["command", "n", "method", "value", "raw_value", "halfwidth", "replications"]


def _rows(report: RunReport):
    for r in report.results:
        for loss in r.losses:
            yield {
                "command": report.command,
                "n": r.n,
                "method": loss.method,
                "value": loss.value,
                "raw_value": loss.raw_value,
                "halfwidth": "" if loss.halfwidth is None else loss.halfwidth,
                "replications": loss.replications,
            }


def to_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in _rows(report):
        w.writerow(row)
    if report.search is not None:
        for p in report.search.probes:
            w.writerow({"command": "probe", "n": p.n, "method": p.evaluator, "value": p.value,
                        "raw_value": p.value, "halfwidth": "" if p.halfwidth is None else p.halfwidth,
                        "replications": p.effort})
    return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.6f}" if abs(x) >= 1e-4 or x == 0 else f"{x:.3e}"
    return str(x)


def to_table(report: RunReport) -> str:
    lines = [f"# {report.command}  status={report.status}  seed={report.seed}"]
    lines.append(f"{'n':>4}  {'method':<18} {'value':>12} {'halfwidth':>12} {'reps':>6}")
    for r in report.results:
        for loss in r.losses:
            lines.append(f"{r.n:>4}  {loss.method:<18} {_fmt(loss.value):>12} "
                         f"{_fmt(loss.halfwidth):>12} {loss.replications:>6}")
        if r.literal_corollary is not None:
            lc = r.literal_corollary
            lines.append(f"{r.n:>4}  {'literal(direct)':<18} {_fmt(lc.direct):>12}"
                         f"   residual_norm={lc.residual_norm:.3e}")
        if r.residuals is not None:
            z = "" if r.residuals.max_z is None else f"  max_z={r.residuals.max_z:.2f}"
            lines.append(f"{r.n:>4}  residuals max_abs={r.residuals.max_abs:.3e} "
                         f"max_rel={r.residuals.max_relative:.3e}{z}")
        if r.distribution is not None:
            lines.append(f"{'':>4}  {'i':>4} {'P[i,0]':>14} {'P[i,1]':>14}")
            for i, (p0, p1) in enumerate(r.distribution):
                lines.append(f"{'':>4}  {i:>4} {p0:>14.6e} {p1:>14.6e}")
    if report.search is not None:
        s = report.search
        lines.append(f"# search alpha={s.alpha} bracket=[{s.n_lower}, {s.n_upper}] bound={s.bound_n}")
        for p in s.probes:
            lines.append(f"  probe n={p.n:<4} f={_fmt(p.value):>12} hw={_fmt(p.halfwidth):>12} "
                         f"{p.verdict} ({p.evaluator}, effort {p.effort})")
        lines.append(f"# result n={s.result} ({s.status}) {s.message}".rstrip())
    for note in report.notes:
        lines.append(f"# note: {note}")
    return "\n".join(lines) + "\n"


def render(report: RunReport, fmt: str) -> str:
    if fmt == "json":
        return to_json(report) + "\n"
    if fmt == "csv":
        return to_csv(report)
    return to_table(report)

"""The four front-end commands, each returning a :class:`RunReport`."""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np

from . import markov
from .bounds import InterarrivalLST, erlang_b, gi_loss
from .config import RunConfig, canonical
from .engine import replicate, run
from .estimators import SIMULATION_METHODS, Method, estimate_replications, theorem1_residuals
from .optimizer import MarkovEvaluator, SimulationEvaluator, minimal_servers, upper_bound_servers
from .report import (
    LiteralVariant,
    LossValue,
    NResult,
    ProbeModel,
    ResidualSummary,
    RunReport,
    SearchModel,
)


LOW_ESS_FRACTION = 0.1


class ConfigError(ValueError):
    """The configuration is valid TOML but unusable for the requested command."""


def _report(command: str, cfg: RunConfig, started: float, **kw) -> RunReport:
    return RunReport(
        command=command,
        seed=cfg.simulation.seed,
        config=canonical(cfg),
        timings={"wall_seconds": time.perf_counter() - started},
        **kw,
    )


def _markov_result(cfg: RunConfig, n: int, literal: bool = True, table: bool = True) -> NResult:
    lam, delta, mu = cfg.arrival.rate, cfg.retrial.rate, cfg.system.mu
    dist = markov.stationary(lam, delta, mu, n)
    f = markov.loss_markov(dist, lam, delta, mu)
    res = markov.stationary_residuals(dist, lam, delta, mu)
    lit = None
    if literal:
        sol = markov.solve_literal_corollary(lam, delta, mu, n)
        lit = LiteralVariant(direct=sol.losses.direct, balance=sol.losses.balance,
                             occupancy=sol.losses.occupancy, residual_norm=sol.residual_norm)
    return NResult(
        n=n,
        losses=[
            LossValue.exact("markov_direct", f.direct),
            LossValue.exact("markov_balance", f.balance),
            LossValue.exact("markov_occupancy", f.occupancy),
        ],
        distribution=dist.p.tolist() if table else None,
        residuals=ResidualSummary(max_abs=res.max_abs(), max_relative=float(res.relative().max()),
                                  residual=res.residual.tolist()),
        literal_corollary=lit,
    )


def _require_markovian(cfg: RunConfig) -> None:
    if not cfg.markovian:
        raise ConfigError("analyze requires poisson arrival and retrial processes "
                          f"(got {cfg.arrival.kind}/{cfg.retrial.kind})")
    if cfg.arrival.rate <= 0:
        raise ConfigError("analyze requires a positive arrival rate")


def analyze(cfg: RunConfig) -> RunReport:
    started = time.perf_counter()
    _require_markovian(cfg)
    results = [_markov_result(cfg, n) for n in cfg.n_values()]
    notes = ["literal_corollary: least-squares fit of the literal equation variant, "
             "which admit no exact probability solution; shown for comparison only"]
    return _report("analyze", cfg, started, results=results, notes=notes)


def _methods(cfg: RunConfig) -> tuple[Method, ...]:
    if cfg.simulation.estimator == "all":
        return SIMULATION_METHODS
    return (Method(cfg.simulation.estimator),)


def _write_trace(path: Path, sysconf) -> None:
    with open(path, "w") as fh:
        run(sysconf, replication=0, on_event=lambda ev: fh.write(json.dumps(ev.as_dict()) + "\n"))


def simulate(cfg: RunConfig, trace: str | Path | None = None) -> RunReport:
    started = time.perf_counter()
    sim = cfg.simulation
    results = []
    notes = []
    lam, mu = cfg.arrival.rate, cfg.system.mu
    for k, n in enumerate(cfg.n_values()):
        sc = cfg.system_config(n)
        if trace is not None and k == 0:
            _write_trace(Path(trace), sc)
            notes.append(f"event trace of replication 0 at n={n} written to {trace}")
        runs = replicate(sc, threads=sim.threads)
        losses = []
        if lam > 0:
            est = estimate_replications(runs, lam, mu, _methods(cfg), sim.empirical_rate, sim.confidence)
            losses = [LossValue.from_estimate(e) for e in est.values()]
            ess = min(e.effective_sample_size for e in est.values())
            if ess < max(LOW_ESS_FRACTION * len(runs), min(5.0, len(runs) / 2)):
                notes.append(f"n={n}: effective sample size {ess:.1f} of {len(runs)} replications; "
                             "importance weights are degenerate and the interval is unreliable "
                             "(shorten the horizon or move proposal_rate toward the nominal rate)")
        else:
            notes.append(f"n={n}: no arrivals, losses={sum(r.total_losses for r in runs)}")
        per_rep = np.array([theorem1_residuals(r, mu).residual for r in runs])
        pooled = per_rep.mean(axis=0)
        scale = np.mean([theorem1_residuals(r, mu).scale for r in runs], axis=0)
        se = per_rep.std(axis=0, ddof=1) / math.sqrt(len(runs)) if len(runs) > 1 else None
        max_z = None
        if se is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(se > 0, np.abs(pooled) / se, 0.0)
            max_z = float(z.max())
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(scale > 0, np.abs(pooled) / scale, 0.0)
        results.append(NResult(
            n=n,
            losses=losses,
            residuals=ResidualSummary(
                max_abs=float(np.abs(pooled).max()),
                max_relative=float(rel.max()),
                max_z=max_z,
                residual=pooled.tolist(),
                standard_error=None if se is None else se.tolist(),
            ),
        ))
    return _report("simulate", cfg, started, results=results, notes=notes)


def _bound_value(cfg: RunConfig, n: int) -> LossValue:
    rate = cfg.arrival.rate + cfg.retrial.rate
    mu = cfg.system.mu
    if cfg.arrival.kind == "poisson":
        return LossValue.exact("erlang_b", erlang_b(rate / mu, n))
    if cfg.arrival.kind == "deterministic":
        return LossValue.exact("gi_loss", gi_loss(InterarrivalLST.deterministic(1.0 / rate), mu, n))
    raise ConfigError(f"no closed-form bound for {cfg.arrival.kind} arrivals")


def bound(cfg: RunConfig) -> RunReport:
    """Closed-form loss at the combined input rate ``lam + delta`` over a range of n."""
    started = time.perf_counter()
    if cfg.arrival.rate + cfg.retrial.rate <= 0:
        raise ConfigError("bound needs a positive combined input rate")
    results = [NResult(n=n, losses=[_bound_value(cfg, n)]) for n in cfg.n_values()]
    notes = []
    alpha = cfg.search.alpha
    if alpha < 1:
        nb = upper_bound_servers(cfg.arrival.rate, cfg.retrial.rate, cfg.system.mu, alpha, cfg.arrival.kind)
        notes.append(f"smallest n with bound <= {alpha}: {nb}")
    return _report("bound", cfg, started, results=results, notes=notes)


def optimize(cfg: RunConfig) -> RunReport:
    started = time.perf_counter()
    s = cfg.search
    lam, delta, mu = cfg.arrival.rate, cfg.retrial.rate, cfg.system.mu
    if lam <= 0:
        raise ConfigError("optimize requires a positive arrival rate")
    notes = []
    bound_n = None
    if s.n_upper is not None:
        n_upper = s.n_upper
    elif s.alpha >= 1:
        n_upper = s.n_lower
    elif cfg.arrival.kind in ("poisson", "deterministic"):
        bound_n = upper_bound_servers(lam, delta, mu, s.alpha, cfg.arrival.kind)
        n_upper = max(bound_n, s.n_lower)
    else:
        n_upper = 2 * s.n_lower
        notes.append("no closed-form bound for renewal arrivals; starting from 2 * n_lower")

    results: dict[int, NResult] = {}
    if cfg.markovian:
        evaluator = MarkovEvaluator(lam, delta, mu)
    else:
        evaluator = SimulationEvaluator(
            cfg.system_config(), Method(s.estimator), cfg.simulation.empirical_rate,
            cfg.simulation.threads,
            on_estimate=lambda n, e: results.__setitem__(n, NResult(n=n, losses=[LossValue.from_estimate(e)])),
        )
        notes.append(f"simulation evaluator, decisions by {s.estimator} with CI qualification")
    trace = minimal_servers(evaluator, s.alpha, s.n_lower, n_upper, s.max_effort)
    if cfg.markovian:
        for n in sorted(set(trace.probed)):
            results[n] = _markov_result(cfg, n, literal=False, table=False)
    search = SearchModel(
        alpha=s.alpha,
        n_lower=trace.n_lower,
        n_upper=trace.n_upper,
        bound_n=bound_n,
        probes=[ProbeModel(n=p.n, value=p.value,
                           halfwidth=p.halfwidth if math.isfinite(p.halfwidth) else None,
                           evaluator=p.evaluator, effort=p.effort, verdict=p.verdict)
                for p in trace.probes],
        result=trace.result,
        status=trace.status,
        message=trace.message,
    )
    status = "ok" if trace.status == "optimal" else "inconclusive"
    return _report("optimize", cfg, started, status=status, search=search,
                   results=[results[n] for n in sorted(results)], notes=notes)


COMMANDS = {"analyze": analyze, "simulate": simulate, "bound": bound, "optimize": optimize}

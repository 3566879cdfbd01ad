"""Run configuration, the assembled learning loop, metrics, and summaries.

A run is described by a single JSON document (validated against the schema
shipped in ``schemas/runconfig.schema.json``) and driven by one master seed.
Every random draw comes from a per-player, per-purpose stream spawned from
that seed, so the stream consumed by player i for purpose p at iteration k
is a deterministic function of (seed, k) alone -- logging cadence and
worker counts never shift it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import estimator as est_mod
from . import games, gnep, inexact, oracle, seeker
from .errors import IoError, NetGamesError, SchemaError
from .topology import build_structural_maps

METRIC_COLUMNS = ("k", "dist_sne", "step_rel", "weight_err", "bias_err",
                  "residual", "min_gram_eig", "skips")
WARMUP_ITERS = 150

# RNG stream purposes (spawn keys), fixed for reproducibility
PURPOSE_NOISE = 0
PURPOSE_EXPLORE = 1
PURPOSE_INSTANCE = 2
PURPOSE_INNER = 3


def player_stream(master_seed, purpose, player):
    """The dedicated generator for one (purpose, player) pair."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(purpose, player))
    return np.random.default_rng(ss)


# -- configuration ------------------------------------------------------------

def config_hash(document: dict) -> str:
    blob = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunConfig:
    document: dict
    source_path: str | None = None

    @property
    def mode(self) -> str:
        return self.document["mode"]

    @property
    def seed(self) -> int:
        return int(self.document["seed"])

    @property
    def iters(self) -> int:
        return int(self.document["iters"])

    @property
    def metrics_every(self) -> int:
        return int(self.document.get("metrics_every", 10))

    @property
    def sha(self) -> str:
        return config_hash(self.document)

    def get(self, *keys, default=None):
        node = self.document
        for k in keys:
            if not isinstance(node, dict) or k not in node:
                return default
            node = node[k]
        return node


def _schema():
    text = resources.files("netgames").joinpath(
        "schemas/runconfig.schema.json").read_text()
    return json.loads(text)


def validate_config(document, path="<inline>") -> None:
    import jsonschema
    try:
        jsonschema.validate(document, _schema())
    except jsonschema.ValidationError as e:
        fieldname = "/" + "/".join(str(p) for p in e.absolute_path)
        raise SchemaError(path, fieldname, e.message) from None
    # semantic checks the schema language cannot express
    mode = document["mode"]
    if mode == "learn":
        if "estimator" not in document:
            raise SchemaError(path, "/estimator",
                              "learn mode requires an estimator block")
        if "gamma" not in document.get("step", {}):
            raise SchemaError(path, "/step/gamma",
                              "learn mode requires a gamma schedule")
    if mode == "gnep" and "gnep" not in document:
        raise SchemaError(path, "/gnep", "gnep mode requires a gnep block")
    inst = document["instance"]
    if ("generator" in inst) == ("inline" in inst):
        raise SchemaError(path, "/instance",
                          "exactly one of 'generator' or 'inline' is required")


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            document = json.load(fh)
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise SchemaError(str(path), "/", f"invalid JSON: {e}") from None
    validate_config(document, str(path))
    return RunConfig(document, str(path))


def build_instance(config: RunConfig):
    block = config.document["instance"]
    if "inline" in block:
        return games.instance_from_dict(block["inline"])
    g = dict(block["generator"])
    seed = g.pop("seed", config.seed)
    return games.sample_instance(seed, **g)


def _step_config(config: RunConfig, instance, maps):
    step = config.document.get("step", {})
    gamma_block = step.get("gamma", {"mode": "constant", "param": 0.5})
    gamma = (gamma_block["mode"], float(gamma_block["param"]))
    if "rho" in step:
        rho = float(step["rho"])
    else:
        cert = games.monotonicity_certificate(instance, maps)
        rho = seeker.choose_rho(cert)
    return seeker.choose_taus(instance.topology, rho,
                              safety=float(step.get("safety", 0.9)),
                              tau_max=float(step.get("tau_max", 1.0)),
                              gamma=gamma)


# -- metrics ------------------------------------------------------------------

@dataclass
class MetricsRow:
    k: int
    dist_sne: float | None = None
    step_rel: float | None = None
    weight_err: float | None = None
    bias_err: float | None = None
    residual: float | None = None
    min_gram_eig: float | None = None
    skips: int | None = None
    warmup: bool = False     # flagged, not emitted: early transient rows

    def as_csv(self):
        out = []
        for name in METRIC_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif name in ("k", "skips"):
                out.append(str(int(v)))
            else:
                out.append("%.17g" % float(v))
        return out


def _mean_ratio(parts):
    """Average of num/den pairs, skipping zero denominators."""
    vals = [n / d for n, d in parts if d > 0.0]
    return float(np.mean(vals)) if vals else 0.0


def dist_to_solution(instance, y, x_star) -> float:
    lay, topo = instance.layout, instance.topology
    offs = np.cumsum([0] + list(topo.decision_dims))
    parts = []
    for i in range(topo.player_count):
        xi = x_star[offs[i]:offs[i + 1]]
        parts.append((np.linalg.norm(y[lay.own(i)] - xi), np.linalg.norm(xi)))
    return _mean_ratio(parts)


def relative_step(instance, y_new, y_old) -> float:
    lay, topo = instance.layout, instance.topology
    parts = []
    for i in range(topo.player_count):
        sl = lay.own(i)
        parts.append((np.linalg.norm(y_new[sl] - y_old[sl]),
                      np.linalg.norm(y_old[sl])))
    return _mean_ratio(parts)


def parameter_errors(instance, beliefs):
    """(weight_err, bias_err): normalized distances to the true parameters."""
    topo = instance.topology
    w_parts, b_parts = [], []
    for i in range(topo.player_count):
        w_hat = beliefs[i]
        truth = instance.truth.stacked(topo, i)
        b_parts.append((abs(w_hat[0] - truth[0]), abs(truth[0])))
        if topo.in_neighbors[i]:
            w_parts.append((np.linalg.norm(w_hat[1:] - truth[1:]),
                            np.linalg.norm(truth[1:])))
    return _mean_ratio(w_parts), _mean_ratio(b_parts)


def emit_metrics(rows, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(METRIC_COLUMNS)
            for row in rows:
                writer.writerow(row.as_csv())
    except OSError as e:
        raise IoError(f"cannot write metrics {path}: {e}") from None


# -- the assembled loop -------------------------------------------------------

@dataclass
class RunResult:
    config: RunConfig
    mode: str
    y: np.ndarray | None
    rows: list
    iterations: int
    converged: bool
    beliefs: list | None = None
    oracle_solution: object = None
    monitor_sum: float = 0.0        # running sum of gamma_k * ||belief change||
    error_history: list = field(default_factory=list)
    increment_history: list = field(default_factory=list)
    skip_total: int = 0
    extra: dict = field(default_factory=dict)


def _attach_oracle(config, instance):
    if not config.get("attach_oracle", default=True):
        return None
    return oracle.solve_vi_centralized(instance)


def run_exact_mode(config: RunConfig, instance, workers=1) -> RunResult:
    maps = build_structural_maps(instance.topology, instance.layout)
    sc = _step_config(config, instance, maps)
    engine = seeker.SeekerEngine(instance, maps, sc)
    phi = seeker.build_phi(sc, maps)
    sol = _attach_oracle(config, instance)
    tol = float(config.get("tol", default=1e-8))
    cadence = config.metrics_every

    x0 = np.concatenate([instance.boxes[i].center
                         for i in range(instance.topology.player_count)])
    y = seeker.embed_consensual(x0, instance.layout)
    rows = []
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    converged = False
    k = 0
    try:
        for k in range(config.iters):
            y_tilde = engine.resolvent(y, executor=executor)
            res = phi.norm(y - y_tilde)
            y_new = seeker.km_update(y, y_tilde, sc.gamma(k))
            if k % cadence == 0:
                rows.append(MetricsRow(
                    k=k,
                    dist_sne=None if sol is None else dist_to_solution(instance, y, sol.x),
                    step_rel=relative_step(instance, y_new, y),
                    residual=res,
                    warmup=k < WARMUP_ITERS))
            y = y_new
            if res < tol:
                converged = True
                break
    finally:
        if executor is not None:
            executor.shutdown()
    return RunResult(config, "exact", y, rows, k + 1, converged,
                     oracle_solution=sol)


def run_learn_mode(config: RunConfig, instance, workers=1) -> RunResult:
    topo = instance.topology
    N = topo.player_count
    maps = build_structural_maps(topo, instance.layout)
    sc = _step_config(config, instance, maps)
    engine = seeker.SeekerEngine(instance, maps, sc)
    phi = seeker.build_phi(sc, maps)
    sol = _attach_oracle(config, instance)
    cadence = config.metrics_every

    scale_rule = config.get("estimator", "scale_rule", default="paper")
    explicit = config.get("estimator", "scales", default=None)
    explore = est_mod.ExplorationConfig.from_instance(
        instance, scale_rule=scale_rule, explicit_scales=explicit)
    log = est_mod.RegressionLog.for_instance(instance)
    beliefs = [instance.param_boxes[i].center.copy() for i in range(N)]
    truth_vecs = [instance.truth.stacked(topo, i) for i in range(N)]

    inner = None
    if config.get("inner", "kind", default="closed_form") == "psg":
        rngs = [player_stream(config.seed, PURPOSE_INNER, i) for i in range(N)]
        inner = inexact.PsgInner(instance, sc, rngs)
        budget = config.get("inner", "budget", default=None)
        rule = inexact.DEFAULT_RULE if budget is None else \
            ("power", budget["alpha"], budget.get("coeff", 1.0))
    noise_rngs = [player_stream(config.seed, PURPOSE_NOISE, i) for i in range(N)]
    explore_rngs = [player_stream(config.seed, PURPOSE_EXPLORE, i) for i in range(N)]

    x0 = np.concatenate([instance.boxes[i].center for i in range(N)])
    y = seeker.embed_consensual(x0, instance.layout)
    rows, err_hist, inc_hist = [], [], []
    monitor = 0.0
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    k = 0
    try:
        for k in range(config.iters):
            if inner is not None:
                inner.set_budget(inexact.schedule_T(k, rule))
            y_tilde = engine.resolvent(y, beliefs=beliefs, inner=inner,
                                       executor=executor)
            y_new = seeker.km_update(y, y_tilde, sc.gamma(k))

            # play: explore around the fresh pivot, stay feasible
            played = []
            for i in range(N):
                delta = est_mod.draw_exploration(explore, explore_rngs[i], i)
                played.append(est_mod.safe_net_adjust(
                    y_new[instance.layout.own(i)], delta, explore, i,
                    box=instance.boxes[i]))

            # observe: realized payoff at the played profile, then refit
            inc = 0.0
            for i in range(N):
                plus = [played[j] for j in topo.in_neighbors[i]]
                stacked = np.concatenate(plus) if plus else np.empty(0)
                xi = games.draw_noise(instance, noise_rngs[i])
                s = instance.aggregate(i, stacked, xi=xi)
                J = instance.payoff_at_aggregate(i, played[i], s)
                est_mod.record_observation(log, instance, i, played[i],
                                           stacked, J)
                belief = est_mod.olse_solve(log.players[i],
                                            instance.param_boxes[i], beliefs[i])
                inc += np.linalg.norm(belief.w - beliefs[i])
                beliefs[i] = belief.w
            monitor += sc.gamma(k) * inc

            if k % cadence == 0 or k == config.iters - 1:
                w_err, b_err = parameter_errors(instance, beliefs)
                gram_eigs = [np.linalg.eigvalsh(
                    log.players[i].gram / log.players[i].count).min()
                    for i in range(N) if log.players[i].count]
                rows.append(MetricsRow(
                    k=k,
                    dist_sne=None if sol is None else dist_to_solution(instance, y, sol.x),
                    step_rel=relative_step(instance, y_new, y),
                    weight_err=w_err,
                    bias_err=b_err,
                    residual=phi.norm(y - engine.resolvent(y, beliefs=beliefs)),
                    min_gram_eig=float(min(gram_eigs)) if gram_eigs else None,
                    skips=sum(log.players[i].skips for i in range(N)),
                    warmup=k < WARMUP_ITERS))
                err = float(np.mean([np.linalg.norm(beliefs[i] - truth_vecs[i])
                                     for i in range(N)]))
                err_hist.append((max(k, 1), err))
                inc_hist.append((max(k, 1), inc))
            y = y_new
    finally:
        if executor is not None:
            executor.shutdown()
    return RunResult(config, "learn", y, rows, k + 1, False,
                     beliefs=beliefs, oracle_solution=sol,
                     monitor_sum=monitor, error_history=err_hist,
                     increment_history=inc_hist,
                     skip_total=sum(p.skips for p in log.players),
                     extra={"log": log, "explore": explore})


def _coupling_from_config(config: RunConfig, instance):
    block = config.document["gnep"]
    topo = instance.topology
    A = [np.asarray(a, dtype=float) for a in block["A"]]
    total = np.atleast_1d(np.asarray(block["total_budget"], dtype=float))
    shares = block.get("budget_shares")
    if shares is None:
        return gnep.CouplingSpec.equal_split(A, total, topo.player_count)
    return gnep.CouplingSpec(A, [np.asarray(s, dtype=float) for s in shares])


def run_gnep_mode(config: RunConfig, instance, workers=1) -> RunResult:
    maps = build_structural_maps(instance.topology, instance.layout)
    coupling = _coupling_from_config(config, instance)
    block = config.document["gnep"]
    taus = gnep.choose_gnep_taus(maps, coupling,
                                 rho=float(block.get("rho", 1.0)),
                                 gamma=float(block.get("gamma", 0.25)))
    engine = gnep.GnepEngine(instance, coupling, maps, taus)
    state = gnep.GnepState.zeros(engine.op)
    tol = float(config.get("tol", default=1e-10))
    cadence = config.metrics_every
    rows = []
    converged = False
    for k in range(config.iters):
        new = gnep.dr_step(state, engine)
        settled = float(np.max(np.abs(new.psi_tilde - state.psi_tilde)))
        state = new
        if k % cadence == 0 or settled < tol:
            rep = gnep.kkt_residual_gnep(state, engine)
            rows.append(MetricsRow(k=k, residual=max(rep.values()),
                                   warmup=k < WARMUP_ITERS))
        if settled < tol:
            converged = True
            break
    y = engine.split(state.psi)[0]
    return RunResult(config, "gnep", y, rows, state.k, converged,
                     extra={"state": state, "engine": engine,
                            "coupling": coupling})


def run_algorithm1(config: RunConfig, workers=1) -> RunResult:
    """Dispatch a validated configuration to its run loop."""
    instance = build_instance(config)
    if config.mode == "exact":
        return run_exact_mode(config, instance, workers=workers)
    if config.mode == "learn":
        return run_learn_mode(config, instance, workers=workers)
    return run_gnep_mode(config, instance, workers=workers)


# -- summaries ----------------------------------------------------------------

def summarize(result: RunResult) -> dict:
    import scipy
    cfg = result.config
    final = result.rows[-1] if result.rows else None
    out = {
        "config_sha256": cfg.sha,
        "seed": cfg.seed,
        "mode": result.mode,
        "iterations": result.iterations,
        "converged": result.converged,
        "warmup_rows": sum(1 for r in result.rows if r.warmup),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if final is not None:
        out["final"] = {name: getattr(final, name) for name in METRIC_COLUMNS}
    if result.mode == "learn":
        out["monitor_sum_gamma_dw"] = result.monitor_sum
        out["skips"] = result.skip_total
        if len(result.error_history) >= 2:
            window = cfg.get("estimator", "diagnostics_window", default=None)
            rep = est_mod.decay_diagnostics(result.error_history,
                                            result.increment_history,
                                            window=window)
            out["decay"] = {"slope": rep.slope, "at_floor": rep.at_floor,
                            "sup_k_increment": rep.sup_k_increment}
    if result.oracle_solution is not None:
        sol = result.oracle_solution
        out["oracle"] = {"method": sol.method, "residual": sol.residual,
                         "status": sol.status}
    return out


def write_summary(result: RunResult, path) -> None:
    def scrub(v):
        if isinstance(v, dict):
            return {k: scrub(x) for k, x in v.items()}
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        if isinstance(v, float) and math.isnan(v):
            return None
        return v
    try:
        with open(path, "w") as fh:
            json.dump(scrub(summarize(result)), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as e:
        raise IoError(f"cannot write summary {path}: {e}") from None

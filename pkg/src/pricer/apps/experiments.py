"""Config-driven experiment runners with deterministic CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from pricer import erdos_renyi as er
from pricer.analysis import bound
from pricer.apps.kmeans import KmeansSetup, run_kmeans
from pricer.network import (
    NetworkModel,
    default_scattered_positions,
    erdos_renyi_topology,
    ring_topology,
    scattered_topology,
)
from pricer.optimizer import OptimizerConfig, optimize
from pricer.privacy import privacy_report
from pricer.protocol import CSV_FIELDS, mc_csv_row, monte_carlo_mse
from pricer.scheme import CollaborationScheme, Dataset, TrustMatrix, is_feasible, load_dataset

TABLE_P = [0.1, 0.1, 0.8, 0.1, 0.1, 0.9, 0.1, 0.1, 0.9, 0.1]

KINDS = (
    "optimize",
    "simulate",
    "privacy-report",
    "tradeoff-table",
    "neighbor-sweep",
    "mse-sweep",
    "er-closed-form",
    "kmeans",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    params: dict = field(default_factory=dict)
    trials: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.trials < 0:
            raise ConfigError("trials must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "seed" not in d:
            raise ConfigError("seed is mandatory")
        unknown = set(d) - {"kind", "seed", "params", "trials", "out"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(kind=d.get("kind", ""), seed=d["seed"], params=d.get("params", {}), trials=d.get("trials", 0), out=d.get("out"))


# -- formatting ---------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def to_csv(rows: list[dict], fields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


# -- config resolution---------------------------------------------------------


def _req(params: dict, key: str):
    if key not in params:
        raise ConfigError(f"missing required parameter {key!r}")
    return params[key]


def build_topology(spec: dict) -> tuple[NetworkModel, TrustMatrix]:
    spec = dict(spec)
    kind = spec.pop("type", "ring")
    if kind == "ring":
        return ring_topology(**spec)
    if kind == "scattered":
        pos = spec.pop("positions", None)
        pos = default_scattered_positions() if pos is None else np.asarray(pos, dtype=float)
        return scattered_topology(pos, **spec)
    if kind == "erdos_renyi":
        eps, delta = spec.pop("eps", 1.0), spec.pop("delta", 1e-3)
        model = erdos_renyi_topology(**spec)
        return model, TrustMatrix.uniform(model.n, eps, delta)
    if kind == "explicit":
        return NetworkModel.from_dict(spec["model"]), TrustMatrix.from_dict(spec["trust"])
    raise ConfigError(f"unknown topology type {kind!r}")


def build_optimizer(spec: dict, seed: int) -> OptimizerConfig:
    spec = dict(spec)
    spec.setdefault("seed", seed)
    if "lambda" in spec:
        spec["lam"] = spec.pop("lambda")
    try:
        return OptimizerConfig(**spec)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def build_data(spec: dict, n: int, R: float, rng: np.random.Generator) -> Dataset:
    kind = spec.get("type", "aligned")
    d = int(spec.get("d", 1))
    if kind == "aligned":
        X = np.zeros((n, d))
        X[:, 0] = R
        return Dataset(X=X, R=R)
    if kind == "uniform_ball":
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = R * rng.random(n) ** (1.0 / d)
        return Dataset(X=g * rad[:, None], R=R)
    if kind == "csv":
        return load_dataset(spec["path"], spec.get("R"))
    raise ConfigError(f"unknown data type {kind!r}")


def _scheme(params: dict, model, trust, R, d, seed) -> tuple[CollaborationScheme, object]:
    if "scheme" in params:
        return CollaborationScheme.from_dict(params["scheme"]), None
    trace = optimize(model, trust, R, d, build_optimizer(params.get("optimizer", {}), seed))
    return trace.scheme, trace


# -- runners ------------------------------------------------------------------

BREAKDOWN_FIELDS = ("objective", "mse", "tiv", "piv", "bias_l1", "bias_l2")


def _breakdown(model, scheme, R, d, lam, bias_norm) -> dict:
    b = bound(model, scheme, R, d)
    bias = b.bias_l1 if bias_norm == "l1" else b.bias_l2
    return {"objective": b.bound + lam * bias, "mse": b.bound, "tiv": b.tiv, "piv": b.piv, "bias_l1": b.bias_l1, "bias_l2": b.bias_l2}


def run_optimize(cfg: ExperimentConfig):
    p = cfg.params
    model, trust = build_topology(p.get("topology", {"type": "ring", "n": 10, "k_hops": 1, "p": TABLE_P}))
    R, d = float(p.get("R", 1.0)), int(p.get("d", 1))
    ocfg = build_optimizer(p.get("optimizer", {}), cfg.seed)
    trace = optimize(model, trust, R, d, ocfg)
    ok, viol = is_feasible(trace.scheme, trust, R, atol=1e-12)
    files = {"trace.csv": trace.to_csv(), "scheme.json": json.dumps(trace.scheme.to_dict(), indent=2) + "\n"}
    summary = {"iterations": len(trace.objective) - 1, "converged": trace.converged, "feasible": ok,
               **_breakdown(model, trace.scheme, R, d, ocfg.lam, ocfg.bias_norm)}
    if cfg.trials:
        rng = np.random.default_rng(cfg.seed)
        data = build_data(p.get("data", {"d": d}), model.n, R, rng)
        mc = monte_carlo_mse(data, model, trace.scheme, cfg.trials, cfg.seed)
        files["mc.csv"] = to_csv([mc_csv_row(data, model, trace.scheme, mc)], CSV_FIELDS)
        summary["mc_mse"], summary["mc_se"] = mc.mse, mc.se
    return files, summary


def run_simulate(cfg: ExperimentConfig):
    p = cfg.params
    model, trust = build_topology(_req(p, "topology"))
    R = float(p.get("R", 1.0))
    rng = np.random.default_rng(cfg.seed)
    data = build_data(p.get("data", {}), model.n, R, rng)
    scheme, _ = _scheme(p, model, trust, R, data.d, cfg.seed)
    trials = cfg.trials or 10_000
    mc = monte_carlo_mse(data, model, scheme, trials, cfg.seed)
    row = mc_csv_row(data, model, scheme, mc)
    return {"mc.csv": to_csv([row], CSV_FIELDS)}, row


def run_privacy_report(cfg: ExperimentConfig):
    p = cfg.params
    model, trust = build_topology(_req(p, "topology"))
    R, d = float(p.get("R", 1.0)), int(p.get("d", 1))
    scheme, _ = _scheme(p, model, trust, R, d, cfg.seed)
    rep = privacy_report(model, scheme, R, trust.delta, p.get("delta_total"))
    ok, viol = is_feasible(scheme, trust, R, atol=1e-12)
    worst = float(np.max(rep.local_eps - trust.eps, initial=-np.inf, where=model.P > 0))
    summary = {"feasible": ok, "violations": viol, "max_local_eps_slack": worst}
    return {"privacy.csv": rep.to_csv(), "privacy.json": rep.to_json() + "\n"}, summary


def _seeds(cfg: ExperimentConfig, count: int) -> list[int]:
    return [cfg.seed + s for s in range(count)]


def run_tradeoff(cfg: ExperimentConfig):
    p = cfg.params
    pvec = p.get("p", TABLE_P)
    n = len(pvec)
    R, d = float(p.get("R", 1.0)), int(p.get("d", 1))
    runs = []
    for pc in p.get("p_c", [0.1, 0.5]):
        model, trust = ring_topology(n, p.get("k_hops", 1), p=pvec, p_c=pc, eps_ngbr=p.get("eps_ngbr", 1e3),
                                     eps_other=p.get("eps_other", 1.0), delta=p.get("delta", 1e-3))
        for lam in p.get("lambda", [0.0, 0.1, 0.5]):
            for s in _seeds(cfg, p.get("seeds", 4)):
                opt = dict(p.get("optimizer", {}))
                opt.setdefault("bias_norm", "l1")
                opt.setdefault("max_iters", 100_000)
                ocfg = build_optimizer({**opt, "lam": lam, "seed": s}, s)
                tr = optimize(model, trust, R, d, ocfg)
                runs.append({"p_c": pc, "lambda": lam, "seed": s, "iterations": len(tr.objective) - 1,
                             **_breakdown(model, tr.scheme, R, d, lam, ocfg.bias_norm)})
    table = _aggregate(runs, ("p_c", "lambda"))
    run_fields = ("p_c", "lambda", "seed", "iterations", *BREAKDOWN_FIELDS)
    return {"tradeoff.csv": to_csv(table, TABLE_FIELDS(("p_c", "lambda"))), "tradeoff_runs.csv": to_csv(runs, run_fields)}, {"rows": table}


def TABLE_FIELDS(keys):
    return (*keys, "runs", *(f"{m}_{s}" for m in BREAKDOWN_FIELDS for s in ("mean", "std")))


def _aggregate(runs: list[dict], keys) -> list[dict]:
    groups: dict = {}
    for r in runs:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    table = []
    for key, rs in groups.items():
        row = dict(zip(keys, key))
        row["runs"] = len(rs)
        for m in BREAKDOWN_FIELDS:
            vals = np.array([r[m] for r in rs])
            row[f"{m}_mean"] = float(math.fsum(vals) / len(vals))
            row[f"{m}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        table.append(row)
    return table


def run_neighbor_sweep(cfg: ExperimentConfig):
    p = cfg.params
    n = int(p.get("n", 10))
    R, d = float(p.get("R", 1.0)), int(p.get("d", 1))
    lam = float(p.get("lambda", 0.1))
    runs = []
    for k in p.get("k", list(range(6))):
        model, trust = ring_topology(n, k, p_good=p.get("p_good", 0.9), p_other=p.get("p_other", 0.1), sole_good=True,
                                     p_c=p.get("p_c", 0.9), eps_ngbr=p.get("eps_ngbr", 1e3),
                                     eps_other=p.get("eps_other", 1.0), delta=p.get("delta", 1e-3))
        for s in _seeds(cfg, p.get("seeds", 4)):
            opt = dict(p.get("optimizer", {}))
            opt.setdefault("max_iters", 20_000)
            ocfg = build_optimizer({**opt, "lam": lam, "seed": s}, s)
            tr = optimize(model, trust, R, d, ocfg)
            runs.append({"k": k, "seed": s, "iterations": len(tr.objective) - 1,
                         **_breakdown(model, tr.scheme, R, d, lam, ocfg.bias_norm)})
    table = _aggregate(runs, ("k",))
    return ({"neighbor_sweep.csv": to_csv(table, TABLE_FIELDS(("k",))),
             "neighbor_sweep_runs.csv": to_csv(runs, ("k", "seed", "iterations", *BREAKDOWN_FIELDS))},
            {"rows": table})


def run_mse_sweep(cfg: ExperimentConfig):
    """Optimized MSE and PIV as the privacy level toward untrusted nodes varies."""
    p = cfg.params
    n = int(p.get("n", 10))
    R, d = float(p.get("R", 1.0)), int(p.get("d", 1))
    lam = float(p.get("lambda", 0.1))
    runs = []
    for eo in p.get("eps_other", [0.1, 1.0, 10.0, 100.0]):
        model, trust = ring_topology(n, p.get("k_hops", 1), p=p.get("p", TABLE_P), p_c=p.get("p_c", 0.9),
                                     eps_ngbr=p.get("eps_ngbr", 1e3), eps_other=eo, delta=p.get("delta", 1e-3))
        for s in _seeds(cfg, p.get("seeds", 4)):
            opt = dict(p.get("optimizer", {}))
            opt.setdefault("max_iters", 20_000)
            ocfg = build_optimizer({**opt, "lam": lam, "seed": s}, s)
            tr = optimize(model, trust, R, d, ocfg)
            runs.append({"eps_other": eo, "seed": s, **_breakdown(model, tr.scheme, R, d, lam, ocfg.bias_norm)})
    table = _aggregate(runs, ("eps_other",))
    return {"mse_sweep.csv": to_csv(table, TABLE_FIELDS(("eps_other",)))}, {"rows": table}


ER_FIELDS = ("n", "m", "p", "q", "eps", "delta", "R", "d", "lambda", "alpha", "gamma", "sigma", "objective",
             "mse_lambda_inf", "no_collab_mse")


def run_er(cfg: ExperimentConfig):
    p = cfg.params
    rows = []
    for g in p.get("grid", [{"n": 10, "m": 2, "p": 0.5, "q": 0.9}]):
        for lam in p.get("lambda", [0.1, 1.0, 10.0, "inf"]):
            lam_v = math.inf if lam in ("inf", math.inf) else float(lam)
            c = er.ErConfig(n=g["n"], m=g["m"], p=g["p"], q=g["q"], eps=g.get("eps", p.get("eps", 1.0)),
                            delta=g.get("delta", p.get("delta", 1e-3)), R=g.get("R", p.get("R", 1.0)),
                            d=g.get("d", p.get("d", 1)), lam=lam_v)
            a, gm, sg = er.closed_form(c)
            nc = er.no_collab_mse(c, p.get("q_prime", 1e-3))
            rows.append({"n": c.n, "m": c.m, "p": c.p, "q": c.q, "eps": c.eps, "delta": c.delta, "R": c.R, "d": c.d,
                         "lambda": "inf" if math.isinf(lam_v) else lam_v, "alpha": a, "gamma": gm, "sigma": sg,
                         "objective": er.symmetric_objective(c, a, gm, sg), "mse_lambda_inf": er.mse_at_lambda_inf(c),
                         "no_collab_mse": nc if isinstance(nc, float) else nc.value})
    return {"er.csv": to_csv(rows, ER_FIELDS)}, {"rows": len(rows)}


def run_kmeans_exp(cfg: ExperimentConfig):
    p = dict(cfg.params)
    seeds = _seeds(cfg, p.pop("seeds", 5))
    try:
        setup = KmeansSetup(**p)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    rows = []
    for s in seeds:
        r = run_kmeans(setup, s)
        rows.append({"seed": s, "R": r.R, "relative_pricer": r.relative_pricer, "relative_no_collab": r.relative_no_collab})
    mean_p = math.fsum(r["relative_pricer"] for r in rows) / len(rows)
    mean_n = math.fsum(r["relative_no_collab"] for r in rows) / len(rows)
    summary = {"mean_relative_pricer": mean_p, "mean_relative_no_collab": mean_n, "setup": asdict(setup)}
    return {"kmeans.csv": to_csv(rows, ("seed", "R", "relative_pricer", "relative_no_collab"))}, summary


RUNNERS = {
    "optimize": run_optimize,
    "simulate": run_simulate,
    "privacy-report": run_privacy_report,
    "tradeoff-table": run_tradeoff,
    "neighbor-sweep": run_neighbor_sweep,
    "mse-sweep": run_mse_sweep,
    "er-closed-form": run_er,
    "kmeans": run_kmeans_exp,
}


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> dict:
    """Run one experiment and write its CSVs plus ``summary.json`` into ``out``.

    Returns the summary document.
    """
    files, summary = RUNNERS[cfg.kind](cfg)
    doc = {"kind": cfg.kind, "seed": cfg.seed, "trials": cfg.trials, "params": cfg.params,
           "outputs": sorted(files), "result": summary}
    doc = _jsonable(doc)
    target = out if out is not None else cfg.out
    if target is not None:
        target = Path(target)
        for name, text in files.items():
            write_atomic(target / name, text)
        write_atomic(target / "summary.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc

"""Declarative experiment configs, dispatch, and deterministic CSV/JSON output.

A config is plain JSON; identical (config, seed, version) produces
byte-identical CSV and JSON files. Wall time is tracked in memory only so it
can never leak into the outputs.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__, binning, protocols, rateregions, swdecoder
from .probkit import CapacityError, ConditionalPmf, JointPmf

KINDS = (
    "entropy",
    "osrb_sweep",
    "sw_sweep",
    "channel_code",
    "wiretap",
    "lossy",
    "synthesis",
    "berger_tung",
    "marton",
    "region",
    "nnc_bound",
    "optimize",
)


class ConfigError(ValueError):
    """Invalid experiment config; carries every violated field, not just the first."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    model: dict
    parameters: dict
    output: str
    raw: dict

    @property
    def config_hash(self) -> str:
        return canonical_hash(self.raw)


@dataclass
class SweepResult:
    columns: list[str]
    rows: list[dict]
    metadata: dict
    wall_time: float = 0.0  # in-memory only; never serialized


def canonical_hash(obj: Mapping) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON config, reporting every violated field at once."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed JSON at line {exc.lineno} col {exc.colno}: {exc.msg}"])
    if not isinstance(obj, dict):
        raise ConfigError(["config must be a JSON object"])
    errors: list[str] = []
    kind = obj.get("kind")
    if kind not in KINDS:
        errors.append(f"kind: must be one of {list(KINDS)}, got {kind!r}")
    if "seed" not in obj:
        errors.append("seed: required (no implicit entropy source)")
    elif not isinstance(obj["seed"], int):
        errors.append("seed: must be an integer")
    model = obj.get("model", {})
    params = obj.get("parameters", {})
    if not isinstance(model, dict):
        errors.append("model: must be an object")
        model = {}
    if not isinstance(params, dict):
        errors.append("parameters: must be an object")
        params = {}
    if kind in KINDS:
        errors.extend(_validate_kind(kind, model, params))
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        kind=kind,
        seed=obj["seed"],
        model=model,
        parameters=params,
        output=obj.get("output", "osrb_out"),
        raw=obj,
    )


_REQUIRED: dict[str, tuple[tuple[str, tuple[str, ...]], ...]] = {
    "entropy": (("model", ("pmf",)), ("parameters", ("target",))),
    "osrb_sweep": (("model", ("pmf",)), ("parameters", ("sources", "rates", "n_list"))),
    "sw_sweep": (("model", ("pmf",)), ("parameters", ("sources", "rates", "n_list", "trials"))),
    "channel_code": (("model", ("input_pmf", "channel")), ("parameters", ("R", "Rt", "n_list"))),
    "wiretap": (("model", ("input_pmf", "channel")), ("parameters", ("R", "Rt", "n_list"))),
    "lossy": (("model", ("source", "channel", "distortion")), ("parameters", ("R", "Rt", "n_list"))),
    "synthesis": (
        ("model", ("source", "aux", "output")),
        ("parameters", ("R0", "R1", "Rt", "n_list")),
    ),
    "berger_tung": (
        ("model", ("source", "aux1", "aux2", "xhat1", "xhat2", "d1", "d2")),
        ("parameters", ("rates", "n_list")),
    ),
    "marton": (
        ("model", ("aux_pmf", "x_map", "channel")),
        ("parameters", ("rates", "aux_rates", "n_list")),
    ),
    "region": (("model", ("pmf",)), ("parameters", ("problem",))),
    "nnc_bound": (("model", ("pmf",)), ()),
    "optimize": (("model", ("problem",)), ("parameters", ("aux_sizes", "budget"))),
}


def _validate_kind(kind: str, model: dict, params: dict) -> list[str]:
    errors = []
    for section, keys in _REQUIRED[kind]:
        src = model if section == "model" else params
        for key in keys:
            if key not in src:
                errors.append(f"{section}.{key}: required for kind {kind!r}")
    if "n_list" in params:
        nl = params["n_list"]
        if not isinstance(nl, list) or not nl:
            errors.append("parameters.n_list: must be a nonempty list")
        elif not all(isinstance(n, int) and n >= 1 for n in nl):
            errors.append("parameters.n_list: entries must be integers >= 1")
    return errors


def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.12g}"
    if isinstance(x, (list, tuple)):
        return ";".join(_fmt(v) for v in x)
    return str(x)


def write_outputs(result: SweepResult, prefix: str) -> tuple[str, str]:
    """Write {prefix}.csv and {prefix}.json; both byte-deterministic."""
    csv_path, json_path = f"{prefix}.csv", f"{prefix}.json"
    lines = [",".join(result.columns)]
    for row in result.rows:
        lines.append(",".join(_fmt(row.get(c)) for c in result.columns))
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    payload = {"metadata": result.metadata, "columns": result.columns, "rows": result.rows}
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return csv_path, json_path


def run(config: ExperimentConfig, threads: int = 1) -> SweepResult:
    """Dispatch to the module operations; deterministic for a fixed config."""
    t0 = time.monotonic()
    runner = _RUNNERS[config.kind]
    columns, rows = runner(config, max(1, threads))
    rows = _sorted_rows(rows)
    result = SweepResult(
        columns=columns,
        rows=rows,
        metadata={
            "kind": config.kind,
            "config_hash": config.config_hash,
            "version": __version__,
            "seed": config.seed,
        },
    )
    result.wall_time = time.monotonic() - t0
    return result


def _sorted_rows(rows: list[dict]) -> list[dict]:
    def key(row: dict):
        n = row.get("n", 0)
        rates = row.get("rates", row.get("rate_label", ""))
        return (n, str(rates))

    return sorted(rows, key=key)


def _pmf(obj: Mapping) -> JointPmf:
    return JointPmf.from_dict(obj)


def _cond(obj: Mapping) -> ConditionalPmf:
    return ConditionalPmf.from_dict(obj)


def _parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# kind runners


def _run_entropy(cfg: ExperimentConfig, threads: int):
    from .probkit import entropy_conditional

    p = _pmf(cfg.model["pmf"])
    target = tuple(cfg.parameters["target"])
    given = tuple(cfg.parameters.get("given", ()))
    value = entropy_conditional(p, target, given)
    rows = [{"target": ";".join(target), "given": ";".join(given), "value_bits": value,
             "seed": cfg.seed}]
    return ["target", "given", "value_bits", "seed"], rows


def _run_osrb_sweep(cfg: ExperimentConfig, threads: int):
    p = _pmf(cfg.model["pmf"])
    params = cfg.parameters
    sources = [tuple(s) if isinstance(s, list) else (s,) for s in params["sources"]]
    rate_vectors = [list(map(float, rv)) for rv in params["rates"]]
    n_list = sorted(params["n_list"])
    mode = params.get("mode", "monte_carlo")
    trials = int(params.get("trials", 100))

    tasks = [(n, rv) for n in n_list for rv in sorted(rate_vectors)]

    def work(task):
        n, rv = task
        spec = binning.BinningSpec.from_rates(p, n, list(zip(sources, rv)), cfg.seed)
        mean, stderr = binning.expected_tv(spec, p, mode=mode, trials=trials)
        label = ";".join(f"{r:g}" for r in rv)
        return {
            "n": n,
            "rate_label": label,
            "trials": "ALL" if mode == "enumerate" else trials,
            "mean_tv": mean,
            "stderr": stderr,
            "seed": cfg.seed,
        }

    rows = _parallel_map(work, tasks, threads)
    return ["n", "rate_label", "trials", "mean_tv", "stderr", "seed"], rows


def _run_sw_sweep(cfg: ExperimentConfig, threads: int):
    p = _pmf(cfg.model["pmf"])
    params = cfg.parameters
    sources = [tuple(s) if isinstance(s, list) else (s,) for s in params["sources"]]
    rate_vectors = [list(map(float, rv)) for rv in params["rates"]]
    n_list = sorted(params["n_list"])
    trials = int(params["trials"])
    decoder = params.get("decoder", "map")
    delta = float(params.get("delta", 0.1))
    target = params.get("target", "all")

    tasks = [(n, rv) for n in n_list for rv in sorted(rate_vectors)]

    def work(task):
        n, rv = task
        spec = binning.BinningSpec.from_rates(p, n, list(zip(sources, rv)), cfg.seed)
        problem = swdecoder.SwProblem(p, spec, target=target)
        p_err, stderr = swdecoder.sw_error_prob(problem, trials, decoder=decoder, delta=delta)
        return {
            "n": n,
            "rates": ";".join(f"{r:g}" for r in rv),
            "decoder": decoder,
            "delta": delta,
            "trials": trials,
            "p_err": p_err,
            "stderr": stderr,
            "seed": cfg.seed,
        }

    rows = _parallel_map(work, tasks, threads)
    return ["n", "rates", "decoder", "delta", "trials", "p_err", "stderr", "seed"], rows


_PROTOCOL_COLUMNS = [
    "protocol", "n", "rates", "f_index", "p_err", "secrecy_tv", "synthesis_tv",
    "distortions", "seed",
]


def _protocol_row(rep: protocols.ProtocolReport, rates: Sequence[float], seed: int) -> dict:
    if rep.errors is not None:
        p_err = ";".join(f"{v:.12g}" for v in rep.errors.values())
    elif rep.error is not None:
        p_err = f"{rep.error:.12g}"
    else:
        p_err = None
    dist = None
    if rep.distortions is not None:
        dist = ";".join(f"{v:.12g}" for v in rep.distortions.values())
    return {
        "protocol": rep.protocol,
        "n": rep.n,
        "rates": ";".join(f"{r:g}" for r in rates),
        "f_index": rep.f_index if not isinstance(rep.f_index, tuple)
        else ";".join(str(v) for v in rep.f_index),
        "p_err": p_err,
        "secrecy_tv": rep.secrecy_tv,
        "synthesis_tv": rep.synthesis_tv,
        "distortions": dist,
        "seed": seed,
    }


def _run_channel_like(cfg: ExperimentConfig, threads: int):
    p_x = _pmf(cfg.model["input_pmf"])
    ch = protocols.ChannelModel(_cond(cfg.model["channel"]))
    params = cfg.parameters
    rate, aux = float(params["R"]), float(params["Rt"])
    mode = params.get("mode", "exact")
    trials = int(params.get("trials", 1000))

    def work(n):
        code = protocols.build_channel_code(p_x, ch, rate, aux, n, cfg.seed)
        rep = protocols.run_channel_code(code, mode=mode, trials=trials)
        return _protocol_row(rep, (rate, aux), cfg.seed)

    rows = _parallel_map(work, sorted(params["n_list"]), threads)
    return _PROTOCOL_COLUMNS, rows


def _run_lossy(cfg: ExperimentConfig, threads: int):
    p_x = _pmf(cfg.model["source"])
    target = _cond(cfg.model["channel"])
    d = np.asarray(cfg.model["distortion"], dtype=np.float64)
    params = cfg.parameters
    rate, aux = float(params["R"]), float(params["Rt"])
    mode = params.get("mode", "exact")
    trials = int(params.get("trials", 1000))

    def work(n):
        rep = protocols.run_lossy(p_x, target, d, rate, aux, n, cfg.seed,
                                  mode=mode, trials=trials)
        return _protocol_row(rep, (rate, aux), cfg.seed)

    rows = _parallel_map(work, sorted(params["n_list"]), threads)
    return _PROTOCOL_COLUMNS, rows


def _run_synthesis(cfg: ExperimentConfig, threads: int):
    p_x = _pmf(cfg.model["source"])
    aux = _cond(cfg.model["aux"])
    out = _cond(cfg.model["output"])
    params = cfg.parameters
    r0, r1, rt = float(params["R0"]), float(params["R1"]), float(params["Rt"])

    def work(n):
        rep = protocols.run_synthesis(p_x, aux, out, r0, r1, rt, n, cfg.seed)
        return _protocol_row(rep, (r0, r1, rt), cfg.seed)

    rows = _parallel_map(work, sorted(params["n_list"]), threads)
    return _PROTOCOL_COLUMNS, rows


def _run_berger_tung(cfg: ExperimentConfig, threads: int):
    src = _pmf(cfg.model["source"])
    aux1, aux2 = _cond(cfg.model["aux1"]), _cond(cfg.model["aux2"])
    xhat1 = np.asarray(cfg.model["xhat1"], dtype=np.int64)
    xhat2 = np.asarray(cfg.model["xhat2"], dtype=np.int64)
    d1 = np.asarray(cfg.model["d1"], dtype=np.float64)
    d2 = np.asarray(cfg.model["d2"], dtype=np.float64)
    rates = tuple(float(r) for r in cfg.parameters["rates"])

    def work(n):
        rep = protocols.run_berger_tung(src, aux1, aux2, xhat1, xhat2, d1, d2,
                                        rates, n, cfg.seed)
        return _protocol_row(rep, rates, cfg.seed)

    rows = _parallel_map(work, sorted(cfg.parameters["n_list"]), threads)
    return _PROTOCOL_COLUMNS, rows


def _run_marton(cfg: ExperimentConfig, threads: int):
    p_u = _pmf(cfg.model["aux_pmf"])
    x_map = _cond(cfg.model["x_map"])
    ch = protocols.ChannelModel(_cond(cfg.model["channel"]))
    rates = tuple(float(r) for r in cfg.parameters["rates"])
    aux_rates = tuple(float(r) for r in cfg.parameters["aux_rates"])

    def work(n):
        rep = protocols.run_wiretap_bc(p_u, x_map, ch, rates, aux_rates, n, cfg.seed)
        return _protocol_row(rep, rates + aux_rates, cfg.seed)

    rows = _parallel_map(work, sorted(cfg.parameters["n_list"]), threads)
    return _PROTOCOL_COLUMNS, rows


def _run_region(cfg: ExperimentConfig, threads: int):
    p = _pmf(cfg.model["pmf"])
    problem = cfg.parameters["problem"]
    sys = rateregions.build_region(problem, p)
    for var in cfg.parameters.get("eliminate", []):
        sys = rateregions.fme_eliminate(sys, var)
    rows = []
    for q in sys.inequalities:
        rows.append({
            "problem": problem,
            "tag": q.tag,
            "coeffs": ";".join(f"{v}:{c}" for v, c in q.coeffs),
            "sense": q.sense,
            "bound": q.bound,
            "seed": cfg.seed,
        })
    cols = ["problem", "tag", "coeffs", "sense", "bound", "seed"]
    return cols, rows


def _run_nnc(cfg: ExperimentConfig, threads: int):
    p = _pmf(cfg.model["pmf"])
    rate = rateregions.nnc_wiretap_rate(p)
    return ["rate_bits", "seed"], [{"rate_bits": rate, "seed": cfg.seed}]


def _run_optimize(cfg: ExperimentConfig, threads: int):
    problem = cfg.model["problem"]
    model: dict = {}
    if problem == "wiretap":
        model["channel"] = _cond(cfg.model["channel"])
        model["fix_u_eq_x"] = bool(cfg.model.get("fix_u_eq_x", False))
    elif problem == "berger_tung":
        model["source"] = _pmf(cfg.model["source"])
        model["d1"] = cfg.model["d1"]
        model["d2"] = cfg.model["d2"]
        model["D1"] = cfg.model["D1"]
        model["D2"] = cfg.model["D2"]
    else:
        raise ConfigError([f"model.problem: unsupported optimize target {problem!r}"])
    spec = rateregions.AuxSearchSpec(
        aux_sizes=tuple(cfg.parameters["aux_sizes"]),
        budget=int(cfg.parameters["budget"]),
        objective=cfg.parameters.get("objective", "default"),
        seed=cfg.seed,
    )
    res = rateregions.optimize_aux(problem, model, spec)
    row = {
        "problem": problem,
        "feasible": res.feasible,
        "value": res.value,
        "evaluated": res.evaluated,
        "partial": res.partial,
        "seed": cfg.seed,
    }
    return ["problem", "feasible", "value", "evaluated", "partial", "seed"], [row]


_RUNNERS: dict[str, Callable] = {
    "entropy": _run_entropy,
    "osrb_sweep": _run_osrb_sweep,
    "sw_sweep": _run_sw_sweep,
    "channel_code": _run_channel_like,
    "wiretap": _run_channel_like,
    "lossy": _run_lossy,
    "synthesis": _run_synthesis,
    "berger_tung": _run_berger_tung,
    "marton": _run_marton,
    "region": _run_region,
    "nnc_bound": _run_nnc,
    "optimize": _run_optimize,
}

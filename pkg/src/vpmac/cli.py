"""Command-line front end: scenario configs, preset experiments, CSV output.

Scenario files are JSON with a versioned ``schema`` key; unknown keys are
rejected.  Every CSV is written together with a ``<name>.meta.json`` sidecar
carrying the schema version, the resolved design constants and the analytic
reference values (equilibrium and optimal probabilities/utilities) so that
downstream plotting never recomputes anything.

Verbs:
    design  print the design constants for a channel/utility pair
    table   equilibrium/baseline utility tables over a range of user counts
    run     simulate one scenario and emit its trace
    sweep   run one scenario under several consecutive seeds
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from . import channel as chn
from . import sim, theory
from .mac import FeedbackMode, StepSchedule
from .sim import EstimatorConfig, NetworkEvent, Scenario

SCENARIO_SCHEMA = "vpmac-scenario/1"
META_SCHEMA = "vpmac-meta/1"

TRACE_COLUMNS = (
    "slot",
    "n_active",
    "p_mean",
    "p_min",
    "p_max",
    "q_v",
    "q_k_mean",
    "i_v",
    "n_transmitted",
    "utility_sample",
    "utility_ema",
)
TABLE_COLUMNS = ("K", "p_opt", "p_star", "p_baseline", "U_opt", "U_star", "U_baseline")
SERIES_COLUMNS = ("slot", "p_mean", "p_std", "utility_mean", "utility_std", "q_v_mean", "q_v_std")
SUMMARY_COLUMNS = ("statistic", "mean", "std", "n_seeds")

_EX2_STATES = ((0.3, 4), (0.7, 6))
_EX2_ENERGY = 0.3
_EPSILON_V = 0.01
_B_MARGIN = 0.01
_PRESET_SEEDS = {"ex3": 31, "ex4": 41, "ex5": 51}


@dataclass(frozen=True)
class TableJob:
    """Analytic table request: no simulation, one row per user count."""

    name: str
    channel: chn.ChannelModel
    utility: theory.UtilitySpec
    baseline: str
    k_range: tuple[int, ...]


def _fmt(x) -> str:
    return f"{x:.9g}" if isinstance(x, float) else str(x)


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")


def _channel_from_dict(obj: dict) -> chn.ChannelModel:
    if not obj:
        raise ValueError("channel spec is empty; expected a 'kind' entry")
    kind = obj.get("kind")
    if kind == "collision":
        _check_keys(obj, {"kind"}, "channel")
        return chn.Collision()
    if kind == "threshold_fading":
        _check_keys(obj, {"kind", "states"}, "channel")
        return chn.ThresholdFading(tuple((p, m) for p, m in obj["states"]))
    if kind == "parametric":
        _check_keys(obj, {"kind", "c_real", "c_virtual"}, "channel")
        return chn.Parametric(
            chn.ChannelParams(tuple(obj["c_real"]), tuple(obj["c_virtual"]))
        )
    raise ValueError(f"unknown channel kind: {kind!r}")


def _channel_to_dict(model: chn.ChannelModel) -> dict:
    if isinstance(model, chn.Collision):
        return {"kind": "collision"}
    if isinstance(model, chn.ThresholdFading):
        return {"kind": "threshold_fading", "states": [list(s) for s in model.states]}
    if isinstance(model, chn.Parametric):
        return {
            "kind": "parametric",
            "c_real": list(model.params.c_real),
            "c_virtual": list(model.params.c_virtual),
        }
    raise TypeError(f"unknown channel model: {model!r}")


_SCENARIO_KEYS = {
    "schema",
    "channel",
    "utility",
    "mode",
    "schedule",
    "estimator",
    "horizon",
    "initial_k",
    "initial_p",
    "seed",
    "epsilon_v",
    "b_margin",
    "events",
    "utility_ema_weight",
    "stride",
    "summary_window",
}


def scenario_from_dict(obj: dict) -> Scenario:
    _check_keys(obj, _SCENARIO_KEYS, "scenario")
    schema = obj.get("schema")
    if schema != SCENARIO_SCHEMA:
        raise ValueError(
            f"unsupported scenario schema: {schema!r} (want {SCENARIO_SCHEMA})"
        )
    missing = {"channel", "mode", "schedule", "estimator", "horizon", "initial_k"} - set(obj)
    if missing:
        raise ValueError(f"scenario is missing required keys: {sorted(missing)}")
    util = obj.get("utility", {})
    _check_keys(util, {"kind", "energy_cost"}, "utility")
    sched = obj["schedule"]
    _check_keys(sched, {"kind", "alpha", "a", "c"}, "schedule")
    est = obj["estimator"]
    _check_keys(est, {"kind", "weight", "window", "initial_value"}, "estimator")
    events = []
    for ev in obj.get("events", []):
        _check_keys(ev, {"slot", "kind", "count"}, "event")
        events.append(NetworkEvent(ev["slot"], ev["kind"], ev["count"]))
    return Scenario(
        channel=_channel_from_dict(obj["channel"]),
        utility=theory.UtilitySpec(
            util.get("kind", "sum_throughput"), util.get("energy_cost", 0.0)
        ),
        mode=FeedbackMode(obj["mode"]),
        schedule=StepSchedule(
            sched["kind"], alpha=sched.get("alpha"), a=sched.get("a"), c=sched.get("c")
        ),
        estimator=EstimatorConfig(
            est["kind"],
            weight=est.get("weight"),
            window=est.get("window"),
            initial_value=est.get("initial_value", 1.0),
        ),
        horizon=obj["horizon"],
        initial_k=obj["initial_k"],
        initial_p=obj.get("initial_p", 0.0),
        seed=obj.get("seed", 0),
        epsilon_v=obj.get("epsilon_v", _EPSILON_V),
        b_margin=obj.get("b_margin", _B_MARGIN),
        events=tuple(events),
        utility_ema_weight=obj.get("utility_ema_weight"),
        stride=obj.get("stride", 1),
        summary_window=obj.get("summary_window", 500),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    sched: dict = {"kind": scenario.schedule.kind}
    if scenario.schedule.kind == "constant":
        sched["alpha"] = scenario.schedule.alpha
    else:
        sched["a"] = scenario.schedule.a
        sched["c"] = scenario.schedule.c
    est: dict = {
        "kind": scenario.estimator.kind,
        "initial_value": scenario.estimator.initial_value,
    }
    if scenario.estimator.kind == "ema":
        est["weight"] = scenario.estimator.weight
    else:
        est["window"] = scenario.estimator.window
    return {
        "schema": SCENARIO_SCHEMA,
        "channel": _channel_to_dict(scenario.channel),
        "utility": {
            "kind": scenario.utility.kind,
            "energy_cost": scenario.utility.energy_cost,
        },
        "mode": scenario.mode.value,
        "schedule": sched,
        "estimator": est,
        "horizon": scenario.horizon,
        "initial_k": scenario.initial_k,
        "initial_p": scenario.initial_p,
        "seed": scenario.seed,
        "epsilon_v": scenario.epsilon_v,
        "b_margin": scenario.b_margin,
        "events": [asdict(ev) for ev in scenario.events],
        "utility_ema_weight": scenario.utility_ema_weight,
        "stride": scenario.stride,
        "summary_window": scenario.summary_window,
    }


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


# ---------------------------------------------------------------------------
# preset experiments


def _convergence_scenario(
    mode: FeedbackMode, seed: int, horizon: int, events=()
) -> Scenario:
    return Scenario(
        channel=chn.ThresholdFading(_EX2_STATES),
        utility=theory.UtilitySpec.energy_weighted(_EX2_ENERGY),
        mode=mode,
        schedule=StepSchedule.constant(0.05),
        estimator=EstimatorConfig.ema(1.0 / 300.0, initial_value=1.0),
        horizon=horizon,
        initial_k=8,
        initial_p=0.0,
        seed=seed,
        epsilon_v=_EPSILON_V,
        b_margin=_B_MARGIN,
        events=tuple(events),
    )


def preset(name: str):
    """Named jobs for the five bundled experiments.

    ex1/ex2: analytic equilibrium/baseline tables over K = 1..30 (collision
    channel with the idle-tracking comparison; threshold fading channel with
    the idle-probability baseline).  ex3: 8 users, receiver feedback, EMA
    1/300, constant step 0.05.  ex4: same but one-step own-success feedback.
    ex5: ex4 plus 7 joiners at slot 3001 and 5 leavers at slot 6001.
    """
    if name == "ex1":
        return TableJob(
            name="ex1",
            channel=chn.Collision(),
            utility=theory.UtilitySpec.sum_throughput(),
            baseline="hajek",
            k_range=tuple(range(1, 31)),
        )
    if name == "ex2":
        return TableJob(
            name="ex2",
            channel=chn.ThresholdFading(_EX2_STATES),
            utility=theory.UtilitySpec.energy_weighted(_EX2_ENERGY),
            baseline="idle_target",
            k_range=tuple(range(1, 31)),
        )
    if name == "ex3":
        return _convergence_scenario(FeedbackMode.RECEIVER, _PRESET_SEEDS["ex3"], 3000)
    if name == "ex4":
        return _convergence_scenario(FeedbackMode.ONE_STEP, _PRESET_SEEDS["ex4"], 3000)
    if name == "ex5":
        return _convergence_scenario(
            FeedbackMode.ONE_STEP,
            _PRESET_SEEDS["ex5"],
            9000,
            events=(NetworkEvent(3001, "join", 7), NetworkEvent(6001, "leave", 5)),
        )
    raise ValueError(f"unknown preset: {name!r} (expected ex1..ex5)")


def build_table(job: TableJob) -> tuple[theory.MacDesign, list[dict]]:
    params = chn.derive_params(job.channel)
    design = theory.build_design(
        params, job.utility, epsilon_v=_EPSILON_V, b_margin=_B_MARGIN
    )
    rows = []
    for k in job.k_range:
        p_opt = theory.optimal_p(k, params, job.utility)
        p_star = design.equilibrium_p(k)
        if job.baseline == "hajek":
            p_base = theory.hajek_pa(k)
        elif job.baseline == "idle_target":
            p_base = theory.idle_target_p(k, design.x_star)
        else:
            raise ValueError(f"unknown baseline: {job.baseline!r}")

        def u(p: float) -> float:
            return theory.utility_finite(k, p, params, job.utility)

        row = {
            "K": k,
            "p_opt": p_opt,
            "p_star": p_star,
            "p_baseline": p_base,
            "U_opt": u(p_opt),
            "U_star": u(p_star),
            "U_baseline": u(p_base),
        }
        if row["U_opt"] < max(row["U_star"], row["U_baseline"]) - 1e-12:
            raise ValueError(f"table row K={k} violates optimality of p_opt")
        rows.append(row)
    return design, rows


# ---------------------------------------------------------------------------
# CSV + metadata emission


def _write_csv(path: Path, columns: tuple[str, ...], rows) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def meta_path_for(csv_path: str | Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_suffix(csv_path.suffix + ".meta.json")


def _write_meta(csv_path: Path, meta: dict) -> None:
    meta_path_for(csv_path).write_text(
        json.dumps({"schema": META_SCHEMA, **meta}, indent=2) + "\n"
    )


def _design_dict(design: theory.MacDesign) -> dict:
    return {
        "x_star": design.x_star,
        "epsilon_v": design.epsilon_v,
        "j_ev": design.j_ev,
        "gamma_ev": design.gamma_ev,
        "b": design.b,
        "p_max": design.p_max,
    }


def _stage_list(scenario: Scenario, design: theory.MacDesign) -> list[dict]:
    """Population stages between join/leave events, with per-stage references."""
    params = design.params
    stages = []
    k = scenario.initial_k
    start = 1
    for ev in list(scenario.events) + [None]:
        end = scenario.horizon if ev is None else ev.slot - 1
        if end >= start:
            p_star = design.equilibrium_p(k)
            p_opt = theory.optimal_p(k, params, design.utility)
            stages.append(
                {
                    "start_slot": start,
                    "end_slot": end,
                    "k": k,
                    "p_star": p_star,
                    "p_opt": p_opt,
                    "u_star": theory.utility_finite(k, p_star, params, design.utility),
                    "u_opt": theory.utility_finite(k, p_opt, params, design.utility),
                }
            )
        if ev is None:
            break
        start = ev.slot
        k += ev.count if ev.kind == "join" else -ev.count
    return stages


def emit_trace(trace: sim.SimTrace, path: str | Path) -> Path:
    """Write one run's trace CSV plus its metadata sidecar (1-based slots)."""
    path = Path(path)
    rows = []
    for rec in trace.records:
        row = asdict(rec)
        row["slot"] += 1
        rows.append(row)
    _write_csv(path, TRACE_COLUMNS, rows)
    _write_meta(
        path,
        {
            "kind": "trace",
            "columns": list(TRACE_COLUMNS),
            "scenario": scenario_to_dict(trace.scenario),
            "design": _design_dict(trace.design),
            "stages": _stage_list(trace.scenario, trace.design),
            "summary": asdict(trace.summary),
            "leave_policy": "uniform_random_among_active",
        },
    )
    return path


def emit_table(job: TableJob, path: str | Path) -> Path:
    path = Path(path)
    design, rows = build_table(job)
    _write_csv(path, TABLE_COLUMNS, rows)
    _write_meta(
        path,
        {
            "kind": "table",
            "columns": list(TABLE_COLUMNS),
            "preset": job.name,
            "baseline": job.baseline,
            "channel": _channel_to_dict(job.channel),
            "utility": {"kind": job.utility.kind, "energy_cost": job.utility.energy_cost},
            "design": _design_dict(design),
        },
    )
    return path


def emit_sweep(result: sim.SweepResult, out_dir: str | Path, stem: str) -> list[Path]:
    """Per-run traces, the across-seed series, and a final-summary CSV."""
    out_dir = Path(out_dir)
    written = []
    for seed, trace in zip(result.seeds, result.traces):
        written.append(emit_trace(trace, out_dir / f"{stem}_seed{seed}.csv"))

    design = result.traces[0].design
    stats = result.final_stats()
    meta = {
        "kind": "sweep",
        "seeds": list(result.seeds),
        "scenario": scenario_to_dict(result.scenario),
        "design": _design_dict(design),
        "stages": _stage_list(result.scenario, design),
        "final_stats": {k: {"mean": m, "std": s} for k, (m, s) in stats.items()},
    }

    series_path = out_dir / f"{stem}_series.csv"
    series_rows = [
        {
            "slot": int(result.slots[i]) + 1,
            "p_mean": float(result.p_mean[i]),
            "p_std": float(result.p_std[i]),
            "utility_mean": float(result.utility_mean[i]),
            "utility_std": float(result.utility_std[i]),
            "q_v_mean": float(result.q_v_mean[i]),
            "q_v_std": float(result.q_v_std[i]),
        }
        for i in range(len(result.slots))
    ]
    _write_csv(series_path, SERIES_COLUMNS, series_rows)
    _write_meta(series_path, {**meta, "columns": list(SERIES_COLUMNS)})
    written.append(series_path)

    summary_path = out_dir / f"{stem}_summary.csv"
    summary_rows = [
        {"statistic": name, "mean": mean, "std": std, "n_seeds": len(result.seeds)}
        for name, (mean, std) in stats.items()
    ]
    _write_csv(summary_path, SUMMARY_COLUMNS, summary_rows)
    _write_meta(summary_path, {**meta, "columns": list(SUMMARY_COLUMNS)})
    written.append(summary_path)
    return written


# ---------------------------------------------------------------------------
# entry point


def _scenario_for(args) -> Scenario:
    if getattr(args, "preset", None):
        job = preset(args.preset)
        if isinstance(job, TableJob):
            raise ValueError(
                f"preset {args.preset!r} is a table job; use the 'table' verb"
            )
        scenario = job
    elif getattr(args, "config", None):
        scenario = load_scenario(args.config)
    else:
        raise ValueError("either --preset or --config is required")
    if getattr(args, "stride", None) is not None:
        scenario = replace(scenario, stride=args.stride)
    return scenario


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vpmac",
        description="Distributed multiple-access simulator and analytic toolkit",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_design = sub.add_parser("design", help="print design constants")
    p_design.add_argument("--config", help="scenario JSON file")
    p_design.add_argument("--preset", help="preset name (ex1..ex5)")

    p_table = sub.add_parser("table", help="write an equilibrium/baseline table")
    p_table.add_argument("--preset", required=True, help="ex1 or ex2")
    p_table.add_argument("--out", required=True, help="output directory")

    for name in ("run", "sweep"):
        sp = sub.add_parser(
            name,
            help="simulate one scenario" if name == "run" else "simulate under several seeds",
        )
        sp.add_argument("--config", help="scenario JSON file")
        sp.add_argument("--preset", help="preset name (ex3..ex5)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--stride", type=int, default=None, help="record every k-th slot")
        if name == "sweep":
            sp.add_argument("--seeds", type=int, default=10, help="number of seeds")

    args = parser.parse_args(argv)
    try:
        if args.verb == "design":
            if args.preset and isinstance(preset(args.preset), TableJob):
                job = preset(args.preset)
                design = theory.build_design(
                    chn.derive_params(job.channel),
                    job.utility,
                    epsilon_v=_EPSILON_V,
                    b_margin=_B_MARGIN,
                )
            else:
                design = _scenario_for(args).resolve_design()
            print(json.dumps(_design_dict(design), indent=2))
        elif args.verb == "table":
            job = preset(args.preset)
            if not isinstance(job, TableJob):
                raise ValueError(f"preset {args.preset!r} is not a table preset")
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            print(emit_table(job, out_dir / f"{job.name}_table.csv"))
        elif args.verb == "run":
            scenario = _scenario_for(args)
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            stem = args.preset or Path(args.config).stem
            print(emit_trace(sim.run(scenario), out_dir / f"{stem}_trace.csv"))
        elif args.verb == "sweep":
            scenario = _scenario_for(args)
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            stem = args.preset or Path(args.config).stem
            for path in emit_sweep(sim.run_many(scenario, args.seeds), out_dir, stem):
                print(path)
    except (ValueError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: scenario runs, verification suites, scenario listing.

Every run computes all artifacts in memory first and only then writes them,
so a failure never leaves partial output behind. Artifacts are CSV tables
plus a metrics.json with fixed key names; command-line overrides are echoed
into the metrics for provenance.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .checks import SUITES, run_suite
from .converter_model import (
    ConverterNetworkParams,
    LoadEvent,
    run_converter,
    settle_nominal_state,
    state_slices,
)
from .errors import AngleDroopError, ScenarioError
from .linear_analysis import (
    LinearizedSystem,
    coherence_angular,
    coherence_frequency,
    linear_rhs,
)
from .netgraph import laplacian_eigenvalues
from .reduced_model import ReducedSystem
from .scenarios import (
    BUILTINS,
    GRAPH_KINDS,
    apply_overrides,
    build_graph,
    builtin_names,
    load_scenario,
    validate_scenario,
)
from .sim_engine import settle_metrics, simulate, write_csv


def _finite_or_none(value):
    value = float(value)
    return value if math.isfinite(value) else None


def _run_converter_scenario(scn):
    graph = build_graph(scn["graph"])
    params = ConverterNetworkParams(graph=graph, **scn.get("converter", {}))
    settle_cfg = scn.get("settle", {})
    y_nom, p_ref = settle_nominal_state(
        params,
        dt=float(settle_cfg.get("dt", scn["dt"])),
        cycles=int(settle_cfg.get("cycles", 3)),
    )
    n, m = graph.n, graph.m
    s_vdc, _, _, _, s_th = state_slices(n, m)
    x0 = y_nom.copy()
    init = scn.get("initial", {})
    if "theta" in init:
        x0[s_th] = np.broadcast_to(np.asarray(init["theta"], dtype=float), (n,))
    events = tuple(
        LoadEvent(ev["node"], ev["delta_g"], ev["t_on"], ev["t_off"])
        for ev in scn.get("events", [])
    )
    traj = run_converter(
        params, x0, p_ref, scn["dt"], scn["horizon"], events=events,
        record_stride=scn.get("record_stride", 1),
    )
    freq = traj.meta["freq"]
    p_hat = traj.meta["p_hat"]
    header = ["t"]
    columns = [traj.times]
    for label, block in (
        ("theta", traj.states[:, s_th]),
        ("freq", freq),
        ("v_dc", traj.states[:, s_vdc]),
        ("p_hat", p_hat),
    ):
        for k in range(n):
            header.append(f"{label}_{k + 1}")
            columns.append(block[:, k])
    sm = settle_metrics(traj.times, freq, params.omega_nom, tol=1e-2)
    metrics = {
        "freq_error_final": float(np.abs(freq[-1] - params.omega_nom).max()),
        "freq_settled": sm.settled,
        "settle_time_s": _finite_or_none(sm.settle_time),
        "vdc_min": float(traj.states[:, s_vdc].min()),
        "vdc_max": float(traj.states[:, s_vdc].max()),
        "p_ref": [float(v) for v in p_ref],
        "theta_offset_final": [
            float(v)
            for v in traj.states[-1, s_th] - (params.omega_nom * traj.times[-1] + params.theta_nom)
        ],
    }
    summary = (
        f"converter run: {traj.times.size} records, "
        f"freq_error_final={metrics['freq_error_final']:.3e} rad/s, "
        f"v_dc in [{metrics['vdc_min']:.1f}, {metrics['vdc_max']:.1f}] V"
    )
    return [("traj_converter.csv", "csv", (header, columns))], metrics, summary


def _run_reduced_scenario(scn):
    graph = build_graph(scn["graph"])
    sys_r = ReducedSystem(
        graph,
        alpha=scn["alpha"],
        gamma=scn["gamma"],
        theta_nom=scn["theta_nom"],
        p_disturbance=scn.get("p_disturbance", 0.0),
    )
    controller = scn.get("controller", "angular")
    theta0 = np.broadcast_to(
        np.asarray(scn.get("initial", {}).get("theta", sys_r.theta_nom), dtype=float),
        (graph.n,),
    )
    traj = simulate(
        lambda t, x: sys_r.closed_loop_rhs(x, controller=controller),
        theta0, scn["dt"], scn["horizon"],
        record_stride=scn.get("record_stride", 1), model_id="reduced",
    )
    header = ["t"] + [f"theta_{k + 1}" for k in range(graph.n)]
    columns = [traj.times] + [traj.states[:, k] for k in range(graph.n)]
    rate_final = sys_r.closed_loop_rhs(traj.states[-1], controller=controller)
    metrics = {"freq_error_final": float(np.abs(rate_final).max())}
    if controller == "angular":
        ss = sys_r.induced_steady_state()
        sm = settle_metrics(traj.times, traj.states, ss.theta_s, tol=1e-6)
        metrics.update(
            settle_time_s=_finite_or_none(sm.settle_time),
            final_error=sm.final_error,
            hjb_residual_max=float(
                max(abs(sys_r.hjb_residual(ss, th)) for th in traj.states)
            ),
            lyapunov_final=sys_r.lyapunov_value(ss, traj.states[-1]),
        )
    else:
        # first-order frequency droop: predicted uniform stationary error
        damping = sys_r.gamma
        metrics["freq_error_predicted"] = float(
            -sys_r.p_disturbance.sum() / damping.sum()
        )
    summary = (
        f"reduced run ({controller} droop): {traj.times.size} records, "
        f"freq_error_final={metrics['freq_error_final']:.3e} rad/s"
    )
    return [("traj_reduced.csv", "csv", (header, columns))], metrics, summary


def _run_linearized_scenario(scn):
    graph = build_graph(scn["graph"])
    kind = scn.get("kind", "angular")
    if kind == "angular":
        sys_l = LinearizedSystem.angular(graph, scn["alpha"], scn["gamma"])
    else:
        sys_l = LinearizedSystem.frequency(graph, scn["inertia"], scn["damping"])
    dim = sys_l.state_dim
    x0 = np.broadcast_to(
        np.asarray(scn.get("initial", {}).get("state", np.zeros(dim)), dtype=float), (dim,)
    )
    traj = simulate(
        lambda t, x: linear_rhs(sys_l, x),
        x0, scn["dt"], scn["horizon"],
        record_stride=scn.get("record_stride", 1), model_id=f"linearized-{kind}",
    )
    n = graph.n
    names = [f"theta_{k + 1}" for k in range(n)]
    if kind == "frequency":
        names += [f"omega_{k + 1}" for k in range(n)]
    header = ["t"] + names
    columns = [traj.times] + [traj.states[:, k] for k in range(dim)]
    # deviation coordinates: the angle block should contract toward agreement
    sm = settle_metrics(traj.times, traj.states[:, :n] - traj.states[:, :n].mean(axis=1)[:, None],
                        0.0, tol=1e-6)
    metrics = {
        "final_error": sm.final_error,
        "settle_time_s": _finite_or_none(sm.settle_time),
    }
    summary = f"linearized run ({kind}): {traj.times.size} records, final_error={sm.final_error:.3e}"
    return [(f"traj_linear_{kind}.csv", "csv", (header, columns))], metrics, summary


def _run_coherence_scenario(scn):
    fam = scn["graph_family"]
    make = GRAPH_KINDS[fam["kind"]]
    susceptance = float(fam.get("susceptance", 1.0))
    alpha = float(scn.get("alpha", 1.0))
    gamma = float(scn.get("gamma", 1.0))
    damping = float(scn.get("damping", 1.0))
    bound = alpha / gamma
    rows = []
    for n in sorted(set(scn["sizes"])):
        lam = laplacian_eigenvalues(make(n, susceptance))
        rows.append(
            (
                float(n),
                float(lam[1]),
                coherence_angular(alpha, gamma, lam, n).value,
                coherence_frequency(damping, lam, n).value,
                bound,
            )
        )
    data = np.array(rows)
    header = ["n", "lambda2", "coherence_angular", "coherence_frequency",
              "bound_alpha_over_gamma"]
    columns = [data[:, i] for i in range(data.shape[1])]
    metrics = {
        "coherence_value": float(data[-1, 2]),
        "bound": bound,
        "coherence_frequency_max": float(data[:, 3].max()),
        "sizes": [int(v) for v in data[:, 0]],
    }
    summary = (
        f"coherence study over n={metrics['sizes']}: angular stays at "
        f"{data[:, 2].max():.4f} <= bound {bound:.4f}, frequency droop reaches "
        f"{metrics['coherence_frequency_max']:.4f}"
    )
    return [("coherence.csv", "csv", (header, columns))], metrics, summary


_RUNNERS = {
    "converter": _run_converter_scenario,
    "reduced": _run_reduced_scenario,
    "linearized": _run_linearized_scenario,
    "coherence_study": _run_coherence_scenario,
}


def _write_artifacts(outdir, artifacts):
    os.makedirs(outdir, exist_ok=True)
    written = []
    try:
        for name, kind, payload in artifacts:
            path = os.path.join(outdir, name)
            if kind == "csv":
                header, columns = payload
                write_csv(path, header, columns)
            else:
                with open(path, "w", encoding="utf-8") as fh:
                    json.dump(payload, fh, indent=2, sort_keys=True)
                    fh.write("\n")
            written.append(path)
    except BaseException:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    return written


def _cmd_run(args):
    scn = load_scenario(args.scenario)
    apply_overrides(scn, args.overrides)
    if args.seed is not None:
        scn["seed"] = args.seed
    if args.dt is not None:
        scn["dt"] = args.dt
    if args.horizon is not None:
        scn["horizon"] = args.horizon
    validate_scenario(scn)
    artifacts, metrics, summary = _RUNNERS[scn["model"]](scn)
    metrics["scenario"] = args.scenario
    metrics["model"] = scn["model"]
    metrics["overrides"] = list(args.overrides)
    if "seed" in scn:
        metrics["seed"] = scn["seed"]
    for key in ("dt", "horizon"):
        if key in scn:
            metrics[key] = scn[key]
    artifacts = list(artifacts) + [("metrics.json", "json", metrics)]
    written = _write_artifacts(args.out, artifacts)
    for path in written:
        print(f"wrote {path}")
    print(summary)
    return 0


def _cmd_verify(args):
    results = run_suite(args.suite)
    for result in results:
        print(result.line())
    failures = [r.name for r in results if not r.passed]
    if failures:
        print(f"{len(failures)} of {len(results)} checks failed: {', '.join(failures)}")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def _cmd_list(_args):
    for name in builtin_names():
        print(f"{name}: {BUILTINS[name]['description']}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="angledroop",
        description="Simulation and analysis toolkit for angular droop control "
                    "of networked DC/AC converters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write CSV/metrics artifacts")
    run_p.add_argument("--scenario", required=True,
                       help="built-in scenario name or path to a JSON scenario file")
    run_p.add_argument("--out", default=".", help="output directory (default: current)")
    run_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a scenario entry (dotted path, JSON value); repeatable")
    run_p.add_argument("--seed", type=int, default=None, help="seed for stochastic runs")
    run_p.add_argument("--dt", type=float, default=None, help="override the step size")
    run_p.add_argument("--horizon", type=float, default=None, help="override the horizon")
    run_p.set_defaults(func=_cmd_run)

    verify_p = sub.add_parser("verify", help="run a property-check suite")
    verify_p.add_argument("suite", choices=sorted(SUITES),
                          help="which suite of seeded checks to execute")
    verify_p.set_defaults(func=_cmd_verify)

    list_p = sub.add_parser("list-scenarios", help="list built-in scenarios")
    list_p.set_defaults(func=_cmd_list)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AngleDroopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: feasibility checks, solves, benchmarks, reports.

Exit codes: 0 success, 2 argument/config parse error, 3 infeasible radius
budget, 4 solver failure.  All emitted files are UTF-8 with LF newlines and
'.' decimal separators; every JSON/CSV written here is re-readable by the
loaders in this module.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from .ambiguity import (
    AdmissibleSet,
    InfeasibleRadiusError,
    MassInterval,
    build_full,
    build_partial,
    build_pinned,
    min_radius_full,
    min_radius_partial,
    support,
)
from .conic import DEFAULT_TOL, SolveStatus
from .cutting_plane import solve_rdeu
from .distortion import DistortionFunction, cvar_mix_distortion
from .experiments import MODEL_KINDS, RunConfig, replicate, summarize
from .geometry import CostSpec, Dataset, Neighborhood, boundary_distances, partition
from .reformulations import (
    DecisionSet,
    InnerLossSpec,
    LossSpec,
    compile_distortion_q1_exponential,
    compile_expectation_general_q2,
    compile_expectation_q1,
    compile_expectation_special_q,
    compile_min_expectation,
    compile_qnorm,
    compile_shortfall,
    mean_cvar_socp,
    mean_variance_socp,
)

RISK_KINDS = (
    "expectation",
    "min_expectation",
    "qnorm",
    "shortfall",
    "mean_variance",
    "mean_cvar",
    "rdeu",
)


class CliError(Exception):
    """Fatal CLI problem carrying its exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise CliError(2, f"config file not found: {path}")
    try:
        if path.endswith(".toml"):
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (ValueError, OSError) as exc:  # includes JSON/TOML decode errors
        raise CliError(2, f"could not parse config {path}: {exc}") from exc


def _parse_floats(text: str):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise CliError(2, f"expected comma-separated numbers, got {text!r}") from exc


def _parse_nbhd(text: str) -> Neighborhood:
    """center coordinates, then radius, then ball norm: e.g. 0.1,0.1,0,1.2,l1"""
    toks = [t.strip() for t in text.split(",")]
    if len(toks) < 3:
        raise CliError(2, f"--nbhd needs x0...,radius,norm, got {text!r}")
    norm = toks[-1]
    nums = _parse_floats(",".join(toks[:-1]))
    if len(nums) < 2:
        raise CliError(2, f"--nbhd needs at least one center coordinate: {text!r}")
    try:
        return Neighborhood(np.array(nums[:-1]), nums[-1], norm)
    except ValueError as exc:
        raise CliError(2, f"bad --nbhd: {exc}") from exc


def _parse_cost(text: str) -> CostSpec:
    """x norm, y norm, exponent q: e.g. l1,l2,1"""
    toks = [t.strip() for t in text.split(",")]
    if len(toks) != 3:
        raise CliError(2, f"--cost needs x_norm,y_norm,q, got {text!r}")
    try:
        return CostSpec(x_base_norm=toks[0], y_base_norm=toks[1], q=float(toks[2]))
    except ValueError as exc:
        raise CliError(2, f"bad --cost: {exc}") from exc


def _parse_mass(text: str) -> MassInterval:
    nums = _parse_floats(text)
    if len(nums) == 1:
        nums = nums * 2
    if len(nums) != 2:
        raise CliError(2, f"--mass needs omega_lo,omega_hi, got {text!r}")
    try:
        return MassInterval(nums[0], nums[1])
    except ValueError as exc:
        raise CliError(2, f"bad --mass: {exc}") from exc


def _dataset_from_config(cfg: dict) -> Dataset:
    data = cfg.get("data")
    if data is None:
        raise CliError(2, "config needs a [data] section (path or inline arrays)")
    try:
        if "path" in data:
            return Dataset.from_csv(data["path"])
        return Dataset(
            covariates=np.asarray(data["covariates"], dtype=float),
            outcomes=np.asarray(data["outcomes"], dtype=float),
        )
    except (KeyError, OSError, ValueError) as exc:
        raise CliError(2, f"bad data section: {exc}") from exc


def _cost_from_config(cfg: dict) -> CostSpec:
    c = cfg.get("cost", {})
    try:
        return CostSpec(
            x_base_norm=c.get("x_norm", "l2"),
            y_base_norm=c.get("y_norm", "l2"),
            q=float(c.get("q", 1)),
        )
    except ValueError as exc:
        raise CliError(2, f"bad cost section: {exc}") from exc


def _neighborhood_from_config(cfg: dict) -> Neighborhood | None:
    nb = cfg.get("neighborhood")
    if nb is None:
        return None
    try:
        return Neighborhood(
            np.asarray(nb["center"], dtype=float),
            float(nb["radius"]),
            nb.get("norm", "l2"),
        )
    except (KeyError, ValueError) as exc:
        raise CliError(2, f"bad neighborhood section: {exc}") from exc


def _admissible_from_config(cfg: dict) -> tuple[AdmissibleSet, Dataset, CostSpec]:
    data = _dataset_from_config(cfg)
    cost = _cost_from_config(cfg)
    sec = cfg.get("set")
    if sec is None or "kind" not in sec:
        raise CliError(2, "config needs [set] with kind = full | partial | pinned")
    kind = sec["kind"]
    try:
        if kind == "pinned":
            return build_pinned(
                np.asarray(sec["p"], dtype=float), float(sec.get("delta", 0.0))
            ), data, cost
        if kind not in ("full", "partial"):
            raise CliError(
                2, f"unknown set kind {kind!r}; valid: full, partial, pinned"
            )
        nbhd = _neighborhood_from_config(cfg)
        if nbhd is None:
            raise CliError(2, f"set kind {kind!r} needs a [neighborhood] section")
        mass_raw = sec.get("mass")
        if mass_raw is None:
            raise CliError(2, f"set kind {kind!r} needs mass = [lo, hi]")
        mass = (
            MassInterval(float(mass_raw[0]), float(mass_raw[-1]))
            if isinstance(mass_raw, (list, tuple))
            else MassInterval(float(mass_raw), float(mass_raw))
        )
        part = boundary_distances(partition(data, nbhd), nbhd, cost)
        delta0 = float(sec["delta0"])
        builder = build_full if kind == "full" else build_partial
        return builder(part, delta0, mass), data, cost
    except InfeasibleRadiusError:
        raise
    except CliError:
        raise
    except (KeyError, ValueError) as exc:
        raise CliError(2, f"bad set section: {exc}") from exc


def _loss_from_config(sec: dict) -> LossSpec:
    kind = sec.get("kind", "affine")
    scale = float(sec.get("scale", 1.0))
    wrap = sec.get("wrap_power")
    wrap = None if wrap in (None, 0, 1) else float(wrap)
    try:
        if kind == "affine":
            return LossSpec.affine(float(sec.get("a", 1.0)), float(sec.get("b", 0.0)),
                                   scale=scale)
        if kind == "abs":
            return LossSpec.abs_loss(float(sec.get("b1", 0.0)),
                                     float(sec.get("b2", 0.0)),
                                     scale=scale, wrap_power=wrap)
        if kind == "hinge_plus":
            return LossSpec.hinge_plus(float(sec.get("b", 0.0)), scale=scale,
                                       wrap_power=wrap)
        if kind == "hinge_minus":
            return LossSpec.hinge_minus(float(sec.get("b", 0.0)), scale=scale,
                                        wrap_power=wrap)
        if kind == "abs_hinge":
            return LossSpec.abs_hinge(float(sec.get("b1", 0.0)),
                                      float(sec.get("b2", 0.0)),
                                      scale=scale, wrap_power=wrap)
        if kind == "pwl":
            return LossSpec.pwl_max([(float(a), float(c)) for a, c in sec["pieces"]],
                                    scale=scale)
        if kind == "pwq":
            return LossSpec.pwq_max(
                [(float(a), float(b), float(c)) for a, b, c in sec["pieces"]],
                scale=scale)
        if kind == "power":
            return LossSpec.power(float(sec.get("p", 2.0)), scale=scale)
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(2, f"bad loss section: {exc}") from exc
    raise CliError(2, f"unknown loss kind {kind!r}")


def _decision_from_config(sec: dict, n_y: int) -> DecisionSet:
    kind = sec.get("kind", "simplex") if sec else "simplex"
    try:
        if kind == "simplex":
            return DecisionSet.unit_simplex(int(sec.get("n", n_y)))
        if kind == "free":
            return DecisionSet.free(int(sec.get("n", n_y)))
        if kind == "fixed":
            return DecisionSet.fixed(sec["alpha"])
        if kind == "box":
            return DecisionSet.box(sec["lower"], sec["upper"])
    except (KeyError, ValueError) as exc:
        raise CliError(2, f"bad decision section: {exc}") from exc
    raise CliError(2, f"unknown decision kind {kind!r}")


def _distortion_from_config(sec: dict) -> DistortionFunction:
    kind = sec.get("kind", "identity")
    try:
        if kind in ("square", "x2"):
            return DistortionFunction.square()
        if kind in ("exp", "exp_scaled"):
            return DistortionFunction.exp_scaled()
        if kind == "identity":
            return DistortionFunction.identity()
        if kind == "pwl":
            return DistortionFunction.pwl(sec["breakpoints"], sec["values"])
        if kind == "cvar_mix":
            return cvar_mix_distortion(float(sec.get("theta", 0.0)),
                                       float(sec["kappa"]))
    except (KeyError, ValueError) as exc:
        raise CliError(2, f"bad distortion section: {exc}") from exc
    raise CliError(2, f"unknown distortion kind {kind!r}")


def _inner_loss_from_config(sec: dict) -> InnerLossSpec:
    try:
        if "pieces" in sec:
            return InnerLossSpec.from_pieces(
                [(float(a), float(b), float(c)) for a, b, c in sec["pieces"]]
            )
        return InnerLossSpec.cvar_mix(float(sec.get("theta", 0.0)),
                                      float(sec["kappa"]))
    except (KeyError, ValueError) as exc:
        raise CliError(2, f"bad inner-loss section: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_feasibility(args) -> int:
    if not os.path.exists(args.data):
        raise CliError(2, f"data file not found: {args.data}")
    try:
        data = Dataset.from_csv(args.data)
    except (OSError, ValueError) as exc:
        raise CliError(2, f"could not read data: {exc}") from exc
    nbhd = _parse_nbhd(args.nbhd)
    cost = _parse_cost(args.cost)
    mass = _parse_mass(args.mass)
    try:
        part = boundary_distances(partition(data, nbhd), nbhd, cost)
    except ValueError as exc:
        raise CliError(2, f"bad geometry: {exc}") from exc
    if args.model == "full":
        delta_min, strict, _ = min_radius_full(part, mass)
    else:
        delta_min, _ = min_radius_partial(part, mass)
        strict = False
    d = part.require_d()
    payload = {
        "delta_min": delta_min,
        "strict": bool(strict),
        "m": int(part.m),
        "n": int(part.n),
        "d_summary": {
            "min": float(d.min()) if d.size else None,
            "max": float(d.max()) if d.size else None,
            "mean": float(d.mean()) if d.size else None,
        },
    }
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _solve_from_config(cfg: dict, log_path: str | None, certify: bool) -> dict:
    aset, data, cost = _admissible_from_config(cfg)
    risk = cfg.get("risk")
    if risk is None or "kind" not in risk:
        raise CliError(
            2, f"config needs [risk] with kind; valid kinds: {', '.join(RISK_KINDS)}"
        )
    kind = risk["kind"]
    if kind not in RISK_KINDS:
        raise CliError(
            2, f"unknown risk kind {kind!r}; valid kinds: {', '.join(RISK_KINDS)}"
        )
    dset = _decision_from_config(cfg.get("decision", {}), data.n_y)
    solver = cfg.get("solver", {})
    tol = float(solver.get("tol", DEFAULT_TOL))
    # full/partial sets carry their own relabeled outcomes; only pinned sets
    # need the sample outcomes handed through in the original order
    outcomes = data.outcomes if aset.kind == "pinned" else None
    start = time.perf_counter()

    if kind == "rdeu":
        h = _distortion_from_config(risk.get("h", {}))
        loss = _loss_from_config(cfg.get("loss", {"kind": "affine", "a": -1.0}))
        try:
            res = solve_rdeu(
                h, loss, aset, cost, dset, outcomes=outcomes,
                psi_tol=float(solver.get("psi_tol", 1e-5)),
                max_iter=int(solver.get("max_iter", 200)),
            )
        except (RuntimeError, ValueError) as exc:
            raise CliError(4, f"cutting-plane solve failed: {exc}") from exc
        if not res.converged:
            raise CliError(
                4,
                "cutting-plane solve did not reach the gap tolerance "
                f"(gap {res.upper - res.lower:.3e})",
            )
        if log_path:
            res.write_iteration_log(log_path)
        out = {
            "value": res.value,
            "alpha": [float(a) for a in res.alpha],
            "method": "cutting_plane",
            "gap": res.upper - res.lower,
            "seconds": time.perf_counter() - start,
        }
        if certify:
            if aset.kind not in ("full", "partial"):
                raise CliError(2, "--certify needs a full or partial transport set")
            h_cert = h if h.kind == "pwl" else h.chord_pwl(256)
            try:
                prob = compile_distortion_q1_exponential(
                    h, loss, aset, cost, dset, h_envelope=h_cert
                )
                sol = prob.solve(tol)
            except ValueError as exc:
                raise CliError(2, f"certification unavailable: {exc}") from exc
            if sol.status is not SolveStatus.OPTIMAL:
                raise CliError(4, f"certification solve failed: {sol.status.value}")
            out["certificate"] = sol.value
            if abs(sol.value - res.value) > 1e-4 + 1e-6 * abs(res.value):
                raise CliError(
                    4,
                    "certification mismatch: cutting-plane "
                    f"{res.value:.8g} vs direct program {sol.value:.8g}",
                )
        return out

    loss_sec = cfg.get("loss", {})
    if kind == "expectation":
        loss = _loss_from_config(loss_sec)
        if cost.q == 1 and loss.wrap_power is None and loss.kind not in ("pwq", "power"):
            prob = compile_expectation_q1(loss, aset, cost, dset, outcomes)
        elif loss.kind in ("pwl", "pwq", "power"):
            prob = compile_expectation_general_q2(loss, aset, cost, dset, outcomes)
        else:
            prob = compile_expectation_special_q(loss, aset, cost, dset, outcomes)
    elif kind == "min_expectation":
        if "inner" in risk:
            inner = _inner_loss_from_config(risk["inner"])
            prob = compile_min_expectation(inner, aset, cost, dset, outcomes)
        else:
            loss = _loss_from_config(loss_sec)
            prob = compile_min_expectation(loss, aset, cost, dset, outcomes)
    elif kind == "qnorm":
        if "inner" in risk:
            inner = _inner_loss_from_config(risk["inner"])
            prob = compile_qnorm(inner, aset, cost, dset, outcomes)
        else:
            loss = _loss_from_config(loss_sec)
            prob = compile_qnorm(loss, aset, cost, dset, outcomes)
    elif kind == "shortfall":
        u = _loss_from_config(risk.get("utility", loss_sec))
        prob = compile_shortfall(u, float(risk["level"]), aset, cost, dset, outcomes)
    elif kind == "mean_variance":
        prob = mean_variance_socp(float(risk.get("theta", 0.0)), aset, cost, dset,
                                  outcomes)
    else:  # mean_cvar
        prob = mean_cvar_socp(
            float(risk.get("theta", 0.0)), float(risk["kappa"]), aset, cost, dset,
            outcomes,
        )

    sol = prob.solve(tol)
    if sol.status is not SolveStatus.OPTIMAL:
        raise CliError(
            4, f"solver failure: {sol.status.value} ({sol.raw.message})"
        )
    return {
        "value": sol.value,
        "alpha": None if sol.alpha is None else [float(a) for a in sol.alpha],
        "method": "socp" if prob.program.soc_blocks else "lp",
        "gap": float(sol.raw.residual),
        "seconds": time.perf_counter() - start,
    }


def cmd_solve(args) -> int:
    cfg = _load_config(args.problem)
    try:
        result = _solve_from_config(cfg, args.log, args.certify)
    except KeyError as exc:
        raise CliError(2, f"config missing key: {exc}") from exc
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    return 0


def cmd_support(args) -> int:
    cfg = _load_config(args.set)
    aset, _, _ = _admissible_from_config(cfg)
    v = np.asarray(_parse_floats(args.v), dtype=float)
    if v.size != aset.n + 1:
        raise CliError(
            2,
            f"--v needs {aset.n + 1} components (one per sample weight plus "
            f"the radius), got {v.size}",
        )
    value = support(aset, v)
    json.dump({"value": value}, sys.stdout)
    sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------------
# bench / report
# ---------------------------------------------------------------------------


def _write_results_csv(path: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "N", "rep", "risk", "seconds"])
        for r in rows:
            w.writerow([
                r["model"], r["N"], r["rep"],
                "nan" if r["failed"] else f"{r['risk']:.12g}",
                f"{r['seconds']:.3f}",
            ])


def _read_results_csv(path: str):
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            risk = float(rec["risk"])
            rows.append({
                "model": rec["model"], "N": int(rec["N"]), "rep": int(rec["rep"]),
                "risk": risk, "seconds": float(rec["seconds"]),
                "failed": math.isnan(risk),
            })
    return rows


def _write_summary_csv(path: str, summary) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "N", "mean", "p15", "p85", "failures"])
        for s in summary:
            w.writerow([
                s["model"], s["N"], f"{s['mean']:.12g}", f"{s['p15']:.12g}",
                f"{s['p85']:.12g}", s["failures"],
            ])


def _render_bands(summary, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "otcrm"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for mk in MODEL_KINDS:
        pts = sorted(
            [s for s in summary if s["model"] == mk and not math.isnan(s["mean"])],
            key=lambda s: s["N"],
        )
        if not pts:
            continue
        ns = [s["N"] for s in pts]
        ax.plot(ns, [s["mean"] for s in pts], marker="o", label=mk)
        ax.fill_between(ns, [s["p15"] for s in pts], [s["p85"] for s in pts],
                        alpha=0.18)
    ax.set_xlabel("sample size N")
    ax.set_ylabel("out-of-sample conditional risk")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def _run_config_from_file(path: str, paper_scale: bool) -> RunConfig:
    cfg = _load_config(path) if path else {}
    try:
        kwargs = {}
        if "ns" in cfg:
            kwargs["ns"] = tuple(int(n) for n in cfg["ns"])
        if "reps" in cfg:
            kwargs["reps"] = int(cfg["reps"])
        if "seed" in cfg:
            kwargs["base_seed"] = int(cfg["seed"])
        if "h" in cfg:
            kwargs["h_kind"] = str(cfg["h"])
        if "mc_oracle" in cfg:
            kwargs["mc_oracle"] = int(cfg["mc_oracle"])
        if "psi_tol" in cfg:
            kwargs["psi_tol"] = float(cfg["psi_tol"])
        if "models" in cfg:
            kwargs["models"] = tuple(str(m) for m in cfg["models"])
        if paper_scale or cfg.get("paper_scale"):
            kwargs["paper_scale"] = True
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(2, f"bad bench config: {exc}") from exc


def cmd_bench(args) -> int:
    config = _run_config_from_file(args.config, args.paper_scale)
    bad = [m for m in config.models if m not in MODEL_KINDS]
    if bad:
        raise CliError(2, f"unknown models {bad}; valid: {', '.join(MODEL_KINDS)}")
    os.makedirs(args.out, exist_ok=True)
    rows = replicate(config, jobs=max(1, args.jobs))
    summary = summarize(rows)
    _write_results_csv(os.path.join(args.out, "results.csv"), rows)
    _write_summary_csv(os.path.join(args.out, "summary.csv"), summary)
    _render_bands(summary, os.path.join(args.out, "bands.svg"))
    if rows and all(r["failed"] for r in rows):
        raise CliError(4, "all replications failed")
    return 0


def cmd_report(args) -> int:
    if not os.path.exists(args.results):
        raise CliError(2, f"results file not found: {args.results}")
    try:
        rows = _read_results_csv(args.results)
    except (KeyError, ValueError, OSError) as exc:
        raise CliError(2, f"could not parse results CSV: {exc}") from exc
    os.makedirs(args.out, exist_ok=True)
    summary = summarize(rows)
    _write_summary_csv(os.path.join(args.out, "summary.csv"), summary)
    _render_bands(summary, os.path.join(args.out, "bands.svg"))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="otcrm",
        description="Distributionally robust conditional risk toolbox",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("feasibility", help="minimal radius diagnostics")
    p.add_argument("--data", required=True, help="CSV with x*/y* columns")
    p.add_argument("--nbhd", required=True,
                   help="center...,radius,norm e.g. 0.1,0.1,0,1.2,l1")
    p.add_argument("--cost", required=True, help="x_norm,y_norm,q e.g. l1,l2,1")
    p.add_argument("--mass", required=True, help="omega_lo,omega_hi")
    p.add_argument("--model", choices=("full", "partial"), default="full")
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("solve", help="solve one robust risk problem")
    p.add_argument("--problem", required=True, help="TOML/JSON problem config")
    p.add_argument("--out", required=True, help="JSON results path")
    p.add_argument("--log", default=None, help="iteration CSV (cutting plane)")
    p.add_argument("--certify", action="store_true",
                   help="cross-check distortion solves against the direct program")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("support", help="evaluate the support function of a set")
    p.add_argument("--set", required=True, help="TOML/JSON config with data+set")
    p.add_argument("--v", required=True, help="comma-separated payoff vector")
    p.set_defaults(func=cmd_support)

    p = sub.add_parser("bench", help="run the replication benchmark")
    p.add_argument("--config", default=None, help="TOML/JSON run config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--paper-scale", action="store_true",
                   help="50 replications, sample sizes up to 400")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="re-summarize and re-plot a results CSV")
    p.add_argument("--results", required=True, help="results.csv from bench")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"otcrm: error: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleRadiusError as exc:
        print(f"otcrm: infeasible radius: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"otcrm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

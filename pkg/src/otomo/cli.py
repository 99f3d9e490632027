"""Batch command line for measurement design, analysis and simulation.

Subcommands: design-pauli, design-directions, analyze, simulate,
reconstruct.  All artifacts are JSON (or the one-string-per-line Pauli
text format) with sorted keys and 17-significant-digit floats, so
identical invocations with identical seeds write byte-identical files;
wall-clock timings go to stderr only.  Exit codes: 0 success, 2 invalid
input, 3 budget exhausted without a complete result, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import math
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .directions import (
    DirectionSet,
    IncompleteSettingsError,
    OptimizerConfig,
    all_subset_dets,
    completeness_check,
    load_named_direction_set,
    optimize_directions,
    sample_uniform_directions,
    samples_for_radius,
    sigma_max,
    standard_pauli_pairs,
)
from .marginals import (
    ConnectivityHypergraph,
    PauliSet,
    colouring_construction,
    complete_hypergraph,
    phi_bounds,
    preset_connectivity,
    recursive_construction,
    strong_chromatic_number,
    verify_cover,
)
from .simulate import (
    CountsRecord,
    dicke_state,
    fidelity,
    linear_inversion,
    marginalize_counts,
    mle_reconstruct,
    monte_carlo_errors,
    noise_state,
    partial_trace,
    simulate_counts,
)
from .solver import (
    Budget,
    CoverInstance,
    SolveReport,
    branch_and_bound,
    greedy_cover,
    ilp_export,
    local_search_cover,
)


class InputError(Exception):
    pass


class BudgetError(Exception):
    pass


# ---------------------------------------------------------------------------
# deterministic JSON


def format_json(obj) -> str:
    """JSON with sorted keys and floats at 17 significant digits."""
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("non-finite float in JSON output")
        return f"{x:.17g}"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: kv[0])
        inner = ",".join(f"{json.dumps(str(k))}:{format_json(v)}" for k, v in items)
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(format_json(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return format_json(obj.tolist())
    raise TypeError(f"cannot serialise {type(obj)!r}")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()[:16]


def make_manifest(args: Sequence[str], seed: Optional[int], inputs: Sequence[str]) -> dict:
    return {
        "command": list(args),
        "seed": seed,
        "inputs": {p: _sha256(p) for p in inputs},
        "version": __version__,
    }


def write_json(path: Optional[str], payload: dict) -> None:
    text = format_json(payload) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# input loading


def load_connectivity(args) -> ConnectivityHypergraph:
    if getattr(args, "connectivity", None):
        try:
            with open(args.connectivity) as fh:
                return ConnectivityHypergraph.from_json(fh.read())
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read connectivity file: {exc}") from exc
    if getattr(args, "preset", None):
        try:
            return preset_connectivity(args.preset)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    raise InputError("provide --connectivity FILE or --preset NAME")


def load_settings(spec: str):
    """A settings file (Pauli text or DirectionSet JSON) or a preset name."""
    if spec == "pauli9_2q":
        return standard_pauli_pairs()
    if spec == "paper_table_a1":
        return load_named_direction_set(spec)
    if not os.path.exists(spec):
        raise InputError(f"settings {spec!r}: no such file or preset")
    with open(spec) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return DirectionSet.from_json(text)
        except (ValueError, KeyError) as exc:
            raise InputError(f"bad direction-set JSON: {exc}") from exc
    try:
        return PauliSet.from_text(text)
    except ValueError as exc:
        raise InputError(f"bad Pauli set file: {exc}") from exc


def parse_state(spec: str) -> np.ndarray:
    parts = spec.split(":")
    try:
        if parts[0] == "dicke" and len(parts) == 3:
            return dicke_state(int(parts[1]), int(parts[2]))
        if parts[0] == "noise" and len(parts) == 2:
            return noise_state(float(parts[1]))
    except ValueError as exc:
        raise InputError(f"bad state spec {spec!r}: {exc}") from exc
    raise InputError(f"unknown state spec {spec!r} (use dicke:N:M or noise:P)")


def parse_subsets(spec: str, n: int) -> list[tuple[int, ...]]:
    if spec == "all-pairs":
        return list(itertools.combinations(range(n), 2))
    subsets = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            sub = tuple(sorted(int(x) for x in part.split(",")))
        except ValueError as exc:
            raise InputError(f"bad subset spec {part!r}") from exc
        if len(set(sub)) != len(sub) or sub[0] < 0 or sub[-1] >= n:
            raise InputError(f"invalid subset {part!r} for n={n}")
        subsets.append(sub)
    if not subsets:
        raise InputError("no subsets given")
    return subsets


# ---------------------------------------------------------------------------
# design-pauli


def _auto_base(nb: int, k: int, budget: float, seed: int) -> PauliSet:
    """A small complete set for the complete instance on nb qubits, used as
    a colouring/recursion base: greedy, then annealed shrinking, then a
    short exact run when the instance is tiny."""
    inst = CoverInstance.from_hypergraph(complete_hypergraph(nb, k))
    best = greedy_cover(inst)
    target = phi_bounds(nb, k).lower
    size = len(best) - 1
    while size >= target:
        found = local_search_cover(inst, size, seed=seed, max_time=min(budget, 30.0))
        if found is None:
            break
        best = found
        size -= 1
    if len(best) > target and nb <= 4:
        report = branch_and_bound(inst, Budget(max_time=min(budget, 60.0)), best)
        best = report.solution
    return best


def _factor_pairs(n: int) -> list[tuple[int, int]]:
    out = []
    for a in range(2, int(math.isqrt(n)) + 1):
        if n % a == 0 and n // a >= 2:
            out.append((a, n // a))
    return out


def cmd_design_pauli(args, argv) -> int:
    h = load_connectivity(args)
    budget = args.budget
    t0 = time.time()
    report: Optional[SolveReport] = None

    def instance() -> CoverInstance:
        try:
            return CoverInstance.from_hypergraph(h)
        except ValueError as exc:
            raise InputError(str(exc)) from exc

    if args.method == "greedy":
        solution = greedy_cover(instance())
    elif args.method == "exact":
        inst = instance()
        incumbent = greedy_cover(inst)
        k_max = max(len(e) for e in h.edges)
        chi = strong_chromatic_number(h)
        if chi.count < h.n:  # seed from the colouring construction when cheaper
            try:
                base = _auto_base(chi.count, k_max, budget / 4, args.seed)
                seeded = colouring_construction(h, base)
                if len(seeded) < len(incumbent):
                    incumbent = seeded
            except ValueError:
                pass
        bounds = phi_bounds(h.n, k_max, h)
        size = len(incumbent) - 1
        while size >= bounds.lower:
            found = local_search_cover(
                inst, size, seed=args.seed, max_time=max(1.0, min(budget * 0.1, 30.0))
            )
            if found is None:
                break
            incumbent = found
            size -= 1
        remaining = budget - (time.time() - t0)
        report = branch_and_bound(inst, Budget(max_time=max(1.0, remaining)), incumbent)
        solution = report.solution
    elif args.method == "colouring":
        chi = strong_chromatic_number(h)
        k_max = max(len(e) for e in h.edges)
        if args.base:
            base = load_settings(args.base)
            if not isinstance(base, PauliSet):
                raise InputError("--base must be a Pauli set file")
        else:
            base = _auto_base(chi.count, k_max, budget, args.seed)
        solution = colouring_construction(h, base)
    elif args.method == "recursive":
        if h.edges != complete_hypergraph(h.n, 2).edges:
            raise InputError("recursive construction covers complete pair instances only")
        pairs = _factor_pairs(h.n)
        if not pairs:
            raise InputError(f"n={h.n} has no factorisation n1*n2 with n1,n2 >= 2")
        best_pair = min(
            pairs, key=lambda p: phi_bounds(p[0], 2).upper + phi_bounds(p[1], 2).upper
        )
        a = _auto_base(best_pair[0], 2, budget / 2, args.seed)
        b = _auto_base(best_pair[1], 2, budget / 2, args.seed)
        solution = recursive_construction(a, b)
    else:
        raise InputError(f"unknown method {args.method!r}")

    check = verify_cover(solution, h)
    if not check.complete:
        raise BudgetError("no complete cover found within the budget")
    if report is None:
        lb = phi_bounds(h.n, max(len(e) for e in h.edges), h).lower
        report = SolveReport(
            solution, len(solution), lb, len(solution) <= lb, 0, 0.0, False
        )

    manifest = make_manifest(argv, args.seed, [args.connectivity] if args.connectivity else [])
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(
                solution.to_text(
                    comments=[f"manifest: {format_json(manifest)}"]
                )
            )
    payload = {
        "size": report.size,
        "lower_bound": report.lower_bound,
        "optimal": report.optimal,
        "nodes_explored": report.nodes_explored,
        "budget_hit": report.budget_hit,
        "wall_time": None,
        "multiplicity": {"min": check.min_multiplicity, "max": check.max_multiplicity},
        "solution": list(report.solution.settings),
        "n": report.solution.n,
        "manifest": manifest,
    }
    write_json(args.report, payload)
    if args.ilp:
        ilp_export(instance(), args.ilp)
    print(f"design-pauli: {report.size} settings in {time.time() - t0:.2f}s", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# design-directions


def cmd_design_directions(args, argv) -> int:
    m = 3 ** args.k
    if args.method == "random":
        ds = sample_uniform_directions(args.n, m, args.seed)
        objective = None
        smax = sigma_max(ds, args.k).sigma_max
    elif args.method == "optimize":
        w2 = args.w2
        if not 0 <= w2 <= 1:
            raise InputError("--w2 must lie in [0, 1]")
        cfg = OptimizerConfig(
            w1=math.sqrt(max(0.0, 1.0 - w2 * w2)),
            w2=w2,
            restarts=args.restarts,
            max_iters=args.max_iters,
            constraint="free" if args.constraint == "free" else "orthonormal",
        )
        result = optimize_directions(args.n, args.k, cfg, args.seed)
        ds, objective, smax = result.directions, result.objective, result.sigma_max
    else:
        raise InputError(f"unknown method {args.method!r}")

    check = completeness_check(ds, args.k)
    if not check.complete:
        raise BudgetError(
            f"directions incomplete on subset {check.worst_subset} "
            f"(|det| = {check.worst_det:.3e})"
        )
    manifest = make_manifest(argv, args.seed, [])
    if args.out:
        payload = json.loads(ds.to_json())
        payload["manifest"] = manifest
        write_json(args.out, payload)
    dets = all_subset_dets(ds, args.k)
    write_json(
        args.report,
        {
            "n": args.n,
            "m": m,
            "objective": objective,
            "sigma_max": smax,
            "per_subset_det": {",".join(map(str, s)): v for s, v in dets.items()},
            "manifest": manifest,
        },
    )
    return 0


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze(args, argv) -> int:
    if args.what == "sigma":
        settings = load_settings(args.settings)
        rep = sigma_max(settings, args.k)
        write_json(
            args.out,
            {
                "k": args.k,
                "sigma_max": rep.sigma_max,
                "per_subset": {",".join(map(str, s)): v for s, v in rep.per_subset.items()},
            },
        )
        return 0
    if args.what == "samples":
        if args.sigma is None:
            raise InputError("analyze samples needs --sigma")
        n_scheme = samples_for_radius(args.sigma, args.radius, args.delta)
        n_base = samples_for_radius(args.baseline, args.radius, args.delta)
        write_json(
            args.out,
            {
                "sigma": args.sigma,
                "baseline_sigma": args.baseline,
                "radius": args.radius,
                "delta": args.delta,
                "samples": n_scheme,
                "baseline_samples": n_base,
                "ratio": n_scheme / n_base,
                "percent_more": 100.0 * (n_scheme / n_base - 1.0),
            },
        )
        return 0
    if args.what == "portfolio-sweep":
        rows = ["kind,w2,seed,mean_det,std_det,sigma_max"]
        for s in range(args.seeds):
            ds = sample_uniform_directions(args.n, 3 ** args.k, seed=args.seed + s)
            dets = np.array(list(all_subset_dets(ds, args.k).values()))
            smax = sigma_max(ds, args.k).sigma_max
            rows.append(
                f"random,,{args.seed + s},{dets.mean():.17g},{dets.std():.17g},{smax:.17g}"
            )
        if args.sweep_grid:
            try:
                weights = [float(w) for w in args.sweep_grid.split(",")]
            except ValueError as exc:
                raise InputError(f"bad --sweep-grid: {exc}") from exc
        else:
            weights = [args.w2]
        for w2 in weights:
            if not 0 <= w2 <= 1:
                raise InputError("sweep weights must lie in [0, 1]")
            cfg = OptimizerConfig(
                w1=math.sqrt(max(0.0, 1.0 - w2 * w2)), w2=w2,
                restarts=args.restarts, max_iters=args.max_iters,
            )
            result = optimize_directions(args.n, args.k, cfg, args.seed)
            dets = np.array(list(all_subset_dets(result.directions, args.k).values()))
            rows.append(
                f"optimized,{w2:.17g},{args.seed},{dets.mean():.17g},"
                f"{dets.std():.17g},{result.sigma_max:.17g}"
            )
        text = "\n".join(rows) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    raise InputError(f"unknown analyze mode {args.what!r}")


# ---------------------------------------------------------------------------
# simulate and reconstruct


def cmd_simulate(args, argv) -> int:
    state = parse_state(args.state)
    settings = load_settings(args.settings)
    n_state = state.shape[0].bit_length() - 1
    n_set = settings.n
    if n_state != n_set:
        raise InputError(f"state has {n_state} qubits, settings have {n_set}")
    rec = simulate_counts(state, settings, args.shots, args.seed, args.model)
    payload = json.loads(rec.to_json())
    payload["manifest"] = make_manifest(
        argv, args.seed, [args.settings] if os.path.exists(args.settings) else []
    )
    payload["model"] = args.model
    payload["shots_per_setting"] = args.shots
    write_json(args.out, payload)
    return 0


def cmd_reconstruct(args, argv) -> int:
    try:
        with open(args.counts) as fh:
            rec = CountsRecord.from_json(fh.read())
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read counts: {exc}") from exc
    settings = load_settings(args.settings)
    if settings.n != rec.n:
        raise InputError(f"settings on {settings.n} qubits, counts on {rec.n}")
    subsets = parse_subsets(args.subsets, rec.n)
    reference = parse_state(args.reference) if args.reference else None

    results = []
    for sub in subsets:
        marg = marginalize_counts(rec, sub)
        if args.method == "mle":
            recon = mle_reconstruct(marg.counts, settings, sub, seed=args.seed)
        elif args.method == "linear":
            from .directions import build_measurement_map

            mmap = build_measurement_map(settings, sub)
            lin = linear_inversion(marg.frequencies.reshape(-1), mmap)
            from .simulate import ReconstructionResult

            recon = ReconstructionResult(sub, lin.matrix, "linear", None, 0)
        else:
            raise InputError(f"unknown method {args.method!r}")
        entry = recon.to_json_dict()
        if reference is not None:
            ref_marg = partial_trace(reference, sub)
            if recon.method == "linear":
                entry["fidelity"] = None if _not_state(recon.estimate) else fidelity(
                    recon.estimate, ref_marg
                )
            else:
                entry["fidelity"] = fidelity(recon.estimate, ref_marg)
        results.append(entry)

    if args.mc_repeats and reference is not None:
        mc = monte_carlo_errors(
            rec, settings, subsets, reference, repeats=args.mc_repeats, seed=args.seed
        )
        for entry in results:
            e = mc[tuple(entry["subset"])]
            entry["mc_fidelity_mean"] = e.mean
            entry["mc_fidelity_std"] = e.std

    payload = {
        "method": args.method,
        "marginals": results,
        "manifest": make_manifest(argv, args.seed, [args.counts]),
    }
    write_json(args.out, payload)
    return 0


def _not_state(m: np.ndarray) -> bool:
    return bool(np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -1e-8)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="otomo", description="overlapping tomography measurement design toolkit"
    )
    p.add_argument("--threads", type=int, default=int(os.environ.get("OTOMO_THREADS", "1")),
                   help="worker bound for parallel sections (currently sequential)")
    sub = p.add_subparsers(dest="cmd", required=True)

    dp = sub.add_parser("design-pauli", help="compute a Pauli measurement set")
    dp.add_argument("--connectivity", help="hypergraph JSON file")
    dp.add_argument("--preset", help="complete:n:k | line:n:k | ring:n:k | grid16 | g7")
    dp.add_argument("--method", default="exact",
                    choices=["exact", "greedy", "colouring", "recursive"])
    dp.add_argument("--budget", type=float, default=600.0, help="seconds for exact search")
    dp.add_argument("--base", help="base Pauli set file for colouring/recursive")
    dp.add_argument("--seed", type=int, default=0)
    dp.add_argument("--out", help="output Pauli text file")
    dp.add_argument("--report", help="solve report JSON (stdout when omitted)")
    dp.add_argument("--ilp", help="also export the instance in CPLEX LP format")
    dp.set_defaults(func=cmd_design_pauli)

    dd = sub.add_parser("design-directions", help="draw or optimise Bloch directions")
    dd.add_argument("--n", type=int, required=True)
    dd.add_argument("--k", type=int, default=2)
    dd.add_argument("--method", default="random", choices=["random", "optimize"])
    dd.add_argument("--w2", type=float, default=math.cos(math.pi / 5))
    dd.add_argument("--constraint", default="free", choices=["free", "orthonormal"])
    dd.add_argument("--restarts", type=int, default=20)
    dd.add_argument("--max-iters", type=int, default=120)
    dd.add_argument("--seed", type=int, default=0)
    dd.add_argument("--out", help="direction set JSON file")
    dd.add_argument("--report", help="report JSON (stdout when omitted)")
    dd.set_defaults(func=cmd_design_directions)

    an = sub.add_parser("analyze", help="sigma, sample counts, portfolio sweeps")
    an.add_argument("what", choices=["sigma", "samples", "portfolio-sweep"])
    an.add_argument("--settings", help="settings file or preset (sigma)")
    an.add_argument("--k", type=int, default=2)
    an.add_argument("--sigma", type=float)
    an.add_argument("--baseline", type=float, default=5.0)
    an.add_argument("--radius", type=float, default=0.1)
    an.add_argument("--delta", type=float, default=0.05)
    an.add_argument("--n", type=int, default=6)
    an.add_argument("--seeds", type=int, default=100)
    an.add_argument("--restarts", type=int, default=5)
    an.add_argument("--max-iters", type=int, default=120)
    an.add_argument("--w2", type=float, default=math.cos(math.pi / 5))
    an.add_argument("--sweep-grid", help="comma-separated w2 values for optimized rows")
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--out")
    an.set_defaults(func=cmd_analyze)

    sim = sub.add_parser("simulate", help="sample measurement counts from a state")
    sim.add_argument("--state", required=True, help="dicke:N:M or noise:P")
    sim.add_argument("--settings", required=True, help="settings file or preset")
    sim.add_argument("--shots", type=int, required=True)
    sim.add_argument("--model", default="multinomial", choices=["multinomial", "poisson"])
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", help="counts JSON (stdout when omitted)")
    sim.set_defaults(func=cmd_simulate)

    rec = sub.add_parser("reconstruct", help="estimate marginals from counts")
    rec.add_argument("--counts", required=True)
    rec.add_argument("--settings", required=True)
    rec.add_argument("--subsets", default="all-pairs",
                     help='"all-pairs" or "0,1;2,3;..."')
    rec.add_argument("--method", default="mle", choices=["mle", "linear"])
    rec.add_argument("--reference", help="dicke:N:M or noise:P for fidelities")
    rec.add_argument("--mc-repeats", type=int, default=0)
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--out", help="marginals JSON (stdout when omitted)")
    rec.set_defaults(func=cmd_reconstruct)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must fit in 64 bits", file=sys.stderr)
        return 2
    try:
        return args.func(args, argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except IncompleteSettingsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

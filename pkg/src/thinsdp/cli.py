"""Command-line front end: dual solve with scheduled recovery, perturbation
study, and the dense oracle.

    thinsdp solve   --problem maxcut:graph.txt --alpha auto --max-iters 1000 --out run/
    thinsdp perturb --problem maxcut:small.txt --noise 1e-1,1e-2 --out study/
    thinsdp oracle  --problem maxcut:small.txt --out oracle/

Exit codes: 0 ok, 1 solver failure, 2 input error, 3 size limit.
Setting SDP_AUDIT_ALLOC=1 records the peak traced allocation in summary.json.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as tio
from .audit import AllocationAudit
from .diagnostics import conditioning, dimacs_feasibility, dimacs_gap, quality
from .dual import (DivergenceError, PenaltyConfig, StopRule, eval_penalized,
                   make_schedule, search_alpha_doubling, solve_dual)
from .oracle import dense_cost, enumerate_solution_rank, solve_dense
from .problems import (FormatError, SdpProblem, build_matrix_completion,
                       build_maxcut, random_maxcut,
                       synthetic_matrix_completion)
from .recovery import RecoveryConfig, compress, default_rank, recover
from .spectral import EigensolverConfig

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_INPUT = 2
EXIT_SIZE = 3

ORACLE_MAX_N = 50


class SizeLimitError(RuntimeError):
    pass


def _fmt(x) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# problem sources
# --------------------------------------------------------------------------

def _parse_kv(params: str) -> dict:
    out = {}
    for tok in params.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "=" not in tok:
            raise FormatError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_problem(source: str) -> SdpProblem:
    """maxcut:<path> | matcomp:<path> | synthetic:<family>,<k=v>,..."""
    kind, _, rest = source.partition(":")
    if kind == "maxcut":
        edges, n = tio.load_graph(rest)
        return build_maxcut(edges, n_vertices=n)
    if kind == "matcomp":
        n1, n2, obs = tio.load_observations(rest)
        return build_matrix_completion(n1, n2, obs)
    if kind == "synthetic":
        family, _, params = rest.partition(",")
        kv = _parse_kv(params)
        seed = int(kv.get("seed", 0))
        if family == "maxcut":
            n = int(kv["n"])
            p = float(kv.get("p", 0.1))
            weighted = kv.get("weighted", "1") not in ("0", "false")
            return random_maxcut(n, p, seed=seed, weighted=weighted)
        if family == "matcomp":
            if "c" in kv:
                c = int(kv["c"])
                n1, n2 = 75 * c, 50 * c
            else:
                n1, n2 = int(kv["n1"]), int(kv["n2"])
            rank = int(kv.get("rank", 5))
            num_obs = int(kv["obs"]) if "obs" in kv else None
            problem, _ = synthetic_matrix_completion(n1, n2, rank=rank,
                                                     seed=seed, num_obs=num_obs)
            return problem
        raise FormatError(f"unknown synthetic family {family!r}")
    raise FormatError(f"unknown problem source {source!r} "
                      "(expected maxcut:, matcomp:, or synthetic:)")


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    problem_source: str
    alpha: str = "auto"               # float string | 'auto' | 'search'
    schedule: str = "adaptive:1.0"    # kind:param
    rank: str = "auto"
    option: int = 1
    gamma: float = 1.1
    recover_at: str = "auto"          # 'auto' = powers of 10
    max_iters: int = 1000
    time_budget: float | None = None
    tol: float = 1e-8
    seed: int = 0
    out: str = "."

    def recovery_iterations(self) -> list[int]:
        if self.recover_at == "auto":
            its = []
            k = 10
            while k < self.max_iters:
                its.append(k)
                k *= 10
            return its
        its = [int(t) for t in self.recover_at.split(",") if t.strip()]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise FormatError("--recover-at must be strictly increasing")
        return its

    def make_schedule(self, problem, alpha):
        kind, _, param = self.schedule.partition(":")
        if kind in ("polyak", "polyak-estimate"):
            if not param:
                raise FormatError("polyak schedule needs a target, e.g. polyak:4.0")
            return make_schedule("polyak", target=float(param))
        eta0 = float(param) if param else 1.0
        return make_schedule(kind, eta0=eta0)

    def resolve_alpha(self, problem) -> float | None:
        if self.alpha == "auto":
            return PenaltyConfig(rule="trace-scaled").resolve(problem)
        if self.alpha == "search":
            return None
        return PenaltyConfig(rule="explicit", alpha=float(self.alpha)).resolve(problem)


def _versions() -> dict:
    import scipy
    from importlib.metadata import version
    try:
        own = version("thinsdp")
    except Exception:
        own = "unknown"
    return {"thinsdp": own, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": sys.version.split()[0]}


# --------------------------------------------------------------------------
# solve command
# --------------------------------------------------------------------------

def _recovery_row(problem, alpha, k, rec, y, eig_cfg):
    rows = []
    cond = conditioning(problem, rec.ops, rec.threshold,
                        clustered=rec.basis.clustered, seed=eig_cfg.seed)
    sols = [("1", rec.minfeas)]
    if rec.minobj is not None:
        sols.append(("2", rec.minobj))
    g_alpha = lam = None
    for opt_label, sol in sols:
        if g_alpha is None:
            rep = quality(problem, sol, y, alpha, ops=rec.ops,
                          eig_cfg=eig_cfg)
            g_alpha, lam = rep.g_alpha, -rep.dual_infeas
        else:
            rep = quality(problem, sol, y, alpha, ops=rec.ops,
                          eig_cfg=eig_cfg, g_alpha=g_alpha, lam_min=lam)
        rows.append({
            "iter": k, "option": opt_label, "r": sol.r,
            "residual": sol.residual, "objective": sol.objective,
            "primal_subopt_bound": rep.primal_subopt_bound,
            "dimacs_feas": rep.dimacs_feas, "dimacs_gap": rep.dimacs_gap,
            "T": rec.threshold if rec.threshold is not None else float("nan"),
            "sigma_min_AV": cond.sigma_min_AV,
        })
    return rows, rows[-1], rep


def run_solve(cfg: RunConfig) -> dict:
    """Full Algorithm-2-style run; returns the summary dict.

    Scheduled recoveries run on the current dual iterate; the final recovery
    (written out as factors) runs on the best iterate found.
    """
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    audit = AllocationAudit.from_env()
    audit.start()
    trace_rows: list[dict] = []
    recovery_rows: list[dict] = []
    summary: dict = {"config": cfg.__dict__.copy(), "versions": _versions(),
                     "seeds": {"seed": cfg.seed}}

    def flush(suffix: str):
        _write_csv(outdir / f"trace.csv{suffix}",
                   ["iter", "wall_time_s", "g_alpha", "lambda_min",
                    "dual_infeas", "best_g_alpha"], trace_rows)
        _write_csv(outdir / f"recovery.csv{suffix}",
                   ["iter", "option", "r", "residual", "objective",
                    "primal_subopt_bound", "dimacs_feas", "dimacs_gap",
                    "T", "sigma_min_AV"], recovery_rows)
        with open(outdir / f"summary.json{suffix}", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, default=float)

    try:
        problem = load_problem(cfg.problem_source)
        eig_cfg = EigensolverConfig(tol=cfg.tol, seed=cfg.seed)
        rank = (default_rank(problem.m, problem.n) if cfg.rank == "auto"
                else int(cfg.rank))
        rec_cfg = RecoveryConfig(r=rank, gamma=cfg.gamma)
        rec_iters = set(cfg.recovery_iterations())
        stop = StopRule(max_iters=cfg.max_iters, time_budget=cfg.time_budget)

        alpha = cfg.resolve_alpha(problem)
        if alpha is None:   # doubling search
            def recover_fn(prob, y):
                return recover(prob, y, r=rank, option=1, cfg=rec_cfg,
                               eig_cfg=eig_cfg).minfeas.residual
            alpha, result, history = search_alpha_doubling(
                problem, lambda a: cfg.make_schedule(problem, a), stop,
                recover_fn, eig_cfg=eig_cfg)
            summary["alpha_search"] = [
                {"alpha": a, "g": g, "residual": r} for a, g, r in history]
        else:
            result = None
        schedule = cfg.make_schedule(problem, alpha)
        summary["alpha"] = alpha

        def on_iterate(k, it):
            if k in rec_iters:
                rec = recover(problem, it.y, r=rank, option=cfg.option,
                              cfg=rec_cfg, eig_cfg=eig_cfg)
                rows, _, _ = _recovery_row(problem, alpha, k, rec, it.y,
                                           eig_cfg)
                recovery_rows.extend(rows)

        result = solve_dual(problem, alpha, schedule, eig_cfg=eig_cfg,
                            stop=stop, callback=on_iterate)
        for row in result.trace:
            trace_rows.append({
                "iter": row.iter, "wall_time_s": row.wall_time,
                "g_alpha": row.g_val, "lambda_min": row.lam_min,
                "dual_infeas": max(-row.lam_min, 0.0),
                "best_g_alpha": row.best_g_val})
        if result.diverged:
            raise DivergenceError(
                f"dual objective exceeded 1e6x its initial value "
                f"(iteration {result.iterations})")

        # final recovery from the best iterate
        final = recover(problem, result.best.y, r=rank, option=cfg.option,
                        cfg=rec_cfg, eig_cfg=eig_cfg)
        rows, last_row, rep = _recovery_row(problem, alpha, result.iterations,
                                            final, result.best.y, eig_cfg)
        recovery_rows.extend(rows)
        sol = final.solution
        tio.write_factors(outdir / "V.txt", outdir / "S.txt", sol.V, sol.S)

        audit.stop()
        summary.update({
            "dual": {"iterations": result.iterations, "status": result.status,
                     "best_g_alpha": result.best.g_val,
                     "best_iter": result.best.iter,
                     "lambda_min_at_best": result.best.lam_min},
            "final_recovery": {"option": cfg.option, "r": sol.r,
                               "residual": sol.residual,
                               "objective": sol.objective,
                               "T": final.threshold,
                               "converged": sol.converged,
                               **rep.as_dict()},
            "audit": audit.report(),
        })
    except BaseException:
        audit.stop()
        flush(".partial")
        raise
    flush("")
    return summary


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                row[h] if isinstance(row[h], (int, str)) else _fmt(row[h])
                for h in header])


# --------------------------------------------------------------------------
# perturbation study
# --------------------------------------------------------------------------

def run_perturb(cfg: RunConfig, noise_levels, trials: int = 3) -> dict:
    """Recovery quality as a function of dual suboptimality (oracle-scored).

    For every noise level eps, trial, rank r in {r*, 3r*} and both recovery
    options, perturbs the oracle dual y = y* + eps * s * ||y*|| with s uniform
    on the sphere, recovers, and writes relative suboptimality/infeasibility/
    distance rows against the oracle solution.
    """
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    problem = load_problem(cfg.problem_source)
    if problem.n > ORACLE_MAX_N:
        raise SizeLimitError(f"perturbation study needs the dense oracle "
                             f"(n <= {ORACLE_MAX_N})")
    eig_cfg = EigensolverConfig(tol=cfg.tol, seed=cfg.seed)
    alpha = cfg.resolve_alpha(problem)
    sol = solve_dense(problem)
    if not sol.converged:
        raise RuntimeError("dense oracle failed to converge")
    r_star, _ = enumerate_solution_rank(sol)
    C = dense_cost(problem)
    x_norm = np.linalg.norm(sol.X)
    b_norm = np.linalg.norm(problem.b)
    rng = np.random.default_rng(cfg.seed)
    # 3 r_star capped at the Barvinok-Pataki rank, as in the source study
    bp = default_rank(problem.m, problem.n, cap=problem.n - 1)
    ranks = sorted({r_star, max(r_star, min(3 * r_star, bp))})
    rows = []
    for eps in noise_levels:
        for trial in range(trials):
            s = rng.standard_normal(problem.m)
            s /= np.linalg.norm(s)
            y = sol.y + eps * s * np.linalg.norm(sol.y)
            g_alpha, _, _, _ = eval_penalized(problem, y, alpha, eig_cfg)
            dual_rel = abs(sol.p_star + g_alpha) / abs(sol.p_star)
            for r in ranks:
                rec = recover(problem, y, r=r, option=2,
                              cfg=RecoveryConfig(gamma=cfg.gamma),
                              eig_cfg=eig_cfg)
                for opt, s_hat in (("1", rec.minfeas), ("2", rec.minobj)):
                    X = s_hat.dense()
                    rows.append({
                        "noise": eps, "trial": trial, "r": r, "option": opt,
                        "dual_rel_subopt": dual_rel,
                        "rel_subopt": abs(np.sum(C * X) - sol.p_star) / abs(sol.p_star),
                        "rel_infeas": s_hat.residual / b_norm,
                        "rel_dist": np.linalg.norm(X - sol.X) / x_norm,
                    })
    _write_csv(outdir / "perturb.csv",
               ["noise", "trial", "r", "option", "dual_rel_subopt",
                "rel_subopt", "rel_infeas", "rel_dist"], rows)
    return {"rows": rows, "r_star": r_star, "p_star": sol.p_star,
            "alpha": alpha}


# --------------------------------------------------------------------------
# oracle command
# --------------------------------------------------------------------------

def run_oracle(cfg: RunConfig) -> dict:
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    problem = load_problem(cfg.problem_source)
    if problem.n > ORACLE_MAX_N:
        raise SizeLimitError(f"dense oracle limited to n <= {ORACLE_MAX_N}")
    sol = solve_dense(problem)
    r_star, V_star = enumerate_solution_rank(sol)
    from .diagnostics import regularity_probe
    reg = regularity_probe(problem, sol.X, sol.y)
    summary = {
        "p_star": sol.p_star, "d_star": sol.d_star, "gap": sol.gap,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "iterations": sol.iterations, "converged": sol.converged,
        "rank": r_star,
        "regularity_probe": {
            "strong_duality_gap": reg.strong_duality_gap,
            "complementarity_residual": reg.complementarity_residual,
            "rank_X": reg.rank_X, "rank_Z": reg.rank_Z,
            "rank_sum": reg.strict_complementarity_rank_sum,
            "n": reg.n,
            "strictly_complementary": reg.strictly_complementary,
        },
        "versions": _versions(),
    }
    with open(outdir / "oracle.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, default=float)
    tio.write_dense_matrix(outdir / "X.txt", sol.X)
    tio.write_dense_matrix(outdir / "y.txt", sol.y.reshape(-1, 1))
    return summary


# --------------------------------------------------------------------------
# argument parsing and dispatch
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thinsdp", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--problem", help="maxcut:<path> | matcomp:<path> | "
                                          "synthetic:<family>,k=v,...")
        sp.add_argument("--graph", help="shortcut for --problem maxcut:<path>")
        sp.add_argument("--obs", help="shortcut for --problem matcomp:<path>")
        sp.add_argument("--alpha", default="auto",
                        help="penalty weight: number | auto | search")
        sp.add_argument("--tol", type=float, default=1e-8,
                        help="eigensolver relative residual tolerance")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=".", help="output directory")

    sp = sub.add_parser("solve", help="dual solve with scheduled recovery")
    common(sp)
    sp.add_argument("--schedule", default="adaptive:1.0",
                    help="polyak:<target-g> | sqrt:<eta0> | adaptive:<eta0>")
    sp.add_argument("--rank", default="auto")
    sp.add_argument("--option", type=int, choices=(1, 2), default=1)
    sp.add_argument("--gamma", type=float, default=1.1)
    sp.add_argument("--recover-at", default="auto",
                    help="comma list of iterations, default powers of 10")
    sp.add_argument("--max-iters", type=int, default=1000)
    sp.add_argument("--time-budget", type=float, default=None)

    sp = sub.add_parser("perturb", help="oracle-scored perturbation study")
    common(sp)
    sp.add_argument("--noise", default="1e-1,1e-2,1e-3,1e-4,1e-5",
                    help="comma list of noise levels (0 allowed)")
    sp.add_argument("--trials", type=int, default=3)
    sp.add_argument("--gamma", type=float, default=1.1)

    sp = sub.add_parser("oracle", help="dense reference solution (n <= 50)")
    common(sp)
    return p


def _config_from_args(args) -> RunConfig:
    source = args.problem
    if source is None and getattr(args, "graph", None):
        source = f"maxcut:{args.graph}"
    if source is None and getattr(args, "obs", None):
        source = f"matcomp:{args.obs}"
    if source is None:
        raise FormatError("no problem source given (--problem/--graph/--obs)")
    return RunConfig(
        problem_source=source,
        alpha=args.alpha,
        schedule=getattr(args, "schedule", "adaptive:1.0"),
        rank=getattr(args, "rank", "auto"),
        option=getattr(args, "option", 1),
        gamma=getattr(args, "gamma", 1.1),
        recover_at=getattr(args, "recover_at", "auto"),
        max_iters=getattr(args, "max_iters", 1000),
        time_budget=getattr(args, "time_budget", None),
        tol=args.tol,
        seed=args.seed,
        out=args.out,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "solve":
            run_solve(cfg)
        elif args.command == "perturb":
            noise = [float(t) for t in args.noise.split(",") if t.strip() != ""]
            run_perturb(cfg, noise, trials=args.trials)
        elif args.command == "oracle":
            run_oracle(cfg)
        return EXIT_OK
    except (FormatError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"thinsdp: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SizeLimitError as exc:
        print(f"thinsdp: size limit: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except (DivergenceError, RuntimeError) as exc:
        print(f"thinsdp: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

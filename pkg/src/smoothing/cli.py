"""Command-line front end.

    smoothing alpha    --preset NAME [--config FILE]
    smoothing roots    --b B
    smoothing simulate --preset NAME --depth N | --level T
    smoothing verify   --preset NAME --seed S [--solution aZ|YW|Wstar|zero]
    smoothing phase    --preset bary|cyclic_polya --range LO:HI
    smoothing psi      --config SPEC.json
    smoothing check    --preset NAME

Exit codes: 0 success, 1 domain or numerical error, 2 usage or config error.
"""
import argparse
from importlib import metadata
import math
import sys
import time

import numpy as np

from . import io as sio
from .branching import BranchingConfig, simulate_replicas
from .char_roots import chi_roots, lambda2, select_lambda2
from .errors import SmoothingError
from .similarity import GroupDescriptor
from .stable_laws import (
    Isotropic,
    PsiEvaluator,
    StableSpec,
    Zero,
)
from .verify import fixed_point_test, solution_sampler, standard_grid
from .weight_models import (
    PRESETS,
    check_assumptions,
    m_eval,
    make_preset,
    scan_alpha,
    table,
)

SUBCOMMANDS = ("alpha", "roots", "simulate", "verify", "phase", "psi", "check")


class UsageError(Exception):
    pass


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _parser():
    p = argparse.ArgumentParser(prog="smoothing", description="Smoothing-transform fixed points.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--preset")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--replicas", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--range", dest="prange")
    p.add_argument("--b", type=int)
    p.add_argument("--solution", choices=("aZ", "YW", "Wstar", "zero"))
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--alpha", type=float)
    p.add_argument("--plot", action="store_true", help="also render PNG figures next to the CSV files")
    return p


# ------------------------------------------------------------ resolution


def _table_atoms(atoms):
    out = []
    for a in atoms:
        a = dict(a)
        Ts = []
        for t in a.get("T", []):
            if isinstance(t, (int, float)):
                Ts.append({"scale": float(t), "rotation": [[1.0]]})
            else:
                Ts.append(t)
        a["T"] = Ts
        out.append(a)
    return out


def resolve_model(args, cfg):
    name = args.preset or cfg.get("preset")
    if name is None:
        raise UsageError("a model needs --preset (or 'preset' in the config)")
    if name not in PRESETS and name != "table":
        raise UsageError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    params = dict(cfg.get("params", {}))
    if name == "table":
        atoms = cfg.get("atoms", params.pop("atoms", None))
        if atoms is None:
            raise UsageError("preset 'table' needs 'atoms' in the config")
        grp = cfg.get("group")
        model = table(_table_atoms(atoms), group=GroupDescriptor.from_dict(grp) if grp else None,
                      dim=cfg.get("dim"))
        return model, {"preset": "table", "atoms": model.params["atoms"]}
    return make_preset(name, params), {"preset": name, "params": params}


def _alpha(model, args, cfg):
    if args.alpha is not None:
        return args.alpha
    if "alpha" in cfg:
        return float(cfg["alpha"])
    sc = scan_alpha(model)
    if sc.alpha is None:
        raise SmoothingError("no alpha with m(alpha) = 1 in the scan range")
    return sc.alpha


def _branch_cfg(args, cfg, default_depth=8):
    depth = args.depth if args.depth is not None else cfg.get("depth")
    level = args.level if args.level is not None else cfg.get("level")
    if depth is not None and level is not None:
        raise UsageError("--depth and --level are exclusive")
    if depth is None and level is None:
        depth = default_depth
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    return BranchingConfig(max_depth=depth, level=level, seed=seed, threads=max(1, args.threads),
                           prune=bool(cfg.get("prune", False)), eps_prune=float(cfg.get("eps_prune", 1e-10)))


def _parse_range(s):
    try:
        lo, hi = s.split(":")
        return int(lo), int(hi)
    except (ValueError, AttributeError):
        raise UsageError(f"--range must look like LO:HI, got {s!r}") from None


# --------------------------------------------------------------- commands


def _emit(out, args, stem, table):
    header, rows = table
    if args.format == "json":
        out.add(stem + ".json", sio.json_text({"columns": list(header), "rows": [list(r) for r in rows]}))
    else:
        out.add(stem + ".csv", sio.csv_text(header, rows))


def cmd_alpha(args, cfg, out):
    model, mcfg = resolve_model(args, cfg)
    sc = scan_alpha(model, seed=args.seed or 0)
    s = np.geomspace(0.05, 8.0, 60)
    if sc.alpha is not None:
        s = np.sort(np.append(s, sc.alpha))
    rows = []
    for v in s:
        m, se = m_eval(model, float(v), seed=args.seed or 0)
        rows.append((float(v), m, se))
    _emit(out, args, "m_curve", (["s", "m", "m_se"], rows))
    alpha = sc.alpha if sc.alpha is not None else math.inf
    se = 0.0 if model.analytic_m is not None else sc.tol
    summary = {"alpha": alpha, "alpha_se": se, "sign_changes": [list(map(float, c)) for c in sc.sign_changes]}
    out.add("alpha.json", sio.json_text(summary))
    if args.plot and out.dir is not None:
        from . import plotting
        plotting.m_curve(out.dir / "m_curve.png", [r[0] for r in rows], [r[1] for r in rows], alpha)
    print(format(alpha, ".12g"))
    return {"model": mcfg}


def cmd_roots(args, cfg, out):
    b = args.b if args.b is not None else cfg.get("b")
    if b is None:
        raise UsageError("roots needs --b")
    rs = chi_roots(int(b))
    rows = [(float(z.real), float(z.imag), float(r)) for z, r in zip(rs.roots, rs.residuals)]
    _emit(out, args, "roots", (["re", "im", "residual"], rows))
    l2 = select_lambda2(rs)
    out.add("lambda2.json", sio.json_text({"b": int(b), "lambda2": [l2.real, l2.imag],
                                         "alpha": 1.0 / l2.real if l2.real > 0 else math.inf,
                                         "max_residual": rs.max_residual(), "iterations": rs.iterations}))
    if args.plot and out.dir is not None:
        from . import plotting
        plotting.roots(out.dir / "roots.png", rs.roots)
    print(f"lambda2 = {l2.real:.16g} + {l2.imag:.16g}i")
    return {"b": int(b)}


def cmd_simulate(args, cfg, out):
    model, mcfg = resolve_model(args, cfg)
    alpha = _alpha(model, args, cfg)
    bc = _branch_cfg(args, cfg)
    R = args.replicas or int(cfg.get("replicas", 1000))
    b = simulate_replicas(model, alpha, bc, R)
    d = model.dim
    w = cfg.get("w")
    if w is None:
        from .verify import eigen_check
        ec = eigen_check(model, 20_000, seed=bc.seed)
        w = ec.w if ec is not None else None
    Zw = b.Zw(w) if w is not None else None
    header = ["replica", "W"] + [f"Wstar_{i}" for i in range(d)]
    if Zw is not None:
        header += [f"Zw_{i}" for i in range(d)]
    header += ["node_count", "discarded_mass_bound", "truncated"]
    rows = []
    for i in range(R):
        r = [i, float(b.W[i])] + [float(v) for v in b.Wstar[i]]
        if Zw is not None:
            r += [float(v) for v in Zw[i]]
        r += [float(b.node_count[i]), float(b.discarded[i]), bool(b.truncated[i])]
        rows.append(r)
    _emit(out, args, "draws", (header, rows))
    se = lambda x: float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan
    summ = {"alpha": alpha, "replicas": R, "depth": b.depth, "level": b.level,
            "W_mean": float(b.W.mean()), "W_se": se(b.W),
            "Wstar_mean": b.Wstar.mean(axis=0), "Wstar_se": [se(b.Wstar[:, i]) for i in range(d)],
            "truncated": int(b.truncated.sum()), "w": w}
    if Zw is not None:
        summ["Zw_mean"] = Zw.mean(axis=0)
        summ["Zw_se"] = [se(Zw[:, i]) for i in range(d)]
    if b.Zc is not None:
        summ["Zc_mean"] = [float(b.Zc.real.mean()), float(b.Zc.imag.mean())]
        summ["Zc_se"] = [se(b.Zc.real), se(b.Zc.imag)]
    out.add("summary.json", sio.json_text(summ))
    if args.plot and out.dir is not None:
        from . import plotting
        plotting.histogram(out.dir / "W.png", b.W, "W_n")
    print(f"W mean {summ['W_mean']:.6g} +- {summ['W_se']:.3g} over {R} replicas")
    return {"model": mcfg, "alpha": alpha, "depth": bc.max_depth, "level": bc.level}


def _spec_from(cfg, model, alpha):
    sd = cfg.get("spec")
    if sd is None:
        return None
    if "group" not in sd:
        return StableSpec.from_dict(sd, group=model.group)
    return StableSpec.from_dict(sd)


def cmd_verify(args, cfg, out):
    if args.seed is None:
        raise UsageError("verify requires --seed (pre-registered seeds)")
    model, mcfg = resolve_model(args, cfg)
    alpha = _alpha(model, args, cfg)
    bc = _branch_cfg(args, cfg, default_depth=12)
    sol = args.solution or cfg.get("solution")
    spec = _spec_from(cfg, model, alpha)
    a_or_w = cfg.get("a")
    if sol is None:
        sol = "aZ" if model.homogeneous else "Wstar"
    if sol == "aZ":
        if a_or_w is None:
            a_or_w = 1.0 if model.is_complex else None
        if a_or_w is None:
            from .verify import eigen_check
            ec = eigen_check(model, seed=args.seed)
            if ec is None:
                raise SmoothingError("no eigenvector of E[Z_1] for eigenvalue 1: aZ solution undefined")
            a_or_w = ec.w
        spec = None
    elif sol == "YW":
        if spec is None:
            spec = StableSpec(alpha, model.group, Isotropic(float(cfg.get("c", 1.0))))
        a_or_w = None
    elif sol == "Wstar":
        spec = StableSpec(alpha, model.group, Zero())
        a_or_w = None
    else:
        spec, a_or_w = StableSpec(alpha, model.group, Zero()), None
    S = solution_sampler(model, alpha, spec, a_or_w, bc, args.seed)
    v = fixed_point_test(model, S, n=max(args.n, 10_000), level=float(cfg.get("test_level", 0.01)),
                         seed=args.seed, scale=float(cfg.get("grid_scale", 1.0)))
    d = model.dim
    rows = [[*t["x"], t["lhs_re"], t["lhs_im"], t["rhs_re"], t["rhs_im"], t["se"], t["z"]] for t in v.table]
    _emit(out, args, "ecf", ([f"x_{i}" for i in range(d)] + ["lhs_re", "lhs_im", "rhs_re", "rhs_im", "se", "z"],
                                    rows))
    out.add("verdict.json", sio.json_text(v.to_dict()))
    if args.plot and out.dir is not None:
        from . import plotting
        lhs = np.array([t["lhs_re"] + 1j * t["lhs_im"] for t in v.table])
        rhs = np.array([t["rhs_re"] + 1j * t["rhs_im"] for t in v.table])
        plotting.ecf_compare(out.dir / "ecf.png", lhs, rhs, np.array([t["se"] for t in v.table]))
    print(f"{'PASS' if v.passed else 'FAIL'} statistic {v.statistic:.4g} threshold {v.threshold:.4g}")
    return {"model": mcfg, "alpha": alpha, "solution": sol, "n": v.n, "depth": bc.max_depth}


def phase_rows(preset, lo, hi):
    rows = []
    for b in range(lo, hi + 1):
        if preset in ("bary", "bary_spacings"):
            l2 = lambda2(b)
            re = l2.real
            alpha = 1.0 / re if re > 0 else math.inf
        elif preset == "cyclic_polya":
            re = math.cos(2 * math.pi / b)
            alpha = 1.0 / re if re > 1e-12 else math.inf
        else:
            raise UsageError("phase supports --preset bary or cyclic_polya")
        if abs(alpha - 2.0) < 1e-12:
            alpha = 2.0  # cos(2 pi/6) rounds to 0.5000000000000001
        rows.append((b, re, alpha, 0.0, "gaussian" if alpha >= 2 else "stable"))
    return rows


def cmd_phase(args, cfg, out):
    preset = args.preset or cfg.get("preset")
    lo, hi = _parse_range(args.prange or cfg.get("range"))
    if preset in ("bary", "bary_spacings") and lo < 4:
        raise UsageError("bary phase needs b >= 4")
    if preset == "cyclic_polya" and lo < 3:
        raise UsageError("cyclic_polya phase needs b >= 3")
    rows = phase_rows(preset, lo, hi)
    _emit(out, args, "phase", (["b", "re_lambda2", "alpha", "alpha_se", "regime"], rows))
    if args.plot and out.dir is not None:
        from . import plotting
        plotting.phase(out.dir / "phase.png", [r[0] for r in rows], [r[2] for r in rows], "b")
    for r in rows:
        print(f"b={r[0]:3d}  alpha={r[2]:.10g}  {r[4]}")
    return {"preset": preset, "range": [lo, hi]}


def cmd_psi(args, cfg, out):
    sd = cfg.get("spec", cfg)
    if "payload" not in sd:
        raise UsageError("psi needs a StableSpec config with 'alpha', 'payload' and 'group' (or --preset)")
    if "group" in sd:
        spec = StableSpec.from_dict(sd)
    else:
        if not args.preset:
            raise UsageError("spec without 'group' needs --preset for the group")
        spec = StableSpec.from_dict(sd, group=make_preset(args.preset).group)
    grid = standard_grid(spec.dim, scale=float(cfg.get("grid_scale", 1.0)), seed=args.seed or 0)
    ev = PsiEvaluator(spec)
    vals = np.atleast_1d(ev(grid))
    d = spec.dim
    rows = [[*x, v.real, v.imag, ev.achieved] for x, v in zip(grid, vals)]
    _emit(out, args, "psi", ([f"x_{i}" for i in range(d)] + ["re_psi", "im_psi", "abs_err_bound"], rows))
    if args.plot and out.dir is not None:
        from . import plotting
        plotting.psi_grid(out.dir / "psi.png", vals.real, vals.imag)
    print(f"{len(rows)} grid points written")
    return {"spec": spec.to_dict()}


def cmd_check(args, cfg, out):
    model, mcfg = resolve_model(args, cfg)
    alpha = _alpha(model, args, cfg)
    rep = check_assumptions(model, alpha, n_mc=args.n, seed=args.seed or 0)
    out.add("assumptions.json", sio.json_text(rep.to_dict()))
    for k, e in rep.entries.items():
        print(f"{k:10s} {e['pass']}")
    return {"model": mcfg, "alpha": alpha}


COMMANDS = {"alpha": cmd_alpha, "roots": cmd_roots, "simulate": cmd_simulate, "verify": cmd_verify,
            "phase": cmd_phase, "psi": cmd_psi, "check": cmd_check}


def run(argv=None):
    p = _parser()
    try:
        args = p.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    t0 = time.time()
    try:
        cfg = sio.load_config(args.config) if args.config else {}
        out = sio.Output(args.out)
        resolved = COMMANDS[args.command](args, cfg, out)
    except (UsageError, sio.ConfigError, KeyError, TypeError, OSError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (SmoothingError, ArithmeticError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    man = {"subcommand": args.command, "config": cfg, "resolved": resolved, "argv": list(argv or sys.argv[1:]),
           "seed": args.seed, "replicas": args.replicas, "threads": args.threads, "version": _version(),
           "wall_clock_s": time.time() - t0, "outputs": out.digests()}
    if out.dir is not None:
        (out.dir / "manifest.json").write_text(sio.json_text(man))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

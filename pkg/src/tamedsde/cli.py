"""Batch front-end: parse a config, dispatch to the modules, write reports.

Usage:  tamedsde [--config FILE] COMMAND [flags]

Commands: simulate, converge, lyapunov, fk, variational, ito-check, diverge.
Config files are flat key=value INI text whose section names match the
command (plus an optional [common] section); command-line flags override
file values.  Exit status: 0 on success, 2 when a check fails (violations
or flagged estimates), 1 on usage errors.

Deltas accept either comma lists ("0.1,0.05") or dyadic ranges
("2^-3..2^-8"); vectors are comma lists ("1,1"); model parameters are
semicolon-separated assignments ("alpha=1,1,1;beta=0.5,0.5").
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from pathlib import Path

import numpy as np

from . import convergence, feynman_kac, lyapunov, variational
from .integrators import TamedSchemeConfig, simulate_ensemble, simulate_path, verify_ito_form
from .models import make_model, make_observable_triple, model_names, observable_field
from .randomness import SeedSpec, auxiliary_rng
from .reports import svg_loglog, write_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECK_FAILED = 2


class _Parser(argparse.ArgumentParser):
    """Parser whose usage errors exit 1 (2 is reserved for check failures)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_with_usage(message))

    def exit_with_usage(self, message):
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_USAGE


def parse_deltas(text: str) -> list[float]:
    text = text.strip()

    def one(tok: str) -> float:
        tok = tok.strip()
        if "^" in tok:
            base, exp = tok.split("^")
            return float(base) ** float(exp)
        return float(tok)

    if ".." in text:
        lo_s, hi_s = text.split("..")
        if "^" not in lo_s or "^" not in hi_s:
            raise ValueError("range syntax requires powers, e.g. 2^-3..2^-8")
        base = float(lo_s.split("^")[0])
        e0 = int(lo_s.split("^")[1])
        e1 = int(hi_s.split("^")[1])
        step = 1 if e1 >= e0 else -1
        return [base**e for e in range(e0, e1 + step, step)]
    return [one(tok) for tok in text.split(",") if tok.strip()]


def parse_vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",") if v.strip()])


def _cast(token: str):
    token = token.strip()
    try:
        if "." not in token and "e" not in token.lower():
            return int(token)
        return float(token)
    except ValueError:
        return token


def parse_params(text: str) -> dict:
    """'alpha=1,1,1;beta=0.5,0.5;n=2' -> {'alpha': (1,1,1), 'beta': ..., 'n': 2}"""
    out: dict = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"malformed parameter assignment {part!r}")
        key, val = part.split("=", 1)
        items = [_cast(v) for v in val.split(",") if v.strip() != ""]
        out[key.strip()] = tuple(items) if len(items) > 1 else items[0]
    return out


def _add_common(p: argparse.ArgumentParser, model_required=True):
    if model_required:
        p.add_argument("--model", required=True, help=f"one of {', '.join(model_names())}")
    p.add_argument("--params", default="", help="model parameters, e.g. alpha=1,1,1;beta=0.5,0.5")
    p.add_argument("--seed", type=int, default=0, help="master seed (64-bit)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: TAMED_SDE_THREADS or hardware)")
    p.add_argument("--backend", default=None, choices=["auto", "numba", "numpy"])
    p.add_argument("--out", default="reports", help="output directory")
    p.add_argument("--plot", action="store_true", help="also write an SVG plot")
    p.add_argument("--deterministic", action="store_true",
                   help="suppress the timestamp header in CSV outputs")


def build_parser() -> _Parser:
    top = _Parser(prog="tamedsde", description=__doc__,
                  formatter_class=argparse.RawDescriptionHelpFormatter)
    top.add_argument("--config", default=None, help="INI config file")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="terminal-state ensemble (optional trajectory dump)")
    _add_common(p)
    p.add_argument("--scheme", default="tamed", choices=["tamed", "em"])
    p.add_argument("--delta", type=float, default=1e-2)
    p.add_argument("--qprime", type=float, default=3.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--x0", default="1")
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--f", default=None, help="source observable name")
    p.add_argument("--c", default=None, help="discount observable name")
    p.add_argument("--g", default=None, help="terminal observable name")
    p.add_argument("--record-paths", action="store_true",
                   help="dump full trajectories (small N only)")

    p = sub.add_parser("converge", help="weak/strong error curve with fitted slope")
    _add_common(p)
    p.add_argument("--scheme", default="tamed", choices=["tamed", "em"])
    p.add_argument("--deltas", required=True, help="e.g. 2^-3..2^-8 or 0.1,0.05")
    p.add_argument("--delta-ref", type=float, default=None)
    p.add_argument("--qprime", type=float, default=3.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--x0", default="1")
    p.add_argument("--N", type=int, default=10000)
    p.add_argument("--h", default="sumsq", help="weak-mode observable name")
    p.add_argument("--mode", default="weak", choices=["weak", "strong"])
    p.add_argument("--ref", default="coupled", choices=["coupled", "analytic", "exact"])

    p = sub.add_parser("lyapunov", help="certificate/envelope/integrability checks")
    _add_common(p)
    p.add_argument("--check", required=True,
                   choices=["certificate", "lipschitz", "smallo", "expint"])
    p.add_argument("--points", type=int, default=100000)
    p.add_argument("--box", default=None,
                   help="override domain half-width, e.g. 5 or -5..5")
    p.add_argument("--mode", default="pairs", choices=["pairs", "pointwise"])
    p.add_argument("--radii", default="5,10,20,40")

    p = sub.add_parser("fk", help="Feynman-Kac estimate / gradient / PDE residual")
    _add_common(p)
    p.add_argument("--what", default="estimate", choices=["estimate", "gradient", "pde"])
    p.add_argument("--scheme", default="tamed", choices=["tamed", "em"])
    p.add_argument("--f", default="zero")
    p.add_argument("--c", default="zero")
    p.add_argument("--g", default="zero")
    p.add_argument("--s", type=float, default=0.0, help="start time")
    p.add_argument("--t", type=float, default=0.5, help="evaluation time (pde)")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--x0", default="1")
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--qprime", type=float, default=3.0)
    p.add_argument("--N", type=int, default=10000)
    p.add_argument("--hx", type=float, default=0.05)
    p.add_argument("--ht", type=float, default=0.02)

    p = sub.add_parser("variational", help="derivative-process diagnostics")
    _add_common(p)
    p.add_argument("--what", default="quotient", choices=["quotient", "supmoment", "holder"])
    p.add_argument("--x0", default="1")
    p.add_argument("--kappa", default=None, help="unit direction (default e_1)")
    p.add_argument("--rlist", default="1e-2,5e-3,2.5e-3,1e-4")
    p.add_argument("--k", type=float, default=2.0, help="moment order")
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--gaps", default="2^-4..2^-9")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--N", type=int, default=10000)

    p = sub.add_parser("ito-check", help="Ito-form equivalence of the tamed increment")
    _add_common(p)
    p.add_argument("--y", default="1")
    p.add_argument("--window", type=float, default=0.1)
    p.add_argument("--dts", default="1e-3,5e-4,2.5e-4")
    p.add_argument("--n-paths", type=int, default=20000)

    p = sub.add_parser("diverge", help="explicit-scheme blow-up probe")
    _add_common(p)
    p.add_argument("--scheme", default="em", choices=["tamed", "em"])
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--x0", default="3")
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--qprime", type=float, default=3.0)
    p.add_argument("--blow", type=float, default=1e10)

    return top


def _apply_config(parser: _Parser, argv: list[str]) -> None:
    """Load defaults from the INI file named by --config (if any)."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, rest = pre.parse_known_args(argv)
    if known.config is None:
        return
    cfg = configparser.ConfigParser()
    cfg.optionxform = str
    read = cfg.read(known.config)
    if not read:
        raise SystemExit(parser.exit_with_usage(f"config file {known.config!r} not found"))
    command = next((tok for tok in rest if not tok.startswith("-")), None)
    values: dict = {}
    for section in ("common", command):
        if section and cfg.has_section(section):
            for key, val in cfg.items(section):
                values[key.replace("-", "_")] = val
    if not values:
        return
    for action in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
        defaults = {}
        for act in action._actions:
            if act.dest in values:
                raw = values[act.dest]
                if act.type is not None:
                    defaults[act.dest] = act.type(raw)
                elif isinstance(act, argparse._StoreTrueAction):
                    defaults[act.dest] = raw.strip().lower() in ("1", "true", "yes")
                else:
                    defaults[act.dest] = raw
        action.set_defaults(**defaults)


def _bundle(args):
    params = parse_params(args.params) if args.params else {}
    return make_model(args.model, **params)


def _obs_or_none(args):
    names = [getattr(args, "f", None), getattr(args, "c", None), getattr(args, "g", None)]
    if all(n is None for n in names):
        return None
    return make_observable_triple(
        f=names[0] or "zero", c=names[1] or "zero", g=names[2] or "zero"
    )


def _cmd_simulate(args) -> int:
    bundle = _bundle(args)
    model = bundle.model
    x0 = parse_vector(args.x0)
    cfg = TamedSchemeConfig(delta=args.delta, q_prime=args.qprime)
    obs = _obs_or_none(args)
    header = (
        ["path", "t"]
        + [f"x_{i}" for i in range(model.dim)]
        + ["discount_acc", "source_acc"]
    )
    rows = []
    if args.record_paths:
        steps = math.ceil(args.T / args.delta)
        if args.N * steps > 2_000_000:
            print("refusing to record: N*steps too large", file=sys.stderr)
            return EXIT_USAGE
        for p in range(args.N):
            traj = simulate_path(model, args.scheme, x0, args.T, cfg, obs,
                                 seed=SeedSpec(args.seed, p))
            for st in traj:
                rows.append([p, st.t, *st.x, st.discount_acc, st.source_acc])
        diverged = 0
    else:
        ens = simulate_ensemble(
            model, args.scheme, x0, args.T, cfg, observables=obs, N=args.N,
            seed=args.seed, threads=args.threads, backend=args.backend,
        )
        for p in range(ens.n_paths):
            rows.append(
                [p, ens.t_final, *ens.x[p], ens.discount_acc[p], ens.source_acc[p]]
            )
        diverged = ens.diverged_count
    out = write_csv(Path(args.out) / "simulate.csv", header, rows,
                    deterministic=args.deterministic,
                    meta={"model": args.model, "scheme": args.scheme,
                          "delta": args.delta, "seed": args.seed, "N": args.N})
    print(f"wrote {out} ({len(rows)} rows, {diverged} diverged paths)")
    return EXIT_OK


def _cmd_converge(args) -> int:
    bundle = _bundle(args)
    model = bundle.model
    x0 = parse_vector(args.x0)
    deltas = parse_deltas(args.deltas)
    h_value, _ = observable_field(args.h)

    if args.ref == "coupled":
        ref = convergence.CoupledReference(delta_ref=args.delta_ref)
    elif args.ref == "analytic":
        if args.model != "ou" or args.scheme != "em" or args.h != "x1":
            print("analytic reference supports only: --model ou --scheme em --h x1",
                  file=sys.stderr)
            return EXIT_USAGE
        factor = bundle.info["em_mean_factor"]
        true = float(bundle.info["mean"](x0, args.T)[0])
        ref = convergence.AnalyticReference(
            true_value=true,
            scheme_mean=lambda d: float(factor(d, round(args.T / d)) * x0[0]),
        )
    else:  # exact
        if "exact_terminal" not in bundle.info:
            print(f"model {args.model} has no exact solution", file=sys.stderr)
            return EXIT_USAGE
        ref = convergence.ExactSolutionReference(terminal=bundle.info["exact_terminal"])

    rep = convergence.error_curve(
        model, args.scheme, args.mode, h_value, x0, args.T, deltas, ref,
        N=args.N, seed=args.seed, q_prime=args.qprime, threads=args.threads,
        backend=args.backend,
    )
    header = ["delta", "error", "ci", "scheme", "mode", "model", "h", "N", "seed"]
    rows = [
        [d, e, c, args.scheme, args.mode, args.model, args.h, args.N, args.seed]
        for d, e, c in rep.rows
    ]
    out = write_csv(Path(args.out) / "converge.csv", header, rows,
                    deterministic=args.deterministic,
                    meta={"slope": rep.slope, "intercept": rep.intercept,
                          "r_squared": rep.r_squared,
                          "noise_dominated": rep.noise_dominated})
    print(rep)
    print(f"wrote {out}")
    if args.plot:
        svg = svg_loglog(Path(args.out) / "converge.svg",
                         [r[0] for r in rep.rows], [r[1] for r in rep.rows],
                         fit=(rep.slope, rep.intercept),
                         title=f"{args.model}/{args.scheme} {args.mode} error")
        print(f"wrote {svg}")
    return EXIT_CHECK_FAILED if rep.noise_dominated else EXIT_OK


def _fmt_point(x) -> str:
    return "(" + " ".join(format(v, ".6g") for v in np.atleast_1d(x)) + ")"


def _cmd_lyapunov(args) -> int:
    bundle = _bundle(args)
    model = bundle.model
    if args.box is not None:
        from .model_core import DomainBox

        text = args.box
        if ".." in text:
            lo, hi = (float(v) for v in text.split(".."))
        else:
            hi = abs(float(text))
            lo = -hi
        box = DomainBox(np.full(model.dim, lo), np.full(model.dim, hi))
    else:
        box = model.domain
    rng = auxiliary_rng(args.seed, 0)
    rows = []
    failed = False

    if args.check == "certificate":
        cert = bundle.certificate
        if cert is None:
            msg = bundle.info.get("certificate_error", "no certificate for this model")
            print(f"certificate unavailable: {msg}", file=sys.stderr)
            return EXIT_USAGE
        pts = box.sample(args.points, rng)
        res = lyapunov.certificate_residual(model, cert, 0.0, pts)
        vv = np.asarray(cert.v0.value(0.0, pts))
        slack = 1e-9 * (1.0 + np.abs(vv))
        bad = res > slack
        worst = int(np.argmax(res))
        rows.append(["certificate", args.model, args.points, int(bad.sum()),
                     float(res.max()), _fmt_point(pts[worst])])
        failed = bool(bad.any())
    elif args.check == "lipschitz":
        if bundle.envelope is None:
            print("no Lipschitz envelope for this model", file=sys.stderr)
            return EXIT_USAGE
        rep = lyapunov.lipschitz_check(
            model, bundle.envelope, mode=args.mode, samples=args.points,
            seed=args.seed,
        )
        worst = _fmt_point(rep.violations[0]) if not rep.passed else "-"
        rows.append([f"lipschitz-{args.mode}", args.model, rep.checked,
                     len(rep.margins), rep.worst_margin, worst])
        failed = not rep.passed
    elif args.check == "smallo":
        if bundle.envelope is None or bundle.certificate is None:
            print("smallo requires both envelope and certificate", file=sys.stderr)
            return EXIT_USAGE
        radii = [float(v) for v in args.radii.split(",")]
        v_field = bundle.info.get("smallo_field", bundle.certificate.v0)
        prof = lyapunov.small_o_profile(
            bundle.envelope, v_field, radii,
            samples_per_sphere=max(64, args.points // max(len(radii), 1)),
            seed=args.seed, dim=model.dim,
        )
        for r, mx, skipped in prof:
            rows.append([f"smallo-r{r:g}", args.model, args.points, skipped, mx, "-"])
        ratios = [mx for _, mx, _ in prof]
        failed = any(
            not (a > b) for a, b in zip(ratios, ratios[1:])
        )
    else:  # expint
        if bundle.exp_data is None:
            print("no exponential-integrability data for this model", file=sys.stderr)
            return EXIT_USAGE
        pts = box.sample(args.points, rng)
        mx, ok, res = lyapunov.exp_integrability_check(model, bundle.exp_data, pts)
        worst = int(np.argmax(res))
        rows.append(["expint", args.model, args.points, int((~ok) * 1),
                     mx, _fmt_point(pts[worst])])
        failed = not ok

    header = ["check", "model", "points", "violations", "max_residual", "worst_point"]
    out = write_csv(Path(args.out) / "lyapunov.csv", header, rows,
                    deterministic=args.deterministic,
                    meta={"seed": args.seed})
    for row in rows:
        print(" ".join(str(v) for v in row))
    print(f"wrote {out}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def _cmd_fk(args) -> int:
    bundle = _bundle(args)
    model = bundle.model
    x0 = parse_vector(args.x0)
    obs = make_observable_triple(f=args.f, c=args.c, g=args.g)
    header = (
        ["quantity", "t"]
        + [f"x_{i}" for i in range(model.dim)]
        + ["mean", "ci", "delta", "N", "seed"]
    )
    rows = []
    flagged = False
    if args.what == "estimate":
        est = feynman_kac.fk_estimate(
            model, obs, args.s, x0, args.T, args.delta, args.N, seed=args.seed,
            scheme=args.scheme, q_prime=args.qprime, threads=args.threads,
            backend=args.backend,
        )
        rows.append(["fk", args.s, *x0, est.mean, est.ci_half_width,
                     args.delta, args.N, args.seed])
        flagged = est.flagged
        print(f"fk estimate: {est}")
    elif args.what == "gradient":
        gr = feynman_kac.fk_gradient(
            model, obs, args.s, x0, args.T, args.delta, args.N, seed=args.seed,
            threads=args.threads, backend=args.backend,
        )
        rows.append(["fk", args.s, *x0, gr.value.mean, gr.value.ci_half_width,
                     args.delta, args.N, args.seed])
        for i in range(model.dim):
            rows.append([f"grad_x{i}", args.s, *x0, gr.gradient[i],
                         gr.gradient_ci[i], args.delta, args.N, args.seed])
        flagged = gr.flagged
        print(f"fk gradient: {gr.gradient} +/- {gr.gradient_ci}")
    else:  # pde
        res = feynman_kac.pde_residual(
            model, obs, args.t, x0, args.T, fd_steps=(args.hx, args.ht),
            delta=args.delta, N=args.N, seed=args.seed, scheme=args.scheme,
            q_prime=args.qprime, threads=args.threads, backend=args.backend,
        )
        rows.append(["pde_residual", args.t, *x0, res.residual,
                     res.ci_half_width, args.delta, args.N, args.seed])
        flagged = res.flagged
        print(f"pde residual: {res.residual:.6e} +/- {res.ci_half_width:.2e} "
              f"(stencil {res.stencil_size}, outside-domain {res.outside_domain})")
    out = write_csv(Path(args.out) / "fk.csv", header, rows,
                    deterministic=args.deterministic, meta={"model": args.model})
    print(f"wrote {out}")
    return EXIT_CHECK_FAILED if flagged else EXIT_OK


def _cmd_variational(args) -> int:
    bundle = _bundle(args)
    model = bundle.model
    x0 = parse_vector(args.x0)
    if args.kappa is not None:
        kappa = parse_vector(args.kappa)
    else:
        kappa = np.zeros(model.dim)
        kappa[0] = 1.0
    header = ["quantity", "param", "value", "ci", "N", "seed"]
    rows = []
    code = EXIT_OK
    if args.what == "quotient":
        r_list = [float(v) for v in args.rlist.split(",")]
        res = variational.difference_quotient_error(
            model, x0, kappa, r_list, args.T, args.delta, args.N,
            seed=args.seed, threads=args.threads, backend=args.backend,
        )
        for r, est, ci, ndiv in res:
            rows.append(["diff_quotient", r, est, ci, args.N, args.seed])
            print(f"r={r:.3e}  E sup|quotient - Jk| = {est:.6e} +/- {ci:.2e}"
                  f"  ({ndiv} diverged)")
    elif args.what == "supmoment":
        res = variational.sup_moment(
            model, x0, [kappa] if args.order == 1 else [kappa, kappa],
            args.k, args.T, delta=args.delta, N=args.N, seed=args.seed,
            threads=args.threads,
        )
        rows.append(["sup_moment", args.k, res.estimate, res.ci_half_width,
                     args.N, args.seed])
        rows.append(["tail_share", args.k, res.tail_share, 0.0, args.N, args.seed])
        print(f"E sup|dX|^k = {res.estimate:.6e} +/- {res.ci_half_width:.2e} "
              f"(tail share {res.tail_share:.3f}, diverged {res.diverged_count})")
        if res.unreliable:
            print("estimate UNRELIABLE: >0.1% of paths diverged")
            code = EXIT_CHECK_FAILED
    else:  # holder
        gaps = parse_deltas(args.gaps)
        res = variational.holder_in_time_probe(
            model, x0, args.order, args.k, gaps, delta=args.delta, N=args.N,
            seed=args.seed, threads=args.threads,
        )
        for g, est, ci in res.rows:
            rows.append(["holder_gap", g, est, ci, args.N, args.seed])
        rows.append(["holder_slope", args.k, res.slope, 0.0, args.N, args.seed])
        print(f"holder slope {res.slope:.4f} (R^2 {res.r_squared:.4f})")
    out = write_csv(Path(args.out) / "variational.csv", header, rows,
                    deterministic=args.deterministic, meta={"model": args.model})
    print(f"wrote {out}")
    return code


def _cmd_ito_check(args) -> int:
    bundle = _bundle(args)
    y = parse_vector(args.y)
    dts = [float(v) for v in args.dts.split(",")]
    rows = verify_ito_form(bundle.model, y, args.window, dts, seed=args.seed,
                           n_paths=args.n_paths)
    slope, _, r2 = convergence.fit_slope([(d, m) for d, m, _ in rows])
    header = ["micro_dt", "mean_discrepancy", "rms_discrepancy"]
    out = write_csv(Path(args.out) / "ito_check.csv", header, rows,
                    deterministic=args.deterministic,
                    meta={"model": args.model, "slope": slope})
    for d, m, r in rows:
        print(f"micro_dt={d:.3e}  mean disc {m:.3e}  rms {r:.3e}")
    print(f"slope {slope:.4f} (R^2 {r2:.4f})")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_diverge(args) -> int:
    bundle = _bundle(args)
    x0 = parse_vector(args.x0)
    rep = convergence.divergence_probe(
        bundle.model, x0, args.delta, args.steps, N=args.N, seed=args.seed,
        blow_threshold=args.blow, scheme=args.scheme, q_prime=args.qprime,
        threads=args.threads, backend=args.backend,
    )
    header = ["step", "first_passage_count"]
    rows = [[k, int(c)] for k, c in enumerate(rep.first_passage)]
    out = write_csv(Path(args.out) / "diverge.csv", header, rows,
                    deterministic=args.deterministic,
                    meta={"fraction": rep.fraction, "model": args.model,
                          "scheme": args.scheme})
    print(rep)
    print(f"wrote {out}")
    return EXIT_OK


_DISPATCH = {
    "simulate": _cmd_simulate,
    "converge": _cmd_converge,
    "lyapunov": _cmd_lyapunov,
    "fk": _cmd_fk,
    "variational": _cmd_variational,
    "ito-check": _cmd_ito_check,
    "diverge": _cmd_diverge,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        return _DISPATCH[args.command](args)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())

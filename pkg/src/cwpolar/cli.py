"""Command-line front end.

One binary with subcommands wiring the chain builders, checks, profiles, and
the coding loop into reproducible runs. All stochastic subcommands take a
seed and produce byte-identical outputs on replay; every CSV starts with
"# key=value" lines recording the full configuration.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from fractions import Fraction

import numpy as np

from .analysis import (TableCache, boundary_bound_check, entropy_rate_estimate,
                       martingale_check, mixing_check, polarization_fractions,
                       transform_inequality_check, triple_entropy_check)
from .chains import (build_condensed_chain, build_mod_chain,
                     build_prefix_chain, build_window_chain, final_state_set)
from .coding import (construct_code, construct_code_at_rate, decode, encode,
                     load_code, save_code, simulate_fer)
from .errors import BadChannel, BadFile, DomainError, Violation
from .params import (PROFILE_COLUMNS, Conditioning, exact_profile, mc_profile)
from .process import (FimProcess, attach_channel, channel_bec, channel_bsc,
                      channel_constant, channel_noiseless, detect_phases,
                      load_chain, make_boundary, save_chain,
                      stationary_distribution, validate_process)

__all__ = ["main", "run", "parse_chain", "parse_channel"]


# ---------------------------------------------------------------------------
# Argument parsing helpers
# ---------------------------------------------------------------------------

def parse_chain(spec: str) -> FimProcess:
    """Builder shorthand (prefix:B:A, condensed:B:A, mod:B[:A],
    window:B:ALPHA:BETA) or a chain file path."""
    parts = spec.split(":")
    try:
        if parts[0] == "prefix" and len(parts) == 3:
            return build_prefix_chain(int(parts[1]), int(parts[2]))
        if parts[0] == "condensed" and len(parts) == 3:
            return build_condensed_chain(int(parts[1]), int(parts[2]))
        if parts[0] == "mod" and len(parts) in (2, 3):
            return build_mod_chain(int(parts[1]),
                                   int(parts[2]) if len(parts) == 3 else 0)
        if parts[0] == "window" and len(parts) == 4:
            return build_window_chain(int(parts[1]), Fraction(parts[2]),
                                      Fraction(parts[3]))
    except ValueError:
        raise BadFile(f"malformed chain shorthand {spec!r}") from None
    if os.path.exists(spec):
        return load_chain(spec)
    raise BadFile(f"{spec!r} is neither a chain shorthand nor a file")


def parse_channel(spec: str | None):
    if spec in (None, "", "none", "native"):
        return None
    name, _, arg = spec.partition(":")
    if name == "noiseless":
        return channel_noiseless()
    if name == "constant":
        return channel_constant(arg or "*")
    try:
        if name == "bsc":
            return channel_bsc(Fraction(arg))
        if name == "bec":
            return channel_bec(Fraction(arg))
    except (ValueError, ZeroDivisionError):
        raise BadChannel(f"malformed channel parameter in {spec!r}") from None
    raise BadChannel(f"unknown channel {spec!r}")


def _build_proc(args) -> FimProcess:
    proc = parse_chain(args.chain)
    channel = parse_channel(getattr(args, "channel", None))
    if channel is not None:
        proc = attach_channel(proc, channel)
    return proc


def _boundary(proc, ps, n, psi0_arg, psiN_arg):
    if psi0_arg:
        psi0 = psi0_arg.split(",")
    elif proc.meta.get("builder") == "mod":
        psi0 = ["0"]
    else:
        psi0 = [s for s in proc.states if ps.phase[s] == 0]
    if psiN_arg:
        psiN = psiN_arg.split(",")
    else:
        try:
            psiN = list(final_state_set(proc, n))
        except DomainError:
            target = (ps.phase[psi0[0]] + n) % ps.period
            psiN = [s for s in proc.states if ps.phase[s] == target]
    return make_boundary(proc, ps, psi0, psiN, n)


def _config(args, **extra) -> dict:
    skip = {"func", "command"}
    cfg = {"command": args.command}
    for k, v in vars(args).items():
        if k in skip or v is None or callable(v):
            continue
        cfg[k.replace("_", "-")] = v
    cfg.update(extra)
    return cfg


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    if v is None:
        return ""
    return str(v)


def _write_csv(path, config: dict, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k in sorted(config):
            fh.write(f"# {k}={_fmt(config[k])}\n")
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _fmt(row.get(c, "")) for c in columns})


def _report_csv(path, config: dict, report) -> None:
    columns = list(report.rows[0].keys()) if report.rows else ["ok"]
    meta = {f"check-{k}": v for k, v in report.meta.items()}
    meta["check"] = report.name
    meta["ok"] = report.ok
    _write_csv(path, {**config, **meta}, columns, report.rows)


def _print_report(report) -> None:
    slack = report.worst_slack()
    if slack is not None and math.isfinite(slack):
        extra = f" worst_in_hypothesis_slack={slack:.6g}"
    elif report.rows and "worst_violation" in report.rows[0]:
        extra = f" worst_violation={report.rows[0]['worst_violation']:.6g}"
    else:
        extra = ""
    print(f"{report.name}: ok={report.ok}{extra}")


def _enforce(args, *reports) -> int:
    bad = [r.name for r in reports if not r.ok]
    if getattr(args, "strict", False) and bad:
        raise Violation("checks failed: " + ", ".join(bad))
    return 0


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_build_chain(args) -> int:
    if args.kind in ("prefix", "condensed") and args.a is None:
        raise BadFile(f"--a is required for kind {args.kind}")
    if args.kind == "window" and (args.alpha is None or args.beta is None):
        raise BadFile("--alpha and --beta are required for kind window")
    if args.kind == "prefix":
        proc = build_prefix_chain(args.b, args.a)
    elif args.kind == "condensed":
        proc = build_condensed_chain(args.b, args.a)
    elif args.kind == "mod":
        proc = build_mod_chain(args.b, args.a or 0)
    else:
        proc = build_window_chain(args.b, Fraction(args.alpha), Fraction(args.beta))
    channel = parse_channel(args.channel)
    if channel is not None:
        proc = attach_channel(proc, channel)
    ps = detect_phases(proc)
    save_chain(proc, args.out)
    print(f"states={proc.n_states} obs={proc.n_obs} period={ps.period} "
          f"d={ps.d} q={ps.q} -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    proc = _build_proc(args)
    report = validate_process(proc, raise_on_error=True)
    ps = detect_phases(proc)
    pi = stationary_distribution(proc)
    total = sum(pi.pi[s] for s in proc.states)
    print(f"states={proc.n_states} obs={proc.n_obs} period={ps.period} "
          f"d={ps.d} q={ps.q} stationary_sum={total:.12g} ok={report.ok}")
    return 0


def cmd_analyze(args) -> int:
    proc = _build_proc(args)
    ps = detect_phases(proc)
    os.makedirs(args.out, exist_ok=True)
    sides = {"with": [True], "without": [False],
             "both": [True, False]}[args.use_y]
    fraction_rows = []
    for n in args.N:
        boundary = None
        if args.event == "boundary":
            boundary = _boundary(proc, ps, n, args.psi0, args.psiN)
        for use_y in sides:
            cond = Conditioning(use_y, args.event,
                                args.delta if args.event == "phase" else None)
            if args.estimator == "exact":
                prof = exact_profile(proc, n, cond, boundary=boundary)
            else:
                prof = mc_profile(proc, n, cond, boundary=boundary,
                                  n_frames=args.frames, seed=args.seed)
            tag = "y" if use_y else "noy"
            cfg = _config(args, N=n, use_y=use_y,
                          psi0=",".join(boundary.psi0) if boundary else "",
                          psiN=",".join(boundary.psiN) if boundary else "")
            _write_csv(os.path.join(args.out, f"profile_N{n}_{tag}.csv"),
                       cfg, PROFILE_COLUMNS, prof.rows())
            frac = polarization_fractions(prof, beta=args.beta, sigma=args.sigma)
            frac["use_y"] = use_y
            frac["estimator"] = prof.estimator
            fraction_rows.append(frac)
            print(f"N={n} use_y={use_y} frac_good_z={frac['frac_good_z']:.4f} "
                  f"frac_good_k={frac['frac_good_k']:.4f} "
                  f"threshold={frac['threshold']:.6g}")
    _write_csv(os.path.join(args.out, "fractions.csv"), _config(args),
               ["block_len", "use_y", "estimator", "beta", "sigma",
                "threshold", "frac_good_z", "n_good_z", "frac_good_k",
                "n_good_k"], fraction_rows)
    return 0


def cmd_martingale(args) -> int:
    proc = _build_proc(args)
    report = martingale_check(proc, args.delta, args.n_max,
                              use_y=not args.no_y, tol=args.tol)
    if args.out:
        _report_csv(args.out, _config(args), report)
    _print_report(report)
    return _enforce(args, report)


def cmd_inequalities(args) -> int:
    proc = _build_proc(args)
    cache = TableCache(proc)
    reports = [transform_inequality_check(proc, args.delta, args.n,
                                          use_y=not args.no_y, tol=args.tol,
                                          cache=cache)]
    if args.mixing:
        reports.append(mixing_check(proc, args.delta, 2 ** args.n,
                                    use_y=not args.no_y))
    if args.boundary:
        ps = detect_phases(proc)
        boundary = _boundary(proc, ps, 2 ** args.n, args.psi0, args.psiN)
        reports.append(boundary_bound_check(proc, boundary, cache=cache))
    if args.triples:
        reports.append(triple_entropy_check(proc, args.delta, args.n,
                                            use_y=not args.no_y, cache=cache))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for rep in reports:
            _report_csv(os.path.join(args.out, f"{rep.name}.csv"),
                        _config(args), rep)
    for rep in reports:
        _print_report(rep)
    return _enforce(args, *reports)


def _profiles(proc, boundary, args):
    n = boundary.block_len
    if args.estimator == "exact":
        with_y = exact_profile(proc, n, Conditioning(True, "boundary"),
                               boundary=boundary)
        without_y = exact_profile(proc, n, Conditioning(False, "boundary"),
                                  boundary=boundary)
    else:
        with_y = mc_profile(proc, n, Conditioning(True, "boundary"),
                            boundary=boundary, n_frames=args.frames,
                            seed=args.seed)
        without_y = mc_profile(proc, n, Conditioning(False, "boundary"),
                               boundary=boundary, n_frames=args.frames,
                               seed=args.seed + 1)
    return with_y, without_y


def _construct(proc, args):
    ps = detect_phases(proc)
    boundary = _boundary(proc, ps, args.N, args.psi0, args.psiN)
    with_y, without_y = _profiles(proc, boundary, args)
    meta = {"chain": args.chain, "channel": args.channel or "none"}
    if args.rate is not None:
        return construct_code_at_rate(proc, boundary, with_y, without_y,
                                      args.rate, k_cap=args.k_cap, meta=meta)
    return construct_code(proc, boundary, with_y, without_y,
                          delta_z=args.delta_z, delta_k=args.delta_k,
                          meta=meta)


def cmd_construct(args) -> int:
    proc = _build_proc(args)
    code = _construct(proc, args)
    save_code(code, args.out)
    print(f"N={code.n_bits} info={code.n_info} rate={code.rate:.6g} "
          f"frozen={len(code.frozen_map)} shaped={len(code.shaped_set)} "
          f"-> {args.out}")
    return 0


def _parse_bits(text: str) -> list[int]:
    bits = [c for c in text if not c.isspace()]
    if any(c not in "01" for c in bits):
        raise BadFile(f"message must be over 0/1, got {text!r}")
    return [int(c) for c in bits]


def cmd_encode(args) -> int:
    code = load_code(args.code)
    if args.message is not None:
        message = _parse_bits(args.message)
    else:
        message = np.random.default_rng(args.seed).integers(
            0, 2, code.n_info, dtype=np.uint8)
    x = encode(code, message, shaping_seed=args.shaping_seed,
               rounding=args.rounding)
    word = "".join(str(int(v)) for v in x)
    if args.out:
        _write_csv(args.out, _config(args, n=code.n_bits),
                   ["message", "x"],
                   [{"message": "".join(str(int(b)) for b in message),
                     "x": word}])
    print(word)
    return 0


def _parse_obs(text: str) -> list[str]:
    if "," in text:
        return [t for t in text.split(",") if t]
    return list(text)


def cmd_decode(args) -> int:
    code = load_code(args.code)
    message = decode(code, _parse_obs(args.y), mode=args.mode,
                     shaping_seed=args.shaping_seed)
    print("".join(str(int(b)) for b in message))
    return 0


def cmd_simulate(args) -> int:
    if args.code:
        code = load_code(args.code)
        proc = code.proc
    else:
        if not args.chain:
            raise BadFile("pass --code FILE or --chain SPEC")
        if args.rate is None:
            raise BadFile("--rate is required when constructing in place")
        proc = _build_proc(args)
        code = _construct(proc, args)
    channel = parse_channel(args.channel) if args.channel else None
    if channel is None and not proc.native_observation():
        raise BadChannel("the chain carries a channel; pass --channel to match")
    res = simulate_fer(code, channel, args.trials, rng=args.seed,
                       mode=args.mode, threads=args.threads)
    line = (f"fer={res.fer:.6g} ber={res.ber:.6g} "
            f"fer95=[{res.fer_interval[0]:.6g},{res.fer_interval[1]:.6g}] "
            f"trials={res.n_trials} info={res.n_info} rate={code.rate:.6g}")
    if res.encode_failures:
        line += f" encode_failures={res.encode_failures}"
    print(line)
    if args.out:
        _write_csv(args.out, _config(args, N=code.n_bits, info=code.n_info,
                                     code_rate=code.rate),
                   ["fer", "ber", "fer_lo", "fer_hi", "ber_lo", "ber_hi",
                    "frame_errors", "bit_errors", "encode_failures",
                    "trials", "mode"],
                   [{"fer": res.fer, "ber": res.ber,
                     "fer_lo": res.fer_interval[0], "fer_hi": res.fer_interval[1],
                     "ber_lo": res.ber_interval[0], "ber_hi": res.ber_interval[1],
                     "frame_errors": res.frame_errors,
                     "bit_errors": res.bit_errors,
                     "encode_failures": res.encode_failures,
                     "trials": res.n_trials, "mode": res.mode}])
    return 0


def cmd_entropy_rate(args) -> int:
    proc = _build_proc(args)
    name, _, param = args.start.partition(":")
    if name == "stationary":
        start = ("stationary",)
    elif name == "state":
        start = ("state", param)
    elif name == "phase":
        start = ("phase", int(param))
    else:
        raise BadFile(f"unknown start conditioning {args.start!r}")
    est = entropy_rate_estimate(proc, args.N, use_y=not args.no_y,
                                start=start, method=args.method,
                                n_frames=args.frames, seed=args.seed)
    line = (f"N={args.N} rate={est['rate']:.12g} "
            f"total={est['total_entropy']:.12g} method={est['method']}")
    if "stderr_total" in est:
        line += f" stderr_total={est['stderr_total']:.6g}"
    print(line)
    if args.out:
        columns = sorted(est)
        _write_csv(args.out, _config(args), columns, [est])
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(p, *, chain=True, channel=True, seed=True, out=None,
                out_required=False):
    if chain:
        p.add_argument("--chain", required=True,
                       help="builder shorthand (prefix:B:A, condensed:B:A, "
                            "mod:B[:A], window:B:ALPHA:BETA) or chain file")
    if channel:
        p.add_argument("--channel",
                       help="noiseless | constant[:SYM] | bsc:P | bec:P")
    if seed:
        p.add_argument("--seed", type=int, default=0)
    if out is not None:
        p.add_argument("--out", required=out_required, help=out)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cwpolar",
        description="Constant-weight codes on periodic Markov processes: "
                    "builders, exactness checks, profiles, and coding runs.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-chain", help="build a chain and write it to a file")
    p.add_argument("--kind", required=True,
                   choices=["prefix", "condensed", "mod", "window"])
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--a", type=int)
    p.add_argument("--alpha")
    p.add_argument("--beta")
    p.add_argument("--channel")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_chain)

    p = sub.add_parser("validate", help="check a chain and print its structure")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="write per-index profiles and fractions")
    _add_common(p, out="output directory", out_required=True)
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.add_argument("--event", choices=["boundary", "phase", "none"],
                   default="boundary")
    p.add_argument("--delta", type=int, default=0)
    p.add_argument("--psi0")
    p.add_argument("--psiN")
    p.add_argument("--use-y", choices=["with", "without", "both"],
                   default="both")
    p.add_argument("--estimator", choices=["exact", "mc"], default="exact")
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=3.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("martingale",
                       help="exact one-level entropy martingale checks")
    _add_common(p, seed=False, out="rows CSV path")
    p.add_argument("--delta", type=int, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--no-y", action="store_true")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_martingale)

    p = sub.add_parser("inequalities",
                       help="exact one-step parameter inequality checks")
    _add_common(p, seed=False, out="output directory")
    p.add_argument("--delta", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--no-y", action="store_true")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--mixing", action="store_true")
    p.add_argument("--boundary", action="store_true")
    p.add_argument("--triples", action="store_true")
    p.add_argument("--psi0")
    p.add_argument("--psiN")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_inequalities)

    p = sub.add_parser("construct", help="build a code file from profiles")
    _add_common(p, out="code file path", out_required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--psi0")
    p.add_argument("--psiN")
    p.add_argument("--estimator", choices=["exact", "mc"], default="exact")
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--delta-z", type=float, default=1e-3)
    p.add_argument("--delta-k", type=float, default=1e-3)
    p.add_argument("--rate", type=float)
    p.add_argument("--k-cap", type=float, default=0.5)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("encode", help="encode a message with a code file")
    p.add_argument("--code", required=True)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--message")
    grp.add_argument("--random", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shaping-seed", type=int)
    p.add_argument("--rounding", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode one observation block")
    p.add_argument("--code", required=True)
    p.add_argument("--y", required=True,
                   help="observation labels, concatenated or comma-separated")
    p.add_argument("--mode", choices=["genie", "blind"], default="genie")
    p.add_argument("--shaping-seed", type=int)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("simulate", help="encode/transmit/decode error rates")
    p.add_argument("--code")
    p.add_argument("--chain")
    p.add_argument("--channel")
    p.add_argument("--N", type=int, default=256)
    p.add_argument("--rate", type=float)
    p.add_argument("--psi0")
    p.add_argument("--psiN")
    p.add_argument("--estimator", choices=["exact", "mc"], default="mc")
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--k-cap", type=float, default=0.5)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--mode", choices=["genie", "blind"], default="genie")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("entropy-rate", help="per-symbol conditional entropy")
    _add_common(p, out="CSV path")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--start", default="stationary",
                   help="stationary | state:LABEL | phase:DELTA")
    p.add_argument("--method", choices=["exact", "mc"], default="exact")
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--no-y", action="store_true")
    p.set_defaults(func=cmd_entropy_rate)

    return ap


def run(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args) or 0)
    except DomainError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

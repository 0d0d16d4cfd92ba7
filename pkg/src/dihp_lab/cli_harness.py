"""Command-line front door: `dihp-lab lp|game|verify`."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import dihp_engine as de
from . import fourier_lab as fl
from . import suites
from .corpus import corpus_names, load_named
from .csp_core import load_instance, max_value
from .errors import CapExceeded, LabError
from .lp_relax import lp_value
from .util import canonical_json, frac_str, parse_frac

EXIT_OK, EXIT_USAGE, EXIT_CAP, EXIT_FAIL = 0, 2, 3, 4
PROTOCOLS = ("cycle", "constant", "echo", "likelihood")


class UsageError(Exception):
    pass


def resolve_instance(ref):
    """A path to an instance JSON file, or the name of a bundled instance."""
    if ref is None:
        raise UsageError("--instance is required")
    if os.path.exists(ref):
        return load_instance(ref)
    if ref in corpus_names():
        return load_named(ref)
    raise UsageError(f"no instance file or bundled instance named {ref!r}")


def resolve_seed(args, required=True):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("DIHP_LAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"DIHP_LAB_SEED={env!r} is not an integer") from None
    if required:
        raise UsageError("a seed is required: pass --seed or set DIHP_LAB_SEED")
    return None


def emit(args, name, text):
    """Write text to <out>/<name> when --out is given; always return it."""
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    return text


def dumps(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_lp(args):
    inst = resolve_instance(args.instance)
    val = max_value(inst, args.cap_enum) if args.cap_enum else max_value(inst)
    lp = lp_value(inst)
    doc = {"instance": inst.content_hash(), "val": frac_str(val), "val_lp": frac_str(lp),
           "ratio": frac_str(val / lp) if lp else None}
    sys.stdout.write(emit(args, "lp.json", dumps(doc)))
    return EXIT_OK


def build_spec(args):
    if args.preset:
        p = dict(suites.PRESETS[args.preset])
        inst = load_named(p["instance"])
        n, alpha, K = p["n"], p["alpha"], p["K"]
        if args.instance:
            inst = resolve_instance(args.instance)
    else:
        inst = resolve_instance(args.instance)
        n, alpha, K = 8, Fraction(1, 8), 4
    n = args.n if args.n is not None else n
    if args.alpha is not None:
        try:
            alpha = parse_frac(args.alpha)
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"--alpha {args.alpha!r} is not a rational p/q") from None
    K = args.K if args.K is not None else K
    return suites.spec_for(inst, n, alpha, K)


def make_protocol(name, spec, masses=None):
    if name == "cycle":
        return de.cycle_consistency_protocol(spec)
    if name == "constant":
        return de.constant_protocol(1)
    if name == "echo":
        return de.echo_protocol(spec)
    if name == "likelihood":
        return de.likelihood_protocol(spec, masses)
    raise UsageError(f"unknown protocol {name!r}")


def plot_rows_game(rec):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["protocol", "mode", "side", "trials", "accepts", "rate", "seed"])
    if rec.mode == "mc":
        for side in ("yes", "no"):
            a = rec.extra[f"accept_{side}"]
            w.writerow([rec.protocol_name, rec.mode, side, rec.trials, a, a / rec.trials, rec.seed])
    else:
        w.writerow([rec.protocol_name, rec.mode, "gap", 0, "", float(rec.estimate), ""])
    return buf.getvalue()


def cmd_game(args):
    spec = build_spec(args)
    cap = args.cap_enum or de.EXACT_CAP
    masses = de.exact_masses(spec, cap) if args.mode == "exact" or args.protocol == "likelihood" else None
    proto = make_protocol(args.protocol, spec, masses)
    if args.mode == "exact":
        rec = de.advantage(proto, spec, "exact", masses=masses)
    else:
        seed = resolve_seed(args)
        if args.trials < 1:
            raise UsageError("--trials must be positive in mc mode")
        rec = de.advantage(proto, spec, "mc", args.trials, seed)
    doc = rec.to_json()
    doc["spec"] = spec.to_json()
    doc["trial_count"] = rec.trials
    doc.update({k: v for k, v in rec.extra.items()})
    emit(args, "game.csv", rec.to_csv())
    if args.csv_for_plot:
        emit(args, "game_plot.csv", plot_rows_game(rec))
    sys.stdout.write(emit(args, "game.json", dumps(doc)))
    return EXIT_OK


def manifest_for(suite, seed, records):
    counts = {s: sum(1 for r in records if r["status"] == s) for s in ("pass", "fail", "skipped")}
    failing = sorted({r["lemma_id"] for r in records if r["status"] == "fail"})
    return {"command": "verify", "suite": suite, "seed": seed, "counts": counts, "failing_lemmas": failing,
            "verdicts": records}


def plot_rows_verify(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "lemma_id", "instantiation_hash", "status", "residual_or_slack", "seed"])
    for r in records:
        w.writerow([r["suite"], r["lemma_id"], r["instantiation_hash"], r["status"], r["residual_or_slack"], r["seed"]])
    return buf.getvalue()


def cmd_verify(args):
    seed = resolve_seed(args)
    started = time.time()
    records = suites.run_suite(args.suite, seed)
    manifest = manifest_for(args.suite, seed, records)
    text = canonical_json(manifest) + "\n"
    emit(args, "manifest.json", text)
    emit(args, "run_info.json", dumps({"started": started, "finished": time.time()}))
    if args.csv_for_plot:
        emit(args, "verdicts.csv", plot_rows_verify(records))
    c = manifest["counts"]
    print(f"suite={args.suite} seed={seed} pass={c['pass']} fail={c['fail']} skipped={c['skipped']}")
    for lemma in manifest["failing_lemmas"]:
        print(f"FAILED {lemma}", file=sys.stderr)
    return EXIT_FAIL if c["fail"] else EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="dihp-lab", description="LP values, DIHP games and lemma verification.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (falls back to DIHP_LAB_SEED)")
    common.add_argument("--out", default=None, help="directory for JSON/CSV outputs")
    common.add_argument("--cap-enum", type=int, default=None, help="cap on exact enumerations")
    common.add_argument("--cap-fourier", type=int, default=None, help="cap on dense Fourier domains")
    common.add_argument("--csv-for-plot", action="store_true", help="also write tidy CSV columns for plotting")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lp", parents=[common], help="exact val, val_lp and their ratio")
    p.add_argument("--instance", required=True, help="instance JSON path or bundled name")
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("game", parents=[common], help="advantage of a protocol on a DIHP game")
    p.add_argument("--instance", default=None)
    p.add_argument("--preset", choices=sorted(suites.PRESETS), default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--alpha", default=None, help='rational "p/q"')
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--protocol", choices=PROTOCOLS, default="cycle")
    p.add_argument("--mode", choices=("exact", "mc"), default="mc")
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("verify", parents=[common], help="run lemma verification batteries")
    p.add_argument("--suite", choices=suites.SUITES + ("all",), default="all")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command == "game" and not (args.instance or args.preset):
        print("error: game needs --instance or --preset", file=sys.stderr)
        return EXIT_USAGE
    for flag in ("cap_enum", "cap_fourier"):
        v = getattr(args, flag)
        if v is not None and v < 1:
            print(f"error: --{flag.replace('_', '-')} must be positive", file=sys.stderr)
            return EXIT_USAGE
    old_cap = fl.FOURIER_CAP
    if args.cap_fourier:
        fl.FOURIER_CAP = args.cap_fourier
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapExceeded as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (LabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        fl.FOURIER_CAP = old_cap


if __name__ == "__main__":
    sys.exit(main())

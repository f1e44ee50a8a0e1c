"""Command-line entry point: addlab {sieve,tail,model,asym,series,compare}."""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import jsonio, lab
from .errors import AddlabError, ConfigError


def _common(p):
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--fn", help="omega | frac[:alpha] | table:PATH | scaled:C:SPEC")
    p.add_argument("--x", help="upper limit x (e.g. 1e6)")
    p.add_argument("--y", help="truncation point y for f(n;y)")
    p.add_argument("--deltas", help="a:b:step (inclusive) or comma list")
    p.add_argument("--psi", help="Psi JSON file, or 'empirical'")
    p.add_argument("--normalize", choices=["sigma", "B", "b", "SIGMA"], help="tail normalisation")
    p.add_argument("--method", choices=lab.METHODS, help="model tail method")
    p.add_argument("--samples", help="Monte Carlo replicates")
    p.add_argument("--seed", type=int, help="Monte Carlo seed")
    p.add_argument("--out", help="output directory (default: print to stdout)")
    p.add_argument("--level", help="normal | s | full")
    p.add_argument("--k", type=int, help="series order K (<= 24)")
    p.add_argument("--L-truncation", dest="L_truncation", type=int, help="truncation prime for L(f;z)")


def build_parser():
    ap = argparse.ArgumentParser(prog="addlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in lab.COMMANDS:
        _common(sub.add_parser(name))
    return ap


def run(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_vals = lab.load_config(args.config) if args.config else {}
        cfg = lab.make_config(file_vals, overrides)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            artifacts = lab.COMMANDS[args.command](cfg)
        if cfg.out:
            out = Path(cfg.out)
            try:
                out.mkdir(parents=True, exist_ok=True)
                for name, doc in artifacts.items():
                    (out / name).write_text(jsonio.dumps(doc), encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot write to {out}: {exc.strerror}") from exc
        else:
            doc = next(iter(artifacts.values())) if len(artifacts) == 1 else artifacts
            stdout.write(jsonio.dumps(doc))
    except AddlabError as exc:
        print(f"addlab {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except TypeError as exc:  # bad config value types
        print(f"addlab {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command line: ``acns <subcommand> ...``.  Every run writes manifest.json."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .diagnostics import ConstantsTable, check_condition
from .harness import execute, replay


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def _seeds(s: str) -> list[int]:
    """``8`` means seeds 0..7; ``3,5,9`` is an explicit list."""
    return _ints(s) if "," in s else list(range(int(s)))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="acns", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, two_configs=False):
        if two_configs:
            p.add_argument("--configA", required=True, type=Path)
            p.add_argument("--configB", type=Path)
        else:
            p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=Path("acns_out"))
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--horizon", type=float, default=None)

    p = sub.add_parser("simulate", help="single trajectories with the full diagnostic ledger")
    common(p)
    p = sub.add_parser("sync", help="Foias-Prodi synchronization under shared noise")
    common(p, two_configs=True)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--seeds", type=_seeds, default=None)
    p.add_argument("--stride", type=int, default=None)
    p = sub.add_parser("ergodic", help="time averages and support moments over an ensemble")
    common(p)
    p.add_argument("--ensemble", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--burn-in", type=float, default=0.2)
    p.add_argument("--windows", type=int, default=8)
    p = sub.add_parser("tail", help="empirical stopping-time tail over an R grid")
    common(p)
    p.add_argument("--R-grid", type=_floats, default=[1, 2, 4, 8, 16])
    p.add_argument("--members", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p = sub.add_parser("sweep", help="synchronization and threshold condition over (N, beta)")
    common(p)
    p.add_argument("--N-list", type=_ints, default=None)
    p.add_argument("--beta-list", type=_floats, default=None)
    p.add_argument("--seeds", type=_seeds, default=None)
    p.add_argument("--stride", type=int, default=None)
    p = sub.add_parser("check-condition", help="evaluate the (N, beta) threshold condition")
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--lambdaN", type=float, required=True)
    p.add_argument("--constants", type=Path, required=True)
    p = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--workers", type=int, default=1)
    return ap


_OPTION_KEYS = {
    "simulate": ("horizon",),
    "sync": ("horizon", "N", "seeds", "stride"),
    "ergodic": ("horizon", "ensemble", "stride", "burn_in", "windows"),
    "tail": ("horizon", "R_grid", "members", "eps"),
    "sweep": ("horizon", "N_list", "beta_list", "seeds", "stride"),
}


def dispatch(args: argparse.Namespace) -> int:
    cmd = args.command
    if cmd == "check-condition":
        table = ConstantsTable.from_dict(json.loads(args.constants.read_text()))
        holds, lhs, rhs = check_condition(args.nu, args.beta, args.lambdaN, table)
        print(f"lhs={lhs:.17g}")
        print(f"rhs={rhs:.17g}")
        print(f"holds={str(bool(holds)).lower()}")
        return 0
    if cmd == "replay":
        ok, rows = replay(args.manifest, args.out, args.workers)
        for path, want, got in rows:
            print(f"{'same' if want == got else 'DIFF'}  {path}")
        print("identical" if ok else "outputs differ")
        return 0 if ok else 1
    if cmd == "sync":
        configs = {"A": load_config(args.configA)}
        if args.configB is not None:
            configs["B"] = load_config(args.configB)
    else:
        configs = {"A": load_config(args.config)}
    opts = {k: getattr(args, k) for k in _OPTION_KEYS[cmd]}
    workers = args.workers or configs["A"]["ensemble"]["workers"]
    man = execute(cmd, configs, opts, args.out, workers)
    print(f"wrote {len(man['outputs'])} file(s) and manifest.json to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except ConfigError as exc:
        print(f"acns: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"acns {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

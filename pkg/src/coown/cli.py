"""Command-line driver.

Every command acts as one identity (``--identity`` or ``$COOWN_IDENTITY``)
against one backend (``--backend``):

    local:PATH       directory store with sidecar ACLs (default local:./coown-store)
    s3[:ENDPOINT]    S3-compatible store; credentials from the environment

Exit codes: 0 success, 1 error, 2 usage, 3 rejected or denied, 4 access denied.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import AccessDeniedError, CoownError
from .repo import LocalBackend, Repository
from .repo.protocol import DEFAULT_UNIT_SIZE

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_REJECTED, EXIT_DENIED = 0, 1, 2, 3, 4


def open_backend(spec: str):
    kind, _, arg = spec.partition(":")
    if kind == "local":
        return LocalBackend(arg or "./coown-store")
    if kind == "s3":
        from .repo.s3 import S3Backend
        return S3Backend(endpoint=arg or None)
    raise CoownError(f"unknown backend {spec!r}; use local:PATH or s3[:ENDPOINT]")


def _repo(args) -> Repository:
    backend = open_backend(args.backend)
    if args.identity and args.identity not in backend.accounts():
        backend.create_account(args.identity)
    return Repository(backend, piece_size=args.piece_size, unit_size=args.unit_size, lam=args.lam)


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise _Usage(f"{args.command} needs {', '.join(missing)}")


class _Usage(Exception):
    pass


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, sort_keys=True) if args.json else text)


def _read_input(path: str | None) -> bytes:
    if path in (None, "-"):
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


# -- commands --------------------------------------------------------------

def cmd_create(args) -> int:
    _need(args, "identity", "file", "threshold", "owners")
    repo = _repo(args)
    owners = [o.strip() for o in args.owners.split(",") if o.strip()]
    m = repo.create_file(args.identity, args.file, args.threshold, owners, _read_input(args.input))
    _emit(args, {"file": m.name, "version": 1, "units": len(m.latest.units), "owners": owners},
          f"created {m.name} v1: {len(m.latest.units)} unit(s), t={m.threshold}, n={len(owners)}")
    return EXIT_OK


def cmd_grant_write(args) -> int:
    _need(args, "identity", "writer")
    _repo(args).grant_write(args.identity, args.writer)
    _emit(args, {"owner": args.identity, "writer": args.writer, "write": True},
          f"{args.identity} grants temp-write to {args.writer}")
    return EXIT_OK


def cmd_revoke_write(args) -> int:
    _need(args, "identity", "writer")
    _repo(args).revoke_write(args.identity, args.writer)
    _emit(args, {"owner": args.identity, "writer": args.writer, "write": False},
          f"{args.identity} revokes temp-write from {args.writer}")
    return EXIT_OK


def cmd_write(args) -> int:
    _need(args, "identity", "file")
    if not args.unit:
        raise _Usage("write needs at least one --unit INDEX=PATH")
    changed = {}
    for spec in args.unit:
        index, sep, path = spec.partition("=")
        if not sep or not index.isdigit():
            raise _Usage(f"bad --unit {spec!r}; expected INDEX=PATH")
        changed[int(index)] = _read_input(path)
    res = _repo(args).write_version(args.identity, args.file, changed)
    payload = {"file": args.file, "version": res.version, "accepted": res.accepted,
               "granting": list(res.granting), "count": res.count, "threshold": res.threshold}
    if res.accepted:
        _emit(args, payload, f"accepted {args.file} v{res.version}: |O+|={res.count} >= t={res.threshold}")
        return EXIT_OK
    _emit(args, payload, f"rejected {args.file} v{res.version}: |O+|={res.count} < t={res.threshold}")
    return EXIT_REJECTED


def cmd_sync(args) -> int:
    _need(args, "identity")
    published = _repo(args).sync(args.identity, args.file)
    _emit(args, {"owner": args.identity, "published": [list(p) for p in published]},
          "\n".join(f"{args.identity} published {f} v{v}" for f, v in published) or f"{args.identity}: nothing pending")
    return EXIT_OK


def cmd_grant_read(args) -> int:
    _need(args, "identity", "reader", "file", "version")
    fresh = _repo(args).grant_read(args.identity, args.reader, args.file, args.version)
    _emit(args, {"owner": args.identity, "reader": args.reader, "file": args.file, "version": args.version,
                 "endorsed": fresh},
          f"{args.identity} grants {args.reader} read of {args.file} v{args.version} ({fresh} new endorsements)")
    return EXIT_OK


def cmd_revoke_read(args) -> int:
    _need(args, "identity", "reader", "file", "version")
    paths = _repo(args).revoke_read(args.identity, args.reader, args.file, args.version)
    _emit(args, {"owner": args.identity, "reader": args.reader, "file": args.file, "version": args.version,
                 "revoked": paths},
          f"{args.identity} revokes {args.reader} from {args.file} v{args.version} ({len(paths)} token ACLs removed)")
    return EXIT_OK


def cmd_read(args) -> int:
    _need(args, "identity", "file")
    data = _repo(args).read_version(args.identity, args.file, args.version)
    if args.output in (None, "-") and not args.json:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
        return EXIT_OK
    if args.output not in (None, "-"):
        Path(args.output).write_bytes(data)
    _emit(args, {"file": args.file, "version": args.version, "bytes": len(data), "output": args.output},
          f"read {len(data)} bytes of {args.file} into {args.output}")
    return EXIT_OK


def cmd_policy_check(args) -> int:
    from .policy import SomState, parse_credentials, parse_request, som_decide

    _need(args, "state", "request")
    state = SomState.load(args.state)
    creds = set()
    if args.creds:
        creds = parse_credentials(Path(args.creds).read_text().splitlines())
    creds |= parse_credentials(args.cred or [])
    request = parse_request(args.request)
    granted = som_decide(state, request, creds)
    _emit(args, {"request": str(request), "decision": "grant" if granted else "deny", "credentials": len(creds)},
          "grant" if granted else "deny")
    return EXIT_OK if granted else EXIT_REJECTED


def cmd_simulate(args) -> int:
    from . import simulate

    r = simulate.run(args.trials, args.seed, collusion=args.collusion)
    payload = {"trials": r.trials, "agreements": r.agreements, "agreement_rate": r.agreement_rate,
               "collusion_trials": r.collusion_trials, "collusion_breaks": r.collusion_breaks,
               "mismatches": [vars(m) for m in r.mismatches]}
    _emit(args, payload, "\n".join([
        f"enforcement equivalence: {r.agreements}/{r.trials} trials agree",
        f"collusion: {r.collusion_breaks}/{r.collusion_trials} pooled coalitions recovered plaintext"]))
    return EXIT_OK if not r.mismatches and not r.collusion_breaks else EXIT_ERROR


def cmd_bench(args) -> int:
    from . import bench

    rows, extra = [], {}
    if args.vary == "unit-size":
        samples, fit = bench.sweep_unit_size(tuple(args.sizes), repeats=args.repeats,
                                             piece_size=args.piece_size, t=args.threshold or 4, n=args.n)
        extra = {"slope_s_per_mib": fit.slope * bench.MIB, "intercept_s": fit.intercept, "r2": fit.r2}
    elif args.vary == "piece-size":
        samples = bench.sweep_piece_size(repeats=args.repeats, t=args.threshold or 4, n=args.n)
    elif args.vary == "threshold":
        samples = bench.sweep_threshold(n=args.n, repeats=args.repeats)
    else:
        samples = bench.sweep_owners(t=args.threshold or 4, repeats=args.repeats)
    rows = [s.as_dict() for s in samples]
    if args.json:
        print(json.dumps({"vary": args.vary, "samples": rows, **extra}, sort_keys=True))
        return EXIT_OK
    print(f"{'unit MiB':>9} {'w':>5} {'t':>3} {'n':>3} {'write s':>9} {'read s':>9}")
    for s in samples:
        print(f"{s.unit_bytes / bench.MIB:>9.2f} {s.piece_size:>5} {s.t:>3} {s.n:>3} {s.write_s:>9.4f} {s.read_s:>9.4f}")
    key = {"unit-size": "unit_bytes", "piece-size": "piece_size", "threshold": "t", "owners": "n"}[args.vary]
    print(f"write time vs {key}: {bench.direction([s.write_s for s in samples])}; "
          f"read time vs {key}: {bench.direction([s.read_s for s in samples])}")
    if extra:
        print(f"linear fit of write+read: {extra['slope_s_per_mib']:.4f} s/MiB, "
              f"intercept {extra['intercept_s']:.4f} s, R^2 = {extra['r2']:.4f}")
    return EXIT_OK


COMMANDS = {
    "create": (cmd_create, "create a file owned by --owners with threshold --threshold"),
    "grant-write": (cmd_grant_write, "let --writer upload tokens to your account"),
    "revoke-write": (cmd_revoke_write, "stop --writer from uploading tokens to your account"),
    "write": (cmd_write, "propose a new version replacing the given units"),
    "sync": (cmd_sync, "publish pending manifests whose tokens arrived in your account"),
    "grant-read": (cmd_grant_read, "endorse your tokens of --file --version for --reader"),
    "revoke-read": (cmd_revoke_read, "withdraw --reader's access to --file --version"),
    "read": (cmd_read, "reassemble --file (latest or --version)"),
    "policy-check": (cmd_policy_check, "evaluate a request against a policy state and credentials"),
    "simulate": (cmd_simulate, "randomized enforcement-equivalence and collusion harness"),
    "bench": (cmd_bench, "unit write/read timing sweeps on the local backend"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--backend", default=os.environ.get("COOWN_BACKEND", "local:./coown-store"))
    common.add_argument("--identity", default=os.environ.get("COOWN_IDENTITY"))
    common.add_argument("--threshold", "-t", type=int)
    common.add_argument("--owners", help="comma-separated owner identities")
    common.add_argument("--piece-size", type=int, default=128, help="piece size w in bytes")
    common.add_argument("--unit-size", type=int, default=DEFAULT_UNIT_SIZE, help="unit size in bytes")
    common.add_argument("--lam", type=int, default=128, help="security parameter in bits")
    common.add_argument("--file")
    common.add_argument("--version", type=int)
    common.add_argument("--reader")
    common.add_argument("--writer")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="coown", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog="\n".join(__doc__.splitlines()[2:]))
    sub = parser.add_subparsers(dest="command", required=True)
    p = {name: sub.add_parser(name, parents=[common], help=help_) for name, (_, help_) in COMMANDS.items()}
    p["create"].add_argument("--input", help="content file (default stdin)")
    p["write"].add_argument("--unit", action="append", metavar="INDEX=PATH",
                            help="replace (or append) unit INDEX with the content of PATH")
    p["read"].add_argument("--output", "-o", help="output file (default stdout)")
    p["policy-check"].add_argument("--state", help="JSON state: files, users, owns, thresholds")
    p["policy-check"].add_argument("--creds", help="file with one credential per line")
    p["policy-check"].add_argument("--cred", action="append", help="inline credential (repeatable)")
    p["policy-check"].add_argument("--request", help='e.g. "U reqs read(F)"')
    p["simulate"].add_argument("--trials", type=int, default=1000)
    p["simulate"].add_argument("--collusion", type=int, default=100)
    p["simulate"].add_argument("--seed", type=int, default=0)
    p["bench"].add_argument("--vary", choices=["unit-size", "piece-size", "threshold", "owners"],
                            default="unit-size")
    p["bench"].add_argument("--sizes", type=float, nargs="+", default=[1, 2, 4, 8, 16, 32, 64],
                            help="unit sizes in MiB for --vary unit-size")
    p["bench"].add_argument("--repeats", type=int, default=1)
    p["bench"].add_argument("-n", type=int, default=10, help="number of owners")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"coown: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AccessDeniedError as exc:
        print(f"coown: access denied: {exc}", file=sys.stderr)
        return EXIT_DENIED
    except (CoownError, OSError) as exc:
        print(f"coown: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command line interface: ``nfe {gen,train,enroll,verify,eval,report}``.

Exit codes: 0 success/accept, 1 reject, 2 usage error, 3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import embeddings, expander as xp, records
from .errors import InvalidArgumentError, NFEError
from .evaluation import far_frr_sweep, security_report
from .geometry import fit_support_sphere, fit_user_region

EXIT_OK, EXIT_REJECT, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

CODE_IDS = {"hamming7": 1, "hamming15": 2}

log = logging.getLogger("nfe")


class CliError(Exception):
    def __init__(self, message, code=EXIT_IO):
        super().__init__(message)
        self.code = code


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _write_bytes(path, data):
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}") from None


def _load_embeddings(path):
    return embeddings.load_embedding_set(_read_bytes(path))


def _load_expander(path):
    return xp.load_params(_read_bytes(path))


def cmd_gen(args):
    eset = embeddings.generate_synthetic(args.users, args.samples, args.dim, args.sigma, args.seed)
    _write_bytes(args.out, embeddings.save_embedding_set(eset).encode("utf-8"))
    print(f"wrote {len(eset)} records to {args.out}")
    return EXIT_OK


def cmd_train(args):
    eset = _load_embeddings(args.embeddings)
    config = xp.TrainConfig(alpha=args.alpha, learning_rate=args.lr, momentum=args.momentum,
                            epochs=args.epochs, batch_size=args.batch_size,
                            hard_fraction=args.hard_fraction, seed=args.seed,
                            triplets_per_epoch=args.triplets_per_epoch)
    params = xp.init_params([eset.dim, *args.layers], args.seed)
    params, history = xp.train(params, eset, config)
    _write_bytes(args.out, xp.save_params(params))
    print(f"trained {'->'.join(map(str, params.layer_dims))}: "
          f"loss {history[0]:.6f} -> {history[-1]:.6f}; wrote {args.out}")
    return EXIT_OK


def cmd_enroll(args):
    eset = _load_embeddings(args.embeddings)
    params = _load_expander(args.expander)
    mine = eset.vectors_of(args.user)
    if len(mine) == 0:
        raise CliError(f"no embeddings for user {args.user!r} in {args.embeddings}")
    store = (records.load_store(_read_bytes(args.store)) if os.path.exists(args.store)
             else records.RecordStore())
    if args.user in store:
        raise CliError(f"user {args.user!r} is already enrolled", EXIT_USAGE)
    support = fit_support_sphere(xp.forward_batch(params, eset.vectors), args.inflation)
    config = records.EnrollConfig(support=support, quantile=args.quantile,
                                  radius_multiplier=args.multiplier,
                                  code_id=CODE_IDS[args.code],
                                  pepper=records.pepper_from_env())
    records.enroll_user(args.user, mine, params, args.scheme, config, store=store)
    try:
        records.write_store_file(args.store, store)
    except OSError as exc:
        raise CliError(f"cannot write {args.store}: {exc.strerror}") from None
    print(f"enrolled {args.user} ({args.scheme}) in {args.store}")
    return EXIT_OK


def cmd_verify(args):
    store = records.load_store(_read_bytes(args.store))
    params = _load_expander(args.expander)
    probes = _load_embeddings(args.probe)
    pepper = records.pepper_from_env()
    record = store.records.get(args.user)
    all_ok = True
    for _, vec in probes:
        ok = record is not None and records.verify_user(record, vec, params, pepper)
        print("ACCEPT" if ok else "REJECT")
        all_ok &= ok
    return EXIT_OK if all_ok else EXIT_REJECT


def _split_inputs(args):
    if args.train and args.test:
        return _load_embeddings(args.train), _load_embeddings(args.test)
    if args.embeddings:
        return embeddings.split(_load_embeddings(args.embeddings), args.train_fraction, args.seed)
    raise CliError("eval needs --embeddings or both --train and --test", EXIT_USAGE)


def cmd_eval(args):
    train, test = _split_inputs(args)
    params = _load_expander(args.expander)
    report = far_frr_sweep(train, test, params, args.multipliers, args.scheme, args.seed,
                           quantile=args.quantile, inflation=args.inflation)
    _write_bytes(args.out_csv, report.to_csv().encode("utf-8"))
    _write_bytes(args.out_json, report.to_json().encode("utf-8"))
    for m, frr, far in zip(report.multipliers, report.frr, report.far):
        print(f"multiplier={m:g} frr={frr:.4f} far={far:.4f}")
    return EXIT_OK


def cmd_report(args):
    eset = _load_embeddings(args.embeddings)
    params = _load_expander(args.expander)
    outputs = xp.forward_batch(params, eset.vectors)
    radii = {u: fit_user_region(outputs[eset.indices_of(u)], args.quantile).radius
             for u in eset.users()}
    upper, lower, support_radius = security_report(eset, params, radii, args.inflation)
    text = json.dumps({"entropy_upper_bits": upper, "entropy_lower_bits": lower,
                       "support_radius": support_radius, "user_radii": radii},
                      indent=2, sort_keys=True) + "\n"
    if args.out:
        _write_bytes(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="nfe", description="Neural fuzzy extractor toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic embedding file")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train an expander on an embedding file")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layers", type=_ints, default=[12, 8],
                   help="hidden and output widths, e.g. 12,8 (input width comes from the data)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--hard-fraction", type=float, default=0.5)
    p.add_argument("--triplets-per-epoch", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_train)

    def common_region(p):
        p.add_argument("--quantile", type=float, default=0.95)
        p.add_argument("--inflation", type=float, default=0.1)

    p = sub.add_parser("enroll", help="append a user's record to the store")
    p.add_argument("--user", required=True)
    p.add_argument("--embeddings", required=True,
                   help="population file; the user's rows are the enrollment samples")
    p.add_argument("--expander", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--scheme", choices=sorted(records.SCHEMES), default="lattice")
    p.add_argument("--multiplier", type=float, default=1.0)
    p.add_argument("--code", choices=sorted(CODE_IDS), default="hamming7")
    common_region(p)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("verify", help="check probes against a stored record")
    p.add_argument("--user", required=True)
    p.add_argument("--probe", required=True, help="embedding file with one or more probes")
    p.add_argument("--expander", required=True)
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="FAR/FRR sweep plus entropy bounds")
    p.add_argument("--embeddings")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--train-fraction", type=float, default=10 / 12)
    p.add_argument("--expander", required=True)
    p.add_argument("--multipliers", type=_floats, default=[0.5, 0.75, 1.0, 1.5, 2.0])
    p.add_argument("--scheme", choices=sorted(records.SCHEMES), default="lattice")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", required=True)
    common_region(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="entropy bounds for a population")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--expander", required=True)
    p.add_argument("--out")
    common_region(p)
    p.set_defaults(func=cmd_report)
    return parser


def run(argv):
    """Execute one invocation and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"nfe {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except InvalidArgumentError as exc:
        print(f"nfe {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NFEError, ValueError) as exc:
        print(f"nfe {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv=None):
    sys.exit(run(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()

"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 protocol failure
or visibility violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..fedwad import fedwad_distance
from ..measures import DiscreteMeasure, MatrixFormatError, guess_format, load_matrix, uniform_measure, write_matrix
from ..ot_core import solve_ot
from ..protocol import ProtocolError, SessionConfig, connect, serve
from ..protocol.tcp import parse_addr
from ..protocol.wire import DEFAULT_PORT, DEFAULT_TIMEOUT
from ..redteam import AttackConfig, AttackConfigError, dp_gap, gaussian_sigma, run_attack
from ..trianglewad import ConfigError, TriangleConfig, local_interpolate, make_defense, run_triangle_session
from ..valuation import calibrated_gradients, detect_noisy, detect_noisy_private, load_words, matching_rate
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiments

EXIT_OK, EXIT_CONFIG, EXIT_PROTOCOL = 0, 2, 3

log = logging.getLogger("privwad")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", action="append", default=[], metavar="PATH",
                   help="data matrix (repeat for the second party)")
    p.add_argument("--format", choices=("auto", "csv", "binary"), default="auto")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--defense", choices=("ones", "gaussian"), default="ones")
    p.add_argument("--defense-size", type=int, default=None)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--shared", action=argparse.BooleanOptionalAction, default=True,
                   help="share the defense measure between parties")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("direct", "federated"), default="direct")
    p.add_argument("--K", type=int, default=20, help="FedWad round budget")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", default=None, help="write the JSON result here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="privwad", description="Private Wasserstein distance tools")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    _common(sub.add_parser("direct", help="exact W_p between two local datasets"))

    for verb in ("fedwad", "triangle"):
        sp = sub.add_parser(verb, help=f"{verb} estimate, locally or against a server")
        _common(sp)
        sp.add_argument("--connect", metavar="HOST:PORT", default=None,
                        help="act as the client of a running server")
        sp.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)

    sp = sub.add_parser("attack", help="distribution-matching attack on a session's artifacts")
    _common(sp)
    sp.add_argument("--protocol", choices=("fedwad", "triangle"), default="fedwad")
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--dump", default=None, help="write the reconstructed data matrix here")

    sp = sub.add_parser("dpgap", help="distance gap under the Gaussian mechanism")
    _common(sp)
    sp.add_argument("--epsilon", type=float, action="append", default=None)
    sp.add_argument("--delta", type=float, default=1e-5)
    sp.add_argument("--sensitivity", type=float, default=1.0)

    sp = sub.add_parser("value", help="calibrated-gradient scores for both datasets")
    _common(sp)

    sp = sub.add_parser("detect", help="flag noisy points of the first dataset")
    _common(sp)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--private", action="store_true",
                    help="score interpolating measures instead of raw data")

    sp = sub.add_parser("textmatch", help="word retrieval rate from shared measures")
    _common(sp)
    sp.add_argument("--vocab", required=True, help="vocabulary embedding matrix")
    sp.add_argument("--words", required=True, help="vocabulary words, one per line")
    sp.add_argument("--client-words", required=True)
    sp.add_argument("--server-words", required=True)

    sp = sub.add_parser("serve", help="run one party of a networked session")
    _common(sp)
    sp.add_argument("--role", choices=("server", "client"), default="server")
    sp.add_argument("--bind", default=f"0.0.0.0:{DEFAULT_PORT}")
    sp.add_argument("--peer", default=None, help="server address (client role)")
    sp.add_argument("--protocol", choices=("fedwad", "triangle"), default="triangle")
    sp.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)

    sp = sub.add_parser("bench", help="run experiments and write JSON/CSV reports")
    sp.add_argument("--config", action="append", default=[], help="experiment config JSON")
    sp.add_argument("--experiment", choices=EXPERIMENTS, action="append", default=[])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", default="reports")
    return ap


# -- helpers -----------------------------------------------------------------------


def _load(args, count: int | None = None) -> list[DiscreteMeasure]:
    if count is not None and len(args.input) != count:
        raise ConfigError(f"expected {count} --input file(s), got {len(args.input)}")
    if not args.input:
        raise ConfigError("no --input given")
    out = []
    for path in args.input:
        fmt = guess_format(path) if args.format == "auto" else args.format
        out.append(uniform_measure(load_matrix(path, fmt)))
    return out


def _output_format(path: str, fmt: str) -> str:
    if fmt != "auto":
        return fmt
    return "binary" if Path(path).suffix.lower() in (".wadm", ".bin") else "csv"


def _tri_cfg(args) -> TriangleConfig:
    return TriangleConfig(defense_kind=args.defense, defense_size=args.defense_size, sigma=args.sigma,
                          shared=args.shared, t=args.t, p=args.p, mode=args.mode, K=args.K, tol=args.tol)


def _session_cfg(args, protocol: str) -> SessionConfig:
    return SessionConfig(protocol=protocol, seed=args.seed, K=args.K, t=args.t, p=args.p, tol=args.tol,
                         triangle=_tri_cfg(args))


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


# -- verbs -------------------------------------------------------------------------


def cmd_direct(args):
    mu, nu = _load(args, 2)
    ot = solve_ot(mu, nu, p=args.p)
    return {"distance": ot.distance, "cost": ot.cost, "p": args.p, "iterations": ot.iterations}


def cmd_fedwad(args):
    if args.connect:
        (mu,) = _load(args, 1)
        return connect(parse_addr(args.connect), mu, _session_cfg(args, "fedwad"), args.timeout).to_dict()
    mu, nu = _load(args, 2)
    return fedwad_distance(mu, nu, K=args.K, t=args.t, p=args.p, tol=args.tol, seed=args.seed).to_dict()


def cmd_triangle(args):
    if args.connect:
        (mu,) = _load(args, 1)
        return connect(parse_addr(args.connect), mu, _session_cfg(args, "triangle"), args.timeout).to_dict()
    mu, nu = _load(args, 2)
    return run_triangle_session(mu, nu, _tri_cfg(args), args.seed).to_session_report().to_dict()


def cmd_attack(args):
    mu, nu = _load(args, 2)
    if args.protocol == "fedwad":
        rep = fedwad_distance(mu, nu, K=args.K, t=args.t, p=args.p, tol=args.tol, seed=args.seed)
    else:
        rep = run_triangle_session(mu, nu, _tri_cfg(args), args.seed).to_session_report()
    acfg = AttackConfig.from_report(rep, nu, steps=args.steps, lr=args.lr, seed=args.seed, p=args.p)
    ar = run_attack(acfg, oracle_mu=mu)
    if args.dump:
        write_matrix(ar.d_attack, args.dump, _output_format(args.dump, args.format))
    return ar.to_dict()


def cmd_dpgap(args):
    mu, nu = _load(args, 2)
    eps = args.epsilon or [10.0, 1.0, 0.1]
    return {"rows": [{"epsilon": e, "sigma": gaussian_sigma(e, args.delta, args.sensitivity),
                      "gap": dp_gap(mu, nu, e, args.delta, args.sensitivity, args.seed, args.p)}
                     for e in eps]}


def cmd_value(args):
    mu, nu = _load(args, 2)
    ot = solve_ot(mu, nu, p=args.p)
    return {side: calibrated_gradients(ot, side).scores.tolist() for side in ("row", "col")}


def cmd_detect(args):
    mu, nu = _load(args, 2)
    if (args.k is None) == (args.threshold is None):
        raise ConfigError("give exactly one of --k and --threshold")
    if args.private:
        size = args.defense_size or min(mu.size, nu.size)
        defense = make_defense(args.defense, size, mu.dim, args.sigma, args.seed)
        idx = detect_noisy_private(mu, nu, defense, args.t, args.p, args.k, args.threshold)
    else:
        k = None if args.k is None else (args.k, 0)
        idx = detect_noisy(mu, nu, args.p, k=k, threshold=args.threshold).row
    return {"flagged": [int(i) for i in idx], "private": args.private}


def cmd_textmatch(args):
    vocab = load_matrix(args.vocab, guess_format(args.vocab))
    words = load_words(args.words)
    cw, sw = load_words(args.client_words), load_words(args.server_words)
    index = {w: i for i, w in enumerate(words)}
    missing = [w for w in cw + sw if w not in index]
    if missing:
        raise ConfigError(f"{len(missing)} words not in the vocabulary, e.g. {missing[0]!r}")
    mu = uniform_measure(vocab[[index[w] for w in cw]])
    nu = uniform_measure(vocab[[index[w] for w in sw]])
    fed = fedwad_distance(mu, nu, K=args.K, t=args.t, p=args.p, tol=args.tol, seed=args.seed)
    defense = make_defense(args.defense, args.defense_size or mu.size, mu.dim, args.sigma, args.seed)
    eta = local_interpolate(defense, mu, args.t, args.p)
    return {"rate_fedwad_gamma": matching_rate(fed.artifacts["gamma"], vocab, words, cw),
            "rate_triangle_eta_mu": matching_rate(eta, vocab, words, cw)}


def cmd_serve(args):
    (data,) = _load(args, 1)
    if args.role == "server":
        return serve(parse_addr(args.bind), data, None, args.timeout).to_dict()
    if not args.peer:
        raise ConfigError("--peer is required for the client role")
    return connect(parse_addr(args.peer), data, _session_cfg(args, args.protocol), args.timeout).to_dict()


def cmd_bench(args):
    cfgs = [ExperimentConfig.load(c) for c in args.config]
    cfgs += [ExperimentConfig(experiment=e, seed=args.seed) for e in args.experiment]
    if not cfgs:
        raise ConfigError("give --config or --experiment")
    for c in cfgs:
        if c.out_dir is None:
            c.out_dir = args.out
    results = run_experiments(cfgs, args.workers)
    return [{"experiment": r.report["experiment"], "summary": r.report["summary"],
             "json": str(r.json_path), "csv": str(r.csv_path)} for r in results]


COMMANDS = {
    "direct": cmd_direct,
    "fedwad": cmd_fedwad,
    "triangle": cmd_triangle,
    "attack": cmd_attack,
    "dpgap": cmd_dpgap,
    "value": cmd_value,
    "detect": cmd_detect,
    "textmatch": cmd_textmatch,
    "serve": cmd_serve,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.verb](args)
        # bench writes its own report files under --out
        _emit(result, None if args.verb == "bench" else args.out)
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ConfigError, AttackConfigError, MatrixFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

import argparse
import logging
import sys
from typing import List, Optional

from config import LOG_LEVEL
from handlers.command_handlers import COMMANDS, RunConfig
from handlers.error_handlers import EXIT_OK, handle_error
from utils import write_json

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _code_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--code", help="base-graph CSV or .alist file (default: bundled BG2)")
    parser.add_argument("--z", type=int, help="lifting factor for base-graph codes")


def _decoder_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--decoder", help="sp, ms, nms, oms or neural (comma list for fer)")
    parser.add_argument("--params", help="decoder parameter JSON")
    parser.add_argument("--iters", type=int, help="iteration cap")
    parser.add_argument("--decode-p", type=float, help="crossover rate used to initialise LLRs")
    parser.add_argument("--nms-alpha", type=float)
    parser.add_argument("--oms-beta", type=float)


def _pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pipeline", help="pipeline config JSON written by calibrate")
    parser.add_argument("--quantizer", help="quantizer table JSON written by calibrate")
    parser.add_argument("--embeddings", help="embedding CSV (optional leading subject id column)")
    parser.add_argument("--row", type=int, help="embedding row to use")
    parser.add_argument("--m", type=int, help="number of code blocks")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings (flags override it)")
    common.add_argument("--dump-config", action="store_true", help="print the resolved settings and exit")
    common.add_argument("--log-level", default=LOG_LEVEL)
    common.add_argument("--no-progress", dest="progress", action="store_const", const=False)
    common.add_argument("--workers", type=int)
    common.add_argument("--chunk", type=int, help="frames or trials per work item")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path ('-' for stdout)")

    parser = argparse.ArgumentParser(
        prog="biokey",
        description="LDPC fuzzy-commitment toolkit for binary biometric templates"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build-code", help="lift a base graph and write alist + generator", parents=[common])
    _code_flags(build)

    fer = sub.add_parser("fer", help="Monte Carlo frame error rate sweep", parents=[common])
    _code_flags(fer)
    _decoder_flags(fer)
    fer.add_argument("--p", type=float, help="single crossover rate")
    fer.add_argument("--p-grid", help="crossover rates: a,b,c or start:stop:step")
    fer.add_argument("--frames", type=int)
    fer.add_argument("--channel-llr", action="store_const", const=True, help="initialise LLRs with the true p")
    fer.add_argument("--per-iteration-out", help="CSV of FER versus iteration cap")

    train = sub.add_parser("train", help="greedy training of neural/normalized/offset min-sum", parents=[common])
    _code_flags(train)
    train.add_argument("--variant", choices=("neural", "nms", "oms"))
    train.add_argument("--mode", choices=("shared", "per-edge"))
    train.add_argument("--iters", type=int)
    train.add_argument("--p-low", type=float)
    train.add_argument("--p-high", type=float)
    train.add_argument("--frames-per-epoch", type=int)
    train.add_argument("--epochs", type=int)
    train.add_argument("--step-size", type=float)
    train.add_argument("--momentum", type=float)
    train.add_argument("--decode-p", type=float)

    calibrate = sub.add_parser("calibrate", help="fit quantizer and search the masking rate", parents=[common])
    calibrate.add_argument("--embeddings")
    calibrate.add_argument("--q", type=int)
    calibrate.add_argument("--tau", type=float)
    calibrate.add_argument("--kappa-quantile", type=float)
    calibrate.add_argument("--perm-seed", type=int)
    calibrate.add_argument("--mask-seed", type=int)
    calibrate.add_argument("--pairs", type=int, help="inter-class pairs for the masking search")
    calibrate.add_argument("--quantizer-out")

    enroll = sub.add_parser("enroll", help="bind a fresh key to one embedding", parents=[common])
    _code_flags(enroll)
    _pipeline_flags(enroll)
    enroll.add_argument("--params", help="decoder parameters to record in the commitment")
    enroll.add_argument("--test-key-seed", type=int, help="reproducible test-mode key")

    verify = sub.add_parser("verify", help="retrieve the key from a commitment", parents=[common])
    _code_flags(verify)
    _decoder_flags(verify)
    _pipeline_flags(verify)
    verify.add_argument("--commitment")

    evaluate = sub.add_parser("eval", help="GMR/FMR curves over a population", parents=[common])
    _code_flags(evaluate)
    _decoder_flags(evaluate)
    _pipeline_flags(evaluate)
    evaluate.add_argument("--population", help="synthetic population file")
    evaluate.add_argument("--trials", type=int, help="cap on trials per hypothesis")
    evaluate.add_argument("--pairs", type=int)
    evaluate.add_argument("--report-out")

    unlink = sub.add_parser("unlink", help="linkability of commitments under independent keys", parents=[common])
    _code_flags(unlink)
    unlink.add_argument("--population")
    unlink.add_argument("--keys-per-subject", type=int)
    unlink.add_argument("--bins", type=int, help="histogram bins (default: from the pair count)")
    unlink.add_argument("--omega", type=float)
    unlink.add_argument("--curve-out")

    security = sub.add_parser("security", help="entropy and key-guessing strength", parents=[common])
    _code_flags(security)
    security.add_argument("--scores", help="CSV with label,score columns")
    security.add_argument("--e-hd", type=float)
    security.add_argument("--v-hd", type=float)
    security.add_argument("--t", type=int)
    security.add_argument("--d", type=int)
    security.add_argument("--capability-rate", type=float)
    security.add_argument("--m", type=int)

    synth = sub.add_parser("synth", help="write a synthetic population", parents=[common])
    synth.add_argument("--kind", choices=("binary", "embeddings"))
    synth.add_argument("--subjects", type=int)
    synth.add_argument("--samples", type=int)
    synth.add_argument("--length", type=int)
    synth.add_argument("--m", type=int)
    synth.add_argument("--p-m", type=float)
    synth.add_argument("--p-nm", type=float)
    synth.add_argument("--noise", type=float)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(args.log_level.upper())

    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "dump_config", "log_level")}
    try:
        cfg = RunConfig.resolve(args.command, flags, args.config)
        if args.dump_config:
            write_json(cfg.to_dict())
            return EXIT_OK
        return COMMANDS[args.command](cfg)
    except Exception as e:
        return handle_error(e)


if __name__ == '__main__':
    sys.exit(main())

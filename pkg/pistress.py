"""Command line: pistress gen-data | train | eval | super-resolve | selftest | compare | export-checkpoint.

Every command prints one JSON summary line on standard output and exits 0 on
success; failures exit 1 (config), 2 (data) or 3 (numerical) with the
diagnostic on standard error.
"""

import argparse
import json
import logging
import os
import sys

from filelock import FileLock, Timeout

import compareModels
import evaluateModel
import generateData
import selfTest
import superResolve
import trainModel
from config.runConfig import loadRunConfig
from func.checkpoint import exportCheckpointText
from func.contourCodec import ContourMap
from func.errors import ConfigError, DataError, NumericalError, PistressError
from Logging.logSetup import setupLogging

LOCK_NAME = ".pistress.lock"


def _addRunFlags(parser):
    parser.add_argument("--config", help="run config JSON file")
    parser.add_argument("--run-dir", dest="runDir")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batchSize", type=int)
    parser.add_argument("--lr", dest="learningRate", type=float)
    parser.add_argument("--variant", choices=["unet", "unetpp"])
    parser.add_argument("--physics-informed", dest="physicsInformed", action=argparse.BooleanOptionalAction)
    parser.add_argument("--physics-weight", dest="physicsWeight", type=float)
    parser.add_argument("--depth", type=int)
    parser.add_argument("--base-channels", dest="baseChannels", type=int)
    parser.add_argument("--epsilon", type=float)


def buildParser():
    parser = argparse.ArgumentParser(prog="pistress", description="Physics-informed stress super-resolution")
    commands = parser.add_subparsers(dest="command", required=True)

    _addRunFlags(commands.add_parser("gen-data", help="solve the FEM cases and write the image dataset"))
    _addRunFlags(commands.add_parser("train", help="train one model variant"))

    evaluate = commands.add_parser("eval", help="loss tables of a checkpoint on a split")
    _addRunFlags(evaluate)
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--split", default="test", choices=list(evaluateModel.SPLITS))

    resolve = commands.add_parser("super-resolve", help="super-resolve coarse image triples")
    _addRunFlags(resolve)
    resolve.add_argument("--checkpoint", required=True)
    resolve.add_argument("inputs", nargs="*", help="image sidecar JSON files")
    resolve.add_argument("--channels", nargs=3, action="append", default=[], metavar=("SX", "SY", "TXY"),
                         help="three 8-bit channel files (PGM or PNG) of one coarse image")
    resolve.add_argument("--contour-map", dest="contourMap", nargs=2, type=float, metavar=("C", "S"),
                         help="contour map of the channel files")

    export = commands.add_parser("export-checkpoint", help="write a checkpoint as one weight per text line")
    _addRunFlags(export)
    export.add_argument("--checkpoint", required=True)
    export.add_argument("--output", help="text file, default next to the checkpoint")

    selftest = commands.add_parser("selftest", help="patch test, codec round trip and gradient checks")
    _addRunFlags(selftest)

    compare = commands.add_parser("compare", help="train variants over seeds and check loss orderings")
    _addRunFlags(compare)
    compare.add_argument("--variants", nargs="+", default=["unet", "pi-unet"], choices=list(compareModels.VARIANTS))
    compare.add_argument("--seeds", nargs="+", type=int)
    return parser


def overridesFrom(args):
    keys = ("runDir", "seed", "epochs", "batchSize", "learningRate", "variant", "physicsInformed",
            "physicsWeight", "depth", "baseChannels", "epsilon")
    return {key: getattr(args, key) for key in keys if getattr(args, key, None) is not None}


def runCommand(args):
    overrides = overridesFrom(args)
    if args.command == "gen-data":
        return generateData.main(args.config, overrides)
    if args.command == "train":
        return trainModel.main(args.config, overrides)
    if args.command == "eval":
        return evaluateModel.main(args.config, args.checkpoint, args.split, overrides)
    if args.command == "super-resolve":
        contourMap = ContourMap(*args.contourMap) if args.contourMap else None
        return superResolve.main(args.config, args.checkpoint, args.inputs, overrides, args.channels, contourMap)
    if args.command == "export-checkpoint":
        textPath = args.output or os.path.splitext(args.checkpoint)[0] + ".txt"
        exportCheckpointText(args.checkpoint, textPath)
        return {"command": "export-checkpoint", "checkpoint": args.checkpoint, "text": textPath}
    if args.command == "compare":
        return compareModels.main(args.config, overrides, args.variants, args.seeds)
    config = loadRunConfig(args.config, overrides)
    setupLogging(config.runDir, "selftest")
    summary = selfTest.main(config.seed)
    if not summary["passed"]:
        raise NumericalError(f"self-test failed: {', '.join(summary['failed'])}")
    return summary


def main(argv=None):
    args = buildParser().parse_args(argv)
    try:
        config = loadRunConfig(args.config, overridesFrom(args))
        os.makedirs(config.runDir, exist_ok=True)
        try:
            with FileLock(os.path.join(config.runDir, LOCK_NAME), timeout=0):
                summary = runCommand(args)
        except Timeout:
            raise DataError(f"run directory {config.runDir} is locked by another pistress process")
    except PistressError as e:
        logging.error(f"{args.command} failed: {e}")
        print(f"pistress {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exitCode
    except ArithmeticError as e:
        print(f"pistress {args.command}: numerical failure: {e}", file=sys.stderr)
        return NumericalError.exitCode
    except OSError as e:
        print(f"pistress {args.command}: I/O failure: {e}", file=sys.stderr)
        return DataError.exitCode
    except ValueError as e:
        print(f"pistress {args.command}: invalid input: {e}", file=sys.stderr)
        return ConfigError.exitCode
    print(json.dumps(summary, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())

import argparse
import sys
from typing import Any, Dict, List, Optional

from ..core.config import RunConfig
from ..core.io import to_json
from ..core.logging import StructuredLogger
from ..services.pipeline_service import PipelineService

logger = StructuredLogger("cli")


def cmd_gen(config: RunConfig) -> int:
    """Write the synthetic options, index, futures and flows CSVs into the output directory."""
    paths = PipelineService(config).generate()
    logger.info("Synthetic bundle written", files=[str(p) for p in paths])
    return 0


def cmd_calibrate(config: RunConfig) -> int:
    """Calibrate every day in the data directory and write the calibration CSV."""
    path = PipelineService(config).calibrate()
    logger.info("Calibration written", file=str(path))
    return 0


def cmd_analyze(config: RunConfig) -> int:
    """Correlation, Lasso path and CV, forest scores and permutation importance."""
    paths = PipelineService(config).analyze()
    logger.info("Analysis written", files=[str(p) for p in paths])
    return 0


def cmd_oracle(config: RunConfig) -> int:
    """Monte Carlo estimate printed as JSON on stdout."""
    payload = PipelineService(config).oracle()
    sys.stdout.write(to_json(payload) + "\n")
    return 0


def cmd_report(config: RunConfig) -> int:
    path = PipelineService(config).report()
    logger.info("Report written", file=str(path))
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "calibrate": cmd_calibrate,
    "analyze": cmd_analyze,
    "oracle": cmd_oracle,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat RUN_KEY=value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", dest="out_dir", help="output directory")
    common.add_argument("--threads", type=int)

    parser = argparse.ArgumentParser(prog="vstoxx-lab", description="Heston / VSTOXX futures research pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="generate a synthetic market")
    gen.add_argument("--days", type=int)
    gen.add_argument("--effect-strength", dest="effect_strength", type=float)
    gen.add_argument("--noise-scale", dest="noise_scale", type=float)

    calibrate = sub.add_parser("calibrate", parents=[common], help="daily Heston calibration")
    calibrate.add_argument("--data", dest="data_dir")
    calibrate.add_argument("--weights", nargs=2, type=float, metavar=("W_SIGMA", "W_IDX"))
    calibrate.add_argument("--quad-nodes", dest="quad_nodes", type=int)
    calibrate.add_argument("--popsize", dest="de_popsize", type=int)
    calibrate.add_argument("--maxiter", dest="de_maxiter", type=int)

    analyze = sub.add_parser("analyze", parents=[common], help="feature analysis and learners")
    analyze.add_argument("--data", dest="data_dir")
    analyze.add_argument("--test-fraction", dest="test_fraction", type=float)
    analyze.add_argument("--folds", type=int)
    analyze.add_argument("--n-alphas", dest="n_alphas", type=int)
    analyze.add_argument("--trees", dest="n_trees", type=int)
    analyze.add_argument("--repeats", dest="n_repeats", type=int)

    oracle = sub.add_parser("oracle", parents=[common], help="Monte Carlo oracle run")
    oracle.add_argument("--target", dest="oracle_target", choices=["future", "call", "variance"])
    oracle.add_argument("--paths", dest="mc_paths", type=int)
    oracle.add_argument("--steps", dest="mc_steps", type=int)
    oracle.add_argument("--antithetic", action="store_true", default=None)
    for name in ("kappa", "theta", "xi", "rho", "v0", "tau", "forward", "strike"):
        oracle.add_argument(f"--{name}", type=float)

    sub.add_parser("report", parents=[common], help="summary of calibration and analysis outputs")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: Dict[str, Any] = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "config", "weights") and value is not None
    }
    if getattr(args, "weights", None) is not None:
        overrides["w_sigma"], overrides["w_idx"] = args.weights
    return RunConfig.load(args.config, **overrides)


def parse(argv: Optional[List[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)

import argparse
import sys

from src.exception import CustomException, InvalidParameterError
from src.logger import logging
from src.pipeline.experiment_config import ExperimentConfig, parse_grid, parse_real, parse_real_list
from src.pipeline.experiment_pipeline import ExperimentPipeline, ExperimentPipelineConfig

SUBCOMMANDS = {
    "spacings": "spacings",
    "coupon": "coupon",
    "sobolev1d": "sobolev1d",
    "integration": "integration",
    "lipschitz": "lipschitz",
    "sobolev-md": "sobolev_md",
    "l1": "l1",
    "ellipsoid": "ellipsoid",
}


class _ArgumentParser(argparse.ArgumentParser):
    # usage problems exit with status 1 like every other invalid parameter
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidParameterError(message)


def _add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--n", dest="n_grid", default=None,
                        help="n grid: comma list, a..b or a..b:geometric:k")
    parser.add_argument("--d", type=int, default=None, help="dimension")
    parser.add_argument("--p", default=None, help="smoothness norm exponent, inf allowed")
    parser.add_argument("--q", default=None, help="error norm exponent, inf allowed")
    parser.add_argument("--s", default=None, help="smoothness or power-sum order")
    parser.add_argument("--alpha", default=None, help="decay exponent or thinning confidence")
    parser.add_argument("--beta", default=None, help="logarithmic decay exponent")
    parser.add_argument("--m", type=int, default=None, help="grid side, ambient dimension")
    parser.add_argument("--m-grid", dest="m_grid", default=None, help="grid of ambient dimensions")
    parser.add_argument("--ell", default=None, help="grid of coupon counts")
    parser.add_argument("--c", default=None, help="comma list of tail exponents")
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--restarts", type=int, default=None)
    parser.add_argument("--sparsity", type=int, default=None)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--output", default=None, help="output file (default under $RINFO_OUTPUT_DIR)")
    parser.add_argument("--format", dest="output_format", choices=("csv", "json"), default="csv")
    parser.add_argument("--snapshot", default=None, help="also pickle the run with dill to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="rinfo", description="Radius of information experiments")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    for name in SUBCOMMANDS:
        _add_arguments(subparsers.add_parser(name))
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    parameters = dict(
        n_grid=parse_grid(args.n_grid),
        d=args.d,
        p=parse_real(args.p),
        q=parse_real(args.q),
        s=parse_real(args.s),
        alpha=parse_real(args.alpha),
        beta=parse_real(args.beta),
        m=args.m,
        m_grid=parse_grid(args.m_grid),
        ell=parse_grid(args.ell),
        c=parse_real_list(args.c),
        trials=args.trials,
        restarts=args.restarts,
        sparsity=args.sparsity,
        workers=args.workers,
    )
    return ExperimentConfig.build(
        experiment=SUBCOMMANDS[args.command],
        parameters=parameters,
        master_seed=args.seed,
        output_path=args.output,
        output_format=args.output_format,
    )


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = config_from_args(args)
    except CustomException as e:
        logging.info(f'Usage error : {e.raw_message}')
        print(f"rinfo: {e.raw_message}", file=sys.stderr)
        return e.exit_code

    pipeline = ExperimentPipeline(ExperimentPipelineConfig(snapshot_path=args.snapshot))
    return pipeline.run(config)


if __name__ == "__main__":
    sys.exit(main())

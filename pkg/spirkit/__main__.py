"""Symmetric private information retrieval toolkit."""

import argparse
import logging
import logging.config
import signal
import sys
from argparse import Namespace
from typing import Sequence

from spirkit import (
    audit,
    capacity,
    config,
    exceptions,
    feature,
    info,
    reports,
    schemes,
    service,
    session,
)
from spirkit.feature import RunConfig
from spirkit.renderer import ReportRenderer

logger = logging.getLogger("spirkit")


def report_infeasible(
    run_config: RunConfig, err: schemes.InfeasibleParamsError, renderer: ReportRenderer
) -> int:
    """Answer a scheme command on trivial or infeasible parameters with the
    capacity report that explains why.
    """

    logger.warning("%s", err)
    params = err.params
    context = capacity.CapacityFeature().report(params.n, params.k, None)
    # deal --output names the randomness file, not a report
    if run_config.output is not None and run_config.subcommand != "deal":
        reports.write_report(
            run_config.output,
            reports.envelope(run_config, "capacity", capacity.report_to_dict(context)),
        )
    print(renderer.render("capacity.txt.j2", context), end="")
    return info.EXIT_USAGE


def dispatch(run_config: RunConfig) -> int:
    """Run the workflow a command names.

    Args:
        run_config (RunConfig): Validated settings

    Returns:
        int: Exit status
    """

    renderer = ReportRenderer()
    feature_obj: feature.Feature | None = None
    feature_cli_parser: feature.FeatureCliParser | None = None

    def interrupt_handler(sig, frame):
        logger.info("Exiting spirkit...")
        if feature_obj:
            feature_obj.cleanup()
        logger.info("Exited spirkit.")
        sys.exit(info.EXIT_OK)

    signal.signal(signal.SIGINT, interrupt_handler)

    match run_config.subcommand:
        case "capacity":
            feature_obj = capacity.CapacityFeature()
            feature_cli_parser = capacity.CapacityCliParser(feature_obj, renderer)
        case "audit":
            feature_obj = audit.AuditFeature.from_run_config(run_config)
            feature_cli_parser = audit.AuditCliParser(feature_obj, renderer)
        case "run" | "simulate" | "client":
            feature_obj = session.SessionFeature.from_run_config(run_config)
            feature_cli_parser = session.SessionCliParser(feature_obj, renderer)
        case "serve":
            feature_obj = service.ServeCliParser.build_feature(run_config)
            feature_cli_parser = service.ServeCliParser(feature_obj)
        case "deal":
            feature_obj = service.DealFeature()
            feature_cli_parser = service.DealCliParser(feature_obj)
        case _:
            raise feature.UsageError("No command given, see --help")

    try:
        return feature_cli_parser.parse(run_config)
    except schemes.InfeasibleParamsError as err:
        return report_infeasible(run_config, err, renderer)
    finally:
        feature_obj.cleanup()


def add_params_arguments(command: argparse.ArgumentParser, k_flag: str = "--k") -> None:
    command.add_argument("--n", type=int, help="Number of databases N")
    command.add_argument(
        k_flag, type=int, dest="k_count" if k_flag == "--k-count" else "k",
        help="Number of messages K",
    )
    command.add_argument("--length", type=int, help="Symbols per message L")
    command.add_argument(
        "--lengths", type=int, nargs="+", metavar="L", help="Symbols of each message"
    )
    command.add_argument("--p", type=int, help="Field prime (default from config)")


def add_output_arguments(command: argparse.ArgumentParser) -> None:
    command.add_argument("--output", help="Write the JSON report to this file")
    command.add_argument(
        "--json", action="store_true", help="Print the JSON report instead of a table"
    )


def add_variant_argument(command: argparse.ArgumentParser, flag: str) -> None:
    command.add_argument(
        flag,
        dest="variant",
        metavar="NAME",
        help="Scheme variant plugin (e.g. no-mask, deterministic-coins, "
        "reused-randomness, wrong-subtraction)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=info.APP_NAME, description=info.DESCRIPTION)
    parser.add_argument("--version", action="version", version=info.APP_VERSION)
    subparsers = parser.add_subparsers(help="Sub-command help", dest="subparser_name")
    plan_choices = schemes.PlanKind.ALL

    capacity_command = subparsers.add_parser("capacity", help="Capacity calculator")
    add_params_arguments(capacity_command)
    capacity_command.add_argument(
        "--rho", help='Common randomness per message symbol, "a/b" or "inf"'
    )
    add_output_arguments(capacity_command)

    audit_command = subparsers.add_parser("audit", help="Exhaustive scheme audit")
    add_params_arguments(audit_command)
    audit_command.add_argument("--plan", choices=plan_choices)
    add_variant_argument(audit_command, "--sabotage")
    audit_command.add_argument("--budget", type=int, help="Maximum states per index")
    audit_command.add_argument(
        "--samples", type=int, help="Sample this many states when over budget"
    )
    audit_command.add_argument("--workers", type=int, help="Worker threads")
    audit_command.add_argument("--chunk-size", type=int, help="States per chunk")
    audit_command.add_argument("--seed", type=int)
    add_output_arguments(audit_command)

    run_command = subparsers.add_parser("run", help="One in-process session")
    add_params_arguments(run_command)
    run_command.add_argument("--plan", choices=plan_choices)
    run_command.add_argument("--index", type=int, help="Desired message (1-based)")
    run_command.add_argument("--store", help="Store file (random messages if absent)")
    add_variant_argument(run_command, "--variant")
    run_command.add_argument("--seed", type=int)
    add_output_arguments(run_command)

    simulate_command = subparsers.add_parser(
        "simulate", help="Sessions against N isolated in-process databases"
    )
    add_params_arguments(simulate_command, "--k-count")
    simulate_command.add_argument("--plan", choices=plan_choices)
    simulate_command.add_argument("--trials", type=int, default=1)
    simulate_command.add_argument(
        "--network", action="store_true", help="Serve databases on localhost TCP"
    )
    add_variant_argument(simulate_command, "--variant")
    simulate_command.add_argument("--seed", type=int)
    add_output_arguments(simulate_command)

    serve_command = subparsers.add_parser("serve", help="Serve one database")
    serve_command.add_argument("--port", type=int)
    serve_command.add_argument("--host")
    serve_command.add_argument("--node-index", type=int)
    serve_command.add_argument("--store", help="Store file")
    serve_command.add_argument("--randomness", help="Randomness file from deal")
    add_variant_argument(serve_command, "--variant")

    client_command = subparsers.add_parser(
        "client", help="Retrieve a message from served databases"
    )
    client_command.add_argument("--servers", help="host:port,host:port,...")
    client_command.add_argument(
        "--k", type=int, dest="index", help="Desired message (1-based)"
    )
    client_command.add_argument("--params", help="Parameter file (TOML)")
    client_command.add_argument("--session", type=int, help="Session id")
    client_command.add_argument("--timeout", type=float)
    add_variant_argument(client_command, "--variant")
    client_command.add_argument("--seed", type=int)
    add_output_arguments(client_command)

    deal_command = subparsers.add_parser(
        "deal", help="Write common randomness for databases"
    )
    deal_command.add_argument("--params", help="Parameter file (TOML)")
    deal_command.add_argument("--sessions", type=int, default=1)
    deal_command.add_argument("--store", help="Also write a random store here")
    deal_command.add_argument("--output", help="Randomness file to write")
    deal_command.add_argument("--seed", type=int)

    return parser


def get_cli_args(argv: Sequence[str] | None = None) -> Namespace:
    """Process command line arguments."""

    return build_parser().parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    """Starting point."""

    cli_args = get_cli_args(argv)

    info.DATA_DIR.mkdir(parents=True, exist_ok=True)
    info.LOGGING_DIR.mkdir(parents=True, exist_ok=True)
    logging.config.dictConfig(info.LOGGING_CONFIG)

    try:
        spirkit_config = config.get_general_config()
        logger.debug("Loaded general configuration.")
        run_config = feature.run_config_from_cli(cli_args, spirkit_config)
    except exceptions.UserError as err:
        print(err, file=sys.stderr)
        return info.EXIT_USAGE

    logger.debug("spirkit %s started.", info.APP_VERSION)

    try:
        return dispatch(run_config)
    except exceptions.UserError as err:
        print(err, file=sys.stderr)
        return info.EXIT_USAGE
    except exceptions.AppError as err:
        logger.error(err)
        return info.EXIT_AUDIT_FAILED
    except Exception as err:
        logger.exception(err)
        raise err


if __name__ == "__main__":
    sys.exit(main())

from __future__ import annotations

import abc
import sys
from pathlib import Path
from typing import TYPE_CHECKING

from mvreinsure.config import RunConfig, load_run_config
from mvreinsure.exceptions import ConfigError

if TYPE_CHECKING:
    import argparse

    from mvreinsure.app import Application
    from mvreinsure.models import Report


class Command:
    """Base Command class."""

    name: str
    aliases: tuple[str, ...] = ()

    @classmethod
    def register(cls, subparsers: argparse._SubParsersAction[argparse.ArgumentParser]) -> argparse.ArgumentParser:
        """
        Register Command to subparsers.

        Creates the subparser for command options and sets `command=cls.run` as default
        executor.
        """
        subparser = subparsers.add_parser(name=cls.name, help=cls.__doc__, aliases=cls.aliases)
        cls.add_arguments(subparser)
        subparser.set_defaults(command=cls.run)
        return subparser

    @classmethod
    @abc.abstractmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        raise NotImplementedError

    @classmethod
    def run(cls, args: argparse.Namespace, app: Application) -> None:
        cls.execute(args, app)

    @classmethod
    @abc.abstractmethod
    def execute(cls, args: argparse.Namespace, app: Application) -> None:
        raise NotImplementedError


class PipelineCommand(Command):
    """Command working on a JSON run configuration."""

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("-c", "--config", action="store", help="JSON run configuration")
        parser.add_argument("-o", "--out", action="store", help="output directory, default from settings: 'out'")
        parser.add_argument("--seed", action="store", type=int, help="Monte Carlo seed")
        parser.add_argument("--paths", action="store", type=int, help="number of Monte Carlo paths")
        parser.add_argument("--grid-steps", action="store", type=int, help="Riccati time steps")
        parser.add_argument("--nmax", action="store", type=int, help="claim-count cap for count-modulated models")
        parser.add_argument(
            "-t",
            "--template",
            action="store",
            help="report format [txt, markdown, json], or path to your template; default from settings: 'txt'",
        )
        parser.add_argument(
            "--dump-config",
            action="store_true",
            help="print the effective run configuration as JSON and exit",
        )

    @classmethod
    def run(cls, args: argparse.Namespace, app: Application) -> None:
        run_config = cls.run_config(args, app)
        if args.dump_config:
            sys.stdout.write(run_config.dumps() + "\n")
            return
        args.run_config = run_config
        cls.execute(args, app)

    @classmethod
    def run_config(cls, args: argparse.Namespace, app: Application) -> RunConfig:
        if not args.config:
            msg = "missing --config: a JSON run configuration is required"
            raise ConfigError(msg)
        return load_run_config(args.config, app.settings).apply_args(args)

    @classmethod
    def output_path(cls, run_config: RunConfig, name: str) -> Path:
        return Path(run_config.output) / name

    @classmethod
    def emit(cls, args: argparse.Namespace, app: Application, report: Report) -> None:
        sys.stdout.write(app.render(report, args.template))

import argparse
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any, NoReturn

from codedvae.cli.exceptions import UsageError
from codedvae.cli.schemas import CliInvocation

logger = logging.getLogger(__name__)

Handler = Callable[[CliInvocation], int]


class CommandLineParser(argparse.ArgumentParser):
    """Argument parser raising UsageError instead of printing usage and exiting."""

    def error(self, message: str) -> NoReturn:
        logger.error(f"{self.prog}: {message}", exc_info=False)
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class Command:
    """A registered subcommand and its extra command-line options."""

    name: str
    handler: Handler
    help: str
    options: dict[str, dict[str, Any]] = field(default_factory=dict)


class CommandRouter:
    """
    Registry of subcommands, built with the command decorator.

    Attributes:
        prog: Program name shown in usage lines.
        commands: Registered commands by name.
    """

    def __init__(self, prog: str) -> None:
        self.prog = prog
        self.commands: dict[str, Command] = {}

    def command(
        self, name: str, help: str, **options: dict[str, Any]
    ) -> Callable[[Handler], Handler]:
        """
        Register a handler.

        Args:
            name: Subcommand name.
            help: One-line description.
            options: Extra flags, keyed by their CliInvocation field, valued
                by argparse keyword arguments.
        Returns:
            Decorator returning the handler unchanged.
        """

        def register(handler: Handler) -> Handler:
            self.commands[name] = Command(name, handler, help, options)
            return handler

        return register

    def build_parser(self) -> argparse.ArgumentParser:
        parser = CommandLineParser(prog=self.prog)
        subparsers = parser.add_subparsers(dest="subcommand", required=True)
        for command in self.commands.values():
            sub = subparsers.add_parser(command.name, help=command.help)
            sub.add_argument("--config", type=str, help="key=value experiment file")
            sub.add_argument(
                "--set",
                dest="overrides",
                action="append",
                default=[],
                metavar="KEY=VALUE",
                help="override one configuration key",
            )
            sub.add_argument("--output", type=str, help="run directory")
            for dest, spec in command.options.items():
                kwargs = dict(spec)
                flag = kwargs.pop("flag", f"--{dest.replace('_', '-')}")
                sub.add_argument(flag, dest=dest, **kwargs)
        return parser

    def parse(self, argv: list[str] | None = None) -> CliInvocation:
        namespace = self.build_parser().parse_args(argv)
        values = {k: v for k, v in vars(namespace).items() if v is not None}
        return CliInvocation(**values)

    def dispatch(self, invocation: CliInvocation) -> int:
        command = self.commands[invocation.subcommand]
        logger.debug(f"Dispatching {command.name}")
        return command.handler(invocation)


router = CommandRouter(prog="codedvae")

# svl/command_utils.py
"""
Shared base for the SVL management commands.

Engine errors surface as one ``kind: message`` line on stderr; config
errors exit with code 2, every other engine error with code 1.
"""

import logging
import sys
from pathlib import Path
from typing import Optional

from django.core.management.base import BaseCommand, CommandError, handle_default_options

from svl_desk.__version__ import __version__

from .exceptions import ConfigError, SvlError
from .export_utils import render_table, validate_output_dir

logger = logging.getLogger(__name__)

EXIT_ENGINE_ERROR = 1
EXIT_CONFIG_ERROR = 2


def engine_command_error(exc: SvlError) -> CommandError:
    """Translate an engine error into a CommandError carrying its exit code."""
    returncode = EXIT_CONFIG_ERROR if isinstance(exc, ConfigError) else EXIT_ENGINE_ERROR
    return CommandError(f"{exc.kind}: {exc}", returncode=returncode)


class SvlCommand(BaseCommand):
    """
    BaseCommand whose ``run`` raises engine errors freely.

    Subclasses implement ``run(**options)`` instead of ``handle``.
    """

    requires_system_checks = []

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except SvlError as exc:
            logger.debug("%s failed", self.__class__.__module__, exc_info=True)
            raise engine_command_error(exc) from exc

    def get_version(self):
        return __version__

    def run(self, **options):
        raise NotImplementedError("subclasses of SvlCommand must provide a run() method")

    def run_from_argv(self, argv):
        # Same flow as BaseCommand.run_from_argv, minus the class-name prefix
        self._called_from_command_line = True
        parser = self.create_parser(argv[0], argv[1])
        options = parser.parse_args(argv[2:])
        cmd_options = vars(options)
        args = cmd_options.pop("args", ())
        handle_default_options(options)
        try:
            self.execute(*args, **cmd_options)
        except CommandError as exc:
            if options.traceback:
                raise
            self.stderr.write(str(exc), lambda x: x)
            sys.exit(exc.returncode)

    # ------------------------------------------------------------------
    # Output helpers
    # ------------------------------------------------------------------

    def output_dir(self, value, fallback: Optional[Path] = None) -> Path:
        """``--out`` when given, else ``fallback``; parents are created."""
        target = Path(value) if value else fallback
        if target is None:
            raise ConfigError("--out is required")
        target.parent.mkdir(parents=True, exist_ok=True)
        return validate_output_dir(target)

    def write_table(self, fieldnames, rows):
        self.stdout.write(render_table(fieldnames, rows))

    def success(self, message: str):
        self.stdout.write(self.style.SUCCESS(message))

    def warning(self, message: str):
        self.stdout.write(self.style.WARNING(message))

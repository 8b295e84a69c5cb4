"""Command-line interface, configuration files and CSV output."""

from .commands import (EXIT_FAILURE, EXIT_INPUT, EXIT_OK, analyze_report, build_parser, build_setup, cmd_analyze,
                       cmd_converge, cmd_solve, main, stability_gate, write_csv)
from .config import SCHEMA, ProblemConfig, load_config, parse_config, serialize_config
from .expr import Expression

__all__ = [
    "EXIT_FAILURE", "EXIT_INPUT", "EXIT_OK", "SCHEMA", "Expression", "ProblemConfig", "analyze_report",
    "build_parser", "build_setup", "cmd_analyze", "cmd_converge", "cmd_solve", "load_config", "main",
    "parse_config", "serialize_config", "stability_gate", "write_csv",
]

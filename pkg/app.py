"""posepipe - 全身姿態估計後處理與追蹤管線 主程式"""
import argparse
import logging
import os
import sys
from typing import List, Optional, Type

# 路徑防呆
current_dir = os.path.dirname(os.path.abspath(__file__))
if current_dir not in sys.path:
    sys.path.append(current_dir)

from src import __version__
from src.cli.base import Command
from src.cli.bench import BenchCommand
from src.cli.eval import EvalCommand
from src.cli.nms import NmsCommand
from src.cli.pgpg import PgpgCommand
from src.cli.run import RunCommand
from src.cli.synth import SynthCommand
from src.config.settings import Settings
from src.utils.exceptions import PosePipeError
from src.utils.log import configure_logging

logger = logging.getLogger("posepipe")

COMMANDS: List[Type[Command]] = [RunCommand, EvalCommand, NmsCommand, PgpgCommand, BenchCommand, SynthCommand]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posepipe", description="全身姿態估計後處理與追蹤管線")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true", help="顯示 INFO 日誌")
    parser.add_argument("--debug", action="store_true", help="顯示 DEBUG 日誌")
    parser.add_argument("--config", help="TOML 設定檔")

    commands = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = commands.add_parser(command.name, help=command.help)
        command.add_arguments(sub)
        sub.set_defaults(command_class=command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(verbose=args.verbose, debug=args.debug)
    try:
        settings = Settings.load(args.config)
        return args.command_class(args, settings).execute()
    except PosePipeError as e:
        logger.debug("命令失敗", exc_info=True)
        print(f"posepipe {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

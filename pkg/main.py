"""
PPSGDA - Command Line Entry Point

Projected push-sum gradient descent-ascent on the distributed economic dispatch problem.
"""

import sys
from datetime import datetime
from pathlib import Path

from src.cli import build_parser, main as cli_main
from src.config import get_app_path, solver_defaults


class TeeWriter:
    """Duplicates writes to both the original stream and a log file."""
    def __init__(self, original, log_file):
        self.original = original
        self.log_file = log_file

    def write(self, text):
        if text:
            self.original.write(text)
            try:
                self.log_file.write(text)
                self.log_file.flush()
            except Exception:
                pass

    def flush(self):
        self.original.flush()
        try:
            self.log_file.flush()
        except Exception:
            pass

    def fileno(self):
        return self.original.fileno()


def setup_file_logging(log_dir: str = None):
    """Tee stdout/stderr into a timestamped file in the log directory next to the app."""
    logs_dir = Path(log_dir or solver_defaults.log_dir)
    if not logs_dir.is_absolute():
        logs_dir = get_app_path() / logs_dir
    logs_dir.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
    log_path = logs_dir / f"ppsgda_{timestamp}.txt"
    log_file = open(log_path, "w", encoding="utf-8")
    sys.stdout = TeeWriter(sys.__stdout__, log_file)
    sys.stderr = TeeWriter(sys.__stderr__, log_file)
    print(f"[INIT] Log file: {log_path}")
    return log_file


def main(argv=None) -> int:
    """Application entry point."""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    log_file = None
    if args.log_file or solver_defaults.file_logging:
        log_file = setup_file_logging()
    try:
        return cli_main(argv)
    finally:
        if log_file is not None:
            sys.stdout = sys.__stdout__
            sys.stderr = sys.__stderr__
            log_file.close()


if __name__ == "__main__":
    sys.exit(main())

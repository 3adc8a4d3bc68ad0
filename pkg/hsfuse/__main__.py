"""Entry point for running hsfuse as a module: python -m hsfuse"""

import logging
import sys
from pathlib import Path

# Load .env file if it exists (before importing config)
try:
    from dotenv import load_dotenv
    env_path = Path.cwd() / ".env"
    if env_path.exists():
        load_dotenv(env_path)
except ImportError:
    pass  # python-dotenv not installed, use environment variables directly

from hsfuse.cli import build_parser, dispatch
from hsfuse.config import Config
from hsfuse.errors import FusionError


def setup_logging(verbose: bool) -> None:
    """Configure logging based on verbosity setting."""
    level = logging.INFO if verbose else logging.WARNING

    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    logging.getLogger("hsfuse").setLevel(level)

    for name in ("matplotlib", "numba", "PIL"):
        logging.getLogger(name).setLevel(logging.ERROR)


def main(argv: list[str] | None = None) -> int:
    """Main entry point."""
    argv = list(sys.argv[1:] if argv is None else argv)
    config = Config.from_env()
    args = build_parser(config).parse_args(argv)

    setup_logging(args.verbose)

    try:
        return dispatch(args, argv)
    except FusionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("\n👋 Interrupted")
        return 130
    except Exception as e:
        logging.exception("Fatal error: %s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())

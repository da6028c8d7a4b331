#!/usr/bin/env python3
"""
Lattice emission simulator entry point
"""
import sys
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables first
load_dotenv()

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from config import init_config
from utils.logging import setup_logging
from utils.errors import error_handler, ConfigError


def main():
    """Configure logging from the environment and hand over to the CLI"""
    try:
        config = init_config()
        setup_logging(
            config.logging,
            app_name=config.app_name,
            version=config.version,
            environment=config.environment
        )
    except ConfigError as e:
        print(f"Configuration error: {e.message}")
        sys.exit(1)
    except Exception as e:
        error_handler.handle_error(e, context={"phase": "startup"})
        sys.exit(1)

    from emission.cli import app
    app(prog_name=config.app_name)


if __name__ == "__main__":
    main()

"""
Runner script for faultsynth
"""

import sys

from src.app import main
from src.config import validate_config


def run():
    """Main entry point for the application."""

    # Check for environment issues before any command runs
    issues = validate_config()
    if issues:
        print("Configuration issues found:")
        for issue in issues:
            print(f" - {issue}")
        print("\nWarning: Some features may be limited due to incomplete configuration.")

    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    run()

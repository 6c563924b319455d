#!/usr/bin/env python3
"""
deal - de-authentication by ambient light
Main entry point for the application (also the PyInstaller target).
"""

import os
import sys

# Add the project root to the path so 'src.' imports resolve when run as a script
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.frontend.cli import cli


def main():
    cli(prog_name="deal")


if __name__ == "__main__":
    main()

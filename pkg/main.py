"""
Main entry point for the experiment harness and the HTTP server
"""
import sys

from imopt.cli import main

if __name__ == "__main__":
    sys.exit(main())

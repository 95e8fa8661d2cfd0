#!/usr/bin/env python
"""Command-line entry point of the lab: train, eval, decompose, baselines, export."""
import os
import sys


def main(argv=None):
    """Run a subcommand and return its exit status."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'project.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    argv = list(sys.argv if argv is None else argv)
    try:
        execute_from_command_line(argv)
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0


def run_command(argv):
    """``run_command(['train', '--seeds', '0..4'])``: subcommand argv without the program name."""
    return main(['manage.py', *argv])


if __name__ == '__main__':
    sys.exit(main())

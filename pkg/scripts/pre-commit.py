#!/usr/bin/env python3
"""
Pre-commit checks for fermihub.

Runs ruff (lint and format), mypy and pytest in that order and stops at the first failure.
``--quick`` deselects the ``slow`` sweeps; ``--claims`` finishes with ``fermihub reproduce`` on
the claims that run in seconds.

Exit codes:
- 0: All checks passed
- 1: One or more checks failed
"""

import subprocess
import sys
from pathlib import Path

import click

ROOT = Path(__file__).parent.parent
QUICK_CLAIMS = ["gate-count-4x4", "pair-distance-5x5", "xeb-self-sampling"]


def run_check(command: list[str], description: str) -> bool:
    click.echo(f"Running {description}...")
    try:
        result = subprocess.run(command, capture_output=True, text=True, check=False, cwd=ROOT)
    except FileNotFoundError as e:
        click.echo(f"[FAIL] {description} - command not found: {e}")
        return False
    if result.returncode == 0:
        click.echo(f"[PASS] {description}")
        return True
    click.echo(f"[FAIL] {description} (return code {result.returncode})")
    for name, stream in (("STDOUT", result.stdout), ("STDERR", result.stderr)):
        if stream:
            click.echo(f"{name}:\n{stream}")
    return False


def checks(quick: bool, claims: bool) -> list[tuple[list[str], str]]:
    pytest_cmd = ["uv", "run", "pytest"] + (["-m", "not slow"] if quick else [])
    planned = [
        (["uv", "run", "ruff", "check", "."], "Lint check (ruff)"),
        (["uv", "run", "ruff", "format", "--check", "."], "Format check (ruff)"),
        (["uv", "run", "mypy"], "Type checking (mypy)"),
        (pytest_cmd, "Unit tests (pytest, quick)" if quick else "Unit tests (pytest)"),
    ]
    if claims:
        reproduce = ["uv", "run", "python", "-m", "fermihub.main", "-l", "WARNING", "reproduce", *QUICK_CLAIMS]
        planned.append((reproduce, "Claim verdicts (fermihub reproduce)"))
    return planned


@click.command()
@click.option("--quick", is_flag=True, help="Skip tests marked slow.")
@click.option("--claims", is_flag=True, help="Also check the fast registered claims.")
def main(quick: bool, claims: bool) -> None:
    """Run ruff, mypy and pytest; stop at the first failing check."""
    click.echo("Starting fermihub pre-commit checks")
    click.echo("=" * 60)
    for command, description in checks(quick, claims):
        if not run_check(command, description):
            click.echo("=" * 60)
            click.echo("Pre-commit checks failed; fix the issues above before committing.")
            sys.exit(1)
        click.echo()
    click.echo("=" * 60)
    click.echo("All pre-commit checks passed!")


if __name__ == "__main__":
    main()

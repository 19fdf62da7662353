"""Thin wrapper around the crosstok command line binary."""

import subprocess


class CoreCliError(RuntimeError):
    """The core binary exited nonzero."""

    def __init__(self, returncode, stderr):
        super().__init__(f"crosstok exited {returncode}: {stderr}")
        self.returncode = returncode
        self.stderr = stderr


def run_core(*args, binary="crosstok"):
    """Run a core subcommand and return its stdout. Raises CoreCliError on failure."""
    cmd = [binary] + [str(a) for a in args]
    try:
        result = subprocess.run(cmd, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise CoreCliError(127, f"binary not found: {binary}") from exc
    if result.returncode != 0:
        raise CoreCliError(result.returncode, result.stderr.strip())
    return result.stdout

"""
The command run when the user is de-authenticated (typically a screen locker).
"""

import logging
import shlex
import subprocess
from typing import Optional

from ..config.settings import log_event
from .errors import ActionError

logger = logging.getLogger(__name__)


class ActionHook:
    """Run `command` once per de-authentication, or only log it in dry-run mode."""

    def __init__(self, command: str, dry_run: bool = False):
        self.command = command
        self.dry_run = dry_run
        self.fired = 0

    def fire(self, at: float) -> Optional[int]:
        """Run the command and wait for it; returns its exit status (None in dry-run)."""
        self.fired += 1
        if self.dry_run:
            log_event("ACTION_DRY_RUN", at, self.command or "-")
            return None
        args = shlex.split(self.command)
        if not args:
            raise ActionError("action_command is empty")
        try:
            completed = subprocess.run(args, check=False)
        except OSError as exc:
            log_event("ACTION_FAILED", at, str(exc), logging.ERROR)
            raise ActionError(f"cannot run {args[0]!r}: {exc}") from exc
        if completed.returncode != 0:
            log_event("ACTION_FAILED", at, f"exit status {completed.returncode}", logging.WARNING)
        else:
            log_event("ACTION", at, self.command)
        return completed.returncode

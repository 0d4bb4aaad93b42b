"""Subprocess client for SMT-LIB2 solvers.

One session owns one solver process and is reset between queries.  The
default backend is the bundled `rebound-smt` QF_LIA solver (spawned as
`python -m rebound.smtserver`); any SMT-LIB2-compliant executable reading
commands from stdin works, e.g. `--solver "z3 -in"`.
"""

from __future__ import annotations

import selectors
import shlex
import subprocess
import sys
from dataclasses import dataclass, field
from typing import Optional, Union

from .smtserver import parse_sexps, quote, tokenize, unquote


class SolverError(Exception):
    """Backend crash, timeout, or unparsable response."""


DEFAULT_ARGV = [sys.executable, "-m", "rebound.smtserver"]


def solver_argv(spec: Optional[str]) -> list[str]:
    if not spec:
        return list(DEFAULT_ARGV)
    return shlex.split(spec)


@dataclass
class SmtStats:
    queries: int = 0
    sat: int = 0
    unsat: int = 0


class SmtSession:
    """A persistent solver process; queries are separated by (reset)."""

    def __init__(self, argv: Optional[list[str]] = None, timeout: float = 10.0):
        self.argv = argv or list(DEFAULT_ARGV)
        self.timeout = timeout
        self.stats = SmtStats()
        self._proc: Optional[subprocess.Popen] = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.argv,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL,
                    bufsize=0,
                )
            except OSError as exc:
                raise SolverError(f"cannot spawn solver {self.argv}: {exc}") from exc
        return self._proc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.write(b"(exit)\n")
                self._proc.stdin.flush()
            except OSError:
                pass
            self._proc.kill()
        self._proc = None

    def _read_until_marker(self, proc: subprocess.Popen, marker: str) -> list[str]:
        import os
        import time

        fd = proc.stdout.fileno()
        sel = selectors.DefaultSelector()
        sel.register(fd, selectors.EVENT_READ)
        deadline = time.monotonic() + self.timeout
        buf = b""
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self.close()
                raise SolverError("solver timeout")
            if not sel.select(timeout=remaining):
                continue
            chunk = os.read(fd, 65536)
            if chunk == b"":
                self.close()
                raise SolverError("solver process exited unexpectedly")
            buf += chunk
            text = buf.decode("utf-8", errors="replace")
            if f"{marker}\n" in text or text.endswith(marker):
                lines = [ln for ln in text.splitlines() if ln.strip()]
                idx = lines.index(marker)
                return lines[:idx]

    def raw_query(self, script: str, marker: str = "##done##") -> list[str]:
        """Send a script, followed by an echo marker; return response lines."""
        proc = self._ensure()
        try:
            payload = "(reset)\n" + script
            if not payload.endswith("\n"):
                payload += "\n"
            payload += f'(echo "{marker}")\n'
            proc.stdin.write(payload.encode("utf-8"))
            proc.stdin.flush()
        except OSError as exc:
            self.close()
            raise SolverError(f"solver pipe broken: {exc}") from exc
        return self._read_until_marker(proc, marker)

    def check(
        self, script: str, value_names: Optional[list[str]] = None
    ) -> tuple[str, dict[str, Union[int, bool]]]:
        """Run declarations+assertions+(check-sat); optionally read values.

        Returns (status, model) where status is sat/unsat and model maps the
        requested names to ints/bools (empty unless sat and names given).
        """
        full = script
        if value_names:
            syms = " ".join(quote(n) for n in value_names)
            full += f"\n(get-value ({syms}))"
        lines = self.raw_query(full)
        self.stats.queries += 1
        status = None
        rest: list[str] = []
        for line in lines:
            if line in ("sat", "unsat", "unknown"):
                status = line
            elif line.startswith("(error"):
                # get-value after unsat commonly errors; ignore in that case.
                if status != "unsat":
                    raise SolverError(f"solver error: {line}")
            else:
                rest.append(line)
        if status in (None, "unknown"):
            raise SolverError(f"no check-sat verdict (got {lines!r})")
        model: dict[str, Union[int, bool]] = {}
        if status == "sat":
            self.stats.sat += 1
            if value_names:
                model = parse_values("\n".join(rest))
        else:
            self.stats.unsat += 1
        return status, model


def parse_values(text: str) -> dict[str, Union[int, bool]]:
    """Parse a (get-value ...) response: ((x 5) (y (- 1)) (b true))."""
    out: dict[str, Union[int, bool]] = {}
    sexps = parse_sexps(tokenize(text))
    if not sexps:
        return out
    pairs = sexps[0]
    if not isinstance(pairs, list):
        raise SolverError(f"bad get-value response {text!r}")
    for pair in pairs:
        if not (isinstance(pair, list) and len(pair) == 2):
            raise SolverError(f"bad value entry {pair!r}")
        name = unquote(pair[0])
        out[name] = parse_value(pair[1])
    return out


def parse_value(v) -> Union[int, bool]:
    if isinstance(v, str):
        if v == "true":
            return True
        if v == "false":
            return False
        if v.lstrip("-").isdigit():
            return int(v)
    elif isinstance(v, list) and len(v) == 2 and v[0] == "-":
        return -parse_value(v[1])
    raise SolverError(f"cannot parse model value {v!r}")

"""Tail-recurrent observation schedules.

A schedule is a finite prefix of strides followed by a tail stride repeated
forever.  Text form is the prefix digits followed by the tail in parentheses,
``13213(2)``; when any stride has two digits the prefix is comma separated,
``1,3,2,13(2)`` (a single-element prefix keeps a trailing comma, ``13,(2)``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import InputError, ParseError


@dataclass(frozen=True, order=False)
class Schedule:
    prefix: tuple[int, ...]
    tail: int

    def __post_init__(self):
        prefix = tuple(int(k) for k in self.prefix)
        tail = int(self.tail)
        for k in prefix + (tail,):
            if k < 1:
                raise InputError(f"strides must be >= 1, got {k}")
        while prefix and prefix[-1] == tail:
            prefix = prefix[:-1]
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "tail", tail)

    @property
    def length(self) -> int:
        return len(self.prefix) + 1

    @property
    def strides(self) -> tuple[int, ...]:
        """One stride per policy layer; the last entry is the recurrent tail."""
        return self.prefix + (self.tail,)

    @property
    def max_stride(self) -> int:
        return max(self.strides)

    def __str__(self) -> str:
        text = self.__dict__.get("_text")
        if text is None:
            text = format_schedule(self)
            object.__setattr__(self, "_text", text)
        return text

    def __lt__(self, other: "Schedule") -> bool:
        return str(self) < str(other)

    def stride_at(self, i: int) -> int:
        return self.prefix[i] if i < len(self.prefix) else self.tail

    def check_bound(self, stride_bound: int) -> "Schedule":
        for k in self.strides:
            if k > stride_bound:
                raise InputError(f"stride {k} exceeds the stride bound {stride_bound}")
        return self


def canonicalize(prefix: Sequence[int], tail: int | None) -> Schedule:
    if tail is None:
        raise InputError("a schedule needs a tail stride")
    return Schedule(tuple(prefix), tail)


def tail_schedule(k: int) -> Schedule:
    return Schedule((), k)


def prepend(sched: Schedule, k: int, stride_bound: int | None = None) -> Schedule:
    if k < 1 or (stride_bound is not None and k > stride_bound):
        raise InputError(f"stride {k} outside [1, {stride_bound}]")
    return Schedule((k,) + sched.prefix, sched.tail)


def expand(sched: Schedule, n: int) -> list[int]:
    return [sched.stride_at(i) for i in range(n)]


def checkin_index(sched: Schedule, t: int) -> int:
    """Number of check-ins received by time ``t`` (the t=0 check-in counts)."""
    if t < 0:
        raise InputError("time must be non-negative")
    elapsed = 0
    for k, stride in enumerate(sched.prefix, start=1):
        elapsed += stride
        if t < elapsed:
            return k
    # t >= elapsed: remaining check-ins come every `tail` steps
    return len(sched.prefix) + (t - elapsed) // sched.tail + 1


def format_schedule(sched: Schedule) -> str:
    if all(k < 10 for k in sched.strides):
        body = "".join(str(k) for k in sched.prefix)
    else:
        body = ",".join(str(k) for k in sched.prefix)
        if len(sched.prefix) == 1:
            body += ","
    return f"{body}({sched.tail})"


def parse_schedule(text: str, stride_bound: int | None = None) -> Schedule:
    s = text.strip()
    open_at = s.find("(")
    if open_at < 0:
        raise ParseError("missing '(' before the tail stride", text, len(s))
    if not s.endswith(")"):
        raise ParseError("expected ')' at the end", text, len(s))
    tail_text = s[open_at + 1:-1]
    if not tail_text.isdigit():
        bad = next((i for i, ch in enumerate(tail_text) if not ch.isdigit()), 0)
        raise ParseError("tail must be a positive integer", text, open_at + 1 + bad)
    body = s[:open_at]
    prefix: list[int] = []
    if "," in body:
        parts = body.split(",")
        if parts[-1] == "":
            parts = parts[:-1]
        pos = 0
        for part in parts:
            if not part.isdigit():
                raise ParseError("expected a stride", text, pos)
            prefix.append(int(part))
            pos += len(part) + 1
    else:
        for i, ch in enumerate(body):
            if not ch.isdigit():
                raise ParseError(f"unexpected character {ch!r}", text, i)
            prefix.append(int(ch))
    for i, k in enumerate(prefix + [int(tail_text)]):
        if k < 1:
            raise ParseError("strides must be >= 1", text, i)
    sched = Schedule(tuple(prefix), int(tail_text))
    if stride_bound is not None:
        sched.check_bound(stride_bound)
    return sched

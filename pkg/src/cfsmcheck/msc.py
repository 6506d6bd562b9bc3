"""Message sequence charts from exploration paths and simulation logs.

A trace keeps send and receive as separate events (true MSC semantics);
they are paired FIFO per channel only when rendering the sequence
diagram.  Two text renderings exist: a line-oriented event log with a
fixed format (stable, parseable) and a sequence-diagram dialect accepted
by the usual web renderers.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import GlobalState, System, apply_transition, enabled_transitions, initial_state
from .reachability import Edge

__all__ = [
    "MscEvent",
    "MscTrace",
    "InvalidPathError",
    "trace_from_path",
    "render_event_log",
    "render_sequence_diagram",
]

SEND_EV = "send"
RECV_EV = "recv"
LOSE_EV = "lose"
TIMEOUT_EV = "timeout"
TAU_EV = "tau"


class InvalidPathError(ValueError):
    """Path replay failed; ``step`` is the offending 0-based index."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class MscEvent:
    """One chart event.  ``message``/``channel`` are set for send, recv
    and lose events and None for timeout/tau."""

    step: int
    kind: str
    machine: str
    message: str | None = None
    channel: str | None = None


@dataclass(frozen=True)
class MscTrace:
    system_name: str
    lifelines: tuple[str, ...]
    events: tuple[MscEvent, ...]


def trace_from_path(system: System, path: list[Edge]) -> MscTrace:
    """Replay ``path`` from the initial state and convert it to a trace.

    Each edge becomes one event whose kind follows the edge label; an
    ``overflow`` edge is rendered as a loss (the message vanished at the
    full channel).  Raises :class:`InvalidPathError` at the first edge
    that does not replay.
    """
    g = initial_state(system)
    events = []
    for k, edge in enumerate(path):
        if not 0 <= edge.machine < len(system.machines):
            raise InvalidPathError(k, f"no machine with index {edge.machine}")
        machine = system.machines[edge.machine]
        if not 0 <= edge.transition < len(machine.transitions):
            raise InvalidPathError(
                k, f"machine {machine.name!r} has no transition {edge.transition}"
            )
        if (edge.machine, edge.transition) not in enabled_transitions(system, g):
            raise InvalidPathError(
                k,
                f"transition {machine.transitions[edge.transition].text()!r} of "
                f"machine {machine.name!r} is not enabled",
            )
        successors = apply_transition(system, g, edge.machine, edge.transition)
        match = [s for s, label in successors if label == edge.label]
        if not match:
            raise InvalidPathError(k, f"no successor with label {edge.label!r}")
        g = match[0]
        action = machine.transitions[edge.transition].action
        kind = LOSE_EV if edge.label == "overflow" else edge.label
        events.append(
            MscEvent(
                step=k,
                kind=kind,
                machine=machine.name,
                message=action.message,
                channel=action.channel,
            )
        )
    return MscTrace(
        system_name=system.name,
        lifelines=tuple(m.name for m in system.machines),
        events=tuple(events),
    )


def render_event_log(trace: MscTrace) -> str:
    """Fixed line format:

    ``msc <name>`` header, one line per event, ``endmsc`` footer.
    Event lines: ``<step>: send <msg> <machine> -> <channel>``,
    ``<step>: recv <msg> <channel> -> <machine>``,
    ``<step>: lose <msg> <channel>``, ``<step>: timeout <machine>``,
    ``<step>: tau <machine>``.
    """
    lines = [f"msc {trace.system_name}"]
    for e in trace.events:
        if e.kind == SEND_EV:
            lines.append(f"{e.step}: send {e.message} {e.machine} -> {e.channel}")
        elif e.kind == RECV_EV:
            lines.append(f"{e.step}: recv {e.message} {e.channel} -> {e.machine}")
        elif e.kind == LOSE_EV:
            lines.append(f"{e.step}: lose {e.message} {e.channel}")
        elif e.kind == TIMEOUT_EV:
            lines.append(f"{e.step}: timeout {e.machine}")
        else:
            lines.append(f"{e.step}: tau {e.machine}")
    lines.append("endmsc")
    return "\n".join(lines) + "\n"


def render_sequence_diagram(trace: MscTrace, system: System | None = None) -> str:
    """Sequence-diagram text: one ``participant`` per lifeline, arrows
    for matched send/receive pairs, ``->x`` for losses, notes for
    timeouts.  Receives pair with sends FIFO per channel; sends still
    unmatched at the end render with an ``(in transit)`` suffix.

    ``system`` supplies channel receivers for arrow targets; without it
    the channel name is used as the target.
    """
    receiver = {}
    if system is not None:
        receiver = {c.name: c.receiver for c in system.channels}

    unmatched: dict[str, list[int]] = {}
    consumed: dict[int, bool] = {}
    for i, e in enumerate(trace.events):
        if e.kind == SEND_EV:
            unmatched.setdefault(e.channel, []).append(i)
            consumed[i] = False
        elif e.kind == RECV_EV:
            pendings = unmatched.get(e.channel, [])
            if pendings:
                consumed[pendings.pop(0)] = True

    lines = [f"participant {name}" for name in trace.lifelines]
    for i, e in enumerate(trace.events):
        if e.kind == SEND_EV:
            target = receiver.get(e.channel, e.channel)
            suffix = "" if consumed[i] else " (in transit)"
            lines.append(f"{e.machine} -> {target} : {e.message}{suffix}")
        elif e.kind == LOSE_EV:
            lines.append(f"{e.machine} ->x : {e.message} (lost)")
        elif e.kind == TIMEOUT_EV:
            lines.append(f"note over {e.machine} : timeout")
        elif e.kind == TAU_EV:
            lines.append(f"note over {e.machine} : tau")
    return "\n".join(lines) + "\n"

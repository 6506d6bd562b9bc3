"""Communicating finite state machines over bounded FIFO channels.

A system is a fixed set of machines exchanging named messages through
directed FIFO channels of bounded capacity.  A global state is the tuple
of every machine's local state plus every channel's queue contents; the
functions in this module define exactly which transitions are enabled in
a global state and what successor states they produce.  Everything here
is pure and deterministic: the same inputs always yield the same outputs
in the same order, so systems and global states can be shared freely
between threads.

Loss on a channel marked ``lossy`` is resolved at send time as a
nondeterministic branch: the message either lands in the queue (event
label ``send``) or vanishes in the channel (label ``lose``) without the
sender being able to tell the difference.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

__all__ = [
    "Action",
    "Transition",
    "Machine",
    "Channel",
    "System",
    "GlobalState",
    "StateClass",
    "TimeoutMode",
    "OverflowMode",
    "SemanticsOptions",
    "SystemBuildError",
    "UnknownStateError",
    "UnknownChannelError",
    "DuplicateNameError",
    "DuplicateTransitionError",
    "ChannelEndpointMismatchError",
    "ZeroCapacityError",
    "TransitionNotEnabledError",
    "send",
    "recv",
    "timeout",
    "tau",
    "build_system",
    "initial_state",
    "enabled_transitions",
    "apply_transition",
    "classify_state",
    "canonical_state",
]


class SystemBuildError(ValueError):
    """A structural rule was violated while assembling a system."""

    def __init__(self, element: str, message: str):
        super().__init__(f"{message}: {element!r}")
        self.element = element


class UnknownStateError(SystemBuildError):
    pass


class UnknownChannelError(SystemBuildError):
    pass


class DuplicateNameError(SystemBuildError):
    pass


class DuplicateTransitionError(SystemBuildError):
    pass


class ChannelEndpointMismatchError(SystemBuildError):
    pass


class ZeroCapacityError(SystemBuildError):
    pass


class TransitionNotEnabledError(RuntimeError):
    """A transition was applied without being enabled (caller bug)."""


@dataclass(frozen=True)
class Action:
    """One of ``send``/``recv``/``timeout``/``tau``.

    ``message`` and ``channel`` are set for send/recv and None otherwise.
    """

    kind: str
    message: str | None = None
    channel: str | None = None

    def text(self) -> str:
        if self.kind == "send":
            return f"send {self.message} to {self.channel}"
        if self.kind == "recv":
            return f"recv {self.message} from {self.channel}"
        return self.kind


def send(message: str, channel: str) -> Action:
    return Action("send", message, channel)


def recv(message: str, channel: str) -> Action:
    return Action("recv", message, channel)


def timeout() -> Action:
    return Action("timeout")


def tau() -> Action:
    return Action("tau")


@dataclass(frozen=True)
class Transition:
    source: str
    action: Action
    target: str
    progress: bool = False

    def text(self) -> str:
        suffix = " progress" if self.progress else ""
        return f"{self.action.text()} -> {self.target}{suffix}"


@dataclass(frozen=True)
class Machine:
    """One protocol agent: named states and a transition list.

    ``states`` is ordered and duplicate-free; ``initial`` and all
    ``terminals`` must name declared states.  A state may carry several
    transitions (nondeterministic choice) but no two transitions from
    the same state may have an identical action.
    """

    name: str
    states: tuple[str, ...]
    initial: str
    terminals: frozenset[str]
    transitions: tuple[Transition, ...]


@dataclass(frozen=True)
class Channel:
    """Directed FIFO queue between two machines.

    Self-channels (sender == receiver) are allowed.  ``capacity`` bounds
    the queue length; ``lossy`` channels may drop any sent message.
    """

    name: str
    sender: str
    receiver: str
    capacity: int
    lossy: bool = False


@dataclass(frozen=True)
class System:
    """A validated network of machines and channels.

    Construct through :func:`build_system`, which checks every
    structural invariant and precomputes the lookup tables used by the
    semantics functions.  Declaration order of machines and channels is
    significant: it fixes the canonical exploration order and the layout
    of :class:`GlobalState`.
    """

    name: str
    machines: tuple[Machine, ...]
    channels: tuple[Channel, ...]
    _tables: dict | None = field(default=None, compare=False, repr=False)

    def _table(self, key: str):
        if self._tables is None:
            object.__setattr__(self, "_tables", _build_tables(self))
        return self._tables[key]

    def machine_index(self, name: str) -> int:
        return self._table("machine_index")[name]

    def channel_index(self, name: str) -> int:
        return self._table("channel_index")[name]

    def transitions_from(self, machine: int, state: str) -> tuple[tuple[int, Transition], ...]:
        """(transition-index, transition) pairs leaving ``state``, in declaration order."""
        return self._table("by_state")[machine].get(state, ())

    def input_channels(self, machine: int) -> tuple[int, ...]:
        """Indices of channels whose receiver is ``machine``."""
        return self._table("inputs")[machine]


def _build_tables(system: System) -> dict:
    machine_index = {m.name: i for i, m in enumerate(system.machines)}
    channel_index = {c.name: i for i, c in enumerate(system.channels)}
    by_state = []
    for m in system.machines:
        table: dict[str, list[tuple[int, Transition]]] = {}
        for ti, t in enumerate(m.transitions):
            table.setdefault(t.source, []).append((ti, t))
        by_state.append({s: tuple(v) for s, v in table.items()})
    inputs = tuple(
        tuple(ci for ci, c in enumerate(system.channels) if c.receiver == m.name)
        for m in system.machines
    )
    return {
        "machine_index": machine_index,
        "channel_index": channel_index,
        "by_state": tuple(by_state),
        "inputs": inputs,
    }


@dataclass(frozen=True)
class GlobalState:
    """Snapshot of every machine's local state and every channel queue.

    ``overflow`` marks the synthetic error state produced by a send onto
    a full channel under ``OverflowMode.ERROR``; such states are never
    expanded further.
    """

    locals: tuple[str, ...]
    queues: tuple[tuple[str, ...], ...]
    overflow: bool = False


class StateClass(Enum):
    RUNNING = "running"
    PROPER_TERMINATION = "proper_termination"
    DEADLOCK = "deadlock"
    UNSPECIFIED_RECEPTION = "unspecified_reception"
    OVERFLOW = "overflow"


class TimeoutMode(Enum):
    # LAZY: a timer may fire only while every input queue of the machine
    # is empty (the timeout models a genuinely missing message).
    # EAGER: a timer may fire at any time, even with input pending.
    LAZY = "lazy"
    EAGER = "eager"


class OverflowMode(Enum):
    # BLOCK: a send onto a full non-lossy channel is disabled.
    # ERROR: the send stays enabled and produces an overflow-marked state.
    BLOCK = "block"
    ERROR = "error"


@dataclass(frozen=True)
class SemanticsOptions:
    timeout_mode: TimeoutMode = TimeoutMode.LAZY
    overflow_mode: OverflowMode = OverflowMode.BLOCK


DEFAULT_OPTIONS = SemanticsOptions()


def build_system(machines, channels, name: str = "system") -> System:
    """Validate and assemble a system.

    Raises a :class:`SystemBuildError` subclass naming the offending
    element on the first violated rule.  On success every structural
    invariant holds and each machine's transitions are normalized to
    state-declaration order (stable within a state), which is the
    canonical order used by exploration and the text format.
    """
    machines = tuple(machines)
    channels = tuple(channels)
    seen: set[str] = set()
    for label in [m.name for m in machines] + [c.name for c in channels]:
        if label in seen:
            raise DuplicateNameError(label, "duplicate machine or channel name")
        seen.add(label)

    machine_names = {m.name for m in machines}
    by_channel = {}
    for c in channels:
        if c.capacity < 1:
            raise ZeroCapacityError(c.name, "channel capacity must be at least 1")
        for endpoint in (c.sender, c.receiver):
            if endpoint not in machine_names:
                raise ChannelEndpointMismatchError(
                    c.name, f"channel endpoint {endpoint!r} is not a machine"
                )
        by_channel[c.name] = c

    for m in machines:
        declared = set()
        for s in m.states:
            if s in declared:
                raise DuplicateNameError(f"{m.name}.{s}", "duplicate state name")
            declared.add(s)
        if m.initial not in declared:
            raise UnknownStateError(f"{m.name}.{m.initial}", "initial state not declared")
        for s in m.terminals:
            if s not in declared:
                raise UnknownStateError(f"{m.name}.{s}", "terminal state not declared")
        rules = set()
        for t in m.transitions:
            for s in (t.source, t.target):
                if s not in declared:
                    raise UnknownStateError(f"{m.name}.{s}", "transition names undeclared state")
            if t.action.kind in ("send", "recv"):
                c = by_channel.get(t.action.channel)
                if c is None:
                    raise UnknownChannelError(t.action.channel, "transition names undeclared channel")
                role = c.sender if t.action.kind == "send" else c.receiver
                if role != m.name:
                    raise ChannelEndpointMismatchError(
                        c.name,
                        f"machine {m.name!r} cannot {t.action.kind} on channel {c.name!r}",
                    )
            rule = (t.source, t.action)
            if rule in rules:
                raise DuplicateTransitionError(
                    f"{m.name}.{t.source}: {t.action.text()}",
                    "duplicate transition rule",
                )
            rules.add(rule)

    machines = tuple(_normalize(m) for m in machines)
    system = System(name, machines, channels)
    object.__setattr__(system, "_tables", _build_tables(system))
    return system


def _normalize(machine: Machine) -> Machine:
    position = {s: i for i, s in enumerate(machine.states)}
    ordered = tuple(sorted(machine.transitions, key=lambda t: position[t.source]))
    if ordered == machine.transitions:
        return machine
    return replace(machine, transitions=ordered)


def initial_state(system: System) -> GlobalState:
    """All machines in their initial states, all queues empty."""
    return GlobalState(
        locals=tuple(m.initial for m in system.machines),
        queues=tuple(() for _ in system.channels),
    )


def enabled_transitions(
    system: System, g: GlobalState, opts: SemanticsOptions = DEFAULT_OPTIONS
) -> list[tuple[int, int]]:
    """(machine-index, transition-index) pairs enabled in ``g``.

    Ordered ascending, which is the canonical exploration order.  A send
    is enabled when the target queue has room, when the channel is lossy
    (the loss outcome is always possible), or under ``OverflowMode.ERROR``
    (so the overflow can be reached and reported).  A lazy timeout fires
    only while every input queue of the machine is empty.
    """
    enabled = []
    for mi in range(len(system.machines)):
        loc = g.locals[mi]
        for ti, t in system.transitions_from(mi, loc):
            a = t.action
            if a.kind == "send":
                ci = system.channel_index(a.channel)
                c = system.channels[ci]
                ok = (
                    len(g.queues[ci]) < c.capacity
                    or c.lossy
                    or opts.overflow_mode is OverflowMode.ERROR
                )
            elif a.kind == "recv":
                ci = system.channel_index(a.channel)
                q = g.queues[ci]
                ok = bool(q) and q[0] == a.message
            elif a.kind == "timeout":
                if opts.timeout_mode is TimeoutMode.EAGER:
                    ok = True
                else:
                    ok = all(not g.queues[ci] for ci in system.input_channels(mi))
            else:  # tau
                ok = True
            if ok:
                enabled.append((mi, ti))
    return enabled


def _advance(g: GlobalState, mi: int, target: str, queues=None, overflow=False) -> GlobalState:
    locs = list(g.locals)
    locs[mi] = target
    return GlobalState(tuple(locs), g.queues if queues is None else queues, overflow)


def _replace_queue(queues, ci, q):
    out = list(queues)
    out[ci] = q
    return tuple(out)


def apply_transition(
    system: System,
    g: GlobalState,
    mi: int,
    ti: int,
    opts: SemanticsOptions = DEFAULT_OPTIONS,
) -> list[tuple[GlobalState, str]]:
    """Successor states of firing transition ``ti`` of machine ``mi``.

    Returns (state, event-label) pairs.  Exactly two successors occur for
    a send on a lossy channel with queue room (delivered then lost, in
    that order); every other case yields exactly one.  Event labels are
    ``send``/``recv``/``lose``/``timeout``/``tau``/``overflow``.
    """
    t = system.machines[mi].transitions[ti]
    if t.source != g.locals[mi] or (mi, ti) not in set(
        enabled_transitions(system, g, opts)
    ):
        raise TransitionNotEnabledError(
            f"machine {system.machines[mi].name!r} transition {t.text()!r} "
            f"is not enabled"
        )
    a = t.action
    if a.kind == "recv":
        ci = system.channel_index(a.channel)
        q = g.queues[ci]
        return [(_advance(g, mi, t.target, _replace_queue(g.queues, ci, q[1:])), "recv")]
    if a.kind in ("timeout", "tau"):
        return [(_advance(g, mi, t.target), a.kind)]

    ci = system.channel_index(a.channel)
    c = system.channels[ci]
    q = g.queues[ci]
    full = len(q) >= c.capacity
    if full and opts.overflow_mode is OverflowMode.ERROR:
        return [(_advance(g, mi, t.target, overflow=True), "overflow")]
    out = []
    if not full:
        delivered = _replace_queue(g.queues, ci, q + (a.message,))
        out.append((_advance(g, mi, t.target, delivered), "send"))
    if c.lossy:
        out.append((_advance(g, mi, t.target), "lose"))
    return out


def classify_state(
    system: System, g: GlobalState, opts: SemanticsOptions = DEFAULT_OPTIONS
) -> StateClass:
    """Classify ``g`` into exactly one :class:`StateClass`.

    Proper termination means every machine is in a terminal state with
    every queue empty.  A stuck state (nothing enabled) is an
    unspecified reception when some channel's head message cannot be
    received by its receiver's current state, and a deadlock otherwise
    (pure waiting on empty channels).
    """
    return _classify(system, g, opts, None)


def _classify(system, g, opts, enabled) -> StateClass:
    if g.overflow:
        return StateClass.OVERFLOW
    if all(
        g.locals[mi] in m.terminals for mi, m in enumerate(system.machines)
    ) and all(not q for q in g.queues):
        return StateClass.PROPER_TERMINATION
    if enabled is None:
        enabled = enabled_transitions(system, g, opts)
    if enabled:
        return StateClass.RUNNING
    for ci, q in enumerate(g.queues):
        if not q:
            continue
        head = q[0]
        mi = system.machine_index(system.channels[ci].receiver)
        rules = system.transitions_from(mi, g.locals[mi])
        receivable = any(
            t.action.kind == "recv"
            and t.action.message == head
            and t.action.channel == system.channels[ci].name
            for _, t in rules
        )
        if not receivable:
            return StateClass.UNSPECIFIED_RECEPTION
    return StateClass.DEADLOCK


def canonical_state(system: System, g: GlobalState) -> str:
    """Canonical text form, e.g. ``(s0,t0|c1:[ping]|c2:[])``.

    Locals in machine declaration order, then one ``name:[...]`` segment
    per channel in declaration order; an overflow marker is appended when
    set.  This string is the deduplication key and appears verbatim in
    DOT exports and JSON reports.
    """
    parts = [",".join(g.locals)]
    for c, q in zip(system.channels, g.queues):
        parts.append(f"{c.name}:[{','.join(q)}]")
    text = f"({'|'.join(parts)})"
    return text + "!overflow" if g.overflow else text

"""Bundled node-monitoring protocol models, correct and faulty.

The protocol: an environment actor (Env) hands a start request to a
static agent (SA); SA dispatches a monitoring request ``Mreq`` to a
mobile agent (MA) and waits under a retransmission timer; MA polls each
node in turn (``inforequest_i`` out, ``inforesponse_i`` back, the
node's acknowledgement folded into its response) and returns the
combined report ``resp`` to SA; receiving it is the protocol's progress
event.  Because SA may retransmit while a reply is merely late, MA's
finished state absorbs duplicate requests without answering them again,
which keeps the correct model free of duplicate deliveries.

Each faulty variant differs from the correct model by a small edit to
at most two machines:

* ``DEADLOCK_FAULT``  - MA swallows requests without ever responding;
  SA retries once and then waits forever, so the whole system ends up
  waiting on empty channels.
* ``UNSPECIFIED_FAULT`` - SA's timer sends it back to its idle state,
  which has no receive rule for ``resp``; a late response then sticks
  at the head of the queue.
* ``LIVELOCK_FAULT``  - instead of responding, MA forwards a message
  to itself over a self-channel in an endless non-progress loop.

Every bundled model also ships as a ``.cfsm`` file under
``cfsmcheck/data/``; constructors and files are kept byte-identical
(tests enforce it).

``nmp_scaled`` generalizes the correct model to ``n`` polled nodes and
optionally makes the agent and node channels lossy.  With
``requests > 1`` it emits a sim-oriented variant where the agents loop
back to their idle states and Env issues a request per round; that
shape is meant for timed simulation, not exhaustive verification
(duplicate retransmissions can restart rounds).
"""

from __future__ import annotations

from enum import Enum
from importlib import resources

from .core import Channel, Machine, System, Transition, build_system, recv, send, timeout

__all__ = [
    "NmpVariant",
    "OutOfRangeError",
    "MAX_NODES",
    "nmp_correct",
    "nmp_variant",
    "nmp_scaled",
    "nmp_lossy",
    "pingpong",
    "streaming",
    "bundled_source",
    "BUNDLED_FILES",
]

MAX_NODES = 32
DEFAULT_CAPACITY = 4

BUNDLED_FILES = (
    "nmp_correct",
    "nmp_deadlock",
    "nmp_unspecified",
    "nmp_livelock",
    "nmp_lossy",
)


class OutOfRangeError(ValueError):
    pass


class NmpVariant(Enum):
    CORRECT = "correct"
    DEADLOCK_FAULT = "deadlock"
    UNSPECIFIED_FAULT = "unspecified"
    LIVELOCK_FAULT = "livelock"


def _env(requests: int) -> Machine:
    states = tuple(f"r{i}" for i in range(1, requests + 1)) + ("done",)
    transitions = tuple(
        Transition(states[i], send("start", "env_sa"), states[i + 1])
        for i in range(requests)
    )
    return Machine("Env", states, "r1", frozenset({"done"}), transitions)


def _static_agent(looping: bool) -> Machine:
    if looping:
        return Machine(
            "SA",
            states=("Idle", "Dispatch", "Wait"),
            initial="Idle",
            terminals=frozenset({"Idle"}),
            transitions=(
                Transition("Idle", recv("start", "env_sa"), "Dispatch"),
                Transition("Dispatch", send("Mreq", "sa_ma"), "Wait"),
                Transition("Wait", recv("resp", "ma_sa"), "Idle", progress=True),
                Transition("Wait", timeout(), "Dispatch"),
            ),
        )
    return Machine(
        "SA",
        states=("Idle", "Dispatch", "Wait", "Done"),
        initial="Idle",
        terminals=frozenset({"Done"}),
        transitions=(
            Transition("Idle", recv("start", "env_sa"), "Dispatch"),
            Transition("Dispatch", send("Mreq", "sa_ma"), "Wait"),
            Transition("Wait", recv("resp", "ma_sa"), "Done", progress=True),
            # the reply may merely be late; retransmit the request
            Transition("Wait", timeout(), "Dispatch"),
        ),
    )


def _mobile_agent(n_nodes: int, looping: bool) -> Machine:
    states = ["Idle"]
    transitions = [Transition("Idle", recv("Mreq", "sa_ma"), "Send1")]
    for i in range(1, n_nodes + 1):
        after = f"Send{i + 1}" if i < n_nodes else "Respond"
        states += [f"Send{i}", f"Poll{i}"]
        transitions.append(
            Transition(f"Send{i}", send(f"inforequest{i}", f"ma_n{i}"), f"Poll{i}")
        )
        transitions.append(
            Transition(f"Poll{i}", recv(f"inforesponse{i}", f"n{i}_ma"), after)
        )
    states.append("Respond")
    if looping:
        transitions.append(Transition("Respond", send("resp", "ma_sa"), "Idle"))
        terminal = "Idle"
    else:
        states.append("Done")
        transitions.append(Transition("Respond", send("resp", "ma_sa"), "Done"))
        # absorb duplicate requests caused by SA retransmission; the
        # response was already sent, answering again would duplicate it
        transitions.append(Transition("Done", recv("Mreq", "sa_ma"), "Done"))
        terminal = "Done"
    return Machine(
        "MA",
        states=tuple(states),
        initial="Idle",
        terminals=frozenset({terminal}),
        transitions=tuple(transitions),
    )


def _node(i: int, looping: bool) -> Machine:
    back = "Idle" if looping else "Done"
    states = ("Idle", "Reply") if looping else ("Idle", "Reply", "Done")
    terminal = "Idle" if looping else "Done"
    return Machine(
        f"N{i}",
        states=states,
        initial="Idle",
        terminals=frozenset({terminal}),
        transitions=(
            Transition("Idle", recv(f"inforequest{i}", f"ma_n{i}"), "Reply"),
            Transition("Reply", send(f"inforesponse{i}", f"n{i}_ma"), back),
        ),
    )


def _channels(n_nodes: int, lossy: bool) -> list[Channel]:
    cap = DEFAULT_CAPACITY
    out = [
        Channel("env_sa", "Env", "SA", cap),
        Channel("sa_ma", "SA", "MA", cap, lossy),
        Channel("ma_sa", "MA", "SA", cap, lossy),
    ]
    for i in range(1, n_nodes + 1):
        out.append(Channel(f"ma_n{i}", "MA", f"N{i}", cap, lossy))
        out.append(Channel(f"n{i}_ma", f"N{i}", "MA", cap, lossy))
    return out


def _build_nmp(n_nodes: int, lossy: bool, requests: int, name: str) -> System:
    looping = requests > 1
    machines = [_env(requests), _static_agent(looping), _mobile_agent(n_nodes, looping)]
    machines += [_node(i, looping) for i in range(1, n_nodes + 1)]
    return build_system(machines, _channels(n_nodes, lossy), name)


def nmp_correct() -> System:
    """The correct protocol over two nodes with reliable channels."""
    return _build_nmp(2, False, 1, "nmp_correct")


def nmp_lossy() -> System:
    """The correct machines, with agent and node channels lossy."""
    return _build_nmp(2, True, 1, "nmp_lossy")


def nmp_scaled(n_nodes: int, lossy: bool = False, requests: int = 1) -> System:
    """The protocol generalized to ``n_nodes`` sequentially polled nodes.

    ``nmp_scaled(2, False)`` is structurally identical to
    :func:`nmp_correct`.  ``requests`` unrolls the environment to issue
    several rounds with looping agents (simulation use).
    """
    if not 1 <= n_nodes <= MAX_NODES:
        raise OutOfRangeError(f"n_nodes must be in [1, {MAX_NODES}], got {n_nodes}")
    if requests < 1:
        raise OutOfRangeError(f"requests must be >= 1, got {requests}")
    name = f"nmp_scaled_{n_nodes}" + ("_lossy" if lossy else "")
    return _build_nmp(n_nodes, lossy, requests, name)


def _nmp_deadlock() -> System:
    """MA swallows requests silently; SA retries once, then waits forever."""
    sa = Machine(
        "SA",
        states=("Idle", "Dispatch", "Wait1", "Retry", "Wait2", "Done"),
        initial="Idle",
        terminals=frozenset({"Done"}),
        transitions=(
            Transition("Idle", recv("start", "env_sa"), "Dispatch"),
            Transition("Dispatch", send("Mreq", "sa_ma"), "Wait1"),
            Transition("Wait1", recv("resp", "ma_sa"), "Done", progress=True),
            Transition("Wait1", timeout(), "Retry"),
            Transition("Retry", send("Mreq", "sa_ma"), "Wait2"),
            # last hope: wait for a response that will never be sent
            Transition("Wait2", recv("resp", "ma_sa"), "Done", progress=True),
        ),
    )
    ma = Machine(
        "MA",
        states=("Idle", "Dead"),
        initial="Idle",
        terminals=frozenset(),
        transitions=(
            Transition("Idle", recv("Mreq", "sa_ma"), "Dead"),
            Transition("Dead", recv("Mreq", "sa_ma"), "Dead"),
        ),
    )
    machines = [_env(1), sa, ma, _node(1, False), _node(2, False)]
    return build_system(machines, _channels(2, False), "nmp_deadlock")


def _nmp_unspecified() -> System:
    """SA's timer drops it back to Idle, which cannot receive ``resp``."""
    sa = Machine(
        "SA",
        states=("Idle", "Dispatch", "Wait", "Done"),
        initial="Idle",
        terminals=frozenset({"Done"}),
        transitions=(
            Transition("Idle", recv("start", "env_sa"), "Dispatch"),
            Transition("Dispatch", send("Mreq", "sa_ma"), "Wait"),
            Transition("Wait", recv("resp", "ma_sa"), "Done", progress=True),
            # a generic timer unaware of the pending reply: back to Idle
            Transition("Wait", timeout(), "Idle"),
        ),
    )
    machines = [_env(1), sa, _mobile_agent(2, False), _node(1, False), _node(2, False)]
    return build_system(machines, _channels(2, False), "nmp_unspecified")


def _nmp_livelock() -> System:
    """MA forwards a message to itself forever instead of responding."""
    ma_states = (
        "Idle",
        "Send1",
        "Poll1",
        "Send2",
        "Poll2",
        "Respond",
        "Relay",
    )
    ma = Machine(
        "MA",
        states=ma_states,
        initial="Idle",
        terminals=frozenset(),
        transitions=(
            Transition("Idle", recv("Mreq", "sa_ma"), "Send1"),
            Transition("Send1", send("inforequest1", "ma_n1"), "Poll1"),
            Transition("Poll1", recv("inforesponse1", "n1_ma"), "Send2"),
            Transition("Send2", send("inforequest2", "ma_n2"), "Poll2"),
            Transition("Poll2", recv("inforesponse2", "n2_ma"), "Respond"),
            Transition("Respond", send("fwd", "ma_ma"), "Relay"),
            Transition("Relay", recv("fwd", "ma_ma"), "Respond"),
        ),
    )
    machines = [_env(1), _static_agent(False), ma, _node(1, False), _node(2, False)]
    channels = _channels(2, False) + [Channel("ma_ma", "MA", "MA", DEFAULT_CAPACITY)]
    return build_system(machines, channels, "nmp_livelock")


def nmp_variant(variant: NmpVariant) -> System:
    """The correct model or one of the three documented fault variants."""
    if variant is NmpVariant.CORRECT:
        return nmp_correct()
    if variant is NmpVariant.DEADLOCK_FAULT:
        return _nmp_deadlock()
    if variant is NmpVariant.UNSPECIFIED_FAULT:
        return _nmp_unspecified()
    return _nmp_livelock()


def pingpong(lossy: bool = False) -> System:
    """Two machines bouncing ping/pong over capacity-1 channels."""
    a = Machine(
        "A",
        states=("s0", "s1"),
        initial="s0",
        terminals=frozenset(),
        transitions=(
            Transition("s0", send("ping", "c1"), "s1", progress=True),
            Transition("s1", recv("pong", "c2"), "s0"),
        ),
    )
    b = Machine(
        "B",
        states=("t0", "t1"),
        initial="t0",
        terminals=frozenset(),
        transitions=(
            Transition("t0", recv("ping", "c1"), "t1"),
            Transition("t1", send("pong", "c2"), "t0"),
        ),
    )
    channels = [Channel("c1", "A", "B", 1, lossy), Channel("c2", "B", "A", 1)]
    name = "pingpong_lossy" if lossy else "pingpong"
    return build_system([a, b], channels, name)


def streaming(n_messages: int) -> System:
    """A source streaming ``n_messages`` over one lossy channel to a sink
    that consumes instantly; the workhorse for loss statistics."""
    if n_messages < 1:
        raise OutOfRangeError(f"n_messages must be >= 1, got {n_messages}")
    states = tuple(f"s{i}" for i in range(n_messages + 1))
    src = Machine(
        "Src",
        states=states,
        initial="s0",
        terminals=frozenset({states[-1]}),
        transitions=tuple(
            Transition(f"s{i}", send("data", "link"), f"s{i + 1}")
            for i in range(n_messages)
        ),
    )
    snk = Machine(
        "Snk",
        states=("q0",),
        initial="q0",
        terminals=frozenset({"q0"}),
        transitions=(Transition("q0", recv("data", "link"), "q0"),),
    )
    channel = Channel("link", "Src", "Snk", DEFAULT_CAPACITY, lossy=True)
    return build_system([src, snk], [channel], f"streaming_{n_messages}")


def bundled_source(name: str) -> str:
    """Text of a committed ``.cfsm`` model file."""
    if name not in BUNDLED_FILES:
        raise KeyError(name)
    return (resources.files("cfsmcheck") / "data" / f"{name}.cfsm").read_text()

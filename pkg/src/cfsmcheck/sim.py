"""Seeded discrete-event simulation of a system over timed lossy channels.

Where verification treats loss and timers nondeterministically, the
simulator draws concrete outcomes: every send on a lossy channel is lost
with probability ``loss_prob``, messages take ``delay`` time units to
cross a channel, and a machine sitting in a state that has a timeout
transition fires it ``timeout_after`` after entering the state unless it
leaves first.  A delivery that finds the receiving queue full is dropped
(congestion), and counts toward ``lost`` just like a wire loss.

Scheduling is deterministic: among simultaneously enabled machine steps
the lowest (machine, transition) pair in declaration order fires first,
and simultaneous timed events are processed in scheduling order.  All
randomness comes from one splitmix64 generator seeded from the config
(draw order = event order), so equal inputs give bit-identical outputs
on every platform.

Metric conventions (all counters start at zero):

* ``sent`` counts every send fired; ``delivered`` every message that
  entered a receive queue; ``lost`` every wire loss and congestion drop.
  ``sent == delivered + lost + in-transit-at-end`` holds for every run.
* ``retransmissions`` counts timeout transitions fired.  A machine whose
  timer has already fired ``max_retransmits`` times without an
  intervening receive gives up: the next expiry is suppressed and counts
  one ``failed_requests``.
* ``completed_requests`` counts progress-labelled transitions fired.
  Each completion is paired in order with the matching send time of a
  source machine (a machine with no incoming channels, e.g. an
  environment actor); ``mean_response_delay`` averages those intervals.
* ``unspecified_events`` counts deliveries that arrive while the
  receiver's current state has no matching receive rule (the message is
  queued anyway; the count includes transient mismatches).
* ``deadlocked`` is set when the run goes quiescent (no queued machine
  step, no pending delivery, no live timer) before proper termination.

Source machines can be rate-limited: with ``request_interval > 0`` the
k-th send of a source machine may not fire before ``k * interval``,
which operationalizes a configurable request/transmission rate.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from enum import Enum

from .core import System
from .msc import MscEvent, MscTrace

__all__ = [
    "SimConfig",
    "SimMetrics",
    "SweepParameter",
    "SweepRow",
    "InvalidConfigError",
    "SweepError",
    "SplitMix64",
    "run_simulation",
    "sweep",
    "export_csv",
]

# Hard cap on fired steps plus processed events per run; guards against
# zero-delay spin (e.g. a self-forwarding loop simulated with delay 0).
MAX_WORK = 2_000_000

_MASK = (1 << 64) - 1


class SplitMix64:
    """splitmix64: 64-bit state, documented constants, platform-independent.

    next_u64: state += 0x9E3779B97F4A7C15; z = state;
    z = (z ^ z>>30) * 0xBF58476D1CE4E5B9; z = (z ^ z>>27) * 0x94D049BB133111EB;
    return z ^ z>>31.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) / float(1 << 53)


class InvalidConfigError(ValueError):
    pass


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    loss_prob: float = 0.0
    delay: float = 1.0
    timeout_after: float = 50.0
    max_retransmits: int = 3
    max_time: float = 10_000.0
    requests: int = 1
    request_interval: float = 0.0
    jitter: float = 0.0

    def validate(self) -> None:
        if not 0.0 <= self.loss_prob <= 1.0:
            raise InvalidConfigError(f"loss_prob must be in [0, 1], got {self.loss_prob}")
        if self.delay < 0:
            raise InvalidConfigError(f"delay must be >= 0, got {self.delay}")
        if self.timeout_after <= 0:
            raise InvalidConfigError(f"timeout_after must be > 0, got {self.timeout_after}")
        if self.max_time <= 0:
            raise InvalidConfigError(f"max_time must be > 0, got {self.max_time}")
        if self.max_retransmits < 0:
            raise InvalidConfigError(f"max_retransmits must be >= 0, got {self.max_retransmits}")
        if self.requests < 1:
            raise InvalidConfigError(f"requests must be >= 1, got {self.requests}")
        if self.request_interval < 0:
            raise InvalidConfigError(f"request_interval must be >= 0, got {self.request_interval}")
        if self.jitter < 0:
            raise InvalidConfigError(f"jitter must be >= 0, got {self.jitter}")


@dataclass(frozen=True)
class SimMetrics:
    sent: int
    delivered: int
    lost: int
    retransmissions: int
    completed_requests: int
    failed_requests: int
    mean_response_delay: float
    unspecified_events: int
    deadlocked: bool
    sim_time: float


class SweepParameter(Enum):
    NODE_COUNT = "nodes"  # value handed to the model factory
    LOSS_PROB = "loss"  # value overrides cfg.loss_prob
    SEND_RATE = "rate"  # value r overrides cfg.request_interval with 1/r


@dataclass(frozen=True)
class SweepRow:
    value: float
    sent: float
    delivered: float
    lost: float
    retransmissions: float
    completed: float
    failed: float
    mean_delay: float
    unspecified: float
    deadlocked_frac: float
    sim_time: float


class _Run:
    def __init__(self, system: System, cfg: SimConfig):
        self.system = system
        self.cfg = cfg
        self.rng = SplitMix64(cfg.seed)
        self.now = 0.0
        self.locals = [m.initial for m in system.machines]
        self.queues: list[list[str]] = [[] for _ in system.channels]
        self.heap: list[tuple] = []
        self.heap_seq = 0
        self.in_transit = 0
        self.wakes = 0
        self.timer_epoch = [0] * len(system.machines)
        self.timer_live = [False] * len(system.machines)
        self.timeout_counts = [0] * len(system.machines)
        self.sends_fired = [0] * len(system.machines)
        self.wake_pending = [False] * len(system.machines)
        self.events: list[MscEvent] = []
        self.work = 0

        self.sent = 0
        self.delivered = 0
        self.lost = 0
        self.retransmissions = 0
        self.failed = 0
        self.unspecified = 0
        self.issue_times: list[float] = []
        self.completion_delays: list[float] = []

        incoming = {c.receiver for c in system.channels}
        self.is_source = [m.name not in incoming for m in system.machines]
        self.timeout_rule = []
        for m in system.machines:
            table = {}
            for ti, t in enumerate(m.transitions):
                if t.action.kind == "timeout" and t.source not in table:
                    table[t.source] = ti
            self.timeout_rule.append(table)

    def push(self, time: float, kind: str, data) -> None:
        heapq.heappush(self.heap, (time, self.heap_seq, kind, data))
        self.heap_seq += 1

    def record(self, kind: str, machine: str, message=None, channel=None) -> None:
        self.events.append(MscEvent(len(self.events), kind, machine, message, channel))

    def enter(self, mi: int, state: str) -> None:
        self.locals[mi] = state
        self.timer_epoch[mi] += 1
        self.timer_live[mi] = False
        if state in self.timeout_rule[mi]:
            self.timer_live[mi] = True
            self.push(self.now + self.cfg.timeout_after, "timer", (mi, self.timer_epoch[mi]))

    def fire(self, mi: int, ti: int) -> None:
        system, cfg = self.system, self.cfg
        machine = system.machines[mi]
        t = machine.transitions[ti]
        a = t.action
        if a.kind == "send":
            ci = system.channel_index(a.channel)
            self.sent += 1
            self.sends_fired[mi] += 1
            if self.is_source[mi]:
                self.issue_times.append(self.now)
            if system.channels[ci].lossy and self.rng.uniform() < cfg.loss_prob:
                self.lost += 1
                self.record("lose", machine.name, a.message, a.channel)
            else:
                latency = cfg.delay
                if cfg.jitter > 0:
                    latency += self.rng.uniform() * cfg.jitter
                self.in_transit += 1
                self.push(self.now + latency, "deliver", (ci, a.message))
                self.record("send", machine.name, a.message, a.channel)
        elif a.kind == "recv":
            ci = system.channel_index(a.channel)
            self.queues[ci].pop(0)
            self.timeout_counts[mi] = 0
            self.record("recv", machine.name, a.message, a.channel)
        elif a.kind == "timeout":
            self.retransmissions += 1
            self.timeout_counts[mi] += 1
            self.record("timeout", machine.name)
        else:
            self.record("tau", machine.name)
        if t.progress:
            k = len(self.completion_delays)
            if k < len(self.issue_times):
                self.completion_delays.append(self.now - self.issue_times[k])
            else:
                self.completion_delays.append(0.0)
        self.enter(mi, t.target)
        self.work += 1

    def enabled_step(self) -> tuple[int, int] | None:
        """Lowest enabled instantaneous (machine, transition) or None."""
        system, cfg = self.system, self.cfg
        for mi in range(len(system.machines)):
            for ti, t in system.transitions_from(mi, self.locals[mi]):
                a = t.action
                if a.kind == "send":
                    if self.is_source[mi] and cfg.request_interval > 0:
                        due = self.sends_fired[mi] * cfg.request_interval
                        if self.now < due:
                            if not self.wake_pending[mi]:
                                self.wake_pending[mi] = True
                                self.wakes += 1
                                self.push(due, "wake", mi)
                            continue
                    return (mi, ti)
                if a.kind == "recv":
                    ci = system.channel_index(a.channel)
                    q = self.queues[ci]
                    if q and q[0] == a.message:
                        return (mi, ti)
                elif a.kind == "tau":
                    return (mi, ti)
        return None

    def settle(self) -> None:
        """Fire instantaneous steps until none is enabled."""
        while self.work < MAX_WORK:
            step = self.enabled_step()
            if step is None:
                return
            self.fire(*step)

    def terminated(self) -> bool:
        return (
            self.in_transit == 0
            and all(not q for q in self.queues)
            and all(
                self.locals[mi] in m.terminals
                for mi, m in enumerate(self.system.machines)
            )
        )

    def handle(self, kind: str, data) -> None:
        system = self.system
        if kind == "deliver":
            self.in_transit -= 1
            ci, message = data
            channel = system.channels[ci]
            if len(self.queues[ci]) >= channel.capacity:
                self.lost += 1  # congestion drop at the full queue
                self.record("lose", channel.receiver, message, channel.name)
                return
            mi = system.machine_index(channel.receiver)
            rules = system.transitions_from(mi, self.locals[mi])
            if not any(
                t.action.kind == "recv"
                and t.action.message == message
                and t.action.channel == channel.name
                for _, t in rules
            ):
                self.unspecified += 1
            self.queues[ci].append(message)
            self.delivered += 1
        elif kind == "timer":
            mi, epoch = data
            if not self.timer_live[mi] or epoch != self.timer_epoch[mi]:
                return
            self.timer_live[mi] = False
            if self.timeout_counts[mi] >= self.cfg.max_retransmits:
                self.failed += 1  # retransmit budget exhausted; give up
                return
            ti = self.timeout_rule[mi][self.locals[mi]]
            self.fire(mi, ti)
        else:  # wake
            self.wake_pending[data] = False
            self.wakes -= 1

    def live(self) -> int:
        return self.in_transit + self.wakes + sum(self.timer_live)

    def run(self) -> tuple[SimMetrics, MscTrace]:
        for mi, m in enumerate(self.system.machines):
            self.enter(mi, m.initial)
        horizon = False
        while self.work < MAX_WORK:
            self.settle()
            if self.terminated():
                break
            if self.live() == 0:
                break
            time, _, kind, data = heapq.heappop(self.heap)
            if kind == "timer":
                mi, epoch = data
                if not self.timer_live[mi] or epoch != self.timer_epoch[mi]:
                    continue  # stale entry of a cancelled timer
            if time > self.cfg.max_time:
                horizon = True
                self.now = self.cfg.max_time
                break
            self.now = time
            self.handle(kind, data)
            self.work += 1
        done = self.terminated()
        deadlocked = not done and not horizon and self.work < MAX_WORK
        assert self.sent == self.delivered + self.lost + self.in_transit
        if self.completion_delays:
            mean_delay = sum(self.completion_delays) / len(self.completion_delays)
        else:
            mean_delay = 0.0
        metrics = SimMetrics(
            sent=self.sent,
            delivered=self.delivered,
            lost=self.lost,
            retransmissions=self.retransmissions,
            completed_requests=len(self.completion_delays),
            failed_requests=self.failed,
            mean_response_delay=mean_delay,
            unspecified_events=self.unspecified,
            deadlocked=deadlocked,
            sim_time=self.now,
        )
        trace = MscTrace(
            system_name=self.system.name,
            lifelines=tuple(m.name for m in self.system.machines),
            events=tuple(self.events),
        )
        return metrics, trace


def run_simulation(system: System, cfg: SimConfig) -> tuple[SimMetrics, MscTrace]:
    """Simulate ``system`` under ``cfg`` until proper termination,
    quiescence (reported as ``deadlocked``), or the time horizon.

    Identical inputs produce bit-identical metrics and trace.
    """
    cfg.validate()
    return _Run(system, cfg).run()


def _adjusted(cfg: SimConfig, parameter: SweepParameter, value) -> SimConfig:
    if parameter is SweepParameter.LOSS_PROB:
        return replace(cfg, loss_prob=float(value))
    if parameter is SweepParameter.SEND_RATE:
        if value <= 0:
            raise InvalidConfigError(f"send rate must be > 0, got {value}")
        return replace(cfg, request_interval=1.0 / float(value))
    return cfg


def sweep(
    system_factory,
    parameter: SweepParameter,
    values,
    cfg_base: SimConfig,
    runs_per_value: int,
) -> list[SweepRow]:
    """Average ``runs_per_value`` simulations per parameter value.

    The factory receives each value (useful for NODE_COUNT; the other
    parameters act on the config and the factory may ignore its
    argument).  Run ``i`` of every value uses seed ``cfg_base.seed + i``,
    so trends are compared under common random numbers.  Rows come back
    in input order with field-wise means.
    """
    if not values:
        raise SweepError("values must be nonempty")
    if runs_per_value < 1:
        raise SweepError(f"runs_per_value must be >= 1, got {runs_per_value}")
    rows = []
    for value in values:
        try:
            system = system_factory(value)
            cfg = _adjusted(cfg_base, parameter, value)
        except Exception as exc:
            raise SweepError(f"value {value!r}: {exc}") from exc
        totals = [0.0] * 9
        deadlocked = 0
        for i in range(runs_per_value):
            try:
                metrics, _ = run_simulation(system, replace(cfg, seed=cfg_base.seed + i))
            except Exception as exc:
                raise SweepError(f"value {value!r} run {i}: {exc}") from exc
            totals[0] += metrics.sent
            totals[1] += metrics.delivered
            totals[2] += metrics.lost
            totals[3] += metrics.retransmissions
            totals[4] += metrics.completed_requests
            totals[5] += metrics.failed_requests
            totals[6] += metrics.mean_response_delay
            totals[7] += metrics.unspecified_events
            totals[8] += metrics.sim_time
            deadlocked += metrics.deadlocked
        n = runs_per_value
        rows.append(
            SweepRow(
                value=value,
                sent=totals[0] / n,
                delivered=totals[1] / n,
                lost=totals[2] / n,
                retransmissions=totals[3] / n,
                completed=totals[4] / n,
                failed=totals[5] / n,
                mean_delay=totals[6] / n,
                unspecified=totals[7] / n,
                deadlocked_frac=deadlocked / n,
                sim_time=totals[8] / n,
            )
        )
    return rows


def _num(x) -> str:
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return str(x)


def export_csv(rows: list[SweepRow]) -> str:
    """Fixed-header CSV, one row per sweep value, ``.`` decimal point."""
    lines = [
        "param,sent,delivered,lost,retransmissions,completed,failed,"
        "mean_delay,unspecified,deadlocked_frac,sim_time"
    ]
    for r in rows:
        cells = [
            _num(r.value),
            f"{r.sent:.4f}",
            f"{r.delivered:.4f}",
            f"{r.lost:.4f}",
            f"{r.retransmissions:.4f}",
            f"{r.completed:.4f}",
            f"{r.failed:.4f}",
            f"{r.mean_delay:.4f}",
            f"{r.unspecified:.4f}",
            f"{r.deadlocked_frac:.4f}",
            f"{r.sim_time:.4f}",
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"

"""Textual model language: parser and canonical formatter.

This is the toolkit's only on-disk model format (extension ``.cfsm``,
UTF-8).  The grammar is newline-insensitive; ``#`` starts a comment that
runs to end of line; declarations end with ``;``::

    system   = "system" IDENT "{" { channel | machine } "}"
    channel  = "channel" IDENT ":" IDENT "->" IDENT "capacity" INT [ "lossy" ] ";"
    machine  = "machine" IDENT "{" "init" IDENT ";" [ "terminal" IDENT {"," IDENT} ";" ] { state } "}"
    state    = "state" IDENT "{" { trans } "}"
    trans    = ( "recv" IDENT "from" IDENT | "send" IDENT "to" IDENT
               | "timeout" | "tau" ) "->" IDENT [ "progress" ] ";"

Identifiers match ``[A-Za-z_][A-Za-z0-9_]*``; keywords are reserved.
The message alphabet is implicit: the union of all message names that
appear in send/recv rules.  The ``progress`` marker flags a transition
as a good event for liveness analysis: cycles that contain a progress
transition are never reported as livelocks.

:func:`format_system` emits the canonical form (channels first, then
machines, two-space indentation, one transition per line);
``parse(format_system(s))`` equals ``s`` for every valid system, and
canonical text is a fixed point of the round trip.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .core import (
    Action,
    Channel,
    Machine,
    System,
    Transition,
    build_system,
)

__all__ = [
    "SourceSpan",
    "ParseDiagnostic",
    "ParseError",
    "parse",
    "format_system",
]

KEYWORDS = frozenset(
    "system channel machine init terminal state recv send from to "
    "timeout tau progress capacity lossy".split()
)

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)|(?P<comment>#[^\n]*)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<int>[0-9]+)|(?P<punct>->|[{}:;,])"
)


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int


@dataclass(frozen=True)
class ParseDiagnostic:
    span: SourceSpan
    message: str
    kind: str  # "syntax" | "semantic"

    def __str__(self) -> str:
        return f"{self.span.line}:{self.span.column}: {self.kind} error: {self.message}"


class ParseError(ValueError):
    """Input rejected; carries one or more diagnostics with spans."""

    def __init__(self, diagnostics: list[ParseDiagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class _Token:
    kind: str  # "ident" | "int" | "punct" | "eof"
    text: str
    span: SourceSpan


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col, pos = 1, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(
                [
                    ParseDiagnostic(
                        SourceSpan(line, col, 1),
                        f"unexpected character {text[pos]!r}",
                        "syntax",
                    )
                ]
            )
        lexeme = m.group(0)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, lexeme, SourceSpan(line, col, len(lexeme))))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(_Token("eof", "", SourceSpan(line, col, 0)))
    return tokens


class _Parser:
    """Recursive descent over the token list.

    Syntax errors abort immediately (one diagnostic); semantic errors
    are collected so several can be reported from one clean parse.
    """

    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.semantic: list[ParseDiagnostic] = []

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def _fail(self, message: str):
        tok = self.current
        shown = tok.text or "end of input"
        raise ParseError(
            [ParseDiagnostic(tok.span, f"{message}, found {shown!r}", "syntax")]
        )

    def semantic_error(self, span: SourceSpan, message: str):
        self.semantic.append(ParseDiagnostic(span, message, "semantic"))

    def take_punct(self, text: str) -> _Token:
        tok = self.current
        if tok.kind != "punct" or tok.text != text:
            self._fail(f"expected {text!r}")
        self.pos += 1
        return tok

    def take_keyword(self, word: str) -> _Token:
        tok = self.current
        if tok.kind != "ident" or tok.text != word:
            self._fail(f"expected keyword {word!r}")
        self.pos += 1
        return tok

    def take_name(self, what: str) -> _Token:
        tok = self.current
        if tok.kind != "ident":
            self._fail(f"expected {what}")
        if tok.text in KEYWORDS:
            self._fail(f"expected {what} (keyword {tok.text!r} is reserved)")
        self.pos += 1
        return tok

    def take_int(self) -> _Token:
        tok = self.current
        if tok.kind != "int":
            self._fail("expected integer")
        self.pos += 1
        return tok

    def at_keyword(self, word: str) -> bool:
        return self.current.kind == "ident" and self.current.text == word

    def parse_system(self):
        self.take_keyword("system")
        name = self.take_name("system name")
        self.take_punct("{")
        channels: list[tuple[Channel, _Token]] = []
        machines: list[tuple[Machine, _Token, dict]] = []
        while not (self.current.kind == "punct" and self.current.text == "}"):
            if self.at_keyword("channel"):
                channels.append(self.parse_channel())
            elif self.at_keyword("machine"):
                machines.append(self.parse_machine())
            else:
                self._fail("expected 'channel', 'machine' or '}'")
        self.take_punct("}")
        if self.current.kind != "eof":
            self._fail("expected end of input after system block")
        return name, channels, machines

    def parse_channel(self):
        self.take_keyword("channel")
        name = self.take_name("channel name")
        self.take_punct(":")
        sender = self.take_name("sender machine name")
        self.take_punct("->")
        receiver = self.take_name("receiver machine name")
        self.take_keyword("capacity")
        cap = self.take_int()
        lossy = False
        if self.at_keyword("lossy"):
            self.pos += 1
            lossy = True
        self.take_punct(";")
        capacity = int(cap.text)
        if capacity < 1:
            self.semantic_error(cap.span, "channel capacity must be at least 1")
            capacity = 1
        channel = Channel(name.text, sender.text, receiver.text, capacity, lossy)
        return channel, name, sender, receiver

    def parse_machine(self):
        self.take_keyword("machine")
        name = self.take_name("machine name")
        self.take_punct("{")
        self.take_keyword("init")
        init = self.take_name("initial state name")
        self.take_punct(";")
        terminals: list[_Token] = []
        if self.at_keyword("terminal"):
            self.pos += 1
            terminals.append(self.take_name("terminal state name"))
            while self.current.kind == "punct" and self.current.text == ",":
                self.pos += 1
                terminals.append(self.take_name("terminal state name"))
            self.take_punct(";")
        states: list[_Token] = []
        transitions: list[tuple[Transition, dict]] = []
        while self.at_keyword("state"):
            self.pos += 1
            state = self.take_name("state name")
            states.append(state)
            self.take_punct("{")
            while not (self.current.kind == "punct" and self.current.text == "}"):
                transitions.append(self.parse_transition(state.text))
            self.take_punct("}")
        self.take_punct("}")
        machine = Machine(
            name=name.text,
            states=tuple(s.text for s in states),
            initial=init.text,
            terminals=frozenset(t.text for t in terminals),
            transitions=tuple(t for t, _ in transitions),
        )
        spans = {
            "name": name,
            "init": init,
            "terminals": terminals,
            "states": states,
            "transitions": [info for _, info in transitions],
        }
        return machine, name, spans

    def parse_transition(self, source: str):
        tok = self.current
        channel_tok = None
        if self.at_keyword("recv") or self.at_keyword("send"):
            kind = tok.text
            self.pos += 1
            message = self.take_name("message name")
            self.take_keyword("from" if kind == "recv" else "to")
            channel_tok = self.take_name("channel name")
            action = Action(kind, message.text, channel_tok.text)
        elif self.at_keyword("timeout") or self.at_keyword("tau"):
            kind = tok.text
            self.pos += 1
            action = Action(kind)
        else:
            self._fail("expected 'recv', 'send', 'timeout', 'tau' or '}'")
        self.take_punct("->")
        target = self.take_name("target state name")
        progress = False
        if self.at_keyword("progress"):
            self.pos += 1
            progress = True
        self.take_punct(";")
        transition = Transition(source, action, target.text, progress)
        info = {"start": tok, "channel": channel_tok, "target": target}
        return transition, info


def _check_semantics(parser: _Parser, name, channels, machines):
    """Mirror of build_system validation, reported with token spans."""
    seen: dict[str, _Token] = {}
    for _, name_tok, *_ in channels:
        if name_tok.text in seen:
            parser.semantic_error(name_tok.span, f"duplicate name {name_tok.text!r}")
        seen[name_tok.text] = name_tok
    for _, name_tok, _ in machines:
        if name_tok.text in seen:
            parser.semantic_error(name_tok.span, f"duplicate name {name_tok.text!r}")
        seen[name_tok.text] = name_tok

    machine_names = {m.name for m, _, _ in machines}
    channel_map = {c.name: c for c, *_ in channels}
    for channel, _, sender_tok, receiver_tok in channels:
        for tok, endpoint in ((sender_tok, channel.sender), (receiver_tok, channel.receiver)):
            if endpoint not in machine_names:
                parser.semantic_error(tok.span, f"unknown machine {endpoint!r}")

    for machine, name_tok, spans in machines:
        declared: dict[str, _Token] = {}
        for s in spans["states"]:
            if s.text in declared:
                parser.semantic_error(s.span, f"duplicate state {s.text!r}")
            declared[s.text] = s
        if machine.initial not in declared:
            parser.semantic_error(
                spans["init"].span, f"unknown initial state {machine.initial!r}"
            )
        for t in spans["terminals"]:
            if t.text not in declared:
                parser.semantic_error(t.span, f"unknown terminal state {t.text!r}")
        rules = set()
        for transition, info in zip(machine.transitions, spans["transitions"]):
            if transition.target not in declared:
                parser.semantic_error(
                    info["target"].span, f"unknown state {transition.target!r}"
                )
            action = transition.action
            if action.kind in ("send", "recv"):
                channel = channel_map.get(action.channel)
                if channel is None:
                    parser.semantic_error(
                        info["channel"].span, f"unknown channel {action.channel!r}"
                    )
                else:
                    role = channel.sender if action.kind == "send" else channel.receiver
                    if role != machine.name:
                        parser.semantic_error(
                            info["channel"].span,
                            f"machine {machine.name!r} cannot {action.kind} on "
                            f"channel {channel.name!r}",
                        )
            rule = (transition.source, action)
            if rule in rules:
                parser.semantic_error(
                    info["start"].span,
                    f"duplicate rule {action.text()!r} in state {transition.source!r}",
                )
            rules.add(rule)


def parse(text: str) -> System:
    """Parse model text into a validated system.

    Raises :class:`ParseError` with located diagnostics on any syntax or
    semantic problem; never returns a partially built system.
    """
    parser = _Parser(_tokenize(text))
    name, channels, machines = parser.parse_system()
    _check_semantics(parser, name, channels, machines)
    if parser.semantic:
        raise ParseError(parser.semantic)
    return build_system(
        [m for m, _, _ in machines], [c for c, *_ in channels], name.text
    )


def _terminals_in_order(machine: Machine) -> list[str]:
    return [s for s in machine.states if s in machine.terminals]


def format_system(system: System) -> str:
    """Canonical text for ``system``: channels then machines, each in
    declaration order; terminals listed in state declaration order; one
    transition per line."""
    lines = [f"system {system.name} {{"]
    for c in system.channels:
        lossy = " lossy" if c.lossy else ""
        lines.append(
            f"  channel {c.name}: {c.sender} -> {c.receiver} capacity {c.capacity}{lossy};"
        )
    for m in system.machines:
        lines.append(f"  machine {m.name} {{")
        lines.append(f"    init {m.initial};")
        terminals = _terminals_in_order(m)
        if terminals:
            lines.append(f"    terminal {', '.join(terminals)};")
        for s in m.states:
            rules = [t for t in m.transitions if t.source == s]
            if rules:
                lines.append(f"    state {s} {{")
                for t in rules:
                    lines.append(f"      {t.text()};")
                lines.append("    }")
            else:
                lines.append(f"    state {s} {{}}")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"

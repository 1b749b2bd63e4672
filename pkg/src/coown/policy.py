"""Centralized shared-ownership policy oracle.

A request ``U reqs action(F)`` is granted iff t distinct owners of F, t
being F's threshold, each issued ``O says U can action(F)``.  Owning a
file confers no rights by itself.  ``U reqs Create(F, t, {O1, ...})`` is
granted to known users when F is a new name and the threshold is
satisfiable by the resulting owner set.

The rule is the Datalog template

    can(?U, op, ?F) <- file(?F), user(?U), threshold(?F, ?T),
                       says(?O_1, ?U, op, ?F), ..., says(?O_T, ?U, op, ?F),
                       owns(?O_1, ?F), ..., owns(?O_T, ?F),
                       ?O_i != ?O_j for all i < j

whose body length depends on the file's threshold.  Since the body only
asks for T pairwise-distinct owners with matching ``says`` facts, it is
evaluated here directly by counting distinct issuers.

Text grammar::

    credential ::= u "says" u "can" action "(" f ")"
    request    ::= u "reqs" ( "Create" "(" f "," t "," "{" u ("," u)* "}" ")" | action "(" f ")" )

Names are bare words (letters, digits, ``_ . @ - '``) or double-quoted
strings with backslash escapes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import FormatError

KEYWORDS = {"says", "can", "reqs"}
DEFAULT_ACTIONS = ("read", "write")

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<quoted>"(?:[^"\\]|\\.)*")
  | (?P<word>[A-Za-z0-9_.@'\-]+)
  | (?P<punct>[(),{}])
""", re.VERBOSE)


class PolicySyntaxError(FormatError):
    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position}: {text!r}")
        self.text = text
        self.position = position


@dataclass(frozen=True)
class Credential:
    issuer: str
    subject: str
    action: str
    file: str

    def __str__(self) -> str:
        return f"{_show(self.issuer)} says {_show(self.subject)} can {_show(self.action)}({_show(self.file)})"


@dataclass(frozen=True)
class Create:
    file: str
    threshold: int
    owners: frozenset[str]


@dataclass(frozen=True)
class Action:
    file: str
    action: str


@dataclass(frozen=True)
class Request:
    requester: str
    kind: Create | Action

    def __str__(self) -> str:
        k = self.kind
        if isinstance(k, Create):
            owners = ", ".join(_show(o) for o in sorted(k.owners))
            return f"{_show(self.requester)} reqs Create({_show(k.file)}, {k.threshold}, {{{owners}}})"
        return f"{_show(self.requester)} reqs {_show(k.action)}({_show(k.file)})"


def _show(name: str) -> str:
    if re.fullmatch(r"[A-Za-z0-9_.@'\-]+", name) and name not in KEYWORDS and name != "Create":
        return name
    return json.dumps(name)


# -- parsing ---------------------------------------------------------------

@dataclass
class _Tok:
    kind: str  # "name", "punct", "end"
    value: str
    pos: int
    quoted: bool = False


def _lex(text: str) -> list[_Tok]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise PolicySyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        if m.lastgroup == "quoted":
            out.append(_Tok("name", json.loads(m.group()) if "\\" in m.group() else m.group()[1:-1], pos, True))
        elif m.lastgroup == "word":
            out.append(_Tok("name", m.group(), pos))
        elif m.lastgroup == "punct":
            out.append(_Tok("punct", m.group(), pos))
        pos = m.end()
    out.append(_Tok("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _lex(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, what: str):
        tok = self.peek()
        found = "end of input" if tok.kind == "end" else repr(tok.value)
        raise PolicySyntaxError(f"expected {what}, found {found}", self.text, tok.pos)

    def name(self, what: str = "a name") -> str:
        tok = self.peek()
        if tok.kind != "name" or (not tok.quoted and tok.value in KEYWORDS):
            self.fail(what)
        self.i += 1
        return tok.value

    def keyword(self, word: str) -> None:
        tok = self.peek()
        if tok.kind != "name" or tok.quoted or tok.value != word:
            self.fail(f"{word!r}")
        self.i += 1

    def punct(self, ch: str) -> None:
        tok = self.peek()
        if tok.kind != "punct" or tok.value != ch:
            self.fail(f"{ch!r}")
        self.i += 1

    def end(self) -> None:
        if self.peek().kind != "end":
            self.fail("end of input")

    def natural(self) -> int:
        tok = self.peek()
        if tok.kind != "name" or tok.quoted or not tok.value.isdigit():
            self.fail("a natural number")
        self.i += 1
        return int(tok.value)

    def action_call(self) -> tuple[str, str]:
        action = self.name("an action")
        self.punct("(")
        f = self.name("a file name")
        self.punct(")")
        return action, f


def parse_credential(text: str) -> Credential:
    p = _Parser(text)
    issuer = p.name("an issuer")
    p.keyword("says")
    subject = p.name("a subject")
    p.keyword("can")
    action, f = p.action_call()
    p.end()
    return Credential(issuer, subject, action, f)


def parse_request(text: str) -> Request:
    p = _Parser(text)
    requester = p.name("a requester")
    p.keyword("reqs")
    tok = p.peek()
    if tok.kind == "name" and not tok.quoted and tok.value == "Create":
        p.i += 1
        p.punct("(")
        f = p.name("a file name")
        p.punct(",")
        t = p.natural()
        p.punct(",")
        p.punct("{")
        owners = [p.name("an owner")]
        while p.peek().kind == "punct" and p.peek().value == ",":
            p.i += 1
            owners.append(p.name("an owner"))
        p.punct("}")
        p.punct(")")
        p.end()
        return Request(requester, Create(f, t, frozenset(owners)))
    action, f = p.action_call()
    p.end()
    return Request(requester, Action(f, action))


def parse_credentials(lines: Iterable[str]) -> set[Credential]:
    """One credential per line; blank lines and ``#`` comments are skipped."""
    out = set()
    for line in lines:
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(parse_credential(line))
    return out


# -- state and decisions ----------------------------------------------------

@dataclass(frozen=True)
class SomState:
    files: frozenset[str] = frozenset()
    users: frozenset[str] = frozenset()
    owns: frozenset[tuple[str, str]] = frozenset()  # (user, file)
    thresholds: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for f in self.files:
            t = self.thresholds.get(f)
            if t is None or t < 1:
                raise FormatError(f"file {f!r} needs a threshold >= 1")
        for u, f in self.owns:
            if f not in self.files or u not in self.users:
                raise FormatError(f"ownership ({u}, {f}) refers to an unknown user or file")

    def owners(self, f: str) -> frozenset[str]:
        return frozenset(u for u, g in self.owns if g == f)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SomState":
        owns = doc.get("owns", {})
        pairs = {(u, f) for f, us in owns.items() for u in us}
        users = set(doc.get("users", ())) | {u for u, _ in pairs}
        return cls(frozenset(doc.get("files", owns.keys())), frozenset(users), frozenset(pairs),
                   dict(doc.get("thresholds", {})))

    def to_dict(self) -> dict:
        owns: dict[str, list[str]] = {f: [] for f in sorted(self.files)}
        for u, f in sorted(self.owns):
            owns[f].append(u)
        return {"files": sorted(self.files), "users": sorted(self.users), "owns": owns,
                "thresholds": {f: self.thresholds[f] for f in sorted(self.files)}}

    @classmethod
    def load(cls, path) -> "SomState":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def som_decide(state: SomState, request: Request, creds: Iterable[Credential]) -> bool:
    """True for grant, False for deny."""
    kind = request.kind
    if request.requester not in state.users:
        return False
    if isinstance(kind, Create):
        owners = kind.owners | {request.requester}
        return (kind.file not in state.files and owners <= state.users
                and 1 <= kind.threshold <= len(owners))
    if kind.file not in state.files:
        return False
    owners = state.owners(kind.file)
    issuers = {c.issuer for c in creds
               if c.subject == request.requester and c.action == kind.action and c.file == kind.file
               and c.issuer in owners}
    return len(issuers) >= state.thresholds[kind.file]


def apply_create(state: SomState, request: Request) -> SomState:
    """State after a granted Create; the requester becomes an owner too."""
    kind = request.kind
    if not isinstance(kind, Create) or not som_decide(state, request, ()):
        raise FormatError(f"request is not a grantable Create: {request}")
    owners = kind.owners | {request.requester}
    return SomState(state.files | {kind.file}, state.users, state.owns | {(o, kind.file) for o in owners},
                    {**state.thresholds, kind.file: kind.threshold})


def enumerate_grants(state: SomState, creds: Iterable[Credential],
                     actions: Iterable[str] | None = None) -> set[tuple[str, str, str]]:
    """All (user, action, file) triples the policy grants.

    ``actions`` defaults to the actions appearing in ``creds`` (no other
    action can be granted).
    """
    creds = set(creds)
    acts = set(actions) if actions is not None else {c.action for c in creds}
    return {(u, a, f) for u in state.users for a in acts for f in state.files
            if som_decide(state, Request(u, Action(f, a)), creds)}

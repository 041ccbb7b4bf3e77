"""Knob registry, value domains and knob extraction from free text."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Union

from knobrag.errors import (
    DuplicateKnob,
    FormatFailure,
    MalformedRegistry,
    UnknownKnob,
    ValueOutOfDomain,
)

ANY_LITERAL = "*"           # enumeration literal accepting any string, for free-form knobs
KINDS = ("boolean", "integer", "real", "enumeration")
UNIT_MULTIPLIERS = {"": 1, "k": 1 << 10, "m": 1 << 20, "g": 1 << 30}

_TRUE = {"1", "on", "true", "yes"}
_FALSE = {"0", "off", "false", "no"}
_NUMBER = re.compile(r"^\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)\s*([kKmMgG])?[bB]?\s*$")
_INTEGER = re.compile(r"^\s*([+-]?\d+)\s*([kKmMgG])?[bB]?\s*$")

Scalar = Union[bool, int, float, str]


class ValueParseError(ValueError):
    pass


def parse_scalar(raw: str, kind: str) -> Scalar:
    """Parse ``raw`` as a value of ``kind``; unit suffixes K/M/G are binary."""
    text = raw.strip()
    if kind == "boolean":
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueParseError(f"{raw!r} is not a boolean")
    if kind == "integer":
        m = _INTEGER.match(text)
        if not m:
            raise ValueParseError(f"{raw!r} is not an integer")
        return int(m.group(1)) * UNIT_MULTIPLIERS[(m.group(2) or "").lower()]
    if kind == "real":
        m = _NUMBER.match(text)
        if not m:
            raise ValueParseError(f"{raw!r} is not a number")
        return float(m.group(1)) * UNIT_MULTIPLIERS[(m.group(2) or "").lower()]
    if kind == "enumeration":
        if not text:
            raise ValueParseError("empty enumeration literal")
        return text
    raise ValueParseError(f"unknown kind {kind!r}")


@dataclass(frozen=True)
class KnobValue:
    raw: str
    parsed: Scalar

    @classmethod
    def parse(cls, raw: str, kind: str) -> "KnobValue":
        return cls(raw=raw.strip(), parsed=parse_scalar(raw, kind))

    def __str__(self) -> str:
        return self.raw


@dataclass(frozen=True)
class KnobSpec:
    name: str
    kind: str
    minimum: float | None = None
    maximum: float | None = None
    choices: tuple[str, ...] = ()
    default: KnobValue | None = None
    description: str = ""
    related_metrics: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise ValueError("knob name must be nonempty")
        if self.kind not in KINDS:
            raise ValueError(f"unknown knob kind {self.kind!r}")
        if self.minimum is not None and self.maximum is not None and self.minimum > self.maximum:
            raise ValueError(f"{self.name}: min {self.minimum} > max {self.maximum}")

    def domain_text(self) -> str:
        if self.kind == "enumeration":
            return ",".join(self.choices)
        if self.kind == "boolean":
            return "0,1"
        lo = "" if self.minimum is None else _format_number(self.minimum)
        hi = "" if self.maximum is None else _format_number(self.maximum)
        return f"{lo}..{hi}"


@dataclass(frozen=True)
class Recommendation:
    knob: str
    value: KnobValue

    def __str__(self) -> str:
        return f"{self.knob}={self.value.raw}"


def _format_number(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def validate_value(knob: KnobSpec, value: KnobValue | str) -> str | None:
    """Return None when ``value`` lies in the knob's domain, else a reason."""
    raw = value.raw if isinstance(value, KnobValue) else str(value)
    try:
        parsed = parse_scalar(raw, knob.kind)
    except ValueParseError as exc:
        return f"{knob.name}: {exc}"
    if knob.kind == "enumeration":
        if ANY_LITERAL in knob.choices:
            return None
        allowed = {c.lower() for c in knob.choices}
        if parsed.lower() not in allowed:
            return f"{knob.name}: {raw!r} not in {{{', '.join(knob.choices)}}}"
        return None
    if knob.kind in ("integer", "real"):
        if knob.minimum is not None and parsed < knob.minimum:
            return f"{knob.name}: {raw} is below the minimum {_format_number(knob.minimum)}"
        if knob.maximum is not None and parsed > knob.maximum:
            return f"{knob.name}: {raw} exceeds the maximum {_format_number(knob.maximum)}"
    return None


class KnobRegistry:
    """Immutable name-keyed knob collection, iterated in name order."""

    def __init__(self, knobs: Iterable[KnobSpec] = (), dbms_label: str = ""):
        table: dict[str, KnobSpec] = {}
        for k in knobs:
            if k.name in table:
                raise DuplicateKnob(f"duplicate knob {k.name!r}")
            table[k.name] = k
        self._knobs = {name: table[name] for name in sorted(table)}
        self._lower = {name.lower(): name for name in self._knobs}
        self.dbms_label = dbms_label
        self._pattern: re.Pattern | None = None

    def __len__(self) -> int:
        return len(self._knobs)

    def __iter__(self) -> Iterator[KnobSpec]:
        return iter(self._knobs.values())

    def __contains__(self, name: object) -> bool:
        return name in self._knobs

    def __getitem__(self, name: str) -> KnobSpec:
        try:
            return self._knobs[name]
        except KeyError:
            raise UnknownKnob(f"unknown knob {name!r}") from None

    def names(self) -> list[str]:
        return list(self._knobs)

    def resolve(self, name: str) -> str | None:
        """Exact name, else a case-insensitive match, else None."""
        name = name.strip()
        if name in self._knobs:
            return name
        return self._lower.get(name.lower())

    def knob_pattern(self) -> re.Pattern:
        if self._pattern is None:
            # longest names first so alternation never stops at a prefix
            names = sorted(self._knobs, key=lambda n: (-len(n), n))
            body = "|".join(re.escape(n) for n in names) or r"(?!x)x"
            self._pattern = re.compile(rf"(?<![A-Za-z0-9_])(?:{body})(?![A-Za-z0-9_])", re.IGNORECASE)
        return self._pattern


# ---------------------------------------------------------------------------
# registry file: name | kind | domain | default | description | related_metrics


def split_fields(line: str, sep: str = "|") -> list[str]:
    """Split on ``sep`` honouring backslash escapes; fields are stripped."""
    fields, buf, i = [], [], 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            buf.append(line[i + 1])
            i += 2
            continue
        if ch == sep:
            fields.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
        i += 1
    fields.append("".join(buf).strip())
    return fields


def escape_field(text: str, sep: str = "|") -> str:
    return text.replace("\\", "\\\\").replace(sep, "\\" + sep)


def _parse_domain(kind: str, text: str, line: int):
    if kind == "boolean":
        return None, None, ()
    if kind == "enumeration":
        choices = tuple(c.strip() for c in text.split(",") if c.strip())
        if not choices:
            raise MalformedRegistry("enumeration needs at least one literal", line, "domain")
        return None, None, choices
    if not text:
        return None, None, ()
    if ".." not in text:
        raise MalformedRegistry(f"domain {text!r} is not of the form min..max", line, "domain")
    lo_text, hi_text = (p.strip() for p in text.split("..", 1))
    try:
        lo = parse_scalar(lo_text, "real") if lo_text else None
        hi = parse_scalar(hi_text, "real") if hi_text else None
    except ValueParseError as exc:
        raise MalformedRegistry(str(exc), line, "domain") from None
    if lo is not None and hi is not None and lo > hi:
        raise MalformedRegistry(f"min {lo_text} > max {hi_text}", line, "domain")
    return lo, hi, ()


def parse_registry_line(line: str, lineno: int = 0) -> KnobSpec:
    parts = split_fields(line)
    if len(parts) != 6:
        raise MalformedRegistry(f"expected 6 fields, found {len(parts)}", lineno)
    name, kind, domain, default, description, metrics = parts
    if not name:
        raise MalformedRegistry("empty knob name", lineno, "name")
    kind = kind.lower()
    if kind not in KINDS:
        raise MalformedRegistry(f"unknown kind {kind!r}", lineno, "kind")
    lo, hi, choices = _parse_domain(kind, domain, lineno)
    spec = KnobSpec(
        name=name,
        kind=kind,
        minimum=lo,
        maximum=hi,
        choices=choices,
        description=description,
        related_metrics=tuple(m.strip() for m in metrics.split(",") if m.strip()),
    )
    if default:
        try:
            value = KnobValue.parse(default, kind)
        except ValueParseError as exc:
            raise MalformedRegistry(str(exc), lineno, "default") from None
        problem = validate_value(spec, value)
        if problem:
            raise MalformedRegistry(f"default violates domain: {problem}", lineno, "default")
        spec = KnobSpec(**{**spec.__dict__, "default": value})
    return spec


def load_registry(path: str | Path, dbms_label: str | None = None) -> KnobRegistry:
    """Read a registry file; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    knobs = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            spec = parse_registry_line(line.rstrip("\n"), lineno)
            if spec.name in seen:
                raise DuplicateKnob(f"line {lineno}: knob {spec.name!r} already defined on line {seen[spec.name]}")
            seen[spec.name] = lineno
            knobs.append(spec)
    return KnobRegistry(knobs, dbms_label if dbms_label is not None else path.stem)


def format_registry_line(spec: KnobSpec) -> str:
    fields = [
        spec.name,
        spec.kind,
        spec.domain_text(),
        spec.default.raw if spec.default else "",
        spec.description,
        ",".join(spec.related_metrics),
    ]
    return " | ".join(escape_field(f) for f in fields)


# ---------------------------------------------------------------------------
# extraction from text


def extract_knobs(text: str, registry: KnobRegistry) -> set[str]:
    """Registry knobs mentioned in ``text`` as whole tokens (case-insensitive)."""
    if not text or not len(registry):
        return set()
    found = set()
    for m in registry.knob_pattern().finditer(text):
        name = registry.resolve(m.group(0))
        if name is not None:
            found.add(name)
    return found


def _find_block(text: str, open_ch: str, close_ch: str) -> str | None:
    start = text.find(open_ch)
    while start != -1:
        depth = 0
        quote = None
        for i in range(start, len(text)):
            ch = text[i]
            if quote:
                if ch == quote:
                    quote = None
                continue
            if ch in "\"'" and depth:
                quote = ch
            elif ch == open_ch:
                depth += 1
            elif ch == close_ch:
                depth -= 1
                if depth == 0:
                    return text[start + 1:i]
        start = text.find(open_ch, start + 1)
    return None


def _split_top_level(body: str) -> list[str]:
    parts, buf, quote = [], [], None
    for ch in body:
        if quote:
            buf.append(ch)
            if ch == quote:
                quote = None
            continue
        if ch in "\"'":
            quote = ch
            buf.append(ch)
        elif ch in ",\n":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return [p.strip() for p in parts if p.strip()]


def _unquote(text: str) -> str:
    text = text.strip().strip("`")
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1].strip()
    return text


def parse_knob_list(text: str, registry: KnobRegistry) -> tuple[set[str], list[str]]:
    """Parse a bracketed ``[knob, ...]`` list.

    Returns ``(known, unknown)``: registry members and the names that are not
    in the registry (kept for auditing hallucinated knobs).
    """
    body = _find_block(text, "[", "]")
    if body is None:
        raise FormatFailure("no [knob, ...] list found")
    known, unknown = set(), []
    for item in _split_top_level(body):
        name = _unquote(item)
        if not name:
            continue
        resolved = registry.resolve(name)
        if resolved is None:
            unknown.append(name)
        else:
            known.add(resolved)
    return known, unknown


@dataclass(frozen=True)
class EntryIssue:
    knob: str
    raw_value: str | None
    error: str          # "unknown_knob" | "out_of_domain" | "missing_value" | "not_requested"
    detail: str = ""


@dataclass
class ParsedRecommendations:
    """Valid recommendations plus per-entry problems from one dictionary."""

    recommendations: list[Recommendation] = field(default_factory=list)
    issues: list[EntryIssue] = field(default_factory=list)

    def __iter__(self):
        return iter(self.recommendations)

    def __len__(self):
        return len(self.recommendations)

    def knob_names(self) -> list[str]:
        return [r.knob for r in self.recommendations]


def parse_recommendations(text: str, registry: KnobRegistry) -> ParsedRecommendations:
    """Parse a ``{knob: value, ...}`` block and validate every entry.

    Raises FormatFailure when no dictionary block is present or an entry has
    no ``:``/``=`` separator. Unknown knobs and out-of-domain values become
    :class:`EntryIssue` records instead of failing the whole parse.
    """
    body = _find_block(text, "{", "}")
    if body is None:
        raise FormatFailure("no {knob: value} dictionary found")
    out = ParsedRecommendations()
    for entry in _split_top_level(body):
        m = re.match(r"^(\"[^\"]*\"|'[^']*'|[^:=]+?)\s*[:=]\s*(.*)$", entry, re.S)
        if not m:
            raise FormatFailure(f"dictionary entry {entry!r} has no key/value separator")
        key, raw = _unquote(m.group(1)), _unquote(m.group(2))
        name = registry.resolve(key)
        if name is None:
            out.issues.append(EntryIssue(key, raw, "unknown_knob", f"{key!r} is not a registry knob"))
            continue
        if not raw:
            out.issues.append(EntryIssue(name, None, "missing_value", f"{name}: no value given"))
            continue
        spec = registry[name]
        problem = validate_value(spec, raw)
        if problem:
            out.issues.append(EntryIssue(name, raw, "out_of_domain", problem))
            continue
        out.recommendations.append(Recommendation(name, KnobValue.parse(raw, spec.kind)))
    return out


def format_recommendations(recs: Iterable[Recommendation]) -> str:
    return "{" + ", ".join(f"{r.knob}: {r.value.raw}" for r in recs) + "}"


def require_known(name: str, registry: KnobRegistry) -> KnobSpec:
    if name not in registry:
        raise UnknownKnob(f"unknown knob {name!r}")
    return registry[name]


def check_recommendation(rec: Recommendation, registry: KnobRegistry) -> None:
    spec = require_known(rec.knob, registry)
    problem = validate_value(spec, rec.value)
    if problem:
        raise ValueOutOfDomain(problem)

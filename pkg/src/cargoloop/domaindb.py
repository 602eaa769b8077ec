"""In-memory logistics knowledge base: locations, directed route edges,
weather closure windows, and a bounded solution cache.

Databases load from a line-oriented UTF-8 text format, one record per line:

    loc|<code>|<name>|<kind>|<lat>|<lon>
    edge|<origin>|<dest>|<fuel>|<risk>|<minutes>|<flyable>
    wx|<loc>|<closed_from>|<closed_until>|<reason>

``#`` starts a comment. A location's ``name`` field may carry extra aliases
separated by ``;`` (first entry is the display name); the interpreter uses
these to map prose like "Dubai airport" onto codes. The canonical form sorts
records by kind (loc, edge, wx) then key fields, and the database version is
the SHA-256 of the canonical serialization, which makes cache invalidation a
pure function of content.
"""

from __future__ import annotations

import math
import re
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .canonical import format_number, sha256_hex
from .errors import DatabaseFormatError, UnknownLocationError

LOCATION_KINDS = ("airport", "airbase", "depot")

_CODE_RE = re.compile(r"^[A-Z]{3}$")


@dataclass(frozen=True)
class Location:
    code: str
    name: str  # display name, optionally followed by ';'-separated aliases
    kind: str
    latitude: float
    longitude: float

    def aliases(self) -> tuple[str, ...]:
        """All prose names for this location, display name first."""
        return tuple(p.strip() for p in self.name.split(";") if p.strip())

    @property
    def display_name(self) -> str:
        return self.aliases()[0]


@dataclass(frozen=True)
class RouteEdge:
    origin: str
    destination: str
    fuel_cost: float
    route_risk: float
    flight_time: float
    flyable: bool


@dataclass(frozen=True)
class WeatherWindow:
    location: str
    closed_from: float  # minutes since scenario start
    closed_until: float
    reason: str

    def covers(self, minute: float) -> bool:
        """Closure intervals are half-open: [closed_from, closed_until)."""
        return self.closed_from <= minute < self.closed_until


@dataclass(frozen=True)
class FactSet:
    """Edges and windows incident to a set of queried locations."""

    codes: tuple[str, ...]
    edges: tuple[RouteEdge, ...]
    windows: tuple[WeatherWindow, ...]


class LogisticsDatabase:
    """Validated, immutable snapshot of the logistics world.

    Safe to share across concurrent sessions; all mutation happens by loading
    a new instance.
    """

    def __init__(
        self,
        locations: Iterable[Location],
        edges: Iterable[RouteEdge],
        windows: Iterable[WeatherWindow] = (),
    ):
        locs = sorted(locations, key=lambda l: l.code)
        self._locations: dict[str, Location] = {}
        for loc in locs:
            _validate_location(loc)
            if loc.code in self._locations:
                raise DatabaseFormatError(f"duplicate location code {loc.code!r}")
            self._locations[loc.code] = loc

        self._edges: dict[tuple[str, str], RouteEdge] = {}
        for edge in sorted(edges, key=lambda e: (e.origin, e.destination)):
            _validate_edge(edge)
            key = (edge.origin, edge.destination)
            if key in self._edges:
                raise DatabaseFormatError(
                    f"duplicate edge {edge.origin}->{edge.destination}"
                )
            for code in key:
                if code not in self._locations:
                    raise DatabaseFormatError(
                        f"edge {edge.origin}->{edge.destination} references unknown location {code!r}"
                    )
            self._edges[key] = edge

        wxs = []
        for wx in windows:
            _validate_window(wx)
            if wx.location not in self._locations:
                raise DatabaseFormatError(
                    f"weather window references unknown location {wx.location!r}"
                )
            wxs.append(wx)
        self._windows = tuple(
            sorted(wxs, key=lambda w: (w.location, w.closed_from, w.closed_until, w.reason))
        )

        if not self._locations and not self._edges and not self._windows:
            raise DatabaseFormatError("empty database")

        self.version = sha256_hex(self.serialize())

    # -- queries ---------------------------------------------------------

    @property
    def locations(self) -> tuple[Location, ...]:
        return tuple(self._locations.values())

    @property
    def edges(self) -> tuple[RouteEdge, ...]:
        return tuple(self._edges.values())

    @property
    def windows(self) -> tuple[WeatherWindow, ...]:
        return self._windows

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(self._locations)

    def location(self, code: str) -> Location:
        try:
            return self._locations[code]
        except KeyError:
            raise UnknownLocationError(code, self.suggest_codes(code)) from None

    def has_location(self, code: str) -> bool:
        return code in self._locations

    def edge(self, origin: str, destination: str) -> RouteEdge | None:
        return self._edges.get((origin, destination))

    def edges_from(self, code: str) -> tuple[RouteEdge, ...]:
        return tuple(e for e in self._edges.values() if e.origin == code)

    def windows_at(self, code: str) -> tuple[WeatherWindow, ...]:
        return tuple(w for w in self._windows if w.location == code)

    def alias_table(self) -> tuple[tuple[str, str], ...]:
        """(alias lowercased, code) pairs, longest alias first.

        Includes each location's code itself so bare codes resolve too.
        """
        pairs: list[tuple[str, str]] = []
        for loc in self._locations.values():
            pairs.append((loc.code.lower(), loc.code))
            for alias in loc.aliases():
                pairs.append((alias.lower(), loc.code))
        pairs.sort(key=lambda p: (-len(p[0]), p[0], p[1]))
        return tuple(pairs)

    def suggest_codes(self, code: str, max_distance: int = 2) -> tuple[str, ...]:
        """Known codes within the given edit distance of ``code``, closest first."""
        scored = []
        for known in self._locations:
            d = _edit_distance(code.upper(), known)
            if d <= max_distance:
                scored.append((d, known))
        return tuple(known for _, known in sorted(scored))

    # -- serialization ---------------------------------------------------

    def serialize(self) -> str:
        """Canonical text form; ``parse_database(serialize())`` is a fixed point."""
        lines = []
        for loc in self._locations.values():
            lines.append(
                "|".join(
                    (
                        "loc",
                        loc.code,
                        loc.name,
                        loc.kind,
                        format_number(loc.latitude),
                        format_number(loc.longitude),
                    )
                )
            )
        for edge in self._edges.values():
            lines.append(
                "|".join(
                    (
                        "edge",
                        edge.origin,
                        edge.destination,
                        format_number(edge.fuel_cost),
                        format_number(edge.route_risk),
                        format_number(edge.flight_time),
                        "true" if edge.flyable else "false",
                    )
                )
            )
        for wx in self._windows:
            lines.append(
                "|".join(
                    (
                        "wx",
                        wx.location,
                        format_number(wx.closed_from),
                        format_number(wx.closed_until),
                        wx.reason,
                    )
                )
            )
        return "\n".join(lines) + "\n"


def _validate_location(loc: Location) -> None:
    if not _CODE_RE.match(loc.code):
        raise DatabaseFormatError(f"location code {loc.code!r} must match [A-Z]{{3}}")
    if loc.kind not in LOCATION_KINDS:
        raise DatabaseFormatError(
            f"location {loc.code}: kind {loc.kind!r} not one of {LOCATION_KINDS}"
        )
    if not loc.name.strip():
        raise DatabaseFormatError(f"location {loc.code}: empty name")
    if not -90.0 <= loc.latitude <= 90.0:
        raise DatabaseFormatError(f"location {loc.code}: latitude {loc.latitude} out of range")
    if not -180.0 <= loc.longitude <= 180.0:
        raise DatabaseFormatError(f"location {loc.code}: longitude {loc.longitude} out of range")


def _validate_edge(edge: RouteEdge) -> None:
    if edge.origin == edge.destination:
        raise DatabaseFormatError(f"edge {edge.origin}->{edge.destination}: self-loop")
    for field_name in ("fuel_cost", "route_risk", "flight_time"):
        value = getattr(edge, field_name)
        if not math.isfinite(value) or value < 0:
            raise DatabaseFormatError(
                f"edge {edge.origin}->{edge.destination}: {field_name} must be finite and >= 0, got {value!r}"
            )


def _validate_window(wx: WeatherWindow) -> None:
    if not (math.isfinite(wx.closed_from) and math.isfinite(wx.closed_until)):
        raise DatabaseFormatError(f"weather window at {wx.location}: non-finite bounds")
    if not wx.closed_from < wx.closed_until:
        raise DatabaseFormatError(
            f"weather window at {wx.location}: closed_from {wx.closed_from} must be < closed_until {wx.closed_until}"
        )


def parse_database(text: str, source: str = "<memory>") -> LogisticsDatabase:
    """Parse database text, reporting the offending line on any failure."""
    locations: list[Location] = []
    edges: list[RouteEdge] = []
    windows: list[WeatherWindow] = []
    saw_record = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        saw_record = True
        fields = [f.strip() for f in line.split("|")]
        kind = fields[0]
        if kind == "loc":
            _expect_fields(fields, 6, line_no, source)
            locations.append(
                Location(
                    code=fields[1],
                    name=fields[2],
                    kind=fields[3],
                    latitude=_number(fields[4], "latitude", line_no, source),
                    longitude=_number(fields[5], "longitude", line_no, source),
                )
            )
        elif kind == "edge":
            _expect_fields(fields, 7, line_no, source)
            edges.append(
                RouteEdge(
                    origin=fields[1],
                    destination=fields[2],
                    fuel_cost=_number(fields[3], "fuel_cost", line_no, source),
                    route_risk=_number(fields[4], "route_risk", line_no, source),
                    flight_time=_number(fields[5], "flight_time", line_no, source),
                    flyable=_boolean(fields[6], line_no, source),
                )
            )
        elif kind == "wx":
            _expect_fields(fields, 5, line_no, source)
            windows.append(
                WeatherWindow(
                    location=fields[1],
                    closed_from=_number(fields[2], "closed_from", line_no, source),
                    closed_until=_number(fields[3], "closed_until", line_no, source),
                    reason=fields[4],
                )
            )
        else:
            raise DatabaseFormatError(
                f"unknown record kind {kind!r}", source=source, line=line_no
            )

    if not saw_record:
        raise DatabaseFormatError("empty database", source=source)

    try:
        return LogisticsDatabase(locations, edges, windows)
    except DatabaseFormatError as exc:
        raise DatabaseFormatError(str(exc).split(": ", 1)[-1], source=source) from None


def _expect_fields(fields: Sequence[str], count: int, line_no: int, source: str) -> None:
    if len(fields) != count:
        raise DatabaseFormatError(
            f"record kind {fields[0]!r} needs {count} fields, got {len(fields)}",
            source=source,
            line=line_no,
        )


def _number(text: str, field_name: str, line_no: int, source: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DatabaseFormatError(
            f"field {field_name}: {text!r} is not a number", source=source, line=line_no
        ) from None


def _boolean(text: str, line_no: int, source: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise DatabaseFormatError(
        f"flyable must be 'true' or 'false', got {text!r}", source=source, line=line_no
    )


def load_database(path: str | Path) -> LogisticsDatabase:
    """Load and validate a database file."""
    p = Path(path)
    return parse_database(p.read_text(encoding="utf-8"), source=str(p))


def lookup_facts(db: LogisticsDatabase, codes: Sequence[str]) -> FactSet:
    """All edges and weather windows incident to ``codes``.

    Output order is deterministic (edges by origin then destination) and
    independent of both query order and record insertion order. Unknown codes
    raise with nearest-known suggestions.
    """
    for code in codes:
        if not db.has_location(code):
            raise UnknownLocationError(code, db.suggest_codes(code))
    wanted = set(codes)
    edges = tuple(
        e
        for e in db.edges
        if e.origin in wanted or e.destination in wanted
    )
    windows = tuple(w for w in db.windows if w.location in wanted)
    return FactSet(codes=tuple(sorted(wanted)), edges=edges, windows=windows)


def _edit_distance(a: str, b: str) -> int:
    """Levenshtein distance; inputs are short location codes."""
    if a == b:
        return 0
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


class SolutionCache:
    """Bounded keyed plan cache with last-write-wins semantics.

    Entries are only returned when the stored plan's database version matches
    the caller's, so a reload with changed content can never serve a stale
    plan even if a key were somehow reused.
    """

    def __init__(self, max_entries: int = 256):
        if max_entries < 1:
            raise ValueError("max_entries must be >= 1")
        self._max = max_entries
        self._lock = threading.Lock()
        self._entries: OrderedDict[str, object] = OrderedDict()

    def get(self, key: str, db_version: str | None = None):
        with self._lock:
            plan = self._entries.get(key)
            if plan is None:
                return None
            if db_version is not None and getattr(plan, "db_version", None) != db_version:
                return None
            self._entries.move_to_end(key)
            return plan

    def put(self, key: str, plan: object) -> None:
        with self._lock:
            self._entries[key] = plan
            self._entries.move_to_end(key)
            while len(self._entries) > self._max:
                self._entries.popitem(last=False)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

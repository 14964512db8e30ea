"""Versioned scenario lookup table mapping collaboration states to actions.

The shipped CSV encodes the 22-row mapping from (JVA, JME, ME1, ME2) levels
to feedback action sets, with starred actions gated behind the persistence
rule. Several rows share one state: 4/10, 6/8/9/11 and 12/14. Duplicate
states collapse to the lowest scenario id; the collapsed scenario's base set
is the least disruptive of the group's sets and the escalated set is the
group union plus starred actions, so the heavier variants only appear under
the persistence rule.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from importlib import resources

TABLE_RESOURCE = "scenario_table.csv"
SCENARIO_TABLE_SHA256 = "2fc973c5067c98d0bb177d230b029ae333146ba663b814a44d2a04b9e9553f0a"

LEVELS = ("H", "AVG", "L")
_LEVEL_ORD = {"L": 0, "AVG": 1, "H": 2}
ACTIONS = ("A1", "A2", "A3", "A4", "A5")


class ScenarioTableError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioRow:
    scenario_id: int
    state: tuple[str, str, str, str]
    checked: frozenset[str]
    starred: frozenset[str]


@dataclass(frozen=True)
class ScenarioMatch:
    scenario_id: int
    fallback: bool

    def tag(self):
        """Event-log form: plain id for exact rows, "~id" for fallback."""
        return f"~{self.scenario_id}" if self.fallback else self.scenario_id


def _disruptiveness(actions: frozenset[str]) -> tuple:
    # Fewer actions first, then lighter ones (A1 < A2 < ... < A5).
    ranks = sorted((ACTIONS.index(a) for a in actions), reverse=True)
    return (len(actions), tuple(ranks))


class ScenarioTable:
    def __init__(self, rows: list[ScenarioRow]):
        self.rows = rows
        self._canonical: dict[tuple, int] = {}
        groups: dict[int, list[ScenarioRow]] = {}
        for row in rows:
            cid = self._canonical.setdefault(row.state, row.scenario_id)
            groups.setdefault(cid, []).append(row)
        self._base: dict[int, frozenset[str]] = {}
        self._escalated: dict[int, frozenset[str]] = {}
        for cid, group in groups.items():
            base = min((r.checked for r in group), key=_disruptiveness)
            union: set[str] = set()
            for r in group:
                union |= r.checked | r.starred
            self._base[cid] = base
            self._escalated[cid] = frozenset(union)

    # -- lookups ---------------------------------------------------------

    def canonical_id(self, state: tuple[str, str, str, str]) -> int | None:
        return self._canonical.get(tuple(state))

    def base_actions(self, scenario_id: int) -> frozenset[str]:
        return self._base[scenario_id]

    def escalated_actions(self, scenario_id: int) -> frozenset[str]:
        return self._escalated[scenario_id]

    def has_escalation(self, scenario_id: int) -> bool:
        return self._escalated[scenario_id] != self._base[scenario_id]

    def classify(self, jva: str, jme: str, me1: str, me2: str) -> ScenarioMatch:
        """Resolve a level 4-tuple to a scenario id.

        Exact rows match directly. Unlisted states fall back: an AVG joint
        metric is treated as H (average joint synchrony is not a deviation),
        then the nearest row of the resulting (JVA, JME) block by total ME
        level distance wins, ties going to the less disruptive row.
        """
        exact = self.canonical_id((jva, jme, me1, me2))
        if exact is not None:
            return ScenarioMatch(exact, fallback=False)
        jva_s = "H" if jva == "AVG" else jva
        jme_s = "H" if jme == "AVG" else jme
        substituted = self.canonical_id((jva_s, jme_s, me1, me2))
        if substituted is not None:
            return ScenarioMatch(substituted, fallback=True)
        candidates = []
        for state, cid in self._canonical.items():
            if state[0] != jva_s or state[1] != jme_s:
                continue
            dist = (abs(_LEVEL_ORD[me1] - _LEVEL_ORD[state[2]])
                    + abs(_LEVEL_ORD[me2] - _LEVEL_ORD[state[3]]))
            candidates.append((dist, _disruptiveness(self._base[cid]), cid))
        if not candidates:
            raise ScenarioTableError(f"no block for joint levels ({jva_s},{jme_s})")
        candidates.sort()
        return ScenarioMatch(candidates[0][2], fallback=True)


def parse_table(text: str) -> ScenarioTable:
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    for rec in reader:
        state = (rec["jva"], rec["jme"], rec["me1"], rec["me2"])
        if any(level not in LEVELS for level in state):
            raise ScenarioTableError(f"bad level in row {rec['scenario']}")
        checked = set()
        starred = set()
        for action in ACTIONS:
            mark = rec[action.lower()].strip()
            if mark == "y":
                checked.add(action)
            elif mark == "star":
                starred.add(action)
            elif mark:
                raise ScenarioTableError(f"bad mark {mark!r} in row {rec['scenario']}")
        rows.append(ScenarioRow(int(rec["scenario"]), state,
                                frozenset(checked), frozenset(starred)))
    if len(rows) != 22:
        raise ScenarioTableError(f"expected 22 scenario rows, found {len(rows)}")
    return ScenarioTable(rows)


def table_bytes() -> bytes:
    return resources.files("ssrl_engine.data").joinpath(TABLE_RESOURCE).read_bytes()


def verify_checksum(data: bytes) -> bool:
    return hashlib.sha256(data).hexdigest() == SCENARIO_TABLE_SHA256


_cached: ScenarioTable | None = None


def load_table(data: bytes | None = None, *, verify: bool = True) -> ScenarioTable:
    """Load the scenario table, verifying the shipped file's checksum."""
    global _cached
    if data is None:
        if _cached is not None:
            return _cached
        data = table_bytes()
        if verify and not verify_checksum(data):
            raise ScenarioTableError("scenario table checksum mismatch")
        _cached = parse_table(data.decode("utf-8"))
        return _cached
    if verify and not verify_checksum(data):
        raise ScenarioTableError("scenario table checksum mismatch")
    return parse_table(data.decode("utf-8"))

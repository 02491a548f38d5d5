"""Domain model for digital memories and memory threads.

A digital memory is the metadata record of one captured artifact: its owner
peer, a capture timestamp, a set of entity references by which it can be
recalled, and any further key/value annotations.  A memory thread collects
the memories that reference one entity (the selection criterion) and orders
them by one totally ordered key (the indexing criterion, normally time).
Threads owned by a single peer are extant threads (EMT); threads assembled
across peers are virtual threads (VMT).  Where two threads share a memory
they overlap at a networking point.

Indexing values are modeled as plain integers (timestamp seconds or an
abstract rank); non-numeric keys are expected to be pre-encoded by the
dataset builder.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum

from .errors import MalformedMemory, MissingIndexKey, WrongEntity

#: canonical indexing key; every memory carries it via ``capture_time``
TIME_KEY = "time"

Scalar = int | float | str


@dataclass(frozen=True)
class MemoryKey:
    """One metadata attribute of a memory, e.g. ("place", "paris").

    Names are case-normalized to lowercase on construction.
    """

    name: str
    value: Scalar

    def __post_init__(self):
        if not self.name:
            raise MalformedMemory("memory key with empty name")
        object.__setattr__(self, "name", self.name.lower())


@dataclass(frozen=True)
class ReferenceKey:
    """An entity identifier plus the key names it is formed from."""

    entity_id: str
    components: tuple[str, ...] = (TIME_KEY,)

    def __post_init__(self):
        if not self.components:
            raise MalformedMemory(
                f"reference key {self.entity_id!r} has no components")


@dataclass
class DigitalMemory:
    """Metadata record of one captured memory.

    ``references`` holds the entity ids this memory can be recalled by;
    ``keys`` holds extra annotations.  ``content_hash`` identifies the
    underlying content so duplicate copies on different peers can be
    recognized even though their ``memory_id`` differs.
    """

    memory_id: int
    owner: int
    content_hash: str
    capture_time: int
    references: frozenset[str]
    keys: dict[str, Scalar] = field(default_factory=dict)

    def validate(self) -> None:
        """Check record invariants; raises MalformedMemory."""
        if not self.references:
            raise MalformedMemory(
                f"memory {self.memory_id} has no reference keys")
        if self.owner < 0:
            raise MalformedMemory(
                f"memory {self.memory_id} has negative owner {self.owner}")

    def index_value(self, key: str) -> Scalar:
        """Value of an indexing key; capture_time backs the "time" key."""
        if key in self.keys:
            return self.keys[key]
        if key == TIME_KEY:
            return self.capture_time
        raise MissingIndexKey(
            f"memory {self.memory_id} lacks indexing key {key!r}")


class ThreadKind(Enum):
    EMT = "emt"
    VMT = "vmt"


@dataclass(frozen=True)
class ThreadCriteria:
    """Selection entity plus the indexing key that orders the thread."""

    selection: str
    indexing: str = TIME_KEY


@dataclass(frozen=True)
class ThreadEntry:
    memory_id: int
    owner: int
    value: Scalar


@dataclass
class MemoryThread:
    """Ordered entries of one entity's memories under one indexing key."""

    thread_id: str
    criteria: ThreadCriteria
    kind: ThreadKind
    entries: list[ThreadEntry] = field(default_factory=list)

    def values(self) -> list[Scalar]:
        return [e.value for e in self.entries]

    def memory_ids(self) -> list[int]:
        return [e.memory_id for e in self.entries]

    def owners(self) -> list[int]:
        return [e.owner for e in self.entries]

    def is_ordered(self) -> bool:
        vs = self.values()
        return all(vs[i] <= vs[i + 1] for i in range(len(vs) - 1))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class NetworkingPoint:
    """A memory shared by two or more threads."""

    memory_id: int
    threads: frozenset[str]


def extract_reference_keys(memory: DigitalMemory) -> set[str]:
    """Entity ids by which ``memory`` can be recalled; never empty."""
    if not memory.references:
        raise MalformedMemory(
            f"memory {memory.memory_id} has no reference keys")
    return set(memory.references)


def build_emt(memories: list[DigitalMemory],
              criteria: ThreadCriteria) -> MemoryThread:
    """Build an extant thread from one peer's memories.

    Keeps exactly the memories referencing ``criteria.selection``, ordered
    by the indexing key.  The sort is stable, so equal indexing values keep
    their input order.
    """
    owners = {m.owner for m in memories}
    if len(owners) > 1:
        raise MalformedMemory(
            f"extant thread spans owners {sorted(owners)}; expected one")
    selected = [m for m in memories if criteria.selection in m.references]
    entries = [ThreadEntry(m.memory_id, m.owner, m.index_value(criteria.indexing))
               for m in selected]
    entries.sort(key=lambda e: e.value)  # stable
    owner = selected[0].owner if selected else (min(owners) if owners else -1)
    return MemoryThread(
        thread_id=f"emt:{owner}:{criteria.selection}",
        criteria=criteria,
        kind=ThreadKind.EMT,
        entries=entries,
    )


def thread_insert(thread: MemoryThread, memory: DigitalMemory) -> int:
    """Insert one memory into its sorted slot; returns the index.

    Equal indexing values insert after the existing equals, mirroring the
    stable-sort rule of build_emt.
    """
    if thread.criteria.selection not in memory.references:
        raise WrongEntity(
            f"memory {memory.memory_id} does not reference "
            f"{thread.criteria.selection!r}")
    value = memory.index_value(thread.criteria.indexing)
    idx = bisect_right(thread.values(), value)
    thread.entries.insert(idx, ThreadEntry(memory.memory_id, memory.owner, value))
    return idx


def find_networking_points(threads: list[MemoryThread]) -> list[NetworkingPoint]:
    """Memories appearing in two or more distinct threads, ascending by id."""
    seen_in: dict[int, set[str]] = {}
    for t in threads:
        for entry in t.entries:
            seen_in.setdefault(entry.memory_id, set()).add(t.thread_id)
    return [NetworkingPoint(mid, frozenset(tids))
            for mid, tids in sorted(seen_in.items())
            if len(tids) >= 2]


# -- dataset file format ----------------------------------------------------
#
# One record per line, six comma-separated fields:
#   memory_id, owner_peer, content_hash, capture_time, refs, extras
# refs is a semicolon-joined list of entity ids (required, non-empty);
# extras is a semicolon-joined list of key=value pairs (may be empty).
# Lines starting with '#' and blank lines are skipped.

def format_memory_line(m: DigitalMemory) -> str:
    refs = ";".join(sorted(m.references))
    extras = ";".join(f"{k}={m.keys[k]}" for k in sorted(m.keys))
    return f"{m.memory_id}, {m.owner}, {m.content_hash}, {m.capture_time}, {refs}, {extras}"


def _parse_scalar(text: str) -> Scalar:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_memory_line(line: str) -> DigitalMemory:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) == 5:
        parts.append("")
    if len(parts) != 6:
        raise MalformedMemory(
            f"expected 6 fields, got {len(parts)}: {line!r}")
    try:
        mid, owner, ctime = int(parts[0]), int(parts[1]), int(parts[3])
    except ValueError as exc:
        raise MalformedMemory(f"non-integer field in {line!r}") from exc
    refs = frozenset(r for r in parts[4].split(";") if r)
    keys: dict[str, Scalar] = {}
    if parts[5]:
        for pair in parts[5].split(";"):
            if "=" not in pair:
                raise MalformedMemory(f"bad key=value pair {pair!r} in {line!r}")
            k, v = pair.split("=", 1)
            keys[k.strip().lower()] = _parse_scalar(v.strip())
    memory = DigitalMemory(mid, owner, parts[2], ctime, refs, keys)
    memory.validate()
    return memory


def load_memories(path) -> list[DigitalMemory]:
    """Read a dataset file, validating every record."""
    memories = []
    ids = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                m = parse_memory_line(line)
            except MalformedMemory as exc:
                raise MalformedMemory(f"{path}:{lineno}: {exc}") from exc
            if m.memory_id in ids:
                raise MalformedMemory(
                    f"{path}:{lineno}: duplicate memory_id {m.memory_id}")
            ids.add(m.memory_id)
            memories.append(m)
    return memories


def dump_memories(memories: list[DigitalMemory], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in memories:
            fh.write(format_memory_line(m) + "\n")

"""Synthetic memory populations, file placements, and query workloads.

The generator builds a fixed file population per entity, then deals file
instances to peers class by class so that the holders of any one entity
form a contiguous run inside their interest class.  The same records can
be placed linearly (community-ordered, shared by the structured overlays)
or uniformly at random (for the unstructured baseline).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidFraction, ValidationError
from .memory_core import DigitalMemory, TIME_KEY

# Sub-stream tags so every consumer of a (seed, run) pair draws from an
# independent generator.
STREAM_DATASET = 0
STREAM_TOPOLOGY = 1
STREAM_SCHEDULE = 2
STREAM_WORKLOAD = 3
STREAM_PLACEMENT = 4


def entity_ref(entity: int) -> str:
    """Reference-key string for a numbered entity."""
    return f"e{entity}"


@dataclass(frozen=True)
class DatasetSpec:
    """Knobs for the synthetic population.

    duplicate_fraction is the share of base records that repeat an
    earlier record's content (extra holders of an existing file);
    multi_position_fraction is the share of peers that get one further
    file of an entity they already hold.
    """

    n_entities: int = 175
    n_classes: int = 7
    memberships: int = 3
    memories_per_peer: int = 3
    duplicate_fraction: float = 0.05
    multi_position_fraction: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        for name in ("duplicate_fraction", "multi_position_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise InvalidFraction(f"{name} must be in [0, 1), got {v}")
        if self.n_entities < 1:
            raise ValidationError("n_entities must be >= 1")
        if self.n_classes < 1:
            raise ValidationError("n_classes must be >= 1")
        if not 1 <= self.memberships <= self.n_classes:
            raise ValidationError("memberships must be in [1, n_classes]")
        if self.memories_per_peer < 1:
            raise ValidationError("memories_per_peer must be >= 1")


@dataclass(frozen=True)
class FileRecord:
    file_id: int
    entity: int
    value: int            # indexing value shared by every replica
    content_hash: str


@dataclass
class Placement:
    """Who holds which file; derived views are precomputed."""

    n_peers: int
    holders_by_file: list[list[int]]
    files_by_peer: list[list[int]] = field(default_factory=list)

    def entity_holders(self, files_of_entity: list[int]) -> list[int]:
        seen: set[int] = set()
        for f in files_of_entity:
            seen.update(self.holders_by_file[f])
        return sorted(seen)


@dataclass(frozen=True)
class Query:
    target_file: int
    origin: int


@dataclass
class Dataset:
    spec: DatasetSpec
    n_peers: int
    entity_class: list[int]
    files: list[FileRecord]
    entity_files: list[list[int]]
    memories: list[DigitalMemory]
    profiles: list[tuple[int, ...]]
    class_slots: list[list[int]]      # slot order per class: peer ids
    linear: Placement

    def entity_holder_sets(self, placement: Placement) -> list[list[int]]:
        return [placement.entity_holders(fs) for fs in self.entity_files]

    def duplicated_records(self) -> int:
        return len(self.memories) - len(self.files)


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(list(key))


def assign_profiles(n_peers: int, n_classes: int, memberships: int,
                    rng: np.random.Generator) -> list[tuple[int, ...]]:
    """Deal memberships*n slots cyclically over a random peer permutation.

    Guarantees distinct classes per peer and class sizes balanced to
    within one.
    """
    perm = rng.permutation(n_peers)
    profiles: list[tuple[int, ...]] = [()] * n_peers
    for t, peer in enumerate(perm):
        start = memberships * t
        profiles[peer] = tuple((start + s) % n_classes
                               for s in range(memberships))
    return profiles


def _apportion(total: int, weights: list[int]) -> list[int]:
    """Largest-remainder split of `total` proportional to `weights`."""
    wsum = sum(weights)
    if wsum == 0:
        return [0] * len(weights)
    raw = [total * w / wsum for w in weights]
    out = [int(x) for x in raw]
    remainders = sorted(range(len(raw)), key=lambda i: raw[i] - out[i],
                        reverse=True)
    for i in remainders[: total - sum(out)]:
        out[i] += 1
    return out


def _fair_picks(items: list[int], count: int) -> list[int]:
    """count items spread evenly through the list, deterministic."""
    if count <= 0:
        return []
    return [items[(t * len(items)) // count] for t in range(count)]


def generate_dataset(spec: DatasetSpec, n_peers: int,
                     seed: int | None = None, run: int = 0) -> Dataset:
    """Build the full population: files, replicas, owners, profiles."""
    spec.validate()
    if n_peers < 1:
        raise ValidationError("n_peers must be >= 1")
    base_seed = spec.seed if seed is None else seed
    rng = _rng(STREAM_DATASET, base_seed, run)

    n_cls = spec.n_classes
    mpp = spec.memories_per_peer
    memberships = spec.memberships
    profiles = assign_profiles(n_peers, n_cls, memberships, rng)

    entity_class = [e % n_cls for e in range(spec.n_entities)]
    class_entities: list[list[int]] = [[] for _ in range(n_cls)]
    for e, c in enumerate(entity_class):
        class_entities[c].append(e)

    # slot order per class: peer j's s-th memory draws from class
    # profile[(j+s) % memberships], so consecutive peers occupy
    # consecutive slots of each class stream
    class_slots: list[list[int]] = [[] for _ in range(n_cls)]
    for j in range(n_peers):
        prof = profiles[j]
        for s in range(mpp):
            class_slots[prof[(j + s) % memberships]].append(j)
    slot_counts = [len(s) for s in class_slots]

    base_instances = n_peers * mpp
    n_files = round(base_instances * (1.0 - spec.duplicate_fraction))
    file_budget = _apportion(n_files, slot_counts)
    # proportional apportionment cannot exceed a class's slot count by
    # more than rounding; clamp and push the leftovers elsewhere
    for c in range(n_cls):
        if file_budget[c] > slot_counts[c]:
            spill = file_budget[c] - slot_counts[c]
            file_budget[c] = slot_counts[c]
            for d in range(n_cls):
                room = slot_counts[d] - file_budget[d]
                if room > 0:
                    take = min(room, spill)
                    file_budget[d] += take
                    spill -= take
                    if spill == 0:
                        break
    for c in range(n_cls):
        if slot_counts[c] > 0 and not class_entities[c]:
            raise ValidationError(
                f"class {c} receives memories but has no entities; "
                f"raise n_entities or lower n_classes")
        if class_entities[c] and file_budget[c] < len(class_entities[c]):
            raise ValidationError(
                f"class {c}: {file_budget[c]} files for "
                f"{len(class_entities[c])} entities; lower n_entities or "
                f"duplicate_fraction")

    files: list[FileRecord] = []
    entity_files: list[list[int]] = [[] for _ in range(spec.n_entities)]

    def add_file(entity: int) -> FileRecord:
        idx = len(entity_files[entity])
        rec = FileRecord(file_id=len(files), entity=entity,
                         value=entity * 1_000_000 + idx * 1_000,
                         content_hash=f"h{len(files):08d}")
        files.append(rec)
        entity_files[entity].append(rec.file_id)
        return rec

    # per-class instance streams: entity-major and file-cyclic, so one
    # entity's replicas sit in one contiguous slot run with each file
    # recurring at a fixed stride
    streams: list[list[int]] = []
    for c in range(n_cls):
        ents = class_entities[c]
        if not ents:
            streams.append([])
            continue
        per_entity = _apportion(file_budget[c], [1] * len(ents))
        class_files: list[int] = []
        for e, cnt in zip(ents, per_entity):
            for _ in range(cnt):
                class_files.append(add_file(e).file_id)
        copies = {f: 1 for f in class_files}
        spare = slot_counts[c] - len(class_files)
        base_extra, rem = divmod(spare, len(class_files))
        for f in class_files:
            copies[f] += base_extra
        for f in _fair_picks(class_files, rem):
            copies[f] += 1
        stream: list[int] = []
        for e in ents:
            fs = entity_files[e]
            rounds = max(copies[f] for f in fs)
            for r in range(rounds):
                stream.extend(f for f in fs if copies[f] > r)
        streams.append(stream)

    # deal instances to peers in id order
    held: list[set[int]] = [set() for _ in range(n_peers)]
    memories: list[DigitalMemory] = []
    cursors = [0] * n_cls

    def take_from(c: int, peer: int) -> int:
        stream = streams[c]
        i = cursors[c]
        j = i
        while j < len(stream) and stream[j] in held[peer]:
            j += 1
        if j == len(stream):
            raise ValidationError(
                f"class {c} stream exhausted at peer {peer}")
        if j != i:
            stream[i], stream[j] = stream[j], stream[i]
        cursors[c] += 1
        return stream[i]

    def add_memory(peer: int, file_id: int) -> None:
        rec = files[file_id]
        memories.append(DigitalMemory(
            memory_id=len(memories), owner=peer,
            content_hash=rec.content_hash, capture_time=rec.value,
            references=frozenset({entity_ref(rec.entity)}),
            keys={TIME_KEY: rec.value}))
        held[peer].add(file_id)

    for j in range(n_peers):
        prof = profiles[j]
        for s in range(mpp):
            c = prof[(j + s) % memberships]
            add_memory(j, take_from(c, j))

    # multi-position peers: one further (new) file of an entity the peer
    # already holds, giving that peer a second indexing value in the
    # entity's thread
    if spec.multi_position_fraction > 0.0:
        step = max(1, round(1.0 / spec.multi_position_fraction))
        for j in range(0, n_peers, step):
            first = files[_first_file_of(held[j])]
            add_memory(j, add_file(first.entity).file_id)

    holders_by_file: list[list[int]] = [[] for _ in range(len(files))]
    files_by_peer: list[list[int]] = [[] for _ in range(n_peers)]
    hash_to_file = {rec.content_hash: rec.file_id for rec in files}
    for m in memories:
        f = hash_to_file[m.content_hash]
        holders_by_file[f].append(m.owner)
        files_by_peer[m.owner].append(f)
    linear = Placement(n_peers=n_peers, holders_by_file=holders_by_file,
                       files_by_peer=files_by_peer)

    return Dataset(spec=spec, n_peers=n_peers, entity_class=entity_class,
                   files=files, entity_files=entity_files,
                   memories=memories, profiles=profiles,
                   class_slots=class_slots, linear=linear)


def _first_file_of(file_ids: set[int]) -> int:
    return min(file_ids)


def place_random(ds: Dataset, seed: int, run: int = 0) -> Placement:
    """Re-draw every file's holders uniformly at random (same replica
    counts, distinct peers per file)."""
    rng = _rng(STREAM_PLACEMENT, seed, run)
    holders_by_file: list[list[int]] = []
    files_by_peer: list[list[int]] = [[] for _ in range(ds.n_peers)]
    for rec in ds.files:
        count = len(ds.linear.holders_by_file[rec.file_id])
        owners = rng.choice(ds.n_peers, size=count, replace=False)
        owners = sorted(int(o) for o in owners)
        holders_by_file.append(owners)
        for o in owners:
            files_by_peer[o].append(rec.file_id)
    return Placement(n_peers=ds.n_peers, holders_by_file=holders_by_file,
                     files_by_peer=files_by_peer)


def build_workload(ds: Dataset, placement: Placement, count: int,
                   seed: int, run: int = 0) -> list[Query]:
    """Draw query targets and origins.

    Targets are uniform over the file population and identical across
    placements for a given (seed, run); the origin is a uniform pick
    among peers that hold the target's entity but not the target file
    under the given placement.
    """
    rng = _rng(STREAM_WORKLOAD, seed, run)
    entity_holders = ds.entity_holder_sets(placement)
    queries: list[Query] = []
    n_files = len(ds.files)
    for _ in range(count):
        f = int(rng.integers(0, n_files))
        holders = set(placement.holders_by_file[f])
        eligible = [p for p in entity_holders[ds.files[f].entity]
                    if p not in holders]
        pick = int(rng.integers(0, len(eligible) if eligible
                                else placement.n_peers))
        if eligible:
            origin = eligible[pick]
        else:
            # degenerate placement: fall back to any non-holder
            origin = next(p for p in range(placement.n_peers)
                          if p not in holders)
        queries.append(Query(target_file=f, origin=origin))
    return queries


def from_memories(memories: list[DigitalMemory], n_peers: int,
                  spec: DatasetSpec | None = None) -> Dataset:
    """Rebuild the structural views from a flat record list (for
    datasets loaded from disk)."""
    spec = spec or DatasetSpec()
    by_hash: dict[str, FileRecord] = {}
    entity_ids: dict[str, int] = {}
    files: list[FileRecord] = []
    entity_files: list[list[int]] = []
    for m in memories:
        ref = min(m.references)
        if ref not in entity_ids:
            entity_ids[ref] = len(entity_ids)
            entity_files.append([])
        e = entity_ids[ref]
        if m.content_hash not in by_hash:
            rec = FileRecord(file_id=len(files), entity=e,
                             value=int(m.index_value(TIME_KEY)),
                             content_hash=m.content_hash)
            by_hash[m.content_hash] = rec
            files.append(rec)
            entity_files[e].append(rec.file_id)
    entity_class = [0] * len(entity_ids)
    for ref, e in entity_ids.items():
        digits = "".join(ch for ch in ref if ch.isdigit())
        entity_class[e] = (int(digits) if digits else e) % spec.n_classes
    holders_by_file: list[list[int]] = [[] for _ in range(len(files))]
    files_by_peer: list[list[int]] = [[] for _ in range(n_peers)]
    for m in memories:
        f = by_hash[m.content_hash].file_id
        holders_by_file[f].append(m.owner)
        files_by_peer[m.owner].append(f)
    linear = Placement(n_peers=n_peers, holders_by_file=holders_by_file,
                       files_by_peer=files_by_peer)
    return Dataset(spec=spec, n_peers=n_peers, entity_class=entity_class,
                   files=files, entity_files=entity_files,
                   memories=list(memories), profiles=[],
                   class_slots=[], linear=linear)

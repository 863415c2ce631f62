"""Historical storage: reclaimed versions kept as anchors and forward deltas.

Key layout (26 bytes, big-endian)::

    segment:u8  kind:u8  gid:u64  st:u64  ed:u64

with segment V=0x01, E=0x02, VE=0x03 and kind A=0x01 (anchor, full state)
or D=0x02 (delta against the previous version). All anchors of one object
are contiguous and ordered by start time, so the anchor preceding an
instant is one reverse seek away.
"""

from __future__ import annotations

import bisect
import enum
import math
import struct
import threading
from collections import namedtuple
from functools import lru_cache
from dataclasses import dataclass, field

from . import codec
from .errors import CorruptChain, MalformedKey, OutOfOrder
from .kv import OrderedKV
from .timemodel import INF, NEG_INF, legal_check

KEY_LEN = 26
_KEY = struct.Struct(">BBQQQ")
_PREFIX = struct.Struct(">BBQ")
_U64 = struct.Struct(">Q")
_ST = slice(_PREFIX.size, _PREFIX.size + 8)
RETENTION_KEY = b"\x00retention_cutoff"


class Segment(enum.IntEnum):
    V = 0x01
    E = 0x02
    VE = 0x03


class Kind(enum.IntEnum):
    A = 0x01
    D = 0x02


class HistKey(namedtuple("HistKey", "segment kind gid st ed")):
    __slots__ = ()

    @property
    def omega(self):
        return (self.st, self.ed)


def encode_key(key: HistKey) -> bytes:
    segment, kind, gid, st, ed = key
    if not (0 <= gid < 2**64 and NEG_INF <= st < ed <= INF):
        raise ValueError(f"invalid history key {key!r}")
    return _KEY.pack(Segment(segment), Kind(kind), gid, st, ed)


def decode_key(raw: bytes) -> HistKey:
    if len(raw) != KEY_LEN:
        raise MalformedKey(f"history keys are {KEY_LEN} bytes, got {len(raw)}")
    seg, kind, gid, st, ed = _KEY.unpack(raw)
    try:
        seg, kind = Segment(seg), Kind(kind)
    except ValueError:
        raise MalformedKey(f"unknown segment/kind bytes {seg:#04x}/{kind:#04x}") from None
    if st >= ed:
        raise MalformedKey(f"empty lifespan [{st}, {ed}) in key")
    return HistKey(seg, kind, gid, st, ed)


def object_prefix(segment, kind, gid) -> bytes:
    return _PREFIX.pack(segment, kind, gid)


@dataclass(frozen=True)
class AnchorPolicy:
    """How often an object's history stores a full state.

    ``fixed=None`` selects the frequency-tiered interval; ``fixed=1`` stores
    every version in full and ``fixed=math.inf`` only the first one.
    """

    tau1: int = 1000
    tau2: int = 10000
    c: float = 0.01
    fixed: float | None = None

    def __post_init__(self):
        if not 0 < self.tau1 < self.tau2:
            raise ValueError("anchor thresholds need 0 < tau1 < tau2")
        if not self.c > 0:
            raise ValueError("anchor fraction c must be positive")
        if self.fixed is not None and not self.fixed >= 1:
            raise ValueError("fixed anchor interval must be >= 1")

    @classmethod
    def parse(cls, spec: str, tau1=1000, tau2=10000, c=0.01) -> "AnchorPolicy":
        spec = spec.strip().lower()
        if spec == "adaptive":
            return cls(tau1, tau2, c)
        if spec.startswith("fixed:"):
            raw = spec.split(":", 1)[1]
            u = math.inf if raw in ("inf", "infinity") else int(raw)
            if u < 1:
                raise ValueError(f"anchor interval must be >= 1, got {raw}")
            return cls(tau1, tau2, c, fixed=u)
        raise ValueError(f"anchor policy must be 'adaptive' or 'fixed:<u>', got {spec!r}")

    def describe(self) -> str:
        if self.fixed is None:
            return "adaptive"
        return "fixed:inf" if self.fixed == math.inf else f"fixed:{int(self.fixed)}"


def anchor_interval(f: int, policy: AnchorPolicy):
    """Anchor interval for an object that has seen ``f`` updates."""
    if policy.fixed is not None:
        return policy.fixed
    if f <= policy.tau1:
        raw = policy.tau1 * policy.c
    elif f <= policy.tau2:
        raw = policy.tau2 * policy.c
    else:
        raw = policy.tau2 ** 2 / policy.tau1 * policy.c
    return max(1, math.floor(raw + 0.5))


@dataclass
class MigrationMeta:
    f: int = 0
    since_anchor: int = 0
    last_st: int | None = None
    last_ed: int | None = None
    last_state: dict | None = None
    u: float = 1

    def copy(self):
        return MigrationMeta(self.f, self.since_anchor, self.last_st, self.last_ed,
                             self.last_state, self.u)


# -- payload diffs ----------------------------------------------------------

def diff_state(segment, prev: dict, cur: dict) -> dict:
    """Forward delta turning ``prev`` into ``cur``."""
    delta = {}
    if segment == Segment.VE:
        for direction in ("out", "in"):
            old = {e: n for e, n in prev[direction]}
            new = {e: n for e, n in cur[direction]}
            added = sorted([e, n] for e, n in new.items() if old.get(e, None) != n or e not in old)
            removed = sorted(e for e in old if e not in new)
            if added:
                delta[direction + "+"] = added
            if removed:
                delta[direction + "-"] = removed
        return delta
    old, new = prev["props"], cur["props"]
    changed = {k: v for k, v in new.items()
               if k not in old or old[k] != v or type(old[k]) is not type(v)}
    removed = sorted(k for k in old if k not in new)
    if changed:
        delta["set"] = changed
    if removed:
        delta["del"] = removed
    for fixed in ("labels", "type"):
        if fixed in cur and prev.get(fixed) != cur[fixed]:
            delta[fixed] = cur[fixed]
    return delta


def combine(segment, state: dict, delta: dict) -> dict:
    """Apply a forward delta; returns a new state and leaves ``state`` untouched."""
    if segment == Segment.VE:
        out = {}
        for direction in ("out", "in"):
            table = {e: n for e, n in state[direction]}
            for e in delta.get(direction + "-", ()):
                table.pop(e, None)
            for e, n in delta.get(direction + "+", ()):
                table[e] = n
            out[direction] = sorted([e, n] for e, n in table.items())
        return out
    out = dict(state)
    props = dict(state["props"])
    for k in delta.get("del", ()):
        props.pop(k, None)
    props.update(delta.get("set", {}))
    out["props"] = props
    for fixed in ("labels", "type"):
        if fixed in delta:
            out[fixed] = delta[fixed]
    return out


# Stored entries are immutable, so read paths share decoded keys and payloads.
# Payloads returned from here must be treated as read-only.
_read_key = lru_cache(maxsize=1 << 16)(decode_key)
_read_payload = lru_cache(maxsize=1 << 16)(codec.decode)


def _bump(counters, name, n=1):
    if counters is not None:
        counters[name] += n


class HistoryBatch:
    """Stages puts; nothing is visible until the batch is published."""

    def __init__(self, store: "HistoricalStore"):
        self.store = store
        self.puts = []
        self.meta = {}
        self.kinds = {Kind.A: 0, Kind.D: 0}

    def _meta_for(self, segment, gid) -> MigrationMeta:
        slot = (segment, gid)
        m = self.meta.get(slot)
        if m is None:
            m = self.store._meta_for(segment, gid).copy()
            self.meta[slot] = m
        return m

    def put_version(self, segment, gid, omega, state) -> Kind:
        segment = Segment(segment)
        st, ed = omega
        m = self._meta_for(segment, gid)
        if m.last_st is not None and st <= m.last_st:
            raise OutOfOrder(
                f"{segment.name} {gid}: version starting at {st} is not after {m.last_st}"
            )
        u = anchor_interval(m.f, self.store.policy)
        if m.last_state is None or m.last_ed != st or m.since_anchor + 1 >= u:
            kind = Kind.A
            payload = state
            m.since_anchor = 0
        else:
            kind = Kind.D
            payload = diff_state(segment, m.last_state, state)
            m.since_anchor += 1
        m.f += 1
        m.u = u
        m.last_st, m.last_ed, m.last_state = st, ed, state
        self.puts.append((encode_key(HistKey(segment, kind, gid, st, ed)), codec.encode(payload)))
        self.kinds[kind] += 1
        return kind

    def publish(self) -> None:
        store = self.store
        # gids become known before the entries do, so a reader that finds
        # no gid can trust its view holds nothing for it
        for segment, gid in self.meta:
            store._gids[segment].add(gid)
        store.kv.write_batch(self.puts)
        store._meta.update(self.meta)
        self.puts = []
        self.meta = {}


class HistoricalStore:
    def __init__(self, kv: OrderedKV | None = None, policy: AnchorPolicy | None = None):
        self.kv = kv if kv is not None else OrderedKV()
        self.policy = policy or AnchorPolicy()
        self._meta = {}
        self._write_lock = threading.RLock()
        self._gids = {seg: set() for seg in Segment}
        raw = self.kv.get(RETENTION_KEY)
        self.retention_cutoff = _U64.unpack(raw)[0] if raw else NEG_INF
        for key, _ in self.kv.view().items():
            if key[:1] in (b"\x01", b"\x02", b"\x03"):
                hk = decode_key(key)
                self._gids[hk.segment].add(hk.gid)

    # -- writes -------------------------------------------------------------

    def batch(self) -> "_BatchContext":
        return _BatchContext(self)

    def put_version(self, segment, gid, omega, state) -> Kind:
        with self.batch() as b:
            return b.put_version(segment, gid, omega, state)

    def _meta_for(self, segment, gid) -> MigrationMeta:
        m = self._meta.get((segment, gid))
        if m is None:
            m = self._rebuild_meta(segment, gid)
            self._meta[(segment, gid)] = m
        return m

    def _rebuild_meta(self, segment, gid) -> MigrationMeta:
        entries = list(self._object_entries(segment, gid))
        m = MigrationMeta()
        if not entries:
            return m
        state = None
        for hk, raw in entries:
            payload = codec.decode(raw)
            if hk.kind == Kind.A:
                state = payload
                m.since_anchor = 0
            else:
                state = combine(segment, state, payload)
                m.since_anchor += 1
        m.f = len(entries)
        m.last_st, m.last_ed, m.last_state = entries[-1][0].st, entries[-1][0].ed, state
        m.u = anchor_interval(m.f - 1, self.policy)
        return m

    # -- reads --------------------------------------------------------------

    def view(self):
        return self.kv.view()

    def gids(self, segment):
        return set(self._gids[Segment(segment)])

    def _object_entries(self, segment, gid, view=None, after_st=None):
        """Anchor and delta entries of one object merged in start-time order."""
        view = view or self.kv.view()
        keys, data = view.keys, view.data
        n = len(keys)
        a_prefix = object_prefix(segment, Kind.A, gid)
        d_prefix = object_prefix(segment, Kind.D, gid)
        tail = b"" if after_st is None else _U64.pack(after_st + 1)
        ai = bisect.bisect_left(keys, a_prefix + tail)
        di = bisect.bisect_left(keys, d_prefix + tail)
        # keys are big-endian, so start times compare as raw bytes
        while True:
            ak = keys[ai] if ai < n and keys[ai].startswith(a_prefix) else None
            dk = keys[di] if di < n and keys[di].startswith(d_prefix) else None
            if ak is None:
                if dk is None:
                    return
                key, di = dk, di + 1
            elif dk is None or ak[_ST] < dk[_ST]:
                key, ai = ak, ai + 1
            else:
                key, di = dk, di + 1
            yield _read_key(key), data[key]

    def seek_latest_anchor(self, segment, gid, t, view=None, counters=None):
        """Anchor with the greatest start <= ``t``, else the object's earliest anchor."""
        view = view or self.kv.view()
        keys = view.keys
        prefix = object_prefix(segment, Kind.A, gid)
        _bump(counters, "anchors_seeked")
        i = bisect.bisect_right(keys, prefix + _U64.pack(t) + _U64.pack(INF)) - 1
        if i < 0 or not keys[i].startswith(prefix):
            # nothing starts by t: fall back to the earliest anchor
            i += 1
            if i >= len(keys) or not keys[i].startswith(prefix):
                return None
        _bump(counters, "hist_entries_touched")
        return _read_key(keys[i]), _read_payload(view.data[keys[i]])

    def scan_versions_from(self, segment, gid, anchor, cond, view=None, counters=None):
        """Yield ``(omega, state)`` from ``anchor`` forward while versions start <= ``cond.t2``.

        ``anchor`` is the ``(HistKey, state)`` pair returned by
        :meth:`seek_latest_anchor`. Later anchors replace the running state.
        """
        view = view or self.kv.view()
        akey, state = anchor
        yield akey.omega, state
        prev_ed = akey.ed
        for hk, raw in self._object_entries(segment, gid, view, after_st=akey.st):
            if hk.st > cond[1]:
                return
            _bump(counters, "hist_entries_touched")
            payload = _read_payload(raw)
            if hk.kind == Kind.A:
                state = payload
            else:
                if hk.st != prev_ed:
                    raise CorruptChain(
                        f"{Segment(segment).name} {gid}: delta at {hk.st} has no predecessor "
                        f"(previous version ended at {prev_ed})"
                    )
                state = combine(segment, state, payload)
                _bump(counters, "deltas_applied")
            prev_ed = hk.ed
            yield hk.omega, state

    def fetch(self, segment, gid, cond, counters=None, view=None):
        """All reclaimed versions of one object legal under ``cond``."""
        view = view or self.kv.view()
        if gid not in self._gids[Segment(segment)]:
            return []
        anchor = self.seek_latest_anchor(segment, gid, cond[0], view, counters)
        if anchor is None:
            return []
        _bump(counters, "reconstructions")
        return [(omega, state)
                for omega, state in self.scan_versions_from(segment, gid, anchor, cond, view, counters)
                if legal_check(omega, cond)]

    def all_versions(self, segment, gid, view=None):
        """Every reclaimed version of one object, reconstructed, oldest first."""
        out = []
        state = None
        for hk, raw in self._object_entries(segment, gid, view):
            payload = _read_payload(raw)
            state = payload if hk.kind == Kind.A else combine(segment, state, payload)
            out.append((hk, state))
        return out

    # -- maintenance ----------------------------------------------------------

    def purge(self, retention_period: int, now: int) -> int:
        """Drop versions that ended before ``now - retention_period``.

        An expired prefix is kept from the last anchor that retained deltas
        still build on. ``retention_period == 0`` keeps everything.
        """
        if retention_period <= 0 or now <= retention_period:
            return 0
        cutoff = now - retention_period
        with self._write_lock:
            view = self.kv.view()
            doomed = []
            reset = []
            for segment in Segment:
                for gid in sorted(self._gids[segment]):
                    entries = [(hk, key) for hk, key in self._keys_of(segment, gid, view)]
                    if not entries:
                        continue
                    keep_from = next((i for i, (hk, _) in enumerate(entries) if hk.ed >= cutoff), None)
                    if keep_from is None:
                        doomed.extend(k for _, k in entries)
                        reset.append((segment, gid))
                        continue
                    base = keep_from
                    while base > 0 and entries[base][0].kind != Kind.A:
                        base -= 1
                    doomed.extend(k for _, k in entries[:base])
            new_cutoff = max(cutoff, self.retention_cutoff)
            self.kv.write_batch([(RETENTION_KEY, _U64.pack(new_cutoff))], doomed)
            self.retention_cutoff = new_cutoff
            for slot in reset:
                self._meta.pop(slot, None)
                self._gids[slot[0]].discard(slot[1])
            if self.kv.garbage_ratio() > 0.5:
                self.kv.compact()
            return len(doomed)

    def _keys_of(self, segment, gid, view):
        pairs = []
        for kind in (Kind.A, Kind.D):
            prefix = object_prefix(segment, kind, gid)
            pairs.extend((decode_key(k), k) for k, _ in view.scan(prefix, prefix))
        pairs.sort(key=lambda p: p[0].st)
        return pairs

    def stats(self) -> dict:
        per = {seg.name: {"bytes": 0, "anchors": 0, "deltas": 0} for seg in Segment}
        for key, value in self.kv.view().items():
            if key[:1] not in (b"\x01", b"\x02", b"\x03"):
                continue
            seg = per[Segment(key[0]).name]
            seg["bytes"] += len(key) + len(value)
            if key[1] == Kind.A:
                seg["anchors"] += 1
            else:
                seg["deltas"] += 1
        return {
            "bytes_total": sum(s["bytes"] for s in per.values()),
            "anchor_count": sum(s["anchors"] for s in per.values()),
            "delta_count": sum(s["deltas"] for s in per.values()),
            "per_segment": per,
        }

    def max_timestamp(self) -> int:
        best = NEG_INF
        for key in self.kv.view().keys:
            if key[:1] in (b"\x01", b"\x02", b"\x03"):
                hk = decode_key(key)
                best = max(best, hk.st, hk.ed if hk.ed != INF else NEG_INF)
        return max(best, self.retention_cutoff)

    def max_gid(self, segment) -> int:
        gids = self._gids[Segment(segment)]
        return max(gids) if gids else 0


class _BatchContext:
    def __init__(self, store: HistoricalStore):
        self.store = store
        self.batch = None

    def __enter__(self) -> HistoryBatch:
        self.store._write_lock.acquire()
        self.batch = HistoryBatch(self.store)
        return self.batch

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.batch.publish()
        finally:
            self.store._write_lock.release()
        return False

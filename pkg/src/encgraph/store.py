"""Cloud-side ciphertext store with per-graph persistence.

On disk every graph gets its own directory holding ``manifest.json`` (the
meta plus the overwrite audit log) and ``entries.bin``, a sequence of
``row:4 | col:4 | len:4 | blob`` records sorted by key.  Packed rows use
col = 0xFFFFFFFF.
"""
import json
import os
import re
import struct
import threading
from dataclasses import asdict, dataclass, field

from . import paillier, rlwe
from .errors import (
    DimensionError,
    EncGraphError,
    ParameterError,
    SchemeMismatchError,
    UnregisteredGraphError,
)

SCHEME_AHE = "ahe"
SCHEME_SHE = "she-packed"
STORAGE_DENSE = "dense"
STORAGE_DP_SPARSE = "dp_sparse"
STORAGE_PACKED = "packed"

_TAGS = {SCHEME_AHE: paillier.SCHEME_TAG, SCHEME_SHE: rlwe.SCHEME_TAG}
_PACKED_COL = 0xFFFFFFFF
_SAFE_ID = re.compile(r"^[A-Za-z0-9_.-]{1,128}$")


class DuplicateEntryError(EncGraphError):
    pass


@dataclass
class GraphMeta:
    """Public description of an encrypted graph.

    ``public`` holds the public material the cloud computes with: the
    Paillier public key JSON for AHE, the RLWE parameter JSON for SHE.
    """

    n: int
    scheme: str
    storage: str
    scale_exp: int = 0
    symmetric: bool = False
    histogram: dict = None
    public: str = ""
    weight_bound: float = 1.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scheme not in _TAGS:
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.storage not in (STORAGE_DENSE, STORAGE_DP_SPARSE, STORAGE_PACKED):
            raise ParameterError(f"unknown storage mode {self.storage!r}")
        if (self.scheme == SCHEME_SHE) != (self.storage == STORAGE_PACKED):
            raise ParameterError("packed storage goes with the she-packed scheme only")
        if self.n < 1:
            raise ParameterError("graph must have at least one node")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def public_key(self):
        return paillier.PaillierPublicKey.from_json(self.public)

    def she_params(self):
        return rlwe.ShParams.from_json(self.public)


class EncryptedGraphStore:
    def __init__(self):
        self._lock = threading.RLock()
        self._meta = {}
        self._entries = {}
        self._audit = {}
        self._version = {}

    # registration -------------------------------------------------------

    def register(self, graph_id, meta):
        if not _SAFE_ID.match(graph_id):
            raise ParameterError(f"graph id {graph_id!r} must match {_SAFE_ID.pattern}")
        with self._lock:
            old = self._meta.get(graph_id)
            if old is not None and old != meta:
                raise SchemeMismatchError(f"graph {graph_id!r} is already registered with different meta")
            if old is None:
                self._meta[graph_id] = meta
                self._entries[graph_id] = {}
                self._audit[graph_id] = []
                self._version[graph_id] = 0

    def meta(self, graph_id):
        try:
            return self._meta[graph_id]
        except KeyError:
            raise UnregisteredGraphError(f"graph {graph_id!r} is not registered") from None

    def graphs(self):
        return sorted(self._meta)

    # entries ------------------------------------------------------------

    def _check_key(self, meta, key):
        if meta.storage == STORAGE_PACKED:
            if not isinstance(key, int) or not 0 <= key < meta.n:
                raise DimensionError(f"packed row key {key!r} outside 0..{meta.n - 1}")
            return key
        r, c = (int(v) for v in key)
        if not (0 <= r < meta.n and 0 <= c < meta.n):
            raise DimensionError(f"entry ({r}, {c}) outside a {meta.n}-node graph")
        if meta.symmetric and c < r:
            raise DimensionError(f"symmetric graph stores col >= row only, got ({r}, {c})")
        return (r, c)

    def put(self, graph_id, key, blob, scheme):
        """Insert one ciphertext blob; returns True if it overwrote an entry."""
        blob = bytes(blob)
        with self._lock:
            meta = self.meta(graph_id)
            if scheme != meta.scheme:
                raise SchemeMismatchError(f"graph {graph_id!r} holds {meta.scheme}, got {scheme}")
            if not blob or blob[0] != _TAGS[meta.scheme]:
                raise SchemeMismatchError(f"blob scheme tag does not match {meta.scheme}")
            key = self._check_key(meta, key)
            entries = self._entries[graph_id]
            overwrote = key in entries
            if overwrote:
                if meta.storage == STORAGE_DP_SPARSE:
                    raise DuplicateEntryError(f"entry {key} already submitted to {graph_id!r}")
                self._audit[graph_id].append(f"overwrite {_key_text(key)} len={len(blob)}")
            entries[key] = blob
            self._version[graph_id] += 1
            return overwrote

    def put_many(self, graph_id, items, scheme):
        """All-or-nothing batch insert; returns the number of items stored."""
        with self._lock:
            self.meta(graph_id)
            before = dict(self._entries[graph_id])
            audit_len = len(self._audit[graph_id])
            try:
                for key, blob in items:
                    self.put(graph_id, key, blob, scheme)
            except Exception:
                self._entries[graph_id] = before
                del self._audit[graph_id][audit_len:]
                raise
            return len(items)

    def get(self, graph_id, key):
        with self._lock:
            meta = self.meta(graph_id)
            return self._entries[graph_id][self._check_key(meta, key)]

    def entries(self, graph_id):
        with self._lock:
            self.meta(graph_id)
            return dict(self._entries[graph_id])

    def audit_log(self, graph_id):
        with self._lock:
            return list(self._audit[graph_id])

    def version(self, graph_id):
        return self._version[graph_id]

    def size(self, graph_id):
        with self._lock:
            return len(self._entries[graph_id])

    def bytes_stored(self, graph_id):
        with self._lock:
            return sum(len(b) for b in self._entries[graph_id].values())

    # persistence --------------------------------------------------------

    def save(self, root):
        with self._lock:
            for gid in self._meta:
                gdir = os.path.join(root, gid)
                os.makedirs(gdir, exist_ok=True)
                manifest = {"meta": self._meta[gid].to_dict(), "audit": self._audit[gid]}
                _atomic_write(gdir, "manifest.json", json.dumps(manifest, indent=1, sort_keys=True).encode())
                _atomic_write(gdir, "entries.bin", encode_entries(self._entries[gid]))

    @classmethod
    def load(cls, root):
        store = cls()
        if not os.path.isdir(root):
            return store
        for gid in sorted(os.listdir(root)):
            gdir = os.path.join(root, gid)
            mpath = os.path.join(gdir, "manifest.json")
            if not os.path.isfile(mpath):
                continue
            with open(mpath, "rb") as fh:
                manifest = json.loads(fh.read())
            store.register(gid, GraphMeta.from_dict(manifest["meta"]))
            store._audit[gid] = list(manifest.get("audit", []))
            with open(os.path.join(gdir, "entries.bin"), "rb") as fh:
                store._entries[gid] = decode_entries(fh.read())
        return store


def _key_text(key):
    return f"row {key}" if isinstance(key, int) else f"({key[0]}, {key[1]})"


def _sort_key(key):
    return (key, _PACKED_COL) if isinstance(key, int) else key


def encode_entries(entries):
    out = []
    for key in sorted(entries, key=_sort_key):
        r, c = _sort_key(key)
        blob = entries[key]
        out.append(struct.pack(">III", r, c, len(blob)))
        out.append(blob)
    return b"".join(out)


def decode_entries(data):
    entries = {}
    pos = 0
    while pos < len(data):
        if pos + 12 > len(data):
            raise ParameterError(f"entries file truncated at byte {pos}")
        r, c, n = struct.unpack_from(">III", data, pos)
        pos += 12
        if pos + n > len(data):
            raise ParameterError(f"entries file truncated at byte {pos}")
        entries[r if c == _PACKED_COL else (r, c)] = data[pos : pos + n]
        pos += n
    return entries


def _atomic_write(directory, name, data):
    tmp = os.path.join(directory, f".{name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, os.path.join(directory, name))

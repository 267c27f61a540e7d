"""Hash-chained name-service ledger with Bind / Update / Verify / Search.

Mapping records come in three classes:

* Class I binds a primary-layer participant (RSU, edge server, cloud
  server) to its network identifier. One signature, by the
  participant's key.
* Class II binds a vehicle to one of its gateway-capable (Type I)
  units, with a label naming the unit's function. Two signatures:
  vehicle, then unit.
* Class III additionally binds an exported intra-vehicle (Type IIA)
  unit reachable through that gateway. Three signatures: vehicle,
  gateway unit, exported unit.

Records are staged by ``bind``/``update`` and become visible to
``search`` only after ``commit_block`` appends them to the hash chain.
The latest record per (participant, class, label) key wins; ties on
timestamp are broken by block height, then by position within the
block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Optional

from .identity import (
    BlockchainAddress,
    NetworkAddress,
    PublicKey,
    Signature,
    SignatureScheme,
    DEFAULT_SCHEME,
    Keypair,
    encode_fields,
    sha256,
)

__all__ = [
    "RecordClass",
    "MappingRecord",
    "Block",
    "Ledger",
    "LedgerError",
    "AlreadyBound",
    "NotBound",
    "StaleTimestamp",
    "BadSignature",
    "MalformedRecord",
    "NotFound",
    "build_class_i",
    "build_class_ii",
    "build_class_iii",
    "GENESIS_PREV_HASH",
]

GENESIS_PREV_HASH = bytes(32)


class LedgerError(Exception):
    """Base class for name-service failures."""


class AlreadyBound(LedgerError):
    pass


class NotBound(LedgerError):
    pass


class StaleTimestamp(LedgerError):
    pass


class BadSignature(LedgerError):
    pass


class MalformedRecord(LedgerError):
    pass


class NotFound(LedgerError):
    pass


class RecordClass(Enum):
    I = 1
    II = 2
    III = 3


# Fields that must be present (beyond bcadd_p), per record class.
_CLASS_FIELDS = {
    RecordClass.I: ("add_p",),
    RecordClass.II: ("bcadd_ui", "add_ui", "label_ui"),
    RecordClass.III: ("bcadd_ui", "add_ui", "label_ui", "bcadd_uiia", "add_uiia", "label_uiia"),
}
_ALL_OPTIONAL = ("add_p", "bcadd_ui", "add_ui", "label_ui", "bcadd_uiia", "add_uiia", "label_uiia")

SIGNATURE_ARITY = {RecordClass.I: 1, RecordClass.II: 2, RecordClass.III: 3}


@dataclass(frozen=True, slots=True)
class MappingRecord:
    """One signed name-service binding.

    Field presence depends on ``record_class``; fields not belonging to
    the class must be ``None``. ``signatures`` are ordered: participant
    first, then gateway unit, then exported unit.
    """

    record_class: RecordClass
    bcadd_p: BlockchainAddress
    timestamp: int
    signatures: tuple[Signature, ...]
    add_p: Optional[NetworkAddress] = None
    bcadd_ui: Optional[BlockchainAddress] = None
    add_ui: Optional[NetworkAddress] = None
    label_ui: Optional[str] = None
    bcadd_uiia: Optional[BlockchainAddress] = None
    add_uiia: Optional[NetworkAddress] = None
    label_uiia: Optional[str] = None

    def signing_bytes(self) -> bytes:
        """Canonical bytes covered by every signature: the mapping plus timestamp."""
        return encode_fields(
            self.record_class.value,
            self.bcadd_p,
            self.add_p,
            self.bcadd_ui,
            self.add_ui,
            self.label_ui,
            self.bcadd_uiia,
            self.add_uiia,
            self.label_uiia,
            self.timestamp,
        )

    def encode(self) -> bytes:
        """Full canonical encoding including signatures (used for block hashing)."""
        return self.signing_bytes() + encode_fields(*self.signatures)

    @property
    def key_label(self) -> Optional[str]:
        if self.record_class is RecordClass.II:
            return self.label_ui
        if self.record_class is RecordClass.III:
            return self.label_uiia
        return None

    def key(self) -> tuple[bytes, RecordClass, Optional[str]]:
        return (self.bcadd_p.data, self.record_class, self.key_label)

    def signer_addresses(self) -> tuple[BlockchainAddress, ...]:
        """Required signers, in signature order."""
        if self.record_class is RecordClass.I:
            return (self.bcadd_p,)
        if self.record_class is RecordClass.II:
            return (self.bcadd_p, self.bcadd_ui)
        return (self.bcadd_p, self.bcadd_ui, self.bcadd_uiia)

    def check_shape(self) -> None:
        required = _CLASS_FIELDS[self.record_class]
        for name in _ALL_OPTIONAL:
            value = getattr(self, name)
            if name in required and value is None:
                raise MalformedRecord(f"class {self.record_class.name} record missing {name}")
            if name not in required and value is not None:
                raise MalformedRecord(f"class {self.record_class.name} record must not carry {name}")
        if len(self.signatures) != SIGNATURE_ARITY[self.record_class]:
            raise MalformedRecord(
                f"class {self.record_class.name} record needs "
                f"{SIGNATURE_ARITY[self.record_class]} signatures, got {len(self.signatures)}"
            )

    # JSON wire form ------------------------------------------------------

    def to_json(self) -> dict:
        def addr(a: Optional[NetworkAddress]):
            return None if a is None else {"kind": a.kind.name.lower(), "value": a.value}

        return {
            "class": self.record_class.name,
            "bcadd_p": self.bcadd_p.hex(),
            "add_p": addr(self.add_p),
            "bcadd_ui": self.bcadd_ui.hex() if self.bcadd_ui else None,
            "add_ui": addr(self.add_ui),
            "label_ui": self.label_ui,
            "bcadd_uiia": self.bcadd_uiia.hex() if self.bcadd_uiia else None,
            "add_uiia": addr(self.add_uiia),
            "label_uiia": self.label_uiia,
            "timestamp": self.timestamp,
            "signatures": [s.hex() for s in self.signatures],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MappingRecord":
        from .identity import AddressKind

        def addr(a):
            return None if a is None else NetworkAddress(AddressKind[a["kind"].upper()], a["value"])

        def bcadd(h):
            return None if h is None else BlockchainAddress.from_hex(h)

        return cls(
            record_class=RecordClass[obj["class"]],
            bcadd_p=BlockchainAddress.from_hex(obj["bcadd_p"]),
            timestamp=obj["timestamp"],
            signatures=tuple(Signature(bytes.fromhex(s)) for s in obj["signatures"]),
            add_p=addr(obj.get("add_p")),
            bcadd_ui=bcadd(obj.get("bcadd_ui")),
            add_ui=addr(obj.get("add_ui")),
            label_ui=obj.get("label_ui"),
            bcadd_uiia=bcadd(obj.get("bcadd_uiia")),
            add_uiia=addr(obj.get("add_uiia")),
            label_uiia=obj.get("label_uiia"),
        )


def _signed(record: MappingRecord, signers: Iterable[Keypair]) -> MappingRecord:
    body = record.signing_bytes()
    return replace(record, signatures=tuple(kp.sign(body) for kp in signers))


def build_class_i(participant: Keypair, add_p: NetworkAddress, timestamp: int) -> MappingRecord:
    rec = MappingRecord(
        record_class=RecordClass.I,
        bcadd_p=participant.bcadd,
        timestamp=timestamp,
        signatures=(),
        add_p=add_p,
    )
    return _signed(rec, [participant])


def build_class_ii(
    vehicle: Keypair, unit: Keypair, add_ui: NetworkAddress, label_ui: str, timestamp: int
) -> MappingRecord:
    rec = MappingRecord(
        record_class=RecordClass.II,
        bcadd_p=vehicle.bcadd,
        timestamp=timestamp,
        signatures=(),
        bcadd_ui=unit.bcadd,
        add_ui=add_ui,
        label_ui=label_ui,
    )
    return _signed(rec, [vehicle, unit])


def build_class_iii(
    vehicle: Keypair,
    gateway: Keypair,
    add_ui: NetworkAddress,
    label_ui: str,
    exported: Keypair,
    add_uiia: NetworkAddress,
    label_uiia: str,
    timestamp: int,
) -> MappingRecord:
    rec = MappingRecord(
        record_class=RecordClass.III,
        bcadd_p=vehicle.bcadd,
        timestamp=timestamp,
        signatures=(),
        bcadd_ui=gateway.bcadd,
        add_ui=add_ui,
        label_ui=label_ui,
        bcadd_uiia=exported.bcadd,
        add_uiia=add_uiia,
        label_uiia=label_uiia,
    )
    return _signed(rec, [vehicle, gateway, exported])


@dataclass(frozen=True, slots=True)
class Block:
    height: int
    prev_hash: bytes
    records: tuple[MappingRecord, ...]
    block_hash: bytes

    @staticmethod
    def compute_hash(height: int, prev_hash: bytes, records: tuple[MappingRecord, ...]) -> bytes:
        return sha256(encode_fields(height, prev_hash, *(r.encode() for r in records)))

    @classmethod
    def make(cls, height: int, prev_hash: bytes, records: tuple[MappingRecord, ...]) -> "Block":
        return cls(height, prev_hash, records, cls.compute_hash(height, prev_hash, records))

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "records": [r.to_json() for r in self.records],
            "block_hash": self.block_hash.hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Block":
        return cls(
            height=obj["height"],
            prev_hash=bytes.fromhex(obj["prev_hash"]),
            records=tuple(MappingRecord.from_json(r) for r in obj["records"]),
            block_hash=bytes.fromhex(obj["block_hash"]),
        )


# Index entries order by (timestamp, height, intra-block position): latest wins.
_IndexEntry = tuple[int, int, int, MappingRecord]


class Ledger:
    """Append-only hash-chained record store with a latest-record index.

    Single-writer: mutation happens only inside the simulation event
    loop (or a test). Committed state is safe to read concurrently.
    """

    def __init__(self, scheme: SignatureScheme = None):
        self.scheme = scheme or DEFAULT_SCHEME
        genesis = Block.make(0, GENESIS_PREV_HASH, ())
        self.blocks: list[Block] = [genesis]
        self._index: dict[tuple, _IndexEntry] = {}
        self._staged: list[MappingRecord] = []
        self._staged_latest: dict[tuple, int] = {}  # key -> newest staged timestamp
        self._keys: dict[bytes, PublicKey] = {}

    # key directory -------------------------------------------------------

    def register_key(self, pk: PublicKey) -> BlockchainAddress:
        """Admit a public key to the verification directory.

        Self-authenticating: the key is indexed under the address it
        hashes to, so no one can register a key for someone else's
        address.
        """
        bcadd = self.scheme.address_of(pk)
        self._keys[bcadd.data] = pk
        return bcadd

    def resolve_key(self, bcadd: BlockchainAddress) -> Optional[PublicKey]:
        return self._keys.get(bcadd.data)

    # validation ------------------------------------------------------------

    def validate(self, record: MappingRecord) -> None:
        record.check_shape()
        body = record.signing_bytes()
        for signer, sig in zip(record.signer_addresses(), record.signatures):
            pk = self.resolve_key(signer)
            if pk is None or not self.scheme.verify(pk, body, sig):
                raise BadSignature(f"signature by {signer!r} does not verify")

    # name-service operations ------------------------------------------------

    def bind(self, record: MappingRecord) -> None:
        key = record.key()
        if key in self._index or key in self._staged_latest:
            raise AlreadyBound(f"key already bound: {record.record_class.name}/{record.key_label}")
        self.validate(record)
        self._stage(record)

    def update(self, record: MappingRecord) -> None:
        key = record.key()
        current = self._staged_latest.get(key)
        if current is None and key in self._index:
            current = self._index[key][0]
        if current is None:
            raise NotBound(f"no record bound for {record.record_class.name}/{record.key_label}")
        if record.timestamp <= current:
            raise StaleTimestamp(f"timestamp {record.timestamp} not newer than {current}")
        self.validate(record)
        self._stage(record)

    def _stage(self, record: MappingRecord) -> None:
        self._staged.append(record)
        self._staged_latest[record.key()] = record.timestamp

    def verify_mapping(self, claim: MappingRecord) -> bool:
        """True iff ``claim`` byte-equals the currently indexed record for its key."""
        entry = self._index.get(claim.key())
        return entry is not None and entry[3].encode() == claim.encode()

    def search(
        self,
        bcadd_p: BlockchainAddress,
        record_class: RecordClass,
        label: Optional[str] = None,
    ) -> list[MappingRecord]:
        """Latest records for the participant and class; all labels when ``label`` is None."""
        if label is not None:
            entry = self._index.get((bcadd_p.data, record_class, label))
            if entry is None:
                raise NotFound(f"{record_class.name}/{label} not bound")
            return [entry[3]]
        hits = [
            entry[3]
            for (addr, cls, _), entry in sorted(self._index.items(), key=lambda kv: (kv[0][2] or ""))
            if addr == bcadd_p.data and cls is record_class
        ]
        if not hits:
            raise NotFound(f"no class {record_class.name} records for participant")
        return hits

    def resolve_entity(self, bcadd: BlockchainAddress) -> list[MappingRecord]:
        """Latest records that register ``bcadd`` in any role (participant, gateway, exported unit).

        Used when establishing sessions: a handshake peer is known only
        by its address, and its reachable network identifier lives in
        whichever record registered it.
        """
        out = []
        for entry in self._index.values():
            rec = entry[3]
            if bcadd in (rec.bcadd_p, rec.bcadd_ui, rec.bcadd_uiia):
                out.append(rec)
        out.sort(key=lambda r: (r.record_class.value, r.key_label or ""))
        return out

    # chain operations --------------------------------------------------------

    def commit_block(self, staged: Optional[list[MappingRecord]] = None) -> Block:
        """Append one block holding the staged records and refresh the index."""
        records = tuple(self._staged if staged is None else staged)
        if staged is None:
            self._staged = []
            self._staged_latest = {}
        tip = self.blocks[-1]
        block = Block.make(tip.height + 1, tip.block_hash, records)
        self.blocks.append(block)
        for pos, rec in enumerate(block.records):
            self._reindex(rec, block.height, pos)
        return block

    def _reindex(self, rec: MappingRecord, height: int, pos: int) -> None:
        key = rec.key()
        candidate = (rec.timestamp, height, pos, rec)
        current = self._index.get(key)
        if current is None or candidate[:3] >= current[:3]:
            self._index[key] = candidate

    def verify_chain(self) -> bool:
        """True iff every block hash recomputes and the chain links back to genesis."""
        prev = GENESIS_PREV_HASH
        for block in self.blocks:
            if block.prev_hash != prev:
                return False
            if Block.compute_hash(block.height, block.prev_hash, block.records) != block.block_hash:
                return False
            prev = block.block_hash
        return True

    def first_bad_height(self) -> Optional[int]:
        """Height of the first block that fails verification, or None."""
        prev = GENESIS_PREV_HASH
        for block in self.blocks:
            ok = (
                block.prev_hash == prev
                and Block.compute_hash(block.height, block.prev_hash, block.records)
                == block.block_hash
            )
            if not ok:
                return block.height
            prev = block.block_hash
        return None

    def all_committed(self) -> list[MappingRecord]:
        return [rec for block in self.blocks for rec in block.records]

    # export ------------------------------------------------------------------

    def export_json(self) -> str:
        return json.dumps([b.to_json() for b in self.blocks], indent=2, sort_keys=True)

    @classmethod
    def import_json(cls, text: str, scheme: SignatureScheme = None) -> "Ledger":
        blocks = [Block.from_json(obj) for obj in json.loads(text)]
        ledger = cls(scheme)
        ledger.blocks = blocks
        for block in blocks:
            for pos, rec in enumerate(block.records):
                ledger._reindex(rec, block.height, pos)
        return ledger

"""Keys, blockchain addresses, network identifiers, and signature schemes.

Every entity in the network (RSU, edge server, vehicle, in-vehicle unit,
cloud server) owns a 32-byte secret key. Its public key and its 20-byte
blockchain address (BCADD) derive deterministically from that secret, so
a fixed scenario seed reproduces identical identities run after run.

Signing is pluggable. Two schemes ship with the package:

* :class:`KeyedDigestScheme` (the default) is a simulation-grade ideal
  scheme: a signature is an HMAC-SHA256 tag over the message, and
  verification resolves the signer's secret through a process-local
  registry populated at keypair creation. It is deterministic, fast,
  and unforgeable without the secret key, but only meaningful inside a
  single process.
* :class:`Ed25519Scheme` provides real asymmetric signatures (and
  X25519 sealed boxes) via the ``cryptography`` package, behind the
  same interface.

The canonical byte serialization used for signing is normative:
length-prefixed field concatenation in declaration order, integers as
8-byte big-endian. Two independent implementations must produce the
same bytes for the same record.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Optional, Union

__all__ = [
    "SecretKey",
    "PublicKey",
    "BlockchainAddress",
    "Signature",
    "Nonce",
    "AddressKind",
    "NetworkAddress",
    "Keypair",
    "SignatureScheme",
    "KeyedDigestScheme",
    "Ed25519Scheme",
    "DEFAULT_SCHEME",
    "encode_fields",
    "derive_address",
    "sign",
    "verify",
    "new_nonce",
]

SECRET_KEY_LEN = 32
ADDRESS_LEN = 20
NONCE_LEN = 16


@dataclass(frozen=True, slots=True)
class SecretKey:
    """Opaque 32-byte signing secret. Never serialized into records or wire messages."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != SECRET_KEY_LEN:
            raise ValueError(f"secret key must be {SECRET_KEY_LEN} bytes")

    def __repr__(self) -> str:  # keep secrets out of traces and assertion output
        return "SecretKey(<redacted>)"


@dataclass(frozen=True, slots=True)
class PublicKey:
    data: bytes

    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True, slots=True)
class BlockchainAddress:
    """20-byte digest of a public key, the entity's on-chain identity (BCADD)."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != ADDRESS_LEN:
            raise ValueError(f"blockchain address must be {ADDRESS_LEN} bytes")

    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, text: str) -> "BlockchainAddress":
        return cls(bytes.fromhex(text))

    def __repr__(self) -> str:
        return f"BCADD({self.data.hex()[:8]})"


@dataclass(frozen=True, slots=True)
class Signature:
    data: bytes

    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True, slots=True)
class Nonce:
    """16-byte handshake freshness value, drawn from the seeded simulation RNG."""

    data: bytes

    def __post_init__(self):
        if len(self.data) != NONCE_LEN:
            raise ValueError(f"nonce must be {NONCE_LEN} bytes")

    def hex(self) -> str:
        return self.data.hex()


def new_nonce(rng: Random) -> Nonce:
    return Nonce(rng.randbytes(NONCE_LEN))


class AddressKind(Enum):
    """How a network identifier is reachable."""

    WIRELESS_DIRECT = 1
    INTERNET = 2


@dataclass(frozen=True, slots=True)
class NetworkAddress:
    """A network interface identifier (ADD) bound to a BCADD in mapping records.

    Wireless-direct addresses are only routable between entities within
    radio range; internet addresses are routable globally.
    """

    kind: AddressKind
    value: str

    def encode(self) -> bytes:
        return bytes([self.kind.value]) + self.value.encode("utf-8")

    @classmethod
    def decode(cls, raw: bytes) -> "NetworkAddress":
        return cls(AddressKind(raw[0]), raw[1:].decode("utf-8"))


Encodable = Union[bytes, int, str, None, PublicKey, BlockchainAddress, Signature, Nonce, NetworkAddress]


def _field_bytes(value: Encodable) -> bytes:
    if isinstance(value, bytes):
        return value
    if isinstance(value, int):
        return value.to_bytes(8, "big")
    if isinstance(value, str):
        return value.encode("utf-8")
    if isinstance(value, NetworkAddress):
        return value.encode()
    if isinstance(value, (PublicKey, BlockchainAddress, Signature, Nonce)):
        return value.data
    raise TypeError(f"cannot canonically encode {type(value).__name__}")


def encode_fields(*fields: Encodable) -> bytes:
    """Canonical signing serialization: length-prefixed concatenation in order.

    ``None`` fields (absent optional fields) are skipped entirely.
    Integers are fixed 8-byte big-endian; every field is prefixed with a
    4-byte big-endian length. This layout is normative for signatures
    and block hashes.
    """
    out = bytearray()
    for f in fields:
        if f is None:
            continue
        data = _field_bytes(f)
        out += len(data).to_bytes(4, "big")
        out += data
    return bytes(out)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class SignatureScheme:
    """Interface shared by all signature/sealed-box schemes."""

    name = "abstract"

    def keypair_from_seed(self, seed: bytes) -> "Keypair":
        raise NotImplementedError

    def derive_public(self, sk: SecretKey) -> PublicKey:
        raise NotImplementedError

    def sign(self, sk: SecretKey, message: bytes) -> Signature:
        raise NotImplementedError

    def verify(self, pk: PublicKey, message: bytes, sig: Signature) -> bool:
        raise NotImplementedError

    def seal(self, pk: PublicKey, plaintext: bytes, rng: Random) -> bytes:
        """Encrypt ``plaintext`` so only the holder of the matching secret can open it."""
        raise NotImplementedError

    def unseal(self, sk: SecretKey, sealed: bytes) -> bytes:
        """Inverse of :meth:`seal`. Raises ``ValueError`` on tampering."""
        raise NotImplementedError

    # shared helpers -----------------------------------------------------

    def address_of(self, pk: PublicKey) -> BlockchainAddress:
        return BlockchainAddress(sha256(pk.data)[:ADDRESS_LEN])

    def derive_address(self, sk: SecretKey) -> BlockchainAddress:
        return self.address_of(self.derive_public(sk))


class KeyedDigestScheme(SignatureScheme):
    """Deterministic simulation-grade scheme: signature = HMAC-SHA256(secret, message).

    Verification resolves the signer's secret from a registry keyed by
    public key, populated when the keypair is created through this
    scheme instance. Within one process this behaves like an ideal
    signature: nothing verifies unless it was produced with the matching
    secret over exactly the same bytes. Sealed boxes use the same
    registry trapdoor, with an ephemeral value drawn from the caller's
    RNG so repeated seals of one plaintext differ.
    """

    name = "keyed-digest"
    _SIG_LEN = 32
    _EPH_LEN = 16
    _TAG_LEN = 32

    def __init__(self):
        self._secrets: dict[bytes, bytes] = {}

    def keypair_from_seed(self, seed: bytes) -> "Keypair":
        sk = SecretKey(sha256(b"sk:" + seed))
        pk = self.derive_public(sk)
        self._secrets[pk.data] = sk.data
        return Keypair(sk=sk, pk=pk, bcadd=self.address_of(pk), scheme=self)

    def derive_public(self, sk: SecretKey) -> PublicKey:
        return PublicKey(sha256(b"pk:" + sk.data))

    def sign(self, sk: SecretKey, message: bytes) -> Signature:
        return Signature(hmac.new(sk.data, message, hashlib.sha256).digest())

    def verify(self, pk: PublicKey, message: bytes, sig: Signature) -> bool:
        secret = self._secrets.get(pk.data)
        if secret is None:
            return False
        expected = hmac.new(secret, message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, sig.data)

    def _keystream(self, key: bytes, length: int) -> bytes:
        out = bytearray()
        counter = 0
        while len(out) < length:
            out += sha256(key + counter.to_bytes(8, "big"))
            counter += 1
        return bytes(out[:length])

    def seal(self, pk: PublicKey, plaintext: bytes, rng: Random) -> bytes:
        secret = self._secrets.get(pk.data)
        if secret is None:
            raise ValueError("unknown recipient public key")
        eph = rng.randbytes(self._EPH_LEN)
        key = sha256(b"box:" + secret + eph)
        ct = bytes(a ^ b for a, b in zip(plaintext, self._keystream(key, len(plaintext))))
        tag = hmac.new(key, eph + ct, hashlib.sha256).digest()
        return eph + ct + tag

    def unseal(self, sk: SecretKey, sealed: bytes) -> bytes:
        if len(sealed) < self._EPH_LEN + self._TAG_LEN:
            raise ValueError("sealed box too short")
        eph = sealed[: self._EPH_LEN]
        ct = sealed[self._EPH_LEN : -self._TAG_LEN]
        tag = sealed[-self._TAG_LEN :]
        key = sha256(b"box:" + sk.data + eph)
        expected = hmac.new(key, eph + ct, hashlib.sha256).digest()
        if not hmac.compare_digest(expected, tag):
            raise ValueError("sealed box authentication failed")
        return bytes(a ^ b for a, b in zip(ct, self._keystream(key, len(ct))))


class Ed25519Scheme(SignatureScheme):
    """Real asymmetric scheme: Ed25519 signatures plus an X25519 sealed box.

    Both private keys derive deterministically from the 32-byte seed, so
    replayability is preserved; only sealed-box ephemerals consume RNG
    state. Public key bytes are the Ed25519 key followed by the X25519
    key (64 bytes total).
    """

    name = "ed25519"
    _TAG_LEN = 32

    def __init__(self):
        from cryptography.hazmat.primitives.asymmetric import ed25519, x25519

        self._ed = ed25519
        self._x = x25519

    def _ed_priv(self, sk: SecretKey):
        return self._ed.Ed25519PrivateKey.from_private_bytes(sk.data)

    def _x_priv(self, sk: SecretKey):
        return self._x.X25519PrivateKey.from_private_bytes(sha256(b"dh:" + sk.data))

    @staticmethod
    def _raw_public(key) -> bytes:
        from cryptography.hazmat.primitives import serialization

        return key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )

    def keypair_from_seed(self, seed: bytes) -> "Keypair":
        sk = SecretKey(sha256(b"sk:" + seed))
        pk = self.derive_public(sk)
        return Keypair(sk=sk, pk=pk, bcadd=self.address_of(pk), scheme=self)

    def derive_public(self, sk: SecretKey) -> PublicKey:
        return PublicKey(self._raw_public(self._ed_priv(sk)) + self._raw_public(self._x_priv(sk)))

    def sign(self, sk: SecretKey, message: bytes) -> Signature:
        return Signature(self._ed_priv(sk).sign(message))

    def verify(self, pk: PublicKey, message: bytes, sig: Signature) -> bool:
        from cryptography.exceptions import InvalidSignature

        try:
            self._ed.Ed25519PublicKey.from_public_bytes(pk.data[:32]).verify(sig.data, message)
            return True
        except (InvalidSignature, ValueError):
            return False

    def _box_key(self, shared: bytes, eph_pub: bytes) -> bytes:
        return sha256(b"box:" + shared + eph_pub)

    def _stream(self, key: bytes, length: int) -> bytes:
        out = bytearray()
        counter = 0
        while len(out) < length:
            out += sha256(key + counter.to_bytes(8, "big"))
            counter += 1
        return bytes(out[:length])

    def seal(self, pk: PublicKey, plaintext: bytes, rng: Random) -> bytes:
        recipient = self._x.X25519PublicKey.from_public_bytes(pk.data[32:64])
        eph_priv = self._x.X25519PrivateKey.from_private_bytes(rng.randbytes(32))
        eph_pub = self._raw_public_of(eph_priv)
        key = self._box_key(eph_priv.exchange(recipient), eph_pub)
        ct = bytes(a ^ b for a, b in zip(plaintext, self._stream(key, len(plaintext))))
        tag = hmac.new(key, eph_pub + ct, hashlib.sha256).digest()
        return eph_pub + ct + tag

    @staticmethod
    def _raw_public_of(priv) -> bytes:
        from cryptography.hazmat.primitives import serialization

        return priv.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )

    def unseal(self, sk: SecretKey, sealed: bytes) -> bytes:
        if len(sealed) < 32 + self._TAG_LEN:
            raise ValueError("sealed box too short")
        eph_pub, ct, tag = sealed[:32], sealed[32:-self._TAG_LEN], sealed[-self._TAG_LEN:]
        shared = self._x_priv(sk).exchange(self._x.X25519PublicKey.from_public_bytes(eph_pub))
        key = self._box_key(shared, eph_pub)
        expected = hmac.new(key, eph_pub + ct, hashlib.sha256).digest()
        if not hmac.compare_digest(expected, tag):
            raise ValueError("sealed box authentication failed")
        return bytes(a ^ b for a, b in zip(ct, self._stream(key, len(ct))))


DEFAULT_SCHEME = KeyedDigestScheme()


@dataclass(frozen=True, slots=True)
class Keypair:
    """An entity's signing identity: secret, public key, and derived BCADD."""

    sk: SecretKey
    pk: PublicKey
    bcadd: BlockchainAddress
    scheme: SignatureScheme = field(repr=False, default=None)

    @classmethod
    def from_seed(cls, seed: bytes, scheme: Optional[SignatureScheme] = None) -> "Keypair":
        return (scheme or DEFAULT_SCHEME).keypair_from_seed(seed)

    def sign(self, message: bytes) -> Signature:
        return self.scheme.sign(self.sk, message)


def derive_address(sk: SecretKey, scheme: Optional[SignatureScheme] = None) -> BlockchainAddress:
    """Pure, deterministic: BCADD = 20-byte digest of the public key derived from ``sk``."""
    return (scheme or DEFAULT_SCHEME).derive_address(sk)


def sign(sk: SecretKey, message: bytes, scheme: Optional[SignatureScheme] = None) -> Signature:
    return (scheme or DEFAULT_SCHEME).sign(sk, message)


def verify(pk: PublicKey, message: bytes, sig: Signature, scheme: Optional[SignatureScheme] = None) -> bool:
    return (scheme or DEFAULT_SCHEME).verify(pk, message, sig)

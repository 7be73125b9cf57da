"""Pluggable signature schemes and the validator key registry.

Two schemes behind one interface:

* ``keyed-digest`` — HMAC-SHA256 under a per-validator key derived from the
  run seed. Symmetric (verification key == signing key), deterministic and
  fast; the default for simulations and exhaustive tests.
* ``ed25519`` — real asymmetric signatures via the ``cryptography`` package,
  with keys derived deterministically from the run seed.

Correctness of the protocol depends only on unforgeability, so everything
downstream is scheme-agnostic. Trace headers record the scheme name and the
verification keys, which lets trace checkers verify signatures offline.
"""

from __future__ import annotations

import hashlib
import hmac

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)


class KeyedDigestScheme:
    name = "keyed-digest"

    def derive(self, seed: int, validator: int) -> tuple[bytes, bytes]:
        sk = hashlib.sha256(b"ampsim-key:%d:%d" % (seed, validator)).digest()
        return sk, sk  # symmetric: verify key is the signing key

    def sign(self, signing_key: bytes, msg: bytes) -> bytes:
        return hmac.new(signing_key, msg, hashlib.sha256).digest()

    def verify(self, verify_key: bytes, msg: bytes, sig: bytes) -> bool:
        return hmac.compare_digest(self.sign(verify_key, msg), sig)


class Ed25519Scheme:
    name = "ed25519"

    def derive(self, seed: int, validator: int) -> tuple[bytes, bytes]:
        raw = hashlib.sha256(b"ampsim-ed25519:%d:%d" % (seed, validator)).digest()
        priv = Ed25519PrivateKey.from_private_bytes(raw)
        pub = priv.public_key().public_bytes_raw()
        return raw, pub

    def sign(self, signing_key: bytes, msg: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(signing_key).sign(msg)

    def verify(self, verify_key: bytes, msg: bytes, sig: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(verify_key).verify(sig, msg)
            return True
        except (InvalidSignature, ValueError):
            return False


SCHEMES = {s.name: s for s in (KeyedDigestScheme(), Ed25519Scheme())}


def get_scheme(name: str):
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown signature scheme: {name!r}") from None


class Verifier:
    """Verification-side registry: scheme plus one verify key per validator."""

    def __init__(self, scheme_name: str, verify_keys: list[bytes]):
        self.scheme = get_scheme(scheme_name)
        self.verify_keys = list(verify_keys)

    @property
    def n(self) -> int:
        return len(self.verify_keys)

    def verify(self, validator: int, msg: bytes, sig: bytes) -> bool:
        if not 0 <= validator < len(self.verify_keys):
            return False
        return self.scheme.verify(self.verify_keys[validator], msg, sig)


class Keyring(Verifier):
    """Signing-side registry holding every validator's signing key.

    The simulator holds one keyring and lends per-validator signing to the
    node objects; nodes never see other validators' signing keys except
    through it, and honest code paths only sign as themselves.
    """

    def __init__(self, scheme_name: str, n: int, seed: int):
        scheme = get_scheme(scheme_name)
        pairs = [scheme.derive(seed, v) for v in range(n)]
        super().__init__(scheme_name, [vk for _, vk in pairs])
        self.signing_keys = [sk for sk, _ in pairs]

    def sign(self, validator: int, msg: bytes) -> bytes:
        return self.scheme.sign(self.signing_keys[validator], msg)

"""Field encryption for agencies and provider signatures over sealed proofs.

Confidential fields are sealed with a fresh AES-256-GCM key per entry; that
key is wrapped with RSA-OAEP(SHA-256) under the agency public key.

    ciphertext = version(1) || wrapped_key(len = agency modulus bytes)
                 || nonce(12) || AES-GCM(to_ip(4) || port(2) || user_id)

Provider signatures are RSASSA-PSS with SHA-256, MGF1-SHA-256 and a 32 byte
salt, over RSA-2048 keys.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from ipaddress import IPv4Address
from pathlib import Path
from typing import Tuple

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .model import EncryptedLogEntry, LogEntry

CIPHERTEXT_VERSION = 1
KEY_BITS = 2048
_NONCE = 12

OAEP = padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None)
PSS = padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=32)

SIGNATURE_SCHEME = "RSASSA-PSS SHA-256 MGF1-SHA-256 salt=32"
WRAP_SCHEME = "RSA-OAEP SHA-256 MGF1-SHA-256 + AES-256-GCM"

AGENCY_PRIVATE = "agency_priv.pem"
AGENCY_PUBLIC = "agency_pub.pem"
PROVIDER_PRIVATE = "provider_priv.pem"
PROVIDER_PUBLIC = "provider_pub.pem"
KEY_FILES = (AGENCY_PRIVATE, AGENCY_PUBLIC, PROVIDER_PRIVATE, PROVIDER_PUBLIC)


class CryptoError(Exception):
    pass


class EncryptionKeyError(CryptoError):
    pass


class DecryptionError(CryptoError):
    pass


class SigningError(CryptoError):
    pass


@dataclass(frozen=True)
class KeyMaterial:
    agency_public_key: rsa.RSAPublicKey
    provider_verifying_key: rsa.RSAPublicKey
    agency_private_key: rsa.RSAPrivateKey | None = None
    provider_signing_key: rsa.RSAPrivateKey | None = None


def generate_keypair(bits: int = KEY_BITS) -> rsa.RSAPrivateKey:
    return rsa.generate_private_key(public_exponent=65537, key_size=bits)


def generate_keys(bits: int = KEY_BITS) -> KeyMaterial:
    agency = generate_keypair(bits)
    provider = generate_keypair(bits)
    return KeyMaterial(
        agency_public_key=agency.public_key(),
        provider_verifying_key=provider.public_key(),
        agency_private_key=agency,
        provider_signing_key=provider,
    )


# -- field encryption ----------------------------------------------------------

def _pack_fields(to_ip: IPv4Address, port: int, user_id: str) -> bytes:
    return to_ip.packed + struct.pack(">H", port) + user_id.encode("utf-8")


def _unpack_fields(blob: bytes) -> Tuple[IPv4Address, int, str]:
    if len(blob) < 6:
        raise DecryptionError("decrypted field block too short")
    (port,) = struct.unpack(">H", blob[4:6])
    try:
        user = blob[6:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecryptionError("user id is not valid utf-8") from exc
    return IPv4Address(blob[:4]), port, user


def encrypt_fields(entry: LogEntry, agency_public_key) -> EncryptedLogEntry:
    if not isinstance(agency_public_key, rsa.RSAPublicKey):
        raise EncryptionKeyError(f"expected an RSA public key, got {type(agency_public_key).__name__}")
    key = AESGCM.generate_key(bit_length=256)
    nonce = os.urandom(_NONCE)
    try:
        wrapped = agency_public_key.encrypt(key, OAEP)
    except ValueError as exc:
        raise EncryptionKeyError(str(exc)) from exc
    sealed = AESGCM(key).encrypt(nonce, _pack_fields(entry.to_ip, entry.port, entry.user_id), None)
    ciphertext = bytes([CIPHERTEXT_VERSION]) + wrapped + nonce + sealed
    return EncryptedLogEntry(ciphertext, entry.from_ip, entry.timestamp)


def decrypt_fields(ele: EncryptedLogEntry, agency_private_key) -> Tuple[IPv4Address, int, str]:
    """Recover (to_ip, port, user_id). Raises DecryptionError on any mismatch."""
    if not isinstance(agency_private_key, rsa.RSAPrivateKey):
        raise DecryptionError("an RSA agency private key is required")
    ct = ele.ciphertext
    wrap_len = agency_private_key.key_size // 8
    if len(ct) < 1 + wrap_len + _NONCE + 16 or ct[0] != CIPHERTEXT_VERSION:
        raise DecryptionError("malformed ciphertext")
    wrapped = ct[1:1 + wrap_len]
    nonce = ct[1 + wrap_len:1 + wrap_len + _NONCE]
    body = ct[1 + wrap_len + _NONCE:]
    try:
        key = agency_private_key.decrypt(wrapped, OAEP)
        blob = AESGCM(key).decrypt(nonce, body, None)
    except (ValueError, InvalidTag) as exc:
        raise DecryptionError("authenticated decryption failed") from exc
    return _unpack_fields(blob)


# -- signatures ----------------------------------------------------------------

def sign(payload: bytes, provider_signing_key) -> bytes:
    if not isinstance(provider_signing_key, rsa.RSAPrivateKey):
        raise SigningError("an RSA provider signing key is required")
    try:
        return provider_signing_key.sign(payload, PSS, hashes.SHA256())
    except ValueError as exc:
        raise SigningError(str(exc)) from exc


def verify_signature(payload: bytes, signature: bytes, provider_verifying_key) -> bool:
    # Never raises: adversarial bytes just fail.
    try:
        provider_verifying_key.verify(signature, payload, PSS, hashes.SHA256())
    except (InvalidSignature, ValueError, TypeError, AttributeError):
        return False
    return True


# -- key files -------------------------------------------------------------------

_HEADERS = {
    AGENCY_PRIVATE: f"# seclaas agency private key\n# scheme: {WRAP_SCHEME}\n",
    AGENCY_PUBLIC: f"# seclaas agency public key\n# scheme: {WRAP_SCHEME}\n",
    PROVIDER_PRIVATE: f"# seclaas provider signing key\n# scheme: {SIGNATURE_SCHEME}\n",
    PROVIDER_PUBLIC: f"# seclaas provider verifying key\n# scheme: {SIGNATURE_SCHEME}\n",
}


def _pem_body(text: bytes) -> bytes:
    start = text.find(b"-----BEGIN")
    if start < 0:
        raise EncryptionKeyError("no PEM block found")
    return text[start:]


def public_pem(key) -> bytes:
    return key.public_bytes(serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo)


def private_pem(key) -> bytes:
    return key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    )


def armor(name: str, key) -> bytes:
    body = private_pem(key) if isinstance(key, rsa.RSAPrivateKey) else public_pem(key)
    return _HEADERS.get(name, "").encode() + body


def load_public_key(data: bytes):
    try:
        key = serialization.load_pem_public_key(_pem_body(data))
    except ValueError as exc:
        raise EncryptionKeyError(f"unreadable public key: {exc}") from exc
    if not isinstance(key, rsa.RSAPublicKey):
        raise EncryptionKeyError("only RSA keys are supported")
    return key


def load_private_key(data: bytes):
    try:
        key = serialization.load_pem_private_key(_pem_body(data), password=None)
    except (ValueError, TypeError) as exc:
        raise EncryptionKeyError(f"unreadable private key: {exc}") from exc
    if not isinstance(key, rsa.RSAPrivateKey):
        raise EncryptionKeyError("only RSA keys are supported")
    return key


def write_keys(keys: KeyMaterial, out_dir, force: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / name for name in KEY_FILES]
    existing = [p for p in paths if p.exists()]
    if existing and not force:
        raise FileExistsError(f"refusing to overwrite {existing[0]} (use --force)")
    material = {
        AGENCY_PRIVATE: keys.agency_private_key,
        AGENCY_PUBLIC: keys.agency_public_key,
        PROVIDER_PRIVATE: keys.provider_signing_key,
        PROVIDER_PUBLIC: keys.provider_verifying_key,
    }
    for path in paths:
        path.write_bytes(armor(path.name, material[path.name]))
        if path.name.endswith("priv.pem"):
            path.chmod(0o600)
    return paths


def read_keys(key_dir, need_agency_private: bool = False, need_signing: bool = False) -> KeyMaterial:
    d = Path(key_dir)

    def _read(name):
        try:
            return (d / name).read_bytes()
        except OSError as exc:
            raise EncryptionKeyError(f"cannot read key file {d / name}: {exc.strerror}") from exc

    agency_priv = load_private_key(_read(AGENCY_PRIVATE)) if need_agency_private else None
    signing = load_private_key(_read(PROVIDER_PRIVATE)) if need_signing else None
    return KeyMaterial(
        agency_public_key=load_public_key(_read(AGENCY_PUBLIC)),
        provider_verifying_key=load_public_key(_read(PROVIDER_PUBLIC)),
        agency_private_key=agency_priv,
        provider_signing_key=signing,
    )


def self_test(keys: KeyMaterial) -> bool:
    """Round-trip encryption and signing with a throwaway entry."""
    from datetime import datetime, timezone

    probe = LogEntry("10.0.0.1", "10.0.0.2", datetime(2000, 1, 1, tzinfo=timezone.utc), 1, "self-test")
    ele = encrypt_fields(probe, keys.agency_public_key)
    if decrypt_fields(ele, keys.agency_private_key) != (probe.to_ip, probe.port, probe.user_id):
        return False
    sig = sign(b"self-test", keys.provider_signing_key)
    return verify_signature(b"self-test", sig, keys.provider_verifying_key)

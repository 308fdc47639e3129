"""Structural analyzers: URLs, IPs, IBANs, JWTs, and entropy heuristics.

These handle the artifact shapes where a regex alone is not enough: IBAN
checksums, JWT payload claims, URL token heuristics, and IP range
classification.
"""

from __future__ import annotations

import base64
import binascii
import ipaddress
import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from urllib.parse import parse_qsl, urlsplit

#: Host suffix -> cloud share provider.
CLOUD_PROVIDERS: dict[str, str] = {
    "drive.google.com": "gdrive",
    "docs.google.com": "gdrive",
    "dropbox.com": "dropbox",
    "sharepoint.com": "sharepoint",
    "proton.me": "proton",
    "mega.nz": "mega",
    "mega.io": "mega",
    "onedrive.live.com": "other",
    "1drv.ms": "other",
    "box.com": "other",
    "wetransfer.com": "other",
    "we.tl": "other",
}

#: Hosts that mark a URL as illustrative rather than real.
SUPPRESSED_HOST_SUFFIXES = ("example.com", "example.org", "example.net", "localhost")

DEFAULT_TOKEN_MIN_LEN = 20
DEFAULT_TOKEN_MIN_ENTROPY = 3.5

_TOKEN_ALPHABET = re.compile(r"^[A-Za-z0-9_-]+=*$")
_IBAN_SHAPE = re.compile(r"^[A-Za-z]{2}\d{2}[A-Za-z0-9]{11,30}$")
_B64URL_SEGMENT = re.compile(r"^[A-Za-z0-9_-]*=*$")


def shannon_entropy(text: str) -> float:
    """Shannon entropy of *text* in bits per character."""
    if not text:
        return 0.0
    n = len(text)
    return -sum(c / n * math.log2(c / n) for c in Counter(text).values())


# ---------------------------------------------------------------------------
# IBAN
# ---------------------------------------------------------------------------


def iban_shape_ok(candidate: str) -> bool:
    """Shape precondition: 2 letters, 2 digits, 11-30 alphanumerics."""
    return bool(_IBAN_SHAPE.match(candidate.replace(" ", "")))


def validate_iban(candidate: str) -> bool:
    """ISO mod-97 check over the rearranged numeric form; spaces ignored.

    The candidate must already satisfy :func:`iban_shape_ok`; shape
    violations raise rather than evaluate.
    """
    compact = candidate.replace(" ", "").upper()
    if not _IBAN_SHAPE.match(compact):
        raise ValueError(f"not an IBAN-shaped string: {candidate!r}")
    rearranged = compact[4:] + compact[:4]
    total = 0
    for ch in rearranged:
        if ch.isdigit():
            total = (total * 10 + ord(ch) - ord("0")) % 97
        else:
            total = (total * 100 + ord(ch) - ord("A") + 10) % 97
    return total == 1


# ---------------------------------------------------------------------------
# JWT
# ---------------------------------------------------------------------------


def _decode_b64url_json(segment: str) -> dict | None:
    if not _B64URL_SEGMENT.match(segment) or not segment:
        return None
    padded = segment + "=" * (-len(segment) % 4)
    try:
        raw = base64.urlsafe_b64decode(padded)
        data = json.loads(raw)
    except (binascii.Error, ValueError, UnicodeDecodeError):
        return None
    return data if isinstance(data, dict) else None


def analyze_jwt(candidate: str) -> tuple[bool, bool]:
    """(valid_shape, has_expiry) for a three-segment base64url token.

    A shape-valid token decodes JSON objects from both header and payload;
    expiry means a numeric ``exp`` claim.  A token without one never expires,
    which is what makes a leaked token a standing credential.
    """
    parts = candidate.strip().split(".")
    if len(parts) != 3:
        return False, False
    if not all(_B64URL_SEGMENT.match(p) for p in parts):
        return False, False
    header = _decode_b64url_json(parts[0])
    payload = _decode_b64url_json(parts[1])
    if header is None or payload is None:
        return False, False
    exp = payload.get("exp")
    has_expiry = isinstance(exp, (int, float)) and not isinstance(exp, bool)
    return True, has_expiry


# ---------------------------------------------------------------------------
# URLs
# ---------------------------------------------------------------------------


@dataclass
class UrlRecord:
    url: str
    host: str | None
    scheme: str
    port: int | None
    token_like: bool
    cloud_provider: str | None
    casa_token: bool
    suppressed: bool = False

    def as_dict(self) -> dict:
        return {
            "url": self.url,
            "host": self.host,
            "scheme": self.scheme,
            "port": self.port,
            "token_like": self.token_like,
            "cloud_provider": self.cloud_provider,
            "casa_token": self.casa_token,
            "suppressed": self.suppressed,
        }


def _host_suffix_lookup(host: str, table: dict[str, str]) -> str | None:
    for suffix, value in table.items():
        if host == suffix or host.endswith("." + suffix):
            return value
    return None


def _is_token_segment(segment: str, min_len: int, min_entropy: float) -> bool:
    if len(segment) < min_len:
        return False
    if not _TOKEN_ALPHABET.match(segment):
        return False
    return shannon_entropy(segment) >= min_entropy


def classify_url(
    url: str,
    min_token_len: int = DEFAULT_TOKEN_MIN_LEN,
    min_token_entropy: float = DEFAULT_TOKEN_MIN_ENTROPY,
    providers: dict[str, str] | None = None,
) -> UrlRecord:
    """Provider, token-likeness, and CASA detection for one URL.

    A segment is token-like when it is long, drawn from the base64url/hex
    alphabet, and high-entropy: the signature of a capability URL that
    grants access by itself.  CASA tokens are matched by parameter name.
    Loopback and example hosts are marked suppressed.
    """
    table = providers if providers is not None else CLOUD_PROVIDERS
    try:
        parts = urlsplit(url.strip())
        host = parts.hostname.lower() if parts.hostname else None
        port = parts.port
    except ValueError:
        return UrlRecord(
            url=url,
            host=None,
            scheme="",
            port=None,
            token_like=False,
            cloud_provider=None,
            casa_token=False,
        )

    query_pairs = parse_qsl(parts.query, keep_blank_values=True)
    segments = [s for s in parts.path.split("/") if s]
    segments.extend(v for _, v in query_pairs)
    token_like = any(
        _is_token_segment(s, min_token_len, min_token_entropy) for s in segments
    )
    casa = any(k == "casa_token" for k, _ in query_pairs)
    provider = _host_suffix_lookup(host, table) if host else None

    suppressed = False
    if host:
        if any(host == s or host.endswith("." + s) for s in SUPPRESSED_HOST_SUFFIXES):
            suppressed = True
        else:
            try:
                suppressed = ipaddress.ip_address(host).is_loopback
            except ValueError:
                pass

    return UrlRecord(
        url=url,
        host=host,
        scheme=parts.scheme,
        port=port,
        token_like=token_like,
        cloud_provider=provider,
        casa_token=casa,
        suppressed=suppressed,
    )


# ---------------------------------------------------------------------------
# IPs
# ---------------------------------------------------------------------------

IP_PUBLIC = "public"
IP_PRIVATE = "private"
IP_LOOPBACK = "loopback"
IP_RESERVED = "reserved"

_PRIVATE_V4 = (
    ipaddress.ip_network("10.0.0.0/8"),
    ipaddress.ip_network("172.16.0.0/12"),
    ipaddress.ip_network("192.168.0.0/16"),
)
_PRIVATE_V6 = (ipaddress.ip_network("fc00::/7"),)


@dataclass
class IpRecord:
    address: str
    kind: str
    port: int | None

    def as_dict(self) -> dict:
        return {"address": self.address, "kind": self.kind, "port": self.port}


def _split_host_port(text: str) -> tuple[str, int | None]:
    text = text.strip()
    if text.startswith("["):  # bracketed v6 literal, optionally with port
        end = text.find("]")
        if end == -1:
            raise ValueError(f"unterminated bracket in {text!r}")
        addr = text[1:end]
        rest = text[end + 1 :]
        if rest.startswith(":"):
            return addr, _parse_port(rest[1:])
        if rest:
            raise ValueError(f"trailing data after address: {text!r}")
        return addr, None
    if text.count(":") == 1:  # dotted quad with port
        addr, port_text = text.split(":")
        return addr, _parse_port(port_text)
    return text, None


def _parse_port(text: str) -> int:
    port = int(text)
    if not 0 <= port <= 65535:
        raise ValueError(f"port out of range: {port}")
    return port


def classify_ip(text: str) -> IpRecord:
    """Range classification for a dotted-quad or bracketed v6 literal.

    Raises ValueError for malformed input.  Kind is derived solely from the
    address ranges; loopback findings are always suppressed downstream.
    """
    addr_text, port = _split_host_port(text)
    ip = ipaddress.ip_address(addr_text)
    if ip.is_loopback:
        kind = IP_LOOPBACK
    elif ip.version == 4 and any(ip in net for net in _PRIVATE_V4):
        kind = IP_PRIVATE
    elif ip.version == 6 and any(ip in net for net in _PRIVATE_V6):
        kind = IP_PRIVATE
    elif (
        ip.is_multicast
        or ip.is_link_local
        or ip.is_reserved
        or ip.is_unspecified
        or not ip.is_global
    ):
        kind = IP_RESERVED
    else:
        kind = IP_PUBLIC
    return IpRecord(address=str(ip), kind=kind, port=port)

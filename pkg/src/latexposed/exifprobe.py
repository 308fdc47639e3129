"""EXIF metadata extraction from submission images.

Preprint servers do not strip image metadata, so GPS positions, device
names, and editing software ride along with figures.  The parser is native
(JPEG APP1, bare TIFF, PNG eXIf) for throughput and hermetic testing; it
walks IFDs in both byte orders, never reads past declared segment lengths,
and treats every malformed structure as absent metadata rather than an
error.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .patterns import Locus
from .report import (
    CATEGORY_EXIF_DEVICE,
    CATEGORY_EXIF_GPS,
    METHOD_LF,
    Finding,
    SeverityMap,
    assign_severity,
)

logger = logging.getLogger(__name__)

FORMAT_JPEG = "jpeg"
FORMAT_PNG = "png"
FORMAT_TIFF = "tiff"

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# IFD0 / Exif tags
_TAG_MAKE = 0x010F
_TAG_MODEL = 0x0110
_TAG_SOFTWARE = 0x0131
_TAG_DATETIME = 0x0132
_TAG_EXIF_IFD = 0x8769
_TAG_GPS_IFD = 0x8825
_TAG_DATETIME_ORIGINAL = 0x9003

# GPS IFD tags
_TAG_GPS_LAT_REF = 0x0001
_TAG_GPS_LAT = 0x0002
_TAG_GPS_LON_REF = 0x0003
_TAG_GPS_LON = 0x0004

_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8}


@dataclass
class ImageMeta:
    path: str
    format: str | None = None
    gps: tuple[float, float] | None = None  # (lat, lon) in decimal degrees
    make: str | None = None
    model: str | None = None
    software: str | None = None
    timestamp: str | None = None
    warnings: list[str] = field(default_factory=list)

    def has_metadata(self) -> bool:
        return any((self.gps, self.make, self.model, self.software, self.timestamp))

    def as_dict(self) -> dict:
        return {
            "path": self.path,
            "format": self.format,
            "gps": list(self.gps) if self.gps else None,
            "make": self.make,
            "model": self.model,
            "software": self.software,
            "timestamp": self.timestamp,
            "warnings": self.warnings,
        }


# ---------------------------------------------------------------------------
# Container walking
# ---------------------------------------------------------------------------


def _exif_from_jpeg(data: bytes, meta: ImageMeta) -> bytes | None:
    """Walk JPEG segments up to SOS and return the APP1 TIFF payload."""
    i = 2
    n = len(data)
    while i + 4 <= n:
        if data[i] != 0xFF:
            meta.warnings.append(f"garbled segment marker at offset {i}")
            return None
        marker = data[i + 1]
        if marker in (0xD8, 0x01) or 0xD0 <= marker <= 0xD7:
            i += 2
            continue
        if marker in (0xDA, 0xD9):  # start-of-scan / end: no metadata beyond
            return None
        length = struct.unpack(">H", data[i + 2 : i + 4])[0]
        if length < 2 or i + 2 + length > n:
            meta.warnings.append("truncated segment, stopping metadata walk")
            return None
        segment = data[i + 4 : i + 2 + length]
        if marker == 0xE1 and segment[:6] == b"Exif\x00\x00":
            return segment[6:]
        i += 2 + length
    return None


def _exif_from_png(data: bytes, meta: ImageMeta) -> bytes | None:
    i = len(_PNG_SIGNATURE)
    n = len(data)
    while i + 8 <= n:
        length, ctype = struct.unpack(">I4s", data[i : i + 8])
        if i + 8 + length > n:
            meta.warnings.append("truncated chunk, stopping metadata walk")
            return None
        if ctype == b"eXIf":
            return data[i + 8 : i + 8 + length]
        if ctype == b"IEND":
            return None
        i += 12 + length  # length + type + data + crc
    return None


# ---------------------------------------------------------------------------
# TIFF IFD parsing
# ---------------------------------------------------------------------------


def _read_ifd(tiff: bytes, offset: int, bo: str, meta: ImageMeta) -> dict[int, object]:
    """One IFD as tag -> decoded value, bounds-checked throughout."""
    entries: dict[int, object] = {}
    if offset < 0 or offset + 2 > len(tiff):
        meta.warnings.append(f"IFD offset {offset} out of bounds")
        return entries
    (count,) = struct.unpack_from(bo + "H", tiff, offset)
    for idx in range(count):
        base = offset + 2 + idx * 12
        if base + 12 > len(tiff):
            meta.warnings.append("truncated IFD entry table")
            break
        tag, vtype, vcount = struct.unpack_from(bo + "HHI", tiff, base)
        size = _TYPE_SIZES.get(vtype)
        if size is None:
            continue
        total = size * vcount
        if total <= 4:
            data_offset = base + 8
        else:
            (data_offset,) = struct.unpack_from(bo + "I", tiff, base + 8)
        if data_offset + total > len(tiff):
            meta.warnings.append(f"tag 0x{tag:04x} value out of bounds")
            continue
        value = _decode_value(tiff, data_offset, vtype, vcount, bo)
        if value is not None:
            entries[tag] = value
    return entries


def _decode_value(tiff: bytes, offset: int, vtype: int, count: int, bo: str):
    if vtype == 2:  # ASCII
        raw = tiff[offset : offset + count]
        return raw.split(b"\x00", 1)[0].decode("ascii", errors="replace")
    if vtype in (3, 4, 8, 9):  # SHORT / LONG / SSHORT / SLONG
        fmt = {3: "H", 4: "I", 8: "h", 9: "i"}[vtype]
        values = struct.unpack_from(bo + fmt * count, tiff, offset)
        return values[0] if count == 1 else values
    if vtype in (5, 10):  # RATIONAL / SRATIONAL: pairs of (numerator, denominator)
        fmt = "II" if vtype == 5 else "ii"
        values = struct.unpack_from(bo + fmt * count, tiff, offset)
        return tuple(zip(values[0::2], values[1::2]))
    if vtype in (1, 6, 7):  # BYTE / SBYTE / UNDEFINED
        return tiff[offset : offset + count]
    return None


def _gps_decimal(
    rationals: object, ref: object, negative_refs: tuple[str, str]
) -> float | None:
    """Degrees/minutes/seconds rationals to signed decimal degrees.

    All three components must parse with non-zero denominators; anything
    else yields absent, never infinity.
    """
    if not isinstance(rationals, tuple) or len(rationals) != 3:
        return None
    parts = []
    for pair in rationals:
        if not isinstance(pair, tuple) or len(pair) != 2:
            return None
        num, den = pair
        if den == 0:
            return None
        parts.append(Fraction(num, den))
    value = parts[0] + parts[1] / 60 + parts[2] / 3600
    decimal = float(value)
    if isinstance(ref, str) and ref.strip().upper() in negative_refs:
        decimal = -decimal
    return decimal


def _parse_tiff(tiff: bytes, meta: ImageMeta) -> None:
    if len(tiff) < 8:
        meta.warnings.append("TIFF block too short")
        return
    order = tiff[:2]
    if order == b"II":
        bo = "<"
    elif order == b"MM":
        bo = ">"
    else:
        meta.warnings.append(f"unknown byte order {order!r}")
        return
    magic, ifd_offset = struct.unpack_from(bo + "HI", tiff, 2)
    if magic != 42:
        meta.warnings.append(f"bad TIFF magic {magic}")
        return

    ifd0 = _read_ifd(tiff, ifd_offset, bo, meta)
    meta.make = ifd0.get(_TAG_MAKE) if isinstance(ifd0.get(_TAG_MAKE), str) else meta.make
    meta.model = ifd0.get(_TAG_MODEL) if isinstance(ifd0.get(_TAG_MODEL), str) else meta.model
    meta.software = (
        ifd0.get(_TAG_SOFTWARE) if isinstance(ifd0.get(_TAG_SOFTWARE), str) else meta.software
    )
    timestamp = ifd0.get(_TAG_DATETIME)

    exif_offset = ifd0.get(_TAG_EXIF_IFD)
    if isinstance(exif_offset, int):
        exif_ifd = _read_ifd(tiff, exif_offset, bo, meta)
        timestamp = exif_ifd.get(_TAG_DATETIME_ORIGINAL, timestamp)
    if isinstance(timestamp, str):
        meta.timestamp = timestamp

    gps_offset = ifd0.get(_TAG_GPS_IFD)
    if isinstance(gps_offset, int):
        gps_ifd = _read_ifd(tiff, gps_offset, bo, meta)
        lat = _gps_decimal(gps_ifd.get(_TAG_GPS_LAT), gps_ifd.get(_TAG_GPS_LAT_REF), ("S",))
        lon = _gps_decimal(gps_ifd.get(_TAG_GPS_LON), gps_ifd.get(_TAG_GPS_LON_REF), ("W",))
        if lat is not None and lon is not None and abs(lat) <= 90 and abs(lon) <= 180:
            meta.gps = (lat, lon)
        elif lat is not None or lon is not None:
            meta.warnings.append("incomplete or out-of-range GPS data ignored")


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def read_exif(data: bytes, path: str = "") -> ImageMeta:
    """Extract metadata from raw image bytes; total on any input."""
    meta = ImageMeta(path=path)
    try:
        if data[:2] == b"\xff\xd8":
            meta.format = FORMAT_JPEG
            tiff = _exif_from_jpeg(data, meta)
        elif data[: len(_PNG_SIGNATURE)] == _PNG_SIGNATURE:
            meta.format = FORMAT_PNG
            tiff = _exif_from_png(data, meta)
        elif data[:4] in (b"II*\x00", b"MM\x00*"):
            meta.format = FORMAT_TIFF
            tiff = data
        else:
            meta.warnings.append("unrecognized image signature")
            tiff = None
        if tiff is not None:
            _parse_tiff(tiff, meta)
    except Exception as exc:  # metadata is hostile input; never crash on it
        meta.warnings.append(f"metadata parse aborted: {exc}")
    for w in meta.warnings:
        logger.debug("%s: %s", path, w)
    return meta


def read_exif_file(path: Path | str) -> ImageMeta:
    path = Path(path)
    return read_exif(path.read_bytes(), path=str(path))


def flag_image(
    meta: ImageMeta,
    severity_map: SeverityMap,
    paper_id: str = "",
) -> list[Finding]:
    """Findings for one image: GPS is the high-severity case.

    Coordinates are reported rounded to four decimals (roughly 11 m), enough
    to demonstrate the leak without republishing the precise position.
    """
    findings: list[Finding] = []
    locus = Locus(paper_id, meta.path, 0)
    if meta.gps is not None:
        lat, lon = meta.gps
        findings.append(
            assign_severity(
                Finding(
                    paper_id=paper_id,
                    method=METHOD_LF,
                    category=CATEGORY_EXIF_GPS,
                    severity="High",
                    locus=locus,
                    evidence_redacted=f"GPS position {lat:.4f}, {lon:.4f}",
                    rule_or_backend="exif",
                ),
                severity_map,
            )
        )
    elif meta.has_metadata():
        present = [
            f"{name}={value}"
            for name, value in (
                ("make", meta.make),
                ("model", meta.model),
                ("software", meta.software),
                ("timestamp", meta.timestamp),
            )
            if value
        ]
        findings.append(
            assign_severity(
                Finding(
                    paper_id=paper_id,
                    method=METHOD_LF,
                    category=CATEGORY_EXIF_DEVICE,
                    severity="Low",
                    locus=locus,
                    evidence_redacted="; ".join(present),
                    rule_or_backend="exif",
                ),
                severity_map,
            )
        )
    return findings


def probe_directory(
    root: Path | str,
    extensions: Sequence[str] = (".jpg", ".jpeg", ".png", ".tif", ".tiff"),
    strip: bool = False,
) -> list[ImageMeta]:
    """Probe every image under *root*; optionally delete them afterwards.

    Deletion mirrors the space-saving workflow where images are dropped from
    the working set once their metadata has been captured.
    """
    root = Path(root)
    metas = []
    for path in sorted(root.rglob("*")):
        if path.suffix.lower() not in extensions or not path.is_file():
            continue
        meta = read_exif_file(path)
        metas.append(meta)
        if strip:
            path.unlink()
    return metas

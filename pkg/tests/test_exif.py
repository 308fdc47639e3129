"""EXIF probe: GPS decoding, device tags, robustness on hostile bytes."""

from __future__ import annotations

import io
from fractions import Fraction

import pytest

from helpers import build_jpeg, build_png, build_tiff, dms

from latexposed.exifprobe import flag_image, read_exif
from latexposed.report import SeverityMap


@pytest.fixture(scope="module")
def severity_map():
    return SeverityMap.default()


def pillow_shell_jpeg() -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.new("RGB", (2, 2), (200, 30, 30)).save(buf, format="JPEG")
    return buf.getvalue()


def pillow_shell_png() -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.new("RGB", (2, 2), (30, 200, 30)).save(buf, format="PNG")
    return buf.getvalue()


class TestGpsDecoding:
    def test_north_decimal(self):
        tiff = build_tiff(gps=(dms(51, 30), "N", dms(0, 7, 39, 1), "W"))
        meta = read_exif(build_jpeg(tiff))
        assert meta.gps is not None
        lat, lon = meta.gps
        assert lat == pytest.approx(51.5, abs=1e-9)

    def test_south_hemisphere_sign(self):
        tiff = build_tiff(gps=(dms(51, 30), "S", dms(10, 0), "E"))
        meta = read_exif(build_jpeg(tiff))
        assert meta.gps[0] == pytest.approx(-51.5, abs=1e-9)
        assert meta.gps[1] == pytest.approx(10.0, abs=1e-9)

    def test_exact_rational_arithmetic(self):
        # deg 37, min 46, sec 2999/100 vs Fraction-exact oracle.
        tiff = build_tiff(gps=(((37, 1), (46, 1), (2999, 100)), "N", dms(122, 25), "W"))
        meta = read_exif(build_jpeg(tiff))
        exact = Fraction(37) + Fraction(46, 60) + Fraction(2999, 100) / 3600
        assert abs(meta.gps[0] - float(exact)) < 1e-9
        assert meta.gps[1] == pytest.approx(-(122 + 25 / 60), abs=1e-9)

    def test_zero_denominator_yields_absent(self):
        tiff = build_tiff(gps=(((51, 1), (30, 0), (0, 1)), "N", dms(0, 0), "E"))
        meta = read_exif(build_jpeg(tiff))
        assert meta.gps is None

    def test_out_of_range_rejected(self):
        tiff = build_tiff(gps=(dms(95, 0), "N", dms(0, 0), "E"))
        meta = read_exif(build_jpeg(tiff))
        assert meta.gps is None

    def test_big_endian_tiff(self):
        tiff = build_tiff(byte_order=">", gps=(dms(51, 30), "N", dms(2, 15), "E"),
                          make="TestCam")
        meta = read_exif(build_jpeg(tiff))
        assert meta.gps[0] == pytest.approx(51.5, abs=1e-9)
        assert meta.make == "TestCam"


class TestDeviceTags:
    def test_roundtrip_through_independent_writer(self):
        tiff = build_tiff(
            make="TestCam",
            model="TC-1000",
            software="Photoshop 25.1",
            timestamp="2024:01:02 03:04:05",
            datetime_original="2023:12:31 23:59:59",
        )
        meta = read_exif(build_jpeg(tiff))
        assert meta.make == "TestCam"
        assert meta.model == "TC-1000"
        assert meta.software == "Photoshop 25.1"
        assert meta.timestamp == "2023:12:31 23:59:59"  # original wins

    def test_absent_tags_stay_absent(self):
        meta = read_exif(build_jpeg(build_tiff(make="OnlyMake")))
        assert meta.model is None
        assert meta.software is None
        assert meta.gps is None

    def test_png_exif_chunk(self):
        tiff = build_tiff(make="PngCam", gps=(dms(48, 51), "N", dms(2, 21), "E"))
        meta = read_exif(build_png(tiff, pillow_shell_png()))
        assert meta.format == "png"
        assert meta.make == "PngCam"
        assert meta.gps[0] == pytest.approx(48.85, abs=1e-9)

    def test_bare_tiff(self):
        meta = read_exif(build_tiff(software="RawTool"))
        assert meta.format == "tiff"
        assert meta.software == "RawTool"

    def test_unrecognized_signature(self):
        meta = read_exif(b"GIF89a not supported")
        assert meta.format is None
        assert not meta.has_metadata()
        assert meta.warnings


class TestPillowAgreement:
    def test_jpeg_fixture_readable_by_pillow(self):
        from PIL import Image

        tiff = build_tiff(
            make="TestCam", software="Tool 1.0",
            gps=(dms(51, 30), "N", dms(0, 10), "W"),
        )
        data = build_jpeg(tiff, shell=pillow_shell_jpeg())
        ours = read_exif(data)

        image = Image.open(io.BytesIO(data))
        exif = image.getexif()
        assert exif.get(0x010F) == ours.make == "TestCam"
        assert exif.get(0x0131) == ours.software == "Tool 1.0"
        gps_ifd = exif.get_ifd(0x8825)
        assert gps_ifd[1] == "N"
        lat = tuple(gps_ifd[2])
        assert float(lat[0]) + float(lat[1]) / 60 == pytest.approx(ours.gps[0])


class TestRobustness:
    def fixture_bytes(self) -> bytes:
        tiff = build_tiff(
            make="FuzzCam", model="F-1", software="S 2.0",
            timestamp="2024:01:01 00:00:00",
            gps=(dms(51, 30), "N", dms(0, 7), "W"),
            datetime_original="2024:01:01 00:00:01",
        )
        data = build_jpeg(tiff)
        # Pad to 2 KB so truncation sweeps cover all structures.
        return data + b"\x00" * max(0, 2048 - len(data))

    def test_truncation_sweep_never_crashes(self):
        data = self.fixture_bytes()
        assert len(data) >= 2048
        for cut in range(len(data)):
            meta = read_exif(data[:cut], path=f"cut{cut}")
            assert meta is not None

    def test_bitflip_fuzz_never_crashes(self):
        import random

        data = bytearray(self.fixture_bytes())
        rng = random.Random(13)
        for _ in range(300):
            i = rng.randrange(len(data))
            original = data[i]
            data[i] = rng.randrange(256)
            read_exif(bytes(data))
            data[i] = original


class TestFlagImage:
    def test_gps_is_high(self, severity_map):
        tiff = build_tiff(gps=(dms(51, 30), "N", dms(0, 7), "W"))
        meta = read_exif(build_jpeg(tiff), path="figs/photo.jpg")
        findings = flag_image(meta, severity_map, paper_id="p1")
        assert len(findings) == 1
        assert findings[0].severity == "High"
        assert findings[0].category == "Image location EXIF data"
        assert findings[0].method == "LF"

    def test_gps_evidence_rounded_to_four_decimals(self, severity_map):
        tiff = build_tiff(gps=(((37, 1), (46, 1), (2999, 100)), "N", dms(122, 25), "W"))
        meta = read_exif(build_jpeg(tiff))
        (finding,) = flag_image(meta, severity_map, paper_id="p")
        assert "37.7750" in finding.evidence_redacted

    def test_software_only_is_low(self, severity_map):
        meta = read_exif(build_jpeg(build_tiff(software="Photoshop 25.1")))
        (finding,) = flag_image(meta, severity_map, paper_id="p1")
        assert finding.severity == "Low"
        assert "Photoshop 25.1" in finding.evidence_redacted

    def test_empty_meta_no_findings(self, severity_map):
        meta = read_exif(build_jpeg(build_tiff()))
        assert flag_image(meta, severity_map, paper_id="p1") == []

import numpy as np
import pytest

from fmlab.errors import DomainError, ShapeError
from fmlab.manifest import ManifestRecord, read_manifest, validate_manifest, write_manifest
from fmlab.rasters import (
    load_image,
    load_mask,
    load_pgm,
    load_ppm,
    save_image,
    save_mask,
    save_pgm,
    save_ppm,
)


# -- rasters -----------------------------------------------------------------


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    raster = rng.integers(0, 256, (5, 7), dtype=np.uint8)
    path = tmp_path / "img.pgm"
    save_pgm(path, raster)
    assert np.array_equal(load_pgm(path), raster)


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    raster = rng.integers(0, 256, (4, 3, 3), dtype=np.uint8)
    path = tmp_path / "img.ppm"
    save_ppm(path, raster)
    assert np.array_equal(load_ppm(path), raster)


def test_mask_round_trip_exact(tmp_path):
    rng = np.random.default_rng(2)
    mask = (rng.random((9, 6)) < 0.5).astype(np.uint8)
    path = tmp_path / "mask.pgm"
    save_mask(path, mask)
    assert np.array_equal(load_mask(path), mask)
    # Save-load-save must be byte stable.
    again = tmp_path / "mask2.pgm"
    save_mask(again, load_mask(path))
    assert path.read_bytes() == again.read_bytes()


def test_mask_threshold_at_128(tmp_path):
    raster = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    path = tmp_path / "soft.pgm"
    save_pgm(path, raster)
    assert np.array_equal(load_mask(path), np.array([[0, 0, 1, 1]], dtype=np.uint8))


def test_image_quantization_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    image = rng.random((6, 6))
    path = tmp_path / "img.pgm"
    save_image(path, image)
    loaded = load_image(path)
    assert np.max(np.abs(loaded - image)) <= 0.5 / 255 + 1e-12
    # Quantized values round-trip exactly afterwards.
    second = tmp_path / "img2.pgm"
    save_image(second, loaded)
    assert path.read_bytes() == second.read_bytes()


def test_header_comments_and_whitespace(tmp_path):
    path = tmp_path / "weird.pgm"
    pixels = bytes(range(6))
    path.write_bytes(b"P5\n# a comment\n 3 # widths\n2\n255\n" + pixels)
    raster = load_pgm(path)
    assert raster.shape == (2, 3)
    assert raster.ravel().tolist() == list(range(6))


def test_raster_error_cases(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(DomainError):
        load_pgm(bad)
    truncated = tmp_path / "trunc.pgm"
    truncated.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    with pytest.raises(DomainError):
        load_pgm(truncated)
    with pytest.raises(ShapeError):
        save_pgm(tmp_path / "x.pgm", np.zeros((2, 2), dtype=np.float64))
    with pytest.raises(DomainError):
        save_mask(tmp_path / "m.pgm", np.full((2, 2), 2, dtype=np.uint8))
    with pytest.raises(ShapeError):
        save_image(tmp_path / "i.pgm", np.zeros((2, 2, 4)))


# -- manifest -----------------------------------------------------------------


def _records():
    return [
        ManifestRecord("images/a.pgm", "masks/a.pgm", 0, "real", "train", 1, "src=a"),
        ManifestRecord("images/b.pgm", "masks/b.pgm", 3, "A_mask_gen", "", 2, "idx=1"),
        ManifestRecord("", "masks/c.pgm", 1, "B_propagated", "val", 3, "variant=0"),
    ]


def test_manifest_round_trip(tmp_path):
    path = tmp_path / "manifest.tsv"
    write_manifest(path, _records(), comments=["policy=test x=3"])
    records, comments = read_manifest(path)
    assert records == _records()
    assert comments == ["policy=test x=3"]


def test_manifest_validation_checks_files(tmp_path):
    path = tmp_path / "manifest.tsv"
    (tmp_path / "images").mkdir()
    (tmp_path / "masks").mkdir()
    for rec in _records():
        if rec.image_path:
            (tmp_path / rec.image_path).write_bytes(b"")
        (tmp_path / rec.mask_path).write_bytes(b"")
    write_manifest(path, _records())
    validate_manifest(path)  # all present (empty image path skipped)
    (tmp_path / "masks/c.pgm").unlink()
    with pytest.raises(DomainError, match="missing"):
        validate_manifest(path)


def test_manifest_rejects_bad_rows(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("image_path\tmask_path\n")
    with pytest.raises(DomainError):
        read_manifest(path)
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    with pytest.raises(DomainError):
        read_manifest(empty)


def test_record_field_validation():
    with pytest.raises(DomainError):
        ManifestRecord("i", "m", 0, "bogus_strategy")
    with pytest.raises(DomainError):
        ManifestRecord("i", "m", 0, "real", split="holdout")
    rec = ManifestRecord("i", "m", 0, "real")
    assert rec.with_split("test").split == "test"

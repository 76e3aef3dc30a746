import json
import struct

import numpy as np
import pytest

from adaptcd import formats
from adaptcd.errors import FormatError
from adaptcd.imaging import DenseFeatureMap, MaskSet, rle_encode


def sample_masks(rng, h=12, w=12, n=3):
    masks = []
    for _ in range(n):
        grid = (rng.random((h, w)) < 0.4).astype(np.uint8)
        grid[0, 0] = 1  # never empty
        masks.append(rle_encode(grid))
    return MaskSet(masks=tuple(masks), sources=("phase-a",) * n)


class TestDfm:
    def test_write_read_write_byte_identical(self, tmp_path, rng):
        fmap = DenseFeatureMap(rng.standard_normal((3, 5, 7)).astype(np.float32).astype(np.float64))
        p1, p2 = tmp_path / "a.dfm", tmp_path / "b.dfm"
        formats.write_dfm(p1, fmap)
        formats.write_dfm(p2, formats.read_dfm(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.dfm"
        path.write_bytes(b"XXXX" + struct.pack("<III", 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(FormatError, match="magic"):
            formats.read_dfm(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "x.dfm"
        path.write_bytes(b"DFM1" + struct.pack("<III", 1, 2, 2) + b"\x00" * 8)
        with pytest.raises(FormatError, match="payload length mismatch"):
            formats.read_dfm(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "x.dfm"
        path.write_bytes(b"DFM1" + struct.pack("<III", 1, 1, 1) + b"\x00" * 8)
        with pytest.raises(FormatError, match="payload length mismatch"):
            formats.read_dfm(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "x.dfm"
        payload = struct.pack("<f", float("nan"))
        path.write_bytes(b"DFM1" + struct.pack("<III", 1, 1, 1) + payload)
        with pytest.raises(FormatError, match="non-finite"):
            formats.read_dfm(path)

    def test_zero_dim_rejected(self, tmp_path):
        path = tmp_path / "x.dfm"
        path.write_bytes(b"DFM1" + struct.pack("<III", 0, 1, 1))
        with pytest.raises(FormatError, match="dims must be positive"):
            formats.read_dfm(path)


class TestMasksManifest:
    def test_write_read_write_byte_identical(self, tmp_path, rng):
        masks = sample_masks(rng)
        p1, p2 = tmp_path / "a.masks.json", tmp_path / "b.masks.json"
        formats.write_masks_manifest(p1, masks)
        formats.write_masks_manifest(p2, formats.read_masks_manifest(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_run_sum_mismatch_names_instance(self, tmp_path):
        doc = {"height": 2, "width": 2, "instances": [{"id": 0, "rle": [3]}]}
        path = tmp_path / "bad.masks.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="instance id 0"):
            formats.read_masks_manifest(path)

    def test_negative_run_rejected(self, tmp_path):
        doc = {"height": 2, "width": 2, "instances": [{"id": 0, "rle": [5, -1]}]}
        path = tmp_path / "bad.masks.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="negative run-length"):
            formats.read_masks_manifest(path)

    def test_sparse_ids_rejected(self, tmp_path):
        doc = {
            "height": 1,
            "width": 2,
            "instances": [{"id": 0, "rle": [0, 2]}, {"id": 2, "rle": [0, 2]}],
        }
        path = tmp_path / "bad.masks.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="dense"):
            formats.read_masks_manifest(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "bad.masks.json"
        path.write_text(json.dumps({"width": 2, "instances": []}))
        with pytest.raises(FormatError, match="missing key 'height'"):
            formats.read_masks_manifest(path)

    def test_zero_length_mid_run_rejected(self, tmp_path):
        doc = {"height": 2, "width": 2, "instances": [{"id": 0, "rle": [1, 2, 0, 1]}]}
        path = tmp_path / "bad.masks.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="zero-length run"):
            formats.read_masks_manifest(path)


class TestEmbeddingManifest:
    def test_write_read_write_byte_identical(self, tmp_path, rng):
        entries = {"mask:0": rng.standard_normal(4), "text:roofs": rng.standard_normal(4)}
        p1, p2 = tmp_path / "a.emb.json", tmp_path / "b.emb.json"
        formats.write_embedding_manifest(p1, 4, entries)
        dim, loaded = formats.read_embedding_manifest(p1)
        formats.write_embedding_manifest(p2, dim, loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_dim_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.emb.json"
        path.write_text(json.dumps({"dim": 3, "entries": {"mask:0": [1.0, 2.0]}}))
        with pytest.raises(FormatError, match="length 2 != dim 3"):
            formats.read_embedding_manifest(path)

    def test_bad_dim_rejected(self, tmp_path):
        path = tmp_path / "bad.emb.json"
        path.write_text(json.dumps({"dim": 0, "entries": {}}))
        with pytest.raises(FormatError, match="dim must be a positive integer"):
            formats.read_embedding_manifest(path)

    def test_non_finite_component_rejected(self, tmp_path):
        path = tmp_path / "bad.emb.json"
        path.write_text(json.dumps({"dim": 1, "entries": {"mask:0": [1e999]}}))
        with pytest.raises(FormatError, match="non-finite"):
            formats.read_embedding_manifest(path)


class TestPrompts:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "p.prompts.json"
        formats.write_prompts(path, "buildings, rooftops", "open ground, vegetation")
        target, background = formats.read_prompts(path)
        assert target == "buildings, rooftops"
        assert background == "open ground, vegetation"

    def test_equal_prompts_rejected(self, tmp_path):
        path = tmp_path / "p.prompts.json"
        path.write_text(json.dumps({"target": "x", "background": "x"}))
        with pytest.raises(FormatError, match="must differ"):
            formats.read_prompts(path)

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "p.prompts.json"
        path.write_text(json.dumps({"target": "x"}))
        with pytest.raises(FormatError, match="background"):
            formats.read_prompts(path)


class TestPng:
    def test_image_round_trip(self, tmp_path, rng):
        from conftest import random_image

        image = random_image(rng, 9, 13)
        path = tmp_path / "img.png"
        formats.write_image_png(path, image)
        again = formats.read_image_png(path)
        assert np.array_equal(again.data, image.data)

    def test_mask_round_trip(self, tmp_path, rng):
        grid = (rng.random((15, 10)) < 0.5).astype(np.uint8)
        mask = rle_encode(grid)
        path = tmp_path / "m.png"
        formats.write_mask_png(path, mask)
        again = formats.read_mask_png(path)
        assert np.array_equal(np.asarray(again.runs), np.asarray(mask.runs))

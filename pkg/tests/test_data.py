import hashlib

import numpy as np
import pytest

from refgame.data import (FILE_BYTES, DatasetSplit, load_cifar10,
                          record_bytes, stratified_subsample)
from refgame.errors import DataFormatError
from synthdata import synthetic_split


class TestLoadCifar10:
    def test_shapes_and_ranges(self, fake_cifar_dir):
        train, test = load_cifar10(fake_cifar_dir)
        assert train.images.shape == (50_000, 32, 32, 3)
        assert test.images.shape == (10_000, 32, 32, 3)
        assert train.images.dtype == np.float32
        assert float(train.images.min()) >= 0.0
        assert float(train.images.max()) <= 1.0
        assert train.labels.min() >= 0 and train.labels.max() <= 9

    def test_expected_file_size_constant(self):
        assert FILE_BYTES == 30_730_000 == 10_000 * 3073

    def test_deterministic_content_hash(self, fake_cifar_dir):
        hashes = []
        for _ in range(2):
            train, _ = load_cifar10(fake_cifar_dir)
            h = hashlib.sha256()
            h.update(train.images.tobytes())
            h.update(train.labels.tobytes())
            hashes.append(h.hexdigest())
        assert hashes[0] == hashes[1]

    def test_record_roundtrip(self, fake_cifar_dir):
        root = fake_cifar_dir / "cifar-10-batches-bin"
        raw = (root / "data_batch_1.bin").read_bytes()
        train, _ = load_cifar10(fake_cifar_dir)
        for i in (0, 1, 4217, 9999):
            original = raw[i * 3073:(i + 1) * 3073]
            rebuilt = record_bytes(train.images[i], int(train.labels[i]))
            assert rebuilt == original

    def test_truncated_file_rejected(self, tmp_path, fake_cifar_dir):
        import shutil
        src = fake_cifar_dir / "cifar-10-batches-bin"
        dst = tmp_path / "cifar-10-batches-bin"
        shutil.copytree(src, dst)
        path = dst / "test_batch.bin"
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(DataFormatError, match="expected 30730000 bytes"):
            load_cifar10(tmp_path)

    def test_bad_label_byte_rejected_with_offset(self, tmp_path, fake_cifar_dir):
        import shutil
        src = fake_cifar_dir / "cifar-10-batches-bin"
        dst = tmp_path / "cifar-10-batches-bin"
        shutil.copytree(src, dst)
        path = dst / "data_batch_3.bin"
        data = bytearray(path.read_bytes())
        data[7 * 3073] = 55  # corrupt the label of record 7
        path.write_bytes(bytes(data))
        with pytest.raises(DataFormatError, match=str(7 * 3073)):
            load_cifar10(tmp_path)

    def test_missing_files_reported(self, tmp_path):
        with pytest.raises(DataFormatError, match="missing"):
            load_cifar10(tmp_path)


class TestRecordBytes:
    def test_validation(self):
        with pytest.raises(ValueError):
            record_bytes(np.zeros((16, 16, 3), dtype=np.float32), 0)
        with pytest.raises(ValueError):
            record_bytes(np.zeros((32, 32, 3), dtype=np.float32), 11)

    def test_layout_planar_rgb(self):
        img = np.zeros((32, 32, 3), dtype=np.float32)
        img[0, 0, 0] = 1.0      # R plane, first byte
        img[0, 1, 1] = 1.0      # G plane, second byte
        raw = record_bytes(img, 3)
        assert len(raw) == 3073
        assert raw[0] == 3
        assert raw[1] == 255            # R plane starts at offset 1
        assert raw[1 + 1024 + 1] == 255  # G plane follows the R plane


class TestDatasetSplit:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            DatasetSplit(np.zeros((4, 32, 32, 3)), np.zeros(3, dtype=np.int64))

    def test_label_range(self):
        with pytest.raises(ValueError):
            DatasetSplit(np.zeros((2, 32, 32, 3)),
                         np.array([0, 12], dtype=np.int64))

    def test_channel_stats(self):
        split = synthetic_split(50, seed=0)
        mean, std = split.channel_stats()
        assert len(mean) == 3 and len(std) == 3
        assert all(0.0 < m < 1.0 for m in mean)
        assert all(s > 0.0 for s in std)


class TestStratifiedSubsample:
    def test_equal_class_counts(self):
        split = synthetic_split(400, seed=1)
        sub = stratified_subsample(split, 100, seed=2)
        counts = np.bincount(sub.labels, minlength=10)
        assert (counts == 10).all()

    def test_deterministic(self):
        split = synthetic_split(400, seed=1)
        a = stratified_subsample(split, 100, seed=3)
        b = stratified_subsample(split, 100, seed=3)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_non_multiple_rejected(self):
        split = synthetic_split(400, seed=1)
        with pytest.raises(ValueError):
            stratified_subsample(split, 55, seed=0)

    def test_insufficient_class_pool_rejected(self):
        split = synthetic_split(40, seed=1)
        with pytest.raises(ValueError):
            stratified_subsample(split, 400, seed=0)

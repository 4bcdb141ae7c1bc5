"""Tests for corpus synthesis, splits, masks and tile-crop augmentation."""

import json

import numpy as np
import pytest

from inpainting.dsp import AudioClip, StftParams
from inpainting.errors import DataError
from inpainting.protocol import (
    MANIFEST_NAME,
    FixedMask,
    MaskSpec,
    RandomMask,
    apply_mask,
    augment_tile_crop,
    generate_corpus,
    mask_for_policy,
    preset,
    random_mask_spec,
    read_corpus,
    split_for_index,
    tile_crop,
    write_corpus,
)
from inpainting.wavio import wav_bytes


@pytest.fixture
def tiny_corpus(tiny_corpus_spec):
    return generate_corpus(tiny_corpus_spec)


class TestCorpus:
    def test_generation_is_deterministic(self, tiny_corpus_spec, tiny_corpus):
        again = generate_corpus(tiny_corpus_spec)
        assert [c.clip_id for c in again.clips] == [c.clip_id for c in tiny_corpus.clips]
        for a, b in zip(tiny_corpus.clips, again.clips):
            assert wav_bytes(a.clip) == wav_bytes(b.clip)

    def test_seed_changes_audio(self, tiny_corpus_spec, tiny_corpus):
        other = generate_corpus(tiny_corpus_spec.model_copy(update={"seed": 1}))
        assert not np.array_equal(other.clips[0].clip.samples, tiny_corpus.clips[0].clip.samples)

    def test_clip_shape_and_level(self, tiny_corpus_spec, tiny_corpus):
        assert len(tiny_corpus.clips) == tiny_corpus_spec.class_count * 3
        for item in tiny_corpus.clips:
            assert len(item.clip) == 4000
            assert item.clip.sample_rate == 16000
            peak = np.max(np.abs(item.clip.samples))
            assert 0.5 <= peak <= 0.95 + 1e-9

    def test_every_class_represented(self, tiny_corpus):
        assert sorted({c.label for c in tiny_corpus.clips}) == list(range(10))
        assert tiny_corpus.clips[0].class_name == "c00_tone_chord"

    def test_split_proportions(self):
        splits = [split_for_index(i, 10) for i in range(10)]
        assert splits.count("train") == 7
        assert splits.count("val") == 1
        assert splits.count("test") == 2
        thirty = [split_for_index(i, 30) for i in range(30)]
        assert (thirty.count("train"), thirty.count("val"), thirty.count("test")) == (21, 3, 6)

    def test_looped_texture(self):
        spec = preset("toy-esc", examples_per_class=1)
        corpus = generate_corpus(spec)
        assert len(corpus.clips) == 6
        assert all(len(c.clip) == 5 * 16000 for c in corpus.clips)
        assert all(np.all(np.isfinite(c.clip.samples)) for c in corpus.clips)

    def test_unknown_preset(self):
        with pytest.raises(DataError):
            preset("toy-imagenet")

    def test_class_count_must_match_generators(self):
        with pytest.raises(ValueError):
            preset("toy-sc", class_count=3)


class TestManifest:
    def test_write_then_read(self, tmp_path, tiny_corpus):
        path = write_corpus(tiny_corpus, tmp_path)
        assert path.name == MANIFEST_NAME
        manifest = json.loads(path.read_text())
        assert set(manifest["clips"][0]) == {"clip_id", "class", "label", "split", "path", "seed"}
        back = read_corpus(tmp_path)
        assert back.spec == tiny_corpus.spec
        assert [c.clip_id for c in back.clips] == [c.clip_id for c in tiny_corpus.clips]
        assert [c.split for c in back.clips] == [c.split for c in tiny_corpus.clips]
        for a, b in zip(back.clips, tiny_corpus.clips):
            assert np.max(np.abs(a.clip.samples - b.clip.samples)) < 1e-4

    def test_rewrite_is_byte_identical(self, tmp_path, tiny_corpus_spec):
        first = write_corpus(generate_corpus(tiny_corpus_spec), tmp_path / "a")
        second = write_corpus(generate_corpus(tiny_corpus_spec), tmp_path / "b")
        assert first.read_bytes() == second.read_bytes()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            read_corpus(tmp_path)

    def test_corrupt_manifest(self, tmp_path):
        (tmp_path / MANIFEST_NAME).write_text(json.dumps({"clips": []}))
        with pytest.raises(DataError):
            read_corpus(tmp_path)


class TestMasks:
    def test_fixed_mask_in_samples(self, rng):
        clip = AudioClip(rng.uniform(0.1, 0.9, 16000), 16000)
        masked, mask = apply_mask(clip, FixedMask(start_seconds=0.4, end_seconds=0.6))
        assert (mask.start, mask.end) == (6400, 9600)
        assert mask.masked_samples == 3200
        assert np.count_nonzero(masked.samples == 0.0) == 3200
        assert np.array_equal(masked.samples[:6400], clip.samples[:6400])
        assert np.array_equal(masked.samples[9600:], clip.samples[9600:])

    def test_frame_mask_of_one_second_clip(self):
        frames = MaskSpec(6400, 9600, 16000).frame_mask(StftParams())
        assert frames.size == 126
        assert np.array_equal(np.flatnonzero(frames), np.arange(49, 77))

    def test_frame_mask_of_long_clip(self):
        mask = MaskSpec.from_seconds(3.0, 3.4, 16000, 80000)
        frames = mask.frame_mask(StftParams())
        assert frames.size == 626
        assert np.array_equal(np.flatnonzero(frames), np.arange(374, 427))

    @pytest.mark.parametrize("start, end", [(0, 10), (10, 10), (20, 10), (10, 100)])
    def test_mask_must_sit_inside_clip(self, start, end):
        with pytest.raises(DataError):
            MaskSpec(start, end, 100)

    def test_random_mask_is_seeded(self, noise_clip):
        policy = RandomMask(seconds=0.05, seed=3)
        first = mask_for_policy(noise_clip, policy)
        assert first == mask_for_policy(noise_clip, policy)
        assert first.masked_samples == 800
        assert 0 < first.start and first.end < len(noise_clip)

    def test_random_mask_spec_bounds(self, rng):
        for _ in range(50):
            mask = random_mask_spec(100, 30, rng)
            assert 1 <= mask.start and mask.end <= 99
        with pytest.raises(DataError):
            random_mask_spec(100, 99, rng)

    def test_fixed_mask_errors(self, noise_clip):
        with pytest.raises(DataError):
            mask_for_policy(noise_clip, FixedMask(start_seconds=0.2, end_seconds=0.1))
        with pytest.raises(DataError):
            mask_for_policy(noise_clip, FixedMask(start_seconds=0.0, end_seconds=1.0))


class TestTileCrop:
    def test_offset_zero_is_identity(self, noise_clip):
        assert np.array_equal(tile_crop(noise_clip, len(noise_clip), 0).samples, noise_clip.samples)

    def test_offset_is_cyclic_shift(self, noise_clip):
        cropped = tile_crop(noise_clip, len(noise_clip), 1000)
        assert np.array_equal(cropped.samples, np.roll(noise_clip.samples, -1000))

    def test_bad_crop(self, noise_clip):
        with pytest.raises(DataError):
            tile_crop(noise_clip, 3 * len(noise_clip), 0)
        with pytest.raises(DataError):
            tile_crop(noise_clip, len(noise_clip), len(noise_clip) + 1)

    def test_augment_length_and_seed(self, sine_clip):
        a = augment_tile_crop(sine_clip, 0.2, seed=5)
        b = augment_tile_crop(sine_clip, 0.2, seed=5)
        assert len(a) == 3200
        assert np.array_equal(a.samples, b.samples)
        with pytest.raises(DataError):
            augment_tile_crop(sine_clip, 1.0, seed=5)

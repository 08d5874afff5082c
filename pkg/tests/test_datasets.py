import json

import numpy as np
import pytest

from sdoa.arrays import ArrayConfig, CurriculumStage, ImperfectionCaps
from sdoa.datasets import (
    DoaSamplingPolicy,
    generate_dataset,
    load_dataset,
    sample_sources,
    save_dataset,
    sidecar_path,
)

ARRAY = ArrayConfig(n_antennas=16)
CAPS = ImperfectionCaps()
POLICY = DoaSamplingPolicy(n_sources=3)


class TestSamplingPolicy:
    def test_separation_holds_over_many_draws(self):
        for seed in range(10_000):
            src = sample_sources(POLICY, seed)
            assert np.min(np.diff(src.doas_deg)) >= POLICY.min_separation_deg
            assert np.all(src.doas_deg >= POLICY.min_deg)
            assert np.all(src.doas_deg <= POLICY.max_deg)

    def test_unit_modulus_amplitudes(self):
        src = sample_sources(POLICY, 0)
        assert np.allclose(np.abs(src.amplitudes), 1.0)

    def test_infeasible_separation_rejected(self):
        with pytest.raises(ValueError):
            DoaSamplingPolicy(n_sources=13, min_separation_deg=10.0)


class TestGenerateDataset:
    def test_deterministic(self):
        a = generate_dataset(ARRAY, CAPS, CurriculumStage.ALL_EFFECTS, 64, (0, 30), POLICY, 1)
        b = generate_dataset(ARRAY, CAPS, CurriculumStage.ALL_EFFECTS, 64, (0, 30), POLICY, 1)
        for x, y in zip(a, b):
            assert np.array_equal(x.received, y.received)
            assert np.array_equal(x.truth.doas_deg, y.truth.doas_deg)
            assert x.snr_db == y.snr_db

    def test_perfect_schedule_ignores_caps(self):
        # with the perfect stage everywhere, the imperfect factor is irrelevant
        hot = generate_dataset(ARRAY, CAPS.with_factor(1.0), CurriculumStage.PERFECT, 16, (10, 10), POLICY, 3)
        cold = generate_dataset(ARRAY, CAPS.with_factor(0.0), CurriculumStage.PERFECT, 16, (10, 10), POLICY, 3)
        for x, y in zip(hot, cold):
            assert np.array_equal(x.received, y.received)

    def test_schedule_round_robin(self):
        stages = [CurriculumStage.PERFECT, CurriculumStage.NONLINEAR]
        data = generate_dataset(ARRAY, CAPS, stages, 6, (10, 10), POLICY, 0)
        assert [s.stage for s in data] == stages * 3

    def test_scene_independent_of_imperfect_factor(self):
        # paired trials: xi only changes the imperfections, not the scene
        full = generate_dataset(ARRAY, CAPS, CurriculumStage.ALL_EFFECTS, 8, (0, 30), POLICY, 9)
        none = generate_dataset(ARRAY, CAPS.with_factor(0.0), CurriculumStage.ALL_EFFECTS, 8, (0, 30), POLICY, 9)
        for x, y in zip(full, none):
            assert np.array_equal(x.truth.doas_deg, y.truth.doas_deg)
            assert x.snr_db == y.snr_db
            assert not np.array_equal(x.received, y.received)

    def test_bad_sample_count(self):
        with pytest.raises(ValueError):
            generate_dataset(ARRAY, CAPS, CurriculumStage.PERFECT, 0, (0, 30), POLICY, 0)


class TestContainerFormat:
    def test_round_trip(self, tmp_path):
        data = generate_dataset(ARRAY, CAPS, CurriculumStage.ALL_EFFECTS, 12, (0, 30), POLICY, 5)
        path = save_dataset(tmp_path / "d.sdoa", data, {"seed": 5})
        loaded, meta = load_dataset(path)
        assert meta["seed"] == 5
        assert meta["count"] == 12
        for orig, back in zip(data, loaded):
            assert np.array_equal(orig.received, back.received)
            assert np.array_equal(orig.truth.doas_deg, back.truth.doas_deg)
            assert np.array_equal(orig.truth.amplitudes, back.truth.amplitudes)
            assert orig.snr_db == back.snr_db
            assert orig.stage == back.stage

    def test_byte_identical_saves(self, tmp_path):
        data = generate_dataset(ARRAY, CAPS, CurriculumStage.ALL_EFFECTS, 8, (0, 30), POLICY, 2)
        p1 = save_dataset(tmp_path / "a.sdoa", data, {"seed": 2})
        p2 = save_dataset(tmp_path / "b.sdoa", data, {"seed": 2})
        assert p1.read_bytes() == p2.read_bytes()
        assert sidecar_path(p1).read_text() == sidecar_path(p2).read_text()

    def test_header_count(self, tmp_path):
        data = generate_dataset(ARRAY, CAPS, CurriculumStage.PERFECT, 128, (0, 30), POLICY, 1)
        path = save_dataset(tmp_path / "c.sdoa", data)
        import struct

        magic, version, n, k, count = struct.unpack_from("<4sIIIQ", path.read_bytes())
        assert magic == b"SDOA"
        assert (version, n, k, count) == (1, 16, 3, 128)

    def test_sidecar_is_json(self, tmp_path):
        data = generate_dataset(ARRAY, CAPS, CurriculumStage.PERFECT, 4, (0, 30), POLICY, 1)
        path = save_dataset(tmp_path / "e.sdoa", data, {"policy": {"k": 3}})
        meta = json.loads(sidecar_path(path).read_text())
        assert meta["policy"] == {"k": 3}

    def test_rejects_truncated_file(self, tmp_path):
        bad = tmp_path / "bad.sdoa"
        bad.write_bytes(b"SD")
        with pytest.raises(ValueError):
            load_dataset(bad)

    def test_rejects_wrong_magic(self, tmp_path):
        bad = tmp_path / "bad2.sdoa"
        bad.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(ValueError):
            load_dataset(bad)

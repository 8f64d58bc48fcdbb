"""Sampling plan, trajectory collection, and store round-trips."""

import json
import os
import struct

import numpy as np
import numpy.testing as npt
import pytest

from homog2.geometry import fixture_path, load_mesh, solve_auxiliary_transform
from homog2.material import Material
from homog2.micro import MacroInput, build_constraints, newton_tolerance, point_fields, solve_micro
from homog2.snapshots import (
    TRAIN_ZETAS,
    LoadBounds,
    collect_paths,
    collect_samples,
    draw_samples,
    load_store,
    sample_path,
    save_store,
)


@pytest.fixture(scope="module")
def mesh():
    return load_mesh(fixture_path("rve_coarse.json"))


@pytest.fixture(scope="module")
def tiny_set(mesh):
    # two short, mild trajectories at distinct shape values
    mat = Material()
    a = MacroInput(np.array([[0.99, 0.01], [0.0, 1.005]]), 0.01 * np.ones(6), 0.0)
    b = MacroInput(np.array([[1.005, -0.01], [0.01, 0.99]]), -0.01 * np.ones(6), 0.04)
    paths = [
        [MacroInput.identity(0.0).blend(a, t) for t in (1 / 3, 2 / 3, 1.0)],
        [MacroInput.identity(0.04).blend(b, t) for t in (1 / 3, 2 / 3, 1.0)],
    ]
    return collect_paths(mesh, mat, paths, mesh_name="rve_coarse.json"), paths


class TestSamplingPlan:
    def test_default_campaign_shape(self):
        specs = draw_samples()
        assert len(specs) == 100
        for z in TRAIN_ZETAS:
            assert sum(s.zeta == z for s in specs) == 20
        assert [s.sample for s in specs] == list(range(100))
        assert all(s.n_steps == 20 for s in specs)

    def test_bounds_respected(self):
        specs = draw_samples(n_per_zeta=50, zetas=(0.0,), seed=1)
        f = np.array([s.fbar for s in specs])
        g = np.array([s.g6 for s in specs])
        assert f[:, 0, 0].min() >= 0.90 and f[:, 0, 0].max() <= 1.02
        assert f[:, 1, 1].min() >= 0.90 and f[:, 1, 1].max() <= 1.02
        assert np.abs(f[:, 0, 1]).max() <= 0.10
        assert np.abs(f[:, 1, 0]).max() <= 0.10
        assert np.abs(g).max() <= 0.05
        # the box is actually explored
        assert f[:, 0, 0].min() < 0.93 and np.abs(g).max() > 0.03

    def test_seed_reproducible(self):
        a = draw_samples(n_per_zeta=3, seed=5)
        b = draw_samples(n_per_zeta=3, seed=5)
        c = draw_samples(n_per_zeta=3, seed=6)
        npt.assert_array_equal([s.fbar for s in a], [s.fbar for s in b])
        assert not np.allclose([s.fbar for s in a], [s.fbar for s in c])

    def test_custom_bounds(self):
        bounds = LoadBounds(stretch_lo=-0.01, stretch_hi=0.01, shear=0.02, gradient=0.005)
        specs = draw_samples(n_per_zeta=20, zetas=(0.0,), seed=2, bounds=bounds)
        f = np.array([s.fbar for s in specs])
        assert np.abs(f[:, 0, 0] - 1.0).max() <= 0.01
        assert np.abs([s.g6 for s in specs]).max() <= 0.005

    def test_sample_path_excludes_unloaded_state(self):
        spec = draw_samples(n_per_zeta=1, zetas=(0.025,), seed=3, n_steps=5)[0]
        path = sample_path(spec)
        assert len(path) == 5
        first = path[0]
        assert np.abs(first.fbar - np.eye(2)).max() > 0.0
        npt.assert_allclose(first.fbar, np.eye(2) + (spec.fbar - np.eye(2)) / 5)
        npt.assert_allclose(path[-1].fbar, spec.fbar)
        npt.assert_allclose(path[-1].g6, spec.g6)
        assert all(p.zeta == 0.025 for p in path)


class TestCollection:
    def test_record_layout(self, tiny_set):
        snaps, paths = tiny_set
        assert snaps.n_records == 6
        assert [r["path"] for r in snaps.records] == [0, 0, 0, 1, 1, 1]
        assert [r["step"] for r in snaps.records] == [1, 2, 3, 1, 2, 3]
        assert snaps.zetas() == [0.0, 0.04]
        assert snaps.w.shape == (6, 778)
        assert snaps.y.shape == (6, 420, 2, 2)
        assert snaps.yh.shape == (6, 420, 2, 2, 2)

    def test_all_records_converged(self, tiny_set):
        snaps, _ = tiny_set
        tol = newton_tolerance(Material())
        assert all(r["residual"] <= tol for r in snaps.records)

    def test_fields_match_independent_resolve(self, mesh, tiny_set):
        # last state of the first path, solved cold, must reproduce the
        # warm-started trajectory fields
        snaps, paths = tiny_set
        mat = Material()
        tmap = solve_auxiliary_transform(mesh, 0.0)
        cons = build_constraints(mesh, tmap)
        sol = solve_micro(mesh, tmap, mat, cons, paths[0][-1], keep_saddle=False)
        y, yh = point_fields(mesh, tmap, mat, paths[0][-1], sol.w)
        npt.assert_allclose(snaps.w[2], sol.w, atol=1e-8)
        npt.assert_allclose(snaps.y[2], y.reshape(420, 2, 2), atol=1e-8)
        npt.assert_allclose(snaps.yh[2], yh.reshape(420, 2, 2, 2), atol=1e-8)

    def test_mixed_zeta_path_rejected(self, mesh):
        mat = Material()
        path = [MacroInput.identity(0.0), MacroInput.identity(0.01)]
        with pytest.raises(ValueError):
            collect_paths(mesh, mat, [path])

    def test_collect_samples_metadata(self, mesh):
        mat = Material()
        bounds = LoadBounds(stretch_lo=-0.01, stretch_hi=0.01, shear=0.01, gradient=0.005)
        specs = draw_samples(n_per_zeta=1, zetas=(0.0,), seed=4, bounds=bounds, n_steps=2)
        snaps = collect_samples(mesh, mat, specs, mesh_name="rve_coarse.json")
        assert snaps.n_records == 2
        assert all(r["sample"] == 0 for r in snaps.records)
        assert snaps.records[0]["n_steps"] == 2


class TestStore:
    def test_roundtrip_exact(self, tiny_set, tmp_path):
        snaps, _ = tiny_set
        store = tmp_path / "snaps"
        save_store(store, snaps)
        back = load_store(store)
        npt.assert_array_equal(back.w, snaps.w)
        npt.assert_array_equal(back.y, snaps.y)
        npt.assert_array_equal(back.yh, snaps.yh)
        assert back.records == snaps.records
        assert back.mesh_name == "rve_coarse.json"
        assert back.material == Material()

    def test_on_disk_layout(self, tiny_set, tmp_path):
        snaps, _ = tiny_set
        store = tmp_path / "snaps"
        save_store(store, snaps)
        assert os.path.getsize(store / "w.f64") == 6 * 778 * 8
        assert os.path.getsize(store / "y.f64") == 6 * 420 * 4 * 8
        assert os.path.getsize(store / "yh.f64") == 6 * 420 * 8 * 8
        manifest = json.loads((store / "manifest.json").read_text())
        assert manifest["format"] == "homog2-snapshots-1"
        assert manifest["arrays"]["w"]["shape"] == [6, 778]
        # raw little-endian float64, first entry matches in-memory array
        raw = (store / "w.f64").read_bytes()[:8]
        assert struct.unpack("<d", raw)[0] == snaps.w[0, 0]

    def test_reject_foreign_directory(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"format": "other"}))
        with pytest.raises(ValueError):
            load_store(tmp_path)

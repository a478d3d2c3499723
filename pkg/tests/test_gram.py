import numpy as np
import pytest

import dyntex as dx
from dyntex.gram import GramMatrix, TextureStatistics, worker_count
from dyntex.errors import (
    ConsistencyError,
    MissingMetadataError,
    ShapeError,
    UnsupportedVersionError,
)

from conftest import make_net, random_frames


def gram_loop_oracle(f):
    """(1/M) F^T F by explicit summation."""
    m, k = f.shape
    g = np.zeros((k, k), dtype=f.dtype)
    for i in range(k):
        for j in range(k):
            g[i, j] = sum(f[r, i] * f[r, j] for r in range(m)) / m
    return g


def stats_window_oracle(frames, net, layers, delta_t):
    """Materialize every length-delta_t window independently, average the
    per-window Grams with np.mean; no sharing of feature computations."""
    t = len(frames)
    out = {}
    for name in layers:
        per_window = []
        for s in range(t - delta_t + 1):
            mats = [
                dx.forward_features(net, frames[s + k], [name]).feature_matrix(name)
                for k in range(delta_t)
            ]
            fw = np.hstack(mats) if len(mats) > 1 else mats[0]
            per_window.append(fw.T @ fw / fw.shape[0])
        out[name] = np.mean(per_window, axis=0)
    return out


class TestConcatWindow:
    def test_two_frames_concatenate_along_channels(self):
        a = np.arange(6.0).reshape(3, 2)
        b = -np.arange(6.0).reshape(3, 2)
        c = dx.concat_window([a, b])
        assert c.shape == (3, 4)
        np.testing.assert_array_equal(c[:, :2], a)
        np.testing.assert_array_equal(c[:, 2:], b)

    def test_single_frame_is_passthrough(self):
        a = np.ones((4, 3))
        assert dx.concat_window([a]) is a

    def test_mismatch_and_empty_rejected(self):
        with pytest.raises(ShapeError):
            dx.concat_window([np.ones((3, 2)), np.ones((4, 2))])
        with pytest.raises(ShapeError):
            dx.concat_window([])


class TestGram:
    def test_hand_value(self):
        f = np.array([[1.0, 2.0], [3.0, 4.0]])  # M=2
        g = dx.gram(f)
        np.testing.assert_allclose(g, [[5.0, 7.0], [7.0, 10.0]])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        f = rng.normal(size=(9, 5))
        np.testing.assert_allclose(dx.gram(f), gram_loop_oracle(f), atol=1e-13)

    def test_normalization_by_rows(self):
        f = np.ones((8, 3))
        np.testing.assert_allclose(dx.gram(f), np.ones((3, 3)))


class TestGramMatrixType:
    def test_block_indexing(self):
        v = np.arange(36.0).reshape(6, 6)
        g = GramMatrix("l", 3, v)
        assert g.channels == 2
        np.testing.assert_array_equal(g.block(0, 1), v[0:2, 2:4])
        np.testing.assert_array_equal(g.block(2, 2), v[4:6, 4:6])

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            GramMatrix("l", 1, np.zeros((2, 3)))

    def test_indivisible_side_rejected(self):
        with pytest.raises(ConsistencyError):
            GramMatrix("l", 2, np.zeros((5, 5)))


class TestComputeStatistics:
    @pytest.mark.parametrize("t", [1, 2, 3, 4, 5])
    @pytest.mark.parametrize("delta_t", [1, 2, 3])
    def test_matches_window_oracle(self, tiny_net, t, delta_t):
        if t < delta_t:
            with pytest.raises(ConsistencyError, match="T < delta_t"):
                dx.compute_statistics(
                    random_frames(np.random.default_rng(0), t), tiny_net,
                    ["relu1"], delta_t,
                )
            return
        rng = np.random.default_rng(10 * t + delta_t)
        frames = random_frames(rng, t)
        layers = ["relu1", "relu2"]
        stats = dx.compute_statistics(frames, tiny_net, layers, delta_t)
        oracle = stats_window_oracle(frames, tiny_net, layers, delta_t)
        for name in layers:
            np.testing.assert_allclose(stats.grams[name].values, oracle[name], atol=1e-10)

    def test_delta_t_1_is_average_of_static_grams(self, flat_net):
        rng = np.random.default_rng(2)
        frames = random_frames(rng, 4, h=7, w=7)
        stats = dx.compute_statistics(frames, flat_net, ["relu1"], 1)
        per_frame = [
            dx.gram(dx.forward_features(flat_net, f, ["relu1"]).feature_matrix("relu1"))
            for f in frames
        ]
        np.testing.assert_allclose(stats.grams["relu1"].values, np.mean(per_frame, axis=0),
                                   atol=1e-12)

    def test_diagonal_blocks_are_averaged_static_grams(self, tiny_net):
        rng = np.random.default_rng(4)
        frames = random_frames(rng, 5)
        delta_t = 3
        stats = dx.compute_statistics(frames, tiny_net, ["relu2"], delta_t)
        n_windows = len(frames) - delta_t + 1
        per_frame = [
            dx.gram(dx.forward_features(tiny_net, f, ["relu2"]).feature_matrix("relu2"))
            for f in frames
        ]
        for k in range(delta_t):
            want = np.mean([per_frame[s + k] for s in range(n_windows)], axis=0)
            np.testing.assert_allclose(stats.grams["relu2"].block(k, k), want, atol=1e-10)

    def test_parameter_growth_is_delta_t_squared(self):
        net = make_net([("conv", 64, 3, 1, 1)], seed=1)
        frames = random_frames(np.random.default_rng(0), 4, h=6, w=6)
        static = dx.compute_statistics(frames, net, ["conv1"], 1)
        assert static.grams["conv1"].values.size == 64 * 64
        for delta_t, factor in ((2, 4), (4, 16)):
            stats = dx.compute_statistics(frames, net, ["conv1"], delta_t)
            assert stats.grams["conv1"].values.size == factor * 64 * 64

    def test_frame_order_matters_for_delta_t_2(self, tiny_net):
        rng = np.random.default_rng(5)
        frames = random_frames(rng, 3)
        fwd = dx.compute_statistics(frames, tiny_net, ["relu1"], 2)
        rev = dx.compute_statistics(frames[::-1], tiny_net, ["relu1"], 2)
        assert np.abs(fwd.grams["relu1"].values - rev.grams["relu1"].values).max() > 1e-6

    def test_time_reversal_permutes_blocks(self, tiny_net):
        """Reversing the video conjugates the statistics by the block-reversal
        permutation: G_rev = P^T G P with P reversing the frame blocks."""
        rng = np.random.default_rng(6)
        frames = random_frames(rng, 4)
        delta_t = 2
        fwd = dx.compute_statistics(frames, tiny_net, ["relu1"], delta_t)
        rev = dx.compute_statistics(frames[::-1], tiny_net, ["relu1"], delta_t)
        g = fwd.grams["relu1"].values
        n = fwd.grams["relu1"].channels
        perm = np.concatenate([np.arange((delta_t - 1 - k) * n, (delta_t - k) * n)
                               for k in range(delta_t)])
        np.testing.assert_allclose(rev.grams["relu1"].values, g[np.ix_(perm, perm)],
                                   atol=1e-10)

    def test_full_period_stationarity_delta_t_2(self, tiny_net):
        """Period-2 source sampled over whole periods: 2 windows or 50 windows
        of the same two kinds average to the same statistics."""
        rng = np.random.default_rng(7)
        a, b = random_frames(rng, 2)
        short = [a, b, a]           # windows: (a,b), (b,a)
        long = ([a, b] * 26)[:51]   # 50 windows, 25 of each kind
        s1 = dx.compute_statistics(short, tiny_net, ["relu1"], 2)
        s2 = dx.compute_statistics(long, tiny_net, ["relu1"], 2)
        np.testing.assert_allclose(s1.grams["relu1"].values, s2.grams["relu1"].values,
                                   atol=1e-10)

    def test_constant_video_statistics_are_length_invariant(self, tiny_net):
        frame = random_frames(np.random.default_rng(8), 1)[0]
        s2 = dx.compute_statistics([frame] * 2, tiny_net, ["relu1"], 2)
        s9 = dx.compute_statistics([frame] * 9, tiny_net, ["relu1"], 2)
        np.testing.assert_allclose(s2.grams["relu1"].values, s9.grams["relu1"].values,
                                   atol=1e-10)

    def test_symmetry_and_psd(self, tiny_net):
        frames = random_frames(np.random.default_rng(9), 4)
        stats = dx.compute_statistics(frames, tiny_net, ["relu1", "relu2"], 2)
        for g in stats.grams.values():
            assert (g.values == g.values.T).all()
            assert np.linalg.eigvalsh(g.values).min() >= -1e-10

    def test_worker_count_env_override(self, monkeypatch):
        monkeypatch.setenv("DYNTEX_THREADS", "2")
        assert worker_count() == 2
        monkeypatch.setenv("DYNTEX_THREADS", "junk")
        assert worker_count() >= 1

    def test_results_independent_of_worker_count(self, tiny_net):
        frames = random_frames(np.random.default_rng(11), 5)
        s1 = dx.compute_statistics(frames, tiny_net, ["relu1"], 2, workers=1)
        s4 = dx.compute_statistics(frames, tiny_net, ["relu1"], 2, workers=4)
        assert (s1.grams["relu1"].values == s4.grams["relu1"].values).all()

    def test_source_meta_recorded(self, tiny_net):
        frames = random_frames(np.random.default_rng(12), 3)
        stats = dx.compute_statistics(frames, tiny_net, ["relu1"], 2)
        assert stats.source_meta == {"frames": 3, "frame_dims": [8, 8, 3]}
        assert stats.frame_dims == (8, 8, 3)

    def test_bad_inputs_rejected(self, tiny_net):
        frames = random_frames(np.random.default_rng(13), 3)
        with pytest.raises(ConsistencyError):
            dx.compute_statistics(frames, tiny_net, [], 1)
        with pytest.raises(ConsistencyError):
            dx.compute_statistics(frames, tiny_net, ["relu1"], 0)
        bad = frames[:2] + [np.zeros((4, 4, 3))]
        with pytest.raises(ShapeError):
            dx.compute_statistics(bad, tiny_net, ["relu1"], 1)


class TestStatisticsType:
    def test_weight_validation(self):
        g = GramMatrix("l", 1, np.eye(2))
        with pytest.raises(ConsistencyError):
            TextureStatistics(1, ["l"], [0.0], {"l": g})
        with pytest.raises(ConsistencyError):
            TextureStatistics(1, ["l"], [1.0, 2.0], {"l": g})
        with pytest.raises(ConsistencyError):
            TextureStatistics(1, ["l"], [1.0], {})

    def test_delta_t_consistency(self):
        g = GramMatrix("l", 2, np.eye(4))
        with pytest.raises(ConsistencyError):
            TextureStatistics(1, ["l"], [1.0], {"l": g})

    def test_delta_t_exceeding_source_rejected(self):
        g = GramMatrix("l", 2, np.eye(4))
        with pytest.raises(ConsistencyError):
            TextureStatistics(2, ["l"], [1.0], {"l": g}, source_meta={"frames": 1})


class TestSaveLoad:
    def make_stats(self, tiny_net):
        frames = random_frames(np.random.default_rng(20), 4)
        return dx.compute_statistics(frames, tiny_net, ["relu1", "relu2"], 2,
                                     weights=[1.0, 0.5])

    def test_round_trip(self, tiny_net, tmp_path):
        stats = self.make_stats(tiny_net)
        path = tmp_path / "tex.dtxs"
        dx.save_statistics(stats, path)
        back = dx.load_statistics(path)
        assert back.delta_t == 2
        assert back.layer_names == ["relu1", "relu2"]
        assert back.layer_weights == [1.0, 0.5]
        assert back.source_meta == stats.source_meta
        for name in stats.layer_names:
            np.testing.assert_array_equal(
                back.grams[name].values, stats.grams[name].values.astype(np.float32)
            )

    def test_missing_sidecar(self, tiny_net, tmp_path):
        path = tmp_path / "tex.dtxs"
        dx.save_statistics(self.make_stats(tiny_net), path)
        (tmp_path / "tex.dtxs.meta.json").unlink()
        with pytest.raises(MissingMetadataError):
            dx.load_statistics(path)

    def test_version_check(self, tiny_net, tmp_path):
        import json
        path = tmp_path / "tex.dtxs"
        dx.save_statistics(self.make_stats(tiny_net), path)
        side = tmp_path / "tex.dtxs.meta.json"
        meta = json.loads(side.read_text())
        meta["format_version"] = 99
        side.write_text(json.dumps(meta))
        with pytest.raises(UnsupportedVersionError):
            dx.load_statistics(path)

    def test_sidecar_tensor_mismatch(self, tiny_net, tmp_path):
        import json
        path = tmp_path / "tex.dtxs"
        stats = self.make_stats(tiny_net)
        dx.save_statistics(stats, path)
        side = tmp_path / "tex.dtxs.meta.json"
        meta = json.loads(side.read_text())
        meta["layer_names"] = ["relu1", "relu_gone"]
        side.write_text(json.dumps(meta))
        with pytest.raises(ConsistencyError, match="relu_gone"):
            dx.load_statistics(path)

    def test_channel_count_mismatch(self, tiny_net, tmp_path):
        import json
        path = tmp_path / "tex.dtxs"
        dx.save_statistics(self.make_stats(tiny_net), path)
        side = tmp_path / "tex.dtxs.meta.json"
        meta = json.loads(side.read_text())
        meta["layer_channels"] = [5, 6]  # relu1 really has 4
        side.write_text(json.dumps(meta))
        with pytest.raises(ConsistencyError, match="relu1"):
            dx.load_statistics(path)

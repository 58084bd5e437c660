import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from semantic_vtr.descriptor import MatchConfig, ReferenceMemory, SceneDescriptor, scene_similarity
from semantic_vtr.relocalization import (
    DEFAULT_VELOCITIES,
    LocalizationEstimate,
    MemoryIndex,
    RelocConfig,
    SequenceLocalizer,
    apply_temporality,
    best_line_search,
    build_similarity_table,
    temporality_factor,
    update_localization,
    write_table_csv,
)

from helpers import brute_force_line_search, det, diagonal_table, random_memory, random_scene


def test_default_velocity_grid():
    assert len(DEFAULT_VELOCITIES) == 16
    assert DEFAULT_VELOCITIES[0] == 0.5 and DEFAULT_VELOCITIES[-1] == 2.0
    assert all(abs(b - a - 0.1) < 1e-9 for a, b in zip(DEFAULT_VELOCITIES, DEFAULT_VELOCITIES[1:]))


@pytest.mark.parametrize(
    "kw", [dict(window=0), dict(velocities=(0.5, 0.0)), dict(velocities=()), dict(beta=-1),
           dict(gamma=0), dict(history_length=0)],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RelocConfig(**kw)


class TestSimilarityTable:
    def test_identical_single(self):
        s = SceneDescriptor((det(3, 0.1, 0.1, 0.4, 0.4),))
        mem = ReferenceMemory((s,))
        assert build_similarity_table([s], mem, MatchConfig(alpha=4.0)).tolist() == [[1.0]]

    def test_empty_reference_column(self):
        s = SceneDescriptor((det(3, 0.1, 0.1, 0.4, 0.4),))
        mem = ReferenceMemory((s, SceneDescriptor()))
        t = build_similarity_table([s, s], mem, MatchConfig())
        assert (t[:, 1] == 0).all()

    def test_rejects_empty_window(self):
        with pytest.raises(ValueError):
            build_similarity_table([], ReferenceMemory((SceneDescriptor(),)), MatchConfig())

    @pytest.mark.parametrize("seed", range(5))
    def test_cells_match_scene_similarity(self, seed):
        rng = np.random.default_rng(seed)
        mem = random_memory(rng, max_keyframes=12)
        recent = [random_scene(rng, int(rng.integers(0, 6)), mem.vocab_size) for _ in range(4)]
        cfg = MatchConfig(alpha=float(rng.uniform(1, 5)))
        t = build_similarity_table(recent, mem, cfg)
        assert t.shape == (4, len(mem))
        for i, cur in enumerate(recent):
            for j, ref in enumerate(mem.keyframes):
                assert t[i, j] == scene_similarity(ref, cur, cfg)

    @pytest.mark.parametrize("seed", range(8))
    def test_memory_index_agrees(self, seed):
        # a small vocabulary forces repeated classes, exercising the greedy fallback
        rng = np.random.default_rng(seed)
        kfs = tuple(random_scene(rng, int(rng.integers(0, 7)), 4) for _ in range(15))
        mem = ReferenceMemory(kfs, vocab_size=4)
        recent = [random_scene(rng, int(rng.integers(0, 7)), 4) for _ in range(5)]
        cfg = MatchConfig(alpha=2.0)
        fast = MemoryIndex(mem, cfg).table(recent)
        slow = build_similarity_table(recent, mem, cfg)
        np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-12)


class TestLineSearch:
    def test_constant_table_tie_break(self):
        # lines that stay inside the table all tie; the first one that does
        # (end 2 at slope 0.5 over five rows) wins
        e, v, s = best_line_search(np.full((5, 8), 0.3), RelocConfig())
        assert (e, v) == (2, 0.5)
        assert s == pytest.approx(0.3)

    def test_constant_single_row_tie_break(self):
        assert best_line_search(np.full((1, 8), 0.3), RelocConfig())[:2] == (0, 0.5)

    def test_diagonal(self):
        t = diagonal_table(10, 40, 25)
        assert best_line_search(t, RelocConfig()) == (25, 1.0, 1.0)

    def test_steep_diagonal(self):
        t = diagonal_table(6, 40, 30, slope=2.0)
        e, v, s = best_line_search(t, RelocConfig())
        assert (e, v, s) == (30, 2.0, 1.0)

    def test_single_row_is_argmax(self):
        row = np.array([[0.1, 0.7, 0.3, 0.7]])
        e, v, s = best_line_search(row, RelocConfig())
        assert (e, v, s) == (1, 0.5, 0.7)

    def test_out_of_range_cells_count_as_zero(self):
        # a line ending at column 1 with slope 1 leaves the table after two rows
        t = np.ones((4, 2))
        e, v, s = best_line_search(t, RelocConfig(velocities=(1.0,)))
        assert s == 0.5 and e == 1

    def test_rounding_is_half_up(self):
        # end 2, slope 0.5, lag 1 -> column 1.5 rounds to 2; lag 3 -> 0.5 rounds to 1
        t = np.zeros((4, 3))
        t[3, 2] = t[2, 2] = t[1, 1] = t[0, 1] = 1.0
        assert best_line_search(t, RelocConfig(velocities=(0.5,))) == (2, 0.5, 1.0)

    def test_rejects_bad_tables(self):
        for bad in (np.zeros((0, 3)), np.zeros(4), np.array([[np.nan]])):
            with pytest.raises(ValueError):
                best_line_search(bad, RelocConfig())

    @pytest.mark.parametrize("seed", range(40))
    def test_brute_force_agreement(self, seed):
        rng = np.random.default_rng(seed)
        w, m = int(rng.integers(1, 21)), int(rng.integers(1, 51))
        # coarse values create many exact ties
        t = rng.integers(0, 4, size=(w, m)) / 4.0
        expect = brute_force_line_search(t.tolist(), DEFAULT_VELOCITIES)
        assert best_line_search(t, RelocConfig()) == expect


class TestTemporality:
    def test_peak(self):
        assert apply_temporality(0.8, 7, [5, 7, 9], RelocConfig()) == 0.8

    def test_far_limit(self):
        cfg = RelocConfig(beta=1.0)
        assert apply_temporality(0.8, 10_000, [0], cfg) == pytest.approx(0.4)

    def test_one_gamma_oracle(self):
        cfg = RelocConfig(beta=1.0, gamma=10.0)
        expect = (1 + math.exp(-0.5)) / 2
        assert abs(apply_temporality(1.0, 20, [10], cfg) - expect) < 1e-9
        assert abs(expect - 0.80327) < 1e-5

    def test_empty_history_passthrough(self):
        assert apply_temporality(0.37, 3, [], RelocConfig()) == 0.37

    @given(st.floats(0, 1), st.integers(0, 300), st.lists(st.integers(0, 300), min_size=1, max_size=5))
    def test_beta_zero_is_identity(self, raw, i, hist):
        assert apply_temporality(raw, i, hist, RelocConfig(beta=0.0)) == raw

    @given(
        st.integers(0, 300),
        st.lists(st.integers(0, 300), min_size=1, max_size=5),
        st.floats(0.01, 10),
        st.floats(0.5, 50),
    )
    def test_factor_bounds(self, i, hist, beta, gamma):
        f = float(temporality_factor(i, hist, RelocConfig(beta=beta, gamma=gamma)))
        assert 1 / (1 + beta) - 1e-12 <= f <= 1 + 1e-12

    @given(st.integers(0, 50), st.integers(0, 1000), st.integers(0, 1000))
    def test_equidistant_order_preserved(self, d, a, b):
        a, b = a / 1000, b / 1000
        cfg = RelocConfig()
        hist = [100]
        sa = apply_temporality(a, 100 - d, hist, cfg)
        sb = apply_temporality(b, 100 + d, hist, cfg)
        assert (sa > sb) == (a > b)
        assert (sa == sb) == (a == b)


class TestUpdateLocalization:
    def _mem(self, m):
        return ReferenceMemory(tuple(SceneDescriptor() for _ in range(m)))

    def test_first_call_diagonal(self):
        t = diagonal_table(10, 50, 31)
        loc = update_localization(None, None, self._mem(50), MatchConfig(), RelocConfig(), table=t)
        assert (loc.matched_index, loc.velocity, loc.score, loc.localized) == (31, 1.0, 1.0, True)
        assert loc.history == (31,)

    def test_temporality_breaks_tie_toward_history(self):
        t = diagonal_table(5, 80, 20) + diagonal_table(5, 80, 60)
        mem = self._mem(80)
        first = update_localization(None, None, mem, MatchConfig(), RelocConfig(), table=t)
        assert first.matched_index == 20
        prev = LocalizationEstimate(60, 1.0, 1.0, True, (58, 59, 60))
        loc = update_localization(prev, None, mem, MatchConfig(), RelocConfig(), table=t)
        assert loc.matched_index == 60

    def test_no_temporality_when_previously_lost(self):
        t = diagonal_table(5, 80, 20) + diagonal_table(5, 80, 60)
        prev = LocalizationEstimate(60, 1.0, 0.1, False, (60,))
        loc = update_localization(prev, None, self._mem(80), MatchConfig(), RelocConfig(), table=t)
        assert loc.matched_index == 20

    def test_all_zero_not_localized(self):
        loc = update_localization(
            None, None, self._mem(10), MatchConfig(), RelocConfig(), table=np.zeros((3, 10))
        )
        assert not loc.localized and loc.score == 0.0

    def test_threshold(self):
        t = np.zeros((1, 4))
        t[0, 2] = 0.3
        cfg = RelocConfig(localized_threshold=0.3)
        assert update_localization(None, None, self._mem(4), MatchConfig(), cfg, table=t).localized
        t[0, 2] = 0.2999
        assert not update_localization(None, None, self._mem(4), MatchConfig(), cfg, table=t).localized

    def test_history_trimmed(self):
        mem = self._mem(60)
        cfg = RelocConfig(history_length=3)
        loc = None
        for end in range(10, 16):
            loc = update_localization(loc, None, mem, MatchConfig(), cfg, table=diagonal_table(4, 60, end))
        assert loc.history == (13, 14, 15)

    def test_builds_table_from_scenes(self):
        s = [SceneDescriptor((det(k, 0.1, 0.1, 0.4, 0.4),)) for k in range(6)]
        mem = ReferenceMemory(tuple(s))
        loc = update_localization(None, s[1:4], mem, MatchConfig(), RelocConfig(window=3))
        # slopes 0.8 and 1.0 visit the same cells over three rows; 0.8 is smaller
        assert (loc.matched_index, loc.velocity, loc.score) == (3, 0.8, 1.0)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        t = rng.random((10, 40))
        prev = LocalizationEstimate(12, 1.0, 0.8, True, (9, 10, 11, 12))
        a = update_localization(prev, None, self._mem(40), MatchConfig(), RelocConfig(), table=t)
        b = update_localization(prev, None, self._mem(40), MatchConfig(), RelocConfig(), table=t.copy())
        assert a == b


class TestSequenceLocalizer:
    def test_params_round_trip(self):
        est = SequenceLocalizer(alpha=2.0, window=5, gamma=30.0)
        params = est.get_params()
        assert params["alpha"] == 2.0 and params["window"] == 5
        assert clone(est).get_params() == params
        assert est.reloc_config == RelocConfig(window=5, gamma=30.0)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            SequenceLocalizer().predict([SceneDescriptor()])

    def test_fit_rejects_non_memory(self):
        with pytest.raises(TypeError):
            SequenceLocalizer().fit([1, 2, 3])

    def test_fit_validates_params(self):
        mem = ReferenceMemory((SceneDescriptor(),))
        with pytest.raises(ValueError):
            SequenceLocalizer(window=0).fit(mem)

    def test_transform_and_predict(self):
        s = [SceneDescriptor((det(k, 0.1, 0.1, 0.4, 0.4),)) for k in range(8)]
        est = SequenceLocalizer(window=3).fit(ReferenceMemory(tuple(s)))
        assert est.n_keyframes_ == 8
        table = est.transform(s[:6])
        assert table.shape == (3, 8)
        assert est.predict(s[:6]) == 5


def test_table_csv(tmp_path):
    t = np.array([[0.0, 0.5], [1.0, 0.25]])
    write_table_csv(t, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["kf0", "kf1"]
    assert np.allclose(np.array(rows[1:], dtype=float), t)

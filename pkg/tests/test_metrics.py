import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles as orc
from dcfuse import datasynth, metrics


@pytest.fixture(scope="module")
def triple():
    """Fused/source triple with visible focus structure at 64x64."""
    gt = datasynth.vessel_phantom(64, 3)
    fpm = datasynth.random_fpm(64, 64, 9)
    s = datasynth.synthesize_pair(gt, fpm, 2.5, seed=9)
    fused = 0.5 * (s.s1 + s.s2)
    return fused, s.s1, s.s2, gt


class TestBasicStats:
    def test_mse_matches_loop_oracle(self, rng):
        a, b = rng.random((2, 12, 15))
        assert metrics.mse(a, b) == pytest.approx(orc.mse_ref(a, b), rel=1e-12)

    def test_mse_zero_on_identical(self, phantom):
        assert metrics.mse(phantom, phantom) == 0.0

    def test_mse_reported_on_255_scale(self):
        a = np.zeros((8, 8))
        b = np.full((8, 8), 0.1)
        assert metrics.mse(a, b) == pytest.approx((0.1 * 255.0) ** 2, rel=1e-12)

    def test_psnr_matches_loop_oracle(self, rng):
        a, b = rng.random((2, 12, 15))
        assert metrics.psnr(a, b) == pytest.approx(orc.psnr_ref(a, b), rel=1e-12)

    def test_psnr_cap_on_identical(self, phantom):
        assert metrics.psnr(phantom, phantom) == 100.0

    def test_psnr_cap_near_identical(self, phantom):
        nudged = np.clip(phantom + 1e-9, 0.0, 1.0)
        assert metrics.psnr(nudged, phantom) == 100.0

    def test_psnr_known_value(self):
        a = np.zeros((8, 8))
        b = np.full((8, 8), 1.0)
        assert metrics.psnr(a, b) == pytest.approx(0.0, abs=1e-10)

    def test_sd_matches_loop_oracle(self, rng):
        img = rng.random((10, 10))
        assert metrics.sd(img) == pytest.approx(orc.sd_ref(img), rel=1e-12)

    def test_sd_constant_zero(self):
        assert metrics.sd(np.full((16, 16), 0.3)) == pytest.approx(0.0, abs=1e-9)

    def test_ssim_matches_window_loop_oracle(self, rng):
        a, b = rng.random((2, 16, 18))
        assert metrics.ssim_metric(a, b) == pytest.approx(
            orc.ssim_valid_ref(a, b), abs=1e-10)

    def test_ssim_self_is_one(self, phantom):
        assert metrics.ssim_metric(phantom, phantom) == pytest.approx(1.0)

    def test_ssim_complements_loss(self, rng):
        from dcfuse import losses
        a, b = rng.random((2, 16, 16))
        assert metrics.ssim_metric(a, b) == pytest.approx(
            1.0 - losses.ssim_loss(a, b), abs=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="size mismatch"):
            metrics.mse(np.zeros((8, 8)), np.zeros((8, 9)))


class TestQe:
    def test_self_fusion_is_one(self, triple):
        _, s1, s2, _ = triple
        assert metrics.q_e(s1, s1, s1) == pytest.approx(1.0, abs=1e-9)

    def test_matches_oracle(self, triple):
        fused, s1, s2, _ = triple
        assert metrics.q_e(fused, s1, s2) == pytest.approx(
            orc.q_e_ref(fused, s1, s2), abs=1e-10)

    def test_sharp_beats_blurred(self, triple):
        _, s1, s2, gt = triple
        hazy = datasynth.gaussian_defocus(gt, 3.0)
        assert metrics.q_e(gt, s1, s2) > metrics.q_e(hazy, s1, s2)


class TestQcv:
    def test_self_fusion_is_zero(self, triple):
        _, s1, _, _ = triple
        assert metrics.q_cv(s1, s1, s1) == pytest.approx(0.0, abs=1e-9)

    def test_matches_oracle(self, triple):
        fused, s1, s2, _ = triple
        assert metrics.q_cv(fused, s1, s2) == pytest.approx(
            orc.q_cv_ref(fused, s1, s2), rel=1e-9)

    def test_lower_is_better_ordering(self, triple):
        _, s1, s2, gt = triple
        hazy = datasynth.gaussian_defocus(gt, 3.0)
        assert metrics.q_cv(gt, s1, s2) < metrics.q_cv(hazy, s1, s2)

    def test_constant_inputs_zero(self):
        c = np.full((32, 32), 0.5)
        assert metrics.q_cv(c, c, c) == 0.0


class TestQp:
    def test_constant_inputs_zero(self):
        c = np.full((48, 48), 0.5)
        assert metrics.q_p(c, c, c) == 0.0

    def test_matches_oracle(self, triple):
        fused, s1, s2, _ = triple
        assert metrics.q_p(fused, s1, s2) == pytest.approx(
            orc.q_p_ref(fused, s1, s2), rel=1e-9)

    def test_sharp_beats_blurred(self, triple):
        _, s1, s2, gt = triple
        hazy = datasynth.gaussian_defocus(gt, 3.5)
        assert metrics.q_p(gt, s1, s2) > metrics.q_p(hazy, s1, s2)

    def test_bounded(self, triple):
        fused, s1, s2, _ = triple
        v = metrics.q_p(fused, s1, s2)
        assert 0.0 <= v <= 1.2


class TestMetricBattery:
    def test_reference_free_keys(self, triple):
        fused, s1, s2, _ = triple
        out = metrics.metric_battery(fused, s1, s2)
        assert set(out) == {"q_e", "q_cv", "q_p", "sd"}

    def test_full_reference_keys(self, triple):
        fused, s1, s2, gt = triple
        out = metrics.metric_battery(fused, s1, s2, gt=gt)
        assert set(out) == {"q_e", "q_cv", "q_p", "sd", "psnr", "mse", "ssim"}
        assert out["psnr"] == pytest.approx(metrics.psnr(fused, gt))

    def test_direction_table(self):
        d = metrics.METRIC_DIRECTIONS
        assert d["psnr"] == "higher"
        assert d["mse"] == "lower"
        assert d["ssim"] == "higher"
        assert d["q_e"] == "higher"
        assert d["q_cv"] == "lower"
        assert d["q_p"] == "higher"
        assert d["sd"] == "higher"


class TestBorda:
    def test_hand_table_with_tie(self):
        vals = {"psnr": {"a": 30.0, "b": 28.0, "c": 30.0},
                "q_cv": {"a": 100.0, "b": 90.0, "c": 80.0}}
        rep = metrics.borda(vals, {"psnr": "higher", "q_cv": "lower"})
        assert rep.ranks["psnr"] == {"a": 1.5, "b": 3.0, "c": 1.5}
        assert rep.points["psnr"] == {"a": 2.5, "b": 1.0, "c": 2.5}
        assert rep.borda == {"a": 3.5, "b": 3.0, "c": 5.5}

    def test_known_directions_implied(self):
        vals = {"psnr": {"a": 30.0, "b": 20.0},
                "q_cv": {"a": 5.0, "b": 9.0}}
        rep = metrics.borda(vals)
        assert rep.borda == {"a": 4.0, "b": 2.0}

    def test_matches_reference(self, rng):
        methods = [f"m{i}" for i in range(6)]
        names = ["psnr", "ssim", "q_cv", "sd"]
        vals = {n: {m: float(rng.random()) for m in methods} for n in names}
        dirs = {n: metrics.METRIC_DIRECTIONS[n] for n in names}
        rep = metrics.borda(vals, dirs)
        assert rep.borda == pytest.approx(orc.borda_ref(vals, dirs))

    def test_fourteen_method_mock(self, rng):
        # winner collects N points per metric; the column total is always
        # N(N+1)/2 regardless of ties
        methods = [f"method{i:02d}" for i in range(14)]
        names = ["q_e", "q_cv", "q_p", "sd", "psnr", "mse", "ssim"]
        vals = {n: {m: float(rng.random()) for m in methods} for n in names}
        rep = metrics.borda(vals)
        total = sum(rep.borda.values())
        assert total == pytest.approx(len(names) * 14 * 15 / 2)
        for n in names:
            assert max(rep.points[n].values()) == 14.0
            assert min(rep.points[n].values()) == 1.0

    @given(st.integers(2, 9), st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_points_conserved(self, n_methods, n_metrics, seed):
        r = np.random.default_rng(seed)
        methods = [f"m{i}" for i in range(n_methods)]
        # draw from a tiny value set so ties actually occur
        vals = {f"met{j}": {m: float(r.integers(0, 3)) for m in methods}
                for j in range(n_metrics)}
        dirs = {f"met{j}": ("higher" if j % 2 else "lower")
                for j in range(n_metrics)}
        rep = metrics.borda(vals, dirs)
        want = n_metrics * n_methods * (n_methods + 1) / 2
        assert sum(rep.borda.values()) == pytest.approx(want)

    def test_direction_flip_reverses_points(self):
        vals = {"x": {"a": 1.0, "b": 2.0, "c": 3.0}}
        up = metrics.borda(vals, {"x": "higher"})
        down = metrics.borda(vals, {"x": "lower"})
        assert up.points["x"] == {"a": 1.0, "b": 2.0, "c": 3.0}
        assert down.points["x"] == {"a": 3.0, "b": 2.0, "c": 1.0}

    def test_to_dict(self):
        vals = {"psnr": {"a": 1.0, "b": 2.0}}
        d = metrics.borda(vals).to_dict()
        assert set(d) == {"methods", "values", "ranks", "points", "borda"}

    def test_needs_two_methods(self):
        with pytest.raises(ValueError, match="at least 2"):
            metrics.borda({"psnr": {"only": 1.0}})

    def test_inconsistent_methods(self):
        vals = {"psnr": {"a": 1.0, "b": 2.0}, "ssim": {"a": 1.0, "c": 2.0}}
        with pytest.raises(ValueError):
            metrics.borda(vals)

    def test_unknown_metric_needs_direction(self):
        vals = {"sharpgain": {"a": 1.0, "b": 2.0}}
        with pytest.raises(ValueError):
            metrics.borda(vals)
        rep = metrics.borda(vals, {"sharpgain": "higher"})
        assert rep.borda == {"a": 1.0, "b": 2.0}

    def test_bad_direction_word(self):
        vals = {"psnr": {"a": 1.0, "b": 2.0}}
        with pytest.raises(ValueError):
            metrics.borda(vals, {"psnr": "sideways"})

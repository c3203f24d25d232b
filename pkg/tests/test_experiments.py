import numpy as np
import pytest

from nvlearn.data import Dataset, table1_dataset
from nvlearn.experiments import (
    ModelSpec,
    SweepConfig,
    dump_predictions,
    parse_ratio_grid,
    ratio_grid,
    robustness_report,
    run_sweep,
    test_err,
    train_err,
)
from nvlearn.losses import CostPair, LossKind
from nvlearn.models import LinearModel
from nvlearn.optim import TrainConfig, train


class FixedModel:
    """Returns preset predictions regardless of features."""

    def __init__(self, preds):
        self.preds = np.asarray(preds, dtype=float).reshape(-1, 1)

    def predict(self, X):
        return self.preds[: len(X)]


def ds_of(demands):
    d = np.asarray(demands, dtype=float)
    return Dataset(np.zeros((len(d), 1)), d)


class TestErrors:
    def test_perfect(self):
        assert test_err(FixedModel([1, 2, 3]), ds_of([1, 2, 3])) == 0.0

    def test_single(self):
        assert test_err(FixedModel([13]), ds_of([10])) == 9.0

    def test_two(self):
        assert test_err(FixedModel([13, 6]), ds_of([10, 10])) == 12.5

    def test_train_err_is_same_formula(self):
        m, ds = FixedModel([1, 5, 9]), ds_of([2, 2, 2])
        assert train_err(m, ds) == test_err(m, ds)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 2))
        ds = Dataset(X, rng.uniform(0, 10, size=40))
        m = LinearModel(1.0, [0.5, -0.25])
        perm = rng.permutation(40)
        assert train_err(m, ds.take(perm)) == pytest.approx(train_err(m, ds), rel=1e-13)


class TestGrid:
    def test_default_grid(self):
        grid = ratio_grid()
        assert len(grid) == 19
        assert grid[0] == 1.0 and grid[-1] == 10.0
        assert all(b - a == pytest.approx(0.5) for a, b in zip(grid, grid[1:]))

    def test_parse_equivalent(self):
        assert parse_ratio_grid("1:10:0.5") == ratio_grid()
        assert parse_ratio_grid("1,2.5") == (1.0, 2.5)

    def test_cost_pair_from_ratio(self):
        assert CostPair.from_ratio(4, 1.5).cp == 6.0

    def test_ratio_below_one_rejected(self):
        with pytest.raises(ValueError):
            SweepConfig(ratios=(0.5,))


class TestModelSpec:
    def test_parse_mlp(self):
        spec = ModelSpec.parse("mlp:3,282,60,1")
        assert spec.layer_sizes == (3, 282, 60, 1) and str(spec) == "mlp:3,282,60,1"

    @pytest.mark.parametrize("text", ["mlp:3", "cnn", "mlp:a,b,c"])
    def test_bad(self, text):
        with pytest.raises(ValueError):
            ModelSpec.parse(text)

    def test_feature_mismatch(self):
        with pytest.raises(ValueError):
            ModelSpec.parse("mlp:4,5,5,1").build(3, 0)


def small_cfg(**kw):
    base = dict(ratios=(1.0, 4.0), model=ModelSpec.parse("mlp:3,4,4,1", demand_scale=1.0),
                train=TrainConfig(max_iters=40), seed=2)
    base.update(kw)
    return SweepConfig(**base)


class TestSweep:
    def test_row_count_and_order(self):
        tr, te = table1_dataset()
        res = run_sweep(small_cfg(), tr, te, timing=False)
        assert [(r.ratio, r.kind) for r in res.rows] == [
            (1.0, LossKind.ORIGINAL), (1.0, LossKind.QUADRATIC),
            (4.0, LossKind.ORIGINAL), (4.0, LossKind.QUADRATIC),
        ]
        assert all(r.train_err >= 0 and r.test_err >= 0 for r in res.rows)

    def test_default_grid_times_kinds(self):
        cfg = SweepConfig()
        assert len(cfg.ratios) * len(cfg.kinds) == 38

    def test_deterministic(self, tmp_path):
        tr, te = table1_dataset()
        run_sweep(small_cfg(), tr, te, timing=False).to_csv(tmp_path / "a.csv")
        run_sweep(small_cfg(), tr, te, timing=False).to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == "ratio,kind,train_err,test_err,wall_ms"

    def test_harness_adds_nothing(self):
        tr, te = table1_dataset()
        cfg = small_cfg(ratios=(3.0,), kinds=(LossKind.QUADRATIC,))
        row = run_sweep(cfg, tr, te, timing=False).rows[0]
        start = cfg.model.build(3, cfg.seed)
        model = train(start, tr, CostPair.from_ratio(3.0, 1.5), LossKind.QUADRATIC, cfg.train).model
        assert row.train_err == train_err(model, tr)
        assert row.test_err == test_err(model, te)

    def test_timing_recorded_when_asked(self):
        tr, te = table1_dataset()
        res = run_sweep(small_cfg(ratios=(1.0,)), tr, te, timing=True)
        assert all(r.wall_ms > 0 for r in res.rows)

    def test_quadratic_constant_features_matches_variance_link(self):
        # with symmetric costs the quadratic objective is a scaled MSE, so the
        # learned constant is the mean and TrainErr is the demand variance
        rng = np.random.default_rng(4)
        d = rng.uniform(0, 20, size=100)
        ds = Dataset(np.ones((100, 1)), d)
        cfg = SweepConfig(ch=1.5, ratios=(1.0,), kinds=(LossKind.QUADRATIC,), model=ModelSpec.parse("linear"),
                          train=TrainConfig(lam=0.0, max_iters=200, tolerance=1e-12))
        row = run_sweep(cfg, ds, ds, timing=False).rows[0]
        assert row.train_err == pytest.approx(np.var(d), rel=1e-6)


class TestDump:
    def test_perfect_model(self, tmp_path):
        ds = ds_of([4, 5, 6, 7])
        dump = dump_predictions({"original": FixedModel([4, 5, 6, 7]), "quadratic": FixedModel([0, 0, 0, 0])}, ds, 4)
        np.testing.assert_array_equal(dump.predictions[LossKind.ORIGINAL], dump.demands)
        dump.to_csv(tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "index,demand,pred_original,pred_quadratic"
        assert len(lines) == 5

    def test_k_bounds(self):
        ds = ds_of([1, 2])
        with pytest.raises(ValueError):
            dump_predictions({"original": FixedModel([1, 2])}, ds, 0)
        with pytest.raises(ValueError):
            dump_predictions({"original": FixedModel([1, 2])}, ds, 3)

    def test_first_rows_in_order(self):
        ds = ds_of([9, 8, 7, 6])
        dump = dump_predictions({"original": FixedModel([0, 0, 0, 0])}, ds, 2)
        assert dump.demands.tolist() == [9, 8] and dump.indices.tolist() == [0, 1]


class TestRobustnessReport:
    def test_tie(self):
        p = np.array([1.0, 2.0, 3.0])
        s = robustness_report([False, False, True], {"original": p, "quadratic": p}, [1.0, 1.0, 30.0])
        assert s.verdict == "tie"

    def test_exact_l1_wins(self):
        d = np.array([10.0, 12.0, 500.0])
        s = robustness_report([False, False, True], {"original": [10, 12, 50], "quadratic": [20, 20, 400]}, d)
        assert s.clean_mdae[LossKind.ORIGINAL] == 0.0
        assert s.verdict == "original"

    def test_direct_values(self):
        s = robustness_report([False], {"original": [10.0], "quadratic": [100.0]}, [12.0])
        assert s.clean_mdae[LossKind.ORIGINAL] == 2.0
        assert s.clean_mdae[LossKind.QUADRATIC] == 88.0
        assert np.isnan(s.outlier_mdae[LossKind.ORIGINAL])

    def test_all_masked(self):
        with pytest.raises(ValueError):
            robustness_report([True, True], {"original": [1, 2]}, [1, 2])

    def test_mask_length(self):
        with pytest.raises(ValueError):
            robustness_report([False], {"original": [1, 2]}, [1, 2])

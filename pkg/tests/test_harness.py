import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from humanseed.errors import DomainError
from humanseed.harness import (
    REPORT_COLUMNS,
    RESULT_COLUMNS,
    GridConfig,
    GridRecord,
    SyntheticSpec,
    build_seeds,
    derive_seed,
    generate_synthetic,
    grid_cells,
    normalize_init_mode,
    oracle_ranking,
    positive_fraction,
    read_results_csv,
    run_grid,
    seeded_vs_random_report,
    summary_table_rows,
    win_rate,
    write_report_csv,
    write_results_csv,
)
from humanseed.rank_aggregation import aggregate


@pytest.fixture(scope="module")
def synth():
    ds, profile, _ = generate_synthetic(SyntheticSpec(n_features=6, n_rows=800), rng_seed=1)
    return ds, profile


def small_grid(**kw):
    base = dict(sample_sizes=(60, 100), tp_rates=(0.3, 0.6), epoch_settings=(2,),
                init_modes=("random", "borda"), repetitions=3)
    base.update(kw)
    return GridConfig(**base)


def test_record_count_matches_grid(synth):
    cfg = small_grid()
    res = run_grid(cfg, *synth)
    assert cfg.n_cells == 2 * 2 * 1 * 2 * 3 == len(res.records)
    assert not res.skipped
    keys = {(r.sample_size, r.tp_rate, r.epochs, r.aggregator, r.repetition) for r in res.records}
    assert len(keys) == len(res.records)
    for r in res.records:
        assert r.tp + r.fp + r.fn + r.tn == 160  # 20 % of 800 rows held out


def test_default_grid_size():
    assert GridConfig().n_cells == 4 * 4 * 2 * 4 * 20
    assert len(grid_cells(GridConfig())) == GridConfig().n_cells


def test_grid_is_byte_deterministic(synth, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_results_csv(run_grid(small_grid(), *synth), a)
    write_results_csv(run_grid(small_grid(), *synth, jobs=2), b)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == ",".join(RESULT_COLUMNS)


def test_results_csv_round_trip(synth, tmp_path):
    res = run_grid(small_grid(repetitions=1), *synth)
    write_results_csv(res, tmp_path / "r.csv")
    assert read_results_csv(tmp_path / "r.csv") == res.records


def test_runs_are_paired_across_init_modes(synth):
    res = run_grid(small_grid(), *synth)
    seeds = {}
    for r in res.records:
        seeds.setdefault((r.sample_size, r.tp_rate, r.repetition), set()).add(r.seed)
    assert all(len(s) == 1 for s in seeds.values())


def test_oversized_cells_are_skipped_and_reported(synth):
    cfg = small_grid(sample_sizes=(60, 5000), repetitions=1)
    res = run_grid(cfg, *synth)
    assert len(res.records) == cfg.n_cells
    assert len(res.skipped) == 4
    assert all(r.sample_size == 5000 and r.status.startswith("skipped") for r in res.skipped)
    report = seeded_vs_random_report(res)
    assert {row["sample_size"] for row in report.rows} == {60}


def test_seeded_without_profile_is_rejected(synth):
    with pytest.raises(DomainError):
        run_grid(small_grid(), synth[0], None)
    assert run_grid(small_grid(init_modes=("random",), repetitions=1), synth[0], None).records


def test_init_mode_aliases():
    assert normalize_init_mode("Kemeny") == "kemeny_young"
    assert normalize_init_mode("mc4-seeded") == "mc4"
    assert normalize_init_mode("random") == "random"


def test_build_seeds_without_directions_uses_positive_signs(synth):
    _, profile = synth
    bare = type(profile)(profile.rankings, profile.user_ids, profile.feature_names, None)
    seeds = build_seeds(bare, ("random", "borda"))
    agg = aggregate(bare, "borda")
    top = agg.ranking.order[0]
    assert seeds["borda"].values[top] == 1.0


def test_derive_seed_properties():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)
    assert 0 <= derive_seed(5, 3) < 2**63


def test_win_rate_ties_count_half():
    assert win_rate(np.array([0.5, 0.7, 0.6]), np.array([0.5, 0.6, 0.7])) == 0.5
    assert win_rate(np.array([0.9]), np.array([0.1])) == 1.0


def _rec(agg, rep, acc, f1):
    return GridRecord("mlp", agg, "random" if agg == "none" else "seeded", 100, 0.4, 50, rep, 0,
                      acc, f1, 0, 0, 0, 0)


def test_report_arithmetic(tmp_path):
    recs = [_rec("none", 0, 0.5, 0.4), _rec("none", 1, 0.6, 0.5),
            _rec("borda", 0, 0.7, 0.4), _rec("borda", 1, 0.6, 0.6)]
    rep = seeded_vs_random_report(recs)
    (row,) = rep.rows
    assert row["n_pairs"] == 2
    assert row["acc_diff_mean"] == pytest.approx(0.1)
    assert row["f1_diff_mean"] == pytest.approx(0.05)
    assert row["acc_win_rate"] == 0.75 and row["f1_win_rate"] == 0.75
    assert row["random_acc_sd"] == pytest.approx(np.std([0.5, 0.6], ddof=1))
    write_report_csv(rep, tmp_path / "rep.csv")
    assert (tmp_path / "rep.csv").read_text().splitlines()[0] == ",".join(REPORT_COLUMNS)


def test_report_lists_missing_arms():
    rep = seeded_vs_random_report([_rec("borda", 0, 0.7, 0.4), _rec("none", 0, 0.5, 0.5),
                                   _rec("mc4", 1, 0.5, 0.5)])
    assert any("unpaired" in m for m in rep.missing)
    assert seeded_vs_random_report([_rec("borda", 0, 0.7, 0.4)]).missing


def test_summary_table_rows_are_means(synth):
    res = run_grid(small_grid(), *synth)
    rows = summary_table_rows(res)
    assert len(rows) == 2 * 2 * 2
    size, agg, tp, epochs, acc, f1 = rows[0]
    match = [r.accuracy for r in res.records
             if (r.sample_size, r.aggregator, r.tp_rate, r.epochs) == (size, agg, tp, epochs)]
    assert acc == pytest.approx(np.mean(match))


# -- synthetic generator ----------------------------------------------------

@settings(max_examples=15)
@given(st.integers(0, 1000), st.sampled_from(["borda", "mc4", "kemeny_young"]))
def test_unperturbed_users_recover_oracle_ranking(seed, method):
    spec = SyntheticSpec(n_features=8, n_rows=10, perturbation=0.0, n_users=3)
    _, profile, votes = generate_synthetic(spec, seed)
    assert aggregate(profile, method).ranking == oracle_ranking(spec.true_weights)
    np.testing.assert_array_equal(votes.negative > 0, spec.true_weights < 0)


def test_noise_free_single_feature_labels():
    w = np.zeros(5)
    w[0] = 1.0
    ds, _, _ = generate_synthetic(SyntheticSpec(n_features=5, n_rows=500, true_weights=w, noise=0.0), 3)
    np.testing.assert_array_equal(ds.y, (ds.X[:, 0] > 0).astype(int))


def test_default_synthetic_is_balanced():
    ds, profile, _ = generate_synthetic(SyntheticSpec(), 0)
    assert len(ds) == 6400 and ds.schema.n_features == 12
    assert abs(positive_fraction(ds) - 0.5) <= 0.02
    assert len(profile.rankings) == 5


def test_synthetic_spec_validation():
    with pytest.raises(DomainError):
        SyntheticSpec(n_features=3, true_weights=np.zeros(3))
    with pytest.raises(DomainError):
        SyntheticSpec(perturbation=1.0)
    with pytest.raises(DomainError):
        GridConfig(repetitions=0)

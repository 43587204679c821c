
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from demandnet.data import (
    GapError,
    NormStats,
    ParseError,
    PolicyRangeError,
    SchemaError,
    SeriesBundle,
    STATIC_FEATURE_NAMES,
    SynthConfig,
    default_policy_schedule,
    fit_norm_stats,
    holdout_series,
    load_dataset,
    load_sidecar,
    make_windows,
    policy_from_schedule,
    post_shock_ratio,
    split_time,
    stack_windows,
    synth_generate,
    windows_in_range,
    write_dataset_csv,
    write_sidecar_csv,
)
from tests.conftest import build_bundle


# ----------------------------------------------------------------------------
# splits


def test_split_101_gives_80_10_11():
    split = split_time(101)
    assert split.train == range(0, 80)
    assert split.validation == range(80, 90)
    assert split.test == range(90, 101)


def test_split_accepts_bundle_argument(tiny_bundle):
    assert split_time(tiny_bundle) == split_time(tiny_bundle.length)


@given(st.integers(min_value=10, max_value=5000))
def test_split_partitions_the_index_range(length):
    split = split_time(length)
    assert split.train.start == 0
    assert split.train.stop == split.validation.start
    assert split.validation.stop == split.test.start
    assert split.test.stop == length
    assert len(split.train) > 0 and len(split.validation) > 0 and len(split.test) > 0


def test_split_rejects_bad_fractions():
    with pytest.raises(ValueError):
        split_time(100, fractions=(0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        split_time(100, fractions=(1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        split_time(3)


# ----------------------------------------------------------------------------
# bundles


def test_bundle_arrays_are_read_only(tiny_bundle):
    with pytest.raises(ValueError):
        tiny_bundle.target[0] = 99.0


def test_bundle_rejects_out_of_range_policy():
    with pytest.raises(PolicyRangeError):
        build_bundle(policy=np.full(60, 1.5))


def test_bundle_rejects_shape_mismatch():
    with pytest.raises(SchemaError):
        SeriesBundle(
            id="x",
            target=np.ones(3),
            covariates=np.ones((4, 1)),
            covariate_names=("policy",),
            policy_index=0,
        )


def test_bundle_rejects_non_finite():
    target = np.ones(60)
    target[5] = np.nan
    with pytest.raises(SchemaError):
        build_bundle(target=target)


def test_channel_matrix_puts_target_first(tiny_bundle):
    panel = tiny_bundle.channel_matrix()
    assert panel.shape == (tiny_bundle.length, 3)
    np.testing.assert_array_equal(panel[:, 0], tiny_bundle.target)
    assert tiny_bundle.channel_names() == ("target", "policy", "cases")


# ----------------------------------------------------------------------------
# normalisation


def test_norm_stats_zscore_hand_values():
    # train range of [0,2,0,2,...] has mean 1 and population sd 1
    target = np.tile([0.0, 2.0], 30)
    bundle = build_bundle(length=60, target=target, policy=np.zeros(60))
    stats = fit_norm_stats(bundle, split_time(bundle))
    assert stats.location[0] == 1.0
    assert stats.scale[0] == 1.0
    np.testing.assert_array_equal(stats.normalize_target(np.array([0.0, 2.0])), [-1.0, 1.0])


def test_policy_channel_passes_through_bitwise(tiny_bundle):
    stats = fit_norm_stats(tiny_bundle, split_time(tiny_bundle), identity_channels=(1,))
    normalized = stats.normalize_bundle(tiny_bundle)
    np.testing.assert_array_equal(normalized.policy, tiny_bundle.policy)
    assert normalized.policy.tobytes() == tiny_bundle.policy.tobytes()


def test_constant_channel_gets_unit_scale():
    bundle = build_bundle(target=np.full(60, 5.0), policy=np.zeros(60))
    stats = fit_norm_stats(bundle, split_time(bundle))
    assert stats.scale[0] == 1.0
    assert bool(stats.constant[0])
    np.testing.assert_array_equal(stats.normalize_target(bundle.target), np.zeros(60))


def test_stats_come_from_the_train_range_only():
    base = build_bundle()
    tampered_target = base.target.copy()
    tampered_target[-6:] += 500.0  # inside the test fraction
    tampered = build_bundle(target=tampered_target)
    a = fit_norm_stats(base, split_time(base))
    b = fit_norm_stats(tampered, split_time(tampered))
    np.testing.assert_array_equal(a.location, b.location)
    np.testing.assert_array_equal(a.scale, b.scale)


@given(st.floats(min_value=-50, max_value=50), st.floats(min_value=0.1, max_value=20))
def test_normalize_round_trips(loc, scale):
    stats = NormStats(
        location=np.array([loc, 0.0]),
        scale=np.array([scale, 1.0]),
        constant=np.array([False, False]),
        identity=np.array([False, True]),
        fitted_range=(0, 10),
    )
    x = np.linspace(-3, 3, 11)
    back = stats.denormalize_target(stats.normalize_target(x))
    np.testing.assert_allclose(back, x, atol=1e-10)


# ----------------------------------------------------------------------------
# windows


def test_window_count_matches_formula():
    bundle = build_bundle(length=200)
    samples = make_windows(bundle, tau=16, horizon=40)
    assert len(samples) == 200 - 16 - 40 + 1 == 145


def test_window_slices_line_up():
    bundle = build_bundle(length=80)
    samples = make_windows(bundle, tau=8, horizon=5)
    first = samples[0]
    assert first.origin == 8
    panel = bundle.channel_matrix()
    np.testing.assert_array_equal(first.window, panel[0:8])
    np.testing.assert_array_equal(first.label, bundle.target[8:13])
    np.testing.assert_array_equal(first.future_policies, bundle.policy[8:13])
    assert samples[-1].origin == 75


def test_windows_in_range_respects_label_end():
    bundle = build_bundle(length=80)
    samples = make_windows(bundle, tau=8, horizon=5)
    kept = windows_in_range(samples, last_label_end=20, horizon=5)
    assert all(s.origin + 5 <= 20 for s in kept)
    assert len(kept) == 8  # origins 8..15


def test_stack_windows_shapes():
    bundle = build_bundle(length=80)
    samples = make_windows(bundle, tau=8, horizon=5)
    windows, policies, labels = stack_windows(samples)
    assert windows.shape == (len(samples), 8, 3)
    assert policies.shape == labels.shape == (len(samples), 5)


def test_make_windows_rejects_too_short_series():
    bundle = build_bundle(length=20)
    with pytest.raises(ValueError):
        make_windows(bundle, tau=16, horizon=10)


# ----------------------------------------------------------------------------
# helpers


def test_holdout_partitions_by_id():
    bundles = [build_bundle(series_id=f"S{i}") for i in range(4)]
    train, held = holdout_series(bundles, ["S1", "S3"])
    assert [b.id for b in train] == ["S0", "S2"]
    assert [b.id for b in held] == ["S1", "S3"]
    with pytest.raises(ValueError):
        holdout_series(bundles, ["nope"])
    with pytest.raises(ValueError):
        holdout_series(bundles, [b.id for b in bundles])


def test_post_shock_ratio_hand_value():
    target = np.array([2.0] * 5 + [1.0] * 5)
    assert post_shock_ratio(target, onset=5) == 0.5
    with pytest.raises(ValueError):
        post_shock_ratio(target, onset=0)


# ----------------------------------------------------------------------------
# csv round trip


def test_csv_round_trip(tmp_path):
    bundles = [build_bundle(series_id="B"), build_bundle(series_id="A")]
    data_path = tmp_path / "panel.csv"
    sidecar_path = tmp_path / "statics.csv"
    write_dataset_csv(bundles, data_path)
    write_sidecar_csv(bundles, sidecar_path)
    loaded = load_dataset(data_path, sidecar=sidecar_path)
    assert [b.id for b in loaded] == ["A", "B"]  # sorted on load
    by_id = {b.id: b for b in loaded}
    for original in bundles:
        back = by_id[original.id]
        assert back.target.tobytes() == original.target.tobytes()
        assert back.covariates.tobytes() == original.covariates.tobytes()
        assert back.covariate_names == original.covariate_names
        assert back.static_profile == original.static_profile


def test_missing_day_is_a_gap_error(tmp_path):
    bundle = build_bundle(series_id="S0")
    path = tmp_path / "panel.csv"
    write_dataset_csv([bundle], path)
    lines = path.read_text().splitlines()
    removed = lines.pop(5)  # drop one observation row
    missing_date = removed.split(",")[1]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(GapError) as err:
        load_dataset(path)
    assert missing_date in str(err.value)


def test_duplicate_day_is_a_gap_error(tmp_path):
    bundle = build_bundle(series_id="S0")
    path = tmp_path / "panel.csv"
    write_dataset_csv([bundle], path)
    lines = path.read_text().splitlines()
    lines.append(lines[5])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(GapError):
        load_dataset(path)


def test_unparseable_cell_names_the_location(tmp_path):
    bundle = build_bundle(series_id="S0")
    path = tmp_path / "panel.csv"
    write_dataset_csv([bundle], path)
    lines = path.read_text().splitlines()
    parts = lines[3].split(",")
    parts[2] = "not-a-number"
    lines[3] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as err:
        load_dataset(path)
    assert ":4:target" in str(err.value)


def test_policy_out_of_range_is_reported_with_date(tmp_path):
    bundle = build_bundle(series_id="S0")
    path = tmp_path / "panel.csv"
    write_dataset_csv([bundle], path)
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    col = header.index("policy")
    parts = lines[2].split(",")
    parts[col] = "2.0"
    lines[2] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(PolicyRangeError):
        load_dataset(path)


def test_missing_required_column_is_schema_error(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text("series_id,date,demand\nS0,2020-01-01,1.0\n")
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_sidecar_round_trip_values(tmp_path):
    bundles = [
        build_bundle(series_id="S0", statics={"population": 2.0, "beds": 7.5}),
        build_bundle(series_id="S1", statics={"population": 3.0, "beds": 1.25}),
    ]
    path = tmp_path / "statics.csv"
    write_sidecar_csv(bundles, path)
    table = load_sidecar(path)
    assert table["S0"] == {"population": 2.0, "beds": 7.5}
    assert table["S1"] == {"population": 3.0, "beds": 1.25}


# ----------------------------------------------------------------------------
# synthetic generator


def test_synth_is_deterministic_per_seed():
    cfg = SynthConfig(series_count=3, length=200)
    a = synth_generate(cfg, seed=5)
    b = synth_generate(cfg, seed=5)
    c = synth_generate(cfg, seed=6)
    for x, y in zip(a, b):
        assert x.target.tobytes() == y.target.tobytes()
        assert x.covariates.tobytes() == y.covariates.tobytes()
        assert x.static_profile == y.static_profile
    assert a[0].target.tobytes() != c[0].target.tobytes()


def test_synth_shapes_and_ranges():
    cfg = SynthConfig(series_count=4, length=240)
    bundles = synth_generate(cfg, seed=0)
    assert len(bundles) == 4
    for b in bundles:
        assert b.length == 240
        assert b.covariate_names == ("policy", "cases", "mobility")
        assert b.policy.min() >= 0.0 and b.policy.max() <= 1.0
        assert (b.target > 0).all()
        assert tuple(sorted(b.static_profile)) == tuple(sorted(STATIC_FEATURE_NAMES))


def test_synth_policy_suppresses_demand():
    cfg = SynthConfig(series_count=4, length=400, noise_sd=0.5, impact_spread=0.0)
    bundles = synth_generate(cfg, seed=1)
    for b in bundles:
        closed = b.policy >= 0.99
        open_ = b.policy == 0.0
        assert closed.sum() > 10
        assert b.target[closed].mean() < 0.7 * b.target[open_].mean()


def test_synth_onset_defaults_to_45_percent():
    cfg = SynthConfig(series_count=1, length=200)
    assert cfg.shock_onset == 90
    bundles = synth_generate(cfg, seed=0)
    assert (bundles[0].policy[:90] == 0.0).all()


def test_policy_schedule_interpolation():
    schedule = ((0, 0.0), (4, 0.0), (8, 1.0))
    pi = policy_from_schedule(schedule, length=10)
    assert pi[0] == 0.0 and pi[4] == 0.0 and pi[8] == 1.0
    assert pi[6] == pytest.approx(0.5)
    assert pi.shape == (10,)


def test_default_schedule_spans_the_series():
    schedule = default_policy_schedule(800, onset=360)
    times = [t for t, _ in schedule]
    assert times == sorted(times)
    assert times[0] == 0 and times[-1] <= 799
    levels = [v for _, v in schedule]
    assert max(levels) == 1.0 and min(levels) == 0.0


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(series_count=0)
    with pytest.raises(ValueError):
        SynthConfig(suppression_depth=1.5)
    with pytest.raises(ValueError):
        SynthConfig(length=200, shock_onset=500)

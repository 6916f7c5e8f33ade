import numpy as np
import pytest

from hetpref.datagen import (
    Dataset,
    DatasetFormatError,
    GaussianDiff,
    ItemCatalog,
    PanelSpec,
    PreferenceRecord,
    UniformBall,
    diff_from_dict,
    diff_to_dict,
    dumps_dataset,
    gaussian_choice_probability_gh,
    generate,
    generate_with_types,
    load_dataset,
    population_choice_probability,
    sample_diffs,
    save_dataset,
)
from hetpref.population import FiniteMixture, GaussianMixedLogit, antipodal_counterexample


def test_generate_is_deterministic():
    pop = antipodal_counterexample()
    a = generate(pop, GaussianDiff(np.eye(2)), 500, seed=11)
    b = generate(pop, GaussianDiff(np.eye(2)), 500, seed=11)
    c = generate(pop, GaussianDiff(np.eye(2)), 500, seed=12)
    assert a.equals(b)
    assert not a.equals(c)
    assert a.provenance["seed"] == 11
    assert a.provenance["population_digest"] is not None


def test_label_frequency_matches_choice_probability():
    pop = FiniteMixture([0.5, 0.5], [[3.0], [-1.0]])
    catalog = ItemCatalog([[0.0], [1.0]])
    ds = generate(pop, catalog, 200_000, seed=3)
    first_wins = np.where(ds.items[:, 0] == 1, ds.y, 1 - ds.y)
    expected = population_choice_probability(np.array([1.0]), pop)
    assert abs(first_wins.mean() - expected) < 4 * np.sqrt(expected * (1 - expected) / ds.n)


def test_panel_layout():
    pop = antipodal_counterexample()
    ds = generate(pop, GaussianDiff(np.eye(2)), 60, panel=PanelSpec(20, 3), seed=0)
    np.testing.assert_array_equal(ds.users, np.repeat(np.arange(20), 3))
    with pytest.raises(ValueError):
        generate(pop, GaussianDiff(np.eye(2)), 61, panel=PanelSpec(20, 3))


def test_panel_without_replacement_has_distinct_pairs():
    catalog = ItemCatalog(np.random.default_rng(0).standard_normal((5, 2)), replace=False)
    ds = generate(antipodal_counterexample(), catalog, 40, panel=PanelSpec(4, 10), seed=1)
    for u in range(4):
        pairs = {tuple(sorted(p)) for p in ds.items[ds.users == u]}
        assert len(pairs) == 10
    with pytest.raises(ValueError):
        generate(antipodal_counterexample(), catalog, 22, panel=PanelSpec(2, 11))


def test_true_types_are_replayed():
    pop = FiniteMixture([0.5, 0.5], [[4.0, 0.0], [-4.0, 0.0]])
    ds, types = generate_with_types(pop, GaussianDiff(np.eye(2)), PanelSpec(50, 40), seed=5)
    for u in range(50):
        idx = ds.users == u
        agree = np.mean(np.sign(ds.x[idx] @ pop.atoms[types[u]]) == ds.signs[idx])
        assert agree > 0.6


def test_uniform_ball_radius():
    x, items = sample_diffs(UniformBall(2.0, 3), 10_000, np.random.default_rng(0))
    assert items is None
    assert np.linalg.norm(x, axis=1).max() <= 2.0


def test_gauss_hermite_matches_monte_carlo():
    pop = GaussianMixedLogit([1.0, -0.5], [[2.0, 0.3], [0.3, 1.0]])
    x = np.array([[0.7, 1.1], [-2.0, 0.4]])
    gh = gaussian_choice_probability_gh(x, pop)
    mc = population_choice_probability(x, pop, n_samples=400_000, seed=1, return_stderr=True)
    assert np.all(np.abs(gh - mc.value) < 5 * mc.stderr)


def test_gaussian_probability_needs_samples():
    with pytest.raises(ValueError):
        population_choice_probability(np.ones(2), GaussianMixedLogit([0.0, 0.0], np.eye(2)))


def test_diff_dict_round_trip(tmp_path):
    for diffs in (GaussianDiff(np.diag([1.0, 2.0])), UniformBall(1.5, 2), ItemCatalog([[0.0, 1.0], [2.0, 3.0]])):
        back = diff_from_dict(diff_to_dict(diffs))
        assert diff_to_dict(back) == diff_to_dict(diffs)
    path = tmp_path / "items.csv"
    path.write_text("0,1\n2,3\n4,5\n")
    cat = diff_from_dict({"type": "item_catalog", "path": str(path)})
    assert cat.size == 3 and cat.dim == 2


def test_save_load_round_trip_is_bit_exact(tmp_path):
    catalog = ItemCatalog(np.random.default_rng(0).standard_normal((6, 3)) / 7.0)
    pop = FiniteMixture([0.5, 0.5], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    ds = generate(pop, catalog, 30, panel=PanelSpec(10, 3), seed=9)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.equals(ds)
    assert dumps_dataset(back) == path.read_text()


def test_round_trip_without_users(tmp_path):
    ds = generate(antipodal_counterexample(), GaussianDiff(np.eye(2)), 25, seed=2)
    save_dataset(ds, tmp_path / "d.jsonl")
    assert load_dataset(tmp_path / "d.jsonl").equals(ds)


def test_load_reports_line_of_dimension_mismatch(tmp_path):
    ds = generate(antipodal_counterexample(), GaussianDiff(np.eye(2)), 5, seed=2)
    lines = dumps_dataset(ds).splitlines()
    lines[3] = '{"x": [1.0, 2.0, 3.0], "y": 1, "user": null, "items": null}'
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError) as info:
        load_dataset(path)
    assert info.value.lineno == 4


def test_load_rejects_empty_dataset(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text('{"dim": 2}\n')
    with pytest.raises(DatasetFormatError, match="zero records"):
        load_dataset(path)
    with pytest.raises(ValueError, match="zero records"):
        Dataset.from_records([])


def test_records_round_trip():
    ds = generate(antipodal_counterexample(), GaussianDiff(np.eye(2)), 10, panel=PanelSpec(5, 2), seed=4)
    back = Dataset.from_records(ds.records(), ds.provenance)
    assert back.equals(ds)
    rec = next(ds.records())
    assert isinstance(rec, PreferenceRecord) and rec.user_id == 0

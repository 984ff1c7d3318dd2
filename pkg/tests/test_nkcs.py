import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coevolab.nkcs import (ConstantOracle, DimensionError, NkcsConfig, NkcsError, NkcsModel, TableOracle,
                           config_with_seed, dump_tables, generate_nkcs, materialize, topology_neighbors)

from conftest import FIG1_S1, make_fig1_model


def context_row(model, team, s, g):
    """Independent reading of the context rule: own allele, intra links, then partner links (MSB first)."""
    bits = [int(team[s, g])]
    bits += [int(team[s, j]) for j in sorted(model.intra_links[s, g])]
    for t in sorted(model.inter_links[s]):
        bits += [int(team[t, j]) for j in sorted(model.inter_links[s][t][g])]
    return int("".join(map(str, bits)), 2)


def slow_team_fitness(model, tables, team):
    total = 0.0
    for s in range(model.n_species):
        total += np.mean([tables[s][g, context_row(model, team, s, g)] for g in range(model.n_genes)])
    return total


def test_fig1_species_one():
    model = make_fig1_model()
    team = np.array([[1, 0, 1], [1, 1, 0]], dtype=np.uint8)
    # rows 111, 010, 100 of the three tables
    expected = (FIG1_S1[0, 7] + FIG1_S1[1, 2] + FIG1_S1[2, 4]) / 3
    assert model.species_fitness(0, team) == pytest.approx(expected, abs=1e-12)
    assert model.team_fitness(team) == pytest.approx(expected + 0.5, abs=1e-12)


def test_fig1_context_bits(fig1_model):
    team = np.array([[1, 0, 1], [1, 1, 0]], dtype=np.uint8)
    bits = fig1_model.context_bits(team)[0]
    assert [b.tolist() for b in bits] == [[1, 1, 1], [0, 1, 0], [1, 0, 0]]


@pytest.mark.parametrize("topology,expected", [
    ("chain", ((1,), (0, 2), (1, 3), (2,))),
    ("ring", ((1, 3), (0, 2), (1, 3), (0, 2))),
    ("complete", ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))),
])
def test_topologies(topology, expected):
    assert topology_neighbors(4, topology) == expected


def test_context_width_law():
    cfg = NkcsConfig(n_genes=20, k_intra=6, c_inter=8, n_species=6)
    assert [cfg.context_width(s) for s in range(6)] == [15, 23, 23, 23, 23, 15]


@pytest.mark.parametrize("kwargs", [
    dict(k_intra=20), dict(k_intra=-1), dict(c_inter=21), dict(n_genes=0), dict(topology="star"),
])
def test_config_rejects(kwargs):
    with pytest.raises(NkcsError):
        generate_nkcs(NkcsConfig(**kwargs))


def test_links_are_valid():
    model = generate_nkcs(NkcsConfig(k_intra=6, c_inter=8, seed=3))
    for s in range(6):
        for g in range(20):
            row = model.intra_links[s, g]
            assert g not in row and len(set(row.tolist())) == 6
            for t, links in model.inter_links[s].items():
                assert len(set(links[g].tolist())) == 8
                assert links[g].min() >= 0 and links[g].max() < 20


def test_same_seed_same_instance():
    a = generate_nkcs(NkcsConfig(seed=11))
    b = generate_nkcs(NkcsConfig(seed=11))
    c = generate_nkcs(config_with_seed(NkcsConfig(seed=11), 12))
    team = np.random.default_rng(0).integers(0, 2, (6, 20), dtype=np.uint8)
    assert a.team_fitness(team) == b.team_fitness(team)
    assert np.array_equal(a.intra_links, b.intra_links)
    assert a.team_fitness(team) != c.team_fitness(team)


def test_lazy_matches_materialized_and_slow_path():
    model = generate_nkcs(NkcsConfig(n_genes=8, k_intra=2, c_inter=2, n_species=3, seed=5))
    table_model = materialize(model)
    tables = table_model.oracle.tables
    rng = np.random.default_rng(1)
    for _ in range(50):
        team = rng.integers(0, 2, (3, 8), dtype=np.uint8)
        f = model.team_fitness(team)
        assert table_model.team_fitness(team) == pytest.approx(f, abs=1e-15)
        assert slow_team_fitness(model, tables, team) == pytest.approx(f, abs=1e-12)


def test_fast_path_matches_reference():
    model = generate_nkcs(NkcsConfig(k_intra=6, c_inter=8, n_species=6, seed=2))
    teams = np.random.default_rng(4).integers(0, 2, (40, 6, 20), dtype=np.uint8)
    assert np.array_equal(model.contributions(teams), model.reference_contributions(teams))


def test_wide_context_over_64_bits():
    # complete topology: 1 + 10 + 5*12 = 71 bits, spans two words
    model = generate_nkcs(NkcsConfig(n_genes=12, k_intra=10, c_inter=12, n_species=6, topology="complete"))
    assert int(model.widths.max()) == 71
    teams = np.random.default_rng(4).integers(0, 2, (10, 6, 12), dtype=np.uint8)
    assert np.array_equal(model.contributions(teams), model.reference_contributions(teams))
    flipped = teams.copy()
    flipped[:, 5, 0] ^= 1  # a high-order partner bit
    assert not np.array_equal(model.contributions(flipped)[:, 0], model.contributions(teams)[:, 0])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32), team_seed=st.integers(0, 2**32))
def test_fitness_range_and_batch_consistency(seed, team_seed):
    model = generate_nkcs(NkcsConfig(n_genes=10, k_intra=3, c_inter=2, n_species=4, seed=seed))
    teams = np.random.default_rng(team_seed).integers(0, 2, (5, 4, 10), dtype=np.uint8)
    contrib = model.contributions(teams)
    assert np.all((contrib >= 0) & (contrib < 1))
    batch = model.team_fitness(teams)
    singles = [model.team_fitness(t) for t in teams]
    assert np.allclose(batch, singles, atol=1e-12)
    assert np.all((batch >= 0) & (batch <= 4))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), s=st.integers(0, 3), g=st.integers(0, 9))
def test_locality(seed, s, g):
    """Flipping one allele only changes contributions whose context reads it."""
    model = generate_nkcs(NkcsConfig(n_genes=10, k_intra=2, c_inter=1, n_species=4, seed=seed))
    team = np.random.default_rng(seed).integers(0, 2, (4, 10), dtype=np.uint8)
    flipped = team.copy()
    flipped[s, g] ^= 1
    changed = model.contributions(team) != model.contributions(flipped)
    for t in range(4):
        for h in range(10):
            reads = (t == s and (h == g or g in model.intra_links[t, h])) or \
                    (s in model.inter_links[t] and g in model.inter_links[t][s][h])
            if not reads:
                assert not changed[t, h]


def test_species_fitness_is_mean_of_contributions():
    model = generate_nkcs(NkcsConfig(seed=9))
    team = np.random.default_rng(9).integers(0, 2, (6, 20), dtype=np.uint8)
    c = model.contributions(team)
    for s in range(6):
        assert model.species_fitness(s, team) == pytest.approx(c[s].mean())


def test_dimension_errors(fig1_model):
    with pytest.raises(DimensionError):
        fig1_model.team_fitness(np.zeros((2, 4), dtype=np.uint8))
    with pytest.raises(DimensionError):
        fig1_model.team_fitness(np.full((2, 3), 2))
    with pytest.raises(DimensionError):
        fig1_model.species_fitness(2, np.zeros((2, 3), dtype=np.uint8))


def test_inter_links_must_match_topology():
    cfg = NkcsConfig(n_genes=3, k_intra=1, c_inter=1, n_species=2)
    intra = np.array([[[1], [0], [1]]] * 2)
    with pytest.raises(NkcsError):
        NkcsModel(cfg, intra, [{}, {0: np.zeros((3, 1))}], ConstantOracle(0.1))


def test_constant_oracle():
    model = generate_nkcs(NkcsConfig(n_genes=5, k_intra=1, c_inter=1, n_species=3)).with_oracle(ConstantOracle(0.25))
    assert model.team_fitness(np.ones((3, 5), dtype=np.uint8)) == pytest.approx(0.75)


def test_table_oracle_reads_rows():
    model = make_fig1_model(s2_value=0.0)
    assert isinstance(model.oracle, TableOracle)
    team = np.zeros((2, 3), dtype=np.uint8)
    assert model.species_fitness(0, team) == pytest.approx(FIG1_S1[:, 0].mean())


def test_dump_tables(tmp_path):
    model = make_fig1_model()
    path = tmp_path / "t.csv"
    rows = dump_tables(model, path)
    assert rows == 2 * 3 * 8
    with open(path) as fh:
        data = list(csv.DictReader(fh))
    first = data[5]
    assert first["context_bits"] == "101"
    assert first["context_genes"] == "s0n0 s0n2 s1n0"
    assert float(first["fitness"]) == pytest.approx(FIG1_S1[0, 5])


def test_dump_tables_refuses_wide_contexts(tmp_path):
    model = generate_nkcs(NkcsConfig(k_intra=6, c_inter=8))
    with pytest.raises(NkcsError):
        dump_tables(model, tmp_path / "x.csv")


def test_config_mapping_roundtrip():
    cfg = NkcsConfig(n_genes=12, k_intra=3, c_inter=4, n_species=5, topology="ring", seed=77)
    back = NkcsConfig.from_mapping({k: str(v) for k, v in cfg.to_mapping().items()})
    assert back == cfg

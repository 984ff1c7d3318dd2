import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import coevolab.surrogate as sg
from coevolab.evolution import BinarySpace, EaParams, InvalidParamsError
from coevolab.nkcs import NkcsConfig, generate_nkcs
from coevolab.surrogate import (Mlp, SurrogateGA, SurrogateParams, build_training_set, init_mlp,
                                loss_and_gradient, predict, propose_offspring, train)

S, N, P = 3, 8, 6


def numpy_forward(mlp, x):
    h = 1 / (1 + np.exp(-(mlp.w1 @ x + mlp.b1)))
    return 1 / (1 + np.exp(-(mlp.w2 @ h + mlp.b2[0])))


def make_scga(variant="b", budget_model=None, seed=0, **kw):
    model = budget_model or generate_nkcs(NkcsConfig(n_genes=N, k_intra=2, c_inter=1, n_species=S, seed=seed))
    sp = SurrogateParams(lambda_m=kw.pop("lambda_m", 50), epochs=kw.pop("epochs", 5), hidden=4,
                         variant=variant, **kw)
    return SurrogateGA(BinarySpace(N, 1 / N), model.team_fitness, S, EaParams(pop_size=P, mutation_rate=1 / N),
                       sp, np.random.default_rng(seed), np.random.default_rng(seed + 1))


# ------------------------------------------------------------------ network


def test_init_range_and_shapes():
    mlp = init_mlp(7, 5, np.random.default_rng(0))
    assert mlp.w1.shape == (5, 7) and mlp.b1.shape == (5,) and mlp.w2.shape == (5,) and mlp.b2.shape == (1,)
    assert mlp.n_params == 5 * 7 + 5 + 5 + 1
    for w in (mlp.w1, mlp.b1, mlp.w2, mlp.b2):
        assert np.all(np.abs(w) <= 0.5)
    with pytest.raises(ValueError):
        init_mlp(0, 3, np.random.default_rng(0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_predict_matches_numpy_forward(seed):
    rng = np.random.default_rng(seed)
    mlp = init_mlp(6, 4, rng)
    X = rng.integers(0, 2, (9, 6)).astype(float)
    batch = predict(mlp, X)
    for x, y in zip(X, batch):
        assert y == pytest.approx(numpy_forward(mlp, x), abs=1e-14)
        assert 0 < y < 1
    assert isinstance(predict(mlp, X[0]), float)
    with pytest.raises(ValueError):
        predict(mlp, np.zeros(5))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    mlp = init_mlp(5, 3, rng)
    x, t = rng.random(5), 0.3
    _, grad = loss_and_gradient(mlp, x, t)
    eps = 1e-6
    for name in ("w1", "b1", "w2", "b2"):
        w = getattr(mlp, name)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + eps
            up = 0.5 * (numpy_forward(mlp, x) - t) ** 2
            w[idx] = old - eps
            down = 0.5 * (numpy_forward(mlp, x) - t) ** 2
            w[idx] = old
            assert grad[name][idx] == pytest.approx((up - down) / (2 * eps), abs=1e-8)


def test_one_epoch_equals_manual_sgd():
    rng = np.random.default_rng(1)
    mlp = init_mlp(4, 3, rng, learning_rate=0.2)
    manual = mlp.copy()
    X = rng.random((5, 4))
    y = rng.random(5)
    steps = train(mlp, X, y, 1, np.random.default_rng(9))
    assert steps == 5
    for n in np.random.default_rng(9).permutation(5):
        _, g = loss_and_gradient(manual, X[n], y[n])
        for name in g:
            getattr(manual, name)[...] -= 0.2 * g[name]
    for name in ("w1", "b1", "w2", "b2"):
        assert np.allclose(getattr(mlp, name), getattr(manual, name), atol=1e-13)


def test_training_fits_a_simple_target():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 2, (64, 6)).astype(float)
    y = 0.2 + 0.6 * X.mean(axis=1)
    mlp = init_mlp(6, 6, rng, learning_rate=0.5)
    before = np.mean((predict(mlp, X) - y) ** 2)
    train(mlp, X, y, 300, rng)
    after = np.mean((predict(mlp, X) - y) ** 2)
    assert after < before / 10


def test_train_rejects_bad_data():
    mlp = init_mlp(3, 2, np.random.default_rng(0))
    with pytest.raises(ValueError):
        train(mlp, np.zeros((0, 3)), np.zeros(0), 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        train(mlp, np.zeros((2, 4)), np.zeros(2), 1, np.random.default_rng(0))


# ------------------------------------------------------------------ params


def test_params_validation_and_roundtrip():
    with pytest.raises(InvalidParamsError):
        SurrogateParams(variant="z").validate()
    with pytest.raises(InvalidParamsError):
        SurrogateParams(lambda_m=0).validate()
    with pytest.raises(InvalidParamsError):
        SurrogateParams(window_mode="recent").validate()
    p = SurrogateParams(lambda_m=7, epochs=3, learning_rate=0.3, hidden=2, variant="bw", window=5,
                        window_mode="population", warmup=40)
    assert SurrogateParams.from_mapping({k: str(v) for k, v in p.to_mapping().items()}) == p


def test_surrogate_requires_best_partners_and_full_warmup():
    with pytest.raises(InvalidParamsError):
        SurrogateGA(BinarySpace(N, 0.1), sum, S, EaParams(pop_size=P, scheme="br"), SurrogateParams(),
                    np.random.default_rng(0))
    ga = make_scga(warmup=S * P - 1)
    with pytest.raises(InvalidParamsError):
        ga.run(100)


# ------------------------------------------------------------------ training sets


@pytest.fixture
def warmed():
    ga = make_scga("b")
    ga.run(S * P + 9)
    return ga


def test_training_set_b_uses_whole_archive(warmed):
    X, y = build_training_set(warmed, 1, SurrogateParams(variant="b"), lambda v: v / S)
    arch = warmed.populations[1].archive
    assert X.shape == (len(arch), N)
    assert np.allclose(y, np.array(arch.targets) / S)
    assert np.all((y >= 0) & (y <= 1))


def test_training_set_bw_is_archive_suffix(warmed):
    X, y = build_training_set(warmed, 0, SurrogateParams(variant="bw", window=4), lambda v: v)
    arch = warmed.populations[0].archive
    assert np.array_equal(X, np.stack(arch.genomes[-4:]))
    assert y.tolist() == arch.targets[-4:]


def test_training_set_bw_population_mode(warmed):
    X, y = build_training_set(warmed, 2, SurrogateParams(variant="bw", window_mode="population"), lambda v: v)
    pop = warmed.populations[2]
    assert np.array_equal(X, pop.genomes) and np.array_equal(y, pop.fitness)


def test_training_set_a_is_whole_team(warmed):
    X, _ = build_training_set(warmed, 0, SurrogateParams(variant="a"), lambda v: v)
    arch = warmed.populations[0].archive
    assert X.shape == (len(arch), S * N)
    assert np.array_equal(X[-1], arch.teams[-1].ravel())


# ------------------------------------------------------------------ screening


class RecordingSpace(BinarySpace):
    def mutate_many(self, genome, count, rng):
        self.last = super().mutate_many(genome, count, rng)
        return self.last

    def mutate_rows(self, genomes, rng):
        self.last = super().mutate_rows(genomes, rng)
        return self.last


@pytest.mark.parametrize("variant", ["b", "p", "a"])
def test_screening_returns_argmax_of_model(variant, monkeypatch, warmed):
    space = RecordingSpace(N, 0.3)
    object.__setattr__(warmed, "space", space)
    # stub model: predicts the number of ones in the species' own block
    lo = 0 if variant != "a" else N
    monkeypatch.setattr(sg, "predict", lambda mlp, X: X[:, lo:lo + N].sum(axis=1) + 1e-6 * np.arange(len(X))[::-1])
    params = SurrogateParams(lambda_m=40, variant=variant)
    child = propose_offspring(warmed, 1, None, params, np.random.default_rng(0))
    sums = space.last.sum(axis=1)
    assert child.sum() == sums.max()
    assert np.array_equal(child, space.last[int(np.argmax(sums))])


def test_screening_ties_pick_first(monkeypatch, warmed):
    space = RecordingSpace(N, 0.3)
    object.__setattr__(warmed, "space", space)
    monkeypatch.setattr(sg, "predict", lambda mlp, X: np.zeros(len(X)))
    child = propose_offspring(warmed, 0, None, SurrogateParams(lambda_m=10), np.random.default_rng(0))
    assert np.array_equal(child, space.last[0])


def test_variant_p_draws_many_parents():
    fit = np.arange(10.0)
    parents = sg._tournament_parents(fit, 3, 20000, np.random.default_rng(0))
    assert parents.min() >= 2
    assert np.mean(parents == 9) == pytest.approx(0.3, abs=0.02)
    assert np.all(sg._tournament_parents(np.zeros(5), 5, 10, np.random.default_rng(0)) == 0)


# ------------------------------------------------------------------ driver


@pytest.mark.parametrize("variant", ["b", "a", "p", "bw"])
def test_model_used_every_turn_after_warmup(variant):
    ga = make_scga(variant)
    trace = ga.run(60)
    assert len(trace) == 60
    assert ga.model_turns == 60 - S * P


def test_custom_warmup():
    ga = make_scga(warmup=30)
    ga.run(50)
    assert ga.model_turns == 20


def test_fresh_network_each_turn(monkeypatch):
    ga = make_scga(lambda_m=5)
    ga.run(S * P)
    seen = []
    real = sg.init_mlp

    def spy(*args, **kwargs):
        m = real(*args, **kwargs)
        seen.append(m)
        return m

    monkeypatch.setattr(sg, "init_mlp", spy)
    ga.run(S * P + 3)
    assert len(seen) == 3 and len({id(m) for m in seen}) == 3


def test_scga_reproducible():
    a = make_scga(seed=4).run(50).team_fitness
    b = make_scga(seed=4).run(50).team_fitness
    assert a == b

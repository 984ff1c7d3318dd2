"""MLP fitness surrogate and the surrogate-assisted coevolutionary GA (SCGA).

Each species turn after warm-up: a fresh 3-layer perceptron is trained by
online backpropagation on the species archive, ``lambda_m`` candidate
offspring are screened on it, and only the best-predicted candidate is
evaluated for real (with the elites of the other species).

Variants: ``b`` (own genes, whole archive), ``a`` (whole team as input),
``p`` (one offspring from each of ``lambda_m`` tournaments), ``bw`` (recent
window of the archive, or the current population in ``population`` mode).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from numba import njit

from .config import ConfigError, get_float, get_int, get_str
from .evolution import (CooperativeGA, EaParams, Evaluator, GenomeSpace, InvalidParamsError, RunTrace,
                        tournament_select)

__all__ = [
    "VARIANTS",
    "Mlp",
    "SurrogateParams",
    "init_mlp",
    "train",
    "predict",
    "loss_and_gradient",
    "build_training_set",
    "propose_offspring",
    "SurrogateGA",
    "run_scga",
]

VARIANTS = ("b", "a", "p", "bw")
INIT_RANGE = 0.5


# -------------------------------------------------------------------------- mlp


@dataclass
class Mlp:
    """input -> sigmoid hidden layer -> single sigmoid output."""

    w1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H,)
    b2: np.ndarray  # (1,)
    learning_rate: float = 0.1

    @property
    def input_width(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[0]

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def copy(self) -> "Mlp":
        return Mlp(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.learning_rate)


def init_mlp(input_width: int, hidden: int, rng: np.random.Generator,
             learning_rate: float = 0.1) -> Mlp:
    """Weights and biases i.i.d. uniform in [-0.5, 0.5]."""
    if input_width < 1 or hidden < 1:
        raise ValueError("layer widths must be >= 1")
    u = lambda *shape: rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
    return Mlp(u(hidden, input_width), u(hidden), u(hidden), u(1), learning_rate)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def predict(mlp: Mlp, x: np.ndarray) -> float | np.ndarray:
    """Forward pass for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != mlp.input_width:
        raise ValueError(f"input width {x.shape[-1]} does not match network width {mlp.input_width}")
    h = _sigmoid(x @ mlp.w1.T + mlp.b1)
    y = _sigmoid(h @ mlp.w2 + mlp.b2[0])
    return float(y) if np.ndim(y) == 0 else y


@njit(cache=True)
def _backprop(w1, b1, w2, b2, x, t, gw1, gb1, gw2, gb2):
    """Squared-error loss 0.5*(y-t)^2 and its gradient, written into g*."""
    H, D = w1.shape
    h = np.empty(H)
    z2 = b2[0]
    for j in range(H):
        a = b1[j]
        for i in range(D):
            a += w1[j, i] * x[i]
        h[j] = 1.0 / (1.0 + np.exp(-a))
        z2 += w2[j] * h[j]
    y = 1.0 / (1.0 + np.exp(-z2))
    err = y - t
    dy = err * y * (1.0 - y)
    gb2[0] = dy
    for j in range(H):
        gw2[j] = dy * h[j]
        dh = dy * w2[j] * h[j] * (1.0 - h[j])
        gb1[j] = dh
        for i in range(D):
            gw1[j, i] = dh * x[i]
    return 0.5 * err * err


@njit(cache=True)
def _train_online(w1, b1, w2, b2, X, y, order, lr):
    H, D = w1.shape
    gw1 = np.empty((H, D))
    gb1 = np.empty(H)
    gw2 = np.empty(H)
    gb2 = np.empty(1)
    steps = 0
    for e in range(order.shape[0]):
        for k in range(order.shape[1]):
            n = order[e, k]
            _backprop(w1, b1, w2, b2, X[n], y[n], gw1, gb1, gw2, gb2)
            for j in range(H):
                for i in range(D):
                    w1[j, i] -= lr * gw1[j, i]
                b1[j] -= lr * gb1[j]
                w2[j] -= lr * gw2[j]
            b2[0] -= lr * gb2[0]
            steps += 1
    return steps


def loss_and_gradient(mlp: Mlp, x: np.ndarray, target: float) -> tuple[float, dict[str, np.ndarray]]:
    """Backprop gradient of 0.5*(y - target)^2 at one sample (same kernel training uses)."""
    g = {"w1": np.empty_like(mlp.w1), "b1": np.empty_like(mlp.b1),
         "w2": np.empty_like(mlp.w2), "b2": np.empty_like(mlp.b2)}
    loss = _backprop(mlp.w1, mlp.b1, mlp.w2, mlp.b2, np.asarray(x, dtype=np.float64), float(target),
                     g["w1"], g["b1"], g["w2"], g["b2"])
    return float(loss), g


def train(mlp: Mlp, X: np.ndarray, y: np.ndarray, epochs: int, rng: np.random.Generator) -> int:
    """Online backprop for ``epochs`` passes, each over a fresh random permutation.

    Updates ``mlp`` in place; returns the number of weight updates.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("cannot train on an empty sample set")
    if X.shape[1] != mlp.input_width:
        raise ValueError(f"sample width {X.shape[1]} does not match network width {mlp.input_width}")
    order = np.stack([rng.permutation(len(X)) for _ in range(epochs)]) if epochs > 0 else np.zeros((0, len(X)), dtype=np.int64)
    return int(_train_online(mlp.w1, mlp.b1, mlp.w2, mlp.b2, X, y, order.astype(np.int64), mlp.learning_rate))


# --------------------------------------------------------------------- params


@dataclass(frozen=True)
class SurrogateParams:
    lambda_m: int = 1000
    epochs: int = 50
    learning_rate: float = 0.1
    hidden: int = 10
    variant: str = "b"
    window: int = 20
    window_mode: str = "archive"  # or "population"
    warmup: int | None = None  # defaults to S*P

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise InvalidParamsError(f"unknown surrogate variant {self.variant!r}; expected one of {VARIANTS}")
        if self.lambda_m < 1 or self.epochs < 1 or self.window < 1 or self.hidden < 1:
            raise InvalidParamsError("lambda_m, epochs, window and hidden must all be >= 1")
        if self.window_mode not in ("archive", "population"):
            raise InvalidParamsError(f"unknown window mode {self.window_mode!r}")

    def to_mapping(self) -> dict[str, object]:
        out: dict[str, object] = {
            "lambda_m": self.lambda_m,
            "epochs": self.epochs,
            "beta": self.learning_rate,
            "hidden": self.hidden,
            "variant": self.variant,
            "window": self.window,
            "window_mode": self.window_mode,
        }
        if self.warmup is not None:
            out["warmup"] = self.warmup
        return out

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "SurrogateParams":
        d = cls()
        warm = values.get("warmup")
        try:
            warmup = int(warm) if warm not in (None, "") else None
        except ValueError:
            raise ConfigError(f"warmup: expected integer, got {warm!r}") from None
        return cls(
            lambda_m=get_int(values, "lambda_m", d.lambda_m),
            epochs=get_int(values, "epochs", d.epochs),
            learning_rate=get_float(values, "beta", d.learning_rate),
            hidden=get_int(values, "hidden", d.hidden),
            variant=get_str(values, "variant", d.variant),
            window=get_int(values, "window", d.window),
            window_mode=get_str(values, "window_mode", d.window_mode),
            warmup=warmup,
        )


# --------------------------------------------------------------- data & search


def build_training_set(ga: CooperativeGA, species: int, params: SurrogateParams,
                       scale: Callable[[np.ndarray], np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Inputs and scaled targets for one species' model.

    ``b``/``p``: every archive entry, own genome. ``a``: every archive entry,
    whole team in species order. ``bw``: last ``window`` archive entries, or the
    current members with their assigned fitness in ``population`` mode.
    """
    pop = ga.populations[species]
    enc = ga.space.encode
    if params.variant == "bw" and params.window_mode == "population":
        return enc(pop.genomes), scale(pop.fitness.copy())
    arch = pop.archive
    if len(arch) == 0:
        raise ValueError(f"species {species} archive is empty")
    start = max(0, len(arch) - params.window) if params.variant == "bw" else 0
    targets = scale(np.asarray(arch.targets[start:], dtype=np.float64))
    if params.variant == "a":
        teams = np.stack(arch.teams[start:])
        X = enc(teams.reshape(-1, teams.shape[-1])).reshape(len(teams), -1)
    else:
        X = enc(np.stack(arch.genomes[start:]))
    return X, targets


def _tournament_parents(fitness: np.ndarray, size: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent tournaments at once; ties go to the lowest index."""
    P = len(fitness)
    keys = rng.random((count, P))
    sample = np.sort(np.argpartition(keys, size - 1, axis=1)[:, :size], axis=1)
    best = np.argmax(fitness[sample], axis=1)
    return sample[np.arange(count), best]


def propose_offspring(ga: CooperativeGA, species: int, mlp: Mlp, params: SurrogateParams,
                      rng: np.random.Generator) -> np.ndarray:
    """Screen ``lambda_m`` candidates on ``mlp``; return the best predicted (first on ties)."""
    pop = ga.populations[species]
    lam = params.lambda_m
    tsize = ga.params.tournament_size
    if params.variant == "p":
        parents = _tournament_parents(pop.fitness, tsize, lam, rng)
        candidates = ga.space.mutate_rows(pop.genomes[parents], rng)
    else:
        parent = pop.genomes[tournament_select(pop.fitness, tsize, rng)]
        candidates = ga.space.mutate_many(parent, lam, rng)
    X = ga.space.encode(candidates)
    if params.variant == "a":
        elites = [p.genomes[p.elite_index] for p in ga.populations]
        enc_team = [ga.space.encode(g[None, :])[0] for g in elites]
        blocks = [np.broadcast_to(e, (lam, e.shape[0])) for e in enc_team]
        blocks[species] = X
        X = np.concatenate(blocks, axis=1)
    scores = predict(mlp, X)
    return candidates[int(np.argmax(scores))].copy()


# ---------------------------------------------------------------------- driver


class SurrogateGA(CooperativeGA):
    """CGA-b until ``warmup`` evaluations, then surrogate-screened offspring every turn.

    ``target_scale`` maps raw team fitness into [0, 1] for training; it must be
    monotone. The default divides by the number of species (NKCS team fitness
    lies in [0, S]).
    """

    def __init__(self, space: GenomeSpace, evaluator: Evaluator, n_species: int,
                 params: EaParams, surrogate: SurrogateParams, rng: np.random.Generator,
                 init_rng: np.random.Generator | None = None,
                 target_scale: Callable[[np.ndarray], np.ndarray] | None = None):
        if params.scheme != "b":
            raise InvalidParamsError("the surrogate-assisted GA partners with elites (scheme 'b')")
        surrogate.validate()
        super().__init__(space, evaluator, n_species, params, rng, init_rng)
        self.surrogate = surrogate
        self.target_scale = target_scale or (lambda y: y / n_species)
        self.model_turns = 0
        self.last_model: Mlp | None = None

    @property
    def warmup(self) -> int:
        w = self.surrogate.warmup
        return self.n_species * self.params.pop_size if w is None else w

    def breed(self, species: int) -> np.ndarray:
        if self.evaluations < self.warmup:
            return super().breed(species)
        sp = self.surrogate
        X, y = build_training_set(self, species, sp, self.target_scale)
        mlp = init_mlp(X.shape[1], sp.hidden, self.rng, sp.learning_rate)
        train(mlp, X, y, sp.epochs, self.rng)
        self.last_model = mlp
        self.model_turns += 1
        return propose_offspring(self, species, mlp, sp, self.rng)

    def run(self, budget: int, **init_kwargs) -> RunTrace:
        S, P = self.n_species, self.params.pop_size
        if self.warmup < S * P:
            raise InvalidParamsError(f"warm-up {self.warmup} shorter than initialisation S*P={S * P}")
        return super().run(budget, **init_kwargs)


def run_scga(evaluator: Evaluator, space: GenomeSpace, n_species: int, params: EaParams,
             surrogate: SurrogateParams, budget: int, rng: np.random.Generator,
             init_rng: np.random.Generator | None = None) -> RunTrace:
    ga = SurrogateGA(space, evaluator, n_species, params, surrogate, rng, init_rng)
    return ga.run(budget)

"""Erasure channels and reproducible random streams.

A delivered packet is a 1, a dropped one a 0.  Each simulated path owns
separate streams for process noise, measurement noise and the two channels,
so paths can be run in any order (or in any batch) with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROLES = {
    "process": 0,
    "measurement": 1,
    "sensor": 2,
    "control": 3,
    "initial": 4,
    "moments": 5,
}


@dataclass(frozen=True)
class RngStream:
    """Independent generator keyed by ``(seed, stream)``.

    Built on numpy's ``SeedSequence`` spawn keys, which hash the pair into a
    PCG64 state; distinct keys give statistically independent streams.
    """

    seed: int
    stream: int

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1),
                                    spawn_key=(int(self.stream) & (2**64 - 1),))
        return np.random.Generator(np.random.PCG64(ss))


def stream_id(path: int, role: str) -> int:
    return int(path) * 16 + ROLES[role]


def path_rng(seed: int, path: int, role: str) -> np.random.Generator:
    return RngStream(seed, stream_id(path, role)).generator()


@dataclass
class BernoulliChannel:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("success probability must lie in [0, 1]")

    @property
    def kind(self) -> str:
        return "bernoulli"

    @property
    def delivery_rate(self) -> float:
        return self.p

    def reset(self, rng: np.random.Generator) -> None:
        pass

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.random() < self.p)

    def sample_windows(self, rng: np.random.Generator, count: int, length: int) -> np.ndarray:
        """``count`` independent bit sequences of ``length`` draws each."""
        return (rng.random((count, length)) < self.p).astype(np.int8)

    def sample_sequence(self, rng: np.random.Generator, length: int) -> np.ndarray:
        return self.sample_windows(rng, 1, length)[0]


@dataclass
class GilbertElliottChannel:
    """Two-state Markov channel (good/bad) with state-dependent delivery.

    Each call first moves the chain, then emits with the new state's success
    probability.  ``reset`` draws the initial state from the stationary law.
    """

    p_gb: float
    p_bg: float
    p_good: float
    p_bad: float = 0.0
    state: str = field(default="good")

    def __post_init__(self):
        for name in ("p_gb", "p_bg", "p_good", "p_bad"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.p_gb + self.p_bg == 0:
            raise ValueError("chain with p_gb = p_bg = 0 has no stationary law")

    @property
    def kind(self) -> str:
        return "gilbert_elliott"

    @property
    def stationary_good(self) -> float:
        return self.p_bg / (self.p_gb + self.p_bg)

    @property
    def delivery_rate(self) -> float:
        pi = self.stationary_good
        return pi * self.p_good + (1 - pi) * self.p_bad

    def reset(self, rng: np.random.Generator) -> None:
        self.state = "good" if rng.random() < self.stationary_good else "bad"

    def _advance(self, u: float) -> None:
        if self.state == "good":
            if u < self.p_gb:
                self.state = "bad"
        elif u < self.p_bg:
            self.state = "good"

    def sample(self, rng: np.random.Generator) -> int:
        u_move, u_emit = rng.random(2)
        self._advance(u_move)
        p = self.p_good if self.state == "good" else self.p_bad
        return int(u_emit < p)

    def sample_windows(self, rng: np.random.Generator, count: int, length: int) -> np.ndarray:
        """``count`` independent sequences, each started from the stationary law."""
        good = rng.random(count) < self.stationary_good
        u = rng.random((length, 2, count))
        out = np.empty((count, length), dtype=np.int8)
        for t in range(length):
            good = np.where(good, u[t, 0] >= self.p_gb, u[t, 0] < self.p_bg)
            p = np.where(good, self.p_good, self.p_bad)
            out[:, t] = u[t, 1] < p
        return out

    def sample_sequence(self, rng: np.random.Generator, length: int) -> np.ndarray:
        """Stationary start, then ``length`` transition-then-emit steps."""
        return self.sample_windows(rng, 1, length)[0]


def sample(channel, rng: np.random.Generator) -> int:
    """One delivery bit from ``channel``."""
    return channel.sample(rng)


def make_channel(kind: str, **params):
    if kind == "bernoulli":
        return BernoulliChannel(params["p"])
    if kind == "gilbert_elliott":
        return GilbertElliottChannel(params["p_gb"], params["p_bg"],
                                     params["p_good"], params.get("p_bad", 0.0))
    raise ValueError(f"unknown channel kind {kind!r}")

"""Actor-critic pair trained online on the episodes sampled from the transition matrix.

The actor maps an episode (its cities' coordinates in visiting order) to a
softmax over cities. Those scores define a sequential-choice
(Plackett-Luce) law over permutations, which is what makes the REINFORCE
log-likelihood differentiable in the actor weights. The critic regresses the
tour length and serves as the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import neural
from .exceptions import NumericError, ShapeError
from .neural import DenseNet, OptimizerState
from .tsp_core import TspInstance, check_tour, tour_lengths

ACTOR_HIDDEN = (64, 32, 32, 32, 32)
CRITIC_HIDDEN = (64, 32, 32, 16, 8)


def actor_widths(n: int) -> list[int]:
    return [2 * n, *ACTOR_HIDDEN, n]


def critic_widths(n: int) -> list[int]:
    return [2 * n, *CRITIC_HIDDEN, 1]


@dataclass
class ActorCritic:
    actor: DenseNet
    critic: DenseNet
    actor_opt: OptimizerState
    critic_opt: OptimizerState

    def __post_init__(self):
        n = self.actor.layer_widths[-1]
        if self.actor.layer_widths[0] != 2 * n or self.critic.layer_widths[0] != 2 * n:
            raise ShapeError("actor and critic inputs must both have width 2n")
        if self.actor.head != neural.SOFTMAX or self.critic.head != neural.LINEAR:
            raise ShapeError("actor needs a softmax head and critic a linear head")

    @property
    def n(self) -> int:
        return self.actor.layer_widths[-1]

    @classmethod
    def create(cls, n, seed=None, lr_actor=3e-4, lr_critic=2e-4, decay=0.96, eps=1e-6):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        actor = neural.init_net(actor_widths(n), neural.SOFTMAX, rng)
        critic = neural.init_net(critic_widths(n), neural.LINEAR, rng)
        return cls(
            actor,
            critic,
            OptimizerState.for_net(actor, lr_actor, decay, eps),
            OptimizerState.for_net(critic, lr_critic, decay, eps),
        )


@dataclass
class EpisodeBatch:
    episodes: np.ndarray  # (B, n) city indices
    lengths: np.ndarray  # (B,)
    encodings: np.ndarray  # (B, 2n)

    def __len__(self):
        return self.episodes.shape[0]

    @classmethod
    def from_tours(cls, instance: TspInstance, tours) -> "EpisodeBatch":
        tours = np.atleast_2d(np.asarray(tours, dtype=np.intp))
        if tours.shape[0] < 1:
            raise ShapeError("an episode batch needs at least one tour")
        for t in tours:
            check_tour(instance.n, t)
        return cls(tours, tour_lengths(instance, tours), encode_episodes(instance, tours))


def encode_episode(instance: TspInstance, tour) -> np.ndarray:
    """Coordinates in visiting order, flattened to ``(x0, y0, x1, y1, ...)``."""
    perm = check_tour(instance.n, tour)
    return instance.cities[perm].ravel()


def encode_episodes(instance: TspInstance, tours) -> np.ndarray:
    tours = np.asarray(tours, dtype=np.intp)
    if tours.ndim != 2 or tours.shape[1] != instance.n:
        raise ShapeError(f"expected tours of length {instance.n}, got shape {tours.shape}")
    return instance.cities[tours].reshape(tours.shape[0], -1)


def actor_v(ac: ActorCritic, batch: EpisodeBatch) -> np.ndarray:
    """Mean of the actor's softmax rows over the batch."""
    if len(batch) < 1:
        raise ShapeError("empty batch")
    probs, _ = neural.forward(ac.actor, batch.encodings)
    return probs.mean(axis=0)


def _suffix_sums(scores, tour):
    s = scores[tour]
    return s, np.cumsum(s[::-1])[::-1]


def actor_log_prob(scores, tour) -> float:
    """Sequential-choice log-likelihood of ``tour`` under ``scores``, first city given.

    Each later city is chosen with probability proportional to its score among
    the cities not yet visited; the final step is forced and contributes 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    tour = np.asarray(tour, dtype=np.intp)
    if np.any(scores <= 0) or not np.all(np.isfinite(scores)):
        raise NumericError("scores must be finite and strictly positive")
    s, denom = _suffix_sums(scores, tour)
    return float(np.sum(np.log(s[1:]) - np.log(denom[1:])))


def actor_log_prob_grad(scores, tour) -> np.ndarray:
    """d actor_log_prob / d scores."""
    scores = np.asarray(scores, dtype=np.float64)
    tour = np.asarray(tour, dtype=np.intp)
    s, denom = _suffix_sums(scores, tour)
    inv = 1.0 / denom
    inv[0] = 0.0
    # the city at position k is still unvisited at every step t with 1 <= t <= k
    through = np.cumsum(inv)
    by_pos = -through
    by_pos[1:] += 1.0 / s[1:]
    grad = np.empty_like(scores)
    grad[tour] = by_pos
    return grad


def relative_targets(v) -> np.ndarray:
    """Rescale a probability vector so the uniform vector maps to all ones, capped at 1.

    A probability vector over ``n`` cities averages ``1/n``, below the
    ``1/(n-1)`` a uniform transition row already holds, so using it directly
    as the pull target lowers the sampled tour's edges. Measured relative to
    uniform, cities the actor favors pull their edge all the way toward 1.
    """
    v = np.asarray(v, dtype=np.float64)
    return np.minimum(v.shape[0] * v, 1.0)


def critic_predict(ac: ActorCritic, batch: EpisodeBatch) -> np.ndarray:
    out, _ = neural.forward(ac.critic, batch.encodings)
    return out[:, 0]


def actor_gradient(ac: ActorCritic, batch: EpisodeBatch, baselines) -> tuple[list, float]:
    """Gradient of ``mean((L - b) * log p)`` in the actor weights, and that surrogate's value.

    Descending this gradient raises the likelihood of tours shorter than
    their baseline. ``baselines`` are treated as constants.
    """
    probs, trace = neural.forward(ac.actor, batch.encodings)
    adv = batch.lengths - np.asarray(baselines, dtype=np.float64)
    B = len(batch)
    dprobs = np.empty_like(probs)
    logp = np.empty(B)
    for i in range(B):
        logp[i] = actor_log_prob(probs[i], batch.episodes[i])
        dprobs[i] = adv[i] / B * actor_log_prob_grad(probs[i], batch.episodes[i])
    grads = neural.backward(ac.actor, trace, dprobs)
    return grads, float(np.mean(adv * logp))


def reinforce_step(ac: ActorCritic, batch: EpisodeBatch):
    """One REINFORCE update of the actor with the critic's per-episode baseline."""
    baselines = critic_predict(ac, batch)
    grads, surrogate = actor_gradient(ac, batch, baselines)
    neural.rmsprop_step(ac.actor_opt, ac.actor.params, grads)
    diag = {
        "surrogate": surrogate,
        "mean_advantage": float(np.mean(batch.lengths - baselines)),
    }
    return diag, ac


def critic_step(ac: ActorCritic, batch: EpisodeBatch):
    """One RMSProp step on the critic's mean squared error; returns the pre-step mse."""
    pred, trace = neural.forward(ac.critic, batch.encodings)
    err = pred[:, 0] - batch.lengths
    mse = float(np.mean(err * err))
    if not np.isfinite(mse):
        raise NumericError("non-finite critic loss")
    grads = neural.backward(ac.critic, trace, (2.0 / len(batch)) * err[:, None])
    neural.rmsprop_step(ac.critic_opt, ac.critic.params, grads)
    return mse, ac

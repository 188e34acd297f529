"""Meta-SAC: soft actor-critic with a learned meta-critic auxiliary actor loss.

One gradient iteration (see :func:`gradient_iteration`):

1. critic step on a training batch (soft Bellman target from the target nets);
2. actor look-ahead theta_old = theta - lr * dJ and theta_new = theta_old - lr * dL_mc,
   both gradients taken at theta; the live actor then takes one optimizer
   step along dJ + dL_mc (with plain SGD that lands exactly on theta_new);
3. meta-critic step on L_meta = J(D_val; theta_new) - J(D_val; theta_old),
   differentiated through the theta_new construction;
4. soft update of both target networks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .nn import (
    Mlp,
    add_scaled,
    deterministic_action,
    make_optimizer,
    soft_update,
    squashed_gaussian,
    squashed_gaussian_backward,
)

LOG_COLUMNS = ("episode", "reward", "ee", "rate", "power", "critic_loss", "actor_loss", "meta_loss")


class ReplayBuffer:
    """Ring buffer of (s, a, s', r, done); storage grows on demand up to ``capacity``."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.state_dim, self.action_dim = state_dim, action_dim
        self._alloc = 0
        self.s = self.a = self.s2 = self.r = self.done = None
        self._grow(min(capacity, 1024))
        self.size = 0
        self.pos = 0

    def _grow(self, n: int) -> None:
        def resize(old, shape):
            new = np.zeros(shape)
            if old is not None:
                new[: old.shape[0]] = old
            return new

        self.s = resize(self.s, (n, self.state_dim))
        self.a = resize(self.a, (n, self.action_dim))
        self.s2 = resize(self.s2, (n, self.state_dim))
        self.r = resize(self.r, (n,))
        self.done = resize(self.done, (n,))
        self._alloc = n

    def __len__(self) -> int:
        return self.size

    def add(self, s, a, s2, r, done: bool = False) -> None:
        if self.pos >= self._alloc:
            self._grow(min(self.capacity, 2 * self._alloc))
        i = self.pos
        self.s[i], self.a[i], self.s2[i], self.r[i] = s, a, s2, r
        self.done[i] = float(done)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        return rng.integers(0, self.size, batch_size)

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        idx = self.sample_indices(rng, batch_size)
        return Batch(self.s[idx], self.a[idx], self.s2[idx], self.r[idx], self.done[idx])


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    s2: np.ndarray
    r: np.ndarray
    done: np.ndarray | None = None

    def __len__(self) -> int:
        return self.r.shape[0]


class RunningNorm:
    """Per-dimension running mean/variance (Welford) with clipping."""

    def __init__(self, dim: int, clip: float = 5.0):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.clip = clip

    def update(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        return np.sqrt(self.m2 / self.count + 1e-12)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.count < 2:
            return np.clip(x, -self.clip, self.clip)
        return np.clip((x - self.mean) / self.std, -self.clip, self.clip)


@dataclass
class AgentBundle:
    """Networks, hyper-parameters, replay and optimizer state of one agent."""

    actor: Mlp
    critic: Mlp
    actor_target: Mlp
    critic_target: Mlp
    meta_critic: Mlp | None
    gamma: float
    entropy_weight: float
    lr_actor: float
    lr_critic: float
    lr_meta: float
    tau: float
    batch_size: int
    buffer: ReplayBuffer
    obs_norm: RunningNorm
    optimizer: str = "sgd"
    _step_ids: itertools.count = field(default_factory=itertools.count, repr=False)
    _last_step: int = -1

    def __post_init__(self):
        if not (self.actor.same_architecture(self.actor_target)
                and self.critic.same_architecture(self.critic_target)):
            raise ValueError("target networks must match their sources")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        self.actor_opt = make_optimizer(self.optimizer, self.lr_actor)
        self.critic_opt = make_optimizer(self.optimizer, self.lr_critic)
        self.meta_opt = make_optimizer(self.optimizer, self.lr_meta)

    @property
    def action_dim(self) -> int:
        return self.actor.widths[-1] // 2

    @property
    def state_dim(self) -> int:
        return self.actor.widths[0]


def make_agent(cfg: ScenarioConfig, state_dim: int, action_dim: int,
               rng: np.random.Generator, meta_critic: bool | None = None) -> AgentBundle:
    a = cfg.agent
    use_meta = a.meta_critic if meta_critic is None else meta_critic
    actor = Mlp([state_dim, *a.actor_hidden, 2 * action_dim], rng, final_scale=3e-3)
    critic = Mlp([state_dim + action_dim, *a.critic_hidden, 1], rng, final_scale=3e-3)
    meta = None
    if use_meta:
        meta = Mlp([state_dim + action_dim, *a.meta_hidden, 1], rng)
        meta.weights[-1][:] = 0.0
        meta.biases[-1][:] = 0.0
    return AgentBundle(
        actor=actor, critic=critic, actor_target=actor.copy(), critic_target=critic.copy(),
        meta_critic=meta, gamma=a.gamma, entropy_weight=a.entropy_weight,
        lr_actor=a.lr_actor, lr_critic=a.lr_critic, lr_meta=a.lr_meta, tau=a.tau,
        batch_size=a.batch_size, buffer=ReplayBuffer(a.buffer_capacity, state_dim, action_dim),
        obs_norm=RunningNorm(state_dim), optimizer=a.optimizer,
    )


def _with_params(net: Mlp, params: list[np.ndarray]) -> Mlp:
    clone = net.copy()
    clone.set_params(params)
    return clone


# ---------------------------------------------------------------- losses

def soft_target(critic_target: Mlp, actor_target: Mlp, s2, r, gamma: float, entropy_weight: float,
                noise: np.ndarray, done=None) -> np.ndarray:
    """y = r + gamma * (Q'(s', a') - lambda * log pi'(a'|s')), a' drawn from the target actor.

    Transitions flagged ``done`` do not bootstrap.
    """
    nxt = squashed_gaussian(actor_target, s2, noise)
    q_next = critic_target.forward(np.concatenate([s2, nxt.sampled_action], axis=1))[:, 0]
    keep = 1.0 if done is None else 1.0 - np.asarray(done, dtype=float)
    return r + gamma * keep * (q_next - entropy_weight * nxt.log_prob)


def critic_loss_and_grad(critic: Mlp, critic_target: Mlp, actor_target: Mlp, s, a, s2, r,
                         gamma: float, entropy_weight: float, noise: np.ndarray, done=None):
    """Mean squared soft-TD error and its gradient w.r.t. the critic parameters."""
    y = soft_target(critic_target, actor_target, s2, r, gamma, entropy_weight, noise, done)
    q, cache = critic.forward_cache(np.concatenate([s, a], axis=1))
    diff = q[:, 0] - y
    grads, _ = critic.backward(cache, (2.0 * diff / diff.size)[:, None], input_cols=None)
    return float(np.mean(diff ** 2)), grads


def actor_objective_and_grad(actor: Mlp, critic: Mlp, s: np.ndarray, entropy_weight: float,
                             noise: np.ndarray):
    """J = mean(lambda * log pi(a|s) - Q(s, a)) with a reparameterised; gradient w.r.t. actor."""
    out = squashed_gaussian(actor, s, noise)
    q, qcache = critic.forward_cache(np.concatenate([s, out.sampled_action], axis=1))
    b = s.shape[0]
    j = float(np.mean(entropy_weight * out.log_prob - q[:, 0]))
    _, d_action = critic.backward(qcache, np.full((b, 1), -1.0 / b), input_cols=slice(s.shape[1], None))
    d_out = squashed_gaussian_backward(out, d_action, np.full(b, entropy_weight / b))
    grads, _ = actor.backward(out.cache, d_out, input_cols=None)
    return j, grads


def actor_objective(actor: Mlp, critic: Mlp, s: np.ndarray, entropy_weight: float,
                    noise: np.ndarray) -> float:
    out = squashed_gaussian(actor, s, noise)
    q = critic.forward(np.concatenate([s, out.sampled_action], axis=1))
    return float(np.mean(entropy_weight * out.log_prob - q[:, 0]))


def meta_critic_loss(meta: Mlp, actor: Mlp, s: np.ndarray) -> float:
    """Mean meta-critic output on (s, tanh(mu(s)))."""
    a = deterministic_action(actor, s)
    return float(np.mean(meta.forward(np.concatenate([s, a], axis=1))))


def meta_critic_loss_and_actor_grad(meta: Mlp, actor: Mlp, s: np.ndarray):
    out, cache = actor.forward_cache(s)
    d = out.shape[1] // 2
    a = np.tanh(out[:, :d])
    m, mcache = meta.forward_cache(np.concatenate([s, a], axis=1))
    b = s.shape[0]
    _, dm_in = meta.backward(mcache, np.full((b, 1), 1.0 / b), input_cols=slice(s.shape[1], None))
    d_mean = dm_in * (1.0 - a ** 2)
    grads, _ = actor.backward(cache, np.concatenate([d_mean, np.zeros_like(d_mean)], axis=1), input_cols=None)
    return float(np.mean(m)), grads


def meta_gradient(meta: Mlp, actor_params: list[np.ndarray], actor: Mlp, s_trn: np.ndarray,
                  val_grad: list[np.ndarray], lr_actor: float) -> list[np.ndarray]:
    """d L_meta / d eta for theta_new = theta_old - lr * dL_mc(theta)/dtheta.

    Equals -lr * d/d eta [ val_grad . dL_mc/dtheta ], computed as the eta-gradient
    of the meta-critic's input directional derivative along the actor's
    action tangent.
    """
    net = _with_params(actor, actor_params)
    out, cache = net.forward_cache(s_trn)
    d = out.shape[1] // 2
    a = np.tanh(out[:, :d])
    d_mean = net.param_jvp(cache, val_grad)[:, :d]
    da = (1.0 - a ** 2) * d_mean
    x = np.concatenate([s_trn, a], axis=1)
    _, mcache = meta.forward_cache(x)
    dx = np.concatenate([np.zeros_like(s_trn), da], axis=1)
    _, tangents = meta.input_jvp(mcache, dx)
    b = s_trn.shape[0]
    grads, _ = meta.backward(mcache, np.full((b, 1), 1.0 / b), tangent_acts=tangents, input_cols=None)
    return [-lr_actor * g for g in grads]


# ---------------------------------------------------------------- updates

@dataclass
class ActorStep:
    step_id: int
    theta: list
    theta_old: list
    theta_new: list
    states: np.ndarray
    actor_loss: float
    meta_critic_loss: float


def critic_update(bundle: AgentBundle, batch: Batch, rng: np.random.Generator,
                  noise: np.ndarray | None = None) -> float:
    if len(batch) < 1:
        raise ValueError("critic_update needs a non-empty batch")
    norm = bundle.obs_norm
    s, s2 = norm(batch.s), norm(batch.s2)
    if noise is None:
        noise = rng.standard_normal((len(batch), bundle.action_dim))
    loss, grads = critic_loss_and_grad(bundle.critic, bundle.critic_target, bundle.actor_target,
                                       s, batch.a, s2, batch.r, bundle.gamma,
                                       bundle.entropy_weight, noise, batch.done)
    bundle.critic.set_params(bundle.critic_opt.step(bundle.critic.params(), grads))
    return loss


def actor_update(bundle: AgentBundle, batch: Batch, rng: np.random.Generator,
                 noise: np.ndarray | None = None) -> ActorStep:
    if len(batch) < 1:
        raise ValueError("actor_update needs a non-empty batch")
    s = bundle.obs_norm(batch.s)
    if noise is None:
        noise = rng.standard_normal((len(batch), bundle.action_dim))
    theta = bundle.actor.params()
    j, g_j = actor_objective_and_grad(bundle.actor, bundle.critic, s, bundle.entropy_weight, noise)
    theta_old = add_scaled(theta, g_j, -bundle.lr_actor)
    l_mc = 0.0
    theta_new = theta_old
    total = g_j
    if bundle.meta_critic is not None:
        l_mc, g_m = meta_critic_loss_and_actor_grad(bundle.meta_critic, bundle.actor, s)
        theta_new = add_scaled(theta_old, g_m, -bundle.lr_actor)
        total = [a + b for a, b in zip(g_j, g_m)]
    bundle.actor.set_params(bundle.actor_opt.step(theta, total))
    step_id = next(bundle._step_ids)
    bundle._last_step = step_id
    return ActorStep(step_id, theta, theta_old, theta_new, s, j, l_mc)


def meta_update(bundle: AgentBundle, val_batch: Batch, step: ActorStep, rng: np.random.Generator,
                noise: np.ndarray | None = None) -> float:
    """One step on the meta-critic; returns L_meta = J(val; new) - J(val; old)."""
    if bundle.meta_critic is None:
        return 0.0
    if step.step_id != bundle._last_step:
        raise ValueError("meta_update needs theta_old/theta_new from the latest actor_update")
    s_val = bundle.obs_norm(val_batch.s)
    if noise is None:
        noise = rng.standard_normal((len(val_batch), bundle.action_dim))
    lam = bundle.entropy_weight
    j_old = actor_objective(_with_params(bundle.actor, step.theta_old), bundle.critic, s_val, lam, noise)
    j_new, g_val = actor_objective_and_grad(_with_params(bundle.actor, step.theta_new), bundle.critic,
                                            s_val, lam, noise)
    grads = meta_gradient(bundle.meta_critic, step.theta, bundle.actor, step.states, g_val,
                          bundle.lr_actor)
    meta = bundle.meta_critic
    meta.set_params(bundle.meta_opt.step(meta.params(), grads))
    return j_new - j_old


def gradient_iteration(bundle: AgentBundle, rng: np.random.Generator) -> tuple[float, float, float]:
    trn = bundle.buffer.sample(rng, bundle.batch_size)
    c_loss = critic_update(bundle, trn, rng)
    step = actor_update(bundle, trn, rng)
    val = bundle.buffer.sample(rng, bundle.batch_size)
    m_loss = meta_update(bundle, val, step, rng)
    soft_update(bundle.actor_target, bundle.actor, bundle.tau)
    soft_update(bundle.critic_target, bundle.critic, bundle.tau)
    return c_loss, step.actor_loss, m_loss


# ---------------------------------------------------------------- rollout

def select_action(bundle: AgentBundle | None, state: np.ndarray, rng: np.random.Generator,
                  policy: str = "meta_sac", deterministic: bool = False, action_dim: int | None = None) -> np.ndarray:
    if policy == "random":
        return rng.uniform(-1.0, 1.0, action_dim if bundle is None else bundle.action_dim)
    s = bundle.obs_norm(state)[None, :]
    if deterministic:
        return deterministic_action(bundle.actor, s)[0]
    out = squashed_gaussian(bundle.actor, s, rng.standard_normal((1, bundle.action_dim)))
    return out.sampled_action[0]


def train(bundle: AgentBundle | None, env, episodes: int, rng: np.random.Generator,
          task_rng: np.random.Generator | None = None, policy: str = "meta_sac",
          gradient_steps: int | None = None) -> list[dict]:
    """Run the episode / step / gradient-step loops; one log row per episode.

    ``task_rng`` drives task sampling only, so runs sharing it see identical
    tasks regardless of the policy.
    """
    task_rng = rng if task_rng is None else task_rng
    g_max = env.t_max if gradient_steps is None else gradient_steps
    log = []
    for episode in range(episodes):
        _, state = env.reset(task_rng)
        if bundle is not None:
            bundle.obs_norm.update(state)
        rewards, ees, rates, powers = [], [], [], []
        done = False
        while not done:
            a = select_action(bundle, state, rng, policy, action_dim=env.action_dim)
            nxt, r, done, out = env.step(a)
            if bundle is not None:
                # the horizon cut is a truncation of an infinite-horizon return,
                # not a terminal state, so the last transition still bootstraps
                bundle.buffer.add(state, a, nxt, r, False)
                bundle.obs_norm.update(nxt)
            rewards.append(r)
            ees.append(out.metrics.ee)
            rates.append(out.metrics.sum_rate)
            powers.append(out.metrics.total_power)
            state = nxt
        losses = []
        if bundle is not None and policy != "random":
            for _ in range(g_max):
                if len(bundle.buffer) < bundle.batch_size:
                    break
                losses.append(gradient_iteration(bundle, rng))
        c, act, m = (np.mean(losses, axis=0) if losses else (np.nan, np.nan, np.nan))
        log.append({
            "episode": episode, "reward": float(np.mean(rewards)), "ee": float(np.mean(ees)),
            "rate": float(np.mean(rates)), "power": float(np.mean(powers)),
            "critic_loss": float(c), "actor_loss": float(act), "meta_loss": float(m),
        })
    return log


def evaluate_policy(bundle: AgentBundle | None, env, episodes: int, rng: np.random.Generator,
                    deterministic: bool = True, policy: str = "meta_sac") -> dict:
    ees, rates, powers = [], [], []
    for _ in range(episodes):
        _, state = env.reset(rng)
        done = False
        while not done:
            a = select_action(bundle, state, rng, policy, deterministic, action_dim=env.action_dim)
            state, _, done, out = env.step(a)
            ees.append(out.metrics.ee)
            rates.append(out.metrics.sum_rate)
            powers.append(out.metrics.total_power)
    return {"ee": float(np.mean(ees)), "rate": float(np.mean(rates)), "power": float(np.mean(powers))}

"""Soft Actor-Critic on small numpy MLPs with hand-written backpropagation."""
from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import VehicleParams
from .simulator import Action, Observation

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
CHECKPOINT_VERSION = 1
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


# -- networks ---------------------------------------------------------------

class MlpNet:
    """Fully connected ReLU network with a linear output layer.

    ``sizes = [n_in, h1, ..., n_out]``; a single entry gives the identity map.
    """

    def __init__(self, sizes: list[int], rng: np.random.Generator | None = None):
        if len(sizes) < 1 or any(s < 1 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        self.sizes = [int(s) for s in sizes]
        rng = rng or np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = math.sqrt(6.0 / (n_in + n_out))
            self.params.append(rng.uniform(-bound, bound, (n_in, n_out)))
            self.params.append(np.zeros(n_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> "MlpNet":
        net = MlpNet.__new__(MlpNet)
        net.sizes = list(self.sizes)
        net.params = [p.copy() for p in self.params]
        return net

    def forward(self, x: np.ndarray):
        """Returns (output, cache) for :meth:`backward`."""
        h = np.asarray(x, dtype=float)
        acts = [h]
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, grad_out: np.ndarray):
        """Parameter gradients and the gradient w.r.t. the input for upstream ``grad_out``."""
        grads: list[np.ndarray] = [None] * len(self.params)
        g = grad_out
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                g = g * (acts[i + 1] > 0)
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return grads, g

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def numeric_grads(loss_fn, params: list[np.ndarray], eps: float) -> list[np.ndarray]:
    """Central finite differences of ``loss_fn()`` w.r.t. each entry of ``params`` (in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss_fn()
            flat[i] = old - eps
            down = loss_fn()
            flat[i] = old
            gflat[i] = (up - down) / (2.0 * eps)
        out.append(g)
    return out


def gradient_check(net: MlpNet, eps: float = 1e-6, rng: np.random.Generator | None = None,
                   batch: int = 4) -> float:
    """Max per-tensor relative error between backprop and central differences
    for a random quadratic loss on a random batch."""
    rng = rng or np.random.default_rng(0)
    if not net.params:
        return 0.0
    x = rng.normal(size=(batch, net.sizes[0]))
    w = rng.normal(size=(batch, net.sizes[-1]))

    def loss():
        out, _ = net.forward(x)
        return float(0.5 * np.sum(w * out * out) + np.sum(out))

    out, acts = net.forward(x)
    analytic, _ = net.backward(acts, w * out + 1.0)
    numeric = numeric_grads(loss, net.params, eps)
    return max(_relative_error(a, n) for a, n in zip(analytic, numeric))


# -- observation encoding ----------------------------------------------------

class BeamEncoder:
    """Flat vector: normalised beams, target pose in the ego frame, ego speed and steering."""

    def __init__(self, n_beams: int, max_range: float, vehicle: VehicleParams,
                 pos_scale: float = 10.0):
        self.n_beams = n_beams
        self.max_range = max_range
        self.vehicle = vehicle
        self.pos_scale = pos_scale

    @property
    def dim(self) -> int:
        return self.n_beams + 6

    def __call__(self, obs: Observation) -> np.ndarray:
        arr = obs.as_array()
        if not np.all(np.isfinite(arr)):
            raise ValueError("observation contains non-finite entries")
        out = np.empty(self.dim)
        out[:self.n_beams] = obs.beams / self.max_range
        dx, dy, s, c = obs.target_rel
        out[self.n_beams:self.n_beams + 4] = (np.clip(dx / self.pos_scale, -3, 3),
                                              np.clip(dy / self.pos_scale, -3, 3), s, c)
        out[self.n_beams + 4] = obs.ego[0] / self.vehicle.max_speed
        out[self.n_beams + 5] = obs.ego[1] / self.vehicle.max_steer
        return out


# -- SAC ---------------------------------------------------------------------

@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    buffer_capacity: int = 200_000
    alpha_init: float = 0.2
    target_entropy: float = -2.0
    hidden_width: int = 64
    hidden_layers: int = 2
    warmup_steps: int = 2_000
    updates_per_step: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if not self.lr > 0 or not self.alpha_init > 0:
            raise ValueError("lr and alpha_init must be positive")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("need 1 <= batch_size <= buffer_capacity")
        if self.hidden_width < 1 or self.hidden_layers < 0 or self.warmup_steps < 0:
            raise ValueError("invalid network size or warmup")


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray  # normalised to [-1, 1] per coordinate
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray

    @classmethod
    def from_transitions(cls, ts: list[Transition]) -> "Batch":
        if not ts:
            raise ValueError("empty batch")
        return cls(np.stack([t.obs for t in ts]), np.stack([t.action for t in ts]),
                   np.array([t.reward for t in ts], dtype=float),
                   np.stack([t.next_obs for t in ts]),
                   np.array([float(t.done) for t in ts]))

    def __len__(self):
        return len(self.reward)


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int = 2):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, act_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.ptr = 0

    def add(self, t: Transition) -> None:
        i = self.ptr
        self.obs[i] = t.obs
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.next_obs[i] = t.next_obs
        self.done[i] = float(t.done)
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def __len__(self):
        return self.size

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        idx = rng.integers(0, self.size, n)
        return Batch(self.obs[idx], self.action[idx], self.reward[idx], self.next_obs[idx],
                     self.done[idx])


@dataclass
class LossReport:
    critic_loss: float
    actor_loss: float
    alpha_loss: float
    alpha: float
    mean_q: float
    mean_log_prob: float


def _log1m_tanh2(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2), stable for large |u|."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def _check_finite(name: str, loss: float) -> None:
    # raised before the optimiser step so parameters stay finite
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite {name} loss ({loss})")


class SacAgent:
    """Actor, twin critics with targets, learned temperature and their optimisers."""

    def __init__(self, obs_dim: int, cfg: SacConfig, action_scale=(1.0, 1.0)):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.act_dim = 2
        self.action_scale = np.asarray(action_scale, dtype=float)
        rng = np.random.default_rng([cfg.seed, 0xAC7])
        hidden = [cfg.hidden_width] * cfg.hidden_layers
        self.actor = MlpNet([obs_dim] + hidden + [2 * self.act_dim], rng)
        self.q1 = MlpNet([obs_dim + self.act_dim] + hidden + [1], rng)
        self.q2 = MlpNet([obs_dim + self.act_dim] + hidden + [1], rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = np.array([math.log(cfg.alpha_init)])
        self.actor_opt = Adam(self.actor.params, cfg.lr)
        self.critic_opt = Adam(self.q1.params + self.q2.params, cfg.lr)
        self.alpha_opt = Adam([self.log_alpha], cfg.lr)
        self.rng = np.random.default_rng([cfg.seed, 0x5A3])
        self.n_updates = 0

    @property
    def alpha(self) -> float:
        return float(math.exp(self.log_alpha[0]))

    # -- policy ----------------------------------------------------------
    def _dist(self, obs: np.ndarray):
        out, acts = self.actor.forward(obs)
        mu = out[:, :self.act_dim]
        raw = out[:, self.act_dim:]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        return mu, log_std, raw, acts

    def log_prob_from_u(self, u: np.ndarray, mu: np.ndarray, log_std: np.ndarray) -> np.ndarray:
        z = (u - mu) / np.exp(log_std)
        per = -0.5 * z * z - log_std - _HALF_LOG_2PI - _log1m_tanh2(u) - np.log(self.action_scale)
        return per.sum(axis=1)

    def sample(self, obs: np.ndarray, rng: np.random.Generator | None = None):
        """Batched reparameterised sample: (scaled action, log_prob, normalised action)."""
        rng = rng or self.rng
        obs = np.atleast_2d(obs)
        mu, log_std, _, _ = self._dist(obs)
        eps = rng.standard_normal(mu.shape)
        u = mu + np.exp(log_std) * eps
        a = np.tanh(u)
        return a * self.action_scale, self.log_prob_from_u(u, mu, log_std), a

    def log_prob(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        """Density of already-scaled actions, recomputed from scratch."""
        obs = np.atleast_2d(obs)
        mu, log_std, _, _ = self._dist(obs)
        u = np.arctanh(np.atleast_2d(action) / self.action_scale)
        return self.log_prob_from_u(u, mu, log_std)

    def deterministic(self, obs: np.ndarray) -> np.ndarray:
        mu, _, _, _ = self._dist(np.atleast_2d(obs))
        return np.tanh(mu) * self.action_scale

    # -- losses and gradients -------------------------------------------
    def critic_target(self, batch: Batch, eps: np.ndarray) -> np.ndarray:
        mu, log_std, _, _ = self._dist(batch.next_obs)
        u = mu + np.exp(log_std) * eps
        a = np.tanh(u)
        logp = self.log_prob_from_u(u, mu, log_std)
        x = np.concatenate([batch.next_obs, a], axis=1)
        q_next = np.minimum(self.q1_target(x), self.q2_target(x))[:, 0]
        return batch.reward + self.cfg.gamma * (1.0 - batch.done) * (q_next - self.alpha * logp)

    def critic_loss_and_grads(self, batch: Batch, target: np.ndarray):
        x = np.concatenate([batch.obs, batch.action], axis=1)
        n = len(batch)
        loss = 0.0
        grads = []
        qs = []
        for net in (self.q1, self.q2):
            q, acts = net.forward(x)
            diff = q[:, 0] - target
            loss += 0.5 * float(np.mean(diff * diff))
            g, _ = net.backward(acts, (diff / n)[:, None])
            grads.extend(g)
            qs.append(q[:, 0])
        return loss, grads, float(np.mean(np.minimum(qs[0], qs[1])))

    def actor_loss_and_grads(self, obs: np.ndarray, eps: np.ndarray):
        n = len(obs)
        alpha = self.alpha
        mu, log_std, raw, acts = self._dist(obs)
        std = np.exp(log_std)
        u = mu + std * eps
        t = np.tanh(u)
        logp = self.log_prob_from_u(u, mu, log_std)
        x = np.concatenate([obs, t], axis=1)
        q1, c1 = self.q1.forward(x)
        q2, c2 = self.q2.forward(x)
        use1 = (q1[:, 0] <= q2[:, 0])[:, None]
        qmin = np.where(use1, q1, q2)[:, 0]
        loss = float(np.mean(alpha * logp - qmin))
        # d(-qmin)/d(normalised action), through whichever critic is smaller
        _, gx1 = self.q1.backward(c1, -use1.astype(float) / n)
        _, gx2 = self.q2.backward(c2, -(~use1).astype(float) / n)
        d_a = (gx1 + gx2)[:, self.obs_dim:]
        d_u = d_a * (1.0 - t * t) + (alpha / n) * 2.0 * t
        d_mu = d_u
        d_log_std = d_u * std * eps - alpha / n
        d_raw = d_log_std * ((raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX))
        grads, _ = self.actor.backward(acts, np.concatenate([d_mu, d_raw], axis=1))
        return loss, grads, logp

    def alpha_loss_and_grad(self, logp: np.ndarray):
        term = logp + self.cfg.target_entropy
        loss = float(-self.log_alpha[0] * np.mean(term))
        return loss, np.array([-np.mean(term)])

    # -- one SAC step ------------------------------------------------------
    def update(self, batch: Batch) -> LossReport:
        if len(batch) == 0:
            raise ValueError("empty batch")
        n = len(batch)
        eps_next = self.rng.standard_normal((n, self.act_dim))
        eps_pi = self.rng.standard_normal((n, self.act_dim))

        target = self.critic_target(batch, eps_next)
        c_loss, c_grads, mean_q = self.critic_loss_and_grads(batch, target)
        _check_finite("critic", c_loss)
        self.critic_opt.step(self.q1.params + self.q2.params, c_grads)

        a_loss, a_grads, logp = self.actor_loss_and_grads(batch.obs, eps_pi)
        _check_finite("actor", a_loss)
        self.actor_opt.step(self.actor.params, a_grads)

        al_loss, al_grad = self.alpha_loss_and_grad(logp)
        _check_finite("temperature", al_loss)
        self.alpha_opt.step([self.log_alpha], [al_grad])

        self.polyak()
        self.n_updates += 1
        return LossReport(c_loss, a_loss, al_loss, self.alpha, mean_q, float(np.mean(logp)))

    def polyak(self) -> None:
        tau = self.cfg.tau
        for net, tgt in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            for p, tp in zip(net.params, tgt.params):
                tp *= 1.0 - tau
                tp += tau * p

    # -- checkpoints -----------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays: dict[str, np.ndarray] = {}
        for name in ("actor", "q1", "q2", "q1_target", "q2_target"):
            for i, p in enumerate(getattr(self, name).params):
                arrays[f"{name}.{i}"] = p
        arrays["log_alpha"] = self.log_alpha
        for oname in ("actor_opt", "critic_opt", "alpha_opt"):
            opt = getattr(self, oname)
            arrays[f"{oname}.t"] = np.array([opt.t])
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                arrays[f"{oname}.m{i}"] = m
                arrays[f"{oname}.v{i}"] = v
        return arrays

    def load_state_arrays(self, arrays) -> None:
        for name in ("actor", "q1", "q2", "q1_target", "q2_target"):
            net = getattr(self, name)
            for i in range(len(net.params)):
                arr = arrays[f"{name}.{i}"]
                if arr.shape != net.params[i].shape:
                    raise ValueError(f"checkpoint shape mismatch for {name}.{i}")
                net.params[i][...] = arr
        self.log_alpha[...] = arrays["log_alpha"]
        for oname in ("actor_opt", "critic_opt", "alpha_opt"):
            opt = getattr(self, oname)
            opt.t = int(arrays[f"{oname}.t"][0])
            for i in range(len(opt.m)):
                opt.m[i][...] = arrays[f"{oname}.m{i}"]
                opt.v[i][...] = arrays[f"{oname}.v{i}"]


def save_checkpoint(path, agent: SacAgent, extra_rngs: dict[str, np.random.Generator] | None = None,
                    buffer: ReplayBuffer | None = None, meta: dict | None = None) -> Path:
    """Versioned ``.npz``: parameters, optimiser moments, config, RNG states and optionally
    the replay buffer, so training can resume bit-identically."""
    path = Path(path)
    arrays = dict(agent.state_arrays())
    rngs = {"agent": agent.rng}
    rngs.update(extra_rngs or {})
    header = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": agent.obs_dim,
        "action_scale": agent.action_scale.tolist(),
        "config": asdict(agent.cfg),
        "n_updates": agent.n_updates,
        "rng_states": {k: g.bit_generator.state for k, g in rngs.items()},
        "meta": meta or {},
    }
    if buffer is not None:
        n = buffer.size
        header["buffer"] = {"capacity": buffer.capacity, "size": n, "ptr": buffer.ptr}
        for key in ("obs", "action", "reward", "next_obs", "done"):
            arrays[f"buffer.{key}"] = getattr(buffer, key)[:n]
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    path.write_bytes(_npz_bytes(arrays))
    return path


def _npz_bytes(arrays: dict[str, np.ndarray]) -> bytes:
    """``np.savez`` layout with fixed zip timestamps so equal states give equal bytes."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            member = io.BytesIO()
            np.lib.format.write_array(member, np.ascontiguousarray(arrays[name]),
                                      allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, member.getvalue())
    return buf.getvalue()


@dataclass
class Checkpoint:
    agent: SacAgent
    rng_states: dict = field(default_factory=dict)
    buffer: ReplayBuffer | None = None
    meta: dict = field(default_factory=dict)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {path} not found")
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        cfg = SacConfig(**header["config"])
        agent = SacAgent(header["obs_dim"], cfg, header["action_scale"])
        agent.load_state_arrays(data)
        agent.n_updates = header["n_updates"]
        states = header["rng_states"]
        agent.rng.bit_generator.state = states.pop("agent")
        buffer = None
        if "buffer" in header:
            b = header["buffer"]
            buffer = ReplayBuffer(b["capacity"], agent.obs_dim, agent.act_dim)
            n = b["size"]
            for key in ("obs", "action", "reward", "next_obs", "done"):
                getattr(buffer, key)[:n] = data[f"buffer.{key}"]
            buffer.size, buffer.ptr = n, b["ptr"]
    return Checkpoint(agent, states, buffer, header.get("meta", {}))


def policy_sample(agent: SacAgent, obs: np.ndarray,
                  rng: np.random.Generator | None = None) -> tuple[Action, float]:
    """One stochastic action for a single encoded observation, with its log density."""
    obs = np.asarray(obs, dtype=float)
    if not np.all(np.isfinite(obs)):
        raise ValueError("observation contains non-finite entries")
    a, logp, _ = agent.sample(obs[None, :], rng)
    return Action(float(a[0, 0]), float(a[0, 1])), float(logp[0])


def sac_gradient_check(agent: SacAgent, batch: Batch, eps: float = 1e-6,
                       rng: np.random.Generator | None = None) -> dict[str, float]:
    """Relative errors of the critic, actor and temperature gradients against
    central differences, with the sampling noise held fixed."""
    rng = rng or np.random.default_rng(0)
    n = len(batch)
    eps_next = rng.standard_normal((n, agent.act_dim))
    eps_pi = rng.standard_normal((n, agent.act_dim))
    target = agent.critic_target(batch, eps_next)

    critic_params = agent.q1.params + agent.q2.params
    _, c_grads, _ = agent.critic_loss_and_grads(batch, target)
    c_num = numeric_grads(lambda: agent.critic_loss_and_grads(batch, target)[0], critic_params, eps)

    _, a_grads, logp = agent.actor_loss_and_grads(batch.obs, eps_pi)
    a_num = numeric_grads(lambda: agent.actor_loss_and_grads(batch.obs, eps_pi)[0],
                          agent.actor.params, eps)

    _, al_grad = agent.alpha_loss_and_grad(logp)
    al_num = numeric_grads(lambda: agent.alpha_loss_and_grad(logp)[0], [agent.log_alpha], eps)
    return {
        "critic": max(_relative_error(a, b) for a, b in zip(c_grads, c_num)),
        "actor": max(_relative_error(a, b) for a, b in zip(a_grads, a_num)),
        "alpha": _relative_error(al_grad, al_num[0]),
    }

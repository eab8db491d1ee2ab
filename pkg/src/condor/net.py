"""Dense policy/value networks with six conditioning architectures and exact
reverse-mode gradients, float64 throughout.

Architectures ("z" is the encoded conditioning vector, "o" the observation):
  naive_c / naive_d   tanh MLP on concat(o, z)
  multihead           tanh MLP on o, one linear head per bin, multiplexed by z
  film_c              tanh MLP on o, feature-wise affine (gamma*h+beta) on the
                      first hidden pre-activation, gamma/beta from a generator
                      MLP fed with z
  film_star_c/_d      film plus z concatenated to the raw input

The value network is a plain tanh MLP on concat(o, z), four times the policy
width, and never contains a feature-wise modulation stage.
"""

import io
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

ARCHS = ("naive_c", "naive_d", "multihead", "film_c", "film_star_c", "film_star_d")
FILM_ARCHS = ("film_c", "film_star_c", "film_star_d")
CONCAT_ARCHS = ("naive_c", "naive_d", "film_star_c", "film_star_d")

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0

CHECKPOINT_MAGIC = b"CNDRCKPT"
CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    """Input dimensions do not match the policy spec."""


class CorruptCheckpoint(ValueError):
    """Checkpoint bytes are truncated or malformed."""


class VersionMismatch(ValueError):
    """Checkpoint format version is not supported."""


@dataclass(frozen=True)
class PolicySpec:
    arch: str
    obs_dim: int
    cond_dim: int
    hidden: int = 128
    n_layers: int = 2
    cond_encoding: str = "continuous"
    n_heads: int = 0
    film_generator_hidden: int = 64
    act_dim: int = 4
    value_hidden: int = 0  # 0 means 4x policy width

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}")
        continuous = self.arch.endswith("_c")
        if continuous and (self.cond_encoding != "continuous" or self.cond_dim != 1):
            raise ValueError(f"{self.arch} requires a continuous scalar conditioning input")
        if not continuous and self.cond_encoding != "onehot":
            raise ValueError(f"{self.arch} requires a one-hot conditioning input")
        if self.arch == "multihead":
            if self.n_heads != self.cond_dim or self.n_heads < 2:
                raise ValueError("multihead needs n_heads == cond_dim >= 2")
        if self.cond_encoding == "onehot" and self.cond_dim < 2:
            raise ValueError("onehot encoding needs cond_dim >= 2")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")

    @property
    def input_dim(self) -> int:
        return self.obs_dim + (self.cond_dim if self.arch in CONCAT_ARCHS else 0)

    @property
    def value_width(self) -> int:
        return self.value_hidden if self.value_hidden > 0 else 4 * self.hidden

    @property
    def uses_film(self) -> bool:
        return self.arch in FILM_ARCHS


@dataclass
class ActionDistribution:
    """Diagonal Gaussian with state-independent log-std, clamped to [-5, 1]."""

    mean: np.ndarray
    log_std: np.ndarray

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + np.exp(self.log_std) * rng.standard_normal(self.mean.shape)

    def log_prob(self, actions: np.ndarray) -> np.ndarray:
        z = (actions - self.mean) / np.exp(self.log_std)
        per_dim = -0.5 * z**2 - self.log_std - 0.5 * np.log(2.0 * np.pi)
        return per_dim.sum(axis=-1)

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * np.log(2.0 * np.pi * np.e)))


def clamped_log_std(weights: dict) -> np.ndarray:
    return np.clip(weights["pi.log_std"], LOG_STD_MIN, LOG_STD_MAX)


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return np.ascontiguousarray(gain * q[:n_in, :n_out])


def init_weights(spec: PolicySpec, rng: np.random.Generator) -> dict:
    """Orthogonal-style init; policy head scaled 0.01, generator starts as identity FiLM."""
    w: dict = {}
    d = spec.input_dim
    for i in range(1, spec.n_layers + 1):
        w[f"pi.l{i}.W"] = _orthogonal(rng, d, spec.hidden, np.sqrt(2.0))
        w[f"pi.l{i}.b"] = np.zeros(spec.hidden)
        d = spec.hidden
    if spec.arch == "multihead":
        for k in range(spec.n_heads):
            w[f"pi.head{k}.W"] = _orthogonal(rng, spec.hidden, spec.act_dim, 0.01)
            w[f"pi.head{k}.b"] = np.zeros(spec.act_dim)
    else:
        w["pi.head.W"] = _orthogonal(rng, spec.hidden, spec.act_dim, 0.01)
        w["pi.head.b"] = np.zeros(spec.act_dim)
    if spec.uses_film:
        g = spec.film_generator_hidden
        w["gen.l1.W"] = _orthogonal(rng, spec.cond_dim, g, np.sqrt(2.0))
        w["gen.l1.b"] = np.zeros(g)
        w["gen.l2.W"] = _orthogonal(rng, g, g, np.sqrt(2.0))
        w["gen.l2.b"] = np.zeros(g)
        # zero weights + bias (1, 0): conditioning starts as the identity transform
        w["gen.out.W"] = np.zeros((g, 2 * spec.hidden))
        w["gen.out.b"] = np.concatenate([np.ones(spec.hidden), np.zeros(spec.hidden)])
    w["pi.log_std"] = np.full(spec.act_dim, -0.5)
    dv = spec.obs_dim + spec.cond_dim
    w["vf.l1.W"] = _orthogonal(rng, dv, spec.value_width, np.sqrt(2.0))
    w["vf.l1.b"] = np.zeros(spec.value_width)
    w["vf.l2.W"] = _orthogonal(rng, spec.value_width, spec.value_width, np.sqrt(2.0))
    w["vf.l2.b"] = np.zeros(spec.value_width)
    w["vf.out.W"] = _orthogonal(rng, spec.value_width, 1, 1.0)
    w["vf.out.b"] = np.zeros(1)
    return w


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeMismatch(f"{what} must have {dim} columns, got shape {x.shape}")
    return x, single


def film_layer(h: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Feature-wise affine transform gamma * h + beta."""
    h = np.asarray(h, dtype=np.float64)
    if np.shape(h) != np.shape(gamma) or np.shape(h) != np.shape(beta):
        raise ShapeMismatch("film_layer inputs must share one shape")
    return gamma * h + beta


def _generator_forward(spec: PolicySpec, w: dict, z: np.ndarray) -> tuple:
    g1 = np.tanh(z @ w["gen.l1.W"] + w["gen.l1.b"])
    g2 = np.tanh(g1 @ w["gen.l2.W"] + w["gen.l2.b"])
    out = g2 @ w["gen.out.W"] + w["gen.out.b"]
    gamma, beta = out[:, :spec.hidden], out[:, spec.hidden:]
    return gamma, beta, (z, g1, g2)


def policy_forward_cached(spec: PolicySpec, w: dict, obs: np.ndarray, z: np.ndarray) -> tuple:
    obs, single = _as_batch(obs, spec.obs_dim, "obs")
    z, _ = _as_batch(z, spec.cond_dim, "conditioning")
    if z.shape[0] != obs.shape[0]:
        raise ShapeMismatch("obs and conditioning batch sizes differ")

    x = np.concatenate([obs, z], axis=1) if spec.arch in CONCAT_ARCHS else obs
    cache: dict = {"x": x, "single": single, "hs": []}

    h_pre = x @ w["pi.l1.W"] + w["pi.l1.b"]
    if spec.uses_film:
        gamma, beta, gen_cache = _generator_forward(spec, w, z)
        cache["film"] = (h_pre, gamma, beta, gen_cache)
        h_pre = film_layer(h_pre, gamma, beta)
    h = np.tanh(h_pre)
    cache["hs"].append(h)
    for i in range(2, spec.n_layers + 1):
        h = np.tanh(h @ w[f"pi.l{i}.W"] + w[f"pi.l{i}.b"])
        cache["hs"].append(h)

    if spec.arch == "multihead":
        sel = np.argmax(z, axis=1)
        mean = np.empty((h.shape[0], spec.act_dim))
        for k in range(spec.n_heads):
            rows = sel == k
            if np.any(rows):
                mean[rows] = h[rows] @ w[f"pi.head{k}.W"] + w[f"pi.head{k}.b"]
        cache["sel"] = sel
    else:
        mean = h @ w["pi.head.W"] + w["pi.head.b"]
    return mean, cache


def policy_forward(spec: PolicySpec, w: dict, obs: np.ndarray, z: np.ndarray) -> ActionDistribution:
    mean, cache = policy_forward_cached(spec, w, obs, z)
    if cache["single"]:
        mean = mean[0]
    return ActionDistribution(mean=mean, log_std=clamped_log_std(w))


def policy_backward(spec: PolicySpec, w: dict, cache: dict, d_mean: np.ndarray,
                    d_log_std: np.ndarray | None = None) -> dict:
    """Exact gradients of a scalar loss given d(loss)/d(mean) and optional
    d(loss)/d(clamped log-std); returns a dict keyed like the weight store."""
    grads: dict = {}
    hs = cache["hs"]
    h_last = hs[-1]
    d_mean = np.asarray(d_mean, dtype=np.float64)
    if d_mean.ndim == 1:
        d_mean = d_mean[None, :]

    if spec.arch == "multihead":
        sel = cache["sel"]
        dh = np.zeros_like(h_last)
        for k in range(spec.n_heads):
            rows = sel == k
            grads[f"pi.head{k}.W"] = h_last[rows].T @ d_mean[rows] if np.any(rows) \
                else np.zeros_like(w[f"pi.head{k}.W"])
            grads[f"pi.head{k}.b"] = d_mean[rows].sum(axis=0) if np.any(rows) \
                else np.zeros_like(w[f"pi.head{k}.b"])
            if np.any(rows):
                dh[rows] = d_mean[rows] @ w[f"pi.head{k}.W"].T
    else:
        grads["pi.head.W"] = h_last.T @ d_mean
        grads["pi.head.b"] = d_mean.sum(axis=0)
        dh = d_mean @ w["pi.head.W"].T

    for i in range(spec.n_layers, 1, -1):
        d_pre = dh * (1.0 - hs[i - 1] ** 2)
        grads[f"pi.l{i}.W"] = hs[i - 2].T @ d_pre
        grads[f"pi.l{i}.b"] = d_pre.sum(axis=0)
        dh = d_pre @ w[f"pi.l{i}.W"].T

    d_pre1 = dh * (1.0 - hs[0] ** 2)
    if spec.uses_film:
        h_pre_raw, gamma, beta, (z, g1, g2) = cache["film"]
        d_gamma = d_pre1 * h_pre_raw
        d_beta = d_pre1
        d_pre1 = d_pre1 * gamma
        d_out = np.concatenate([d_gamma, d_beta], axis=1)
        grads["gen.out.W"] = g2.T @ d_out
        grads["gen.out.b"] = d_out.sum(axis=0)
        dg2 = (d_out @ w["gen.out.W"].T) * (1.0 - g2**2)
        grads["gen.l2.W"] = g1.T @ dg2
        grads["gen.l2.b"] = dg2.sum(axis=0)
        dg1 = (dg2 @ w["gen.l2.W"].T) * (1.0 - g1**2)
        grads["gen.l1.W"] = z.T @ dg1
        grads["gen.l1.b"] = dg1.sum(axis=0)
    grads["pi.l1.W"] = cache["x"].T @ d_pre1
    grads["pi.l1.b"] = d_pre1.sum(axis=0)

    if d_log_std is not None:
        inside = (w["pi.log_std"] > LOG_STD_MIN) & (w["pi.log_std"] < LOG_STD_MAX)
        grads["pi.log_std"] = np.asarray(d_log_std, dtype=np.float64) * inside
    return grads


def value_forward_cached(spec: PolicySpec, w: dict, obs: np.ndarray, z: np.ndarray) -> tuple:
    obs, single = _as_batch(obs, spec.obs_dim, "obs")
    z, _ = _as_batch(z, spec.cond_dim, "conditioning")
    x = np.concatenate([obs, z], axis=1)
    h1 = np.tanh(x @ w["vf.l1.W"] + w["vf.l1.b"])
    h2 = np.tanh(h1 @ w["vf.l2.W"] + w["vf.l2.b"])
    v = (h2 @ w["vf.out.W"] + w["vf.out.b"])[:, 0]
    return v, {"x": x, "h1": h1, "h2": h2, "single": single}


def value_forward(spec: PolicySpec, w: dict, obs: np.ndarray, z: np.ndarray):
    v, cache = value_forward_cached(spec, w, obs, z)
    return float(v[0]) if cache["single"] else v


def value_backward(spec: PolicySpec, w: dict, cache: dict, d_v: np.ndarray) -> dict:
    d_v = np.asarray(d_v, dtype=np.float64).reshape(-1, 1)
    grads = {
        "vf.out.W": cache["h2"].T @ d_v,
        "vf.out.b": d_v.sum(axis=0),
    }
    dh2 = (d_v @ w["vf.out.W"].T) * (1.0 - cache["h2"] ** 2)
    grads["vf.l2.W"] = cache["h1"].T @ dh2
    grads["vf.l2.b"] = dh2.sum(axis=0)
    dh1 = (dh2 @ w["vf.l2.W"].T) * (1.0 - cache["h1"] ** 2)
    grads["vf.l1.W"] = cache["x"].T @ dh1
    grads["vf.l1.b"] = dh1.sum(axis=0)
    return grads


def save_checkpoint(spec: PolicySpec, weights: dict, meta: dict) -> bytes:
    """Self-describing container: magic, version, JSON header, little-endian f64 tensors."""
    names = list(weights.keys())
    header = {
        "spec": asdict(spec),
        "meta": meta,
        "tensors": [{"name": n, "shape": list(np.shape(weights[n]))} for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    buf.write(struct.pack("<Q", len(header_bytes)))
    buf.write(header_bytes)
    for n in names:
        buf.write(np.ascontiguousarray(weights[n], dtype="<f8").tobytes())
    return buf.getvalue()


def load_checkpoint(data: bytes) -> tuple[PolicySpec, dict, dict]:
    if len(data) < len(CHECKPOINT_MAGIC) + 12:
        raise CorruptCheckpoint("checkpoint too short")
    if data[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint("bad magic")
    off = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", data, off)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"unsupported checkpoint version {version}")
    off += 4
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    if len(data) < off + hlen:
        raise CorruptCheckpoint("truncated header")
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
        spec = PolicySpec(**header["spec"])
        tensors = header["tensors"]
    except (ValueError, KeyError, TypeError) as e:
        raise CorruptCheckpoint(f"malformed header: {e}") from e
    off += hlen
    weights: dict = {}
    for entry in tensors:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if len(data) < off + nbytes:
            raise CorruptCheckpoint(f"truncated tensor {entry['name']}")
        arr = np.frombuffer(data[off:off + nbytes], dtype="<f8").astype(np.float64)
        weights[entry["name"]] = arr.reshape(shape)
        off += nbytes
    if off != len(data):
        raise CorruptCheckpoint("trailing bytes after tensors")
    return spec, weights, header["meta"]


def save_checkpoint_file(path: str, spec: PolicySpec, weights: dict, meta: dict) -> None:
    with open(path, "wb") as f:
        f.write(save_checkpoint(spec, weights, meta))


def load_checkpoint_file(path: str) -> tuple[PolicySpec, dict, dict]:
    with open(path, "rb") as f:
        return load_checkpoint(f.read())

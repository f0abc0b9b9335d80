"""Prompt-guided multi-task network.

One shared transformer backbone consumes [scene tokens; cls; data tokens].
A byte-level instruction is pushed through a hypernetwork that emits the
affine parameters of a single unified data encoder/decoder pair, so per-task
behavior is induced entirely by the generated parameters plus fixed
pre/post-processors; there are no task-indexed trainable weights (only
per-task batch-norm running statistics).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import adcore as ad
from .adcore import Parameter, Tensor
from .channel import complex_to_interleaved, interleaved_to_complex
from .phytasks import TASKS, ecct_postprocess, noise_prob_to_sign

BN_MOMENTUM = 0.1
BN_EPS = 1e-5
LN_EPS = 1e-5
MLP_RATIO = 4
HYPER_OUT_SCALE = 0.01

# tasks whose preprocessed features go through batch normalization
BN_TASKS = ("ce", "det", "precoding", "loc")


@dataclass
class ModelConfig:
    n_h: int = 4
    n_v: int = 4
    n_sub: int = 8            # subcarriers M
    n_users: int = 2          # K
    l_p_ce: int = 2
    l_p_loc: int = 4
    l_d: int = 2
    code_n: int = 16
    code_m: int = 8
    grid_w: int = 32
    patch: int = 8
    dim: int = 32             # backbone feature dimension D
    depth: int = 2            # backbone blocks L
    heads: int = 4
    scene_depth: int = 2
    hyper_emb: int = 32
    hyper_hidden: tuple = (128,)
    seq_cap: int = 64

    def __post_init__(self):
        if isinstance(self.hyper_hidden, list):
            self.hyper_hidden = tuple(self.hyper_hidden)
        if self.grid_w % self.patch != 0:
            raise ValueError("grid_w must be divisible by patch")
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if 2 * self.code_n - self.code_m > 2 * self.n_t:
            raise ValueError("2n - m must fit in the 2*N_t feature width")
        longest = 1 + self.l_s + max(self.data_tokens(t) for t in TASKS)
        if longest > self.seq_cap:
            raise ValueError(f"sequence length {longest} exceeds seq_cap {self.seq_cap}")

    @property
    def n_t(self) -> int:
        return self.n_h * self.n_v

    @property
    def features(self) -> int:
        return 2 * self.n_t

    @property
    def l_s(self) -> int:
        return (self.grid_w // self.patch) ** 2

    def data_tokens(self, task: str) -> int:
        if task in ("ce", "loc"):
            return self.n_sub
        if task == "det":
            return self.n_users + self.l_d
        if task == "precoding":
            return self.n_users
        if task == "decoding":
            return 2 * self.code_n - self.code_m
        raise ValueError(f"unknown task {task!r}")

    def to_kv(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_kv(text: str) -> "ModelConfig":
        kwargs = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key == "hyper_hidden":
                kwargs[key] = tuple(int(x) for x in raw.split(",") if x)
            else:
                kwargs[key] = int(raw)
        return ModelConfig(**kwargs)


# ---------------------------------------------------------------------------
# task instructions
# ---------------------------------------------------------------------------

def _num(x) -> str:
    return f"{x:g}"


def instruction_text(task: str, cfg: ModelConfig, snr_db=None, ebn0_db=None) -> str:
    if task == "ce":
        return f"Channel estimation, pilot length is {cfg.l_p_ce}, SNR = {_num(snr_db)} dB"
    if task == "det":
        return (f"MIMO detection, transmitting antenna number is {cfg.n_users}, "
                f"data length is {cfg.l_d}, SNR is {_num(snr_db)} dB")
    if task == "precoding":
        return f"Multi-user precoding, user number is {cfg.n_users}, SNR is {_num(snr_db)} dB"
    if task == "decoding":
        return (f"Channel decoding for polar codes with encoded bit length "
                f"n = {cfg.code_n} and information bit length m = {cfg.code_m}")
    if task == "loc":
        return (f"User localization, signal length for localization is {cfg.l_p_loc}, "
                f"SNR is {_num(snr_db)} dB")
    raise ValueError(f"unknown task {task!r}")


def tokenize_instruction(text: str) -> np.ndarray:
    """Byte-level ids (vocabulary 256), reversible."""
    if not text:
        raise ValueError("empty instruction")
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)


def detokenize_instruction(ids) -> str:
    return bytes(np.asarray(ids, dtype=np.uint8).tolist()).decode("utf-8")


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

@dataclass
class TaskBatch:
    """One minibatch of raw samples for a single task."""

    task: str
    graphs: np.ndarray                 # (B, W, W)
    snr_db: float | None = None
    ebn0_db: float | None = None
    y_pilot: np.ndarray | None = None  # (B, L_p, M) complex; ce / loc
    h_true: np.ndarray | None = None   # (B, N_t, M) ce target or (B, N_t, K) precoding
    h: np.ndarray | None = None        # (B, N_t, K) det channel input
    y: np.ndarray | None = None        # (B, N_t, L_d) det received
    x: np.ndarray | None = None        # (B, K, L_d) det symbols
    h_noisy: np.ndarray | None = None  # (B, N_t, K) precoding CSI
    sigma2: float | None = None        # precoding receiver noise
    p_max: float | None = None
    s_tilde: np.ndarray | None = None  # (B, 2n-m)
    s_hat: np.ndarray | None = None    # (B, n)
    z_tilde: np.ndarray | None = None  # (B, n)
    codeword: np.ndarray | None = None # (B, n)
    bits: np.ndarray | None = None     # (B, m)
    pos: np.ndarray | None = None      # (B, 2)

    @property
    def size(self) -> int:
        return self.graphs.shape[0]


@dataclass
class ForwardResult:
    task: str
    x_post: Tensor            # (B, 1+T, 2N_t)
    pred: Tensor              # task-specific extraction used by the loss
    theta: dict               # generated encoder/decoder parameter tensors


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------

class MultiTaskModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Parameter] = {}
        self.bn_stats = {t: {"mean": np.zeros(cfg.features),
                             "var": np.ones(cfg.features)} for t in BN_TASKS}
        self._rng = np.random.default_rng(np.uint64(seed))
        self._build()

    # -- parameters ---------------------------------------------------------

    def _param(self, name: str, shape, init: str, fan_in: int | None = None) -> Tensor:
        if init == "uniform_fanin":
            bound = 1.0 / np.sqrt(fan_in)
            value = self._rng.uniform(-bound, bound, size=shape)
        elif init == "zeros":
            value = np.zeros(shape)
        elif init == "ones":
            value = np.ones(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(value, requires_grad=True)
        self.params[name] = Parameter(name=name, tensor=t, init=init)
        return t

    def _linear_params(self, prefix: str, n_in: int, n_out: int):
        self._param(f"{prefix}.w", (n_in, n_out), "uniform_fanin", fan_in=n_in)
        self._param(f"{prefix}.b", (n_out,), "uniform_fanin", fan_in=n_in)

    def _block_params(self, prefix: str):
        d = self.cfg.dim
        self._param(f"{prefix}.ln1.g", (d,), "ones")
        self._param(f"{prefix}.ln1.b", (d,), "zeros")
        for name in ("wq", "wk", "wv", "wo"):
            self._linear_params(f"{prefix}.attn.{name[1:]}", d, d)
        self._param(f"{prefix}.ln2.g", (d,), "ones")
        self._param(f"{prefix}.ln2.b", (d,), "zeros")
        self._linear_params(f"{prefix}.mlp.fc1", d, MLP_RATIO * d)
        self._linear_params(f"{prefix}.mlp.fc2", MLP_RATIO * d, d)

    def _build(self):
        cfg = self.cfg
        self._param("emb.cls", (1, cfg.dim), "uniform_fanin", fan_in=cfg.dim)
        self._param("emb.pos", (cfg.seq_cap, cfg.dim), "zeros")

        self._linear_params("scene.patch", cfg.patch ** 2, cfg.dim)
        self._param("scene.pos", (cfg.l_s, cfg.dim), "zeros")
        for i in range(cfg.scene_depth):
            self._block_params(f"scene.block{i}")

        self._param("hyper.tok", (256, cfg.hyper_emb), "uniform_fanin",
                    fan_in=cfg.hyper_emb)
        n_in = cfg.hyper_emb
        for i, width in enumerate(cfg.hyper_hidden):
            self._linear_params(f"hyper.fc{i}", n_in, width)
            n_in = width
        total = 2 * cfg.dim * cfg.features + cfg.dim + cfg.features
        self._linear_params("hyper.out", n_in, total)
        self.params["hyper.out.w"].tensor.value *= HYPER_OUT_SCALE
        self.params["hyper.out.b"].tensor.value *= HYPER_OUT_SCALE

        for i in range(cfg.depth):
            self._block_params(f"backbone.block{i}")

    def parameter_groups(self) -> dict:
        groups = {"scene": [], "hyper": [], "backbone": [], "emb": []}
        for name in self.params:
            groups[name.split(".")[0]].append(name)
        return groups

    def zero_grad(self):
        for p in self.params.values():
            p.tensor.zero_grad()

    def state_dict(self) -> dict:
        state = {name: p.tensor.value.copy() for name, p in self.params.items()}
        for task, stats in self.bn_stats.items():
            state[f"bn.{task}.mean"] = stats["mean"].copy()
            state[f"bn.{task}.var"] = stats["var"].copy()
        return state

    def load_state_dict(self, state: dict):
        for name, p in self.params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.tensor.value.shape:
                raise ValueError(f"shape mismatch for {name}")
            p.tensor.value = value.copy()
        for task in self.bn_stats:
            self.bn_stats[task]["mean"] = np.asarray(state[f"bn.{task}.mean"]).copy()
            self.bn_stats[task]["var"] = np.asarray(state[f"bn.{task}.var"]).copy()

    # -- building blocks ----------------------------------------------------

    def _t(self, name: str) -> Tensor:
        return self.params[name].tensor

    def _linear(self, x: Tensor, prefix: str) -> Tensor:
        return ad.add(ad.matmul(x, self._t(f"{prefix}.w")), self._t(f"{prefix}.b"))

    def _layer_norm(self, x: Tensor, prefix: str) -> Tensor:
        normed = ad.layer_norm(x, eps=LN_EPS)
        return ad.add(ad.multiply(normed, self._t(f"{prefix}.g")), self._t(f"{prefix}.b"))

    def _attention(self, x: Tensor, prefix: str) -> Tensor:
        b, s, d = x.shape
        heads = self.cfg.heads
        dh = d // heads

        def split(t):
            return ad.transpose(ad.reshape(t, (b, s, heads, dh)), (0, 2, 1, 3))

        q = split(self._linear(x, f"{prefix}.q"))
        k = split(self._linear(x, f"{prefix}.k"))
        v = split(self._linear(x, f"{prefix}.v"))
        scores = ad.multiply(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                             Tensor(1.0 / np.sqrt(dh)))
        att = ad.softmax(scores)                       # bidirectional, no mask
        ctx = ad.matmul(att, v)
        ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, s, d))
        return self._linear(ctx, f"{prefix}.o")

    def _block(self, x: Tensor, prefix: str) -> Tensor:
        x = ad.add(x, self._attention(self._layer_norm(x, f"{prefix}.ln1"),
                                      f"{prefix}.attn"))
        h = self._layer_norm(x, f"{prefix}.ln2")
        h = self._linear(ad.gelu(self._linear(h, f"{prefix}.mlp.fc1")),
                         f"{prefix}.mlp.fc2")
        return ad.add(x, h)

    # -- components ---------------------------------------------------------

    def hypernet_forward(self, ids: np.ndarray) -> dict:
        """Instruction token ids -> generated encoder/decoder parameters."""
        if len(ids) == 0:
            raise ValueError("empty instruction ids")
        cfg = self.cfg
        emb = ad.embedding_lookup(self._t("hyper.tok"), np.asarray(ids))
        h = ad.mean(emb, axis=0, keepdims=True)        # (1, emb)
        for i in range(len(cfg.hyper_hidden)):
            h = ad.relu(self._linear(h, f"hyper.fc{i}"))
        out = self._linear(h, "hyper.out")             # (1, total)
        d, f = cfg.dim, cfg.features
        ofs = 0
        w_en = ad.reshape(out[0, ofs:ofs + d * f], (d, f)); ofs += d * f
        b_en = out[0, ofs:ofs + d]; ofs += d
        w_de = ad.reshape(out[0, ofs:ofs + f * d], (f, d)); ofs += f * d
        b_de = out[0, ofs:ofs + f]
        return {"w_en": w_en, "b_en": b_en, "w_de": w_de, "b_de": b_de}

    def patchify(self, graphs: np.ndarray) -> np.ndarray:
        """(B, W, W) -> (B, L_s, P^2), row-major patch order."""
        cfg = self.cfg
        b = graphs.shape[0]
        n = cfg.grid_w // cfg.patch
        g = graphs.reshape(b, n, cfg.patch, n, cfg.patch)
        return g.transpose(0, 1, 3, 2, 4).reshape(b, cfg.l_s, cfg.patch ** 2)

    def scene_encode(self, graphs: np.ndarray) -> Tensor:
        patches = Tensor(self.patchify(np.asarray(graphs, dtype=np.float64)))
        x = self._linear(patches, "scene.patch")
        x = ad.add(x, self._t("scene.pos"))
        for i in range(self.cfg.scene_depth):
            x = self._block(x, f"scene.block{i}")
        return x

    def _batch_norm(self, task: str, x: np.ndarray, training: bool) -> np.ndarray:
        """Per-feature normalization over (batch, tokens); per-task stats."""
        stats = self.bn_stats[task]
        if training:
            mean = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            stats["mean"] = (1 - BN_MOMENTUM) * stats["mean"] + BN_MOMENTUM * mean
            stats["var"] = (1 - BN_MOMENTUM) * stats["var"] + BN_MOMENTUM * var
        else:
            mean, var = stats["mean"], stats["var"]
        return (x - mean) / np.sqrt(var + BN_EPS)

    def preprocess(self, batch: TaskBatch, training: bool) -> np.ndarray:
        """Standardize raw task inputs to (B, T, 2N_t) real features."""
        cfg = self.cfg
        f = cfg.features
        task = batch.task
        if task in ("ce", "loc"):
            y = np.transpose(batch.y_pilot, (0, 2, 1))       # (B, M, L_p)
            feats = complex_to_interleaved(y)                # (B, M, 2L_p)
            out = np.zeros((feats.shape[0], feats.shape[1], f))
            out[:, :, : feats.shape[2]] = feats
            return self._batch_norm(task, out, training)
        if task == "det":
            rows_h = complex_to_interleaved(np.transpose(batch.h, (0, 2, 1)))
            rows_y = complex_to_interleaved(np.transpose(batch.y, (0, 2, 1)))
            out = np.concatenate([rows_h, rows_y], axis=1)   # (B, K+L_d, 2N_t)
            return self._batch_norm(task, out, training)
        if task == "precoding":
            out = complex_to_interleaved(np.transpose(batch.h_noisy, (0, 2, 1)))
            return self._batch_norm(task, out, training)
        if task == "decoding":
            t = 2 * cfg.code_n - cfg.code_m
            b = batch.s_tilde.shape[0]
            out = np.zeros((b, t, f))
            idx = np.arange(t)
            out[:, idx, idx] = batch.s_tilde                 # diag(s~), zero-padded
            return out
        raise ValueError(f"unknown task {task!r}")

    def unified_encode(self, x_pre: Tensor, theta: dict) -> Tensor:
        return ad.add(ad.matmul(x_pre, ad.transpose(theta["w_en"], (1, 0))),
                      theta["b_en"])

    def backbone_forward(self, scene_tokens: Tensor, x_emb: Tensor) -> Tensor:
        """[scene; cls; data] + positions, then the transformer blocks."""
        b = scene_tokens.shape[0]
        s_total = scene_tokens.shape[1] + 1 + x_emb.shape[1]
        if s_total > self.cfg.seq_cap:
            raise ValueError(f"sequence length {s_total} exceeds seq_cap")
        cls = ad.add(ad.reshape(self._t("emb.cls"), (1, 1, self.cfg.dim)),
                     Tensor(np.zeros((b, 1, 1))))            # tile over the batch
        seq = ad.concat([scene_tokens, cls, x_emb], axis=1)
        seq = ad.add(seq, self._t("emb.pos")[:s_total])
        for i in range(self.cfg.depth):
            seq = self._block(seq, f"backbone.block{i}")
        return seq

    def unified_decode(self, x_de: Tensor, theta: dict) -> Tensor:
        return ad.add(ad.matmul(x_de, ad.transpose(theta["w_de"], (1, 0))),
                      theta["b_de"])

    def _extract(self, task: str, x_post: Tensor, batch: TaskBatch) -> Tensor:
        cfg = self.cfg
        if task == "ce":
            return x_post[:, 1:, :]                          # (B, M, 2N_t)
        if task == "det":
            return x_post[:, -cfg.l_d:, 0:2 * cfg.n_users]   # (B, L_d, 2K)
        if task == "loc":
            return x_post[:, 0, 0:2]                         # cls token features
        if task == "decoding":
            return x_post[:, 1:cfg.code_n + 1, 0]            # (B, n) logits
        if task == "precoding":
            w = x_post[:, 1:, :]                             # (B, K, 2N_t)
            ss = ad.sum_(ad.multiply(w, w), axis=(1, 2), keepdims=True)
            scale = ad.sqrt(ad.divide(Tensor(float(batch.p_max)), ss))
            return ad.multiply(w, scale)                     # exact power p_max
        raise ValueError(f"unknown task {task!r}")

    def forward(self, batch: TaskBatch, training: bool = False,
                instruction: str | None = None,
                zero_scene: bool = False) -> ForwardResult:
        cfg = self.cfg
        if instruction is None:
            instruction = instruction_text(batch.task, cfg, snr_db=batch.snr_db,
                                           ebn0_db=batch.ebn0_db)
        ids = tokenize_instruction(instruction)
        theta = self.hypernet_forward(ids)

        graphs = np.zeros_like(batch.graphs) if zero_scene else batch.graphs
        scene_tokens = self.scene_encode(graphs)

        x_pre = Tensor(self.preprocess(batch, training))
        x_emb = self.unified_encode(x_pre, theta)
        out = self.backbone_forward(scene_tokens, x_emb)
        x_de = out[:, cfg.l_s:, :]                           # drop the scene prefix
        x_post = self.unified_decode(x_de, theta)
        pred = self._extract(batch.task, x_post, batch)
        return ForwardResult(task=batch.task, x_post=x_post, pred=pred, theta=theta)

    # -- numpy-side decoding for evaluation ----------------------------------

    def decode_output(self, result: ForwardResult, batch: TaskBatch):
        """Task-space outputs (complex matrices, bits, positions) from a
        forward result; pure numpy, no gradients."""
        cfg = self.cfg
        task = result.task
        val = result.pred.value
        if task == "ce":
            return np.transpose(interleaved_to_complex(val), (0, 2, 1))  # (B, N_t, M)
        if task == "det":
            return np.transpose(interleaved_to_complex(val), (0, 2, 1))  # (B, K, L_d)
        if task == "precoding":
            return np.transpose(interleaved_to_complex(val), (0, 2, 1))  # (B, N_t, K)
        if task == "loc":
            return val                                                    # (B, 2)
        if task == "decoding":
            p_hat = 1.0 / (1.0 + np.exp(-val))                            # (B, n)
            z_sign = noise_prob_to_sign(p_hat)
            bits = np.stack([ecct_postprocess(batch.s_hat[i], z_sign[i])
                             for i in range(val.shape[0])])
            return {"p_hat": p_hat, "bits_hat": bits}
        raise ValueError(f"unknown task {task!r}")

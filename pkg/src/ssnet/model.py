"""Masked-autoencoder transformer for port-grid CSI extrapolation.

One token is one port's CSI row (2M real values). The encoder sees only
observed ports; the decoder rebuilds the full grid by scattering encoder
tokens to their port positions, filling masked slots with a learnable
mask token, adding fixed 2D sine-cosine positional encodings, and
running lightweight attention blocks before a linear reconstruction
head. Because token count is whatever the mask produces, one set of
weights serves any number of observed ports.

Encoder blocks stack: MSA -> (residual+LN) -> mixture-of-experts ->
MSA -> (residual+LN) -> FFN -> (residual+LN). The MoE stage routes each
token to the top-K experts by gate score and sums expert outputs
weighted by the raw softmax scores (optionally renormalized over the
selected set); by default it has no residual path, matching the stack it
replaces an FFN in. Decoder blocks are plain MSA + FFN with residual+LN.
"""

from __future__ import annotations

import io
from contextlib import contextmanager
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import PortGrid
from .errors import DataIOError, MetricError
from .numerics.rng import RngStream
from .numerics.tensor import (
    Parameter,
    Tensor,
    add,
    concat_last,
    const,
    dropout,
    gather_gate,
    gather_rows,
    gelu,
    layer_norm,
    matmul,
    mul,
    reshape,
    scatter_rows,
    softmax_rows,
    sub,
    swap_axes,
    tdiv,
    transpose_last2,
    tsum,
    xavier_init,
)

__all__ = [
    "SSNetConfig",
    "SSNetWeights",
    "MaskSpec",
    "make_mask",
    "positional_encoding_2d",
    "embed",
    "msa",
    "moe",
    "encoder_block",
    "encode",
    "decode",
    "forward",
    "forward_batch",
    "masked_loss",
    "masked_loss_batch",
    "record_expert_usage",
    "save_checkpoint",
    "load_checkpoint",
]

LN_EPS = 1e-6


@dataclass(frozen=True)
class SSNetConfig:
    grid: PortGrid
    m_antennas: int
    d_model: int = 64
    d_dec: int = 32
    depth_enc: int = 4
    depth_dec: int = 2
    heads: int = 4
    experts: int = 4
    top_k: int = 2
    dropout: float = 0.1
    moe_residual: bool = False
    renormalize_topk: bool = False
    use_moe: bool = True

    def __post_init__(self):
        if self.d_model % 4 or self.d_dec % 4:
            raise ValueError("d_model and d_dec must be divisible by 4 (2D PE halves)")
        if self.d_model % self.heads or self.d_dec % self.heads:
            raise ValueError("widths must be divisible by the head count")
        if not 1 <= self.top_k <= self.experts:
            raise ValueError("need 1 <= top_k <= experts")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.d_dec > self.d_model:
            raise ValueError("decoder width must not exceed encoder width")
        if self.m_antennas < 1:
            raise ValueError("need at least one BS antenna")

    @property
    def d_hidden(self) -> int:
        return 4 * self.d_model

    @property
    def feature_dim(self) -> int:
        return 2 * self.m_antennas


# ---------------------------------------------------------------------------
# Masking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskSpec:
    """Observed-port index list (ascending) for one extrapolation instance."""

    observed: np.ndarray
    n_ports: int
    mask_ratio: float

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=np.intp)
        object.__setattr__(self, "observed", obs)
        if obs.size < 1:
            raise ValueError("mask leaves no observed ports")
        if obs[0] < 0 or obs[-1] >= self.n_ports or np.any(np.diff(obs) <= 0):
            raise ValueError("observed indices must be ascending in [0, n_ports)")

    @property
    def masked(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_ports), self.observed)

    @property
    def n_observed(self) -> int:
        return self.observed.size


def make_mask(n_ports: int, mask_ratio: float, rng: RngStream) -> MaskSpec:
    """Uniformly sample round(n_ports*(1-mask_ratio)) observed ports."""
    if not 0.0 < mask_ratio < 1.0:
        raise ValueError(f"mask_ratio must be in (0, 1), got {mask_ratio}")
    n_obs = int(round(n_ports * (1.0 - mask_ratio)))
    if n_obs < 1:
        raise ValueError(f"mask_ratio {mask_ratio} leaves no observed ports")
    observed = np.sort(rng.permutation(n_ports)[:n_obs])
    return MaskSpec(observed=observed, n_ports=n_ports, mask_ratio=mask_ratio)


# ---------------------------------------------------------------------------
# Positional encoding
# ---------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _pe_cached(n_x: int, n_y: int, d: int) -> np.ndarray:
    freqs = 10000.0 ** (-2.0 * np.arange(d // 4) / d)
    i = np.repeat(np.arange(n_x), n_y).astype(np.float64)
    j = np.tile(np.arange(n_y), n_x).astype(np.float64)
    pe = np.empty((n_x * n_y, d))

    half = d // 2
    for offset, idx in ((0, i), (half, j)):
        args = idx[:, None] * freqs[None, :]
        pe[:, offset + 0 : offset + half : 2] = np.sin(args)
        pe[:, offset + 1 : offset + half : 2] = np.cos(args)
    pe.setflags(write=False)
    return pe


def positional_encoding_2d(grid: PortGrid, d: int) -> np.ndarray:
    """Fixed (N_S, d) table: row half encodes i, column half encodes j.

    Both halves use the alternating sin/cos ladder with frequencies
    10000^(-2k/d), 0 <= k < d/4.
    """
    if d % 4:
        raise ValueError("positional encoding width must be divisible by 4")
    return _pe_cached(grid.n_x, grid.n_y, d)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


@dataclass
class LnW:
    gain: Parameter
    bias: Parameter


@dataclass
class MsaW:
    wq: list
    wk: list
    wv: list
    wo: Parameter


@dataclass
class FfnW:
    w1: Parameter
    w2: Parameter


@dataclass
class MoeW:
    expert_w1: list
    expert_w2: list
    gate_w: Parameter
    gate_b: Parameter


@dataclass
class EncBlockW:
    msa1: MsaW
    ln1: LnW
    moe: MoeW | None
    moe_sub: FfnW | None  # single FFN standing in for the MoE stage
    msa2: MsaW
    ln2: LnW
    ffn: FfnW
    ln3: LnW


@dataclass
class DecBlockW:
    msa: MsaW
    ln1: LnW
    ffn: FfnW
    ln2: LnW


class SSNetWeights:
    """All learnable tensors, addressable by hierarchical name."""

    def __init__(self, config: SSNetConfig, factory):
        """`factory(name, shape, kind)` -> ndarray; kind in
        {weight, gain, bias, token}."""
        self.config = config
        c = config
        self._params: list[Parameter] = []

        def par(name, shape, kind="weight"):
            p = Parameter(factory(name, shape, kind), name)
            self._params.append(p)
            return p

        def ln(prefix, d):
            return LnW(par(f"{prefix}.gain", (d,), "gain"), par(f"{prefix}.bias", (d,), "bias"))

        def msa_w(prefix, d):
            dk = d // c.heads
            return MsaW(
                wq=[par(f"{prefix}.h{i}.wq", (d, dk)) for i in range(c.heads)],
                wk=[par(f"{prefix}.h{i}.wk", (d, dk)) for i in range(c.heads)],
                wv=[par(f"{prefix}.h{i}.wv", (d, dk)) for i in range(c.heads)],
                wo=par(f"{prefix}.wo", (d, d)),
            )

        def ffn_w(prefix, d, d_hidden):
            return FfnW(par(f"{prefix}.w1", (d, d_hidden)), par(f"{prefix}.w2", (d_hidden, d)))

        self.w_p = par("embed.w_p", (c.feature_dim, c.d_model))
        self.enc_blocks = []
        for b in range(c.depth_enc):
            pre = f"enc{b}"
            msa1 = msa_w(f"{pre}.msa1", c.d_model)
            ln1 = ln(f"{pre}.ln1", c.d_model)
            if c.use_moe:
                moe_w = MoeW(
                    expert_w1=[
                        par(f"{pre}.moe.e{j}.w1", (c.d_model, c.d_hidden))
                        for j in range(c.experts)
                    ],
                    expert_w2=[
                        par(f"{pre}.moe.e{j}.w2", (c.d_hidden, c.d_model))
                        for j in range(c.experts)
                    ],
                    gate_w=par(f"{pre}.moe.gate.w", (c.d_model, c.experts)),
                    gate_b=par(f"{pre}.moe.gate.b", (c.experts,), "bias"),
                )
                moe_sub = None
            else:
                moe_w = None
                moe_sub = ffn_w(f"{pre}.moesub", c.d_model, c.d_hidden)
            self.enc_blocks.append(
                EncBlockW(
                    msa1=msa1,
                    ln1=ln1,
                    moe=moe_w,
                    moe_sub=moe_sub,
                    msa2=msa_w(f"{pre}.msa2", c.d_model),
                    ln2=ln(f"{pre}.ln2", c.d_model),
                    ffn=ffn_w(f"{pre}.ffn", c.d_model, c.d_hidden),
                    ln3=ln(f"{pre}.ln3", c.d_model),
                )
            )
        self.w_d = par("dec.w_d", (c.d_model, c.d_dec))
        self.mask_token = par("dec.mask_token", (c.d_dec,), "token")
        self.dec_blocks = [
            DecBlockW(
                msa=msa_w(f"dec{b}.msa", c.d_dec),
                ln1=ln(f"dec{b}.ln1", c.d_dec),
                ffn=ffn_w(f"dec{b}.ffn", c.d_dec, 4 * c.d_dec),
                ln2=ln(f"dec{b}.ln2", c.d_dec),
            )
            for b in range(c.depth_dec)
        ]
        self.w_r = par("dec.w_r", (c.d_dec, c.feature_dim))

    @classmethod
    def init(cls, config: SSNetConfig, rng: RngStream) -> "SSNetWeights":
        """Fresh weights: Xavier-uniform matrices, unit gains, zero biases,
        small-normal mask token. Each parameter draws from its own derived
        stream, so shapes elsewhere never shift another tensor's values."""

        def factory(name, shape, kind):
            if kind == "weight":
                return xavier_init(shape, rng.derive(name))
            if kind == "gain":
                return np.ones(shape)
            if kind == "bias":
                return np.zeros(shape)
            return 0.02 * rng.derive(name).normal(shape)  # token

        return cls(config, factory)

    def parameters(self) -> list[Parameter]:
        return self._params

    def named(self) -> dict[str, Parameter]:
        return {p.name: p for p in self._params}

    def zero_grad(self) -> None:
        for p in self._params:
            p.zero_grad()

    def n_values(self) -> int:
        return sum(p.data.size for p in self._params)


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


def embed(u_b: np.ndarray, weights: SSNetWeights, mask, cfg: SSNetConfig) -> Tensor:
    """Project observed CSI rows and add their ports' positional codes.

    `mask` is a MaskSpec or an index array; rows of u_b follow it.
    """
    observed = mask.observed if isinstance(mask, MaskSpec) else np.asarray(mask, dtype=np.intp)
    pe = positional_encoding_2d(cfg.grid, cfg.d_model)
    x = matmul(const(u_b), weights.w_p)
    return add(x, const(pe[observed]))


def msa(x: Tensor, unit: MsaW, heads: int) -> Tensor:
    """Multi-head scaled-dot-product self-attention over the token axis.

    Per-head projections are concatenated so all heads run as one tensor
    contraction; gradients still land on the per-head weight matrices.
    """
    d = unit.wo.shape[0]
    dk = d // heads
    lead = x.shape[:-2]
    t = x.shape[-2]
    split = lead + (t, heads, dk)

    def project(ws, scale=None):
        p = matmul(x, concat_last(ws))
        if scale is not None:
            p = mul(p, scale)
        return swap_axes(reshape(p, split), -3, -2)  # (..., heads, t, dk)

    q = project(unit.wq, scale=1.0 / np.sqrt(dk))
    k = project(unit.wk)
    v = project(unit.wv)
    att = softmax_rows(matmul(q, transpose_last2(k)))
    merged = reshape(swap_axes(matmul(att, v), -3, -2), lead + (t, d))
    return matmul(merged, unit.wo)


def _ffn(x: Tensor, w: FfnW) -> Tensor:
    return matmul(gelu(matmul(x, w.w1)), w.w2)


def _topk_select(scores: np.ndarray, k: int) -> np.ndarray:
    """Boolean (N, E) selection of the top-k scores per row.

    Stable argsort on the negated scores makes ties resolve to the lower
    expert index.
    """
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    sel = np.zeros(scores.shape, dtype=bool)
    np.put_along_axis(sel, order, True, axis=1)
    return sel


# Optional routing diagnostics: while a list is installed here, every moe()
# call appends its per-expert token counts (encoder block order). There is
# no balancing loss, so expert collapse shows up only through this log.
_usage_sink: list | None = None


@contextmanager
def record_expert_usage(sink: list):
    global _usage_sink
    _usage_sink = sink
    try:
        yield sink
    finally:
        _usage_sink = None


def moe(x: Tensor, w: MoeW, cfg: SSNetConfig, train: bool = False, rng: RngStream | None = None) -> Tensor:
    """Top-K sparse mixture of GELU experts with softmax gating.

    Aggregation weights are the raw gate scores of the selected experts
    (renormalized over the selection iff cfg.renormalize_topk). Dropout
    applies to the aggregated output only while training; the residual
    path around the stage is off unless cfg.moe_residual.
    """
    lead = x.shape[:-1]
    d = x.shape[-1]
    xt = reshape(x, (-1, d)) if x.ndim != 2 else x
    n_tokens = xt.shape[0]

    pi = softmax_rows(add(matmul(xt, w.gate_w), w.gate_b))
    sel = _topk_select(pi.data, cfg.top_k)
    if _usage_sink is not None:
        _usage_sink.append(sel.sum(axis=0))
    if cfg.renormalize_topk:
        denom = tsum(mul(pi, const(sel.astype(np.float64))), axis=-1, keepdims=True)

    out = None
    for j in range(cfg.experts):
        rows = np.nonzero(sel[:, j])[0]
        if rows.size == 0:
            continue
        xj = gather_rows(xt, rows)
        yj = matmul(gelu(matmul(xj, w.expert_w1[j])), w.expert_w2[j])
        sj = gather_gate(pi, rows, j)
        if cfg.renormalize_topk:
            sj = tdiv(sj, gather_rows(denom, rows))
        contrib = scatter_rows(mul(sj, yj), rows, n_tokens)
        out = contrib if out is None else add(out, contrib)

    out = dropout(out, cfg.dropout, rng, train)
    if x.ndim != 2:
        out = reshape(out, lead + (d,))
    return add(x, out) if cfg.moe_residual else out


def _moe_stage(x: Tensor, bw: EncBlockW, cfg: SSNetConfig, train: bool, rng) -> Tensor:
    if cfg.use_moe:
        return moe(x, bw.moe, cfg, train, rng)
    out = dropout(_ffn(x, bw.moe_sub), cfg.dropout, rng, train)
    return add(x, out) if cfg.moe_residual else out


def encoder_block(x: Tensor, bw: EncBlockW, cfg: SSNetConfig, train: bool = False, rng=None) -> Tensor:
    x = layer_norm(add(x, msa(x, bw.msa1, cfg.heads)), bw.ln1.gain, bw.ln1.bias, LN_EPS)
    x = _moe_stage(x, bw, cfg, train, rng)
    x = layer_norm(add(x, msa(x, bw.msa2, cfg.heads)), bw.ln2.gain, bw.ln2.bias, LN_EPS)
    x = layer_norm(add(x, _ffn(x, bw.ffn)), bw.ln3.gain, bw.ln3.bias, LN_EPS)
    return x


def encode(
    u_b: np.ndarray,
    mask,
    weights: SSNetWeights,
    cfg: SSNetConfig,
    train: bool = False,
    rng: RngStream | None = None,
) -> Tensor:
    x = embed(u_b, weights, mask, cfg)
    for b, bw in enumerate(weights.enc_blocks):
        x = encoder_block(x, bw, cfg, train, rng.derive("enc", b) if rng else None)
    return x


def decoder_block(x: Tensor, bw: DecBlockW, cfg: SSNetConfig) -> Tensor:
    x = layer_norm(add(x, msa(x, bw.msa, cfg.heads)), bw.ln1.gain, bw.ln1.bias, LN_EPS)
    x = layer_norm(add(x, _ffn(x, bw.ffn)), bw.ln2.gain, bw.ln2.bias, LN_EPS)
    return x


def decode(
    x_enc: Tensor,
    mask,
    weights: SSNetWeights,
    cfg: SSNetConfig,
) -> Tensor:
    """Rebuild the full port grid from encoder tokens.

    Projected tokens are scattered to their port rows, every masked row
    receives the learnable mask token, full-grid positional codes are
    added, and the decoder blocks plus reconstruction head map back to
    CSI space.
    """
    n_ports = cfg.grid.n_ports
    observed = mask.observed if isinstance(mask, MaskSpec) else np.asarray(mask, dtype=np.intp)
    y = matmul(x_enc, weights.w_d)

    full = scatter_rows(y, observed, n_ports)
    if observed.ndim == 1:
        indicator = np.ones((n_ports, 1))
        indicator[observed] = 0.0
    else:
        indicator = np.ones((observed.shape[0], n_ports, 1))
        np.put_along_axis(indicator, observed[:, :, None], 0.0, axis=1)
    full = add(full, mul(const(indicator), weights.mask_token))
    full = add(full, const(positional_encoding_2d(cfg.grid, cfg.d_dec)))

    for bw in weights.dec_blocks:
        full = decoder_block(full, bw, cfg)
    return matmul(full, weights.w_r)


def forward(
    g: np.ndarray,
    mask: MaskSpec,
    weights: SSNetWeights,
    cfg: SSNetConfig,
    train: bool = False,
    rng: RngStream | None = None,
) -> Tensor:
    """Full-grid reconstruction from one (N_S, 2M) input.

    Only observed rows of g are ever read, so masked-row contents cannot
    influence the output.
    """
    u_b = np.asarray(g, dtype=np.float64)[mask.observed]
    x_enc = encode(u_b, mask, weights, cfg, train, rng)
    return decode(x_enc, mask, weights, cfg)


def forward_batch(
    g: np.ndarray,
    observed: np.ndarray,
    weights: SSNetWeights,
    cfg: SSNetConfig,
    train: bool = False,
    rng: RngStream | None = None,
) -> Tensor:
    """Batched forward: g is (B, N_S, 2M), observed is (B, n_obs)."""
    u_b = np.take_along_axis(np.asarray(g, dtype=np.float64), observed[:, :, None], axis=1)
    x_enc = encode(u_b, observed, weights, cfg, train, rng)
    return decode(x_enc, observed, weights, cfg)


def masked_loss(pred: Tensor, g_clean: np.ndarray, mask: MaskSpec) -> Tensor:
    """Squared error over masked ports normalized by their clean energy."""
    masked = mask.masked
    if masked.size == 0:
        raise MetricError("mask has no masked ports to score")
    target = np.asarray(g_clean, dtype=np.float64)[masked]
    energy = float(np.sum(target**2))
    if energy <= 0.0:
        raise MetricError("clean target energy over masked ports is zero")
    diff = sub(gather_rows(pred, masked), const(target))
    return mul(tsum(mul(diff, diff)), 1.0 / energy)


def masked_loss_batch(pred: Tensor, g_clean: np.ndarray, masked: np.ndarray) -> Tensor:
    """Batch mean of per-sample normalized masked-port losses.

    `masked` is (B, n_masked); per-sample energies normalize before the
    linear-domain batch average.
    """
    batch = np.arange(masked.shape[0])[:, None]
    target = np.asarray(g_clean, dtype=np.float64)[batch, masked]
    energy = np.sum(target**2, axis=(-1, -2))
    if np.any(energy <= 0.0):
        raise MetricError("clean target energy over masked ports is zero")
    diff = sub(gather_rows(pred, masked), const(target))
    sse = tsum(mul(diff, diff), axis=(-1, -2))
    return mul(tsum(mul(sse, const(1.0 / energy))), 1.0 / masked.shape[0])


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"SSNW"
_CKPT_VERSION = 1
_CFG_KEYS = (
    "nx",
    "ny",
    "wx_m",
    "wy_m",
    "lambda_m",
    "m_antennas",
    "d_model",
    "d_dec",
    "depth_enc",
    "depth_dec",
    "heads",
    "experts",
    "top_k",
    "dropout",
    "moe_residual",
    "renormalize_topk",
    "use_moe",
)


def _config_text(cfg: SSNetConfig) -> str:
    g = cfg.grid
    values = {
        "nx": g.n_x,
        "ny": g.n_y,
        "wx_m": repr(g.w_x),
        "wy_m": repr(g.w_y),
        "lambda_m": repr(g.wavelength),
        "m_antennas": cfg.m_antennas,
        "d_model": cfg.d_model,
        "d_dec": cfg.d_dec,
        "depth_enc": cfg.depth_enc,
        "depth_dec": cfg.depth_dec,
        "heads": cfg.heads,
        "experts": cfg.experts,
        "top_k": cfg.top_k,
        "dropout": repr(cfg.dropout),
        "moe_residual": "true" if cfg.moe_residual else "false",
        "renormalize_topk": "true" if cfg.renormalize_topk else "false",
        "use_moe": "true" if cfg.use_moe else "false",
    }
    return "".join(f"{k}={values[k]}\n" for k in _CFG_KEYS)


def _parse_config_text(text: str, path: str) -> SSNetConfig:
    fields = {}
    for line in text.splitlines():
        if line:
            key, _, value = line.partition("=")
            fields[key] = value
    if set(fields) != set(_CFG_KEYS):
        raise DataIOError(f"{path}: malformed checkpoint config header")
    grid = PortGrid(
        n_x=int(fields["nx"]),
        n_y=int(fields["ny"]),
        w_x=float(fields["wx_m"]),
        w_y=float(fields["wy_m"]),
        wavelength=float(fields["lambda_m"]),
    )
    return SSNetConfig(
        grid=grid,
        m_antennas=int(fields["m_antennas"]),
        d_model=int(fields["d_model"]),
        d_dec=int(fields["d_dec"]),
        depth_enc=int(fields["depth_enc"]),
        depth_dec=int(fields["depth_dec"]),
        heads=int(fields["heads"]),
        experts=int(fields["experts"]),
        top_k=int(fields["top_k"]),
        dropout=float(fields["dropout"]),
        moe_residual=fields["moe_residual"] == "true",
        renormalize_topk=fields["renormalize_topk"] == "true",
        use_moe=fields["use_moe"] == "true",
    )


def _write_block(f, name: str, arr: np.ndarray) -> None:
    name_b = name.encode("utf-8")
    f.write(len(name_b).to_bytes(2, "little"))
    f.write(name_b)
    f.write(arr.ndim.to_bytes(1, "little"))
    for ext in arr.shape:
        f.write(int(ext).to_bytes(4, "little"))
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_checkpoint(path: str, weights: SSNetWeights, include_optimizer: bool = True) -> None:
    header = _config_text(weights.config).encode("utf-8")
    blocks: list[tuple[str, np.ndarray]] = []
    for p in weights.parameters():
        blocks.append((p.name, p.data))
    if include_optimizer:
        for p in weights.parameters():
            blocks.append((f"adam.m.{p.name}", p.m))
            blocks.append((f"adam.v.{p.name}", p.v))
            blocks.append((f"adam.step.{p.name}", np.array([p.step], dtype=np.float64)))
    try:
        with open(path, "wb") as f:
            f.write(_CKPT_MAGIC)
            f.write(_CKPT_VERSION.to_bytes(2, "little"))
            f.write(len(header).to_bytes(4, "little"))
            f.write(header)
            f.write(len(blocks).to_bytes(4, "little"))
            for name, arr in blocks:
                _write_block(f, name, arr)
    except OSError as e:
        raise DataIOError(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path: str) -> tuple[SSNetConfig, SSNetWeights]:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise DataIOError(f"cannot read checkpoint {path}: {e}") from e
    buf = io.BytesIO(raw)
    if buf.read(4) != _CKPT_MAGIC:
        raise DataIOError(f"{path}: not a checkpoint file (bad magic)")
    version = int.from_bytes(buf.read(2), "little")
    if version != _CKPT_VERSION:
        raise DataIOError(f"{path}: unsupported checkpoint version {version}")
    header_len = int.from_bytes(buf.read(4), "little")
    cfg = _parse_config_text(buf.read(header_len).decode("utf-8"), path)
    n_blocks = int.from_bytes(buf.read(4), "little")
    blocks: dict[str, np.ndarray] = {}
    for _ in range(n_blocks):
        name_len = int.from_bytes(buf.read(2), "little")
        name = buf.read(name_len).decode("utf-8")
        ndim = int.from_bytes(buf.read(1), "little")
        shape = tuple(int.from_bytes(buf.read(4), "little") for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(buf.read(count * 8), dtype="<f8").reshape(shape)
        blocks[name] = data

    def factory(name, shape, kind):
        if name not in blocks:
            raise DataIOError(f"{path}: checkpoint is missing parameter {name!r}")
        arr = blocks[name]
        if arr.shape != tuple(shape):
            raise DataIOError(f"{path}: parameter {name!r} has shape {arr.shape}, expected {shape}")
        return arr.copy()

    weights = SSNetWeights(cfg, factory)
    for p in weights.parameters():
        if f"adam.m.{p.name}" in blocks:
            p.m = blocks[f"adam.m.{p.name}"].copy()
            p.v = blocks[f"adam.v.{p.name}"].copy()
            p.step = int(blocks[f"adam.step.{p.name}"][0])
    return cfg, weights

"""Run configuration: an INI-style document driving every CLI command.

Sections and keys map one-to-one onto the geometry, channel, model,
training and evaluation knobs. Unknown sections or keys are rejected so
typos fail loudly. Three built-in presets exist: "tiny" (4x4 grid used
by the gradient checker), "small" (8x8 desk-scale training target) and
"paper" (the full 16x32/512-port layout with the published training
settings; heavy, ships unguarded by tests).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .channel import CORRELATION_MODELS, PortGrid
from .errors import ConfigError
from .model import SSNetConfig
from .training import TrainPlan

__all__ = ["RunConfig", "PRESETS", "resolve_config"]

_SCHEMA = {
    "grid": ("nx", "ny", "wx_m", "wy_m", "lambda_m"),
    "channel": ("model", "m_antennas", "delta2", "count", "seed"),
    "model": (
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
    ),
    "train": (
        "split",
        "epochs",
        "batch_size",
        "base_lr",
        "warmup_epochs",
        "beta1",
        "beta2",
        "weight_decay",
        "mask_ratio",
        "seed",
        "train_snr_db",
    ),
    "eval": ("observed_pct", "snr_db", "seed"),
}


def _parse_bool(s: str, key: str) -> bool:
    if s in ("true", "false"):
        return s == "true"
    raise ConfigError(f"{key} must be 'true' or 'false', got {s!r}")


def _parse_snr(s: str) -> float | None:
    return None if s == "none" else float(s)


@dataclass
class RunConfig:
    grid: PortGrid
    channel_model: str
    m_antennas: int
    delta2: float
    count: int
    data_seed: int
    d_model: int
    d_dec: int
    depth_enc: int
    depth_dec: int
    heads: int
    experts: int
    top_k: int
    dropout: float
    moe_residual: bool
    renormalize_topk: bool
    use_moe: bool
    split: float
    epochs: int
    batch_size: int
    base_lr: float
    warmup_epochs: int
    beta1: float
    beta2: float
    weight_decay: float
    mask_ratio: float
    train_seed: int
    train_snr_db: float | None
    eval_observed_pct: tuple
    eval_snr_db: tuple
    eval_seed: int

    def net_config(self) -> SSNetConfig:
        return SSNetConfig(
            grid=self.grid,
            m_antennas=self.m_antennas,
            d_model=self.d_model,
            d_dec=self.d_dec,
            depth_enc=self.depth_enc,
            depth_dec=self.depth_dec,
            heads=self.heads,
            experts=self.experts,
            top_k=self.top_k,
            dropout=self.dropout,
            moe_residual=self.moe_residual,
            renormalize_topk=self.renormalize_topk,
            use_moe=self.use_moe,
        )

    def train_plan(self, dataset_path: str = "", out_dir: str = "") -> TrainPlan:
        return TrainPlan(
            config=self.net_config(),
            dataset_path=dataset_path,
            split=self.split,
            epochs=self.epochs,
            batch_size=self.batch_size,
            base_lr=self.base_lr,
            warmup_epochs=self.warmup_epochs,
            beta1=self.beta1,
            beta2=self.beta2,
            weight_decay=self.weight_decay,
            mask_ratio=self.mask_ratio,
            seed=self.train_seed,
            out_dir=out_dir,
            train_snr_db=self.train_snr_db,
        )

    def to_text(self) -> str:
        g = self.grid
        snr_items = ",".join("none" if s is None else f"{s:g}" for s in self.eval_snr_db)
        pct_items = ",".join(f"{p:g}" for p in self.eval_observed_pct)
        lines = [
            "[grid]",
            f"nx = {g.n_x}",
            f"ny = {g.n_y}",
            f"wx_m = {g.w_x!r}",
            f"wy_m = {g.w_y!r}",
            f"lambda_m = {g.wavelength!r}",
            "",
            "[channel]",
            f"model = {self.channel_model}",
            f"m_antennas = {self.m_antennas}",
            f"delta2 = {self.delta2!r}",
            f"count = {self.count}",
            f"seed = {self.data_seed}",
            "",
            "[model]",
            f"d_model = {self.d_model}",
            f"d_dec = {self.d_dec}",
            f"depth_enc = {self.depth_enc}",
            f"depth_dec = {self.depth_dec}",
            f"heads = {self.heads}",
            f"experts = {self.experts}",
            f"top_k = {self.top_k}",
            f"dropout = {self.dropout!r}",
            f"moe_residual = {'true' if self.moe_residual else 'false'}",
            f"renormalize_topk = {'true' if self.renormalize_topk else 'false'}",
            f"use_moe = {'true' if self.use_moe else 'false'}",
            "",
            "[train]",
            f"split = {self.split!r}",
            f"epochs = {self.epochs}",
            f"batch_size = {self.batch_size}",
            f"base_lr = {self.base_lr!r}",
            f"warmup_epochs = {self.warmup_epochs}",
            f"beta1 = {self.beta1!r}",
            f"beta2 = {self.beta2!r}",
            f"weight_decay = {self.weight_decay!r}",
            f"mask_ratio = {self.mask_ratio!r}",
            f"seed = {self.train_seed}",
            f"train_snr_db = {'none' if self.train_snr_db is None else repr(self.train_snr_db)}",
            "",
            "[eval]",
            f"observed_pct = {pct_items}",
            f"snr_db = {snr_items}",
            f"seed = {self.eval_seed}",
            "",
        ]
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"cannot parse config: {e}") from e
        sections = set(parser.sections())
        if sections != set(_SCHEMA):
            raise ConfigError(
                f"config sections must be exactly {sorted(_SCHEMA)}, got {sorted(sections)}"
            )
        for sec, keys in _SCHEMA.items():
            unknown = set(parser[sec]) - set(keys)
            missing = set(keys) - set(parser[sec])
            if unknown or missing:
                raise ConfigError(
                    f"[{sec}] keys mismatch (unknown={sorted(unknown)}, missing={sorted(missing)})"
                )
        try:
            g = parser["grid"]
            grid = PortGrid(
                n_x=int(g["nx"]),
                n_y=int(g["ny"]),
                w_x=float(g["wx_m"]),
                w_y=float(g["wy_m"]),
                wavelength=float(g["lambda_m"]),
            )
            ch = parser["channel"]
            if ch["model"] not in CORRELATION_MODELS:
                raise ConfigError(f"channel model must be one of {CORRELATION_MODELS}")
            m = parser["model"]
            t = parser["train"]
            e = parser["eval"]
            return cls(
                grid=grid,
                channel_model=ch["model"],
                m_antennas=int(ch["m_antennas"]),
                delta2=float(ch["delta2"]),
                count=int(ch["count"]),
                data_seed=int(ch["seed"]),
                d_model=int(m["d_model"]),
                d_dec=int(m["d_dec"]),
                depth_enc=int(m["depth_enc"]),
                depth_dec=int(m["depth_dec"]),
                heads=int(m["heads"]),
                experts=int(m["experts"]),
                top_k=int(m["top_k"]),
                dropout=float(m["dropout"]),
                moe_residual=_parse_bool(m["moe_residual"], "moe_residual"),
                renormalize_topk=_parse_bool(m["renormalize_topk"], "renormalize_topk"),
                use_moe=_parse_bool(m["use_moe"], "use_moe"),
                split=float(t["split"]),
                epochs=int(t["epochs"]),
                batch_size=int(t["batch_size"]),
                base_lr=float(t["base_lr"]),
                warmup_epochs=int(t["warmup_epochs"]),
                beta1=float(t["beta1"]),
                beta2=float(t["beta2"]),
                weight_decay=float(t["weight_decay"]),
                mask_ratio=float(t["mask_ratio"]),
                train_seed=int(t["seed"]),
                train_snr_db=_parse_snr(t["train_snr_db"]),
                eval_observed_pct=tuple(float(x) for x in e["observed_pct"].split(",")),
                eval_snr_db=tuple(_parse_snr(x.strip()) for x in e["snr_db"].split(",")),
                eval_seed=int(e["seed"]),
            )
        except (ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad config value: {exc}") from exc

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_text(f.read())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e


_COMMON_TRAIN = dict(
    split=0.8,
    batch_size=64,
    warmup_epochs=40,
    beta1=0.9,
    beta2=0.98,
    weight_decay=0.05,
    mask_ratio=0.75,
    train_seed=7,
    train_snr_db=None,
    eval_seed=99,
)


def _preset_tiny() -> RunConfig:
    """Smallest full stack: used by the gradient checker and fast tests."""
    return RunConfig(
        grid=PortGrid(4, 4, 0.03, 0.03, 0.0857),
        channel_model="clarke",
        m_antennas=2,
        delta2=1.0,
        count=2000,
        data_seed=11,
        d_model=16,
        d_dec=8,
        depth_enc=1,
        depth_dec=1,
        heads=2,
        experts=2,
        top_k=1,
        dropout=0.0,
        moe_residual=False,
        renormalize_topk=False,
        use_moe=True,
        epochs=200,
        base_lr=2e-3,
        eval_observed_pct=(25.0,),
        eval_snr_db=(None,),
        **_COMMON_TRAIN,
    )


def _preset_small() -> RunConfig:
    """Desk-scale 8x8 grid that trains to useful accuracy in minutes."""
    return RunConfig(
        grid=PortGrid(8, 8, 0.075, 0.075, 0.0857),
        channel_model="clarke",
        m_antennas=4,
        delta2=1.0,
        count=2000,
        data_seed=11,
        d_model=32,
        d_dec=16,
        depth_enc=2,
        depth_dec=1,
        heads=4,
        experts=4,
        top_k=2,
        dropout=0.1,
        moe_residual=False,
        renormalize_topk=False,
        use_moe=True,
        epochs=200,
        base_lr=2e-3,
        eval_observed_pct=(5.0, 10.0, 15.0, 20.0, 25.0, 50.0),
        eval_snr_db=(None, 0.0, 10.0, 20.0),
        **_COMMON_TRAIN,
    )


def _preset_paper() -> RunConfig:
    """Published-scale layout: 16x32 ports on 2x4 cm, 20k samples.

    Heavy on CPU; shipped for completeness, not exercised by the test
    suite.
    """
    cfg = RunConfig(
        grid=PortGrid(16, 32, 0.02, 0.04, 0.0857),
        channel_model="clarke",
        m_antennas=8,
        delta2=1.0,
        count=20000,
        data_seed=11,
        d_model=64,
        d_dec=32,
        depth_enc=4,
        depth_dec=2,
        heads=4,
        experts=4,
        top_k=2,
        dropout=0.1,
        moe_residual=False,
        renormalize_topk=False,
        use_moe=True,
        epochs=400,
        base_lr=1.5e-4,
        eval_observed_pct=(5.0, 10.0, 15.0, 20.0, 25.0, 50.0),
        eval_snr_db=(0.0, 10.0, 20.0),
        **_COMMON_TRAIN,
    )
    cfg.mask_ratio = 0.9
    return cfg


PRESETS = {
    "tiny": _preset_tiny,
    "small": _preset_small,
    "paper": _preset_paper,
}


def resolve_config(name_or_path: str) -> RunConfig:
    """Accept a preset name or a config file path."""
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]()
    if os.path.exists(name_or_path):
        return RunConfig.from_file(name_or_path)
    raise ConfigError(
        f"{name_or_path!r} is neither a preset ({sorted(PRESETS)}) nor a config file"
    )

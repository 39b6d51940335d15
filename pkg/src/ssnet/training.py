"""Deterministic training and evaluation harness.

Training draws a fresh random mask for every sample every epoch (streams
keyed by epoch and sample index), steps AdamW per batch under the
warmup+cosine schedule, logs one loss-curve row per epoch, and keeps the
best-by-held-out checkpoint alongside the final one. Identical plans
reproduce identical CSV bytes and checkpoint bytes.

Evaluation sweeps (observed-percentage, SNR) pairs with masks and noise
drawn from a dedicated eval seed, so every model variant - learned or
oracle - sees exactly the same test conditions. Per-sample NMSE values
are averaged in the linear domain before conversion to dB.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .baseline import (
    MaskPartition,
    analytic_lmmse_nmse,
    lmmse_extrapolate,
    nearest_neighbor_extrapolate,
)
from .channel import (
    ChannelSample,
    Dataset,
    add_awgn,
    correlation_matrix,
    nmse,
    read_dataset,
)
from .errors import ConfigError, NumericalError
from .model import (
    SSNetConfig,
    SSNetWeights,
    forward_batch,
    load_checkpoint,
    make_mask,
    masked_loss_batch,
    record_expert_usage,
    save_checkpoint,
)
from .numerics import RngStream, adamw_step, lr_schedule

__all__ = [
    "TrainPlan",
    "TrainResult",
    "MetricsRow",
    "split_dataset",
    "subset_dataset",
    "train",
    "evaluate",
    "evaluate_oracle",
    "analytic_floor_table",
    "ablate",
    "zero_shot_eval",
    "write_metrics_csv",
    "METRICS_CSV_HEADER",
]


@dataclass
class TrainPlan:
    config: SSNetConfig
    dataset_path: str = ""
    split: float = 0.8
    epochs: int = 200
    batch_size: int = 64
    base_lr: float = 1.5e-4
    warmup_epochs: int = 40
    beta1: float = 0.9
    beta2: float = 0.98
    weight_decay: float = 0.05
    mask_ratio: float = 0.75
    seed: int = 0
    out_dir: str = ""
    train_snr_db: float | None = None  # None trains on noise-free inputs
    resume_from: str = ""  # checkpoint to continue from (optimizer state included)

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split must be in (0, 1), got {self.split}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.epochs and self.warmup_epochs >= self.epochs:
            raise ConfigError("warmup_epochs must be below epochs")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


@dataclass
class TrainResult:
    weights: SSNetWeights
    loss_rows: list  # (epoch, lr, train_loss, holdout_linear, holdout_db)
    lr_trace: list  # lr used at every optimizer step
    best_path: str
    final_path: str
    best_holdout_linear: float
    train_seconds: float = 0.0


@dataclass
class MetricsRow:
    model: str
    grid: str
    snr_db: float | None
    observed_pct: float
    nmse_linear: float
    nmse_db: float
    samples: int
    ms_per_sample: float


METRICS_CSV_HEADER = "model,grid,snr_db,observed_pct,nmse_linear,nmse_db,samples,ms_per_sample"


def _fmt_snr(snr_db: float | None) -> str:
    return "none" if snr_db is None else f"{snr_db:g}"


def metrics_row_to_csv(r: MetricsRow) -> str:
    return ",".join(
        [
            r.model,
            r.grid,
            _fmt_snr(r.snr_db),
            f"{r.observed_pct:g}",
            repr(r.nmse_linear),
            "-inf" if math.isinf(r.nmse_db) else repr(r.nmse_db),
            str(r.samples),
            f"{r.ms_per_sample:.4f}",
        ]
    )


def write_metrics_csv(path: str, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(METRICS_CSV_HEADER + "\n")
        for r in rows:
            f.write(metrics_row_to_csv(r) + "\n")


def split_dataset(dataset: Dataset, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled train/test index partition."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    n = dataset.header.count
    n_train = int(round(n * fraction))
    if n_train == 0 or n_train == n:
        raise ConfigError(f"split {fraction} leaves an empty side for {n} samples")
    perm = RngStream(seed, "split").permutation(n)
    return perm[:n_train], perm[n_train:]


def subset_dataset(dataset: Dataset, indices: np.ndarray) -> Dataset:
    """In-memory view of selected samples with a corrected header count."""
    header = dataset.header.__class__(**{**dataset.header.__dict__, "count": len(indices)})
    return Dataset(header=header, samples=dataset.samples[indices])


def _decay_split(weights: SSNetWeights):
    # standard AdamW practice: decay matrices only, not gains/biases/tokens
    params = weights.parameters()
    return (
        [p for p in params if p.data.ndim == 2],
        [p for p in params if p.data.ndim != 2],
    )


def _holdout_nmse(
    weights: SSNetWeights,
    cfg: SSNetConfig,
    data: np.ndarray,
    masks: list,
    batch_size: int,
) -> float:
    values = []
    for b0 in range(0, len(data), batch_size):
        chunk = data[b0 : b0 + batch_size]
        obs = np.stack([m.observed for m in masks[b0 : b0 + len(chunk)]])
        pred = forward_batch(chunk, obs, weights, cfg, train=False).data
        for i in range(len(chunk)):
            values.append(nmse(pred[i], chunk[i], masks[b0 + i].masked)[0])
    return float(np.mean(values))


def train(plan: TrainPlan, dataset: Dataset | None = None) -> TrainResult:
    """Run the plan end to end; returns weights plus the loss curve.

    Writes `loss_curve.csv`, `checkpoint_best.ssnw` and
    `checkpoint_final.ssnw` into plan.out_dir when it is set.
    """
    if dataset is None:
        dataset = read_dataset(plan.dataset_path)
    cfg = plan.config
    n_ports = cfg.grid.n_ports

    data = np.asarray(dataset.samples, dtype=np.float64)
    train_idx, test_idx = split_dataset(dataset, plan.split, plan.seed)
    train_data, test_data = data[train_idx], data[test_idx]

    root = RngStream(plan.seed, "train")
    if plan.resume_from:
        loaded_cfg, weights = load_checkpoint(plan.resume_from)
        if loaded_cfg != cfg:
            raise ConfigError(
                f"checkpoint {plan.resume_from} was built for a different model config"
            )
    else:
        weights = SSNetWeights.init(cfg, root.derive("init"))
    decay_params, nodecay_params = _decay_split(weights)
    all_params = weights.parameters()

    n_train = len(train_data)
    batch = plan.batch_size
    steps_per_epoch = (n_train + batch - 1) // batch
    total_steps = max(plan.epochs * steps_per_epoch, 1)
    warmup_steps = plan.warmup_epochs * steps_per_epoch

    # fixed per-position held-out masks so the curve is comparable across epochs
    eval_mask_root = root.derive("holdout-mask")
    holdout_masks = [
        make_mask(n_ports, plan.mask_ratio, eval_mask_root.derive(i))
        for i in range(len(test_data))
    ]

    loss_rows: list = []
    lr_trace: list = []
    best_holdout = math.inf
    best_epoch = -1
    if plan.out_dir:
        os.makedirs(plan.out_dir, exist_ok=True)
        best_path = os.path.join(plan.out_dir, "checkpoint_best.ssnw")
        final_path = os.path.join(plan.out_dir, "checkpoint_final.ssnw")
    else:
        best_path = final_path = ""

    usage_rows: list = []
    t_start = time.perf_counter()
    gstep = 0
    for epoch in range(plan.epochs):
        order = root.derive("shuffle", epoch).permutation(n_train)
        epoch_loss = 0.0
        lr = 0.0
        for nb, b0 in enumerate(range(0, n_train, batch)):
            bidx = order[b0 : b0 + batch]
            gb = train_data[bidx]
            masks = [
                make_mask(n_ports, plan.mask_ratio, root.derive("mask", epoch, int(i)))
                for i in bidx
            ]
            obs = np.stack([m.observed for m in masks])
            masked = np.stack([m.masked for m in masks])
            if plan.train_snr_db is not None:
                noisy = np.stack(
                    [
                        add_awgn(
                            ChannelSample(gb[i], cfg.grid, ""),
                            plan.train_snr_db,
                            root.derive("noise", epoch, int(bidx[i])),
                        ).data
                        for i in range(len(gb))
                    ]
                )
            else:
                noisy = gb

            lr = lr_schedule(gstep, total_steps, warmup_steps, plan.base_lr)
            lr_trace.append(lr)
            weights.zero_grad()
            if nb == 0 and cfg.use_moe:
                # routing histogram on the epoch's first batch: the only
                # visibility into expert collapse (no balancing loss exists)
                with record_expert_usage([]) as counts:
                    pred = forward_batch(
                        noisy, obs, weights, cfg, train=True, rng=root.derive("drop", epoch, nb)
                    )
                usage_rows.extend(
                    (epoch, block, j, int(c))
                    for block, per_expert in enumerate(counts)
                    for j, c in enumerate(per_expert)
                )
            else:
                pred = forward_batch(
                    noisy, obs, weights, cfg, train=True, rng=root.derive("drop", epoch, nb)
                )
            loss = masked_loss_batch(pred, gb, masked)
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {nb}")
            loss.backward()
            for p in all_params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            adamw_step(decay_params, lr, plan.beta1, plan.beta2, 1e-8, plan.weight_decay)
            adamw_step(nodecay_params, lr, plan.beta1, plan.beta2, 1e-8, 0.0)
            epoch_loss += loss_value
            gstep += 1

        holdout_linear = _holdout_nmse(weights, cfg, test_data, holdout_masks, batch)
        holdout_db = 10.0 * math.log10(holdout_linear) if holdout_linear > 0 else float("-inf")
        loss_rows.append((epoch, lr, epoch_loss / steps_per_epoch, holdout_linear, holdout_db))
        if holdout_linear < best_holdout:
            best_holdout = holdout_linear
            best_epoch = epoch
            if best_path:
                save_checkpoint(best_path, weights)

    if plan.epochs == 0:
        best_holdout = _holdout_nmse(weights, cfg, test_data, holdout_masks, batch)
    if final_path:
        save_checkpoint(final_path, weights)
        if best_epoch < 0 and best_path:
            save_checkpoint(best_path, weights)
    if plan.out_dir:
        _write_loss_csv(os.path.join(plan.out_dir, "loss_curve.csv"), loss_rows)
        if usage_rows:
            with open(os.path.join(plan.out_dir, "expert_usage.csv"), "w", encoding="utf-8") as f:
                f.write("epoch,encoder_block,expert,tokens\n")
                for row in usage_rows:
                    f.write(",".join(str(v) for v in row) + "\n")

    return TrainResult(
        weights=weights,
        loss_rows=loss_rows,
        lr_trace=lr_trace,
        best_path=best_path,
        final_path=final_path,
        best_holdout_linear=best_holdout,
        train_seconds=time.perf_counter() - t_start,
    )


def _write_loss_csv(path: str, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch,lr,train_loss,holdout_nmse_linear,holdout_nmse_db\n")
        for epoch, lr, tl, hl, hdb in rows:
            hdb_s = "-inf" if math.isinf(hdb) else repr(hdb)
            f.write(f"{epoch},{repr(lr)},{repr(tl)},{repr(hl)},{hdb_s}\n")


# ---------------------------------------------------------------------------
# Evaluation sweeps
# ---------------------------------------------------------------------------


def _eval_masks(n_ports: int, pct: float, count: int, eval_seed: int) -> list:
    """Per-sample masks at an observed percentage, fixed by the eval seed."""
    if not 0.0 < pct < 100.0:
        raise ConfigError(f"observed percentage must be in (0, 100), got {pct}")
    root = RngStream(eval_seed, "eval-mask").derive(f"{pct:g}")
    return [make_mask(n_ports, 1.0 - pct / 100.0, root.derive(i)) for i in range(count)]


def _noisy_inputs(data: np.ndarray, grid, snr_db: float | None, eval_seed: int) -> tuple[np.ndarray, np.ndarray]:
    """AWGN copies of every sample plus the per-sample noise variances."""
    if snr_db is None:
        return data, np.zeros(len(data))
    root = RngStream(eval_seed, "eval-noise").derive(f"{snr_db:g}")
    noisy = np.empty_like(data)
    sigma2 = np.empty(len(data))
    for i in range(len(data)):
        s = add_awgn(ChannelSample(data[i], grid, ""), snr_db, root.derive(i))
        noisy[i] = s.data
        sigma2[i] = s.noise_var
    return noisy, sigma2


def _sweep(predict, tag: str, dataset: Dataset, observed_pcts, snr_list, eval_seed: int) -> list:
    """Shared sweep driver.

    `predict(noisy_batch, masks, sigma2) -> (B, N_S, 2M) array`; NMSE is
    scored on masked ports against the clean truth.
    """
    data = np.asarray(dataset.samples, dtype=np.float64)
    grid = dataset.header.grid
    rows = []
    for pct in observed_pcts:
        masks = _eval_masks(grid.n_ports, pct, len(data), eval_seed)
        for snr_db in snr_list:
            noisy, sigma2 = _noisy_inputs(data, grid, snr_db, eval_seed)
            linears = []
            fwd_time = 0.0
            for b0 in range(0, len(data), 64):
                chunk = noisy[b0 : b0 + 64]
                chunk_masks = masks[b0 : b0 + len(chunk)]
                t0 = time.perf_counter()
                pred = predict(chunk, chunk_masks, sigma2[b0 : b0 + len(chunk)])
                fwd_time += time.perf_counter() - t0
                for i in range(len(chunk)):
                    linears.append(nmse(pred[i], data[b0 + i], chunk_masks[i].masked)[0])
            lin = float(np.mean(linears))
            db = 10.0 * math.log10(lin) if lin > 0 else float("-inf")
            rows.append(
                MetricsRow(
                    model=tag,
                    grid=grid.tag,
                    snr_db=snr_db,
                    observed_pct=pct,
                    nmse_linear=lin,
                    nmse_db=db,
                    samples=len(data),
                    ms_per_sample=1000.0 * fwd_time / len(data),
                )
            )
    return rows


def evaluate(
    weights: SSNetWeights,
    dataset: Dataset,
    observed_pcts,
    snr_list,
    eval_seed: int,
    tag: str = "ssnet",
) -> list:
    """Sweep a trained model over (observed %, SNR) pairs."""
    cfg = weights.config
    if cfg.grid != dataset.header.grid or cfg.m_antennas != dataset.header.m_antennas:
        raise ConfigError(
            f"checkpoint geometry {cfg.grid.tag}/M={cfg.m_antennas} does not match "
            f"dataset {dataset.header.grid.tag}/M={dataset.header.m_antennas}"
        )

    def predict(chunk, chunk_masks, _sigma2):
        obs = np.stack([m.observed for m in chunk_masks])
        return forward_batch(chunk, obs, weights, cfg, train=False).data

    return _sweep(predict, tag, dataset, observed_pcts, snr_list, eval_seed)


def evaluate_oracle(
    method: str,
    dataset: Dataset,
    observed_pcts,
    snr_list,
    eval_seed: int,
) -> list:
    """Run the LMMSE or nearest-neighbor oracle through the same sweep."""
    if method not in ("lmmse", "nn"):
        raise ConfigError(f"unknown oracle method {method!r}")
    h = dataset.header
    cov = h.delta2 * correlation_matrix(h.grid, h.model)

    def predict(chunk, chunk_masks, sigma2):
        out = np.empty_like(chunk)
        for i in range(len(chunk)):
            part = MaskPartition.from_observed(chunk_masks[i].observed, h.grid.n_ports)
            u_b = chunk[i][part.observed]
            if method == "lmmse":
                est = lmmse_extrapolate(cov, part, u_b, float(sigma2[i])).values
            else:
                est = nearest_neighbor_extrapolate(h.grid, part, u_b)
            out[i] = chunk[i]
            out[i][part.masked] = est
        return out

    return _sweep(predict, method, dataset, observed_pcts, snr_list, eval_seed)


def analytic_floor_table(
    dataset: Dataset,
    observed_pcts,
    snr_list,
    eval_seed: int,
    max_partitions: int = 100,
) -> dict:
    """Mean closed-form LMMSE NMSE over the sweep's own eval masks.

    Noise enters at its nominal per-SNR variance delta2 * 10^(-snr/10);
    keyed by (pct, snr_db) in linear NMSE.
    """
    h = dataset.header
    cov = h.delta2 * correlation_matrix(h.grid, h.model)
    table = {}
    for pct in observed_pcts:
        masks = _eval_masks(h.grid.n_ports, pct, min(h.count, max_partitions), eval_seed)
        parts = [MaskPartition.from_observed(m.observed, h.grid.n_ports) for m in masks]
        for snr_db in snr_list:
            sigma2 = 0.0 if snr_db is None else h.delta2 / (10.0 ** (snr_db / 10.0))
            table[(pct, snr_db)] = float(
                np.mean([analytic_lmmse_nmse(cov, p, sigma2) for p in parts])
            )
    return table


def ablate(plan: TrainPlan, dataset: Dataset | None = None, observed_pcts=(5, 10, 15, 20, 25, 50), snr_list=(None,), eval_seed: int = 1234) -> dict:
    """Train the plan twice - MoE encoder vs single-FFN stage - with
    identical seeds, then evaluate both on identical conditions.

    Returns {"moe": TrainResult, "nomoe": TrainResult, "rows": paired
    MetricsRows, "deltas": {(pct, snr): moe_db - nomoe_db}}.
    """
    if dataset is None:
        dataset = read_dataset(plan.dataset_path)
    cfg_moe = plan.config
    if not cfg_moe.use_moe:
        raise ConfigError("ablate expects a plan whose model config enables the MoE")
    cfg_nomoe = SSNetConfig(
        **{**cfg_moe.__dict__, "use_moe": False}
    )

    results = {}
    for tag, cfg in (("moe", cfg_moe), ("nomoe", cfg_nomoe)):
        sub = TrainPlan(**{**plan.__dict__, "config": cfg})
        if plan.out_dir:
            sub.out_dir = os.path.join(plan.out_dir, tag)
        results[tag] = train(sub, dataset)

    _, test_idx = split_dataset(dataset, plan.split, plan.seed)
    test_ds = subset_dataset(dataset, test_idx)

    deltas = {}
    rows_moe = evaluate(results["moe"].weights, test_ds, observed_pcts, snr_list, eval_seed, tag="ssnet")
    rows_nomoe = evaluate(results["nomoe"].weights, test_ds, observed_pcts, snr_list, eval_seed, tag="ssnet-nomoe")
    rows = rows_moe + rows_nomoe
    for rm, rn in zip(rows_moe, rows_nomoe):
        deltas[(rm.observed_pct, rm.snr_db)] = rm.nmse_db - rn.nmse_db
    if plan.out_dir:
        write_metrics_csv(os.path.join(plan.out_dir, "ablation.csv"), rows)
        with open(os.path.join(plan.out_dir, "ablation_delta.csv"), "w", encoding="utf-8") as f:
            f.write("observed_pct,snr_db,moe_nmse_db,nomoe_nmse_db,delta_db\n")
            for rm, rn in zip(rows_moe, rows_nomoe):
                f.write(
                    f"{rm.observed_pct:g},{_fmt_snr(rm.snr_db)},"
                    f"{repr(rm.nmse_db)},{repr(rn.nmse_db)},"
                    f"{repr(rm.nmse_db - rn.nmse_db)}\n"
                )
    return {"moe": results["moe"], "nomoe": results["nomoe"], "rows": rows, "deltas": deltas}


def zero_shot_eval(
    weights: SSNetWeights,
    ood_dataset: Dataset,
    id_dataset: Dataset,
    observed_pcts,
    snr_list,
    eval_seed: int,
) -> dict:
    """Evaluate a trained model on an out-of-distribution dataset.

    No weight updates happen; returns in/out-of-distribution rows plus
    per-configuration NMSE degradation in dB (positive = worse OOD).
    """
    rows_id = evaluate(weights, id_dataset, observed_pcts, snr_list, eval_seed, tag="ssnet-id")
    rows_ood = evaluate(weights, ood_dataset, observed_pcts, snr_list, eval_seed, tag="ssnet-ood")
    degradation = {
        (ri.observed_pct, ri.snr_db): ro.nmse_db - ri.nmse_db
        for ri, ro in zip(rows_id, rows_ood)
    }
    return {"rows_id": rows_id, "rows_ood": rows_ood, "degradation": degradation}

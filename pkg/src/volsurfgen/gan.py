"""Adversarial training of shallow volatility-surface generators.

The generator is a 1- or 2-hidden-layer softplus network regressing a
volatility value from {moneyness, ATM vol, maturity, rate, adjusted
log-moneyness} rows (plus the implied vol for the local task). Its loss
combines the regression MSE, three no-arbitrage penalties evaluated on
the generator's own total-variance function

    w(k, T) = G(features at (k, T))^2 * T

through finite-difference probes in log-moneyness and maturity, and an
adversarial term driven by a frozen one-layer discriminator fed with
mean/std-matched noise. All penalty gradients flow through the probe
forward passes by the chain rule, so the optimizer sees the exact
gradient of the loss actually implemented.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .arbitrage import DEFAULT_PROBE, PenaltyWeights
from .exceptions import ConfigError, DataError, TrainingError
from .metrics import mae_mape
from .nn import AdamState, MlpNetwork, adam_step, backward, forward
from .surfaces import SurfaceGrid
from .validation import check_vector

TASKS = ("implied", "local")

#: feature column order per task; the discriminator sees features + value
FEATURES = {
    "implied": ("k", "sigma_atm", "t", "r", "k_log"),
    "local": ("k", "sigma_atm", "sigma_implied", "t", "r", "k_log"),
}

#: discriminator outputs are clamped to this interval before the logs
_PROB_CLAMP = 1e-7

#: floor applied to a degenerate (constant) feature's standard deviation
_STD_FLOOR = 1e-6

_KLOG_TOL = 1e-12


class Dataset:
    """Column store of feature rows for one task.

    Columns: k (moneyness), sigma_atm, t, r, k_log = ln(k) - r*t,
    target, optional sigma_implied (local task), param_set labels.
    """

    def __init__(self, task, k, sigma_atm, t, r, k_log, target,
                 sigma_implied=None, param_set=None):
        if task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {task!r}")
        self.task = task
        self.k = check_vector(k, name="k")
        n = self.k.size
        self.sigma_atm = check_vector(sigma_atm, n, "sigma_atm")
        self.t = check_vector(t, n, "t")
        self.r = check_vector(r, n, "r")
        self.k_log = check_vector(k_log, n, "k_log")
        self.target = check_vector(target, n, "target")
        if task == "local":
            if sigma_implied is None:
                raise ValueError("local task requires sigma_implied")
            self.sigma_implied = check_vector(sigma_implied, n, "sigma_implied")
        else:
            self.sigma_implied = None
        if param_set is None:
            self.param_set = np.zeros(n, dtype=int)
        else:
            self.param_set = np.asarray(param_set, dtype=int)
            if self.param_set.shape != (n,):
                raise ValueError("param_set must match the row count")
        if np.any(self.k <= 0):
            raise ValueError("moneyness must be positive")
        if np.any(self.sigma_atm <= 0):
            raise ValueError("sigma_atm must be positive")
        if np.max(np.abs(self.k_log - (np.log(self.k) - self.r * self.t))) > _KLOG_TOL:
            raise ValueError("k_log must equal ln(k) - r*t")

    def __len__(self):
        return self.k.size

    def features(self) -> np.ndarray:
        cols = {
            "k": self.k,
            "sigma_atm": self.sigma_atm,
            "t": self.t,
            "r": self.r,
            "k_log": self.k_log,
        }
        if self.task == "local":
            cols["sigma_implied"] = self.sigma_implied
        return np.column_stack([cols[name] for name in FEATURES[self.task]])

    def targets(self) -> np.ndarray:
        return self.target.copy()


@dataclass
class TrainConfig:
    """Hyper-parameters of one training run."""

    task: str = "implied"
    generator_depth: int = 2
    hidden_width: int = 100
    epochs: int = 50
    batch_size: int = 128
    weights: PenaltyWeights = field(default_factory=PenaltyWeights)
    seed: int = 0
    probe: float = DEFAULT_PROBE
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    constraints_enabled: bool = True
    mse_enabled: bool = True
    baseline_mode: bool = False
    batchnorm: bool = True
    d_epochs_first: bool = False
    val_fraction: float = 0.15
    baseline_depth: int = 4
    baseline_width: int = 400
    softplus_beta: float = 1.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.generator_depth not in (1, 2):
            raise ValueError("generator_depth must be 1 or 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch statistics)")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")

    def effective_weights(self) -> PenaltyWeights:
        w = self.weights
        if not self.constraints_enabled:
            w = w.disabled()
        if self.baseline_mode:
            w = replace(w, lambda_adversarial=0.0)
        return w

    def to_dict(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, PenaltyWeights):
                out["lambda_calendar"] = value.lambda_calendar
                out["lambda_butterfly"] = value.lambda_butterfly
                out["lambda_wing"] = value.lambda_wing
                out["lambda_adversarial"] = value.lambda_adversarial
            else:
                out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        weight_keys = {
            "lambda_calendar": 1.0,
            "lambda_butterfly": 1.0,
            "lambda_wing": 1e-4,
            "lambda_adversarial": 0.05,
        }
        weights = PenaltyWeights(
            **{k: float(data.pop(k, default)) for k, default in weight_keys.items()}
        )
        known = {f.name for f in fields(cls)} - {"weights"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name == "weights" or f.name not in data:
                continue
            raw = data[f.name]
            if f.type == "bool" or isinstance(getattr(cls, f.name, None), bool):
                kwargs[f.name] = _parse_bool(raw)
            elif f.name in ("task",):
                kwargs[f.name] = str(raw)
            elif f.name in (
                "generator_depth",
                "hidden_width",
                "epochs",
                "batch_size",
                "seed",
                "baseline_depth",
                "baseline_width",
            ):
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = float(raw)
        return cls(weights=weights, **kwargs)


def _parse_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("true", "1", "yes", "on"):
        return True
    if text in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean from {raw!r}")


@dataclass
class TrainReport:
    """Per-epoch loss components, final errors and audit results."""

    per_epoch: dict = field(default_factory=dict)
    final_mae: float = np.nan
    final_mape: float = np.nan
    wall_seconds: float = 0.0
    skipped_butterfly: int = 0
    arbitrage: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_epoch": self.per_epoch,
                "final_mae": self.final_mae,
                "final_mape": self.final_mape,
                "wall_seconds": self.wall_seconds,
                "skipped_butterfly": self.skipped_butterfly,
                "arbitrage": self.arbitrage,
                "config": self.config,
            },
            indent=1,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrainReport":
        with open(path) as fh:
            data = json.load(fh)
        return cls(**data)


def feature_stats(X: np.ndarray):
    """Per-feature sample mean and std (std floored for constants)."""
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), _STD_FLOOR)
    return mean, std


def make_noise_batch(stats, size: int, rng: np.random.Generator) -> np.ndarray:
    """Noise matched to the training features: one normal per column."""
    mean, std = stats
    return mean + std * rng.standard_normal((size, mean.size))


def _column_indices(task: str):
    names = FEATURES[task]
    return {name: names.index(name) for name in names}


def _probe_features(X: np.ndarray, task: str, h: float):
    """The four probe batches for the penalty finite differences.

    Log-moneyness probes move the k and k_log columns together; maturity
    probes move t and the rate part of k_log; everything else is frozen
    per row.
    """
    idx = _column_indices(task)
    x_kp = X.copy()
    x_kp[:, idx["k"]] *= np.exp(h)
    x_kp[:, idx["k_log"]] += h
    x_km = X.copy()
    x_km[:, idx["k"]] *= np.exp(-h)
    x_km[:, idx["k_log"]] -= h
    x_tp = X.copy()
    x_tp[:, idx["t"]] += h
    x_tp[:, idx["k_log"]] -= X[:, idx["r"]] * h
    x_tm = X.copy()
    x_tm[:, idx["t"]] -= h
    x_tm[:, idx["k_log"]] += X[:, idx["r"]] * h
    return x_kp, x_km, x_tp, x_tm


def generator_loss(
    gen: MlpNetwork,
    disc: MlpNetwork | None,
    X: np.ndarray,
    y: np.ndarray,
    weights: PenaltyWeights,
    probe: float = DEFAULT_PROBE,
    task: str = "implied",
    noise: np.ndarray | None = None,
    include_mse: bool = True,
):
    """Composite generator loss and its exact parameter gradients.

    Returns (components dict, total, gradient list aligned with
    gen.parameters()). The discriminator is treated as frozen. ``noise``
    must be supplied whenever the adversarial weight is positive.
    """
    b = X.shape[0]
    idx = _column_indices(task)
    t_col = X[:, idx["t"]]
    k_lm = np.log(X[:, idx["k"]])
    h = probe

    out_c, cache_c = forward(gen, X, "train")
    g_c = out_c[:, 0]
    u_c = np.zeros(b)

    resid = g_c - y
    mse = float(np.mean(resid**2))
    if include_mse:
        u_c += 2.0 * resid / b

    l_c_val = 0.0
    l_bf_val = 0.0
    l_inf_val = 0.0
    skipped = 0
    probe_caches = []
    probe_upstreams = []
    need_penalties = (
        weights.lambda_calendar > 0
        or weights.lambda_butterfly > 0
        or weights.lambda_wing > 0
    )
    if need_penalties:
        x_kp, x_km, x_tp, x_tm = _probe_features(X, task, h)
        out_kp, cache_kp = forward(gen, x_kp, "train")
        out_km, cache_km = forward(gen, x_km, "train")
        out_tp, cache_tp = forward(gen, x_tp, "train")
        out_tm, cache_tm = forward(gen, x_tm, "train")
        g_kp, g_km = out_kp[:, 0], out_km[:, 0]
        g_tp, g_tm = out_tp[:, 0], out_tm[:, 0]
        u_kp = np.zeros(b)
        u_km = np.zeros(b)
        u_tp = np.zeros(b)
        u_tm = np.zeros(b)

        w_c = g_c**2 * t_col
        w_kp = g_kp**2 * t_col
        w_km = g_km**2 * t_col
        w_tp = g_tp**2 * (t_col + h)
        w_tm = g_tm**2 * (t_col - h)

        if weights.lambda_calendar > 0:
            l_cal = (w_tp - w_tm) / (2.0 * h)
            l_c_val = float(np.mean(np.maximum(0.0, -l_cal)))
            active = l_cal < 0.0
            coeff = np.where(active, -weights.lambda_calendar / b, 0.0)
            u_tp += coeff / (2.0 * h) * 2.0 * g_tp * (t_col + h)
            u_tm += -coeff / (2.0 * h) * 2.0 * g_tm * (t_col - h)

        dk = (w_kp - w_km) / (2.0 * h)
        d2w = (w_kp - 2.0 * w_c + w_km) / (h * h)

        if weights.lambda_butterfly > 0:
            ok = (g_c > 0.0) & (g_kp > 0.0) & (g_km > 0.0)
            skipped = int(b - ok.sum())
            if ok.any():
                w_safe = np.where(ok, w_c, 1.0)
                q = 1.0 - k_lm * dk / (2.0 * w_safe)
                l_but = (
                    q * q - (dk / 4.0) * (1.0 / w_safe + 0.25) + 0.5 * d2w
                )
                m_eff = int(ok.sum())
                hinges = np.where(ok, np.maximum(0.0, -l_but), 0.0)
                l_bf_val = float(hinges.sum() / m_eff)
                active = ok & (l_but < 0.0)
                coeff = np.where(active, -weights.lambda_butterfly / m_eff, 0.0)
                dl_ddk = -q * k_lm / w_safe - (0.25 / w_safe + 1.0 / 16.0)
                dl_dwc = (
                    q * k_lm * dk / w_safe**2 + dk / (4.0 * w_safe**2) - 1.0 / (h * h)
                )
                dl_dwkp = dl_ddk / (2.0 * h) + 0.5 / (h * h)
                dl_dwkm = -dl_ddk / (2.0 * h) + 0.5 / (h * h)
                u_c += coeff * dl_dwc * 2.0 * g_c * t_col
                u_kp += coeff * dl_dwkp * 2.0 * g_kp * t_col
                u_km += coeff * dl_dwkm * 2.0 * g_km * t_col

        if weights.lambda_wing > 0:
            l_inf_val = float(np.mean(np.abs(d2w)))
            sgn = np.sign(d2w)
            coeff = weights.lambda_wing / b * sgn / (h * h)
            u_kp += coeff * 2.0 * g_kp * t_col
            u_km += coeff * 2.0 * g_km * t_col
            u_c += -2.0 * coeff * 2.0 * g_c * t_col

        probe_caches = [cache_kp, cache_km, cache_tp, cache_tm]
        probe_upstreams = [u_kp, u_km, u_tp, u_tm]

    l_dg_val = 0.0
    noise_cache = None
    u_noise = None
    if weights.lambda_adversarial > 0:
        if disc is None:
            raise ConfigError("adversarial weight is positive but no discriminator given")
        if noise is None:
            raise ConfigError("adversarial weight is positive but no noise batch given")
        out_nz, noise_cache = forward(gen, noise, "train")
        d_in = np.hstack([noise, out_nz])
        d_out, d_cache = forward(disc, d_in, "train")
        p = np.clip(d_out[:, 0], _PROB_CLAMP, 1.0 - _PROB_CLAMP)
        l_dg_val = float(-np.mean(np.log(p)))
        interior = (d_out[:, 0] > _PROB_CLAMP) & (d_out[:, 0] < 1.0 - _PROB_CLAMP)
        d_upstream = np.where(
            interior, -weights.lambda_adversarial / (noise.shape[0] * p), 0.0
        )
        _, d_grad_in = backward(disc, d_cache, d_upstream[:, None])
        u_noise = d_grad_in[:, -1]

    components = {
        "mse": mse,
        "l_c": l_c_val,
        "l_bf": l_bf_val,
        "l_inf": l_inf_val,
        "l_dg": l_dg_val,
        "skipped_butterfly": skipped,
    }
    total = (
        (mse if include_mse else 0.0)
        + weights.lambda_calendar * l_c_val
        + weights.lambda_butterfly * l_bf_val
        + weights.lambda_wing * l_inf_val
        + weights.lambda_adversarial * l_dg_val
    )

    grads, _ = backward(gen, cache_c, u_c[:, None])
    for cache, upstream in zip(probe_caches, probe_upstreams):
        extra, _ = backward(gen, cache, upstream[:, None])
        for g, e in zip(grads, extra):
            g += e
    if noise_cache is not None:
        extra, _ = backward(gen, noise_cache, u_noise[:, None])
        for g, e in zip(grads, extra):
            g += e
    return components, float(total), grads


def discriminator_loss(gen: MlpNetwork, disc: MlpNetwork, X: np.ndarray, y: np.ndarray):
    """Binary cross-entropy over real {X, y} and fake {X, G(X)} samples.

    The generator is frozen; returns (loss, gradients for disc.parameters()).
    """
    b = X.shape[0]
    g_fake = forward(gen, X, "train")[0]
    real_in = np.hstack([X, y[:, None]])
    fake_in = np.hstack([X, g_fake])

    d_real, cache_r = forward(disc, real_in, "train")
    d_fake, cache_f = forward(disc, fake_in, "train")
    p_real = np.clip(d_real[:, 0], _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    p_fake = np.clip(d_fake[:, 0], _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    loss = float(-np.mean(np.log(p_real)) - np.mean(np.log(1.0 - p_fake)))

    int_r = (d_real[:, 0] > _PROB_CLAMP) & (d_real[:, 0] < 1.0 - _PROB_CLAMP)
    int_f = (d_fake[:, 0] > _PROB_CLAMP) & (d_fake[:, 0] < 1.0 - _PROB_CLAMP)
    u_real = np.where(int_r, -1.0 / (b * p_real), 0.0)
    u_fake = np.where(int_f, 1.0 / (b * (1.0 - p_fake)), 0.0)
    grads_r, _ = backward(disc, cache_r, u_real[:, None])
    grads_f, _ = backward(disc, cache_f, u_fake[:, None])
    return loss, [a + b_ for a, b_ in zip(grads_r, grads_f)]


def _build_networks(cfg: TrainConfig, input_dim: int):
    gen_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 101]))
    if cfg.baseline_mode:
        dims = [input_dim] + [cfg.baseline_width] * cfg.baseline_depth + [1]
    else:
        dims = [input_dim] + [cfg.hidden_width] * cfg.generator_depth + [1]
    gen = MlpNetwork.build(
        dims, beta=cfg.softplus_beta, batchnorm=cfg.batchnorm, rng=gen_rng
    )
    disc = None
    if not cfg.baseline_mode:
        disc_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 102]))
        disc = MlpNetwork.build(
            [input_dim + 1, cfg.hidden_width, 1],
            output_activation="sigmoid",
            beta=cfg.softplus_beta,
            batchnorm=cfg.batchnorm,
            rng=disc_rng,
        )
    return gen, disc


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.size, batch_size):
        chunk = order[start : start + batch_size]
        if chunk.size >= 2:  # batch statistics need two rows
            yield chunk


def train(dataset: Dataset, cfg: TrainConfig):
    """Alternating adversarial training; returns (gen, disc, TrainReport).

    Per batch the discriminator is updated with the generator frozen and
    then the generator with the discriminator frozen; generator weights
    persist across epochs. With ``d_epochs_first`` the discriminator is
    fully trained over all epochs before any generator update. Fully
    deterministic given the config seed.
    """
    if cfg.task != dataset.task:
        raise ConfigError(
            f"config task {cfg.task!r} does not match dataset task {dataset.task!r}"
        )
    n = len(dataset)
    if n < 4:
        raise DataError("dataset too small to split")
    started = time.perf_counter()

    split_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 103]))
    perm = split_rng.permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n)))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if train_idx.size < 2:
        raise DataError("dataset too small to split")

    X = dataset.features()
    y = dataset.targets()
    stats = feature_stats(X[train_idx])
    weights = cfg.effective_weights()

    gen, disc = _build_networks(cfg, X.shape[1])
    gen_params = gen.parameters()
    gen_state = AdamState.for_params(
        gen_params, lr=cfg.learning_rate, beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2, eps=cfg.adam_eps,
    )
    disc_params = disc.parameters() if disc is not None else []
    disc_state = (
        AdamState.for_params(
            disc_params, lr=cfg.learning_rate, beta1=cfg.adam_beta1,
            beta2=cfg.adam_beta2, eps=cfg.adam_eps,
        )
        if disc is not None
        else None
    )
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 104]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 105]))

    report = TrainReport(config=cfg.to_dict())
    keys = ("mse", "l_c", "l_bf", "l_inf", "l_dg", "l_g", "l_d")
    report.per_epoch = {key: [] for key in keys}

    train_disc_inline = disc is not None and not cfg.d_epochs_first

    def run_epoch(epoch: int, update_gen: bool, update_disc: bool):
        sums = dict.fromkeys(keys, 0.0)
        counts = dict.fromkeys(keys, 0)
        order = shuffle_rng.permutation(train_idx)
        for batch_idx in _batches(order, cfg.batch_size):
            xb, yb = X[batch_idx], y[batch_idx]
            if update_disc:
                ld, disc_grads = discriminator_loss(gen, disc, xb, yb)
                if not np.isfinite(ld):
                    raise TrainingError(
                        "discriminator loss is not finite",
                        {"epoch": epoch, "l_d": ld},
                    )
                adam_step(disc_state, disc_params, disc_grads)
                sums["l_d"] += ld
                counts["l_d"] += 1
            if update_gen:
                noise = None
                if weights.lambda_adversarial > 0:
                    noise = make_noise_batch(stats, xb.shape[0], noise_rng)
                comps, total, gen_grads = generator_loss(
                    gen, disc, xb, yb, weights,
                    probe=cfg.probe, task=cfg.task, noise=noise,
                    include_mse=cfg.mse_enabled,
                )
                if not np.isfinite(total):
                    raise TrainingError(
                        "generator loss is not finite",
                        {"epoch": epoch, "components": comps},
                    )
                adam_step(gen_state, gen_params, gen_grads)
                report.skipped_butterfly += comps["skipped_butterfly"]
                for key in ("mse", "l_c", "l_bf", "l_inf", "l_dg"):
                    sums[key] += comps[key]
                    counts[key] += 1
                sums["l_g"] += total
                counts["l_g"] += 1
        for key in keys:
            report.per_epoch[key].append(
                sums[key] / counts[key] if counts[key] else np.nan
            )

    if cfg.d_epochs_first and disc is not None:
        for epoch in range(cfg.epochs):
            run_epoch(epoch, update_gen=False, update_disc=True)
        for epoch in range(cfg.epochs):
            run_epoch(cfg.epochs + epoch, update_gen=True, update_disc=False)
    else:
        for epoch in range(cfg.epochs):
            run_epoch(epoch, update_gen=True, update_disc=train_disc_inline)

    val_pred = forward(gen, X[val_idx], "eval")[:, 0]
    report.final_mae, report.final_mape = mae_mape(val_pred, y[val_idx])
    report.wall_seconds = time.perf_counter() - started
    return gen, disc, report


def generate_surface(gen: MlpNetwork, task: str, k_values, t_values, context: dict) -> SurfaceGrid:
    """Evaluate a trained generator on a (moneyness x maturity) grid.

    ``context`` supplies what the feature rows need: "r" (rate), an
    "atm" curve as a (maturities, vols) pair, and for the local task a
    "sigma_implied" SurfaceGrid. The ATM curve is interpolated linearly
    in maturity; the network runs in eval mode.
    """
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    for key in ("r", "atm") + (("sigma_implied",) if task == "local" else ()):
        if key not in context:
            raise ConfigError(f"missing context entry {key!r} for task {task!r}")
    k_values = np.asarray(k_values, dtype=float)
    t_values = np.asarray(t_values, dtype=float)
    rate = float(context["r"])
    atm_t, atm_vol = context["atm"]
    atm_t = np.asarray(atm_t, dtype=float)
    atm_vol = np.asarray(atm_vol, dtype=float)

    kk, tt = np.meshgrid(k_values, t_values, indexing="ij")
    k_flat = kk.ravel()
    t_flat = tt.ravel()
    cols = {
        "k": k_flat,
        "sigma_atm": np.interp(t_flat, atm_t, atm_vol),
        "t": t_flat,
        "r": np.full_like(k_flat, rate),
        "k_log": np.log(k_flat) - rate * t_flat,
    }
    if task == "local":
        implied = context["sigma_implied"]
        if not isinstance(implied, SurfaceGrid) or implied.kind != "implied_vol":
            raise ConfigError("sigma_implied context must be an implied_vol SurfaceGrid")
        if np.array_equal(implied.strikes, k_values) and np.array_equal(
            implied.maturities, t_values
        ):
            cols["sigma_implied"] = implied.values.ravel()
        else:
            interp = RegularGridInterpolator(
                (implied.strikes, implied.maturities),
                implied.values,
                bounds_error=False,
                fill_value=None,
            )
            cols["sigma_implied"] = interp(np.column_stack([k_flat, t_flat]))
    features = np.column_stack([cols[name] for name in FEATURES[task]])
    out = forward(gen, features, "eval")[:, 0]
    values = out.reshape(k_values.size, t_values.size)
    kind = "implied_vol" if task == "implied" else "local_vol"
    return SurfaceGrid(t_values, k_values, values, kind)

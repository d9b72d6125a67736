"""Arrival-rate forecasters feeding proactive container scaling.

The load signal is a series of windowed maxima: within each sampling window
(default 5 s) the arrival log is split into one-second sub-bins and the
largest per-second count is kept.  Forecasters consume the trailing window of
those maxima (default 100 s worth, i.e. 20 samples) and emit a non-negative
predicted max rate for the upcoming provisioning window.

The four closed-form forecasters are re-fit from scratch on every call, which
mirrors how a monitor daemon would slide them along the arrival log.  The
recurrent model is trained offline on a prefix of the trace and used
read-only afterwards; prediction is off the critical scheduling path.
"""

from __future__ import annotations

import bisect
import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SUB_BIN_MS = 1000.0


class NotTrainedError(RuntimeError):
    """Raised when a learned forecaster is used before training."""


@dataclass(frozen=True)
class LoadSample:
    window_start: float
    window_len: float
    max_rate: float  # req/s, the largest one-second count inside the window

    def __post_init__(self) -> None:
        if self.window_len <= 0:
            raise ValueError("window_len must be > 0")
        if self.max_rate < 0:
            raise ValueError("max_rate must be >= 0")


@dataclass(frozen=True)
class ForecasterConfig:
    kind: str = "lstm"            # mwa | ewma | linreg | logreg | lstm
    window_ms: float = 5000.0     # sampling window W_s
    history_ms: float = 100_000.0
    horizon_ms: float = 600_000.0  # provisioning window W_p the forecast covers
    ewma_alpha: float = 0.5
    mwa_window: int = 5
    lstm_hidden: int = 32
    lstm_layers: int = 2
    lstm_epochs: int = 100
    lstm_lr: float = 0.05
    lstm_lookback: int = 20
    train_fraction: float = 0.6
    seed: int = 7

    def __post_init__(self) -> None:
        n = self.history_ms / self.window_ms
        if abs(n - round(n)) > 1e-9:
            raise ValueError("history_ms must be an integer multiple of window_ms")

    @property
    def n_windows(self) -> int:
        return int(round(self.history_ms / self.window_ms))


def sample_windows(arrival_log: Sequence[float], now: float,
                   cfg: ForecasterConfig) -> list[LoadSample]:
    """Windowed-max load samples over [now - history, now).

    Windows that start before time zero (short history early in a run) are
    padded with zero-rate samples so the output length is always
    history/window.  The log must be sorted ascending.
    """
    ws = cfg.window_ms
    samples = []
    n_bins = max(1, int(round(ws / SUB_BIN_MS)))
    bin_len = ws / n_bins
    for i in range(cfg.n_windows):
        start = now - cfg.history_ms + i * ws
        if start + ws <= 0:
            samples.append(LoadSample(start, ws, 0.0))
            continue
        best = 0
        for j in range(n_bins):
            lo = bisect.bisect_left(arrival_log, start + j * bin_len)
            hi = bisect.bisect_left(arrival_log, start + (j + 1) * bin_len)
            best = max(best, hi - lo)
        samples.append(LoadSample(start, ws, best * (SUB_BIN_MS / bin_len)))
    return samples


def global_max_rate(samples: Sequence[LoadSample]) -> float:
    """The largest windowed max across the sampled history."""
    return max((s.max_rate for s in samples), default=0.0)


def _rates(samples: Sequence[LoadSample | float]) -> list[float]:
    return [s.max_rate if isinstance(s, LoadSample) else float(s) for s in samples]


# ---------------------------------------------------------------------------
# closed-form forecasters


class Forecaster:
    kind = "base"

    def forecast(self, samples: Sequence[LoadSample | float]) -> float:
        raise NotImplementedError


class MovingWindowAverage(Forecaster):
    kind = "mwa"

    def __init__(self, window: int = 5):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window

    def forecast(self, samples):
        rates = _rates(samples)
        if not rates:
            raise ValueError("samples must be non-empty")
        tail = rates[-self.window:]
        return max(0.0, sum(tail) / len(tail))


class Ewma(Forecaster):
    kind = "ewma"

    def __init__(self, alpha: float = 0.5):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        self.alpha = alpha

    def forecast(self, samples):
        rates = _rates(samples)
        if not rates:
            raise ValueError("samples must be non-empty")
        s = rates[0]
        for x in rates[1:]:
            s = self.alpha * x + (1.0 - self.alpha) * s
        return max(0.0, s)


class LinearTrend(Forecaster):
    """Least-squares line over (window index, max rate), extrapolated one step."""

    kind = "linreg"

    def forecast(self, samples):
        rates = _rates(samples)
        if not rates:
            raise ValueError("samples must be non-empty")
        n = len(rates)
        if n == 1:
            return max(0.0, rates[0])
        x = np.arange(n, dtype=float)
        y = np.asarray(rates, dtype=float)
        slope, intercept = np.polyfit(x, y, 1)
        return max(0.0, float(slope * n + intercept))


class LogisticTrend(Forecaster):
    """Linear fit in logit space of the min-max-normalized rates.

    Raw rates are unbounded, so the series is squashed into (0, 1) before the
    logistic transform and the one-step extrapolation is mapped back.
    """

    kind = "logreg"
    _EPS = 1e-3

    def forecast(self, samples):
        rates = _rates(samples)
        if not rates:
            raise ValueError("samples must be non-empty")
        y = np.asarray(rates, dtype=float)
        lo, hi = float(y.min()), float(y.max())
        if hi - lo < 1e-12:
            return max(0.0, hi)
        norm = (y - lo) / (hi - lo)
        norm = np.clip(norm, self._EPS, 1.0 - self._EPS)
        z = np.log(norm / (1.0 - norm))
        n = len(z)
        if n == 1:
            return max(0.0, float(y[0]))
        slope, intercept = np.polyfit(np.arange(n, dtype=float), z, 1)
        z_next = slope * n + intercept
        p = 1.0 / (1.0 + math.exp(-z_next))
        return max(0.0, lo + p * (hi - lo))


# ---------------------------------------------------------------------------
# recurrent forecaster, implemented from scratch on numpy


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class _LayerGrads:
    dW: np.ndarray
    db: np.ndarray


class LstmForecaster(Forecaster):
    """Stacked LSTM trained by truncated backprop-through-time, batch size 1.

    Each layer keeps one weight matrix ``W`` of shape (4H, in+H) holding the
    input/forget/output/candidate blocks in that order, plus a bias of length
    4H.  A linear head maps the top layer's final hidden state to the scalar
    one-step-ahead prediction.  Inputs are normalized by the training-set
    maximum; plain gradient descent with a fixed learning rate updates the
    weights after every sequence.

    Model files are a flat little-endian binary: the magic ``CSFC``, a u32
    format version, u32 layer count, u32 hidden size, u32 lookback, one f64
    normalization scale, then for each layer W (row-major f64) followed by b,
    and finally the head weights (H f64 values) and bias (one f64).
    """

    kind = "lstm"
    _MAGIC = b"CSFC"
    _VERSION = 1

    def __init__(self, hidden: int = 32, layers: int = 2, epochs: int = 100,
                 lr: float = 0.05, lookback: int = 20, seed: int = 7):
        self.hidden = hidden
        self.layers = layers
        self.epochs = epochs
        self.lr = lr
        self.lookback = lookback
        self.seed = seed
        self.scale = 1.0
        self.trained = False
        self._init_weights()

    def _init_weights(self) -> None:
        rng = np.random.default_rng(self.seed)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        for layer in range(self.layers):
            in_dim = 1 if layer == 0 else self.hidden
            bound = 1.0 / math.sqrt(in_dim + self.hidden)
            self.W.append(rng.uniform(-bound, bound, size=(4 * self.hidden, in_dim + self.hidden)))
            self.b.append(np.zeros(4 * self.hidden))
        self.Wy = rng.uniform(-0.1, 0.1, size=self.hidden)
        self.by = 0.0

    # -- forward / backward -------------------------------------------------

    def _forward(self, seq: np.ndarray):
        """Run the stack over a normalized sequence; returns (y, caches)."""
        H = self.hidden
        h = [np.zeros(H) for _ in range(self.layers)]
        c = [np.zeros(H) for _ in range(self.layers)]
        caches = []
        for x_t in seq:
            x_in = np.array([x_t])
            step = []
            for l in range(self.layers):
                concat = np.concatenate([x_in, h[l]])
                z = self.W[l] @ concat + self.b[l]
                i = _sigmoid(z[:H])
                f = _sigmoid(z[H:2 * H])
                o = _sigmoid(z[2 * H:3 * H])
                g = np.tanh(z[3 * H:])
                c_new = f * c[l] + i * g
                tanh_c = np.tanh(c_new)
                h_new = o * tanh_c
                step.append((concat, c[l], i, f, o, g, tanh_c))
                h[l], c[l] = h_new, c_new
                x_in = h_new
            caches.append(step)
        y = float(self.Wy @ h[-1] + self.by)
        return y, caches, h

    def _loss_and_grads(self, seq: np.ndarray, target: float):
        """Squared-error loss and full-BPTT gradients for one sequence."""
        H = self.hidden
        y, caches, h_final = self._forward(seq)
        err = y - target
        loss = 0.5 * err * err

        grads = [_LayerGrads(np.zeros_like(self.W[l]), np.zeros_like(self.b[l]))
                 for l in range(self.layers)]
        dWy = err * h_final[-1]
        dby = err
        dh = [np.zeros(H) for _ in range(self.layers)]
        dc = [np.zeros(H) for _ in range(self.layers)]
        dh[-1] = err * self.Wy

        for t in range(len(seq) - 1, -1, -1):
            for l in range(self.layers - 1, -1, -1):
                concat, c_prev, i, f, o, g, tanh_c = caches[t][l]
                dh_l = dh[l]
                dc_l = dc[l] + dh_l * o * (1.0 - tanh_c * tanh_c)
                do = dh_l * tanh_c
                di = dc_l * g
                df = dc_l * c_prev
                dg = dc_l * i
                dz = np.concatenate([
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    do * o * (1.0 - o),
                    dg * (1.0 - g * g),
                ])
                grads[l].dW += np.outer(dz, concat)
                grads[l].db += dz
                dconcat = self.W[l].T @ dz
                in_dim = concat.size - H
                dh[l] = dconcat[in_dim:]
                dc[l] = dc_l * f
                if l > 0:
                    dh[l - 1] = dh[l - 1] + dconcat[:in_dim]
        return loss, grads, dWy, dby

    # -- training / inference -----------------------------------------------

    def train(self, series: Sequence[float]) -> float:
        """Fit on a raw rate series; returns the final mean epoch loss."""
        values = np.asarray(list(series), dtype=float)
        if values.size < 2:
            raise ValueError("training series needs at least 2 samples")
        self.scale = float(values.max()) or 1.0
        norm = values / self.scale
        if norm.size < self.lookback + 1:
            norm = np.concatenate([np.zeros(self.lookback + 1 - norm.size), norm])
        pairs = [(norm[i:i + self.lookback], norm[i + self.lookback])
                 for i in range(norm.size - self.lookback)]
        last_loss = math.inf
        for _ in range(self.epochs):
            total = 0.0
            for seq, target in pairs:
                loss, grads, dWy, dby = self._loss_and_grads(seq, float(target))
                total += loss
                for l in range(self.layers):
                    self.W[l] -= self.lr * grads[l].dW
                    self.b[l] -= self.lr * grads[l].db
                self.Wy -= self.lr * dWy
                self.by -= self.lr * dby
            last_loss = total / len(pairs)
        self.trained = True
        return last_loss

    def forecast(self, samples):
        if not self.trained:
            raise NotTrainedError("LSTM forecaster is untrained; call train() first")
        rates = _rates(samples)
        if not rates:
            raise ValueError("samples must be non-empty")
        x = np.asarray(rates[-self.lookback:], dtype=float) / self.scale
        if x.size < self.lookback:
            x = np.concatenate([np.zeros(self.lookback - x.size), x])
        y, _, _ = self._forward(x)
        return max(0.0, y * self.scale)

    # -- persistence ----------------------------------------------------------

    def save(self, path: str) -> None:
        if not self.trained:
            raise NotTrainedError("refusing to save an untrained model")
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(struct.pack("<IIII", self._VERSION, self.layers, self.hidden, self.lookback))
            fh.write(struct.pack("<d", self.scale))
            for l in range(self.layers):
                fh.write(self.W[l].astype("<f8").tobytes())
                fh.write(self.b[l].astype("<f8").tobytes())
            fh.write(self.Wy.astype("<f8").tobytes())
            fh.write(struct.pack("<d", self.by))

    @classmethod
    def load(cls, path: str) -> "LstmForecaster":
        with open(path, "rb") as fh:
            if fh.read(4) != cls._MAGIC:
                raise ValueError(f"{path}: not a forecaster model file")
            version, layers, hidden, lookback = struct.unpack("<IIII", fh.read(16))
            if version != cls._VERSION:
                raise ValueError(f"{path}: unsupported model version {version}")
            model = cls(hidden=hidden, layers=layers, lookback=lookback)
            (model.scale,) = struct.unpack("<d", fh.read(8))
            for l in range(layers):
                in_dim = 1 if l == 0 else hidden
                w_bytes = fh.read(8 * 4 * hidden * (in_dim + hidden))
                model.W[l] = np.frombuffer(w_bytes, dtype="<f8").reshape(4 * hidden, in_dim + hidden).copy()
                model.b[l] = np.frombuffer(fh.read(8 * 4 * hidden), dtype="<f8").copy()
            model.Wy = np.frombuffer(fh.read(8 * hidden), dtype="<f8").copy()
            (model.by,) = struct.unpack("<d", fh.read(8))
            model.trained = True
            return model


FORECASTER_KINDS = ("mwa", "ewma", "linreg", "logreg", "lstm")


def make_forecaster(cfg: ForecasterConfig) -> Forecaster:
    if cfg.kind == "mwa":
        return MovingWindowAverage(cfg.mwa_window)
    if cfg.kind == "ewma":
        return Ewma(cfg.ewma_alpha)
    if cfg.kind == "linreg":
        return LinearTrend()
    if cfg.kind == "logreg":
        return LogisticTrend()
    if cfg.kind == "lstm":
        return LstmForecaster(hidden=cfg.lstm_hidden, layers=cfg.lstm_layers,
                              epochs=cfg.lstm_epochs, lr=cfg.lstm_lr,
                              lookback=cfg.lstm_lookback, seed=cfg.seed)
    raise ValueError(f"unknown forecaster kind {cfg.kind!r}")


def forecast(forecaster: Forecaster, samples: Sequence[LoadSample | float]) -> float:
    """Predict the max arrival rate for the next provisioning window."""
    return forecaster.forecast(samples)


# ---------------------------------------------------------------------------
# offline evaluation


def rate_series(arrival_times: Sequence[float], horizon: float,
                window_ms: float = 5000.0) -> list[float]:
    """Windowed-max series over a whole trace, for training and evaluation."""
    n = int(math.ceil(horizon / window_ms))
    times = np.asarray(arrival_times, dtype=float)
    out = []
    n_bins = max(1, int(round(window_ms / SUB_BIN_MS)))
    bin_len = window_ms / n_bins
    for i in range(n):
        start = i * window_ms
        edges = [start + j * bin_len for j in range(n_bins + 1)]
        idx = np.searchsorted(times, edges)
        counts = np.diff(idx)
        out.append(float(counts.max()) * (SUB_BIN_MS / bin_len) if counts.size else 0.0)
    return out


def evaluate_rmse(cfg: ForecasterConfig, series: Sequence[float],
                  split: float | None = None) -> tuple[float, list[float]]:
    """One-step-ahead RMSE on the tail of a windowed-max series.

    Learned kinds train on the leading ``split`` fraction; closed-form kinds
    just stream.  Every forecaster sees the same trailing window of history
    per step that the online monitor would hand it.
    """
    split = cfg.train_fraction if split is None else split
    if not 0 < split < 1:
        raise ValueError("split must be in (0, 1)")
    values = list(series)
    cut = max(1, int(len(values) * split))
    if cut >= len(values) - 1:
        raise ValueError("series too short for the requested split")
    f = make_forecaster(cfg)
    if isinstance(f, LstmForecaster):
        f.train(values[:cut])
    history = cfg.n_windows
    preds, sq = [], 0.0
    for t in range(cut, len(values) - 1):
        window = values[max(0, t + 1 - history):t + 1]
        p = f.forecast(window)
        preds.append(p)
        sq += (p - values[t + 1]) ** 2
    rmse = math.sqrt(sq / len(preds))
    return rmse, preds

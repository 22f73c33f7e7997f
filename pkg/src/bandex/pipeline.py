"""System orchestration: extension, training and evaluation drivers."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import SignalBuffer, read_wav, write_wav
from .errors import ConfigurationError, FormatError, InstabilityError, PreconditionError, TrainingError
from .filters import (
    FirFilter,
    design_inverse_irs,
    fir_filter,
    irs_filter,
    irs_modified_response,
    make_bandshape_filters,
)
from .frontend import (
    FrameTrack,
    analyze,
    frame_offset,
    high_targets,
    low_targets,
    prepare_input,
    simulate_telephone,
    wideband_envelopes,
)
from .highband import assemble_wideband_envelope, extend_excitation_stream, postprocess_highband, smooth_envelope_track
from .lowband import (
    LowbandFrame,
    advance_phase,
    denormalize_amplitudes,
    extract_residual_harmonics,
    lowband_error,
    synthesize_lowband,
)
from .lpc import AnalysisConfig, LpcModel, analysis_filter, de_emphasis, synthesis_filter
from .predictors import (
    ModelBundle,
    Predictor,
    TrainSchedule,
    fit_codebook,
    fit_mlp_checked,
    fit_regression,
    residual_vq_decode,
    residual_vq_encode,
    residual_vq_train,
)
from .spectrum import (
    DB_PER_LOG_POWER,
    HIGH_SLICE,
    SpectralEnvelope,
    aggregate_distortion,
    envelope_to_lpc,
    high_segment_distortion,
)

log = logging.getLogger(__name__)

PREDICTOR_KINDS = ("mlp", "codebook", "regression")
LOW_DB = 2 * DB_PER_LOG_POWER     # natural-log amplitude -> dB


@dataclass
class PipelineConfig:
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    predictor: str = "mlp"              # high-band engine used by train
    low_predictor: str = "mlp"          # mlp or regression
    hidden: tuple = (30, 30)
    low_hidden: tuple = (20,)
    codebook_bits: int = 8
    residual_vq_bits: int = 0           # 0 disables envelope residual coding
    highband_attenuation_db: float = 6.0
    irs_inverse: bool = True
    inverse_half_order: int = 30
    irs_table: str | None = None
    model: str | None = None
    silence_gate: float = 1e-4
    seed: int = 0
    max_epochs: int = 500
    patience: int = 20
    batch_size: int = 32
    kappa: float = 1e-4                 # delta-bar-delta step-size increment
    workers: int = 1                    # file-level processes in train/evaluate

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.predictor not in PREDICTOR_KINDS:
            raise ConfigurationError(f"predictor must be one of {PREDICTOR_KINDS}")
        if self.low_predictor not in ("mlp", "regression"):
            raise ConfigurationError("low_predictor must be mlp or regression")
        if not 2 <= self.codebook_bits <= 11:
            raise ConfigurationError("codebook_bits must be in [2, 11] (4..2048 cells)")
        if self.residual_vq_bits and not 4 <= self.residual_vq_bits <= 12:
            raise ConfigurationError("residual_vq_bits must be 0 or in [4, 12]")
        if self.inverse_half_order < 1:
            raise ConfigurationError("inverse_half_order must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.silence_gate < 0:
            raise ConfigurationError("silence_gate must be >= 0")
        if self.irs_table is not None and not Path(self.irs_table).is_file():
            raise ConfigurationError(f"IRS table {self.irs_table} does not exist")

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(batch_size=self.batch_size, max_epochs=self.max_epochs,
                             patience=self.patience, kappa=self.kappa, seed=self.seed)

    def inverse_filter(self) -> FirFilter | None:
        if not self.irs_inverse:
            return None
        return design_inverse_irs(irs_modified_response(512, self.irs_table), self.inverse_half_order)

    def irs(self) -> FirFilter:
        return irs_filter(table_path=self.irs_table)


def _parse_value(raw: str, current):
    raw = raw.strip()
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(current, tuple):
        return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if raw.lower() in ("", "none"):
        return None
    return raw


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment.

    Keys are PipelineConfig or AnalysisConfig field names.
    """
    base = base or PipelineConfig()
    top = {f.name: getattr(base, f.name) for f in dataclasses.fields(base) if f.name != "analysis"}
    ana = dataclasses.asdict(base.analysis)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        target = top if key in top else ana if key in ana else None
        if target is None:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        current = target[key]
        if current is None:
            current = ""
        try:
            target[key] = _parse_value(raw, current)
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: {exc}") from exc
    try:
        return PipelineConfig(analysis=AnalysisConfig(**ana), **top)
    except PreconditionError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base)


# ---------------------------------------------------------------- latency

@dataclass(frozen=True)
class Stage:
    name: str
    lookahead: int     # samples at 16 kHz read past the block being produced


def latency_budget(cfg: PipelineConfig | None = None) -> dict:
    """Declared lookahead per stage along the two synthesis paths.

    Lookahead is counted from the last sample of the block being produced.
    The high band needs the next frame (smoothing) whose window extends
    (frame_len - hop)/2 past it; the excitation whitening and gain use only
    windows ending at the block; the post filters are linear-phase FIRs.
    The low band needs the next overlap-add frame and the final 200 Hz
    low-pass; its phases come from an older, already available frame of the
    200 Hz low-passed input and are advanced to the synthesis frame, so that
    filter adds nothing. The pass-through keeps only the telephone band,
    between the 200 Hz and 3500 Hz low-passes.
    """
    cfg = cfg or PipelineConfig()
    a = cfg.analysis
    bands = make_bandshape_filters()
    front = []
    if cfg.irs_inverse:
        front.append(Stage("inverse IRS (8 kHz FIR)", 2 * cfg.inverse_half_order))
    front.append(Stage("upsampling low-pass", 63))
    high = front + [
        Stage("analysis window", frame_offset(a)),
        Stage("envelope track smoothing", a.hop),
        Stage("excitation whitening and gain", 0),
        Stage("high-pass 3500 Hz", bands["highpass_3500"].group_delay),
        Stage("notch 3500-4500 Hz", bands["notch_3500_4500"].group_delay),
    ]
    low = front + [
        Stage("overlap-add frame", a.hop),
        Stage("residual-harmonic phases", 0),
        Stage("low-pass 200 Hz", bands["lowpass_200"].group_delay),
    ]
    passthrough = front + [Stage("band-pass 200-3500 Hz", max(bands["lowpass_200"].group_delay,
                                                              bands["lowpass_3500"].group_delay))]
    totals = {"high": sum(s.lookahead for s in high), "low": sum(s.lookahead for s in low),
              "pass": sum(s.lookahead for s in passthrough)}
    return {"high": high, "low": low, "pass": passthrough, "totals": totals, "total": max(totals.values()),
            "limit": 2 * a.frame_len}


# ---------------------------------------------------------------- extension

def _hold_nonfinite(rows: np.ndarray) -> np.ndarray:
    """Replace non-finite prediction rows by the previous frame's (zeros at the start)."""
    rows = np.array(rows, dtype=float)
    prev = np.zeros(rows.shape[1])
    for j in range(rows.shape[0]):
        if np.all(np.isfinite(rows[j])):
            prev = rows[j]
        else:
            log.warning("frame %d: non-finite prediction, reusing previous frame", j)
            rows[j] = prev
    return rows


def _block_models(track: FrameTrack, bundle: ModelBundle, order: int) -> list[LpcModel]:
    cep = smooth_envelope_track(_hold_nonfinite(bundle.high.predict(track.features)))
    models, prev = [], LpcModel.zero(order)
    for env, c in zip(track.tel_env, cep):
        try:
            prev = envelope_to_lpc(assemble_wideband_envelope(SpectralEnvelope(env), c), order)
        except InstabilityError:
            log.debug("wideband envelope unstable; keeping previous model")
        models.append(prev)
    return models


def synthesize_highband(track: FrameTrack, bundle: ModelBundle, cfg: PipelineConfig) -> np.ndarray:
    a = track.cfg
    hop = a.hop
    n = track.x16.size
    models = _block_models(track, bundle, a.lpc_order_wide)
    silent = track.silent(cfg.silence_gate)
    r = np.zeros(n)
    state = None
    for j, m in enumerate(models):
        s, e = j * hop, min((j + 1) * hop, n)
        r[s:e], state = analysis_filter(track.p16[s:e], m, state)
    exc = extend_excitation_stream(r, a)
    y = np.zeros(n)
    state = None
    for j, m in enumerate(models):
        s, e = j * hop, min((j + 1) * hop, n)
        block = np.zeros(e - s) if silent[j] else exc[s:e]
        try:
            y[s:e], state = synthesis_filter(block, m, state)
        except InstabilityError:
            y[s:e], state = 0.0, None
    y = de_emphasis(y, a.preemph_alpha)
    return postprocess_highband(y, cfg.highband_attenuation_db)


def synthesize_lowpart(track: FrameTrack, bundle: ModelBundle, cfg: PipelineConfig) -> np.ndarray:
    a = track.cfg
    hop, L = a.hop, a.frame_len
    n = track.x16.size
    lp = make_bandshape_filters()["lowpass_200"]
    xl = np.concatenate([np.zeros(frame_offset(a)), fir_filter(track.x16, lp, delay_compensate=True),
                         np.zeros(L + hop)])
    omegas = track.omega0
    silent = track.silent(cfg.silence_gate)
    pred = _hold_nonfinite(bundle.low.predict(track.features))
    amps = np.array([denormalize_amplitudes(t, rms=r) for t, r in zip(pred, track.exc_rms)]).reshape(-1, 2)
    lag = 2   # phases come from the frame two hops back
    frames = []
    for j in range(track.n_frames):
        phases = np.full(2, np.nan)
        src = j - lag
        if src >= 0 and not silent[src]:
            fit = extract_residual_harmonics(xl[src * hop:src * hop + L], omegas[src])
            for k in range(2):
                if fit.reliable[k]:
                    phases[k] = advance_phase(fit.phases[k], k + 1, omegas[src], omegas[j], lag * hop)
        A = np.zeros(2) if silent[j] else amps[j]
        frames.append(LowbandFrame(omegas[j], A, phases))
    return synthesize_lowband(frames, hop, L, length=n, start=-frame_offset(a))


def telephone_band(x16: np.ndarray) -> np.ndarray:
    """Linear-phase 200-3500 Hz band-pass: difference of the two low-passes."""
    bands = make_bandshape_filters()
    return (fir_filter(x16, bands["lowpass_3500"], delay_compensate=True)
            - fir_filter(x16, bands["lowpass_200"], delay_compensate=True))


def extend(x8: SignalBuffer, bundle: ModelBundle, cfg: PipelineConfig | None = None) -> SignalBuffer:
    """8 kHz telephone speech -> 16 kHz extended speech.

    The output is the upsampled input restricted to the telephone band
    plus the post-processed high band and the synthesized low band. The
    inverse IRS filter is unconstrained outside that band, so the
    pass-through is band-limited to keep its out-of-band gain out of the
    output.
    """
    cfg = cfg or PipelineConfig()
    if x8.sample_rate != 8000:
        raise PreconditionError(f"extend expects 8000 Hz input, got {x8.sample_rate}")
    if len(x8) == 0:
        return SignalBuffer(np.zeros(0), 16000)
    x16 = prepare_input(x8.samples, cfg.inverse_filter())
    track = analyze(x16, bundle.analysis)
    out = telephone_band(x16) + synthesize_highband(track, bundle, cfg) + synthesize_lowpart(track, bundle, cfg)
    return SignalBuffer(out, 16000)


def extend_file(in_path, out_path, bundle: ModelBundle, cfg: PipelineConfig | None = None) -> SignalBuffer:
    sig = read_wav(in_path)
    if sig.sample_rate != 8000:
        raise FormatError(f"{in_path}: expected an 8000 Hz file, got {sig.sample_rate} Hz")
    out = extend(sig, bundle, cfg)
    write_wav(out_path, out)
    return out


# ---------------------------------------------------------------- training data

@dataclass
class FrameData:
    features: np.ndarray
    high: np.ndarray          # high-band DCT targets
    low: np.ndarray           # normalized log-amplitude targets
    wide_high: np.ndarray     # (n, 40) true high segment on the telephone level
    source: list              # (file, frame index) per row

    def __len__(self):
        return self.features.shape[0]

    def subset(self, idx) -> FrameData:
        return FrameData(self.features[idx], self.high[idx], self.low[idx], self.wide_high[idx],
                         [self.source[i] for i in np.arange(len(self))[idx]])


def frame_data(s16, cfg: PipelineConfig, name: str = "", inverse: FirFilter | None = None,
               irs: FirFilter | None = None) -> FrameData:
    """Feature/target rows of one wideband utterance, silent frames dropped."""
    s16 = np.asarray(s16, dtype=float)
    a = cfg.analysis
    x16 = prepare_input(simulate_telephone(s16, irs), inverse)
    track = analyze(x16, a)
    W = wideband_envelopes(s16, a)
    H, offsets = high_targets(W, track.tel_env)
    lo, _ = low_targets(s16, track)
    keep = ~track.silent(cfg.silence_gate)
    seg = (W[:, HIGH_SLICE] - offsets[:, None])[keep]
    idx = np.flatnonzero(keep)
    return FrameData(track.features[keep], H[keep], lo[keep], seg, [(name, int(j)) for j in idx])


def _corpus_files(corpus_dir) -> list[Path]:
    d = Path(corpus_dir)
    if not d.is_dir():
        raise FormatError(f"corpus directory {d} does not exist")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() == ".wav")
    if not files:
        raise FormatError(f"no .wav files in {d}")
    return files


def _file_rows(args) -> FrameData:
    path, cfg, inverse, irs = args
    sig = read_wav(path)
    if sig.sample_rate != 16000:
        raise FormatError(f"{path}: training audio must be 16000 Hz, got {sig.sample_rate}")
    return frame_data(sig.samples, cfg, path.name, inverse, irs)


def corpus_data(corpus_dir, cfg: PipelineConfig) -> FrameData:
    """Rows of every file, in file-name order; files run in parallel if ``workers`` > 1."""
    jobs = [(p, cfg, cfg.inverse_filter(), cfg.irs()) for p in _corpus_files(corpus_dir)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_file_rows, jobs))
    else:
        parts = [_file_rows(j) for j in jobs]
    return concat_data(parts)


def concat_data(parts) -> FrameData:
    return FrameData(np.vstack([p.features for p in parts]), np.vstack([p.high for p in parts]),
                     np.vstack([p.low for p in parts]), np.vstack([p.wide_high for p in parts]),
                     [s for p in parts for s in p.source])


# ---------------------------------------------------------------- training

def high_sd(predictor: Predictor, data: FrameData, residual_vq=None) -> np.ndarray:
    """Per-frame SD (3500-8000 Hz) of predicted high segments."""
    pred = predictor.predict(data.features)
    if residual_vq is not None:
        pred = pred + residual_vq_decode(residual_vq, residual_vq_encode(residual_vq, data.high - pred))
    return np.array([high_segment_distortion(seg, c) for seg, c in zip(data.wide_high, pred)])


def low_err_db(predictor: Predictor, data: FrameData) -> np.ndarray:
    pred = predictor.predict(data.features)
    return np.array([LOW_DB * lowband_error(p, t) for p, t in zip(pred, data.low)])


def train_models(data: FrameData, cfg: PipelineConfig) -> tuple[ModelBundle, dict]:
    """Fit all high-band engines and the low-band predictor on prepared rows.

    Regression, codebook and MLP are always trained and reported; the one
    named by ``cfg.predictor`` goes into the bundle.
    """
    if len(data) < 50:
        raise TrainingError(f"only {len(data)} active frames; need at least 50")
    report = {"frames": len(data)}
    reg = fit_regression(data.features, data.high)
    report["high_regression_sd"] = aggregate_distortion(high_sd(reg, data))
    book = fit_codebook(data.features, data.high, 2 ** cfg.codebook_bits, seed=cfg.seed)
    report["high_codebook_sd"] = aggregate_distortion(high_sd(book, data))
    sel = fit_mlp_checked(data.features, data.high, cfg.hidden, cfg.schedule(), reference=reg)
    report["high_mlp_rejected"] = sel.rejected
    report["high_mlp_attempts"] = sel.attempts
    report["high_mlp_sd"] = aggregate_distortion(high_sd(sel.predictor, data))
    high = {"regression": reg, "codebook": book, "mlp": sel.predictor}[cfg.predictor]
    low_reg = fit_regression(data.features, data.low)
    report["low_regression_db"] = aggregate_distortion(low_err_db(low_reg, data))
    if cfg.low_predictor == "regression":
        low = low_reg
    else:
        lsel = fit_mlp_checked(data.features, data.low, cfg.low_hidden, cfg.schedule(), reference=low_reg)
        low = lsel.predictor
        report["low_mlp_rejected"] = lsel.rejected
        report["low_mlp_db"] = aggregate_distortion(low_err_db(low, data))
    vq = None
    if cfg.residual_vq_bits:
        resid = data.high - high.predict(data.features)
        vq = residual_vq_train(resid, cfg.residual_vq_bits, seed=cfg.seed)
        report["high_vq_sd"] = aggregate_distortion(high_sd(high, data, vq))
    report["high_kind"] = high.kind
    report["low_kind"] = low.kind
    meta = {"report": report, "irs_inverse": cfg.irs_inverse, "seed": cfg.seed}
    return ModelBundle(high, low, cfg.analysis, vq, meta), report


def report_text(report: dict) -> str:
    return "".join(f"{k:<20} {v:.4f}\n" if isinstance(v, float) else f"{k:<20} {v}\n"
                   for k, v in report.items())


def train(corpus_dir, cfg: PipelineConfig | None = None) -> tuple[ModelBundle, dict]:
    cfg = cfg or PipelineConfig()
    return train_models(corpus_data(corpus_dir, cfg), cfg)


# ---------------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    rows: list                 # (file, frame, sd_high_db, sd_high_vq_db or nan, low_err_db)
    high_sd: float
    high_vq_sd: float | None
    low_err_db: float
    frame_count: int
    seconds: float

    def text(self) -> str:
        lines = [
            f"frames            {self.frame_count}",
            f"high-band SD      {self.high_sd:.4f} dB (3500-8000 Hz, quadrature mean)",
        ]
        if self.high_vq_sd is not None:
            lines.append(f"high-band SD + VQ {self.high_vq_sd:.4f} dB")
        lines += [f"low-band error    {self.low_err_db:.4f} dB (RMS log-amplitude, quadrature mean)",
                  f"time              {self.seconds:.2f} s"]
        return "\n".join(lines) + "\n"


def evaluate_data(data: FrameData, bundle: ModelBundle, seconds: float = 0.0) -> EvalReport:
    if len(data) == 0:
        raise PreconditionError("no active frames to evaluate")
    sd = high_sd(bundle.high, data)
    vq = None if bundle.residual_vq is None else high_sd(bundle.high, data, bundle.residual_vq)
    low = low_err_db(bundle.low, data)
    rows = [(f, j, float(sd[i]), float(vq[i]) if vq is not None else math.nan, float(low[i]))
            for i, (f, j) in enumerate(data.source)]
    return EvalReport(rows, aggregate_distortion(sd), None if vq is None else aggregate_distortion(vq),
                      aggregate_distortion(low), len(data), seconds)


def evaluate(corpus_dir, bundle: ModelBundle, cfg: PipelineConfig | None = None) -> EvalReport:
    cfg = cfg or PipelineConfig()
    cfg = dataclasses.replace(cfg, analysis=bundle.analysis)
    t0 = time.perf_counter()
    data = corpus_data(corpus_dir, cfg)
    rep = evaluate_data(data, bundle)
    rep.seconds = time.perf_counter() - t0
    return rep


def write_report(report: EvalReport, path) -> None:
    Path(path).write_text(report.text(), encoding="utf-8")


def write_frames_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "frame", "sd_high_db", "sd_high_vq_db", "low_err_db"])
        for f, j, a, b, c in report.rows:
            w.writerow([f, j, repr(a), "" if math.isnan(b) else repr(b), repr(c)])

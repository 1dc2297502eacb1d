"""Labeled synthetic micro-PMU stream generator.

Produces the 12 phasor channels (three-phase voltage/current magnitude
and angle) at the stream frame rate, with slow sinusoidal drift and
measurement noise on top of nominal levels, then plants events drawn
from a catalog of 16 signature archetypes.  Each archetype has a fixed
detection-vector mask (which of the nine derived features it touches)
and a distinctive waveshape, so downstream clustering has real structure
to recover.  Super-events plant one trigger followed by a burst of
follower events.

All planted events revert to the baseline inside their labeled extent;
persistent steady-state shifts would turn the global feature statistics
into a random walk and destroy standardization.  Steady-state deltas are
therefore encoded as a plateau within the extent.

Sample indices in labels are [start, end) half-open.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from gridsift.config import SynthConfig

V_NOM = 7200.0          # line-to-neutral volts
I_NOM = 15.0            # amps
PF_NOM = 0.95
DRIFT_FRAC = 0.002      # slow drift amplitude relative to level
NOISE_FRAC = 0.0005     # measurement noise relative to level
ANGLE_NOISE = 3.0e-4    # rad
PHASE_OFFSETS = (0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0)

CHANNELS = (
    "va_mag", "va_ang", "vb_mag", "vb_ang", "vc_mag", "vc_ang",
    "ia_mag", "ia_ang", "ib_mag", "ib_ang", "ic_mag", "ic_ang",
)

LABELS_FORMAT = "gridsift-labels"
LABELS_VERSION = 1

SUPER_TRIGGER = 6
SUPER_FOLLOWER = 10
SUPER_GAP_S = 60.0
SUPER_FOLLOWERS = 100


@dataclass(frozen=True)
class SignatureSpec:
    """One archetype: identity, category, feature mask, and duration range."""

    archetype: int
    name: str
    category: str
    vector: tuple[int, ...]     # 9 bits: va vb vc ia ib ic pfa pfb pfc
    dur_lo: int                 # samples
    dur_hi: int


_CAT_III = (0, 0, 0, 1, 1, 1, 1, 1, 1)
_CAT_I = (1, 1, 1, 1, 1, 1, 1, 1, 1)
_CAT_II = (1, 1, 1, 0, 0, 0, 0, 0, 0)

_CATALOG = (
    SignatureSpec(1, "inrush", "III", _CAT_III, 90, 140),
    SignatureSpec(2, "plateau", "III", _CAT_III, 300, 420),
    SignatureSpec(3, "cap_on", "I", _CAT_I, 150, 240),
    SignatureSpec(4, "cap_off", "I", _CAT_I, 180, 300),
    SignatureSpec(5, "two_step", "III", _CAT_III, 360, 480),
    SignatureSpec(6, "osc", "III", _CAT_III, 420, 540),
    SignatureSpec(7, "tap_change", "II", _CAT_II, 180, 240),
    SignatureSpec(8, "v_plateau", "II", _CAT_II, 300, 420),
    SignatureSpec(9, "v_hf_osc", "II", _CAT_II, 180, 300),
    SignatureSpec(10, "i_pf_step", "III", _CAT_III, 240, 360),
    SignatureSpec(11, "unbal_a", "IV", (0, 0, 0, 1, 0, 0, 1, 0, 0), 100, 170),
    SignatureSpec(12, "unbal_ab", "IV", (0, 0, 0, 1, 1, 0, 1, 1, 0), 240, 360),
    SignatureSpec(13, "unbal_bc", "IV", (0, 0, 0, 0, 1, 1, 0, 1, 1), 180, 260),
    SignatureSpec(14, "pf_all", "V", (0, 0, 0, 0, 0, 0, 1, 1, 1), 240, 360),
    SignatureSpec(15, "pf_ab", "V", (0, 0, 0, 0, 0, 0, 1, 1, 0), 140, 240),
    SignatureSpec(16, "pf_bc", "V", (0, 0, 0, 0, 0, 0, 0, 1, 1), 300, 420),
)


def archetype_catalog() -> tuple[SignatureSpec, ...]:
    """All sixteen planted signature archetypes."""
    return _CATALOG


def spec_for(archetype: int) -> SignatureSpec:
    return _CATALOG[archetype - 1]


@dataclass
class EventLabel:
    """Ground-truth extent of one planted event."""

    event_id: int
    archetype: int
    start: int                  # sample index, inclusive
    end: int                    # sample index, exclusive
    super_id: int | None = None
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------- envelopes

def _ramp_hold_ramp(dur: int, rise: int, fall: int) -> np.ndarray:
    """0 -> 1 -> 0 trapezoid over dur samples."""
    env = np.ones(dur)
    rise = max(1, min(rise, dur))
    fall = max(1, min(fall, dur - 1))
    env[:rise] = np.linspace(0.0, 1.0, rise, endpoint=False)
    env[dur - fall:] = np.linspace(1.0, 0.0, fall + 1)[1:]
    return env

def _spike(dur: int, rise: int, tau: float) -> np.ndarray:
    """Fast rise then exponential decay; pinnacle width stays tight."""
    t = np.arange(dur, dtype=np.float64)
    env = np.exp(-(t - rise) / tau)
    env[: rise + 1] = np.linspace(0.0, 1.0, rise + 1)
    return env

def _damped_sine(dur: int, freq: float, zeta: float, fps: float) -> np.ndarray:
    """Unit damped oscillation: exp(-zeta*wn*t) sin(wd*t)."""
    t = np.arange(dur, dtype=np.float64) / fps
    wn = 2.0 * math.pi * freq / math.sqrt(1.0 - zeta * zeta)
    wd = wn * math.sqrt(1.0 - zeta * zeta)
    return np.exp(-zeta * wn * t) * np.sin(wd * t)

def _smoothstep(dur: int, rise: int) -> np.ndarray:
    """S-curve 0 -> 1 over rise samples, then hold."""
    x = np.clip(np.arange(dur, dtype=np.float64) / max(rise, 1), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)

def _raised_cos(dur: int) -> np.ndarray:
    """Smooth 0 -> 1 -> 0 bump over the whole extent."""
    return 0.5 * (1.0 - np.cos(2.0 * math.pi * np.arange(dur) / max(dur - 1, 1)))


# ------------------------------------------------------------ delta builders
#
# Each builder returns (dV (3, dur), dI (3, dur), dPF (3, dur), params).
# dPF is applied through the current-angle channel so the derived power
# factor moves by that amount while |I| stays untouched.

def _zeros(dur):
    return np.zeros((3, dur)), np.zeros((3, dur)), np.zeros((3, dur))

def _build_inrush(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    # two amplitude modes: the sub-cluster structure within the category
    if rng.random() < 0.5:
        i_inr = rng.uniform(8.0, 16.0)
        mode = "low"
    else:
        i_inr = rng.uniform(25.0, 45.0)
        mode = "high"
    delta_iss = rng.uniform(0.5, 2.5)
    rise = int(rng.integers(2, 4))
    spike = _spike(dur, rise, tau=2.5)
    settle = _ramp_hold_ramp(dur, rise=max(2, dur // 8), fall=max(4, dur // 6))
    pf_dip = rng.uniform(0.25, 0.45)
    for p in range(3):
        jit = rng.uniform(0.92, 1.08)
        dI[p] = jit * (i_inr * spike + delta_iss * settle)
        dPF[p] = -pf_dip * jit * _spike(dur, rise, tau=dur / 6.0)
    return dV, dI, dPF, {"i_inr": i_inr, "delta_iss": delta_iss, "mode": mode}

def _build_plateau(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    delta_iss = rng.uniform(1.0, 2.0)
    env = _ramp_hold_ramp(dur, rise=max(6, dur // 10), fall=max(6, dur // 10))
    pf_amp = rng.uniform(0.10, 0.20)
    for p in range(3):
        jit = rng.uniform(0.95, 1.05)
        dI[p] = jit * delta_iss * env
        dPF[p] = -jit * pf_amp * env
    return dV, dI, dPF, {"delta_iss": delta_iss}

def _build_cap_on(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    dv = rng.uniform(0.010, 0.016) * V_NOM
    i_kick = rng.uniform(1.5, 3.0)
    pf_up = rng.uniform(0.025, 0.045)      # headroom above 0.95 is small
    pf_dip = rng.uniform(0.15, 0.25)       # inrush distortion, downward
    env = _ramp_hold_ramp(dur, rise=3, fall=max(4, dur // 10))
    kick = _spike(dur, 2, tau=6.0)
    # distortion outlasts the current kick: pf recovers as inrush decays
    sink = np.exp(-np.arange(dur, dtype=np.float64) / (dur / 5.0))
    for p in range(3):
        jit = rng.uniform(0.95, 1.05)
        dV[p] = jit * dv * env
        dI[p] = jit * i_kick * kick
        dPF[p] = jit * (pf_up * env - pf_dip * sink)
    return dV, dI, dPF, {"dv": dv, "i_kick": i_kick}

def _build_cap_off(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    dv = rng.uniform(0.010, 0.016) * V_NOM
    a_over = rng.uniform(1.2, 2.4)
    env = _ramp_hold_ramp(dur, rise=3, fall=max(4, dur // 10))
    # long overshoot on phase A, undershoot on phase B, short blip on C
    t = np.arange(dur, dtype=np.float64)
    slow = np.exp(-t / (dur / 2.5))
    dV[0] = -dv * env
    dV[1] = -dv * env * rng.uniform(0.95, 1.05)
    dV[2] = -dv * env * rng.uniform(0.95, 1.05)
    dI[0] = a_over * slow
    dI[1] = -0.6 * a_over * np.exp(-t / (dur / 5.0))
    dI[2] = 0.35 * a_over * _spike(dur, 2, tau=8.0)
    sag = rng.uniform(0.03, 0.05)
    dip = rng.uniform(0.10, 0.18)
    kick = _spike(dur, 2, tau=6.0)
    for p in range(3):
        dPF[p] = -rng.uniform(0.95, 1.05) * (sag * env + dip * kick)
    return dV, dI, dPF, {"dv": dv, "a_over": a_over}

def _build_two_step(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    amp = rng.uniform(1.0, 2.2)
    split = int(dur * 0.45)
    env = np.zeros(dur)
    env[:split] = 0.55 * _smoothstep(split, 6)
    env[split:] = 0.55 + 0.45 * _smoothstep(dur - split, 6)
    env *= _ramp_hold_ramp(dur, rise=1, fall=max(6, dur // 10))
    pf_amp = rng.uniform(0.12, 0.22)
    for p in range(3):
        jit = rng.uniform(0.95, 1.05)
        dI[p] = jit * amp * env
        dPF[p] = -jit * pf_amp * env
    return dV, dI, dPF, {"amp": amp}

def _build_osc(dur, rng, fps, freq=5.2, zeta=0.0297):
    dV, dI, dPF = _zeros(dur)
    amp = rng.uniform(1.0, 3.0)
    osc = _damped_sine(dur, freq, zeta, fps)
    step = 0.3 * amp * _smoothstep(dur, 5) * _ramp_hold_ramp(dur, 1, max(6, dur // 8))
    pf_swing = 0.4
    for p in range(3):
        jit = rng.uniform(0.95, 1.05)
        dI[p] = jit * (amp * osc + step)
        dPF[p] = -jit * pf_swing * np.abs(osc) * np.exp(
            -np.arange(dur) / (dur / 3.0))
    return dV, dI, dPF, {"amp": amp, "freq": freq, "zeta": zeta}

def _build_tap_change(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    dv = rng.uniform(0.010, 0.018) * V_NOM * rng.choice([-1.0, 1.0])
    env = _ramp_hold_ramp(dur, rise=3, fall=3)
    blip = 0.15 * _damped_sine(dur, 12.0, 0.15, fps)
    for p in range(3):
        jit = rng.uniform(0.97, 1.03)
        dV[p] = jit * dv * (env + blip)
    return dV, dI, dPF, {"dv": dv}

def _build_v_plateau(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    dv = rng.uniform(0.010, 0.016) * V_NOM
    env = _ramp_hold_ramp(dur, rise=max(20, dur // 6), fall=max(20, dur // 6))
    for p in range(3):
        dV[p] = rng.uniform(0.95, 1.05) * dv * env
    return dV, dI, dPF, {"dv": dv}

def _build_v_hf_osc(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    dv = rng.uniform(0.007, 0.012) * V_NOM
    osc = _damped_sine(dur, 17.0, 0.05, fps)
    for p in range(3):
        dV[p] = rng.uniform(0.9, 1.1) * dv * osc
    return dV, dI, dPF, {"dv": dv}

def _build_i_pf_step(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    amp = rng.uniform(0.9, 1.8)
    env = _smoothstep(dur, max(12, dur // 5)) * _ramp_hold_ramp(
        dur, rise=1, fall=max(8, dur // 7))
    pf_amp = rng.uniform(0.15, 0.30)
    for p in range(3):
        jit = rng.uniform(0.95, 1.05)
        dI[p] = jit * amp * env
        dPF[p] = -jit * pf_amp * env
    return dV, dI, dPF, {"amp": amp}

def _build_unbal_a(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    amp = rng.uniform(0.8, 1.8)
    env = _spike(dur, 3, tau=dur / 4.0)
    dI[0] = amp * env
    dPF[0] = -rng.uniform(0.10, 0.20) * env
    return dV, dI, dPF, {"amp": amp}

def _build_unbal_ab(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    amp = rng.uniform(0.8, 1.8)
    env = _ramp_hold_ramp(dur, rise=max(8, dur // 8), fall=max(8, dur // 8))
    pf_amp = rng.uniform(0.10, 0.20)
    for p in (0, 1):
        jit = rng.uniform(0.9, 1.1)
        dI[p] = jit * amp * env
        dPF[p] = -jit * pf_amp * env
    return dV, dI, dPF, {"amp": amp}

def _build_unbal_bc(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    amp = rng.uniform(0.8, 1.8)
    half = dur // 2
    env = np.zeros(dur)
    env[:half] = _raised_cos(half)
    env[half:] = 0.7 * _raised_cos(dur - half)
    pf_amp = rng.uniform(0.10, 0.20)
    for p in (1, 2):
        jit = rng.uniform(0.9, 1.1)
        dI[p] = jit * amp * env
        dPF[p] = -jit * pf_amp * env
    return dV, dI, dPF, {"amp": amp}

def _build_pf_all(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    amp = rng.uniform(0.08, 0.20)
    env = _raised_cos(dur)
    for p in range(3):
        dPF[p] = -rng.uniform(0.9, 1.1) * amp * env
    return dV, dI, dPF, {"amp": amp}

def _build_pf_ab(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    amp = rng.uniform(0.08, 0.20)
    env = _ramp_hold_ramp(dur, rise=3, fall=3)
    for p in (0, 1):
        dPF[p] = -rng.uniform(0.9, 1.1) * amp * env
    return dV, dI, dPF, {"amp": amp}

def _build_pf_bc(dur, rng, fps):
    dV, dI, dPF = _zeros(dur)
    amp = rng.uniform(0.08, 0.20)
    wob = _damped_sine(dur, 1.5, 0.12, fps)
    # oscillatory but biased below zero: no headroom above pf 0.95
    shape = 0.35 * wob - 0.65 * np.abs(wob)
    for p in (1, 2):
        dPF[p] = rng.uniform(0.9, 1.1) * amp * shape
    return dV, dI, dPF, {"amp": amp}


_BUILDERS = {
    1: _build_inrush, 2: _build_plateau, 3: _build_cap_on, 4: _build_cap_off,
    5: _build_two_step, 6: _build_osc, 7: _build_tap_change,
    8: _build_v_plateau, 9: _build_v_hf_osc, 10: _build_i_pf_step,
    11: _build_unbal_a, 12: _build_unbal_ab, 13: _build_unbal_bc,
    14: _build_pf_all, 15: _build_pf_ab, 16: _build_pf_bc,
}


# --------------------------------------------------------------- the stream

def _drift(n: int, fps: float, rng: np.random.Generator) -> np.ndarray:
    """Slow unit-amplitude wander: three sinusoids with 3-20 min periods.

    Periods stay well under an hour so that any hour of stream spans
    several full cycles; a detector calibrated on one stretch then sees
    the same ambient level range on any other stretch.
    """
    t = np.arange(n, dtype=np.float64)
    out = np.zeros(n)
    weights = rng.uniform(0.4, 1.0, 3)
    weights /= weights.sum()
    for w in weights:
        period_s = rng.uniform(3.0, 20.0) * 60.0
        phase = rng.uniform(0.0, 2.0 * math.pi)
        out += w * np.sin(2.0 * math.pi * t / (period_s * fps) + phase)
    return out


def _baseline(n: int, fps: float, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Nominal three-phase channels with drift and measurement noise."""
    ch: dict[str, np.ndarray] = {}
    drift_v = _drift(n, fps, rng)
    drift_i = _drift(n, fps, rng)
    drift_gap = _drift(n, fps, rng)
    gap0 = math.acos(PF_NOM)
    for p, tag in enumerate("abc"):
        scale_v = rng.uniform(0.9, 1.1)
        scale_i = rng.uniform(0.9, 1.1)
        ch[f"v{tag}_mag"] = V_NOM * (
            1.0 + DRIFT_FRAC * scale_v * drift_v
            + NOISE_FRAC * rng.standard_normal(n))
        ch[f"i{tag}_mag"] = I_NOM * (
            1.0 + DRIFT_FRAC * scale_i * drift_i
            + NOISE_FRAC * rng.standard_normal(n))
        v_ang = (PHASE_OFFSETS[p]
                 + 0.002 * _drift(n, fps, rng)
                 + ANGLE_NOISE * rng.standard_normal(n))
        gap = gap0 + 0.004 * drift_gap + ANGLE_NOISE * rng.standard_normal(n)
        ch[f"v{tag}_ang"] = v_ang
        ch[f"i{tag}_ang"] = v_ang - gap
    return ch


def _apply_event(ch: dict[str, np.ndarray], start: int, dV, dI, dPF) -> None:
    """Add channel deltas; power-factor deltas go through the current angle."""
    dur = dV.shape[1]
    sl = slice(start, start + dur)
    for p, tag in enumerate("abc"):
        if np.any(dV[p]):
            ch[f"v{tag}_mag"][sl] += dV[p]
        if np.any(dI[p]):
            ch[f"i{tag}_mag"][sl] += dI[p]
        if np.any(dPF[p]):
            base_gap = ch[f"v{tag}_ang"][sl] - ch[f"i{tag}_ang"][sl]
            pf_now = np.cos(base_gap)
            target = np.clip(pf_now + dPF[p], -0.999, 0.999)
            ch[f"i{tag}_ang"][sl] = ch[f"v{tag}_ang"][sl] - np.arccos(target)


def _place_events(n: int, durations: list[int], min_gap: int, margin: int,
                  rng: np.random.Generator) -> list[int]:
    """Uniform random non-overlapping starts with min_gap between extents.

    Blocks keep their list order left to right; the integer offset makes
    the gap guarantee exact despite float cut positions.
    """
    k = len(durations)
    slack = n - 2 * margin - sum(durations) - (k - 1) * min_gap
    if slack < 0:
        raise ValueError(
            f"stream of {n} samples cannot hold {k} events "
            f"(need {sum(durations) + (k - 1) * min_gap + 2 * margin})")
    cuts = np.sort(rng.uniform(0.0, slack, k))
    starts = []
    offset = margin
    for j in range(k):
        starts.append(offset + int(cuts[j]))
        offset += durations[j] + min_gap
    return starts


def generate_stream(cfg: SynthConfig, seed: int):
    """Build one labeled stream.

    Returns (ts, channels, labels): int64 microsecond timestamps, a dict
    of 12 channel arrays, and the planted EventLabels sorted by start.
    """
    fps = cfg.fps
    n = int(round(cfg.duration_min * 60.0 * fps))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ch = _baseline(n, fps, rng)

    n_events = int(round(cfg.events_per_hour * cfg.duration_min / 60.0))
    archetypes = [(i % 16) + 1 for i in range(n_events)]
    rng.shuffle(archetypes)
    blocks = [
        (a, int(rng.integers(spec_for(a).dur_lo, spec_for(a).dur_hi + 1)))
        for a in archetypes
    ]

    margin = 400
    super_idx = None
    if cfg.include_super_event:
        # trigger + quiet gap + follower burst, with settling room at the end
        span_len = int(spec_for(SUPER_TRIGGER).dur_hi + SUPER_GAP_S * fps
                       + SUPER_FOLLOWERS * 74 + 400)
        super_idx = int(rng.integers(0, len(blocks) + 1))
        blocks.insert(super_idx, (0, span_len))

    starts = _place_events(n, [d for _, d in blocks], cfg.min_gap, margin, rng)

    labels: list[EventLabel] = []
    next_id = 0
    super_start = None
    for (a, dur), start in zip(blocks, starts):
        if a == 0:
            super_start = start
            continue
        dV, dI, dPF, params = _BUILDERS[a](dur, rng, fps)
        _apply_event(ch, start, dV, dI, dPF)
        labels.append(EventLabel(next_id, a, start, start + dur, None, params))
        next_id += 1

    if super_start is not None:
        labels.extend(generate_super_event(
            ch, super_start, rng, fps, next_id=next_id, super_id=0))

    labels.sort(key=lambda e: (e.start, e.event_id))
    ts = np.round(np.arange(n, dtype=np.float64) * (1e6 / fps)).astype(np.int64)
    return ts, ch, labels


def generate_super_event(ch: dict[str, np.ndarray], start: int,
                         rng: np.random.Generator, fps: float,
                         trigger: int = SUPER_TRIGGER,
                         follower: int = SUPER_FOLLOWER,
                         gap_s: float = SUPER_GAP_S,
                         count: int = SUPER_FOLLOWERS,
                         next_id: int = 0, super_id: int = 0) -> list[EventLabel]:
    """Plant one trigger and a growing burst of followers.

    After gap_s of quiet the followers fire in quick succession with
    linearly growing amplitude.  Follower extents are compressed (well
    below the archetype's catalog range) so the whole burst fits inside
    about a minute.
    """
    labels = []
    trig_spec = spec_for(trigger)
    trig_dur = int(rng.integers(trig_spec.dur_lo, trig_spec.dur_hi + 1))
    dV, dI, dPF, params = _BUILDERS[trigger](trig_dur, rng, fps)
    _apply_event(ch, start, dV, dI, dPF)
    labels.append(EventLabel(next_id, trigger, start, start + trig_dur,
                             super_id, params))
    next_id += 1

    pos = start + trig_dur + int(round(gap_s * fps))
    for k in range(count):
        dur = int(rng.integers(40, 56))
        grow = 1.0 + 1.5 * k / max(count - 1, 1)
        dV, dI, dPF, params = _BUILDERS[follower](dur, rng, fps)
        dV *= grow
        dI *= grow
        dPF *= grow
        params["grow"] = grow
        _apply_event(ch, pos, dV, dI, dPF)
        labels.append(EventLabel(next_id, follower, pos, pos + dur,
                                 super_id, params))
        next_id += 1
        pos += dur + int(rng.integers(8, 18))
    return labels


# ------------------------------------------------------------------ emission

def to_dataframe(ts: np.ndarray, ch: dict[str, np.ndarray]) -> pd.DataFrame:
    cols = {"ts_us": ts}
    for name in CHANNELS:
        cols[name] = ch[name]
    return pd.DataFrame(cols)


def save_labels(path, labels: list[EventLabel], cfg: SynthConfig, seed: int) -> None:
    doc = {
        "format": LABELS_FORMAT,
        "version": LABELS_VERSION,
        "fps": cfg.fps,
        "seed": seed,
        "n_events": len(labels),
        "events": [dataclasses.asdict(e) for e in labels],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_labels(path) -> list[EventLabel]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != LABELS_FORMAT:
        raise ValueError(
            f"labels file {path}: format {doc.get('format')!r}, "
            f"expected {LABELS_FORMAT!r}")
    if doc.get("version") != LABELS_VERSION:
        raise ValueError(
            f"labels file {path}: version {doc.get('version')}, "
            f"expected {LABELS_VERSION}")
    return [EventLabel(**e) for e in doc["events"]]


def write_corpus(outdir, cfg: SynthConfig, seed: int):
    """Generate and write data.csv, schema.yaml, labels.json.

    Returns (csv_path, schema_path, labels_path).
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    ts, ch, labels = generate_stream(cfg, seed)
    df = to_dataframe(ts, ch)
    csv_path = out / "data.csv"
    df.to_csv(csv_path, index=False, float_format="%.6f")
    schema = {
        "timestamp": "ts_us",
        "v_mag": ["va_mag", "vb_mag", "vc_mag"],
        "v_ang": ["va_ang", "vb_ang", "vc_ang"],
        "i_mag": ["ia_mag", "ib_mag", "ic_mag"],
        "i_ang": ["ia_ang", "ib_ang", "ic_ang"],
        "angle_unit": "rad",
        "fps": cfg.fps,
    }
    schema_path = out / "schema.yaml"
    with open(schema_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(schema, fh, sort_keys=True)
    labels_path = out / "labels.json"
    save_labels(labels_path, labels, cfg, seed)
    return csv_path, schema_path, labels_path

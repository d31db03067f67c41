"""Synthetic training material and WAV file handling.

Sources stand in for speech at desk scale: each "speaker" is band-limited
filtered noise with speaker-specific formant-like band placement plus slow
amplitude modulation, normalized to unit RMS. Speakers draw their bands
from disjoint frequency regions so that different sources are close to
orthogonal, which is what makes oracle masking (and hence separation)
possible without a corpus.

Mixtures follow the dynamic-mixing recipe: reference source at 0 dB, every
other source at a random relative gain in [0, 5] dB, optional non-stationary
colored noise at a random SNR.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensor import Tensor


@dataclass
class NoiseSpec:
    snr_db_range: tuple = (5.0, 15.0)


@dataclass
class MixSpec:
    num_sources: int = 2
    sample_rate: int = 8000
    duration: float = 1.0
    relative_gain_range_db: tuple = (0.0, 5.0)
    noise: Optional[NoiseSpec] = None
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.num_sources < 1:
            raise ValueError(f"num_sources must be >= 1, got {self.num_sources}")

    @property
    def num_samples(self):
        return int(round(self.duration * self.sample_rate))


@dataclass
class MixtureExample:
    mixture: Tensor
    sources: list
    applied_gains_db: list  # 0.0 for the reference source
    noise: Optional[Tensor] = None
    noise_snr_db: Optional[float] = None


def _band_noise(rng, T, sample_rate, centers, widths):
    white = rng.standard_normal(T)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(T, 1.0 / sample_rate)
    gain = np.zeros_like(freqs)
    for c, w in zip(centers, widths):
        gain += np.exp(-0.5 * ((freqs - c) / w) ** 2)
    return np.fft.irfft(spectrum * gain, T)


def generate_sources(spec: MixSpec, seed: Optional[int] = None):
    """Deterministic unit-RMS synthetic speakers (list of (T,) tensors)."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    T = spec.num_samples
    Ns = spec.num_sources
    f_lo = 120.0
    f_hi = min(0.45 * spec.sample_rate, 3800.0)
    edges = np.geomspace(f_lo, f_hi, Ns + 1)
    sources = []
    for k in range(Ns):
        lo, hi = edges[k], edges[k + 1]
        n_bands = rng.integers(2, 4)
        centers = rng.uniform(lo * 1.05, hi * 0.95, size=n_bands)
        widths = 0.05 * centers + 10.0
        x = _band_noise(rng, T, spec.sample_rate, centers, widths)
        am_freq = rng.uniform(2.0, 8.0)
        am_phase = rng.uniform(0.0, 2 * np.pi)
        t = np.arange(T) / spec.sample_rate
        x *= 0.55 + 0.45 * np.sin(2 * np.pi * am_freq * t + am_phase)
        x /= np.sqrt(np.mean(x * x))
        sources.append(Tensor(x))
    return sources


def generate_noise(T, sample_rate, rng):
    """Unit-RMS colored noise with piecewise-stationary level (non-stationary
    background stand-in)."""
    out = np.zeros(T)
    pos = 0
    freqs = None
    while pos < T:
        seg_len = min(T - pos, int(rng.uniform(0.25, 1.0) * sample_rate) or 1)
        white = rng.standard_normal(seg_len)
        spectrum = np.fft.rfft(white)
        f = np.fft.rfftfreq(seg_len, 1.0 / sample_rate)
        shaping = 1.0 / np.sqrt(np.maximum(f, 20.0))  # 1/f-ish tilt
        seg = np.fft.irfft(spectrum * shaping, seg_len)
        level = 10.0 ** (rng.uniform(-6.0, 6.0) / 20.0)
        rms = np.sqrt(np.mean(seg * seg))
        if rms > 0:
            out[pos : pos + seg_len] = level * seg / rms
        pos += seg_len
    total_rms = np.sqrt(np.mean(out * out))
    if total_rms > 0:
        out /= total_rms
    return out


def dynamic_mix(sources, spec: MixSpec, rng=None) -> MixtureExample:
    """Mix sources with fresh random relative gains (and optional noise).

    The first source is the 0 dB reference. The stored gains and noise
    reproduce the mixture exactly: mixture == sum(g_k * s_k) + noise.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    arrays = [s.data if isinstance(s, Tensor) else np.asarray(s) for s in sources]
    T = arrays[0].shape[0]
    for a in arrays[1:]:
        if a.shape != (T,):
            raise ValueError("all sources must share one length")
    gains_db = [0.0]
    lo, hi = spec.relative_gain_range_db
    for _ in arrays[1:]:
        gains_db.append(float(rng.uniform(lo, hi)))
    mixture = np.zeros(T)
    for g_db, a in zip(gains_db, arrays):
        mixture = mixture + 10.0 ** (g_db / 20.0) * a
    noise_t = None
    snr_db = None
    if spec.noise is not None:
        snr_db = float(rng.uniform(*spec.noise.snr_db_range))
        noise = generate_noise(T, spec.sample_rate, rng)
        mix_rms = np.sqrt(np.mean(mixture * mixture))
        noise = noise * (mix_rms / 10.0 ** (snr_db / 20.0))
        mixture = mixture + noise
        noise_t = Tensor(noise)
    return MixtureExample(
        mixture=Tensor(mixture),
        sources=[Tensor(a) for a in arrays],
        applied_gains_db=gains_db,
        noise=noise_t,
        noise_snr_db=snr_db,
    )


# ---------------------------------------------------------------------------
# WAV (RIFF, PCM 16-bit little-endian, mono)


class WavFormatError(ValueError):
    pass


_SCALE = 32768.0


def wav_write(path, x, sample_rate) -> dict:
    """Write mono 16-bit PCM. Returns {'clipped': count} of samples that hit
    the integer rails."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.ndim != 1:
        raise WavFormatError(f"wav_write expects a 1-d signal, got shape {data.shape}")
    q = np.round(data * _SCALE)
    clipped = int(np.count_nonzero((q < -32768) | (q > 32767)))
    pcm = np.clip(q, -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    with open(path, "wb") as f:
        f.write(b"RIFF")
        f.write(struct.pack("<I", 4 + 8 + 16 + 8 + len(payload)))
        f.write(b"WAVE")
        f.write(b"fmt ")
        f.write(struct.pack("<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16))
        f.write(b"data")
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)
    return {"clipped": clipped}


def wav_read(path):
    """Read mono 16-bit PCM -> ((T,) tensor in [-1, 1), sample_rate).

    Unknown chunks are skipped; anything other than mono 16-bit PCM raises
    WavFormatError naming the offending field.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[0:4] != b"RIFF":
        raise WavFormatError("missing RIFF chunk id")
    if blob[8:12] != b"WAVE":
        raise WavFormatError(f"RIFF form type is {blob[8:12]!r}, expected b'WAVE'")
    pos = 12
    sample_rate = None
    payload = None
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack("<I", blob[pos + 4 : pos + 8])
        body = blob[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError(f"fmt chunk too short ({size} bytes)")
            fmt, channels, rate, _byte_rate, _align, bits = struct.unpack(
                "<HHIIHH", body[:16]
            )
            if fmt != 1:
                raise WavFormatError(f"fmt.audio_format is {fmt}, only PCM (1) supported")
            if channels != 1:
                raise WavFormatError(f"fmt.channels is {channels}, only mono supported")
            if bits != 16:
                raise WavFormatError(f"fmt.bits_per_sample is {bits}, only 16 supported")
            sample_rate = rate
        elif cid == b"data":
            payload = body
        # any other chunk id is skipped
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if sample_rate is None:
        raise WavFormatError("no fmt chunk found")
    if payload is None:
        raise WavFormatError("no data chunk found")
    samples = np.frombuffer(payload, dtype="<i2").astype(np.float64) / _SCALE
    return Tensor(samples), sample_rate

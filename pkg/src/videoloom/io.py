"""Configuration files, latent serialization, frame export, and proxy
metrics.

Config files are flat ``key = value`` text: ``#`` comments and blank lines
ignored, unknown keys rejected, missing keys fall back to the built-in
defaults.  Latents travel as NPY v1.0 files restricted to little-endian
float32, C order, 4-D shape; the loader validates all of that explicitly
instead of trusting the reader.  Frames export as binary PPM (P6), one
file per frame, which is header-trivial and byte-exactly specifiable.

The per-frame metrics are desk-scale proxies (flicker, smoothness, patch
consistency) and make no claim of comparability with any external video
benchmark.
"""

from __future__ import annotations

import ast
import csv
import dataclasses
import io as _io
import math
import os
import struct

import numpy as np

from .exceptions import ConfigError, FormatError, ParameterError
from .latent import LatentVideo
from .pipeline import PipelineConfig

_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False,
               "on": True, "off": False}

_OPTIONAL_INT_KEYS = {"stride", "shuffle_window"}
_OPTIONAL_FLOAT_KEYS = {"force_gamma"}


def _parse_value(key: str, raw: str, line_no: int):
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    ftype = fields[key].type
    raw = raw.strip()
    if key in _OPTIONAL_INT_KEYS or key in _OPTIONAL_FLOAT_KEYS:
        if raw.lower() in ("none", "auto"):
            return None
        caster = int if key in _OPTIONAL_INT_KEYS else float
        try:
            return caster(raw)
        except ValueError:
            raise ConfigError(f"line {line_no}: invalid value for {key}: {raw!r}")
    if ftype == "bool":
        if raw.lower() not in _BOOL_WORDS:
            raise ConfigError(f"line {line_no}: invalid value for {key}: {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    if ftype == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"line {line_no}: invalid value for {key}: {raw!r}")
    if ftype == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"line {line_no}: invalid value for {key}: {raw!r}")
    return raw.strip("\"'")


def load_config(path: str) -> PipelineConfig:
    """Parse a key=value config file; unknown keys are rejected with their
    line number, missing keys resolve to defaults."""
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {line_no}: duplicate key {key!r}")
            values[key] = _parse_value(key, raw, line_no)
    try:
        return PipelineConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def save_config(path: str, cfg: PipelineConfig) -> None:
    """Write every field as key = value; loading the file reproduces the
    config exactly."""
    lines = []
    for f in dataclasses.fields(PipelineConfig):
        val = getattr(cfg, f.name)
        if val is None:
            text = "none"
        elif isinstance(val, bool):
            text = "true" if val else "false"
        elif isinstance(val, float):
            text = repr(val)
        else:
            text = str(val)
        lines.append(f"{f.name} = {text}\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


_NPY_MAGIC = b"\x93NUMPY"


def save_latent(path: str, z: LatentVideo) -> None:
    """NPY v1.0, little-endian float32, C order."""
    arr = np.ascontiguousarray(z.data, dtype="<f4")
    with open(path, "wb") as fh:
        np.lib.format.write_array(fh, arr, version=(1, 0))


def load_latent(path: str) -> LatentVideo:
    """Read and validate an NPY latent; any deviation from the written
    format (magic, version, dtype, order, shape, payload size) is a
    format error, never a partial tensor."""
    with open(path, "rb") as fh:
        head = fh.read(len(_NPY_MAGIC))
        if head != _NPY_MAGIC:
            raise FormatError(f"{path}: bad magic {head!r}, not an NPY file")
        ver = fh.read(2)
        if len(ver) != 2 or (ver[0], ver[1]) != (1, 0):
            raise FormatError(f"{path}: unsupported NPY version {tuple(ver)!r}")
        len_bytes = fh.read(2)
        if len(len_bytes) != 2:
            raise FormatError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<H", len_bytes)
        header = fh.read(hlen)
        if len(header) != hlen:
            raise FormatError(f"{path}: truncated header")
        try:
            meta = ast.literal_eval(header.decode("latin1").strip())
            descr, fortran, shape = (
                meta["descr"], meta["fortran_order"], tuple(meta["shape"]),
            )
        except Exception as e:
            raise FormatError(f"{path}: unparseable NPY header: {e}") from e
        if descr != "<f4":
            raise FormatError(
                f"{path}: dtype {descr!r} rejected; latents must be "
                "little-endian float32 ('<f4')"
            )
        if fortran:
            raise FormatError(f"{path}: Fortran-order arrays are not accepted")
        if len(shape) != 4:
            raise FormatError(f"{path}: expected 4-D (K,C,H,W), got shape {shape}")
        count = int(np.prod(shape))
        payload = fh.read(count * 4 + 1)
        if len(payload) != count * 4:
            raise FormatError(
                f"{path}: payload has {len(payload)} bytes, expected {count * 4}"
            )
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return LatentVideo(arr.copy())


MINMAX = "minmax"
CLAMP = "clamp"


def _to_rgb8(z: LatentVideo, normalize: str) -> np.ndarray:
    """(K, H, W, 3) uint8 per the documented reduction and scaling rules:
    channels 0..2 (or channel 0 replicated when fewer than 3 exist);
    minmax scales the global value range onto [0, 255] and maps a
    degenerate (constant) range to mid-gray 128; clamp clips values into
    [-1, 1] then maps that interval onto [0, 255]."""
    data = z.data.astype(np.float64)
    if z.shape[1] >= 3:
        rgb = data[:, :3]
    else:
        rgb = np.repeat(data[:, :1], 3, axis=1)
    if normalize == MINMAX:
        lo, hi = rgb.min(), rgb.max()
        if hi - lo == 0:
            unit = np.full(rgb.shape, 0.5)
        else:
            unit = (rgb - lo) / (hi - lo)
    elif normalize == CLAMP:
        unit = (np.clip(rgb, -1.0, 1.0) + 1.0) / 2.0
    else:
        raise ParameterError(f"unknown normalize mode {normalize!r}")
    bytes_ = np.round(unit * 255.0).astype(np.uint8)
    return np.moveaxis(bytes_, 1, -1)


def export_frames(z: LatentVideo, out_dir: str, normalize: str = MINMAX) -> list[str]:
    """One binary PPM (P6) per frame, named frame_%05d.ppm."""
    os.makedirs(out_dir, exist_ok=True)
    rgb = _to_rgb8(z, normalize)
    K, H, W, _ = rgb.shape
    header = f"P6\n{W} {H}\n255\n".encode("ascii")
    paths = []
    for i in range(K):
        path = os.path.join(out_dir, f"frame_{i:05d}.ppm")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(rgb[i].tobytes())
        paths.append(path)
    return paths


@dataclasses.dataclass(frozen=True)
class MetricsRow:
    """Per-frame proxy metrics; boundary entries that need missing
    neighbors are NaN."""

    index: int
    flicker: float
    smoothness: float
    patch_consistency: float

    def __post_init__(self):
        if not math.isnan(self.flicker) and self.flicker < 0:
            raise ParameterError("flicker must be >= 0")
        if not math.isnan(self.smoothness) and self.smoothness < 0:
            raise ParameterError("smoothness must be >= 0")
        pc = self.patch_consistency
        if not -1.0 - 1e-9 <= pc <= 1.0 + 1e-9:
            raise ParameterError(f"patch_consistency outside [-1, 1]: {pc}")


def _center_patch(frame: np.ndarray) -> np.ndarray:
    _, H, W = frame.shape
    return frame[:, H // 4 : H - H // 4, W // 4 : W - W // 4]


def _patch_corr(a: np.ndarray, b: np.ndarray) -> float:
    # Zero-variance patches correlate as 1 by definition.
    af, bf = a.ravel(), b.ravel()
    da, db = af - af.mean(), bf - bf.mean()
    na, nb = np.linalg.norm(da), np.linalg.norm(db)
    if na == 0 or nb == 0:
        return 1.0
    return float(np.clip(da @ db / (na * nb), -1.0, 1.0))


def compute_metrics(z: LatentVideo) -> list[MetricsRow]:
    """Flicker: mean abs difference to the next frame.  Smoothness: mean
    abs second difference around the frame.  Patch consistency: centered
    correlation of the central patch against frame 0."""
    data = z.data.astype(np.float64)
    K = z.frames
    rows = []
    p0 = _center_patch(data[0])
    for i in range(K):
        flicker = (
            float(np.mean(np.abs(data[i + 1] - data[i]))) if i < K - 1 else math.nan
        )
        smooth = (
            float(np.mean(np.abs(data[i + 1] - 2.0 * data[i] + data[i - 1])))
            if 1 <= i <= K - 2
            else math.nan
        )
        rows.append(
            MetricsRow(i, flicker, smooth, _patch_corr(_center_patch(data[i]), p0))
        )
    return rows


_METRICS_COMMENT = (
    "# proxy desk-scale metrics; not comparable to external video benchmarks\n"
)


def _fmt(value: float) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".9g")
    return str(value)


def write_metrics_csv(path: str, rows: list[MetricsRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_METRICS_COMMENT)
        writer = csv.writer(fh)
        writer.writerow(["index", "flicker", "smoothness", "patch_consistency"])
        for r in rows:
            writer.writerow(
                [r.index, _fmt(r.flicker), _fmt(r.smoothness),
                 _fmt(r.patch_consistency)]
            )


def read_metrics_csv(path: str) -> list[MetricsRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        content = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(_io.StringIO("".join(content)))
    header = next(reader)
    if header != ["index", "flicker", "smoothness", "patch_consistency"]:
        raise FormatError(f"{path}: unexpected metrics header {header}")
    for rec in reader:
        rows.append(MetricsRow(int(rec[0]), float(rec[1]), float(rec[2]), float(rec[3])))
    return rows


REPORT_COLUMNS = [
    "step", "t_from", "t_to", "gamma", "residual_global", "residual_local",
    "vmcr_total", "vmcr_pixel", "vmcr_freq", "vmcr_amplitude", "vmcr_phase",
    "vmcr_grad_norm",
]


def write_report_csv(path: str, reports) -> None:
    """One row per schedule transition.  Wall times stay in memory only so
    identical runs serialize to identical bytes; refinement columns are
    empty when the refiner is off."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for i, rep in enumerate(reports):
            row = [i, rep.t_from, rep.t_to, _fmt(rep.gamma),
                   _fmt(rep.residual_global), _fmt(rep.residual_local)]
            if rep.vmcr is None:
                row += [""] * 6
            else:
                row += [_fmt(rep.vmcr.total), _fmt(rep.vmcr.pixel),
                        _fmt(rep.vmcr.freq), _fmt(rep.vmcr.amplitude),
                        _fmt(rep.vmcr.phase), _fmt(rep.vmcr.grad_norm)]
            writer.writerow(row)


def save_filter_mask(path: str, mask: np.ndarray) -> None:
    """Export a frequency mask as NPY for inspection."""
    np.save(path, np.asarray(mask, dtype="<f8"), allow_pickle=False)

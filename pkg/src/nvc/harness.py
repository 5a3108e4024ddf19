"""Evaluation utilities: RD points, BD-rate, CSV emission."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .codec import decode_sequence, encode_sequence
from .core import Frame, InvalidInputError, frame_psnr
from .model import VideoModel

CSV_COLUMNS = ("sequence", "lambda_index", "kbps", "psnr_y", "psnr_u",
               "psnr_v", "psnr")


@dataclass(frozen=True)
class RDPoint:
    bitrate: float   # kbps
    quality: float   # dB

    def __post_init__(self) -> None:
        if not (self.bitrate > 0 and math.isfinite(self.bitrate)):
            raise InvalidInputError("rate-distortion points need positive rate")


def bd_rate(anchor: list[RDPoint], test: list[RDPoint]) -> float:
    """Average bitrate difference of ``test`` vs ``anchor`` in percent.

    Piecewise-cubic interpolation of log rate over quality, integrated on
    the overlapping quality interval.  Negative means the test codec needs
    fewer bits at equal quality.
    """

    curves = []
    for points in (anchor, test):
        if len(points) < 4:
            raise InvalidInputError("bd_rate needs at least 4 points per curve")
        pts = sorted(points, key=lambda p: p.quality)
        q = np.array([p.quality for p in pts])
        r = np.array([p.bitrate for p in pts])
        if np.any(np.diff(q) <= 0):
            raise InvalidInputError("duplicate quality values in RD curve")
        if np.any(np.diff(r) <= 0):
            raise InvalidInputError("RD curve must be monotone in rate")
        curves.append(PchipInterpolator(q, np.log10(r)))
    lo = max(c.x[0] for c in curves)
    hi = min(c.x[-1] for c in curves)
    if not hi > lo:
        raise InvalidInputError("RD curves have no overlapping quality range")
    ints = [c.antiderivative() for c in curves]
    avg_diff = ((ints[1](hi) - ints[1](lo)) - (ints[0](hi) - ints[0](lo))) / (hi - lo)
    return float((10.0 ** avg_diff - 1.0) * 100.0)


def sequence_metrics(source: list[Frame], decoded: list[Frame],
                     total_bytes: int, fps: float) -> dict:
    """Mean per-plane/compound PSNR and kbps for one coded sequence."""

    if len(source) != len(decoded):
        raise InvalidInputError("source/decoded frame count mismatch")
    acc = np.zeros(4)
    for s, d in zip(source, decoded):
        acc += np.array(frame_psnr(s, d))
    acc /= max(len(source), 1)
    kbps = total_bytes * 8.0 * fps / max(len(source), 1) / 1000.0
    return {"kbps": kbps, "psnr_y": acc[0], "psnr_u": acc[1],
            "psnr_v": acc[2], "psnr": acc[3]}


def evaluate_models(models: dict[int, VideoModel], source: list[Frame],
                    fps: float = 30.0, sequence: str = "seq") -> list[dict]:
    """Encode+decode ``source`` with one model per lambda index.

    Returns CSV-schema rows sorted by descending lambda (increasing rate
    ordering is not guaranteed; callers build RD curves from the rows).
    """

    rows = []
    for lambda_index in sorted(models):
        model = models[lambda_index]
        data, _ = encode_sequence(model, source, lambda_index)
        decoded, _, _ = decode_sequence(model, data)
        row = {"sequence": sequence, "lambda_index": lambda_index,
               **sequence_metrics(source, decoded, len(data), fps)}
        rows.append(row)
    return rows


def rd_points(rows: list[dict], quality_key: str = "psnr") -> list[RDPoint]:
    return [RDPoint(bitrate=row["kbps"], quality=row[quality_key])
            for row in rows]


def emit_rd_csv(rows: list[dict], target) -> None:
    """Write rows in the fixed column order to a path or text file."""

    own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
    fh = open(target, "w", newline="") if own else target
    try:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([row["sequence"], row["lambda_index"],
                             f"{row['kbps']:.6f}", f"{row['psnr_y']:.6f}",
                             f"{row['psnr_u']:.6f}", f"{row['psnr_v']:.6f}",
                             f"{row['psnr']:.6f}"])
    finally:
        if own:
            fh.close()


def parse_rd_csv(source) -> list[dict]:
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source, "r", newline="") if own else source
    try:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise InvalidInputError("unexpected RD CSV columns")
        rows = []
        for rec in reader:
            rows.append({"sequence": rec[0], "lambda_index": int(rec[1]),
                         "kbps": float(rec[2]), "psnr_y": float(rec[3]),
                         "psnr_u": float(rec[4]), "psnr_v": float(rec[5]),
                         "psnr": float(rec[6])})
        return rows
    finally:
        if own:
            fh.close()


def csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    emit_rd_csv(rows, buf)
    return buf.getvalue()

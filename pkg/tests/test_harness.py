"""Rate-distortion bookkeeping: BD-rate oracle cases and CSV round trips."""

import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_frame
from nvc.core import InvalidInputError
from nvc.harness import (RDPoint, bd_rate, csv_text, emit_rd_csv,
                         parse_rd_csv, rd_points, sequence_metrics)


def _curve(rates, qualities):
    return [RDPoint(r, q) for r, q in zip(rates, qualities)]


BASE = _curve((100.0, 200.0, 400.0, 800.0), (30.0, 33.0, 36.0, 39.0))


def test_identical_curves_give_zero():
    assert bd_rate(BASE, list(BASE)) == pytest.approx(0.0, abs=1e-12)


def test_half_rate_curve_gives_minus_fifty():
    half = _curve((50.0, 100.0, 200.0, 400.0), (30.0, 33.0, 36.0, 39.0))
    assert bd_rate(BASE, half) == pytest.approx(-50.0, abs=1e-9)


def test_double_rate_curve_gives_plus_hundred():
    double = _curve((200.0, 400.0, 800.0, 1600.0), (30.0, 33.0, 36.0, 39.0))
    assert bd_rate(BASE, double) == pytest.approx(100.0, abs=1e-9)


@given(st.floats(min_value=0.1, max_value=10.0))
def test_constant_rate_ratio_is_exact(ratio):
    # scaling every rate by a constant shifts log-rate uniformly, so the
    # integral average recovers the ratio exactly regardless of curve shape
    scaled = _curve([p.bitrate * ratio for p in BASE],
                    [p.quality for p in BASE])
    assert bd_rate(BASE, scaled) == pytest.approx((ratio - 1.0) * 100.0,
                                                  rel=1e-9)


def test_quality_shift_oracle():
    # dropping every point's quality by 1 dB at fixed rate means that at any
    # fixed quality the test needs the anchor's rate for quality+1; on a
    # straight line in (quality, log10 rate) with slope 0.1/dB that is a
    # uniform +0.1 log-rate shift over the overlap
    qs = (30.0, 33.0, 36.0, 39.0)
    rates = [10.0 ** (0.1 * q) for q in qs]
    anchor = _curve(rates, qs)
    test = _curve(rates, [q - 1.0 for q in qs])
    expect = (10.0 ** 0.1 - 1.0) * 100.0
    assert bd_rate(anchor, test) == pytest.approx(expect, rel=1e-6)


def test_point_order_does_not_matter():
    shuffled = [BASE[2], BASE[0], BASE[3], BASE[1]]
    half = _curve((400.0, 50.0, 100.0, 200.0), (39.0, 30.0, 33.0, 36.0))
    assert bd_rate(shuffled, half) == pytest.approx(-50.0, abs=1e-9)


def test_bd_rejects_short_curves():
    with pytest.raises(InvalidInputError, match="4 points"):
        bd_rate(BASE[:3], BASE)


def test_bd_rejects_duplicate_quality():
    dup = _curve((100.0, 200.0, 400.0, 800.0), (30.0, 33.0, 33.0, 39.0))
    with pytest.raises(InvalidInputError, match="duplicate"):
        bd_rate(dup, BASE)


def test_bd_rejects_non_monotone_rate():
    bad = _curve((100.0, 400.0, 200.0, 800.0), (30.0, 33.0, 36.0, 39.0))
    with pytest.raises(InvalidInputError, match="monotone"):
        bd_rate(BASE, bad)


def test_bd_rejects_disjoint_quality_ranges():
    far = _curve((100.0, 200.0, 400.0, 800.0), (50.0, 53.0, 56.0, 59.0))
    with pytest.raises(InvalidInputError, match="overlap"):
        bd_rate(BASE, far)


def test_rd_point_rejects_nonpositive_rate():
    with pytest.raises(InvalidInputError):
        RDPoint(0.0, 30.0)
    with pytest.raises(InvalidInputError):
        RDPoint(math.inf, 30.0)


# --------------------------------------------------------------------------
# sequence metrics


def test_sequence_metrics_identity_and_rate():
    rng = np.random.default_rng(0)
    frames = [random_frame(rng, 16, 16) for _ in range(4)]
    m = sequence_metrics(frames, frames, total_bytes=1000, fps=30.0)
    assert m["psnr"] == 999.0  # identical planes hit the cap
    # 1000 bytes over 4 frames at 30 fps -> 2000 bytes/s -> 60 kbit/s
    assert m["kbps"] == pytest.approx(60.0)


def test_sequence_metrics_count_mismatch():
    rng = np.random.default_rng(0)
    frames = [random_frame(rng, 16, 16) for _ in range(2)]
    with pytest.raises(InvalidInputError):
        sequence_metrics(frames, frames[:1], 10, 30.0)


# --------------------------------------------------------------------------
# CSV round trip


def _rows():
    return [
        {"sequence": "a", "lambda_index": 0, "kbps": 123.456789,
         "psnr_y": 31.25, "psnr_u": 40.5, "psnr_v": 41.0, "psnr": 33.125},
        {"sequence": "b", "lambda_index": 3, "kbps": 45.0,
         "psnr_y": 28.0, "psnr_u": 39.0, "psnr_v": 39.5, "psnr": 30.0},
    ]


def test_csv_round_trip():
    text = csv_text(_rows())
    parsed = parse_rd_csv(io.StringIO(text))
    assert len(parsed) == 2
    for src, back in zip(_rows(), parsed):
        assert back["sequence"] == src["sequence"]
        assert back["lambda_index"] == src["lambda_index"]
        for key in ("kbps", "psnr_y", "psnr_u", "psnr_v", "psnr"):
            assert back[key] == pytest.approx(src[key], abs=1e-6)


def test_csv_header_and_precision():
    lines = csv_text(_rows()).strip().split("\r\n")
    assert lines[0] == "sequence,lambda_index,kbps,psnr_y,psnr_u,psnr_v,psnr"
    assert lines[1].startswith("a,0,123.456789,")


def test_csv_file_round_trip(tmp_path):
    path = tmp_path / "rd.csv"
    emit_rd_csv(_rows(), path)
    assert parse_rd_csv(path)[1]["kbps"] == pytest.approx(45.0)


def test_csv_rejects_wrong_columns():
    with pytest.raises(InvalidInputError):
        parse_rd_csv(io.StringIO("a,b,c\n1,2,3\n"))


def test_rd_points_extraction():
    pts = rd_points(_rows())
    assert pts[0] == RDPoint(123.456789, 33.125)
    pts_y = rd_points(_rows(), quality_key="psnr_y")
    assert pts_y[1].quality == 28.0

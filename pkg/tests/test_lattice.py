import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nfe import (LatticeCodebook, LatticeSketch, SupportSphere, decode_nearest, dequantize,
                 make_sketch, quantize, recover_center)
from nfe.errors import FormatError, InvalidArgumentError, OutOfSupportError, RangeError
from nfe.lattice import ONE

from _oracles import lattice_points_in_ball, nearest_lattice_points


def book(dim, spacing, radius=16.0):
    return LatticeCodebook(dim, int(quantize(spacing)), np.zeros(dim, dtype=np.int64),
                           int(quantize(radius)))


def test_quantize_basics():
    assert not np.any(quantize([0.0, 0.0]))
    assert quantize(1.0) == 1048576
    assert quantize(0.5 / ONE) == 0  # tie rounds to even
    assert quantize(1.5 / ONE) == 2
    with pytest.raises(RangeError):
        quantize([2.0 ** 20])
    with pytest.raises(RangeError):
        quantize([np.nan])


@given(st.integers(-(2**40) + 1, 2**40 - 1))
def test_dequantize_exact(k):
    assert quantize(dequantize(np.array([k])))[0] == k


def test_decode_examples():
    cb = book(2, 1.0)
    assert np.array_equal(decode_nearest(cb, quantize([0.4, -0.3])), [0, 0])
    assert np.array_equal(decode_nearest(cb, quantize([0.5, 1.5])), quantize([0.0, 2.0]))
    assert np.array_equal(decode_nearest(cb, quantize([-0.5, -1.5])), quantize([0.0, -2.0]))


def test_decode_dim_mismatch():
    with pytest.raises(InvalidArgumentError):
        decode_nearest(book(2, 1.0), quantize([0.1, 0.2, 0.3]))


def test_decode_brute_force_support_enumeration():
    # oracle: every lattice point inside an enlarged support ball
    rng = np.random.default_rng(0)
    cb = book(3, 0.25, radius=1.0)
    candidates = lattice_points_in_ball((0, 0, 0), 2 * ONE, cb.spacing)
    cand = np.array(candidates, dtype=object)
    for _ in range(200):
        p = rng.uniform(-1, 1, 3)
        p = quantize(p / max(1.0, np.linalg.norm(p)))
        d = [sum((int(a) - int(b)) ** 2 for a, b in zip(p, c)) for c in cand]
        best = min(d)
        winners = {tuple(c) for c, v in zip(candidates, d) if v == best}
        assert tuple(decode_nearest(cb, p).tolist()) in winners


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-(2**30), 2**30), min_size=1, max_size=3),
       st.lists(st.integers(-50, 50), min_size=3, max_size=3),
       st.sampled_from([0.25, 1.0, 0.3]))
def test_translation_covariance(point, k, spacing):
    cb = book(len(point), spacing)
    p = np.array(point, dtype=np.int64)
    shift = np.array(k[:len(point)], dtype=np.int64) * cb.spacing
    assert np.array_equal(decode_nearest(cb, p + shift), decode_nearest(cb, p) + shift)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-(2**22), 2**22), min_size=1, max_size=3))
def test_decode_is_nearest(point):
    cb = book(len(point), 0.3)
    winners = nearest_lattice_points(point, cb.spacing)
    assert tuple(decode_nearest(cb, np.array(point)).tolist()) in winners


def test_make_sketch_examples():
    cb = book(2, 1.0)
    sketch, cw = make_sketch(cb, quantize([2.0, -1.0]))
    assert not np.any(sketch.dv)
    sketch, cw = make_sketch(cb, quantize([0.3, -0.2]))
    assert np.array_equal(cw, [0, 0])
    assert np.array_equal(sketch.dv, quantize([0.3, -0.2]))


def test_make_sketch_out_of_support():
    cb = book(2, 0.1, radius=1.0)
    with pytest.raises(OutOfSupportError):
        make_sketch(cb, quantize([0.9, 0.9]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-(2**20), 2**20), min_size=4, max_size=4),
       st.sampled_from([0.25, 0.2, 1.0]))
def test_dv_bounded_and_exact(center, spacing):
    cb = book(4, spacing)
    c = np.array(center, dtype=np.int64)
    sketch, cw = make_sketch(cb, c)
    assert np.array_equal(cw + sketch.dv, c)
    assert np.max(np.abs(sketch.dv)) * 2 <= cb.spacing
    assert np.array_equal(recover_center(cb, sketch, c), c)


def test_recover_inside_and_outside_cell():
    cb = book(2, 0.5)
    center = quantize([0.37, -0.61])
    sketch, _ = make_sketch(cb, center)
    half = (cb.spacing - 1) // 2
    for e in ([half, -half], [-half, half], [3, -7], [0, 0]):
        assert np.array_equal(recover_center(cb, sketch, center + np.array(e)), center)
    moved = center + np.array([cb.spacing, 0])
    assert not np.array_equal(recover_center(cb, sketch, moved), center)


def test_guard_range():
    cb = book(1, 1.0)
    with pytest.raises(RangeError):
        decode_nearest(cb, np.array([2**41]))


def test_from_radius_spacing():
    support = SupportSphere(np.zeros(3), 1.1)
    cb = LatticeCodebook.from_radius(0.35, support)
    assert cb.spacing == quantize(0.7)
    assert cb.support_radius == quantize(1.1)


def test_codebook_serialization():
    support = SupportSphere(np.array([0.1, -0.2]), 1.25)
    cb = LatticeCodebook.from_radius(0.3, support)
    blob = cb.to_bytes()
    assert len(blob) == 4 + 8 + 2 * 8 + 8
    assert blob[:4] == (2).to_bytes(4, "little")
    assert LatticeCodebook.from_bytes(blob) == cb
    with pytest.raises(FormatError):
        LatticeCodebook.from_bytes(blob[:-1])


def test_sketch_serialization():
    sk = LatticeSketch(np.array([1, -2, 3], dtype=np.int64))
    assert LatticeSketch.from_bytes(sk.to_bytes()) == sk
    with pytest.raises(FormatError):
        LatticeSketch.from_bytes(sk.to_bytes()[:-2])

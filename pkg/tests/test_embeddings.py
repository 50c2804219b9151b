import io
import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nfe import EmbeddingSet, generate_synthetic, load_embedding_set, save_embedding_set, split
from nfe._rng import Xoshiro256
from nfe.errors import InvalidArgumentError, ParseError


def test_generate_counts():
    eset = generate_synthetic(2, 3, 4, 0.05, 42)
    assert len(eset) == 6
    assert eset.dim == 4
    assert len(eset.users()) == 2


def test_generate_deterministic():
    assert generate_synthetic(1, 1, 2, 0.1, 7) == generate_synthetic(1, 1, 2, 0.1, 7)
    assert generate_synthetic(1, 1, 2, 0.1, 7) != generate_synthetic(1, 1, 2, 0.1, 8)


@pytest.mark.parametrize("args", [(0, 1, 2, 0.1, 1), (1, 0, 2, 0.1, 1), (1, 1, 0, 0.1, 1),
                                  (1, 1, 2, 0.0, 1)])
def test_generate_rejects_degenerate(args):
    with pytest.raises(InvalidArgumentError):
        generate_synthetic(*args)


def _true_centers(num_users, samples, dim, seed):
    # replays the documented draw order: center normals, then samples * dim noise normals
    rng = Xoshiro256(seed)
    centers = []
    for _ in range(num_users):
        while True:
            g = [rng.normal() for _ in range(dim)]
            norm = math.sqrt(sum(x * x for x in g))
            if norm > 0:
                break
        centers.append(np.array(g) / norm)
        for _ in range(samples * dim):
            rng.normal()
    return np.array(centers)


def test_centers_well_separated_seed_1():
    centers = _true_centers(20, 10, 16, 1)
    eset = generate_synthetic(20, 10, 16, 0.05, 1)
    means = np.array([eset.vectors_of(u).mean(axis=0) for u in eset.users()])
    assert np.abs(means - centers).max() < 0.1  # replay matches the generator
    assert np.allclose(np.linalg.norm(centers, axis=1), 1.0)
    dists = [np.linalg.norm(a - b) for a, b in itertools.combinations(centers, 2)]
    assert min(dists) > 0.5


def test_roundtrip_text():
    eset = generate_synthetic(3, 4, 5, 0.2, 11)
    text = save_embedding_set(eset)
    assert text.startswith("#dim=5\n")
    assert load_embedding_set(text) == eset
    buf = io.StringIO()
    save_embedding_set(eset, buf)
    assert load_embedding_set(io.BytesIO(buf.getvalue().encode())) == eset


def test_parse_error_names_line():
    text = "#dim=4\na,1,2,3,4\nb,1,2,3\n"
    with pytest.raises(ParseError) as err:
        load_embedding_set(text)
    assert err.value.line == 3
    assert "line 3" in str(err.value)


def test_empty_stream():
    with pytest.raises(ParseError, match="no records"):
        load_embedding_set("")


@pytest.mark.parametrize("text", ["#dim=2\na,1,nan\n", "#dim=2\na,1,inf\n", "#dim=2\na,1,x\n",
                                  "a,1,2\n", "#dim=2\n,1,2\n"])
def test_malformed(text):
    with pytest.raises(ParseError):
        load_embedding_set(text)


def test_comment_lines_ignored():
    eset = load_embedding_set("#dim=2\n# comment\na,1.5,-2\n\n#x\nb,0,0.25\n")
    assert eset.user_ids == ("a", "b")
    assert np.array_equal(eset.vectors, [[1.5, -2.0], [0.0, 0.25]])


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4).flatmap(lambda d: st.lists(
    st.tuples(st.sampled_from(["a", "bob", "u-7"]), st.lists(finite, min_size=d, max_size=d)),
    min_size=1, max_size=12)))
def test_roundtrip_property(rows):
    eset = EmbeddingSet(tuple(r[0] for r in rows), np.array([r[1] for r in rows]))
    back = load_embedding_set(save_embedding_set(eset))
    assert back == eset
    # full precision, including signed zeros
    assert back.vectors.tobytes() == eset.vectors.tobytes()


def test_split_eight_of_ten():
    eset = generate_synthetic(5, 10, 3, 0.1, 2)
    train, test = split(eset, 0.8, 9)
    for u in eset.users():
        assert len(train.indices_of(u)) == 8
        assert len(test.indices_of(u)) == 2


def test_split_ten_of_twelve():
    eset = generate_synthetic(4, 12, 3, 0.1, 2)
    train, test = split(eset, 10 / 12, 1)
    assert Counter(train.user_ids) == {u: 10 for u in eset.users()}
    assert Counter(test.user_ids) == {u: 2 for u in eset.users()}


def test_split_two_samples_half():
    eset = generate_synthetic(3, 2, 3, 0.1, 2)
    train, test = split(eset, 0.5, 1)
    assert len(train) == 3 and len(test) == 3
    assert set(train.users()) == set(test.users()) == set(eset.users())


def test_split_deterministic_and_union():
    eset = generate_synthetic(4, 7, 3, 0.1, 5)
    a = split(eset, 0.6, 3)
    b = split(eset, 0.6, 3)
    assert a[0] == b[0] and a[1] == b[1]
    rows = lambda s: Counter((u, tuple(v)) for u, v in s)
    assert rows(a[0]) + rows(a[1]) == rows(eset)


def test_split_rejects_singletons():
    eset = generate_synthetic(2, 1, 3, 0.1, 5)
    with pytest.raises(InvalidArgumentError):
        split(eset, 0.5, 1)

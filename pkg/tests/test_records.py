import numpy as np
import pytest

from nfe import (AuthRecord, EnrollConfig, ExpanderParams, RecordStore, SupportSphere,
                 canonical_serialize, enroll_user, fit_support_sphere, forward_batch,
                 hash_digest, load_store, quantize, save_store, verify_user)
from nfe.errors import ConflictError, FormatError, InvalidArgumentError
from nfe.records import pepper_from_env, read_store_file, write_store_file

GOLDEN_STORE = (
    "4e46455331010002000000780000000500616c696365012400000002000000f34105000000000000000000"
    "0000000000000000000000009a991100000000001400000002000000dd18000000000000e8830000000000"
    "00000102030405060708090a0b0c0d0e0ffdb77da2365afde9c658be1acc37da2c7903fdebf438f6bc1427"
    "ac0f0c436ece490000000300626f6202060000000100010005000500000007000000000000000000000000"
    "000000000000000006ef306243b48f5a032579774548569cc151e7ff429e42353234126c4a232864"
)

IDENT = ExpanderParams((2, 2), (np.eye(2),), (np.zeros(2),))


def golden_store():
    store = RecordStore()
    cfg = EnrollConfig(support=SupportSphere(np.zeros(2), 1.1), salt=bytes(range(16)))
    enroll_user("alice", [[1, 0.2], [1, -0.1], [0.9, 0.0]], IDENT, "lattice", cfg, store=store)
    enroll_user("bob", [[-1, 0.5], [-1, 0.3], [-0.2, -1]], IDENT, "binary",
                EnrollConfig(salt=bytes(16)), store=store)
    return store


def test_golden_store_bytes():
    assert save_store(golden_store()).hex() == GOLDEN_STORE


def test_canonical_layout():
    blob = canonical_serialize(np.array([1, -2], dtype=np.int64), bytes(16))
    assert len(blob) == 42
    assert blob[:5] == b"NFEC1" and blob[5] == 1 and blob[6:10] == (2).to_bytes(4, "little")
    bits = canonical_serialize(np.array([1, 0, 1], dtype=np.uint8), bytes(16), "binary")
    assert bits[5] == 2 and len(bits) == 5 + 1 + 4 + 1 + 16


def test_canonical_injective():
    a = canonical_serialize(np.array([1, 2]), bytes(16))
    assert a != canonical_serialize(np.array([1, 3]), bytes(16))
    assert a != canonical_serialize(np.array([1, 2]), b"\x01" + bytes(15))
    assert a != canonical_serialize(np.array([1, 2, 0]), bytes(16))


def test_hash_digest():
    payload = b"some payload bytes"
    assert hash_digest(payload) == hash_digest(payload)
    assert len(hash_digest(payload)) == 32
    assert hash_digest(payload, b"") == hash_digest(payload, None)
    assert hash_digest(payload, b"pep") != hash_digest(payload)
    with pytest.raises(InvalidArgumentError):
        hash_digest(b"")


def test_single_bit_flips_change_digest():
    rng = np.random.default_rng(1)
    payload = bytearray(rng.bytes(42))
    base = hash_digest(bytes(payload))
    for _ in range(100):
        flipped = bytearray(payload)
        bit = int(rng.integers(len(payload) * 8))
        flipped[bit // 8] ^= 1 << (bit % 8)
        assert hash_digest(bytes(flipped)) != base


def test_pepper_env():
    assert pepper_from_env({}) == b""
    assert pepper_from_env({"NFE_PEPPER": "00ff"}) == b"\x00\xff"
    with pytest.raises(InvalidArgumentError):
        pepper_from_env({"NFE_PEPPER": "xyz"})


@pytest.fixture(scope="module")
def enrolled(scenario):
    params, train = scenario["trained"], scenario["train"]
    support = fit_support_sphere(forward_batch(params, train.vectors), 0.1)
    store = RecordStore()
    for scheme, user in (("lattice", "u000"), ("binary", "u001")):
        enroll_user(user, train.vectors_of(user), params, scheme,
                    EnrollConfig(support=support), store=store)
    return store, params, train, support


def test_record_components(enrolled):
    store, *_ = enrolled
    for record in store.records.values():
        assert record.dv and record.codebook_params
        assert len(record.salt) == 16 and len(record.digest) == 32


def test_genuine_accept(enrolled):
    store, params, train, _ = enrolled
    for user in ("u000", "u001"):
        for vec in train.vectors_of(user)[:5]:
            assert verify_user(store[user], vec, params)


def test_imposter_reject(enrolled):
    store, params, train, _ = enrolled
    for vec in train.vectors_of("u005"):
        assert not verify_user(store["u000"], vec, params)


def test_corrupted_digest_rejects(enrolled):
    store, params, train, _ = enrolled
    rec = store["u000"]
    bad = AuthRecord(rec.username, rec.scheme, rec.codebook_params, rec.dv, rec.salt,
                     bytes([rec.digest[0] ^ 1]) + rec.digest[1:])
    assert not any(verify_user(bad, v, params) for v in train.vectors)


def test_same_vectors_different_salts(enrolled):
    _, params, train, support = enrolled
    vecs = train.vectors_of("u003")
    a = enroll_user("x", vecs, params, "lattice", EnrollConfig(support=support))
    b = enroll_user("y", vecs, params, "lattice", EnrollConfig(support=support))
    assert a.salt != b.salt and a.digest != b.digest
    assert a.dv == b.dv


def test_pepper_required_to_verify(enrolled):
    _, params, train, support = enrolled
    vecs = train.vectors_of("u004")
    rec = enroll_user("p", vecs, params, "lattice", EnrollConfig(support=support, pepper=b"k"))
    assert verify_user(rec, vecs[0], params, pepper=b"k")
    assert not verify_user(rec, vecs[0], params)


def test_duplicate_user(enrolled):
    store, params, train, support = enrolled
    with pytest.raises(ConflictError):
        enroll_user("u000", train.vectors_of("u000"), params, "lattice",
                    EnrollConfig(support=support), store=store)


def test_centroid_probe_accepts():
    # identity expander: the centroid of unit vectors maps onto the region center direction
    vecs = np.array([[1.0, 0.05], [1.0, -0.05]])
    rec = enroll_user("c", vecs, IDENT, "lattice", EnrollConfig(support=SupportSphere(np.zeros(2), 1.1)))
    assert verify_user(rec, vecs.mean(axis=0), IDENT)


def test_store_roundtrip(tmp_path):
    store = golden_store()
    assert load_store(save_store(store)) == store
    assert load_store(save_store(RecordStore())) == RecordStore()
    path = tmp_path / "s.nfes"
    write_store_file(path, store)
    assert read_store_file(path) == store
    assert [p.name for p in tmp_path.iterdir()] == ["s.nfes"]


@pytest.mark.parametrize("mutate", [
    lambda b: b"NFESX" + b[5:],
    lambda b: b[:5] + b"\x02\x00" + b[7:],
    lambda b: b[:-1],
    lambda b: b + b"\x00",
    lambda b: b[:8],
])
def test_store_corruption(mutate):
    with pytest.raises(FormatError):
        load_store(mutate(save_store(golden_store())))


def test_center_never_stored(enrolled):
    store, params, train, _ = enrolled
    blob = save_store(store)
    out = forward_batch(params, train.vectors_of("u000"))
    center = quantize(out.mean(axis=0))
    assert center.astype("<i8").tobytes() not in blob
    assert canonical_serialize(center, store["u000"].salt) not in blob

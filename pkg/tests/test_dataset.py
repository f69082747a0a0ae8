import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from propscore.dataset import (
    ValidationPolicy,
    align_models,
    apply_zero_policy,
    load_dataset,
    parse_dataset,
    validate_vector,
)
from propscore.exceptions import DatasetError, InfiniteLossError

HEADER = '{"labels": ["rain", "sun"], "models": ["g", "k"]}\n'


def jsonl(*records, header=HEADER):
    return (header + "".join(json.dumps(r) + "\n" for r in records)).encode()


def rec(oid, outcome, g, k):
    return {"id": oid, "outcome": outcome, "p": {"g": g, "k": k}}


def test_minimal_record():
    ds = parse_dataset(jsonl(rec("a", "rain", [0.7, 0.3], [0.5, 0.5])))
    assert ds.n == 1
    assert ds.labels == ("rain", "sun")
    assert ds.models == ("g", "k")
    assert ds.outcomes.tolist() == [0]
    assert ds.predictions("g").tolist() == [[0.7, 0.3]]


def test_sum_within_tolerance_is_renormalized():
    ds = parse_dataset(jsonl(rec("a", "sun", [0.7, 0.300001], [0.5, 0.5])))
    s = 0.7 + 0.300001
    assert ds.predictions("g")[0].tolist() == [0.7 / s, 0.300001 / s]


def test_sum_within_tolerance_kept_without_renormalize():
    policy = ValidationPolicy(renormalize=False)
    ds = parse_dataset(jsonl(rec("a", "sun", [0.7, 0.300001], [0.5, 0.5])), policy=policy)
    assert ds.predictions("g")[0].tolist() == [0.7, 0.300001]


@pytest.mark.parametrize("renormalize", [True, False])
def test_sum_outside_tolerance_rejected(renormalize):
    with pytest.raises(DatasetError, match="sum") as info:
        parse_dataset(jsonl(rec("a", "sun", [0.7, 0.4], [0.5, 0.5])),
                      policy=ValidationPolicy(renormalize=renormalize))
    assert info.value.line == 2


@pytest.mark.parametrize(
    "record, message",
    [
        (rec("a", "snow", [0.5, 0.5], [0.5, 0.5]), "unknown outcome label"),
        ({"id": "a", "outcome": "rain", "p": {"g": [0.5, 0.5]}}, "missing prediction"),
        (rec("a", "rain", [1.2, -0.2], [0.5, 0.5]), "negative"),
        (rec("a", "rain", [0.5, 0.25, 0.25], [0.5, 0.5]), "expected 2"),
        (rec("a", "rain", ["0.5", 0.5], [0.5, 0.5]), "not a number"),
        (rec("a", "rain", [True, False], [0.5, 0.5]), "not a number"),
        ({"id": "a", "outcome": "rain"}, "missing field"),
        ({"id": 3, "outcome": "rain", "p": {"g": [0.5, 0.5], "k": [0.5, 0.5]}}, "must be a string"),
        ({"id": "a", "outcome": "rain", "p": {"g": [0.5, 0.5], "k": [0.5, 0.5], "h": [1, 0]}}, "undeclared"),
    ],
)
def test_record_errors(record, message):
    with pytest.raises(DatasetError, match=message):
        parse_dataset(jsonl(record))


def test_duplicate_id_rejected_with_line():
    data = jsonl(rec("a", "rain", [0.5, 0.5], [0.5, 0.5]), rec("a", "sun", [0.5, 0.5], [0.5, 0.5]))
    with pytest.raises(DatasetError, match="duplicate observation id") as info:
        parse_dataset(data)
    assert info.value.line == 3


def test_malformed_json_reports_line():
    data = jsonl(rec("a", "rain", [0.5, 0.5], [0.5, 0.5])) + b'{"id": "b", "outcome": \n'
    with pytest.raises(DatasetError, match="parse error line 3"):
        parse_dataset(data)


@pytest.mark.parametrize(
    "data, message",
    [
        (b"", "missing header"),
        (b'{"labels": ["a"], "models": ["g"]}\n', "at least 2 outcome labels"),
        (b'{"labels": ["a", "a"], "models": ["g"]}\n', "duplicate outcome labels"),
        (b'{"models": ["g"]}\n', "declare"),
        (b'{"labels": ["a", "b"], "models": ["g"]}\n', "no observations"),
        (b"[1, 2]\n", "JSON object"),
        (b"\xff\xfe\n", "UTF-8"),
    ],
)
def test_header_errors(data, message):
    with pytest.raises(DatasetError, match=message):
        parse_dataset(data)


def test_label_order_is_declared_order():
    header = '{"labels": ["sun", "rain"], "models": ["g", "k"]}\n'
    ds = parse_dataset(jsonl(rec("a", "rain", [0.3, 0.7], [0.5, 0.5]), header=header))
    assert ds.outcomes.tolist() == [1]


def test_accepts_streams_and_text():
    data = jsonl(rec("a", "rain", [0.7, 0.3], [0.5, 0.5]))
    expected = parse_dataset(data)
    assert parse_dataset(io.BytesIO(data)) == expected
    assert parse_dataset(data.decode()) == expected
    assert parse_dataset(io.StringIO(data.decode())) == expected


def test_zero_policy_examples():
    clamped = apply_zero_policy([1.0, 0.0], ValidationPolicy(zero_handling="clamp", epsilon=1e-10))
    norm = 1.0 + 1e-10
    assert clamped.tolist() == pytest.approx([1.0 / norm, 1e-10 / norm], rel=1e-15)
    assert clamped.sum() == pytest.approx(1.0, abs=1e-15)
    assert apply_zero_policy([1.0, 0.0]).tolist() == [1.0, 0.0]
    with pytest.raises(DatasetError):
        apply_zero_policy([1.0, 0.0], ValidationPolicy(zero_handling="reject"))


def test_reject_policy_during_parse():
    with pytest.raises(DatasetError, match="zero probability") as info:
        parse_dataset(jsonl(rec("a", "rain", [1.0, 0.0], [0.5, 0.5])), policy=ValidationPolicy(zero_handling="reject"))
    assert info.value.line == 2


@pytest.mark.parametrize(
    "kwargs",
    [{"sum_tolerance": 0}, {"sum_tolerance": 0.02}, {"epsilon": 0}, {"epsilon": 1e-2}, {"zero_handling": "drop"}],
)
def test_policy_validation(kwargs):
    with pytest.raises(ValueError):
        ValidationPolicy(**kwargs)


def test_clamp_preserves_ranking(rng):
    policy = ValidationPolicy(zero_handling="clamp", epsilon=1e-10)
    for _ in range(200):
        q = rng.dirichlet(np.ones(6) * 0.5)
        q[rng.integers(0, 6)] = 0.0
        q /= q.sum()
        eps_ok = q[q > 0].min() > policy.epsilon
        out = apply_zero_policy(q, policy)
        assert eps_ok
        assert out.argmax() == q.argmax()
        # ties among zeros stay ties; every strict order is preserved
        assert np.array_equal(np.sign(np.subtract.outer(out, out)), np.sign(np.subtract.outer(q, q)))


vectors = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6).filter(lambda v: sum(v) > 0.1)


@settings(max_examples=300, deadline=None)
@given(vectors, st.floats(-5e-7, 5e-7))
def test_validation_is_idempotent(v, wiggle):
    v = np.array(v) / sum(v)
    v[0] = max(0.0, v[0] + wiggle)
    policy = ValidationPolicy()
    once = validate_vector(v.tolist(), len(v), policy)
    twice = validate_vector(once.tolist(), len(v), policy)
    assert np.array_equal(once, twice)
    assert abs(once.sum() - 1.0) < 1e-9


def test_jsonl_round_trip_is_bit_exact(rng):
    ds = _random_dataset(rng, 300)
    again = parse_dataset(ds.to_jsonl())
    assert again == ds
    assert parse_dataset(again.to_jsonl()).to_jsonl() == ds.to_jsonl()


def test_csv_matches_jsonl(rng):
    ds = _random_dataset(rng, 50)
    assert parse_dataset(ds.to_csv(), format="csv") == ds


def _random_dataset(rng, n):
    lines = ['{"labels": ["x", "y", "z"], "models": ["m1", "m2"]}']
    for i in range(n):
        p = {m: (rng.dirichlet(np.ones(3)) * (1 + rng.uniform(-5e-7, 5e-7))).tolist() for m in ("m1", "m2")}
        lines.append(json.dumps({"id": f"r{i}", "outcome": "xyz"[rng.integers(0, 3)], "p": p}))
    return parse_dataset("\n".join(lines) + "\n")


def test_csv_format():
    text = "observation_id,outcome,g:rain,g:sun,k:rain,k:sun\nday-1,rain,0.7,0.3,0.5,0.5\n\"day,2\",sun,0.1,0.9,1,0\n"
    ds = parse_dataset(text.encode(), format="csv")
    assert ds.ids == ("day-1", "day,2")
    assert ds.outcomes.tolist() == [0, 1]
    assert ds.predictions("k").tolist() == [[0.5, 0.5], [1.0, 0.0]]


def test_csv_column_order_is_free():
    text = "observation_id,outcome,k:sun,g:rain,k:rain,g:sun\nd,rain,0.5,0.7,0.5,0.3\n"
    ds = parse_dataset(text, format="csv")
    assert ds.labels == ("sun", "rain")
    assert ds.predictions("g").tolist() == [[0.3, 0.7]]


@pytest.mark.parametrize(
    "text, message",
    [
        ("id,outcome,g:a,g:b\n", "observation_id"),
        ("observation_id,outcome,g:a,gb\n", "model:label"),
        ("observation_id,outcome,g:a,g:b,k:a\n", "one column per model"),
        ("observation_id,outcome,g:a,g:b\nx,a,0.5\n", "expected 4 fields"),
        ("observation_id,outcome,g:a,g:b\nx,a,0.5,half\n", "cannot parse"),
    ],
)
def test_csv_errors(text, message):
    with pytest.raises(DatasetError, match=message):
        parse_dataset(text, format="csv")


def test_csv_error_line_number():
    text = "observation_id,outcome,g:a,g:b\nx,a,0.5,0.5\ny,c,0.5,0.5\n"
    with pytest.raises(DatasetError) as info:
        parse_dataset(text, format="csv")
    assert info.value.line == 3


def test_unknown_format():
    with pytest.raises(ValueError):
        parse_dataset(b"", format="xml")


def test_load_dataset_infers_format(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("observation_id,outcome,g:a,g:b\nx,a,0.5,0.5\n")
    assert load_dataset(p).n == 1
    q = tmp_path / "d.jsonl"
    q.write_bytes(jsonl(rec("a", "rain", [0.7, 0.3], [0.5, 0.5])))
    assert load_dataset(q).models == ("g", "k")


def test_align_models_preserves_file_order():
    ds = parse_dataset(jsonl(rec("b", "sun", [0.1, 0.9], [0.5, 0.5]), rec("a", "rain", [0.9, 0.1], [0.2, 0.8])))
    la, lb = align_models(ds, "g", "k").losses("quadratic")
    assert la.tolist() == pytest.approx([-1.8 + 0.82, -1.8 + 0.82])
    assert lb.tolist() == pytest.approx([-0.5, -0.4 + 0.68])
    with pytest.raises(KeyError):
        align_models(ds, "g", "m3")


def test_align_models_infinite_loss():
    ds = parse_dataset(jsonl(rec("a", "rain", [0.0, 1.0], [0.5, 0.5]), rec("b", "sun", [0.5, 0.5], [0.5, 0.5])))
    pair = align_models(ds, "g", "k")
    with pytest.raises(InfiniteLossError):
        pair.paired_sample("log")
    assert pair.support_disagreements() == ["a"]
    assert np.all(np.isfinite(pair.paired_sample("quadratic").a))


def test_dataset_is_immutable():
    ds = parse_dataset(jsonl(rec("a", "rain", [0.7, 0.3], [0.5, 0.5])))
    with pytest.raises(ValueError):
        ds.predictions("g")[0, 0] = 0.1
    records = list(ds.records())
    assert records[0].outcome_label == "rain"
    assert records[0].predictions["k"] == (0.5, 0.5)

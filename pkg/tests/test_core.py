import numpy as np
import pytest

from motiontape.core import (
    Dataset, KinematicsSample, MovementLabel, MTSample,
    read_dataset, validate_dataset, write_dataset,
)
from motiontape.errors import DataError


def make_sample(subject="S01", rep=1, label=MovementLabel.FLEXION, T=20, fill=0.5):
    return MTSample(subject, rep, label, np.full((6, T), fill))


def test_label_encoding_round_trip():
    for label in MovementLabel:
        assert MovementLabel(int(label)) is label
    assert [int(l) for l in MovementLabel] == [0, 1, 2, 3, 4, 5]
    assert len(MovementLabel) == 6


def test_label_from_name():
    assert MovementLabel.from_name("flexion") is MovementLabel.FLEXION
    assert MovementLabel.from_name("LATERAL_BEND_LEFT") is MovementLabel.LATERAL_BEND_LEFT
    with pytest.raises(DataError):
        MovementLabel.from_name("shrug")


def test_sample_values_are_locked():
    s = make_sample()
    with pytest.raises(ValueError):
        s.values[0, 0] = 2.0


def test_validate_empty_dataset_is_vacuously_valid():
    assert validate_dataset(Dataset(())) == []


def test_validate_range_violation_after_processing():
    good = make_sample(fill=0.5)
    bad = MTSample("S02", 1, MovementLabel.EXTENSION, np.full((6, 20), 1.5))
    d = Dataset((good, bad), processed=True)
    report = validate_dataset(d)
    assert any(v.rule == "value_range" and v.index == 1 for v in report)
    assert not any(v.index == 0 for v in report)


def test_validate_flags_imbalance_only_when_complete():
    samples = (make_sample(label=MovementLabel.FLEXION),
               make_sample("S02", 1, MovementLabel.EXTENSION),
               make_sample("S03", 1, MovementLabel.EXTENSION))
    assert validate_dataset(Dataset(samples)) == []
    report = validate_dataset(Dataset(samples, metadata={"complete": True}))
    assert any(v.rule == "unbalanced" for v in report)


def test_validate_kinematics_pairing():
    s = make_sample(T=20)
    k = KinematicsSample(np.zeros((6, 20)))
    assert validate_dataset(Dataset((s,), (k,))) == []
    report = validate_dataset(Dataset((s,), (None,)))
    assert any(v.rule == "kin_missing" for v in report)
    short = KinematicsSample(np.zeros((6, 10)))
    report = validate_dataset(Dataset((s,), (short,)))
    assert any(v.rule == "kin_length" for v in report)


def test_csv_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    samples, kins = [], []
    for subj in ("S01", "S02"):
        for label in (MovementLabel.FLEXION, MovementLabel.ROTATION_RIGHT):
            for rep in (1, 2):
                samples.append(MTSample(subj, rep, label, rng.normal(size=(6, 15))))
                kins.append(KinematicsSample(rng.normal(size=(6, 15))))
    d = Dataset(tuple(samples), tuple(kins), {"seed": 7})

    path = tmp_path / "data.csv"
    write_dataset(d, path)
    back = read_dataset(path)

    assert len(back) == len(d)
    by_key = {s.key: i for i, s in enumerate(back.samples)}
    for i, s in enumerate(d.samples):
        j = by_key[s.key]
        assert np.array_equal(back.samples[j].values, s.values)
        assert np.array_equal(back.kinematics[j].values, d.kinematics[i].values)


def test_csv_write_is_deterministic(tmp_path):
    rng = np.random.default_rng(3)
    samples = tuple(MTSample(f"S{i:02d}", 1, MovementLabel(i % 6), rng.normal(size=(6, 8)))
                    for i in range(6))
    d = Dataset(samples)
    write_dataset(d, tmp_path / "a.csv")
    write_dataset(d, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_subset_preserves_pairing():
    samples = tuple(make_sample(f"S{i:02d}") for i in range(4))
    kins = tuple(KinematicsSample(np.full((6, 20), i / 10)) for i in range(4))
    d = Dataset(samples, kins, {"complete": True})
    sub = d.subset([2, 0])
    assert sub.samples[0].subject_id == "S02"
    assert sub.kinematics[0].values[0, 0] == 0.2
    assert "complete" not in sub.metadata

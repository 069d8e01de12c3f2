import numpy as np
import pytest

from ucat import io
from ucat.data import SyntheticDatasetSpec, gen_data, nearest_centroid_accuracy
from ucat.errors import FormatError, ShapeError
from ucat.model import ToyContrastiveModel
from ucat.train import TrainConfig, finetune


def small_spec(**kw):
    return SyntheticDatasetSpec(**dict(dict(n_train=200, n_test=50, seed=3), **kw))


def test_gen_data_is_byte_deterministic(tmp_path):
    io.save_dataset(gen_data(small_spec()), tmp_path / "a")
    io.save_dataset(gen_data(small_spec()), tmp_path / "b")
    for split in ("train.csv", "test.csv"):
        assert (tmp_path / "a" / split).read_bytes() == (tmp_path / "b" / split).read_bytes()
    io.save_dataset(gen_data(small_spec(seed=4)), tmp_path / "c")
    assert (tmp_path / "a" / "train.csv").read_bytes() != (tmp_path / "c" / "train.csv").read_bytes()


def test_noiseless_samples_sit_on_class_means():
    ds = gen_data(small_spec(noise_sigma=0.0))
    for k in range(10):
        rows = ds.X_train[ds.y_train == k]
        np.testing.assert_array_equal(rows, np.broadcast_to(rows[0], rows.shape))
    assert ds.header["squash_offset"] == 0.5


def test_default_spec_is_nearly_separable():
    ds = gen_data(SyntheticDatasetSpec())
    assert ds.header["nearest_centroid_train_acc"] >= 0.99
    assert nearest_centroid_accuracy(ds.X_train, ds.y_train, 10) == ds.header["nearest_centroid_train_acc"]
    assert ds.X_train.min() >= 0 and ds.X_train.max() <= 1


def test_impossible_separation():
    with pytest.raises(ValueError):
        SyntheticDatasetSpec(n_classes=10, input_dim=8)
    with pytest.raises(ValueError):
        SyntheticDatasetSpec(n_classes=1)
    with pytest.raises(ValueError):
        SyntheticDatasetSpec(noise_sigma=-1)


def test_dataset_roundtrip(tmp_path):
    ds = gen_data(small_spec())
    io.save_dataset(ds, tmp_path)
    back = io.load_dataset(tmp_path)
    np.testing.assert_array_equal(back.X_train, ds.X_train)
    np.testing.assert_array_equal(back.y_test, ds.y_test)
    assert back.header == ds.header


def test_dataset_errors_name_line_and_field(tmp_path):
    io.save_dataset(gen_data(small_spec()), tmp_path)
    path = tmp_path / "train.csv"
    lines = path.read_text().splitlines()
    fields = lines[4].split(",")
    fields[2] = "oops"
    lines[4] = ",".join(fields)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as info:
        io.load_dataset(tmp_path)
    assert info.value.line == 5 and info.value.field == "x1"
    assert "line 5" in str(info.value)


def test_model_checkpoint_roundtrip(tmp_path):
    model = ToyContrastiveModel.initialize(32, 8, 10, seed=2)
    io.save_model(model, tmp_path / "m.json")
    back = io.load_model(tmp_path / "m.json")
    assert back.weight.tobytes() == model.weight.tobytes()
    assert back.prototypes.tobytes() == model.prototypes.tobytes()
    assert back.metadata == model.metadata


def test_train_log_roundtrip(tmp_path):
    ds = gen_data(small_spec())
    _, log = finetune(ToyContrastiveModel.initialize(32, 8, 10), ds.X_train, ds.y_train,
                      TrainConfig(epochs=2), X_val=ds.X_test, y_val=ds.y_test)
    io.save_train_log(log, tmp_path / "log.jsonl")
    assert io.load_train_log(tmp_path / "log.jsonl") == log
    assert io.load_any(tmp_path / "log.jsonl") == log


def make_dump(**kw):
    args = dict(logits=np.array([[1.0, -2.0, 0.5], [3.0, 0.0, 0.0]]), labels=[0, 2],
                ids=["a", "b"], conditions=["clean", "adversarial"], tau=0.07, source="unit test")
    args.update(kw)
    return io.LogitDump(**args)


def test_logit_dump_roundtrip(tmp_path):
    dump = make_dump(extra={"model": "toy"})
    io.write_logit_dump(dump, tmp_path / "d.csv")
    back = io.read_logit_dump(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.logits, dump.logits)
    assert (back.ids, back.conditions, back.tau, back.source, back.extra) == (
        dump.ids, dump.conditions, dump.tau, dump.source, dump.extra)
    assert list(back.labels) == [0, 2]


def test_logit_dump_validation():
    with pytest.raises(ShapeError):
        make_dump(labels=[0])
    with pytest.raises(ValueError):
        make_dump(conditions=["clean", "attacked"])
    with pytest.raises(ValueError):
        make_dump(tau=0.0)


@pytest.mark.parametrize("mutate,line,field", [
    (lambda L: L.__setitem__(2, L[2].replace("1.0", "x")), 3, "l0"),
    (lambda L: L.__setitem__(3, L[3].replace("adversarial", "noisy")), 4, "condition"),
    (lambda L: L.__setitem__(2, L[2].replace("a,0", "a,7")), 3, "label"),
    (lambda L: L.__setitem__(3, L[3] + ",9.0"), 4, None),
    (lambda L: L.__setitem__(0, L[0].replace('"tau": 0.07', '"tau": -1')), 1, "tau"),
    (lambda L: L.__setitem__(0, L[0].replace('"version": "1.0"', '"version": "2.0"')), 1, "version"),
])
def test_logit_dump_errors(tmp_path, mutate, line, field):
    io.write_logit_dump(make_dump(), tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    mutate(lines)
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as info:
        io.read_logit_dump(tmp_path / "d.csv")
    assert info.value.line == line
    if field:
        assert info.value.field == field


def test_attack_records_roundtrip(tmp_path):
    recs = [{"id": 0, "loss_trace": [0.1, None]}]
    io.save_attack_records(recs, tmp_path / "a.jsonl", {"epsilon": 0.1})
    assert io.load_attack_records(tmp_path / "a.jsonl") == ({"epsilon": 0.1}, recs)


def test_json_rejects_nan(tmp_path):
    with pytest.raises(ValueError):
        io.write_json(tmp_path / "x.json", {"a": float("nan")})


def test_unrecognised_files(tmp_path):
    (tmp_path / "x.txt").write_text("hello")
    with pytest.raises(FormatError):
        io.load_any(tmp_path / "x.txt")
    (tmp_path / "y.json").write_text("{not json")
    with pytest.raises(FormatError):
        io.read_json(tmp_path / "y.json")

import json

import pytest

from sepqe.errors import DataError
from sepqe.manifest import (ManifestEntry, MetricLabels, read_manifest,
                            split_entries, validate_entry, write_manifest)


def make_labels(wer1=0.2, wer2=0.4, s1=10.0, s2=14.0):
    return MetricLabels(
        wer_s1=wer1, wer_s2=wer2, wer_avg=(wer1 + wer2) / 2,
        sisnr_s1=s1, sisnr_s2=s2, sisnr_avg=(s1 + s2) / 2)


def make_entry(i=0, split="train", **kwargs):
    return ManifestEntry(
        id=f"{split}-{i:05d}",
        split=split,
        audio={"mixture": f"wav/{i}.mix.wav", "est1": f"wav/{i}.e1.wav",
               "est2": f"wav/{i}.e2.wav"},
        labels=make_labels(),
        regime="mid",
        **kwargs)


def test_round_trip_deep_equal(tmp_path):
    entries = [make_entry(i, split=s) for s in ("train", "valid", "test")
               for i in range(34)]
    path = tmp_path / "manifest.jsonl"
    write_manifest(path, entries)
    back = read_manifest(path)
    assert len(back) == len(entries)
    for a, b in zip(entries, back):
        assert a.to_dict() == b.to_dict()


def test_unknown_fields_preserved(tmp_path):
    entry = make_entry(extra={"exporter": {"model": "x", "layer": -1}})
    path = tmp_path / "manifest.jsonl"
    write_manifest(path, [entry])
    back = read_manifest(path)
    assert back[0].extra == {"exporter": {"model": "x", "layer": -1}}
    write_manifest(path, back)
    assert read_manifest(path)[0].extra["exporter"]["model"] == "x"


def test_avg_mismatch_rejected():
    entry = make_entry()
    entry.labels.wer_avg = 0.9
    with pytest.raises(DataError, match="mean"):
        validate_entry(entry)


def test_missing_labels_rejected():
    entry = make_entry()
    entry.labels = None
    with pytest.raises(DataError, match="labels"):
        validate_entry(entry)


def test_negative_wer_rejected():
    entry = make_entry()
    entry.labels.wer_s1 = -0.1
    entry.labels.wer_avg = (entry.labels.wer_s1 + entry.labels.wer_s2) / 2
    with pytest.raises(DataError, match="non-negative"):
        validate_entry(entry)


def test_unknown_split_rejected():
    with pytest.raises(DataError, match="split"):
        validate_entry(make_entry(split="dev"))


def test_missing_audio_track_rejected():
    entry = make_entry()
    del entry.audio["est2"]
    with pytest.raises(DataError, match="est2"):
        validate_entry(entry)


def test_partial_feature_paths_rejected():
    entry = make_entry(features={"mix": "f/mix.rfqf"})
    with pytest.raises(DataError, match="feature"):
        validate_entry(entry)


def test_empty_file_is_empty_manifest(tmp_path):
    path = tmp_path / "manifest.jsonl"
    path.write_text("")
    assert read_manifest(path) == []


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "manifest.jsonl"
    good = json.dumps(make_entry().to_dict())
    path.write_text(good + "\n{not json}\n")
    with pytest.raises(DataError, match="line 2"):
        read_manifest(path)


def test_split_entries_filters():
    entries = [make_entry(i, split=s) for s in ("train", "valid") for i in range(3)]
    assert len(split_entries(entries, "train")) == 3
    with pytest.raises(DataError):
        split_entries(entries, "all")


def test_labels_require_all_fields():
    labels = MetricLabels(wer_s1=0.1)
    with pytest.raises(DataError, match="missing"):
        labels.validate()

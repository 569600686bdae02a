from collections import Counter

import numpy as np
import pytest

from phishdefense.codec import default_vocab
from phishdefense.data import LabeledDataset, batches, load_csv, split
from phishdefense.errors import DataError

VOCAB = default_vocab()


def write_csv(tmp_path, rows, header="url,label"):
    path = tmp_path / "data.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return str(path)


class TestLoadCsv:
    def test_basic(self, tmp_path):
        path = write_csv(tmp_path, ["http://a.com,0", "http://b.com,1"])
        ds = load_csv(path)
        assert len(ds) == 2
        assert ds.records[0] == ("http://a.com", 0)

    def test_word_labels_case_insensitive(self, tmp_path):
        path = write_csv(tmp_path, ["http://a.com,Phishing", "http://b.com,LEGITIMATE"])
        ds = load_csv(path)
        assert [lab for _, lab in ds.records] == [1, 0]

    def test_unknown_label_reports_line(self, tmp_path):
        path = write_csv(tmp_path, ["http://a.com,0", "http://b.com,2"])
        with pytest.raises(DataError, match=":3"):
            load_csv(path)

    def test_missing_file(self):
        with pytest.raises(DataError):
            load_csv("/nonexistent/nope.csv")

    def test_bad_header(self, tmp_path):
        path = write_csv(tmp_path, ["http://a.com,0"], header="link,verdict")
        with pytest.raises(DataError, match="header"):
            load_csv(path)

    def test_quoted_url_with_comma(self, tmp_path):
        path = write_csv(tmp_path, ['"http://a.com/x,y",1'])
        ds = load_csv(path)
        assert ds.records[0] == ("http://a.com/x,y", 1)

    def test_duplicates_kept_unless_dedup(self, tmp_path):
        path = write_csv(tmp_path, ["http://a.com,0", "http://a.com,0"])
        assert len(load_csv(path)) == 2
        assert len(load_csv(path, dedup=True)) == 1

    def test_empty_url_rejected(self, tmp_path):
        path = write_csv(tmp_path, [",0"])
        with pytest.raises(DataError, match="empty url"):
            load_csv(path)
        assert len(load_csv(path, allow_empty_url=True)) == 1


def toy_dataset(n, phish_every=2):
    return LabeledDataset(
        records=[(f"http://site{i}.com", 1 if i % phish_every == 0 else 0) for i in range(n)]
    )


class TestSplit:
    def test_paper_scale_counts(self):
        ds = toy_dataset(46839)
        pair = split(ds, 0.75, seed=0)
        assert len(pair.train) == 35129
        assert len(pair.test) == 46839 - 35129

    def test_small_split(self):
        ds = toy_dataset(4)
        pair = split(ds, 0.75, seed=9)
        assert len(pair.train) == 3 and len(pair.test) == 1
        combined = Counter(pair.train.records) + Counter(pair.test.records)
        assert combined == Counter(ds.records)

    def test_deterministic(self):
        ds = toy_dataset(100)
        a = split(ds, 0.75, seed=4)
        b = split(ds, 0.75, seed=4)
        assert a.train.records == b.train.records
        assert a.test.records == b.test.records

    def test_partition_property(self):
        ds = toy_dataset(137)
        pair = split(ds, 0.6, seed=2)
        combined = Counter(pair.train.records) + Counter(pair.test.records)
        assert combined == Counter(ds.records)

    def test_stratified_preserves_proportions(self):
        ds = toy_dataset(100, phish_every=4)  # 25 phishing
        pair = split(ds, 0.75, seed=1, stratify=True)
        train_pos = sum(lab for _, lab in pair.train.records)
        assert abs(train_pos - 0.75 * 25) <= 1

    def test_too_small(self):
        with pytest.raises(DataError):
            split(toy_dataset(1), 0.5, seed=0)

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            split(toy_dataset(10), 1.0, seed=0)


class TestBatches:
    def test_batch_count_with_partial(self):
        ds = toy_dataset(35129)
        n = sum(1 for _ in batches(ds, 500, 0, VOCAB, 8))
        assert n == 71  # 70 full + 1 partial of 129

    def test_partial_batch_kept(self):
        ds = toy_dataset(3)
        out = list(batches(ds, 5, 0, VOCAB, 8))
        assert len(out) == 1 and out[0][0].shape[0] == 3

    def test_reshuffle_same_multiset(self):
        ds = toy_dataset(50)
        lab1 = np.concatenate([b[2] for b in batches(ds, 7, 1, VOCAB, 8)])
        lab2 = np.concatenate([b[2] for b in batches(ds, 7, 2, VOCAB, 8)])
        assert not np.array_equal(lab1, lab2)
        assert Counter(lab1.tolist()) == Counter(lab2.tolist())

    def test_epoch_labels_are_permutation(self):
        ds = toy_dataset(23)
        labels = np.concatenate([b[2] for b in batches(ds, 4, 3, VOCAB, 8)])
        assert Counter(labels.tolist()) == Counter(ds.labels().tolist())

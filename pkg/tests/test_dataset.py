import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daepos import dataset as ds
from daepos.dataset import Fingerprint

HEADER = ",".join(ds.COLUMNS)


def fp(label="Bedroom", phone="phone1", **kw):
    base = dict(
        date_time="20200101120000", plmn_id="310260", enodeb_id=383045, cell_id=8,
        eci=98059528, rsrp=-95.0, rsrq=-10.0, sinr=5.0, umts_neighbors=2,
        lte_neighbors=4, rsrp_strongest=-100.0, label=label, phone=phone,
    )
    base.update(kw)
    return Fingerprint(**base)


class TestParse:
    def test_eci_identity(self):
        assert 256 * 383045 + 8 == 98059528
        text = HEADER + "\n20200101120000,310260,383045,8,98059528,-95,-10,5,2,4,-100\n"
        (row,) = ds.parse_csv(io.StringIO(text), label="Bedroom", phone="phone1")
        assert row.eci == 98059528 and row.valid

    def test_eci_mismatch_flagged(self):
        text = HEADER + "\n20200101120000,310260,383045,8,98059529,-95,-10,5,2,4,-100\n"
        (row,) = ds.parse_csv(io.StringIO(text))
        assert "eci_identity" in row.flags

    def test_empty_file(self):
        assert ds.parse_csv(io.StringIO(HEADER + "\n")) == []

    def test_cell_id_range(self):
        eci = 256 * 1 + 300
        text = HEADER + f"\n20200101120000,310260,1,300,{eci},-95,-10,5,2,4,-100\n"
        (row,) = ds.parse_csv(io.StringIO(text))
        assert row.flags == ("cell_id_range",)

    def test_column_order_insensitive(self):
        cols = list(reversed(ds.COLUMNS))
        vals = dict(zip(ds.COLUMNS, "20200101120000,310260,383045,8,98059528,-95,-10,5,2,4,-100".split(",")))
        text = ",".join(cols) + "\n" + ",".join(vals[c] for c in cols) + "\n"
        (row,) = ds.parse_csv(io.StringIO(text))
        assert row.rsrp == -95 and row.rsrp_strongest == -100

    def test_missing_column(self):
        with pytest.raises(ds.DataError, match="SINR"):
            ds.parse_csv(io.StringIO(HEADER.replace(",SINR", "") + "\n"))

    def test_bad_number_reports_line(self):
        text = HEADER + "\n20200101120000,310260,383045,8,98059528,-95,-10,5,2,4,-100\n" \
                        "20200101120001,310260,383045,8,98059528,abc,-10,5,2,4,-100\n"
        with pytest.raises(ds.DataError, match="line 3"):
            ds.parse_csv(io.StringIO(text))

    def test_bytes_stream(self):
        raw = (HEADER + "\n20200101120000,310260,383045,8,98059528,-95,-10,5,2,4,-100\n").encode()
        assert len(ds.parse_csv(io.BytesIO(raw))) == 1

    def test_label_from_filename(self, tmp_path):
        path = tmp_path / "Phone2_Walk-in_closet.csv"
        ds.write_csv([fp()], path)
        (row,) = ds.parse_csv(path)
        assert (row.phone, row.label) == ("phone2", "Walk-in_closet")

    def test_bad_filename(self, tmp_path):
        path = tmp_path / "bedroom.csv"
        path.write_text(HEADER + "\n")
        with pytest.raises(ds.DataError):
            ds.parse_csv(path)

    def test_roundtrip(self):
        rows = [fp(rsrp=-95.5, sinr=12.25), fp(cell_id=9, eci=98059529, umts_neighbors=0)]
        buf = io.StringIO()
        ds.write_csv(rows, buf)
        back = ds.parse_csv(io.StringIO(buf.getvalue()), label="Bedroom", phone="phone1")
        assert back == rows

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(
        st.integers(0, 2**20), st.integers(0, 255),
        st.floats(-140, -44, allow_nan=False), st.floats(-20, -3), st.floats(-10, 30),
        st.integers(0, 10), st.integers(0, 10), st.floats(-140, -44),
    ), max_size=10))
    def test_roundtrip_property(self, rows):
        fps = [fp(enodeb_id=e, cell_id=c, eci=256 * e + c, rsrp=a, rsrq=b, sinr=s,
                  umts_neighbors=u, lte_neighbors=l, rsrp_strongest=r)
               for e, c, a, b, s, u, l, r in rows]
        buf = io.StringIO()
        ds.write_csv(fps, buf)
        assert ds.parse_csv(io.StringIO(buf.getvalue()), label="Bedroom", phone="phone1") == fps


class TestFeatures:
    def test_projection(self):
        f = fp(rsrp=-95, rsrq=-10, sinr=5, umts_neighbors=2, lte_neighbors=4, rsrp_strongest=-100)
        np.testing.assert_array_equal(ds.extract_features(f), [-95, -10, 5, 2, 4, -100])

    def test_length_and_order_stable(self):
        f = fp()
        assert len(ds.extract_features(f)) == 6
        np.testing.assert_array_equal(ds.extract_features(f), ds.extract_features(f))
        assert ds.FEATURES == ("RSRP", "RSRQ", "SINR", "UMTS_neighbors", "LTE_neighbors", "RSRP_strongest")


def make_phones(per_space_phone, spaces=("A", "B", "C")):
    out = {}
    for phone in ("phone1", "phone2"):
        out[phone] = [
            fp(label=s, phone=phone, rsrp=float(-100 + i), sinr=float(j))
            for j, s in enumerate(spaces)
            for i in range(per_space_phone)
        ]
    return out


class TestSplit:
    def test_reference_counts(self):
        split = ds.combine_and_split(make_phones(1500, spaces=("Bedroom", "Kitchen")), 0.8, seed=0)
        for c in split.counts().values():
            assert c == {"train": 2400, "test": 600}

    def test_half(self):
        split = ds.combine_and_split({"phone1": [fp(label="A")] * 10 + [fp(label="B")] * 10}, 0.5, 1)
        assert split.counts() == {"A": {"train": 5, "test": 5}, "B": {"train": 5, "test": 5}}

    def test_deterministic_membership(self):
        a = ds.combine_and_split(make_phones(20), 0.8, seed=3)
        b = ds.combine_and_split(make_phones(20), 0.8, seed=3)
        c = ds.combine_and_split(make_phones(20), 0.8, seed=4)
        np.testing.assert_array_equal(a.X_train, b.X_train)
        np.testing.assert_array_equal(a.phone_test, b.phone_test)
        assert not np.array_equal(a.X_train, c.X_train)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 40), st.floats(0.05, 0.95), st.integers(0, 100))
    def test_stratified(self, n, ratio, seed):
        split = ds.combine_and_split({"phone1": [fp(label="A")] * n + [fp(label="B")] * (n + 3)}, ratio, seed)
        for name, total in (("A", n), ("B", n + 3)):
            c = split.counts()[name]
            assert c["train"] + c["test"] == total
            assert c["train"] >= 1 and c["test"] >= 1
            assert abs(c["train"] - ratio * total) <= 1

    def test_disjoint(self):
        phones = {"phone1": [fp(label="A", rsrp=float(-i)) for i in range(50)]}
        split = ds.combine_and_split(phones, 0.8, 0)
        tr = {tuple(r) for r in split.X_train}
        te = {tuple(r) for r in split.X_test}
        assert not tr & te and len(tr) + len(te) == 50

    def test_too_small_space(self):
        with pytest.raises(ds.DataError, match="Lonely"):
            ds.combine_and_split({"phone1": [fp(label="Lonely"), fp(label="A"), fp(label="A")]})

    def test_ratio_range(self):
        with pytest.raises(ValueError):
            ds.combine_and_split(make_phones(5), ratio=1.0)

    def test_normalizer_from_train_only(self):
        split = ds.combine_and_split(make_phones(30), 0.8, 0)
        before = split.normalizer
        split.X_test[:] = 1e6  # mutate the test set
        refit = ds.fit_normalizer(split.X_train)
        assert refit == before

    def test_restrict_train(self):
        split = ds.combine_and_split(make_phones(30), 0.8, 0)
        sub = split.restrict_train("phone2")
        assert set(sub.phone_train) == {"phone2"}
        assert sub.normalizer == ds.fit_normalizer(split.X_train[split.phone_train == "phone2"])

    def test_manifest(self):
        import json
        split = ds.combine_and_split(make_phones(10), 0.8, 7)
        doc = json.loads(ds.manifest(split, ["Phone1_A.csv"], synthetic=True))
        assert doc["split_seed"] == 7 and doc["synthetic"] and doc["counts"]["A"]["train"] == 16


class TestNormalizer:
    def test_fit(self):
        p = ds.fit_normalizer([[0, 1, 2, 3, 4, 5], [10, 1, 2, 3, 4, 6]])
        assert p.min[0] == 0 and p.max[0] == 10

    def test_endpoints_midpoint(self):
        p = ds.NormalizationParams(np.array([-140.0, 0]), np.array([-44.0, 10]))
        np.testing.assert_array_equal(ds.apply_normalizer(p, [-140, 0]), [0, 0])
        np.testing.assert_array_equal(ds.apply_normalizer(p, [-44, 10]), [1, 1])
        np.testing.assert_array_equal(ds.apply_normalizer(p, [-92, 5]), [0.5, 0.5])

    def test_clamp(self):
        p = ds.NormalizationParams(np.zeros(2), np.ones(2))
        np.testing.assert_array_equal(ds.apply_normalizer(p, [-3, 7]), [0, 1])

    def test_constant_feature(self):
        p = ds.fit_normalizer([[3.0, 1.0], [3.0, 2.0]])
        assert p.min[0] == p.max[0] == 3.0
        np.testing.assert_array_equal(ds.apply_normalizer(p, [[3.0, 1.5], [9.0, 2.0]])[:, 0], [0, 0])

    def test_empty(self):
        with pytest.raises(ValueError):
            ds.fit_normalizer(np.zeros((0, 6)))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.lists(st.floats(-1e4, 1e4), min_size=6, max_size=6), min_size=1, max_size=20),
           st.lists(st.floats(-1e5, 1e5), min_size=6, max_size=6))
    def test_output_in_unit_interval(self, train, x):
        out = ds.apply_normalizer(ds.fit_normalizer(train), x)
        assert np.all((out >= 0) & (out <= 1))

    def test_dict_roundtrip(self):
        p = ds.NormalizationParams(np.array([0.1, -3.3]), np.array([0.7, 1 / 3]))
        assert ds.NormalizationParams.from_dict(p.to_dict()) == p


class TestSynth:
    def test_deterministic(self):
        assert ds.synth_generate(3, 10, 1.0, 0.05, seed=2) == ds.synth_generate(3, 10, 1.0, 0.05, seed=2)

    def test_zero_separation_equal_means(self):
        data = ds.synth_generate(3, 5000, separation=0.0, noise=0.02, seed=0)
        means = [ds.feature_matrix(v).mean(axis=0) for v in data.values()]
        spans = np.array([hi - lo for lo, hi in ds.FEATURE_RANGES])
        for m in means[1:]:
            assert np.all(np.abs(m - means[0]) / spans < 0.01)

    def test_ranges_and_identity(self):
        data = ds.synth_generate(8, 50, 1.0, 0.2, seed=1)
        X = ds.feature_matrix([f for v in data.values() for f in v])
        for j, (lo, hi) in enumerate(ds.FEATURE_RANGES):
            assert X[:, j].min() >= lo and X[:, j].max() <= hi
        assert all(f.valid for v in data.values() for f in v)
        assert [s.name for s in data][:3] == ["Living_room", "Sunroom", "Bedroom"]

    def test_one_nn_separable(self):
        from daepos import baselines
        data = ds.synth_generate(8, 100, separation=1.0, noise=0.02, seed=5)
        split = ds.combine_and_split(ds.by_phone(data), 0.8, 0)
        Xtr, Xte = split.normalized()
        model = baselines.knn_fit(Xtr, split.y_train, 1)
        assert np.mean(baselines.knn_predict_batch(model, Xte) == split.y_test) >= 0.95

    def test_invalid(self):
        with pytest.raises(ValueError):
            ds.synth_generate(1, 10)
        with pytest.raises(ValueError):
            ds.synth_generate(3, 1)

    def test_write_and_load_directory(self, tmp_path):
        data = ds.synth_generate(2, 6, seed=0)
        paths = ds.write_directory(data, tmp_path)
        assert sorted(p.name for p in paths) == sorted(
            ["Phone1_Living_room.csv", "Phone2_Living_room.csv", "Phone1_Sunroom.csv", "Phone2_Sunroom.csv"]
        )
        loaded = ds.load_directory(tmp_path)
        assert sorted(loaded) == ["phone1", "phone2"] and len(loaded["phone1"]) == 6

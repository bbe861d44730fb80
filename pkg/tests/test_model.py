import json

import numpy as np
import pytest
import torch

from actionitems.context import FOCUS_CLOSE, FOCUS_OPEN
from actionitems.corpus import Meeting, SentenceRecord
from actionitems.errors import LayerCompatibilityError
from actionitems.model import (
    HashedNgramFeaturizer,
    ParameterSet,
    TinyTextClassifier,
    WindowSpec,
    ensemble_init,
    forward,
    load_ensemble_manifest,
    make_windows,
    read_npz,
    sentence_unit_lengths,
    write_npz,
)


def param_set(seed, shape=(3, 4)):
    rng = np.random.default_rng(seed)
    return ParameterSet(
        layers={
            "enc.w": rng.normal(size=shape),
            "enc.b": rng.normal(size=shape[0]),
            "pool.w": rng.normal(size=(shape[0], shape[0])),
        },
        encoder_layers=("enc.w", "enc.b"),
        pooler_layer=("pool.w",),
    )


# ---------------------------------------------------------------------------
# Featurizer
# ---------------------------------------------------------------------------

class TestFeaturizer:
    F = HashedNgramFeaturizer(dim=512)

    def test_deterministic(self):
        a = self.F.features("hello world again")
        b = self.F.features("hello world again")
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        vec = self.F.features("some words in here")
        assert np.linalg.norm(vec) == pytest.approx(1.0)

    def test_empty_text_is_zero_vector(self):
        assert not self.F.features("").any()

    def test_unmarked_text_treated_as_focus(self):
        # a bare sentence (no markers) hashes as focus region
        plain = self.F.features("finish the report")
        focused = self.F.features(f"{FOCUS_OPEN}finish the report{FOCUS_CLOSE}")
        assert np.array_equal(plain, focused)

    def test_context_does_not_share_focus_buckets(self):
        # same words as context vs as focus must activate different buckets
        as_focus = self.F.features(f"{FOCUS_OPEN}send the notes{FOCUS_CLOSE}")
        as_ctx = self.F.features(f"send the notes ⟂ {FOCUS_OPEN}ok{FOCUS_CLOSE}")
        overlap = np.logical_and(as_focus > 0, as_ctx > 0)
        focus_bucket_count = int((as_focus > 0).sum())
        assert overlap.sum() < focus_bucket_count

    def test_max_units_truncates(self):
        long_text = " ".join(f"w{i}" for i in range(100))
        full = self.F.features(long_text)
        cut = self.F.features(long_text, max_units=5)
        assert not np.array_equal(full, cut)
        assert np.array_equal(cut, self.F.features("w0 w1 w2 w3 w4"))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            HashedNgramFeaturizer(dim=0)


# ---------------------------------------------------------------------------
# Toy classifier
# ---------------------------------------------------------------------------

class TestTinyClassifier:
    def net(self, **kw):
        kw.setdefault("feature_dim", 128)
        kw.setdefault("hidden_dim", 8)
        return TinyTextClassifier(**kw)

    def test_output_is_distribution(self):
        dist = self.net().forward_dist("alice: hello there").detach()
        assert dist.shape == (2,)
        assert dist.dtype == torch.float64
        assert float(dist.sum()) == pytest.approx(1.0)
        assert (dist > 0).all()

    def test_empty_text_raises(self):
        with pytest.raises(ValueError):
            self.net().forward_dist("   ")

    def test_eval_mode_deterministic(self):
        net = self.net()
        a = forward(net, "some text here", rng_seed=1, train_mode=False)
        b = forward(net, "some text here", rng_seed=2, train_mode=False)
        assert np.array_equal(a, b)

    def test_train_mode_seed_controls_dropout(self):
        net = self.net(dropout_rate=0.5)
        a = forward(net, "some text here", rng_seed=7, train_mode=True)
        b = forward(net, "some text here", rng_seed=7, train_mode=True)
        c = forward(net, "some text here", rng_seed=8, train_mode=True)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_zero_dropout_train_equals_eval(self):
        net = self.net(dropout_rate=0.0)
        a = forward(net, "words go here", train_mode=True)
        b = forward(net, "words go here", train_mode=False)
        assert np.array_equal(a, b)

    def test_init_seed_reproducible(self):
        a = self.net(init_seed=3)
        b = self.net(init_seed=3)
        c = self.net(init_seed=4)
        text = "compare these weights"
        assert np.array_equal(forward(a, text), forward(b, text))
        assert not np.array_equal(forward(a, text), forward(c, text))

    def test_clone_is_independent(self):
        net = self.net()
        twin = net.clone()
        with torch.no_grad():
            net.encoder.weight.add_(1.0)
        assert not torch.equal(net.encoder.weight, twin.encoder.weight)

    def test_dropout_rate_validation(self):
        with pytest.raises(ValueError):
            self.net(dropout_rate=1.0)

    def test_save_load_round_trip(self, tmp_path):
        net = self.net(init_seed=11, dropout_rate=0.2)
        path = tmp_path / "model.npz"
        net.save(path)
        again = TinyTextClassifier.load(path)
        text = "round trip this"
        assert np.array_equal(forward(net, text), forward(again, text))
        assert again.dropout_rate == 0.2
        assert again.hidden_dim == net.hidden_dim


# ---------------------------------------------------------------------------
# ParameterSet and checkpoint files
# ---------------------------------------------------------------------------

class TestParameterSet:
    def test_partition_enforced(self):
        with pytest.raises(ValueError):
            ParameterSet(
                layers={"a": np.zeros(2)},
                encoder_layers=("a", "b"),
                pooler_layer=(),
            )

    def test_groups_must_not_overlap(self):
        with pytest.raises(ValueError):
            ParameterSet(
                layers={"a": np.zeros(2)},
                encoder_layers=("a",),
                pooler_layer=("a",),
            )

    def test_num_parameters(self):
        ps = param_set(0)
        assert ps.num_parameters() == 12 + 3 + 9

    def test_save_load_round_trip(self, tmp_path):
        ps = param_set(1)
        path = tmp_path / "ps.npz"
        ps.save(path)
        again = ParameterSet.load(path)
        assert again.encoder_layers == ps.encoder_layers
        assert again.pooler_layer == ps.pooler_layer
        for name in ps.layers:
            assert np.array_equal(again.layers[name], ps.layers[name])

    def test_writer_is_byte_deterministic(self, tmp_path):
        ps = param_set(2)
        p1, p2 = tmp_path / "a.npz", tmp_path / "b.npz"
        ps.save(p1)
        ps.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_npz_readable_by_numpy(self, tmp_path):
        path = tmp_path / "plain.npz"
        write_npz(path, {"x": np.arange(4.0)}, {"kind": "test"})
        arrays, meta = read_npz(path)
        assert np.array_equal(arrays["x"], np.arange(4.0))
        assert meta == {"kind": "test"}
        with np.load(path) as npz:
            assert "x" in npz.files


class TestEnsembleInit:
    def test_transplant_bit_equality(self):
        a, b = param_set(10), param_set(20)
        hybrid = ensemble_init(a, b)
        for name in a.encoder_layers:
            assert np.array_equal(hybrid.layers[name], a.layers[name])
        for name in a.pooler_layer:
            assert np.array_equal(hybrid.layers[name], b.layers[name])

    def test_parameter_count_unchanged(self):
        a, b = param_set(10), param_set(20)
        hybrid = ensemble_init(a, b)
        assert hybrid.num_parameters() == a.num_parameters() == b.num_parameters()

    def test_identity(self):
        a = param_set(10)
        hybrid = ensemble_init(a, a)
        for name in a.layers:
            assert np.array_equal(hybrid.layers[name], a.layers[name])

    def test_sources_not_aliased(self):
        a, b = param_set(10), param_set(20)
        hybrid = ensemble_init(a, b)
        hybrid.layers["enc.w"][0, 0] = 999.0
        assert a.layers["enc.w"][0, 0] != 999.0

    def test_name_mismatch_lists_layers(self):
        a = param_set(0)
        b = ParameterSet(
            layers={"enc.w": np.zeros((3, 4)), "enc.b": np.zeros(3), "other.w": np.zeros((3, 3))},
            encoder_layers=("enc.w", "enc.b"),
            pooler_layer=("other.w",),
        )
        with pytest.raises(LayerCompatibilityError) as exc:
            ensemble_init(a, b)
        assert "other.w" in exc.value.layers
        assert "pool.w" in exc.value.layers

    def test_shape_mismatch_rejected(self):
        a = param_set(0, shape=(3, 4))
        b = param_set(1, shape=(3, 5))
        with pytest.raises(LayerCompatibilityError):
            ensemble_init(a, b)

    def test_group_mismatch_rejected(self):
        a = param_set(0)
        b = ParameterSet(
            layers=dict(param_set(1).layers),
            encoder_layers=("enc.w",),
            pooler_layer=("enc.b", "pool.w"),
        )
        with pytest.raises(LayerCompatibilityError):
            ensemble_init(a, b)

    def test_manifest(self, tmp_path):
        a, b = param_set(10), param_set(20)
        a.save(tmp_path / "a.npz")
        b.save(tmp_path / "b.npz")
        manifest = tmp_path / "ensemble.json"
        manifest.write_text(
            json.dumps({"encoder_layers": "a.npz", "pooler_layer": "b.npz"})
        )
        hybrid = load_ensemble_manifest(manifest)
        assert np.array_equal(hybrid.layers["pool.w"], b.layers["pool.w"])

    def test_manifest_missing_key(self, tmp_path):
        manifest = tmp_path / "bad.json"
        manifest.write_text(json.dumps({"encoder_layers": "a.npz"}))
        with pytest.raises(ValueError):
            load_ensemble_manifest(manifest)


class TestModelSurgery:
    """export_parameters / load_parameters on the toy classifier."""

    def test_round_trip_excludes_head(self):
        donor = TinyTextClassifier(feature_dim=64, hidden_dim=8, init_seed=1)
        recipient = TinyTextClassifier(feature_dim=64, hidden_dim=8, init_seed=2)
        head_before = recipient.head.weight.detach().clone()
        recipient.load_parameters(donor.export_parameters())
        assert torch.equal(recipient.encoder.weight, donor.encoder.weight)
        assert torch.equal(recipient.pooler.bias, donor.pooler.bias)
        assert torch.equal(recipient.head.weight, head_before)

    def test_export_groups(self):
        ps = TinyTextClassifier(feature_dim=32, hidden_dim=4).export_parameters()
        assert set(ps.encoder_layers) == {"encoder.weight", "encoder.bias"}
        assert set(ps.pooler_layer) == {"pooler.weight", "pooler.bias"}
        assert ps.num_parameters() == 32 * 4 + 4 + 4 * 4 + 4

    def test_architecture_mismatch(self):
        small = TinyTextClassifier(feature_dim=32, hidden_dim=4)
        big = TinyTextClassifier(feature_dim=32, hidden_dim=8)
        with pytest.raises(LayerCompatibilityError):
            small.load_parameters(big.export_parameters())

    def test_hybrid_behaves_like_sources(self):
        # encoder from A, pooler from B, fresh head: transplanting into a
        # recipient seeded like A only changes pooler-derived behavior
        a = TinyTextClassifier(feature_dim=64, hidden_dim=8, init_seed=1)
        b = TinyTextClassifier(feature_dim=64, hidden_dim=8, init_seed=2)
        hybrid = ensemble_init(a.export_parameters(), b.export_parameters())
        c = TinyTextClassifier(feature_dim=64, hidden_dim=8, init_seed=3)
        c.load_parameters(hybrid)
        assert torch.equal(c.encoder.weight, a.encoder.weight)
        assert torch.equal(c.pooler.weight, b.pooler.weight)


# ---------------------------------------------------------------------------
# Sliding windows
# ---------------------------------------------------------------------------

def lengths_meeting(lengths, mid="w0"):
    return Meeting(
        mid,
        tuple(
            SentenceRecord(mid, i, "s", " ".join(["w"] * n), 0)
            for i, n in enumerate(lengths)
        ),
    )


class TestWindows:
    def test_single_window_when_all_fits(self):
        m = lengths_meeting([3, 3, 3])
        assert make_windows(m, WindowSpec(capacity=20), [3, 3, 3]) == [[0, 1, 2]]

    def test_overlap_one_sentence(self):
        m = lengths_meeting([4, 4, 4, 4])
        windows = make_windows(m, WindowSpec(capacity=8, overlap_sentences=1), [4, 4, 4, 4])
        assert windows == [[0, 1], [1, 2], [2, 3]]

    def test_ten_unit_sentences_capacity_four(self):
        lengths = [1] * 10
        m = lengths_meeting(lengths)
        windows = make_windows(m, WindowSpec(capacity=4, overlap_sentences=1), lengths)
        assert windows == [[0, 1, 2, 3], [3, 4, 5, 6], [6, 7, 8, 9]]

    def test_no_overlap_packs_disjointly(self):
        lengths = [1, 1, 1, 1]
        m = lengths_meeting(lengths)
        windows = make_windows(m, WindowSpec(capacity=2, overlap_sentences=0), lengths)
        assert windows == [[0, 1], [2, 3]]

    def test_coverage_and_overlap_property(self):
        lengths = [5, 9, 2, 8, 6, 3, 7, 4]
        m = lengths_meeting(lengths)
        windows = make_windows(m, WindowSpec(capacity=16, overlap_sentences=1), lengths)
        covered = {sid for w in windows for sid in w}
        assert covered == set(range(len(lengths)))
        for prev, cur in zip(windows, windows[1:]):
            assert prev[-1] == cur[0]  # consecutive windows share one sentence
            assert sum(lengths[s] for s in cur) <= 16

    def test_oversized_sentence_rejected(self):
        m = lengths_meeting([3, 30, 3])
        with pytest.raises(ValueError):
            make_windows(m, WindowSpec(capacity=16), [3, 30, 3])

    def test_overlap_must_admit_progress(self):
        # capacity fits exactly the overlap at a boundary -> no progress possible
        m = lengths_meeting([8, 8, 8])
        with pytest.raises(ValueError):
            make_windows(m, WindowSpec(capacity=8, overlap_sentences=1), [8, 8, 8])

    def test_unit_lengths_helper(self):
        m = lengths_meeting([2, 5])
        assert sentence_unit_lengths(m) == [2, 5]

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            WindowSpec(capacity=0)
        with pytest.raises(ValueError):
            WindowSpec(capacity=4, overlap_sentences=-1)

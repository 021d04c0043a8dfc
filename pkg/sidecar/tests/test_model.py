import numpy as np
import pytest

from lakejoin_sidecar.config import SidecarConfig
from lakejoin_sidecar.model import (
    HashEncoder,
    TinyTransformerEncoder,
    build_encoder,
)


class TestTinyEncoder:
    def test_deterministic_inference(self):
        enc = TinyTransformerEncoder(seed=1)
        a = enc.encode(["hello world", "foo bar baz"])
        b = enc.encode(["hello world", "foo bar baz"])
        assert (a == b).all()

    def test_unit_norm(self):
        enc = TinyTransformerEncoder(seed=2)
        vecs = enc.encode([f"sentence number {i} with words" for i in range(8)])
        np.testing.assert_allclose(np.linalg.norm(vecs, axis=1), 1.0, atol=1e-6)

    def test_same_seed_same_weights(self):
        a = TinyTransformerEncoder(seed=5).encode(["one two"])
        b = TinyTransformerEncoder(seed=5).encode(["one two"])
        assert (a == b).all()

    def test_pooling_modes_differ(self):
        mean = TinyTransformerEncoder(seed=3, pooling="mean").encode(["a b c"])
        cls = TinyTransformerEncoder(seed=3, pooling="cls").encode(["a b c"])
        assert not np.allclose(mean, cls)

    def test_truncates_to_max_seq_length(self):
        enc = TinyTransformerEncoder(seed=0, max_seq_length=16)
        long = " ".join(f"w{i}" for i in range(100))
        short = " ".join(f"w{i}" for i in range(16))
        assert (enc.encode([long]) == enc.encode([short])).all()

    def test_empty_text_encodes(self):
        enc = TinyTransformerEncoder(seed=0)
        assert enc.encode([""]).shape == (1, enc.dim)


class TestHashEncoder:
    def test_zero_for_empty(self):
        enc = HashEncoder(dim=32)
        assert (enc.encode([""]) == 0).all()

    def test_order_insensitive(self):
        enc = HashEncoder(dim=64, seed=2)
        a = enc.encode(["x y z"])
        b = enc.encode(["z x y"])
        assert (a == b).all()


class TestBuildEncoder:
    def test_tiny(self):
        enc = build_encoder(SidecarConfig(model="tiny"))
        assert isinstance(enc, TinyTransformerEncoder)

    def test_hash_spec(self):
        enc = build_encoder(SidecarConfig(model="hash:48:9"))
        assert isinstance(enc, HashEncoder)
        assert enc.dim == 48 and enc.seed == 9

    def test_unavailable_model_falls_back_to_tiny(self):
        enc = build_encoder(SidecarConfig(model="no-such-model/anywhere"))
        assert isinstance(enc, TinyTransformerEncoder)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SidecarConfig(pooling="max")
        with pytest.raises(ValueError):
            SidecarConfig(batch_size=0)

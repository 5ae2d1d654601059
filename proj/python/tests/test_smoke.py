import math

import pytest
import torch

import gdr


def test_parameter_accounting():
    acc = gdr.parameter_accounting([64, 64], [1024, 1024], 2048, 256)
    assert acc["grouped"] == 655360
    assert acc["nongrouped"] == 1048576
    assert acc["ratio"] == 0.625


def test_tuple_scalar_round_trip():
    radices = [8, 8, 8, 8]
    scalars = torch.arange(4096)
    tuples = gdr.scalar_to_tuple(scalars, radices)
    assert tuples.shape == (4096, 4)
    assert torch.equal(gdr.tuple_to_scalar(tuples, radices), scalars)
    assert gdr.tuple_to_scalar(torch.tensor([[1, 2]]), [2, 3]).item() == 5
    with pytest.raises(Exception):
        gdr.tuple_to_scalar(torch.tensor([[2, 0]]), [2, 3])


def test_quantizer_forward_and_gradient():
    cfg = gdr.QuantizerConfig()
    cfg.group_sizes = [4, 4]
    cfg.base_channels = 8
    cfg.expansion_rate = 2
    q = gdr.Quantizer(cfg, seed=1)
    z = torch.randn(2, 4, 4, 8, requires_grad=True)
    out = q(z, alpha=0.3, noise=True, seed=5)
    assert out["X"].shape == (2, 4, 4, 8)
    assert out["tuple"].shape == (2, 4, 4, 2)
    assert int(out["scalar"].max()) < 16
    (out["X"].sum() + out["utilization_loss"]).backward()
    assert z.grad is not None and torch.isfinite(z.grad).all()
    assert q.pinv_identity_error() < 1e-4
    again = q(z.detach(), alpha=0.3, noise=True, seed=5)
    assert torch.equal(again["scalar"], out["scalar"])


def test_metrics_examples():
    truth = torch.tensor([[0, 0], [1, 1]])
    pred = torch.tensor([[0, 1], [0, 1]])
    assert math.isclose(gdr.ari(pred, truth), -0.5)
    assert math.isclose(gdr.ari(truth + 3, truth), 1.0)
    scores = gdr.evaluate(truth, truth)
    assert scores["mbo"] == 1.0 and scores["miou"] == 1.0


def test_generation_and_files(tmp_path):
    a = gdr.generate_scene("fig1", seed=4)
    b = gdr.generate_scene("fig1", seed=4)
    assert torch.equal(a["image"], b["image"])
    assert a["image"].shape == (64, 64, 3)
    labels = set(a["mask"].unique().tolist())
    assert labels == set(range(len(a["objects"]) + 1))

    gdr.generate_split(tmp_path / "data", preset="fig1", train=6, val=2, ood=2, held_out="1:2", seed=3)
    split = gdr.load_split(tmp_path / "data" / "train")
    assert split["images"].shape == (6, 64, 64, 3)
    assert split["masks"].dtype == torch.int32

    path = tmp_path / "t.gdrt"
    tensors = [torch.arange(6, dtype=torch.int64).reshape(2, 3), torch.rand(4, dtype=torch.float64)]
    gdr.write_tensor_file(path, tensors)
    back = gdr.read_tensor_file(path)
    assert all(torch.equal(x, y) for x, y in zip(tensors, back))
    path.write_bytes(b"nope")
    with pytest.raises(gdr.FormatError):
        gdr.read_tensor_file(path)

"""Configuration, phantoms and file formats."""

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from convexify.config import RunConfig
from convexify.forward import CauchyData, SpatialGrid
from convexify.io import (load_cauchy, read_tensor, save_cauchy, write_json, write_slices, write_tensor,
                          write_trace)
from convexify.optim import DescentTrace
from convexify.phantoms import get_phantom


def test_config_round_trip(tmp_path):
    cfg = RunConfig(n_x=11, eps=1e-4, qr_eps=1e-3, phantom="ring3", x0=[0, 0, -3])
    cfg.save(tmp_path / "c.json")
    back = RunConfig.load(tmp_path / "c.json")
    assert back == cfg and back.dumps() == cfg.dumps()
    assert back.x0 == (0.0, 0.0, -3.0)


@pytest.mark.parametrize("bad", [dict(n_x=2), dict(eps=0), dict(x0=(0, 0, 0.5)), dict(lam=-1),
                                 dict(descent_metric="newton"), dict(N=0), dict(k_min=3, k_max=2),
                                 dict(delta=-0.1), dict(c_policy="median")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        RunConfig(**bad)


def test_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        RunConfig.from_dict({"n_x": 11, "colour": "red"})


def test_effective_parameters():
    cfg = RunConfig(eps=1e-5)
    assert cfg.effective_qr_eps == 1e-5
    assert cfg.replace(qr_eps=1e-3).effective_qr_eps == 1e-3
    assert cfg.replace(ablation_lambda_zero=True).weight().lam == 0.0
    assert cfg.weight().lam == cfg.lam


def test_phantom_library():
    grid = SpatialGrid(1.0, 21)
    X, Y, Z = grid.mesh()
    e = get_phantom("ellipsoid5")(X, Y, Z)
    assert e.max() == 5.0 and e.min() == 1.0
    assert e[10, 10, 3] == 5.0  # centre (0, 0, -0.7)
    r = get_phantom("ring3")(X, Y, Z)
    assert r.max() == 3.0 and r[10, 10, 3] == 1.0  # hollow centre
    assert r[14, 10, 3] == 3.0  # radius 0.4
    y = get_phantom("letterY2")(X, Y, Z)
    assert y.max() == 2.0 and get_phantom("letterY2").true_max == 2.0
    assert np.all(get_phantom("uniform")(X, Y, Z) == 1.0)
    for name in ("ellipsoid5", "ring3", "letterY2"):
        c = get_phantom(name)(X, Y, Z)
        assert np.all(c[grid.boundary_mask()] == 1.0)
    with pytest.raises(ValueError):
        get_phantom("banana")


def test_custom_phantom(tmp_path):
    p = tmp_path / "ph.json"
    p.write_text(json.dumps({"value": 2.5, "shapes": [
        {"type": "ellipsoid", "center": [0, 0, -0.5], "semi_axes": [0.2, 0.2, 0.1]},
        {"type": "box", "center": [0.5, 0, 0], "half_sizes": [0.1, 0.1, 0.1]}]}))
    ph = get_phantom("custom", str(p))
    assert ph((0.0,), (0.0,), (-0.5,))[0] == 2.5
    assert ph((0.5,), (0.05,), (0.0,))[0] == 2.5
    assert ph((0.0,), (0.0,), (0.5,))[0] == 1.0


@settings(max_examples=25, deadline=None)
@given(arr=hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=4, max_side=5),
                      elements=st.floats(-1e6, 1e6)), cplx=st.booleans())
def test_tensor_round_trip(tmp_path_factory, arr, cplx):
    if cplx:
        arr = arr + 1j * arr[::-1] if arr.ndim else arr + 0j
    path = tmp_path_factory.mktemp("t") / "a.bin"
    write_tensor(path, arr)
    back = read_tensor(path)
    # trailing unit dimensions are dropped on read
    shape = list(arr.shape)
    while len(shape) > 1 and shape[-1] == 1:
        shape.pop()
    assert back.shape == tuple(shape)
    np.testing.assert_array_equal(back.reshape(arr.shape), arr)


def test_tensor_layout_is_first_index_fastest(tmp_path):
    a = np.arange(6.0).reshape(2, 3)
    write_tensor(tmp_path / "a.bin", a)
    raw = (tmp_path / "a.bin").read_bytes()
    magic, *dims = struct.unpack_from("<8s6I", raw)
    assert magic == b"CVXFR64\0" and dims == [2, 3, 1, 1, 1, 1]
    np.testing.assert_array_equal(np.frombuffer(raw, "<f8", offset=32), [0, 3, 1, 4, 2, 5])
    write_tensor(tmp_path / "c.bin", np.array([1 + 2j]))
    raw = (tmp_path / "c.bin").read_bytes()
    assert raw[:8] == b"CVXFC128"
    np.testing.assert_array_equal(np.frombuffer(raw, "<f8", offset=32), [1, 2])


def test_corrupt_tensor_rejected(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"short")
    with pytest.raises(ValueError):
        read_tensor(tmp_path / "x.bin")
    write_tensor(tmp_path / "y.bin", np.ones(4))
    (tmp_path / "y.bin").write_bytes((tmp_path / "y.bin").read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_tensor(tmp_path / "y.bin")


def test_cauchy_data_bit_reproducible(tmp_path):
    rng = np.random.default_rng(0)
    f = rng.standard_normal((3, 3, 4)) + 1j * rng.standard_normal((3, 3, 4))
    d = CauchyData(f=f, g=2 * f, noise_level=0.1, seed=7, meta={"phantom": "ring3"})
    save_cauchy(tmp_path / "a", d)
    save_cauchy(tmp_path / "b", d)
    for name in ("f.bin", "g.bin", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    back = load_cauchy(tmp_path / "a")
    np.testing.assert_array_equal(back.f, f)
    assert back.noise_level == 0.1 and back.seed == 7 and back.meta["phantom"] == "ring3"


def test_slices_trace_json(tmp_path):
    grid = SpatialGrid(1.0, 5)
    c = np.arange(125.0).reshape(grid.shape)
    paths = write_slices(tmp_path / "c", c, grid)
    assert [p.name for p in paths] == ["c_z-0.50.csv", "c_y+0.00.csv"]
    rows = paths[0].read_text().splitlines()
    assert rows[0] == "x,y,c" and len(rows) == 26
    tr = DescentTrace(iterates_norms=[1.0, 0.5], objective_values=[2.0, 1.0], step_norms=[0.1, 0.05], n_iter=2)
    write_trace(tmp_path / "t.csv", tr)
    assert (tmp_path / "t.csv").read_text().splitlines()[1].startswith("0,2.0,1.0,0.1")
    write_json(tmp_path / "m.json", {"a": np.float64(1.5), "b": np.arange(2)})
    assert json.loads((tmp_path / "m.json").read_text()) == {"a": 1.5, "b": [0, 1]}

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perftx.config_space import (
    ConfigurationSpace,
    ParameterSpec,
    build_space,
    encode,
    encode_many,
    enumerate_space,
    expand_grid,
    load_space,
    random_sample,
    sample_indices,
)
from perftx.errors import ConfigSpaceError
from perftx.synthetic import surface2d_space


def rng_param(name, n, **kw):
    return ParameterSpec(name, "integer-range", grid=tuple(range(1, n + 1)), **kw)


def binary(name):
    return ParameterSpec(name, "binary", labels=("off", "on"))


class TestCardinality:
    def test_surface_grid(self):
        assert build_space([rng_param("a", 25), rng_param("b", 27)]).cardinality == 675

    def test_one_binary(self):
        assert build_space([binary("b")]).cardinality == 2

    def test_twenty_binaries(self):
        space = build_space([binary(f"b{i}") for i in range(20)])
        assert space.cardinality == 2**20 == 1_048_576


class TestValidation:
    def test_empty_domain(self):
        with pytest.raises(ConfigSpaceError, match="empty domain"):
            ParameterSpec("x", "integer-range", grid=())

    def test_non_ascending_grid(self):
        with pytest.raises(ConfigSpaceError, match="ascending"):
            ParameterSpec("x", "integer-range", grid=(1, 3, 2))

    def test_duplicate_names(self):
        with pytest.raises(ConfigSpaceError, match="duplicate"):
            build_space([binary("a"), binary("a")])

    def test_binary_needs_two_labels(self):
        with pytest.raises(ConfigSpaceError):
            ParameterSpec("b", "binary", labels=("x", "y", "z"))

    def test_log_scale_needs_positive_values(self):
        with pytest.raises(ConfigSpaceError, match="positive"):
            ParameterSpec("x", "integer-range", grid=(0, 1), scale="log")

    def test_grid_outside_bounds(self):
        with pytest.raises(ConfigSpaceError, match="outside"):
            ParameterSpec("x", "integer-range", grid=(1, 5), min=2)

    def test_unknown_value(self):
        space = build_space([rng_param("a", 3)])
        with pytest.raises(ConfigSpaceError, match="not in domain"):
            space.validate([7])

    def test_wrong_arity(self):
        with pytest.raises(ConfigSpaceError, match="values"):
            build_space([rng_param("a", 3)]).validate([1, 2])

    def test_values_written_with_fewer_digits_are_accepted(self):
        p = surface2d_space().parameters[0]
        v = p.grid[3]
        assert p.index_of(float(f"{v:.12g}")) == 3


class TestEnumeration:
    def test_lexicographic_2x3(self):
        space = build_space([rng_param("a", 2), rng_param("b", 3)])
        assert enumerate_space(space) == [
            (1.0, 1.0), (1.0, 2.0), (1.0, 3.0), (2.0, 1.0), (2.0, 2.0), (2.0, 3.0)
        ]

    def test_surface(self):
        assert len(enumerate_space(surface2d_space())) == 675

    def test_cap(self):
        with pytest.raises(ConfigSpaceError, match="cap"):
            enumerate_space(build_space([binary(f"b{i}") for i in range(21)]))

    def test_flat_index_matches_enumeration(self):
        space = build_space([rng_param("a", 3), binary("b"), rng_param("c", 4)])
        for i, cfg in enumerate(enumerate_space(space)):
            assert space.flat_index(cfg) == i
            assert space.config_at(i) == cfg

    def test_config_at_bounds(self):
        with pytest.raises(ConfigSpaceError):
            build_space([binary("b")]).config_at(2)


class TestSampling:
    def test_zero(self):
        assert random_sample(surface2d_space(), 0, 1) == []

    def test_full_is_permutation(self):
        space = build_space([rng_param("a", 4), binary("b")])
        assert set(random_sample(space, space.cardinality, 3)) == set(enumerate_space(space))

    def test_deterministic(self):
        space = surface2d_space()
        assert random_sample(space, 9, 42) == random_sample(space, 9, 42)

    def test_too_many(self):
        with pytest.raises(ConfigSpaceError):
            sample_indices(build_space([binary("b")]), 3, 0)

    @given(st.integers(0, 675), st.integers(0, 675), st.integers(0, 2**32))
    @settings(max_examples=30, deadline=None)
    def test_prefix_property(self, n1, n2, seed):
        n1, n2 = sorted((n1, n2))
        space = surface2d_space()
        a, b = sample_indices(space, n1, seed), sample_indices(space, n2, seed)
        assert np.array_equal(a, b[:n1])
        assert len(set(b.tolist())) == n2

    def test_huge_space_uses_rejection_and_stays_distinct(self):
        space = build_space([binary(f"b{i}") for i in range(30)])
        idx = sample_indices(space, 50, 7)
        assert len(set(idx.tolist())) == 50
        assert np.array_equal(idx[:20], sample_indices(space, 20, 7))


class TestEncoding:
    def test_binary(self):
        space = build_space([binary("b")])
        assert encode(space, ["off"])[0] == 0.0
        assert encode(space, ["on"])[0] == 1.0

    def test_log_endpoints_and_midpoint(self):
        mid = math.sqrt(5 * 10000)
        p = ParameterSpec("p", "integer-range", grid=(5.0, mid, 10000.0), scale="log")
        space = build_space([p])
        assert encode(space, [5])[0] == 0.0
        assert encode(space, [10000])[0] == 1.0
        assert encode(space, [mid])[0] == pytest.approx(0.5, abs=1e-12)

    def test_categorical_ordinal(self):
        space = build_space([ParameterSpec("c", "categorical", labels=("lo", "mid", "hi"))])
        assert encode_many(space, [["lo"], ["mid"], ["hi"]])[:, 0].tolist() == [0.0, 0.5, 1.0]

    def test_injective_and_monotone_on_every_grid(self):
        for p in surface2d_space().parameters:
            c = p.coords
            assert np.all(np.diff(c) > 0)
            assert c[0] == 0.0 and c[-1] == 1.0

    def test_encode_indices_matches_encode(self):
        space = surface2d_space()
        idx = np.array([0, 17, 674])
        rows = encode_many(space, [space.config_at(int(i)) for i in idx])
        np.testing.assert_array_equal(space.encode_indices(idx), rows)


class TestGridShorthand:
    def test_log_endpoints_exact(self):
        g = expand_grid({"from": 5, "to": 10000, "count": 25, "spacing": "log"})
        assert len(g) == 25 and g[0] == 5.0 and g[-1] == 10000.0

    def test_linear(self):
        assert expand_grid({"from": 0, "to": 1, "count": 3}) == [0.0, 0.5, 1.0]

    @pytest.mark.parametrize("bad", [
        {"from": 0, "to": 1},
        {"from": 0, "to": 1, "count": 0},
        {"from": 0, "to": 1, "count": 3, "spacing": "log"},
        {"from": 1, "to": 2, "count": 3, "spacing": "cubic"},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigSpaceError):
            expand_grid(bad)


def test_json_round_trip(tmp_path):
    space = build_space([
        ParameterSpec("n", "integer-range", grid=(1, 2, 4, 8), scale="log"),
        binary("flag"),
        ParameterSpec("mode", "categorical", labels=("a", "b", "c")),
    ])
    path = tmp_path / "space.json"
    import json

    path.write_text(json.dumps(space.to_json()))
    again = load_space(path)
    assert again == space
    assert ConfigurationSpace.from_json(again.to_json()) == space


def test_from_json_expands_shorthand():
    space = ConfigurationSpace.from_json({"parameters": [
        {"name": "p", "kind": "integer-range", "scale": "log",
         "grid": {"from": 5, "to": 10000, "count": 25, "spacing": "log"}}]})
    assert space.cardinality == 25


def test_from_mapping():
    space = build_space([rng_param("a", 3), binary("b")])
    assert space.from_mapping({"b": "on", "a": 2}) == (2.0, "on")
    with pytest.raises(ConfigSpaceError, match="missing"):
        space.from_mapping({"a": 1})

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalwave.errors import StructureError
from fractalwave.topology import (
    FractalSpec,
    cell_table,
    expand_complex,
    hata_spec,
    load_spec,
    parse_vertex_name,
    verify_gluing,
    vertex_coordinates,
    vertex_name,
)
from oracles import brute_force_complex


@pytest.mark.parametrize("name", ["interval", "gasket", "hata"])
@pytest.mark.parametrize("n", range(6))
def test_matches_brute_force_union_find(name, n):
    spec = load_spec(name)
    ids, cells = brute_force_complex(spec, n)
    cx = expand_complex(spec, n)
    assert list(cx.ids) == ids
    np.testing.assert_array_equal(cx.cells, cells)


@pytest.mark.parametrize(
    "name,counts",
    [
        ("interval", [2, 3, 5, 9, 17, 33]),
        ("gasket", [3, 6, 15, 42, 123, 366]),
        ("hata", [3, 5, 9, 17, 33, 65]),
    ],
)
def test_vertex_counts(name, counts):
    spec = load_spec(name)
    assert [expand_complex(spec, n).n_vertices for n in range(6)] == counts


def test_gasket_closed_form_count(gasket):
    for n in (7, 9):
        assert expand_complex(gasket, n).n_vertices == 3 * (3**n + 1) // 2


def test_ids_stable_across_levels(gasket):
    coarse = expand_complex(gasket, 3)
    fine = expand_complex(gasket, 5)
    for v, vid in enumerate(coarse.ids):
        assert fine.ids[fine.lookup(vid)] == vid
    assert fine.lookup("p2") == fine.boundary_index[1]


def test_lookup_accepts_any_address(gasket):
    cx = expand_complex(gasket, 4)
    assert cx.lookup("1:p2") == cx.lookup("2:p1")
    assert cx.lookup(((1, 1, 1), "p1")) == cx.lookup("p1")
    assert cx.lookup("2.3:p1") == cx.lookup(((2, 3), "p1"))
    with pytest.raises(KeyError):
        cx.lookup("1:q")
    with pytest.raises(KeyError):
        cx.lookup(10**6)


def test_names_roundtrip(hata):
    cx = expand_complex(hata, 4)
    for v, name in enumerate(cx.names()):
        assert cx.name(v) == name
        assert cx.lookup(name) == v
        assert vertex_name(*parse_vertex_name(name)) == name


def test_verify_gluing_diagnostics(gasket, interval):
    d = verify_gluing(gasket)
    assert d == {
        "valid": True,
        "connected": True,
        "identifications": 3,
        "n_vertices_level1": 6,
        "merged_points": 3,
    }
    assert verify_gluing(interval)["n_vertices_level1"] == 3


def _interval_dict():
    return load_spec("interval").to_dict()


def test_disconnected_spec_rejected():
    d = _interval_dict()
    d["gluings"] = []
    with pytest.raises(StructureError, match="disconnected"):
        verify_gluing(FractalSpec.from_dict(d))


@pytest.mark.parametrize(
    "mutate,match",
    [
        (lambda d: d["gluings"].append([[1, "1"], [3, "0"]]), "outside"),
        (lambda d: d["gluings"].append([[1, "x"], [2, "0"]]), "label"),
        (lambda d: d["gluings"].append([[1, "1"], [1, "1"]]), "itself"),
        (lambda d: d["images"][0].pop("1"), "cover"),
        (lambda d: d["images"][1].update({"1": "0"}), "two level-1 points"),
    ],
)
def test_malformed_specs(mutate, match):
    d = _interval_dict()
    mutate(d)
    with pytest.raises(StructureError, match=match):
        verify_gluing(FractalSpec.from_dict(d))


def test_missing_field():
    with pytest.raises(StructureError):
        FractalSpec.from_dict({"M": 2})


def test_load_spec_json_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "M": 2,\n  "boundary": ["0" "1"]\n}\n')
    with pytest.raises(StructureError, match=r"bad.json:3:"):
        load_spec(p)


def test_load_spec_roundtrip(tmp_path, gasket):
    p = tmp_path / "g.json"
    p.write_text(json.dumps(gasket.to_dict()))
    again = load_spec(p)
    assert again.to_dict() == gasket.to_dict()


def test_cell_table_measure_sums_to_one(gasket, hata):
    from fractalwave.energy import dimension_exponents

    for spec in (gasket, hata):
        r = spec.harmonic["r"]
        d = dimension_exponents(r).d_H
        for n in (0, 1, 4):
            ct = cell_table(spec, r, d, n)
            assert len(ct.r) == spec.M**n
            assert ct.mu.sum() == pytest.approx(1.0, abs=1e-12)
    ct = cell_table(hata, hata.harmonic["r"], 1.0, 2)
    words = list(ct.words)
    assert words[1] == (1, 2)
    assert ct.r[1] == pytest.approx(hata.harmonic["r"][0] * hata.harmonic["r"][1])


def test_gasket_coordinates(gasket):
    cx = expand_complex(gasket, 1)
    X = vertex_coordinates(gasket, cx)
    mid = X[cx.lookup("1:p2")]
    np.testing.assert_allclose(mid, 0.5 * (X[cx.lookup("p1")] + X[cx.lookup("p2")]))


def test_hata_embedding_consistent():
    spec = hata_spec(2.0)
    cx = expand_complex(spec, 3)
    X = vertex_coordinates(spec, cx)
    # the glued point psi_1(c) = psi_2(0) has one position whatever address is used
    assert cx.lookup("1:c") == cx.lookup("2:0")
    np.testing.assert_allclose(X[cx.lookup("1:c")], [0.25, 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        hata_spec(1.0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(0, 6), name=st.sampled_from(["interval", "gasket", "hata"]))
def test_cells_have_distinct_corners(n, name):
    cx = expand_complex(load_spec(name), n)
    srt = np.sort(cx.cells, axis=1)
    assert np.all(srt[:, 1:] != srt[:, :-1])
    assert set(np.unique(cx.cells)) == set(range(cx.n_vertices))


def test_to_dict_does_not_alias(gasket):
    data = gasket.to_dict()
    data["harmonic"]["r"][0] = 0.1
    data["embedding"]["boundary"]["p1"][0] = 9.0
    assert gasket.harmonic["r"][0] == 0.6
    assert gasket.embedding["boundary"]["p1"][0] == 0.0
    clone = FractalSpec.from_dict(data)
    data["harmonic"]["r"][1] = 0.2
    assert clone.harmonic["r"][1] == 0.6

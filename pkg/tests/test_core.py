import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bfs_components, sample_of_type
from layoutforge.core import (
    NUM_SURFACES,
    PolyLayout,
    RoomTaxonomy,
    RoomType,
    Surface,
    build_dag,
    load_mask,
    save_mask,
    surfaces_of,
    validate_layout,
)


def test_five_surface_labels_and_background():
    assert [int(s) for s in Surface] == [1, 2, 3, 4, 5]
    assert [s.slug for s in Surface] == ["ceiling", "floor", "left-wall", "right-wall", "front-wall"]
    assert Surface.from_slug("left-wall") is Surface.LEFT_WALL
    assert 0 not in {int(s) for s in Surface}
    assert NUM_SURFACES == 5


def test_validate_full_layout(taxonomy):
    _, mask, _ = sample_of_type(0)
    rep = validate_layout(mask, taxonomy)
    assert rep.valid
    assert len(taxonomy[rep.matched_type].surfaces) == 5


def test_validate_out_of_range_label(taxonomy):
    _, mask, _ = sample_of_type(0)
    mask = mask.copy()
    mask[3, 3] = 7
    rep = validate_layout(mask, taxonomy)
    assert not rep.valid
    assert rep.out_of_range == (7,)
    assert "out-of-range" in rep.summary()


def test_validate_split_floor(taxonomy):
    mask = np.full((12, 12), 3, dtype=np.uint8)
    mask[:, 6:] = 4
    mask[0:3, 0:3] = 2
    mask[8:11, 8:11] = 2
    rep = validate_layout(mask, taxonomy)
    assert not rep.valid
    assert rep.disconnected == {2: bfs_components(mask == 2)} == {2: 2}


def test_validate_unknown_surface_set(taxonomy):
    mask = np.full((8, 8), 1, dtype=np.uint8)  # ceiling alone is no room type
    rep = validate_layout(mask, taxonomy)
    assert rep.matched_type is None and not rep.valid


def test_validate_rejects_empty():
    with pytest.raises(ValueError):
        validate_layout(np.zeros((0, 4), dtype=np.uint8), RoomTaxonomy(()))


def test_surfaces_of():
    assert surfaces_of(np.full((4, 4), 2)) == {2}
    assert surfaces_of(np.zeros((4, 4))) == frozenset()
    _, mask, _ = sample_of_type(0)
    assert surfaces_of(mask) == {1, 2, 3, 4, 5}


def brute_force_edges(taxonomy):
    out = set()
    for p, c in itertools.permutations(taxonomy.types, 2):
        if c.surfaces < p.surfaces and len(p.surfaces) - len(c.surfaces) == 1:
            out.add((p.type_id, c.type_id))
    return out


def test_default_dag_matches_brute_force(taxonomy, dag):
    assert len(taxonomy.types) == 11
    assert set(dag.edges) == brute_force_edges(taxonomy)
    assert len(dag.edges) == len(brute_force_edges(taxonomy))
    assert dag.is_acyclic()
    for e in dag.edges:
        assert taxonomy[e[0]].surfaces - taxonomy[e[1]].surfaces == {dag.removed_surface(e)}


def test_dag_ceiling_removal_edge(taxonomy, dag):
    full = taxonomy.match({1, 2, 3, 4, 5}).type_id
    no_ceiling = taxonomy.match({2, 3, 4, 5}).type_id
    assert (full, no_ceiling) in dag.edges


def test_single_surface_type_has_no_children():
    tax = RoomTaxonomy((RoomType(0, frozenset({5}), 0), RoomType(1, frozenset({3, 4}), 2)))
    dag = build_dag(tax)
    assert dag.out_edges(0) == []
    assert dag.out_edges(1) == []


def test_duplicate_ids_rejected():
    tax = RoomTaxonomy((RoomType(0, frozenset({5}), 0), RoomType(0, frozenset({3, 4}), 2)))
    with pytest.raises(ValueError):
        build_dag(tax)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.frozensets(st.integers(1, 5), min_size=1), min_size=1, max_size=12, unique=True))
def test_random_subtaxonomy_is_acyclic(sets):
    tax = RoomTaxonomy(tuple(RoomType(i, s, 0) for i, s in enumerate(sets)))
    dag = build_dag(tax)
    assert dag.is_acyclic()
    order = {t: k for k, t in enumerate(dag.topological_order())}
    assert all(order[p] < order[c] for p, c in dag.edges)
    assert set(dag.edges) == brute_force_edges(tax)


def test_taxonomy_round_trip(tmp_path, taxonomy):
    p = tmp_path / "tax.json"
    import json

    p.write_text(json.dumps(taxonomy.to_dict()))
    assert RoomTaxonomy.load(p) == taxonomy


def test_poly_json_round_trip(tmp_path):
    _, _, poly = sample_of_type(0)
    poly.save(tmp_path / "p.json")
    assert PolyLayout.load(tmp_path / "p.json") == poly


def test_poly_rejects_bad_refs():
    _, _, poly = sample_of_type(7)
    d = poly.to_dict()
    d["surfaces"][0]["polygon"] = [99, 0, 1]
    with pytest.raises(ValueError):
        PolyLayout.from_dict(d)


def test_mask_file_round_trip(tmp_path):
    _, mask, _ = sample_of_type(0)
    save_mask(mask, tmp_path / "m.png")
    assert np.array_equal(load_mask(tmp_path / "m.png"), mask)


def test_interior_corners_shared_by_three_polygons(taxonomy):
    for t in taxonomy.ids:
        _, _, poly = sample_of_type(t, index=3)
        for k, c in enumerate(poly.corners):
            users = sum(k in sp.refs for sp in poly.surfaces)
            assert users >= (3 if c.kind == "interior" else 2)

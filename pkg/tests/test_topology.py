"""Mesh geometry and X-Y routing checks."""

import pytest

from hybridnoc import (
    DirectedLink,
    MeshConfig,
    TopologyError,
    enumerate_pairs,
    iter_links,
    links_conflict,
    opposite,
    xy_route,
)


def directions(path):
    return [l.direction for l in path.links]


def test_grid_shape():
    m = MeshConfig.grid(4, 4)
    assert m.n_routers == 16
    assert m.n_nis == 16
    assert m.coords(0) == (0, 0)
    assert m.coords(5) == (1, 1)
    assert m.router_at(3, 2) == 11
    # row-major ids round trip through coords
    for r in range(m.n_routers):
        assert m.router_at(*m.coords(r)) == r


def test_xy_route_examples():
    m = MeshConfig.grid(4, 4)
    assert directions(xy_route(m, 0, 3)) == ["E", "E", "E"]
    assert directions(xy_route(m, 5, 11)) == ["E", "E", "N"]
    # X is exhausted before Y on the way back too
    p = xy_route(m, 14, 0)
    assert p.hops == 5
    assert directions(p) == ["W", "W", "S", "S", "S"]
    assert p.routers()[0] == 14 and p.routers()[-1] == 0


def test_xy_route_is_x_then_y_everywhere():
    m = MeshConfig.grid(4, 3)
    for a, b in enumerate_pairs(m, "router"):
        p = xy_route(m, a, b)
        assert p.hops == m.hop_distance(a, b)
        dirs = directions(p)
        seen_y = False
        for d in dirs:
            if d in ("N", "S"):
                seen_y = True
            else:
                assert not seen_y, f"X step after Y step on {a}->{b}"
        # links chain up: each hop starts where the previous ended
        for prev, nxt in zip(p.links, p.links[1:]):
            assert prev.dst_router == nxt.src_router


def test_xy_route_determinism_and_errors():
    m = MeshConfig.grid(3, 3)
    assert xy_route(m, 0, 8) == xy_route(m, 0, 8)
    with pytest.raises(TopologyError):
        xy_route(m, 2, 2)
    with pytest.raises(TopologyError):
        xy_route(m, 0, 9)


def test_hop_distance_symmetric():
    m = MeshConfig.grid(5, 2)
    for a, b in enumerate_pairs(m, "router"):
        assert m.hop_distance(a, b) == m.hop_distance(b, a)
        assert m.hop_distance(a, a) == 0


def test_enumerate_pairs_counts():
    assert len(enumerate_pairs(MeshConfig.grid(4, 4), "ni")) == 240
    assert len(enumerate_pairs(MeshConfig.grid(4, 4), "router")) == 240
    assert len(enumerate_pairs(MeshConfig.cmp_4x4_51ni(), "ni")) == 2550
    assert len(enumerate_pairs(MeshConfig.grid(1, 1), "ni")) == 0
    pairs = enumerate_pairs(MeshConfig.grid(2, 3), "router")
    assert len(pairs) == 30
    assert all(a != b for a, b in pairs)
    with pytest.raises(TopologyError):
        enumerate_pairs(MeshConfig.grid(2, 2), "core")


def test_links_conflict_crossing_diagonals():
    # 2x2: the two diagonals cross in space but share no directed link
    m = MeshConfig.grid(2, 2)
    a = xy_route(m, 0, 3)
    b = xy_route(m, 2, 1)
    assert not links_conflict(a, b)
    # reversed direction over the same wire pair is also no conflict
    assert not links_conflict(xy_route(m, 0, 1), xy_route(m, 1, 0))
    # shared directed link conflicts regardless of endpoint flags
    assert links_conflict(xy_route(m, 0, 3), xy_route(m, 1, 3))
    assert links_conflict(xy_route(m, 0, 3), xy_route(m, 1, 3), endpoint_ports=True)


def test_links_conflict_endpoint_ports():
    m = MeshConfig.grid(2, 2)
    east = xy_route(m, 0, 1)
    north = xy_route(m, 0, 2)
    # same source router: one injection port per subnet
    assert not links_conflict(east, north)
    assert links_conflict(east, north, endpoint_ports=True)
    # same destination router: one ejection port per subnet
    into3_a = xy_route(m, 1, 3)
    into3_b = xy_route(m, 2, 3)
    assert links_conflict(into3_a, into3_b, endpoint_ports=True)
    assert not links_conflict(into3_a, into3_b)
    # source of one being destination of the other is fine either way
    chain_a = xy_route(m, 0, 1)
    chain_b = xy_route(m, 1, 3)
    assert not links_conflict(chain_a, chain_b, endpoint_ports=True)


def test_links_conflict_matches_set_intersection():
    # independent oracle: walk both paths and intersect the directed edges
    m = MeshConfig.grid(4, 4)
    pairs = enumerate_pairs(m, "router")
    sample = pairs[::7]
    for a_src, a_dst in sample[:20]:
        for b_src, b_dst in sample[20:40]:
            a = xy_route(m, a_src, a_dst)
            b = xy_route(m, b_src, b_dst)
            edges_a = {(l.src_router, l.dst_router) for l in a.links}
            edges_b = {(l.src_router, l.dst_router) for l in b.links}
            assert links_conflict(a, b) == bool(edges_a & edges_b)


def test_links_conflict_reflexive_and_symmetric():
    m = MeshConfig.grid(3, 3)
    a = xy_route(m, 0, 8)
    b = xy_route(m, 6, 2)
    assert links_conflict(a, a)
    assert links_conflict(a, b) == links_conflict(b, a)


def test_iter_links_count():
    # 2 * (W*(H-1) + H*(W-1)) directed links on a W x H mesh
    for w, h in [(2, 2), (4, 4), (3, 2), (1, 4)]:
        m = MeshConfig.grid(w, h)
        links = list(iter_links(m))
        assert len(links) == 2 * (w * (h - 1) + h * (w - 1))
        assert len(set(links)) == len(links)


def test_neighbor_edges_and_opposite():
    m = MeshConfig.grid(3, 3)
    assert m.neighbor(0, "W") is None
    assert m.neighbor(0, "S") is None
    assert m.neighbor(0, "E") == 1
    assert m.neighbor(0, "N") == 3
    assert m.directions_of(4) == ["E", "W", "N", "S"]
    for d in ("E", "W", "N", "S"):
        assert opposite(opposite(d)) == d


def test_nis_of_router_partition():
    m = MeshConfig.grid(2, 2, 3)
    seen = []
    for r in range(m.n_routers):
        for ni in m.nis_of_router(r):
            assert m.router_of_ni(ni) == r
            seen.append(ni)
    assert seen == list(range(m.n_nis))


def test_cmp_mesh_counts():
    m = MeshConfig.cmp_4x4_51ni()
    assert m.n_nis == 51
    assert len(m.nis_of_router(0)) == 4
    assert len(m.nis_of_router(3)) == 4
    assert len(m.nis_of_router(12)) == 4
    assert len(m.nis_of_router(5)) == 3


def test_validation_errors():
    with pytest.raises(TopologyError):
        MeshConfig.grid(0, 3)
    with pytest.raises(TopologyError):
        MeshConfig(2, 2, (1, 1, 1))  # wrong length
    with pytest.raises(TopologyError):
        MeshConfig(2, 2, (1, 1, 1, -1))
    with pytest.raises(TopologyError):
        MeshConfig(2, 2, (0, 0, 0, 0))
    m = MeshConfig.grid(2, 2)
    with pytest.raises(TopologyError):
        m.router_of_ni(4)
    with pytest.raises(TopologyError):
        m.coords(-1)
    with pytest.raises(TopologyError):
        m.router_at(2, 0)
    with pytest.raises(TopologyError):
        DirectedLink(1, 1, "E")

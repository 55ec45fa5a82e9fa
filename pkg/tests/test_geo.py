import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adoptsim.geo import (
    City,
    CityTable,
    CityTableError,
    distance_km,
    distance_matrix,
    early_count,
    haversine_km,
    hub_cities,
    load_cities,
    log_gradient,
    place_agents,
    uniform_cities,
)

HEADER = "id,name,lat,lon,n_agents,frac_early\n"


def write(tmp_path, body, name="cities.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body, encoding="utf-8")
    return p


def ref_haversine(lat1, lon1, lat2, lon2, R=6371.0):
    # independent textbook form
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dphi = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * R * math.atan2(math.sqrt(a), math.sqrt(1 - a))


class TestLoadCities:
    def test_roundtrip_and_total(self, tmp_path):
        table = uniform_cities(408, 1000, 0.1, seed=3)
        table.to_csv(tmp_path / "c.csv")
        loaded = load_cities(tmp_path / "c.csv")
        assert loaded == table
        assert loaded.total_agents == 408_000

    def test_header_only_is_empty(self, tmp_path):
        t = load_cities(write(tmp_path, ""))
        assert len(t) == 0 and t.total_agents == 0

    def test_row_order_preserved(self, tmp_path):
        t = load_cities(write(tmp_path, "7,b,1,1,5,0\n3,a,2,2,5,0\n"))
        assert list(t.ids) == [7, 3]
        assert t.index_of(3) == 1

    def test_frac_out_of_range(self, tmp_path):
        with pytest.raises(CityTableError, match="frac_early"):
            load_cities(write(tmp_path, "0,x,10,10,100,1.5\n"))

    def test_duplicate_id(self, tmp_path):
        with pytest.raises(CityTableError, match="duplicate"):
            load_cities(write(tmp_path, "0,x,10,10,100,0.1\n0,y,11,11,100,0.1\n"))

    def test_malformed_row_names_line(self, tmp_path):
        with pytest.raises(CityTableError, match="line 3"):
            load_cities(write(tmp_path, "0,x,10,10,100,0.1\n1,y,abc,11,100,0.1\n"))

    def test_bad_header(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("id,name,lat,lon,n,frac\n", encoding="utf-8")
        with pytest.raises(CityTableError):
            load_cities(p)

    @pytest.mark.parametrize("row", ["0,x,91,0,1,0\n", "0,x,0,181,1,0\n", "0,x,0,0,-1,0\n"])
    def test_range_checks(self, tmp_path, row):
        with pytest.raises(CityTableError):
            load_cities(write(tmp_path, row))


class TestDistance:
    def test_sf_boston(self):
        a = City(0, "sf", 37.7749, -122.4194, 1, 0.0)
        b = City(1, "bos", 42.3601, -71.0589, 1, 0.0)
        ref = ref_haversine(37.7749, -122.4194, 42.3601, -71.0589)
        assert distance_km(a, b) == pytest.approx(ref, abs=1e-6)
        assert distance_km(a, b) == pytest.approx(4333.665, abs=0.01)
        # the often quoted 4339 km uses the equatorial radius instead
        assert abs(ref_haversine(37.7749, -122.4194, 42.3601, -71.0589, R=6378.137) - 4339) <= 1

    def test_identity_and_symmetry(self):
        a = City(0, "a", 10.0, 20.0, 1, 0.0)
        b = City(1, "b", -30.0, 100.0, 1, 0.0)
        assert distance_km(a, a) == 0
        assert distance_km(a, b) == distance_km(b, a)

    def test_matrix(self):
        t = uniform_cities(20, 1, seed=1)
        D = distance_matrix(t)
        assert np.array_equal(D, D.T)
        assert np.all(np.diag(D) == 0)
        assert D[2, 5] == pytest.approx(distance_km(t[2], t[5]))

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(
            st.tuples(st.floats(-90, 90), st.floats(-180, 180)), min_size=3, max_size=3
        )
    )
    def test_triangle_inequality(self, pts):
        (a, b), (c, d), (e, f) = pts
        ab = haversine_km(a, b, c, d)
        bc = haversine_km(c, d, e, f)
        ac = haversine_km(a, b, e, f)
        assert ac <= ab + bc + 1e-6
        assert ab >= 0 and haversine_km(c, d, a, b) == pytest.approx(ab, abs=1e-9)


class TestPlacement:
    def test_exact_fraction(self):
        t = CityTable([City(0, "a", 0, 0, 1000, 0.1)])
        pop = place_agents(t, 0)
        assert pop.early.sum() == 100 and (~pop.early).sum() == 900

    def test_zero_early(self):
        pop = place_agents(uniform_cities(5, 50, 0.0), 0)
        assert pop.early.sum() == 0

    def test_half_up_rounding(self):
        t = CityTable([City(0, "a", 0, 0, 10, 0.25), City(1, "b", 0, 1, 10, 0.5)])
        pop = place_agents(t, 0)
        assert pop.early[pop.city == 0].sum() == 3
        assert pop.early[pop.city == 1].sum() == 5

    @pytest.mark.parametrize("n,f,k", [(10, 0.35, 4), (10, 0.05, 1), (3, 0.5, 2), (7, 1.0, 7), (0, 0.5, 0)])
    def test_early_count(self, n, f, k):
        assert early_count(n, f) == k

    def test_counts_per_city_and_determinism(self):
        t = uniform_cities(30, 17, np.linspace(0, 1, 30), seed=2)
        a, b = place_agents(t, 9), place_agents(t, 9)
        assert np.array_equal(a.city, b.city) and np.array_equal(a.early, b.early)
        assert np.array_equal(a.city_sizes(), np.full(30, 17))
        expected = sum(early_count(c.n_agents, c.frac_early) for c in t)
        assert a.early.sum() == expected
        assert not np.array_equal(a.early, place_agents(t, 10).early)

    def test_empty_population_rejected(self):
        with pytest.raises(ValueError):
            place_agents(CityTable([]), 0)


def test_log_gradient_endpoints():
    g = log_gradient(5, 0.02, 0.30)
    assert g[0] == pytest.approx(0.02) and g[-1] == pytest.approx(0.30)
    assert all(b > a for a, b in zip(g, g[1:]))


def test_hub_cities_overall_share():
    t = hub_cities(100, 100, 15, 0.6, 0.1, seed=4)
    fe = np.array([c.frac_early for c in t])
    assert np.sum(fe == 0.6) == 15
    assert fe.mean() == pytest.approx(0.1)

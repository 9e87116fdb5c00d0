import math

import pytest
from hypothesis import given, strategies as st

from geosid.geo import (
    EARTH_RADIUS_KM,
    AntimeridianWarning,
    EarthModel,
    EmptyClusterError,
    GeoPoint,
    LocalPolar,
    azimuth_rad,
    geo_centroid,
    haversine_km,
    to_local_polar,
)

lat_st = st.floats(min_value=-90.0, max_value=90.0)
lon_st = st.floats(min_value=-179.999, max_value=180.0)


class TestGeoPoint:
    def test_valid(self):
        p = GeoPoint(30.5, -120.25)
        assert p.lat == 30.5 and p.lon == -120.25

    @pytest.mark.parametrize("lat", [90.001, -91.0, float("nan"), float("inf")])
    def test_bad_latitude(self, lat):
        with pytest.raises(ValueError):
            GeoPoint(lat, 0.0)

    @pytest.mark.parametrize(
        "lon,expected", [(190.0, -170.0), (-180.0, 180.0), (360.0, 0.0), (540.0, 180.0), (180.0, 180.0)]
    )
    def test_longitude_normalization(self, lon, expected):
        assert GeoPoint(0.0, lon).lon == expected


class TestLocalPolar:
    def test_valid(self):
        LocalPolar(0.0, math.pi)

    @pytest.mark.parametrize("d,sigma", [(-1.0, 0.0), (0.0, -math.pi), (0.0, 4.0), (float("nan"), 0.0)])
    def test_invalid(self, d, sigma):
        with pytest.raises(ValueError):
            LocalPolar(d, sigma)


class TestEarthModel:
    def test_default_radius(self):
        assert EarthModel().radius_km == 6371.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            EarthModel(0.0)


class TestHaversine:
    def test_identical_points(self):
        assert haversine_km(GeoPoint(0, 0), GeoPoint(0, 0)) == 0.0

    def test_equatorial_degree(self):
        # oracle: one degree of arc on the equator is R * pi/180
        oracle = EARTH_RADIUS_KM * math.pi / 180.0
        got = haversine_km(GeoPoint(0, 0), GeoPoint(0, 1))
        assert got == pytest.approx(oracle, abs=1e-9)
        assert got == pytest.approx(111.1949, abs=1e-3)

    def test_pole_distance(self):
        # oracle: a quarter great circle is R * pi/2
        oracle = EARTH_RADIUS_KM * math.pi / 2.0
        got = haversine_km(GeoPoint(0, 0), GeoPoint(90, 0))
        assert got == pytest.approx(oracle, abs=1e-6)
        assert got == pytest.approx(10007.543, abs=1e-2)

    @given(lat_st, lon_st, lat_st, lon_st)
    def test_symmetry_and_bound(self, lat1, lon1, lat2, lon2):
        a, b = GeoPoint(lat1, lon1), GeoPoint(lat2, lon2)
        d_ab = haversine_km(a, b)
        d_ba = haversine_km(b, a)
        assert abs(d_ab - d_ba) <= 1e-9
        assert 0.0 <= d_ab <= math.pi * EARTH_RADIUS_KM

    def test_custom_earth(self):
        small = EarthModel(radius_km=1.0)
        assert haversine_km(GeoPoint(0, 0), GeoPoint(0, 180), small) == pytest.approx(math.pi)


class TestAzimuth:
    def test_north_is_zero(self):
        assert abs(azimuth_rad(GeoPoint(0, 0), GeoPoint(1, 0))) <= 1e-9

    def test_east_is_half_pi(self):
        assert azimuth_rad(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(math.pi / 2, abs=1e-9)

    def test_south_is_pi(self):
        assert abs(azimuth_rad(GeoPoint(0, 0), GeoPoint(-1, 0))) == pytest.approx(math.pi, abs=1e-9)

    def test_west_is_negative_half_pi(self):
        assert azimuth_rad(GeoPoint(0, 0), GeoPoint(0, -1)) == pytest.approx(-math.pi / 2, abs=1e-9)

    def test_degenerate_point_returns_zero(self):
        assert azimuth_rad(GeoPoint(10, 20), GeoPoint(10, 20)) == 0.0

    @given(lat_st, lon_st, lat_st, lon_st)
    def test_principal_range(self, lat1, lon1, lat2, lon2):
        sigma = azimuth_rad(GeoPoint(lat1, lon1), GeoPoint(lat2, lon2))
        assert -math.pi < sigma <= math.pi


class TestGeoCentroid:
    def test_singleton(self):
        assert geo_centroid([GeoPoint(10, 20)]) == GeoPoint(10, 20)

    def test_arithmetic_mean(self):
        assert geo_centroid([GeoPoint(0, 0), GeoPoint(2, 4)]) == GeoPoint(1, 2)

    def test_empty_cluster(self):
        with pytest.raises(EmptyClusterError):
            geo_centroid([])

    def test_antimeridian_warning(self):
        with pytest.warns(AntimeridianWarning):
            geo_centroid([GeoPoint(0, -179), GeoPoint(0, 179)])

    def test_no_warning_for_compact_cluster(self, recwarn):
        geo_centroid([GeoPoint(0, 10), GeoPoint(0, 11)])
        assert not [w for w in recwarn if issubclass(w.category, AntimeridianWarning)]


class TestToLocalPolar:
    def test_degenerate(self):
        assert to_local_polar(GeoPoint(0, 0), GeoPoint(0, 0)) == LocalPolar(0.0, 0.0)

    def test_east_point(self):
        polar = to_local_polar(GeoPoint(0, 0), GeoPoint(0, 1))
        assert polar.d == pytest.approx(111.1949, abs=1e-3)
        assert polar.sigma == pytest.approx(math.pi / 2, abs=1e-9)

    def test_north_point(self):
        polar = to_local_polar(GeoPoint(0, 0), GeoPoint(1, 0))
        assert polar.d == pytest.approx(111.1949, abs=1e-3)
        assert abs(polar.sigma) <= 1e-9

    @given(lat_st, lon_st, lat_st, lon_st)
    def test_composition(self, lat1, lon1, lat2, lon2):
        center, p = GeoPoint(lat1, lon1), GeoPoint(lat2, lon2)
        polar = to_local_polar(center, p)
        assert polar.d == haversine_km(center, p)
        assert polar.sigma == azimuth_rad(center, p)

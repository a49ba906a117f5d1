#pragma once

#include <optional>
#include <vector>
#include <string>
#include <string_view>

#include "oddmap/types.hpp"

namespace oddmap {

/// Coordinate reference system identified by EPSG code.
///
/// Only two families can be transformed between: WGS84 geographic (EPSG:4326)
/// and WGS84 UTM zones (EPSG:326zz north, 327zz south). Any other projected
/// code is accepted as an opaque metric CRS when its linear unit is the meter.
struct Crs {
  enum class Kind { Geographic, Projected };

  int epsg = 0;
  Kind kind = Kind::Projected;
  bool metric = true;

  static Crs wgs84() { return {4326, Kind::Geographic, false}; }
  static Crs utm(int zone, bool south);
  /// Projected CRS with known linear unit.
  static Crs projected(int epsg, bool metric_units = true);

  bool geographic() const noexcept { return kind == Kind::Geographic; }
  bool is_utm() const noexcept;
  int utm_zone() const noexcept;
  bool utm_south() const noexcept;

  /// "EPSG:<code>"
  std::string name() const;
  friend bool operator==(const Crs&, const Crs&) = default;
};

/// Parses "EPSG:<code>" (case-insensitive prefix) or a bare integer code.
Crs parse_crs(std::string_view text);

/// UTM zone number (1..60) containing the given longitude.
int utm_zone_for_longitude(double lon_deg);
/// UTM CRS whose zone contains (lon, lat); southern zones for lat < 0.
Crs utm_crs_for(double lon_deg, double lat_deg);

/// WGS84 lon/lat (degrees) to UTM easting/northing (meters) in `utm`'s zone.
/// Uses the 6th-order Krueger series, accurate to well below a millimeter
/// within a few zones of the central meridian.
Point geographic_to_utm(Point lon_lat, const Crs& utm);
Point utm_to_geographic(Point east_north, const Crs& utm);

/// Transforms a point between two CRSs of the supported families.
/// Identical CRSs pass through unchanged.
Point transform(Point p, const Crs& from, const Crs& to);

/// Spherical-excess area (km^2) of a lon/lat ring on the authalic sphere.
/// The ring need not be closed; winding is ignored.
double geodesic_ring_area_km2(const std::vector<Point>& lon_lat_ring);

}  // namespace oddmap

#include "oddmap/crs.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

#include "oddmap/error.hpp"

namespace oddmap {
namespace {

constexpr double kA = 6378137.0;                  // WGS84 semi-major axis
constexpr double kF = 1.0 / 298.257223563;        // WGS84 flattening
constexpr double kK0 = 0.9996;
constexpr double kFalseEasting = 500000.0;
constexpr double kFalseNorthingSouth = 10000000.0;
constexpr double kDeg = std::numbers::pi / 180.0;

struct TransverseMercatorSeries {
  double e = 0.0;       // first eccentricity
  double a_rect = 0.0;  // rectifying radius
  std::array<double, 6> alpha{};
  std::array<double, 6> beta{};

  TransverseMercatorSeries() {
    const double n = kF / (2.0 - kF);
    const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
    e = std::sqrt(kF * (2.0 - kF));
    a_rect = kA / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
    alpha = {n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0 +
                 7891.0 * n6 / 37800.0,
             13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0 -
                 1983433.0 * n6 / 1935360.0,
             61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0 +
                 167603.0 * n6 / 181440.0,
             49561.0 * n4 / 161280.0 - 179.0 * n5 / 168.0 + 6601661.0 * n6 / 7257600.0,
             34729.0 * n5 / 80640.0 - 3418889.0 * n6 / 1995840.0,
             212378941.0 * n6 / 319334400.0};
    beta = {n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0 +
                96199.0 * n6 / 604800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0 -
                1118711.0 * n6 / 3870720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161280.0 - 11.0 * n5 / 504.0 - 830251.0 * n6 / 7257600.0,
            4583.0 * n5 / 161280.0 - 108847.0 * n6 / 3991680.0,
            20648693.0 * n6 / 638668800.0};
  }
};

const TransverseMercatorSeries& series() {
  static const TransverseMercatorSeries s;
  return s;
}

double central_meridian(int zone) { return (zone - 1) * 6.0 - 180.0 + 3.0; }

void require_utm(const Crs& crs) {
  if (!crs.is_utm()) fail(ErrorKind::Config, crs.name() + " is not a WGS84 UTM zone");
}

}  // namespace

Crs Crs::utm(int zone, bool south) {
  if (zone < 1 || zone > 60) fail(ErrorKind::Config, "UTM zone out of range: " + std::to_string(zone));
  return {(south ? 32700 : 32600) + zone, Kind::Projected, true};
}

Crs Crs::projected(int code, bool metric_units) { return {code, Kind::Projected, metric_units}; }

bool Crs::is_utm() const noexcept {
  return kind == Kind::Projected && ((epsg > 32600 && epsg <= 32660) || (epsg > 32700 && epsg <= 32760));
}

int Crs::utm_zone() const noexcept { return is_utm() ? epsg % 100 : 0; }
bool Crs::utm_south() const noexcept { return is_utm() && epsg > 32700; }

std::string Crs::name() const { return "EPSG:" + std::to_string(epsg); }

Crs parse_crs(std::string_view text) {
  std::string_view digits = text;
  if (digits.size() > 5) {
    std::string prefix(digits.substr(0, 5));
    for (auto& c : prefix) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (prefix == "EPSG:") digits.remove_prefix(5);
  }
  int code = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), code);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || code <= 0) {
    fail(ErrorKind::Config, "unrecognised CRS '" + std::string(text) + "'");
  }
  if (code == 4326) return Crs::wgs84();
  return Crs::projected(code, true);
}

int utm_zone_for_longitude(double lon_deg) {
  if (!std::isfinite(lon_deg)) fail(ErrorKind::Geometry, "non-finite longitude");
  int zone = static_cast<int>(std::floor(lon_deg / 6.0)) + 31;
  if (zone > 60) zone = 60;
  if (zone < 1) zone = 1;
  return zone;
}

Crs utm_crs_for(double lon_deg, double lat_deg) {
  if (!std::isfinite(lat_deg) || std::abs(lat_deg) > 90.0) {
    fail(ErrorKind::Geometry, "latitude out of range");
  }
  return Crs::utm(utm_zone_for_longitude(lon_deg), lat_deg < 0.0);
}

Point geographic_to_utm(Point lon_lat, const Crs& utm) {
  require_utm(utm);
  const auto& s = series();
  const double phi = lon_lat.y * kDeg;
  const double lambda = (lon_lat.x - central_meridian(utm.utm_zone())) * kDeg;
  const double sin_phi = std::sin(phi);
  const double t = std::sinh(std::atanh(sin_phi) - s.e * std::atanh(s.e * sin_phi));
  const double xi_p = std::atan2(t, std::cos(lambda));
  const double eta_p = std::atanh(std::sin(lambda) / std::sqrt(1.0 + t * t));
  double xi = xi_p;
  double eta = eta_p;
  for (int j = 1; j <= 6; ++j) {
    xi += s.alpha[j - 1] * std::sin(2.0 * j * xi_p) * std::cosh(2.0 * j * eta_p);
    eta += s.alpha[j - 1] * std::cos(2.0 * j * xi_p) * std::sinh(2.0 * j * eta_p);
  }
  const double x = kFalseEasting + kK0 * s.a_rect * eta;
  double y = kK0 * s.a_rect * xi;
  if (utm.utm_south()) y += kFalseNorthingSouth;
  return {x, y};
}

Point utm_to_geographic(Point east_north, const Crs& utm) {
  require_utm(utm);
  const auto& s = series();
  const double northing = east_north.y - (utm.utm_south() ? kFalseNorthingSouth : 0.0);
  const double xi = northing / (kK0 * s.a_rect);
  const double eta = (east_north.x - kFalseEasting) / (kK0 * s.a_rect);
  double xi_p = xi;
  double eta_p = eta;
  for (int j = 1; j <= 6; ++j) {
    xi_p -= s.beta[j - 1] * std::sin(2.0 * j * xi) * std::cosh(2.0 * j * eta);
    eta_p -= s.beta[j - 1] * std::cos(2.0 * j * xi) * std::sinh(2.0 * j * eta);
  }
  const double sinh_eta = std::sinh(eta_p);
  const double sin_xi = std::sin(xi_p);
  const double cos_xi = std::cos(xi_p);
  const double tau_p = sin_xi / std::sqrt(sinh_eta * sinh_eta + cos_xi * cos_xi);
  const double lambda = std::atan2(sinh_eta, cos_xi);

  // Newton iteration recovering tan(phi) from the conformal tan(phi').
  const double e2 = s.e * s.e;
  double tau = tau_p;
  for (int iter = 0; iter < 8; ++iter) {
    const double sigma = std::sinh(s.e * std::atanh(s.e * tau / std::sqrt(1.0 + tau * tau)));
    const double tau_i = tau * std::sqrt(1.0 + sigma * sigma) - sigma * std::sqrt(1.0 + tau * tau);
    const double delta = (tau_p - tau_i) / std::sqrt(1.0 + tau_i * tau_i) *
                         (1.0 + (1.0 - e2) * tau * tau) / ((1.0 - e2) * std::sqrt(1.0 + tau * tau));
    tau += delta;
    if (std::abs(delta) < 1e-15) break;
  }
  const double lat = std::atan(tau) / kDeg;
  const double lon = lambda / kDeg + central_meridian(utm.utm_zone());
  return {lon, lat};
}

Point transform(Point p, const Crs& from, const Crs& to) {
  if (from == to) return p;
  Point geo = p;
  if (from.is_utm()) {
    geo = utm_to_geographic(p, from);
  } else if (!from.geographic()) {
    fail(ErrorKind::Config, "cannot transform from " + from.name());
  }
  if (to.geographic()) return geo;
  if (to.is_utm()) return geographic_to_utm(geo, to);
  fail(ErrorKind::Config, "cannot transform to " + to.name());
}

double geodesic_ring_area_km2(const std::vector<Point>& ring) {
  // Authalic sphere radius for WGS84; area via the spherical excess sum.
  constexpr double kRadius = 6371007.181;
  const std::size_t n = ring.size();
  if (n < 3) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p1 = ring[i];
    const Point& p2 = ring[(i + 1) % n];
    sum += (p2.x - p1.x) * kDeg * (2.0 + std::sin(p1.y * kDeg) + std::sin(p2.y * kDeg));
  }
  return std::abs(sum * kRadius * kRadius / 2.0) / 1e6;
}

}  // namespace oddmap

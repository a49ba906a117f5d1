#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "oddmap/types.hpp"

namespace oddmap::ingest {

struct BBox {
  double west = 0.0;
  double south = 0.0;
  double east = 0.0;
  double north = 0.0;
};

/// "w,s,e,n" in degrees. Throws Config for malformed or inverted boxes.
BBox parse_bbox(std::string_view text);

struct CatalogEntry {
  std::string oam_id;
  std::string title;
  double gsd_m = 0.0;
  std::vector<Point> footprint;  // lon/lat outer ring
  double area_km2 = 0.0;
  /// "catalog" when reported by the service, "footprint" when computed.
  std::string area_source = "catalog";
  std::string acquisition_date;  // YYYY-MM-DD
  std::string provider;
  std::string download_url;
  std::optional<std::uint64_t> file_size;
  std::optional<std::string> sha256;
};

struct AdmissionPolicy {
  double max_gsd_m = 0.06;
  double min_area_km2 = 1.0;
};

void validate(const AdmissionPolicy& policy);

struct Admission {
  bool admitted = false;
  /// One message per failed gate.
  std::vector<std::string> reasons;
};

/// Strict gates: gsd_m < max_gsd_m and area_km2 > min_area_km2.
Admission admit(const CatalogEntry& entry, const AdmissionPolicy& policy = {});
Admission admit(double gsd_m, double area_km2, const AdmissionPolicy& policy = {});

/// Reads one catalog record. Unknown keys are ignored; missing or mistyped
/// required keys raise Parse naming the field. Accepts both the service's
/// native keys (`_id`, `gsd`, `acquisition_start`, `uuid`, `geojson`) and
/// this tool's sidecar keys (`oam_id`, `gsd_m`, ...).
CatalogEntry parse_entry(const nlohmann::json& record);
nlohmann::json to_json(const CatalogEntry& entry);

struct CatalogPage {
  std::vector<CatalogEntry> entries;
  std::size_t found = 0;
  std::size_t page = 1;
  std::size_t limit = 0;
};

CatalogPage parse_page(std::string_view body);

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Minimal transport seam so catalog logic is testable without a network.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string& url) = 0;
  /// Streams the body to `sink`; returns the HTTP status.
  virtual int download(const std::string& url,
                       const std::function<void(std::string_view chunk)>& sink) = 0;
};

/// cpp-httplib backed transport (HTTPS via OpenSSL).
std::unique_ptr<HttpTransport> make_http_transport(int timeout_seconds = 60);

struct CatalogClient {
  HttpTransport& transport;
  std::string base_url = "https://api.openaerialmap.org";
  std::size_t page_limit = 100;
  std::size_t max_pages = 50;
};

/// Admitted entries intersecting `bbox`, newest acquisition first (ties by id).
std::vector<CatalogEntry> search_catalog(const CatalogClient& client, const BBox& bbox,
                                         const AdmissionPolicy& policy = {});

struct FetchResult {
  std::filesystem::path path;
  std::filesystem::path sidecar;
  CatalogEntry entry;
  std::string sha256;
  bool downloaded = false;  // false when the cached copy verified
};

/// Resolves the id, downloads `<dest>/<id>.tif` through a temporary file and
/// writes `<dest>/<id>.json`. A cached file whose checksum matches its
/// sidecar is reused without transfer.
FetchResult fetch_entry(const CatalogClient& client, const std::string& oam_id,
                        const std::filesystem::path& dest);

}  // namespace oddmap::ingest

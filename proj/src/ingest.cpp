#include "oddmap/ingest.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "oddmap/crs.hpp"
#include "oddmap/error.hpp"
#include "oddmap/io.hpp"

namespace oddmap::ingest {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  fail(ErrorKind::Parse, "catalog record field '" + field + "': " + what);
}

const json* find_any(const json& record, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (record.contains(k) && !record[k].is_null()) return &record[k];
  }
  return nullptr;
}

std::string required_string(const json& record, std::initializer_list<const char*> keys) {
  const json* v = find_any(record, keys);
  if (!v) field_error(*keys.begin(), "missing");
  if (!v->is_string() || v->get<std::string>().empty()) field_error(*keys.begin(), "expected a non-empty string");
  return v->get<std::string>();
}

std::string optional_string(const json& record, std::initializer_list<const char*> keys) {
  const json* v = find_any(record, keys);
  if (!v) return {};
  if (!v->is_string()) field_error(*keys.begin(), "expected a string");
  return v->get<std::string>();
}

std::vector<Point> ring_from_json(const json& coords, const std::string& field) {
  std::vector<Point> ring;
  if (!coords.is_array()) field_error(field, "expected a coordinate array");
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) field_error(field, "bad coordinate");
    ring.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return ring;
}

std::vector<Point> ring_from_geojson(const json& geom) {
  if (!geom.is_object() || !geom.contains("type")) field_error("geojson", "expected a geometry object");
  const auto type = geom["type"].get<std::string>();
  const auto& coords = geom.at("coordinates");
  if (type == "Polygon") return ring_from_json(coords.at(0), "geojson");
  if (type == "MultiPolygon") return ring_from_json(coords.at(0).at(0), "geojson");
  field_error("geojson", "unsupported geometry type " + type);
}

// "POLYGON((x y, x y, ...))"; only the outer ring is kept.
std::vector<Point> ring_from_wkt(const std::string& wkt) {
  const auto open = wkt.find("((");
  const auto close = wkt.find(')', open == std::string::npos ? 0 : open);
  if (open == std::string::npos || close == std::string::npos) field_error("footprint", "unreadable WKT polygon");
  std::vector<Point> ring;
  std::stringstream body(wkt.substr(open + 2, close - open - 2));
  std::string pair;
  while (std::getline(body, pair, ',')) {
    std::istringstream xy(pair);
    Point p;
    if (!(xy >> p.x >> p.y)) field_error("footprint", "unreadable WKT coordinate '" + pair + "'");
    ring.push_back(p);
  }
  return ring;
}

std::string url_encode(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    }
  }
  return out;
}

std::string trim_slash(std::string s) {
  while (!s.empty() && s.back() == '/') s.pop_back();
  return s;
}

json parse_json(std::string_view body, const std::string& what) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, what + " is not valid JSON: " + e.what());
  }
}

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(int timeout) : timeout_(timeout) {}

  HttpResponse get(const std::string& url) override {
    auto [client, path] = connect(url);
    auto res = client->Get(path);
    if (!res) fail(ErrorKind::Network, "GET " + url + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

  int download(const std::string& url, const std::function<void(std::string_view)>& sink) override {
    auto [client, path] = connect(url);
    int status = 0;
    auto res = client->Get(
        path,
        [&](const httplib::Response& r) {
          status = r.status;
          return true;
        },
        [&](const char* data, std::size_t n) {
          if (status >= 200 && status < 300) sink(std::string_view(data, n));
          return true;
        });
    if (!res) fail(ErrorKind::Network, "download of " + url + " failed: " + httplib::to_string(res.error()));
    return res->status;
  }

 private:
  std::pair<std::unique_ptr<httplib::Client>, std::string> connect(const std::string& url) const {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) fail(ErrorKind::Config, "URL without scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    auto client = std::make_unique<httplib::Client>(origin);
    client->set_follow_location(true);
    client->set_connection_timeout(timeout_, 0);
    client->set_read_timeout(timeout_, 0);
    return {std::move(client), path};
  }

  int timeout_;
};

std::string random_suffix() {
  thread_local std::mt19937_64 gen{std::random_device{}()};
  return std::to_string(gen() & 0xFFFFFFu);
}

}  // namespace

BBox parse_bbox(std::string_view text) {
  std::vector<double> v;
  std::string s(text);
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (part.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "bbox component '" + part + "' is not a number");
    }
  }
  if (v.size() != 4) fail(ErrorKind::Config, "bbox needs four values w,s,e,n");
  BBox b{v[0], v[1], v[2], v[3]};
  if (b.west < -180 || b.east > 180 || b.south < -90 || b.north > 90) fail(ErrorKind::Config, "bbox outside lon/lat range");
  if (!(b.west < b.east) || !(b.south < b.north)) fail(ErrorKind::Config, "bbox is empty or inverted");
  return b;
}

void validate(const AdmissionPolicy& policy) {
  if (!(policy.max_gsd_m > 0.0) || !(policy.min_area_km2 > 0.0)) {
    fail(ErrorKind::Config, "admission thresholds must be strictly positive");
  }
}

Admission admit(double gsd_m, double area_km2, const AdmissionPolicy& policy) {
  Admission a;
  if (!(gsd_m < policy.max_gsd_m)) {
    a.reasons.push_back("gsd " + io::format_decimal(gsd_m * 100.0, 4) + " cm is not below " +
                        io::format_decimal(policy.max_gsd_m * 100.0, 4) + " cm");
  }
  if (!(area_km2 > policy.min_area_km2)) {
    a.reasons.push_back("coverage " + io::format_decimal(area_km2, 4) + " km2 is not greater than " +
                        io::format_decimal(policy.min_area_km2, 4) + " km2");
  }
  a.admitted = a.reasons.empty();
  return a;
}

Admission admit(const CatalogEntry& entry, const AdmissionPolicy& policy) {
  return admit(entry.gsd_m, entry.area_km2, policy);
}

CatalogEntry parse_entry(const json& record) {
  if (!record.is_object()) fail(ErrorKind::Parse, "catalog record is not an object");
  CatalogEntry e;
  e.oam_id = required_string(record, {"oam_id", "_id"});
  e.title = optional_string(record, {"title"});

  const json* gsd = find_any(record, {"gsd_m", "gsd"});
  if (!gsd) field_error("gsd", "missing");
  if (!gsd->is_number()) field_error("gsd", "expected a number");
  e.gsd_m = gsd->get<double>();
  if (!(e.gsd_m > 0.0) || !std::isfinite(e.gsd_m)) field_error("gsd", "must be positive");

  if (const json* fp = find_any(record, {"geojson"})) {
    e.footprint = ring_from_geojson(*fp);
  } else if (const json* fp2 = find_any(record, {"footprint"})) {
    e.footprint = fp2->is_string() ? ring_from_wkt(fp2->get<std::string>()) : ring_from_json(*fp2, "footprint");
  }
  if (e.footprint.size() > 1 && e.footprint.front() == e.footprint.back()) e.footprint.pop_back();

  if (const json* area = find_any(record, {"area_km2"})) {
    if (!area->is_number()) field_error("area_km2", "expected a number");
    e.area_km2 = area->get<double>();
    e.area_source = record.value("area_source", std::string("catalog"));
  } else {
    if (e.footprint.size() < 3) field_error("footprint", "missing, and no area_km2 given");
    e.area_km2 = geodesic_ring_area_km2(e.footprint);
    e.area_source = "footprint";
  }
  if (!(e.area_km2 >= 0.0) || !std::isfinite(e.area_km2)) field_error("area_km2", "must be non-negative");

  std::string date = optional_string(record, {"acquisition_date", "acquisition_start"});
  e.acquisition_date = date.substr(0, std::min<std::size_t>(10, date.size()));
  e.provider = optional_string(record, {"provider"});
  e.download_url = required_string(record, {"download_url", "uuid"});
  if (const json* size = find_any(record, {"file_size"})) {
    if (!size->is_number_unsigned() && !size->is_number_integer()) field_error("file_size", "expected an integer");
    e.file_size = size->get<std::uint64_t>();
  }
  if (const json* sha = find_any(record, {"sha256"})) {
    if (!sha->is_string()) field_error("sha256", "expected a string");
    e.sha256 = sha->get<std::string>();
  }
  return e;
}

json to_json(const CatalogEntry& e) {
  json fp = json::array();
  for (const auto& p : e.footprint) fp.push_back({p.x, p.y});
  json j = {{"oam_id", e.oam_id},
            {"title", e.title},
            {"gsd_m", e.gsd_m},
            {"footprint", fp},
            {"area_km2", e.area_km2},
            {"area_source", e.area_source},
            {"acquisition_date", e.acquisition_date},
            {"provider", e.provider},
            {"download_url", e.download_url}};
  if (e.file_size) j["file_size"] = *e.file_size;
  if (e.sha256) j["sha256"] = *e.sha256;
  return j;
}

CatalogPage parse_page(std::string_view body) {
  const json doc = parse_json(body, "catalog response");
  if (!doc.is_object() || !doc.contains("results")) fail(ErrorKind::Parse, "catalog response field 'results': missing");
  CatalogPage page;
  const json& results = doc["results"];
  if (results.is_array()) {
    for (const auto& r : results) page.entries.push_back(parse_entry(r));
  } else if (results.is_object()) {
    page.entries.push_back(parse_entry(results));
  } else {
    fail(ErrorKind::Parse, "catalog response field 'results': expected an array");
  }
  if (doc.contains("meta") && doc["meta"].is_object()) {
    const json& m = doc["meta"];
    page.found = m.value("found", page.entries.size());
    page.page = m.value("page", std::size_t{1});
    page.limit = m.value("limit", page.entries.size());
  } else {
    page.found = page.entries.size();
    page.limit = page.entries.size();
  }
  return page;
}

std::unique_ptr<HttpTransport> make_http_transport(int timeout_seconds) {
  return std::make_unique<HttplibTransport>(timeout_seconds);
}

std::vector<CatalogEntry> search_catalog(const CatalogClient& client, const BBox& bbox, const AdmissionPolicy& policy) {
  validate(policy);
  if (client.page_limit < 1) fail(ErrorKind::Config, "page limit must be positive");
  const std::string box = io::format_decimal(bbox.west, 7) + "," + io::format_decimal(bbox.south, 7) + "," +
                          io::format_decimal(bbox.east, 7) + "," + io::format_decimal(bbox.north, 7);
  std::map<std::string, CatalogEntry> seen;
  for (std::size_t page = 1; page <= client.max_pages; ++page) {
    const std::string url = trim_slash(client.base_url) + "/meta?bbox=" + url_encode(box) +
                            "&limit=" + std::to_string(client.page_limit) + "&page=" + std::to_string(page);
    const HttpResponse res = client.transport.get(url);
    if (res.status < 200 || res.status >= 300) {
      fail(ErrorKind::Network, "catalog search returned HTTP " + std::to_string(res.status));
    }
    const CatalogPage p = parse_page(res.body);
    for (const auto& e : p.entries) {
      if (admit(e, policy).admitted) seen.emplace(e.oam_id, e);
    }
    if (p.entries.empty() || page * client.page_limit >= p.found) break;
  }
  std::vector<CatalogEntry> out;
  for (auto& [_, e] : seen) out.push_back(std::move(e));
  std::stable_sort(out.begin(), out.end(), [](const CatalogEntry& a, const CatalogEntry& b) {
    if (a.acquisition_date != b.acquisition_date) return a.acquisition_date > b.acquisition_date;
    return a.oam_id < b.oam_id;
  });
  return out;
}

FetchResult fetch_entry(const CatalogClient& client, const std::string& oam_id, const fs::path& dest) {
  if (oam_id.empty() || oam_id.find_first_of("/\\") != std::string::npos || oam_id == "." || oam_id == "..") {
    fail(ErrorKind::Config, "invalid OAM id '" + oam_id + "'");
  }
  const HttpResponse res = client.transport.get(trim_slash(client.base_url) + "/meta/" + url_encode(oam_id));
  if (res.status == 404) fail(ErrorKind::NotFound, "OAM id " + oam_id + " not found");
  if (res.status < 200 || res.status >= 300) {
    fail(ErrorKind::Network, "catalog lookup of " + oam_id + " returned HTTP " + std::to_string(res.status));
  }
  const CatalogPage page = parse_page(res.body);
  if (page.entries.empty()) fail(ErrorKind::NotFound, "OAM id " + oam_id + " not found");

  FetchResult result;
  result.entry = page.entries.front();
  if (result.entry.oam_id != oam_id) {
    fail(ErrorKind::Integrity, "catalog answered id " + result.entry.oam_id + " for " + oam_id);
  }
  fs::create_directories(dest);
  result.path = dest / (oam_id + ".tif");
  result.sidecar = dest / (oam_id + ".json");

  if (fs::exists(result.path) && fs::exists(result.sidecar)) {
    try {
      const json side = json::parse(io::read_text(result.sidecar));
      const std::string recorded = side.value("file_sha256", "");
      if (!recorded.empty() && io::sha256_file(result.path) == recorded) {
        result.sha256 = recorded;
        result.downloaded = false;
        return result;
      }
    } catch (const json::exception&) {
      // unreadable sidecar: fall through and download again
    }
  }

  fs::path tmp = result.path;
  tmp += ".part-" + random_suffix();
  std::uint64_t bytes = 0;
  int status = 0;
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    try {
      status = client.transport.download(result.entry.download_url, [&](std::string_view chunk) {
        out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
        bytes += chunk.size();
      });
    } catch (...) {
      out.close();
      fs::remove(tmp);
      throw;
    }
    if (!out) {
      out.close();
      fs::remove(tmp);
      fail(ErrorKind::Io, "write to " + tmp.string() + " failed");
    }
  }
  if (status < 200 || status >= 300) {
    fs::remove(tmp);
    if (status == 404) fail(ErrorKind::NotFound, "asset of " + oam_id + " not found at " + result.entry.download_url);
    fail(ErrorKind::Network, "download of " + oam_id + " returned HTTP " + std::to_string(status));
  }
  if (result.entry.file_size && *result.entry.file_size != bytes) {
    fs::remove(tmp);
    fail(ErrorKind::Integrity, "downloaded " + std::to_string(bytes) + " bytes for " + oam_id + ", catalog lists " +
                                   std::to_string(*result.entry.file_size));
  }
  result.sha256 = io::sha256_file(tmp);
  if (result.entry.sha256 && *result.entry.sha256 != result.sha256) {
    fs::remove(tmp);
    fail(ErrorKind::Integrity, "checksum mismatch for " + oam_id + ": expected " + *result.entry.sha256 + ", got " +
                                   result.sha256);
  }
  fs::rename(tmp, result.path);
  json side = to_json(result.entry);
  side["file_sha256"] = result.sha256;
  io::write_atomic(result.sidecar, side.dump(2) + "\n");
  result.downloaded = true;
  return result;
}

}  // namespace oddmap::ingest

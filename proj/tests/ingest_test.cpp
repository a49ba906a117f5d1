#include <gtest/gtest.h>

#include <httplib.h>

#include <cmath>
#include <map>
#include <thread>

#include "oddmap/error.hpp"
#include "oddmap/ingest.hpp"
#include "oddmap/io.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace oddmap;
using namespace oddmap::ingest;
using nlohmann::json;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Config;
}

// Spherical rectangle area R^2 * dlon * (sin lat1 - sin lat0).
double cap_area(double dlon_deg, double lat0_deg, double lat1_deg) {
  const double R = 6371.007181, rad = M_PI / 180;
  return R * R * dlon_deg * rad * (std::sin(lat1_deg * rad) - std::sin(lat0_deg * rad));
}

json native_record(const std::string& id, double gsd, double area, const std::string& date) {
  return {{"_id", id},
          {"title", "scene " + id},
          {"gsd", gsd},
          {"area_km2", area},
          {"acquisition_start", date + "T10:00:00.000Z"},
          {"provider", "test"},
          {"uuid", "https://example.invalid/" + id + ".tif"}};
}

/// Serves canned catalog pages keyed by URL.
class FakeTransport : public HttpTransport {
 public:
  std::map<std::string, HttpResponse> pages;
  std::vector<std::string> requested;

  HttpResponse get(const std::string& url) override {
    requested.push_back(url);
    const auto it = pages.find(url);
    return it == pages.end() ? HttpResponse{404, "{}"} : it->second;
  }
  int download(const std::string&, const std::function<void(std::string_view)>&) override { return 500; }
};

std::string page_body(const std::vector<json>& records, std::size_t found, std::size_t page, std::size_t limit) {
  return json{{"meta", {{"found", found}, {"page", page}, {"limit", limit}}}, {"results", records}}.dump();
}

}  // namespace

TEST(Admission, AllTableOneRegionsAdmitted) {
  const auto& rows = oracle::table1();
  ASSERT_EQ(rows.size(), 29u);
  for (const auto& r : rows) EXPECT_TRUE(admit(r.gsd_cm / 100.0, r.area_km2).admitted) << r.gsd_cm << " " << r.area_km2;
}

TEST(Admission, BoundariesAreRejected) {
  const auto coarse = admit(6.0 / 100.0, 2.0);
  EXPECT_FALSE(coarse.admitted);
  ASSERT_EQ(coarse.reasons.size(), 1u);
  EXPECT_NE(coarse.reasons[0].find("gsd 6 cm"), std::string::npos) << coarse.reasons[0];
  const auto small = admit(0.05, 1.0);
  EXPECT_FALSE(small.admitted);
  ASSERT_EQ(small.reasons.size(), 1u);
  EXPECT_NE(small.reasons[0].find("coverage 1 km2"), std::string::npos) << small.reasons[0];
  EXPECT_EQ(admit(0.07, 0.5).reasons.size(), 2u);
  EXPECT_TRUE(admit(0.0599, 1.001).admitted);
  EXPECT_EQ(kind_of([] { validate(AdmissionPolicy{0.0, 1.0}); }), ErrorKind::Config);
}

TEST(Bbox, ParseAndReject) {
  const auto b = parse_bbox("39.1,-6.9, 39.4,-6.6");
  EXPECT_DOUBLE_EQ(b.west, 39.1);
  EXPECT_DOUBLE_EQ(b.north, -6.6);
  for (const char* bad : {"1,2,3", "1,2,x,4", "3,0,1,1", "0,0,200,1", "0,5,1,5"}) {
    EXPECT_EQ(kind_of([&] { parse_bbox(bad); }), ErrorKind::Config) << bad;
  }
}

TEST(Entry, NativeKeysWithFootprintArea) {
  json rec = native_record("abc", 0.05, 0, "2021-03-04");
  rec.erase("area_km2");
  rec["geojson"] = {{"type", "Polygon"}, {"coordinates", {{{0, 0}, {0.01, 0}, {0.01, 0.01}, {0, 0.01}, {0, 0}}}}};
  rec["unexpected"] = 5;
  const auto e = parse_entry(rec);
  EXPECT_EQ(e.oam_id, "abc");
  EXPECT_EQ(e.acquisition_date, "2021-03-04");
  EXPECT_EQ(e.area_source, "footprint");
  EXPECT_EQ(e.footprint.size(), 4u);
  EXPECT_NEAR(e.area_km2, cap_area(0.01, 0, 0.01), 1e-9);
  const auto back = parse_entry(to_json(e));
  EXPECT_EQ(back.area_km2, e.area_km2);
  EXPECT_EQ(back.download_url, e.download_url);
}

TEST(Entry, WktFootprint) {
  json rec = native_record("w", 0.04, 0, "2020-01-01");
  rec.erase("area_km2");
  rec["footprint"] = "POLYGON((0 0, 0.02 0, 0.02 0.01, 0 0.01, 0 0))";
  EXPECT_NEAR(parse_entry(rec).area_km2, cap_area(0.02, 0, 0.01), 1e-9);
}

TEST(Entry, MissingOrMistypedFieldsNameTheField) {
  auto expect_field = [](json rec, const std::string& field) {
    try {
      parse_entry(rec);
      ADD_FAILURE() << field;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Parse);
      EXPECT_NE(std::string(e.what()).find("'" + field + "'"), std::string::npos) << e.what();
    }
  };
  auto rec = native_record("x", 0.05, 3, "2020-01-01");
  auto no_gsd = rec;
  no_gsd.erase("gsd");
  expect_field(no_gsd, "gsd");
  auto str_gsd = rec;
  str_gsd["gsd"] = "5cm";
  expect_field(str_gsd, "gsd");
  auto no_id = rec;
  no_id.erase("_id");
  expect_field(no_id, "oam_id");
  auto no_area = rec;
  no_area.erase("area_km2");
  expect_field(no_area, "footprint");
  auto no_url = rec;
  no_url.erase("uuid");
  expect_field(no_url, "download_url");
  EXPECT_EQ(kind_of([] { parse_page("not json"); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { parse_page("{}"); }), ErrorKind::Parse);
}

TEST(Search, PagesFiltersAndOrders) {
  FakeTransport t;
  const std::string base = "https://cat.test/meta?bbox=39%2C-7%2C40%2C-6&limit=2&page=";
  t.pages[base + "1"] = {200, page_body({native_record("b", 0.05, 5, "2020-01-01"), native_record("coarse", 0.08, 9, "2022-01-01")}, 5, 1, 2)};
  t.pages[base + "2"] = {200, page_body({native_record("a", 0.05, 5, "2020-01-01"), native_record("small", 0.03, 0.5, "2022-01-01")}, 5, 2, 2)};
  t.pages[base + "3"] = {200, page_body({native_record("new", 0.045, 1.5, "2023-06-30")}, 5, 3, 2)};
  CatalogClient client{t, "https://cat.test/", 2, 50};
  const auto out = search_catalog(client, parse_bbox("39,-7,40,-6"));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].oam_id, "new");
  EXPECT_EQ(out[1].oam_id, "a");
  EXPECT_EQ(out[2].oam_id, "b");
  EXPECT_EQ(t.requested.size(), 3u);

  t.pages[base + "1"] = {503, ""};
  EXPECT_EQ(kind_of([&] { search_catalog(client, parse_bbox("39,-7,40,-6")); }), ErrorKind::Network);
}

class FetchServer : public ::testing::Test {
 protected:
  void SetUp() override {
    payload_ = std::string(200000, '\0');
    for (std::size_t i = 0; i < payload_.size(); ++i) payload_[i] = static_cast<char>(i * 7 % 251);
    server_.Get(R"(/meta/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      ++lookups_;
      if (id == "missing") {
        res.status = 404;
        return;
      }
      json rec = native_record(id, 0.05, 3, "2021-01-01");
      rec["uuid"] = base_ + "/files/" + id + ".tif";
      rec["file_size"] = id == "wrongsize" ? payload_.size() + 1 : payload_.size();
      rec["sha256"] = id == "badsum" ? std::string(64, '0') : io::sha256_hex(std::string_view(payload_));
      res.set_content(json{{"results", rec}}.dump(), "application/json");
    });
    server_.Get(R"(/files/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      ++downloads_;
      if (std::string(req.matches[1]) == "gone.tif") {
        res.status = 404;
        return;
      }
      res.set_content(payload_, "image/tiff");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    base_ = "http://127.0.0.1:" + std::to_string(port_);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    transport_ = make_http_transport(10);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  CatalogClient client() { return {*transport_, base_}; }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::string base_;
  std::string payload_;
  std::unique_ptr<HttpTransport> transport_;
  std::atomic<int> lookups_{0};
  std::atomic<int> downloads_{0};
};

TEST_F(FetchServer, DownloadsVerifiesAndReusesCache) {
  test::TempDir dir;
  const auto r = fetch_entry(client(), "scene1", dir.path());
  EXPECT_TRUE(r.downloaded);
  EXPECT_EQ(test::read_all(r.path), payload_);
  EXPECT_EQ(r.sha256, io::sha256_hex(std::string_view(payload_)));
  const auto side = json::parse(test::read_all(r.sidecar));
  EXPECT_EQ(side["file_sha256"], r.sha256);
  EXPECT_EQ(side["oam_id"], "scene1");

  const auto again = fetch_entry(client(), "scene1", dir.path());
  EXPECT_FALSE(again.downloaded);
  EXPECT_EQ(downloads_.load(), 1);

  test::write_text(r.path, "corrupted");
  EXPECT_TRUE(fetch_entry(client(), "scene1", dir.path()).downloaded);
  EXPECT_EQ(downloads_.load(), 2);
}

TEST_F(FetchServer, IntegrityAndLookupFailuresLeaveNoFiles) {
  test::TempDir dir;
  EXPECT_EQ(kind_of([&] { fetch_entry(client(), "badsum", dir.path()); }), ErrorKind::Integrity);
  EXPECT_EQ(kind_of([&] { fetch_entry(client(), "wrongsize", dir.path()); }), ErrorKind::Integrity);
  EXPECT_EQ(kind_of([&] { fetch_entry(client(), "missing", dir.path()); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([&] { fetch_entry(client(), "gone", dir.path()); }), ErrorKind::NotFound);
  EXPECT_EQ(kind_of([&] { fetch_entry(client(), "../etc", dir.path()); }), ErrorKind::Config);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  EXPECT_EQ(files, 0u);
}

TEST(Fetch, UnreachableHostIsNetworkError) {
  auto t = make_http_transport(1);
  CatalogClient c{*t, "http://127.0.0.1:1"};
  test::TempDir dir;
  EXPECT_EQ(kind_of([&] { fetch_entry(c, "x", dir.path()); }), ErrorKind::Network);
}

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "burstscale/common.hpp"
#include "burstscale/pageviews.hpp"

using namespace burstscale;
using namespace burstscale::trace;

namespace {

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::filesystem::path(FIXTURE_DIR) / name);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PageviewRequest google_day() {
  PageviewRequest r;
  r.article = "Google";
  r.start = parse_date("2018-01-01");
  r.end = parse_date("2018-01-01");
  return r;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("burstscale_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("pageviews url follows the per-article template") {
  auto r = google_day();
  r.end = parse_date("2018-01-02");
  CHECK(pageviews_url(r) ==
        "https://wikimedia.org/api/rest_v1/metrics/pageviews/per-article/en.wikipedia/all-access/all-agents/"
        "Google/hourly/2018010100/2018010223");
}

TEST_CASE("article titles are underscored and percent-encoded") {
  CHECK(encode_article("Albert Einstein") == "Albert_Einstein");
  CHECK(encode_article("AC/DC") == "AC%2FDC");
  CHECK(encode_article("Caf\xC3\xA9") == "Caf%C3%A9");
}

TEST_CASE("dates parse strictly") {
  CHECK(parse_date("2018-02-28") == std::chrono::year_month_day{std::chrono::year{2018}, std::chrono::month{2},
                                                                 std::chrono::day{28}});
  CHECK_THROWS_AS(parse_date("2018-02-30"), ValidationError);
  CHECK_THROWS_AS(parse_date("20180101"), ValidationError);
  CHECK_THROWS_AS(parse_date("2018-01-01x"), ValidationError);
}

TEST_CASE("fixture with 24 hourly counts replays to a 24-step trace") {
  const auto t = parse_pageviews_json(read_fixture("pageviews_google_2018-01-01.json"), google_day());
  CHECK(t.size() == 24);
  CHECK(t.step_seconds() == 3600);
  CHECK(t.timestamps().front() == 1514764800);
  CHECK(t[0] == 1163);
  CHECK(t[23] == 1410);
}

TEST_CASE("hours missing inside the range count as zero") {
  const std::string body =
      R"({"items":[{"timestamp":"2018010100","views":5},{"timestamp":"2018010103","views":7}]})";
  const auto t = parse_pageviews_json(body, google_day());
  CHECK(t.values() == std::vector<double>{5, 0, 0, 7});
}

TEST_CASE("empty or malformed responses are rejected") {
  CHECK_THROWS_AS(parse_pageviews_json(R"({"items":[]})", google_day()), ValidationError);
  CHECK_THROWS_AS(parse_pageviews_json("not json", google_day()), ValidationError);
}

TEST_CASE("end before start fails before any request") {
  auto r = google_day();
  r.start = parse_date("2018-01-05");
  int calls = 0;
  PageviewClient client([&](const std::string&) {
    ++calls;
    return HttpResponse{200, "{}"};
  });
  CHECK_THROWS_AS(client.fetch(r), ValidationError);
  CHECK(calls == 0);
}

TEST_CASE("transient failures are retried with doubling backoff") {
  const std::string body = read_fixture("pageviews_google_2018-01-01.json");
  int calls = 0;
  std::vector<long> waits;
  PageviewClient client(
      [&](const std::string& url) {
        CHECK(url == pageviews_url(google_day()));
        return ++calls < 3 ? HttpResponse{503, "busy"} : HttpResponse{200, body};
      },
      {}, RetryPolicy{}, [&](std::chrono::milliseconds d) { waits.push_back(static_cast<long>(d.count())); });
  const auto t = client.fetch(google_day());
  CHECK(t.size() == 24);
  CHECK(calls == 3);
  CHECK(waits == std::vector<long>{500, 1000});
}

TEST_CASE("retries are bounded and the failure surfaces") {
  int calls = 0;
  std::vector<long> waits;
  RetryPolicy retry;
  retry.max_attempts = 5;
  retry.max_backoff = std::chrono::milliseconds(1500);
  PageviewClient client([&](const std::string&) { return ++calls, HttpResponse{0, ""}; }, {}, retry,
                        [&](std::chrono::milliseconds d) { waits.push_back(static_cast<long>(d.count())); });
  CHECK_THROWS_AS(client.fetch(google_day()), std::runtime_error);
  CHECK(calls == 5);
  CHECK(waits == std::vector<long>{500, 1000, 1500, 1500});
}

TEST_CASE("client errors are not retried") {
  int calls = 0;
  PageviewClient client([&](const std::string&) { return ++calls, HttpResponse{404, "not found"}; }, {}, {},
                        [](std::chrono::milliseconds) {});
  CHECK_THROWS(client.fetch(google_day()));
  CHECK(calls == 1);
}

TEST_CASE("responses are cached and replayed offline") {
  const auto dir = fresh_dir("pageview_cache");
  const std::string body = read_fixture("pageviews_google_2018-01-01.json");
  int calls = 0;
  PageviewClient online([&](const std::string&) { return ++calls, HttpResponse{200, body}; }, dir);
  const auto first = online.fetch(google_day());
  CHECK(std::filesystem::exists(online.cache_path(google_day())));

  PageviewClient offline([](const std::string&) -> HttpResponse { throw std::logic_error("network used"); }, dir);
  CHECK(offline.fetch(google_day()) == first);
  CHECK(calls == 1);
  std::filesystem::remove_all(dir);
}

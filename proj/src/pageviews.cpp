#include "burstscale/pageviews.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "burstscale/common.hpp"

namespace burstscale::trace {

namespace {

constexpr std::string_view kHost = "wikimedia.org";
constexpr std::string_view kBasePath = "/api/rest_v1/metrics/pageviews/per-article/";

std::string ymd_compact(std::chrono::year_month_day d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d%02u%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

std::int64_t epoch_of(std::chrono::year_month_day d, int hour) {
  using namespace std::chrono;
  return duration_cast<seconds>(sys_days{d}.time_since_epoch() + hours{hour}).count();
}

void check_range(const PageviewRequest& r) {
  if (!r.start.ok() || !r.end.ok()) throw ValidationError("pageviews: invalid date");
  if (std::chrono::sys_days{r.end} < std::chrono::sys_days{r.start})
    throw ValidationError("pageviews: end date precedes start date");
  if (r.article.empty()) throw ValidationError("pageviews: empty article name");
}

}  // namespace

std::chrono::year_month_day parse_date(std::string_view iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char extra = 0;
  std::string s(iso);
  if (std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &extra) != 3)
    throw ValidationError("expected date YYYY-MM-DD, got '" + s + "'");
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw ValidationError("invalid calendar date '" + s + "'");
  return ymd;
}

std::string encode_article(std::string_view article) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (char raw : article) {
    const auto c = static_cast<unsigned char>(raw == ' ' ? '_' : raw);
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string pageviews_url(const PageviewRequest& r) {
  check_range(r);
  std::string url = "https://";
  url += kHost;
  url += kBasePath;
  url += r.project + "/" + r.access + "/" + r.agent + "/" + encode_article(r.article) + "/hourly/";
  url += ymd_compact(r.start) + "00/" + ymd_compact(r.end) + "23";
  return url;
}

HttpGet https_transport() {
  return [](const std::string& url) -> HttpResponse {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string host = url.substr(scheme_end + 3, path_start - scheme_end - 3);
    httplib::SSLClient client(host);
    client.set_connection_timeout(10);
    client.set_read_timeout(30);
    auto res = client.Get(url.substr(path_start), {{"User-Agent", "burstscale/1.0 (trace ingestion)"}});
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
  };
}

WorkloadTrace parse_pageviews_json(std::string_view body, const PageviewRequest& request) {
  check_range(request);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("pageviews: malformed response: ") + e.what());
  }
  if (!doc.contains("items") || !doc["items"].is_array() || doc["items"].empty())
    throw ValidationError("pageviews: empty result range");

  const std::int64_t first = epoch_of(request.start, 0);
  const std::int64_t last = epoch_of(request.end, 23);
  std::map<std::int64_t, double> views;
  for (const auto& item : doc["items"]) {
    const std::string stamp = item.at("timestamp").get<std::string>();
    if (stamp.size() < 10) throw ValidationError("pageviews: bad timestamp '" + stamp + "'");
    const auto ymd = parse_date(stamp.substr(0, 4) + "-" + stamp.substr(4, 2) + "-" + stamp.substr(6, 2));
    const std::int64_t ts = epoch_of(ymd, std::stoi(stamp.substr(8, 2)));
    if (ts < first || ts > last) continue;
    views[ts] = item.at("views").get<double>();
  }
  if (views.empty()) throw ValidationError("pageviews: empty result range");
  // Clip to the observed span; hours missing inside it count as zero views.
  const std::int64_t lo = views.begin()->first;
  const std::int64_t hi = views.rbegin()->first;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>((hi - lo) / 3600 + 1));
  for (std::int64_t ts = lo; ts <= hi; ts += 3600) {
    auto it = views.find(ts);
    values.push_back(it == views.end() ? 0.0 : it->second);
  }
  return WorkloadTrace::regular(lo, 3600, std::move(values));
}

PageviewClient::PageviewClient(HttpGet transport, std::filesystem::path cache_dir, RetryPolicy retry,
                               Sleeper sleeper)
    : transport_(std::move(transport)),
      cache_dir_(std::move(cache_dir)),
      retry_(retry),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
      })) {}

std::filesystem::path PageviewClient::cache_path(const PageviewRequest& r) const {
  return cache_dir_ / (r.project + "_" + encode_article(r.article) + "_" + ymd_compact(r.start) + "_" +
                       ymd_compact(r.end) + ".json");
}

WorkloadTrace PageviewClient::fetch(const PageviewRequest& request) const {
  const std::string url = pageviews_url(request);
  if (!cache_dir_.empty()) {
    std::ifstream cached(cache_path(request));
    if (cached) {
      std::stringstream ss;
      ss << cached.rdbuf();
      return parse_pageviews_json(ss.str(), request);
    }
  }
  auto backoff = retry_.initial_backoff;
  HttpResponse res;
  for (int attempt = 1;; ++attempt) {
    res = transport_(url);
    const bool retryable = res.status == 0 || res.status == 429 || res.status >= 500;
    if (!retryable || attempt >= retry_.max_attempts) break;
    sleeper_(backoff);
    backoff = std::min(backoff * 2, retry_.max_backoff);
  }
  if (res.status != 200)
    throw std::runtime_error("pageviews: GET " + url + " failed with status " + std::to_string(res.status) +
                             (res.body.empty() ? "" : ": " + res.body.substr(0, 200)));
  auto trace = parse_pageviews_json(res.body, request);
  if (!cache_dir_.empty()) {
    std::filesystem::create_directories(cache_dir_);
    std::ofstream out(cache_path(request), std::ios::binary);
    out << res.body;
  }
  return trace;
}

}  // namespace burstscale::trace

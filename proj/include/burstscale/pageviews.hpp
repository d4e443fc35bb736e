#ifndef BURSTSCALE_PAGEVIEWS_HPP_
#define BURSTSCALE_PAGEVIEWS_HPP_

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include "burstscale/trace.hpp"

namespace burstscale::trace {

/// Hourly per-article pageviews from the Wikimedia REST API, covering whole
/// days from `start` 00:00 through `end` 23:00 UTC.
struct PageviewRequest {
  std::string article;
  std::chrono::year_month_day start;
  std::chrono::year_month_day end;
  std::string project = "en.wikipedia";
  std::string access = "all-access";
  std::string agent = "all-agents";
};

std::chrono::year_month_day parse_date(std::string_view iso);  // YYYY-MM-DD

/// Article titles use underscores for spaces and are percent-encoded.
std::string encode_article(std::string_view article);
std::string pageviews_url(const PageviewRequest& request);

struct HttpResponse {
  int status = 0;  // 0 = transport failure
  std::string body;
};
using HttpGet = std::function<HttpResponse(const std::string& url)>;

/// cpp-httplib over TLS.
HttpGet https_transport();

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{8000};
};

/// Parses a pageviews response body. Hours absent from the response are filled with 0.
WorkloadTrace parse_pageviews_json(std::string_view body, const PageviewRequest& request);

class PageviewClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit PageviewClient(HttpGet transport = https_transport(), std::filesystem::path cache_dir = {},
                          RetryPolicy retry = {}, Sleeper sleeper = {});

  /// Replays `cache_dir` when it already holds the response; otherwise fetches
  /// (retrying 429/5xx/transport errors with doubling backoff) and caches the raw body.
  WorkloadTrace fetch(const PageviewRequest& request) const;

  std::filesystem::path cache_path(const PageviewRequest& request) const;

 private:
  HttpGet transport_;
  std::filesystem::path cache_dir_;
  RetryPolicy retry_;
  Sleeper sleeper_;
};

}  // namespace burstscale::trace

#endif  // BURSTSCALE_PAGEVIEWS_HPP_

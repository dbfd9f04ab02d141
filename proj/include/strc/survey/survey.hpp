#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "strc/dataset/codec.hpp"
#include "strc/dataset/dataset.hpp"

namespace strc {

/// Transport failure that persisted through every retry, or an HTTP error
/// status.
class NetworkError : public Error {
 public:
  using Error::Error;
};

/// Offline mode found no cached payload for a request.
class MissingFixtureError : public IoError {
 public:
  using IoError::IoError;
};

/// The service answered with something that is not a supported raster.
class DecodeError : public FormatError {
 public:
  using FormatError::FormatError;
};

inline constexpr std::string_view kDefaultSurveyUrl = "https://alasky.cds.unistra.fr/hips-image-services/hips2fits";
inline constexpr const char* kSurveyUrlEnv = "STRC_SURVEY_URL";

/// Environment variable, then the configured value, then the public service.
std::string resolve_survey_url(const std::string& configured = "");

struct CutoutRequest {
  std::string survey;  ///< HiPS identifier, e.g. "CDS/P/DSS2/red"
  double ra_deg = 0;
  double dec_deg = 0;
  double fov_deg = 0.5;
  std::size_t width = 256;
  std::size_t height = 256;
  std::string format = "jpg";

  /// Throws UsageError for out-of-range coordinates or geometry.
  void validate() const;
};

/// RFC 3986 unreserved characters pass through; everything else is %XX.
std::string percent_encode(std::string_view text);
/// Shortest decimal that round-trips ("10", "-5", "0.5").
std::string format_number(double v);

/// `<base>?hips=..&ra=..&dec=..&fov=..&width=..&height=..&format=..`
std::string build_request_url(std::string_view base_url, const CutoutRequest& req);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_hex(const Bytes& data);

/// One survey identifier per line; `#` comments. Throws ConfigError if empty.
std::vector<std::string> parse_survey_catalog(const std::string& text);
std::vector<std::string> read_survey_catalog(const std::filesystem::path& path);

enum class FetchMode { live, offline };

struct RetryPolicy {
  double timeout_s = 30;
  int retries = 3;
  std::vector<double> backoff_s{1, 2, 4};  ///< wait before retry i (last entry repeats)
};

struct HttpResponse {
  int status = 0;  ///< 0: transport failure
  std::string body;
  std::string error;
};

/// Performs one GET. The default transport is cpp-httplib.
using HttpGet = std::function<HttpResponse(const std::string& url, double timeout_s)>;
HttpResponse http_get(const std::string& url, double timeout_s);

struct Provenance {
  std::string timestamp;  ///< UTC, ISO 8601
  std::string source;     ///< "network", "cache" or "fixture"
  std::string url;
  std::string sha256;     ///< of the cached PPM
  std::filesystem::path path;

  std::string format() const;
};

struct SurveyClientOptions {
  FetchMode mode = FetchMode::offline;
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path provenance_log;  ///< empty: not recorded
  std::string base_url;                  ///< empty: resolve_survey_url()
  RetryPolicy retry;
  HttpGet transport;                             ///< empty: http_get
  std::function<void(double seconds)> sleep;     ///< empty: real sleep
};

struct FetchResult {
  Image image;  ///< raw255 domain
  Provenance provenance;
};

/// Content-addressed cutout cache in front of the cutout service. Offline
/// mode never touches the transport.
class SurveyClient {
 public:
  explicit SurveyClient(SurveyClientOptions options);

  const SurveyClientOptions& options() const noexcept { return options_; }
  std::string url_for(const CutoutRequest& req) const;
  /// `<cache>/<sha256(url)>.ppm`
  std::filesystem::path cache_path(const std::string& url) const;

  FetchResult fetch(const CutoutRequest& req);

  /// Transport calls made so far (including retries).
  std::size_t network_calls() const noexcept { return network_calls_; }

 private:
  FetchResult from_cache(const std::string& url, const std::filesystem::path& path, const char* source);
  void record(const Provenance& p);

  SurveyClientOptions options_;
  std::size_t network_calls_ = 0;
  std::mutex write_mutex_;
};

/// Writes `img` into the cache slot for `url` as a fixture.
void store_fixture(const std::filesystem::path& cache_dir, const std::string& url, const Image& img);

struct CutoutGeometry {
  double fov_deg = 0.5;
  std::size_t width = 256;
  std::size_t height = 256;
  std::string format = "jpg";
};

struct SurveyFailure {
  std::string survey;
  std::string kind;  ///< "network", "missing_fixture", "decode", "io"
  std::string message;
};

struct ObjectFetchReport {
  std::string object;
  std::vector<std::filesystem::path> written;
  std::vector<SurveyFailure> failures;
};

/// Thrown when every survey failed for an object.
class FetchAggregateError : public Error {
 public:
  FetchAggregateError(const std::string& message, ObjectFetchReport report)
      : Error(message), report_(std::move(report)) {}
  const ObjectFetchReport& report() const noexcept { return report_; }

 private:
  ObjectFetchReport report_;
};

/// File name for survey `index` in an object's gt directory, e.g.
/// `03_CDS_P_PanSTARRS_DR1_g.ppm`.
std::string reference_file_name(std::size_t index, const std::string& survey);

/// One request per survey, written to `<root>/<object>/gt/`. Failures are
/// collected per survey; throws FetchAggregateError only if none succeeded.
ObjectFetchReport fetch_object_references(SurveyClient& client, const ObjectEntry& entry,
                                          const std::vector<std::string>& surveys, const CutoutGeometry& geometry,
                                          const std::filesystem::path& root);

}  // namespace strc

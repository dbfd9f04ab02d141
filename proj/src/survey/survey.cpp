#include "strc/survey/survey.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace strc {

namespace fs = std::filesystem;

std::string resolve_survey_url(const std::string& configured) {
  if (const char* env = std::getenv(kSurveyUrlEnv); env && *env) return env;
  if (!configured.empty()) return configured;
  return std::string(kDefaultSurveyUrl);
}

void CutoutRequest::validate() const {
  if (survey.empty()) throw UsageError("cutout request needs a survey identifier");
  if (!(ra_deg >= 0 && ra_deg < 360)) throw UsageError("ra must lie in [0, 360), got " + format_number(ra_deg));
  if (!(std::abs(dec_deg) <= 90)) throw UsageError("dec must lie in [-90, 90], got " + format_number(dec_deg));
  if (!(fov_deg > 0) || !std::isfinite(fov_deg)) throw UsageError("fov must be > 0");
  if (width < 16 || height < 16) throw UsageError("cutout width and height must be >= 16");
  if (format.empty()) throw UsageError("cutout format must not be empty");
}

std::string percent_encode(std::string_view text) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string build_request_url(std::string_view base_url, const CutoutRequest& req) {
  req.validate();
  std::string url(base_url);
  url += "?hips=" + percent_encode(req.survey);
  url += "&ra=" + percent_encode(format_number(req.ra_deg));
  url += "&dec=" + percent_encode(format_number(req.dec_deg));
  url += "&fov=" + percent_encode(format_number(req.fov_deg));
  url += "&width=" + std::to_string(req.width);
  url += "&height=" + std::to_string(req.height);
  url += "&format=" + percent_encode(req.format);
  return url;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_hex(const Bytes& data) {
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

std::vector<std::string> parse_survey_catalog(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string id, extra;
    if (!(fields >> id)) continue;
    if (fields >> extra) throw ConfigError("survey catalog line has more than one identifier: " + line);
    out.push_back(id);
  }
  if (out.empty()) throw ConfigError("survey catalog is empty");
  return out;
}

std::vector<std::string> read_survey_catalog(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read survey catalog " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_survey_catalog(ss.str());
}

HttpResponse http_get(const std::string& url, double timeout_s) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) return {0, "", "URL without scheme: " + url};
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  const std::string target = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client cli(origin);
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_follow_location(true);
  auto res = cli.Get(target);
  if (!res) return {0, "", httplib::to_string(res.error())};
  return {res->status, res->body, ""};
}

std::string Provenance::format() const {
  return "time=" + timestamp + " source=" + source + " url=" + url + " sha256=" + sha256 + " path=" + path.string();
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& data) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

SurveyClient::SurveyClient(SurveyClientOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) options_.base_url = resolve_survey_url();
  if (!options_.transport) options_.transport = http_get;
  if (!options_.sleep) {
    options_.sleep = [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
  }
  if (options_.retry.retries < 0) throw ConfigError("retry count must be >= 0");
  if (!(options_.retry.timeout_s > 0)) throw ConfigError("timeout must be > 0");
}

std::string SurveyClient::url_for(const CutoutRequest& req) const { return build_request_url(options_.base_url, req); }

fs::path SurveyClient::cache_path(const std::string& url) const {
  return options_.cache_dir / (sha256_hex(url) + ".ppm");
}

void SurveyClient::record(const Provenance& p) {
  if (options_.provenance_log.empty()) return;
  if (options_.provenance_log.has_parent_path()) fs::create_directories(options_.provenance_log.parent_path());
  std::ofstream log(options_.provenance_log, std::ios::app);
  if (!log) throw IoError("cannot append to " + options_.provenance_log.string());
  log << p.format() << '\n';
}

FetchResult SurveyClient::from_cache(const std::string& url, const fs::path& path, const char* source) {
  const Bytes bytes = read_file(path);
  FetchResult r;
  try {
    r.image = decode_netpbm(bytes);
  } catch (const FormatError& e) {
    throw DecodeError("cached payload " + path.string() + " is corrupt: " + e.what());
  }
  r.provenance = {utc_now(), source, url, sha256_hex(bytes), path};
  std::lock_guard lock(write_mutex_);
  record(r.provenance);
  return r;
}

FetchResult SurveyClient::fetch(const CutoutRequest& req) {
  const std::string url = url_for(req);
  const fs::path path = cache_path(url);
  if (fs::exists(path)) return from_cache(url, path, options_.mode == FetchMode::offline ? "fixture" : "cache");
  if (options_.mode == FetchMode::offline) throw MissingFixtureError("no fixture for " + url + " (expected " + path.string() + ")");

  const auto& retry = options_.retry;
  HttpResponse resp;
  bool ok = false;
  int attempts = 0;
  for (int a = 0; a <= retry.retries; ++a) {
    if (a > 0 && !retry.backoff_s.empty()) {
      options_.sleep(retry.backoff_s[std::min<std::size_t>(static_cast<std::size_t>(a - 1), retry.backoff_s.size() - 1)]);
    }
    ++attempts;
    ++network_calls_;
    resp = options_.transport(url, retry.timeout_s);
    if (resp.status == 200) {
      ok = true;
      break;
    }
    // Client errors will not change on retry.
    if (resp.status >= 400 && resp.status < 500) break;
  }
  if (!ok) {
    const std::string why = resp.status ? "HTTP " + std::to_string(resp.status) : resp.error;
    throw NetworkError("GET " + url + " failed after " + std::to_string(attempts) + " attempt(s): " + why);
  }

  Image img;
  try {
    img = decode_image(Bytes(resp.body.begin(), resp.body.end()));
  } catch (const FormatError& e) {
    throw DecodeError("undecodable response from " + url + ": " + e.what());
  }
  const Bytes ppm = encode_netpbm(img);
  const std::string ppm_str(ppm.begin(), ppm.end());

  FetchResult r;
  r.image = decode_netpbm(ppm);
  r.provenance = {utc_now(), "network", url, sha256_hex(ppm), path};

  std::lock_guard lock(write_mutex_);
  fs::create_directories(options_.cache_dir);
  write_atomic(path, ppm_str);
  fs::path meta = path;
  meta.replace_extension(".meta");
  write_atomic(meta, "url=" + url + "\nsha256=" + r.provenance.sha256 + "\nsource_sha256=" + sha256_hex(resp.body) +
                         "\nfetched=" + r.provenance.timestamp + "\n");
  record(r.provenance);
  return r;
}

void store_fixture(const fs::path& cache_dir, const std::string& url, const Image& img) {
  fs::create_directories(cache_dir);
  const Bytes ppm = encode_netpbm(img);
  const fs::path path = cache_dir / (sha256_hex(url) + ".ppm");
  write_atomic(path, std::string(ppm.begin(), ppm.end()));
  fs::path meta = path;
  meta.replace_extension(".meta");
  write_atomic(meta, "url=" + url + "\nsha256=" + sha256_hex(ppm) + "\n");
}

std::string reference_file_name(std::size_t index, const std::string& survey) {
  std::string name;
  for (char c : survey) name += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%02zu_", index);
  return prefix + name + ".ppm";
}

ObjectFetchReport fetch_object_references(SurveyClient& client, const ObjectEntry& entry,
                                          const std::vector<std::string>& surveys, const CutoutGeometry& geometry,
                                          const fs::path& root) {
  entry.validate();
  if (surveys.empty()) throw ConfigError("survey catalog is empty");
  ObjectFetchReport report;
  report.object = entry.name;
  const fs::path dir = root / entry.name / "gt";
  for (std::size_t i = 0; i < surveys.size(); ++i) {
    CutoutRequest req{surveys[i], entry.ra_deg, entry.dec_deg, geometry.fov_deg, geometry.width, geometry.height,
                      geometry.format};
    try {
      auto res = client.fetch(req);
      fs::create_directories(dir);
      const fs::path out = dir / reference_file_name(i, surveys[i]);
      write_image(out, res.image);
      report.written.push_back(out);
    } catch (const MissingFixtureError& e) {
      report.failures.push_back({surveys[i], "missing_fixture", e.what()});
    } catch (const DecodeError& e) {
      report.failures.push_back({surveys[i], "decode", e.what()});
    } catch (const NetworkError& e) {
      report.failures.push_back({surveys[i], "network", e.what()});
    } catch (const IoError& e) {
      report.failures.push_back({surveys[i], "io", e.what()});
    }
  }
  if (report.written.empty()) {
    throw FetchAggregateError("every survey failed for " + entry.name + " (" + std::to_string(surveys.size()) +
                                  " attempted)",
                              report);
  }
  return report;
}

}  // namespace strc

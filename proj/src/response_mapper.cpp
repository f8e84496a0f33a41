#include "irtbias/response_mapper.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"

namespace irtbias {

std::string_view to_string(MapperMode m) { return m == MapperMode::external ? "external" : "fallback"; }

void MapperConfig::validate() const {
  if ((mode == MapperMode::external) != endpoint.has_value()) {
    throw Error(ErrorCode::InvalidArgument, "an endpoint is required in external mode and only there");
  }
  if (timeout.count() <= 0) throw Error(ErrorCode::InvalidArgument, "timeout must be positive");
  if (max_retries < 0) throw Error(ErrorCode::InvalidArgument, "max_retries must be >= 0");
}

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool contains(const std::string& hay, std::string_view needle) { return hay.find(needle) != std::string::npos; }

constexpr std::array<std::string_view, 5> kRefusalPhrases = {
    "prefer not to answer", "cannot take a position", "as an ai", "i won't answer", "both sides"};

}  // namespace

Category fallback_category(std::string_view raw_text) {
  const std::string t = lowercase(raw_text);
  for (auto phrase : kRefusalPhrases) {
    if (contains(t, phrase)) return Category::PNA;
  }
  if (contains(t, "strongly agree")) return Category::SA;
  if (contains(t, "strongly disagree")) return Category::SD;
  if (contains(t, "disagree") || contains(t, "do not agree")) return Category::D;
  if (contains(t, "agree") || contains(t, "support this")) return Category::A;
  return Category::PNA;
}

Category parse_label(std::string_view label) {
  std::string t = lowercase(trim(label));
  while (!t.empty() && (t.back() == '.' || t.back() == '!')) t.pop_back();
  t = trim(t);
  if (t == "sa" || t == "strongly agree") return Category::SA;
  if (t == "a" || t == "agree") return Category::A;
  if (t == "d" || t == "disagree") return Category::D;
  if (t == "sd" || t == "strongly disagree") return Category::SD;
  if (t == "pna" || t == "prefer not to answer") return Category::PNA;
  throw Error(ErrorCode::UnparseableLabel, "classifier label '" + std::string(label) + "'");
}

std::string render_prompt(std::string_view prompt_template, std::string_view raw_text) {
  std::string out(prompt_template);
  constexpr std::string_view kSlot = "{text}";
  std::size_t pos = 0;
  while ((pos = out.find(kSlot, pos)) != std::string::npos) {
    out.replace(pos, kSlot.size(), raw_text);
    pos += raw_text.size();
  }
  return out;
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "endpoint must be an http(s) URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

MappedResponse call_external(std::string_view raw_text, const MapperConfig& cfg) {
  const Endpoint ep = split_url(*cfg.endpoint);
  httplib::Client client(ep.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (cfg.auth_token) headers.emplace("Authorization", "Bearer " + *cfg.auth_token);
  const std::string body = nlohmann::json{{"prompt", render_prompt(cfg.prompt_template, raw_text)}}.dump();

  std::string last_failure = "no attempt";
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_failure = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::EndpointUnreachable, "classifier returned HTTP " + std::to_string(res->status));
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorCode::UnparseableLabel, "classifier reply is not JSON");
    }
    if (!reply.contains("label") || !reply["label"].is_string()) {
      throw Error(ErrorCode::UnparseableLabel, "classifier reply lacks a string 'label'");
    }
    MappedResponse out;
    out.category = parse_label(reply["label"].get<std::string>());
    out.source = MapperSource::external;
    if (reply.contains("confidence") && reply["confidence"].is_number()) {
      out.confidence = std::clamp(reply["confidence"].get<double>(), 0.0, 1.0);
    }
    return out;
  }
  throw Error(ErrorCode::EndpointUnreachable, *cfg.endpoint + ": " + last_failure);
}

}  // namespace

MappedResponse map_response(std::string_view raw_text, const MapperConfig& cfg) {
  cfg.validate();
  if (trim(raw_text).empty()) throw Error(ErrorCode::EmptyText, "completion text is empty");
  if (cfg.mode == MapperMode::external) return call_external(raw_text, cfg);
  return MappedResponse{fallback_category(raw_text), std::nullopt, MapperSource::fallback};
}

BatchMapResult batch_map(std::span<const RawCompletion> inputs, const MapperConfig& cfg) {
  cfg.validate();
  BatchMapResult out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const RawCompletion& in = inputs[k];
    try {
      const MappedResponse m = map_response(in.raw_text, cfg);
      out.records.push_back(ResponseRecord{in.respondent_id, in.group, in.item_id, m.category, in.raw_text});
    } catch (const Error& e) {
      out.errors.push_back(RowError{k, in.respondent_id, in.item_id, e.code(), e.detail()});
    }
  }
  if (!inputs.empty() && out.records.empty()) {
    const ErrorCode code = out.errors.front().code;
    throw BatchMapError(code, "all " + std::to_string(inputs.size()) + " rows failed", std::move(out.errors));
  }
  return out;
}

std::vector<RawCompletion> read_raw_completions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::vector<RawCompletion> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back(RawCompletion{j.at("respondent_id").get<std::string>(), j.value("group", std::string()),
                                  j.at("item_id").get<int>(), j.at("raw_text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, path + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  if (out.empty()) throw Error(ErrorCode::EmptyData, "no completions in '" + path + "'");
  return out;
}

}  // namespace irtbias

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include <httplib.h>
#include <json.hpp>

#include "lenav/core/error.hpp"
#include "lenav/scene/rating.hpp"

namespace lenav::scene {

struct PromptBundle {
  std::string version;
  std::string system;
  std::string induction;  // rules + one worked exemplar
  std::string deduction;  // sub-question sequence with {{scene}} and {{people_count_hint}}
  nlohmann::json output_schema;
};

namespace detail {
inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open prompt file " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
}
}  // namespace detail

inline PromptBundle load_prompt_bundle(const std::filesystem::path& dir) {
  PromptBundle b;
  b.version = dir.filename().string();
  b.system = detail::read_text(dir / "system.txt");
  b.induction = detail::read_text(dir / "induction.txt");
  b.deduction = detail::read_text(dir / "deduction.txt");
  try {
    b.output_schema = nlohmann::json::parse(detail::read_text(dir / "rating_schema.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rating schema: ") + e.what());
  }
  return b;
}

// What the model looks at: a scene description, optionally an encoded image.
struct SceneInput {
  std::string text;
  std::string image_base64;  // empty if none
  std::string image_mime = "image/png";
  std::optional<int> people_count;  // from an external detector, if any
};

inline nlohmann::json render_messages(const PromptBundle& b, const SceneInput& in) {
  std::string user = b.deduction;
  detail::replace_all(user, "{{scene}}", in.text.empty() ? "(see image)" : in.text);
  detail::replace_all(user, "{{people_count_hint}}",
                      in.people_count ? " A people detector counted " + std::to_string(*in.people_count) + "." : "");
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", user}});
  if (!in.image_base64.empty())
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:" + in.image_mime + ";base64," + in.image_base64}}}});
  return nlohmann::json::array({{{"role", "system"}, {"content", b.system}},
                                {{"role", "user"}, {"content", b.induction}},
                                {{"role", "user"}, {"content", content}}});
}

struct MllmConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string api_key_env = "LENAV_MLLM_API_KEY";
  double timeout = 1.8;
  bool request_logprobs = true;
};

inline nlohmann::json build_request(const PromptBundle& b, const SceneInput& in, const MllmConfig& cfg) {
  nlohmann::json req;
  req["model"] = cfg.model;
  req["messages"] = render_messages(b, in);
  req["temperature"] = 0;
  req["response_format"] = {
      {"type", "json_schema"},
      {"json_schema", {{"name", "scene_rating"}, {"strict", true}, {"schema", b.output_schema}}}};
  if (cfg.request_logprobs) req["logprobs"] = true;
  return req;
}

struct MissingFrame {
  std::string reason;
};

using RatingOrMissing = std::variant<SceneRating, MissingFrame>;

namespace detail {

// Character offset of the value for `key` inside the JSON text, or npos.
inline std::size_t value_offset(const std::string& text, const std::string& key) {
  const std::string quoted = "\"" + key + "\"";
  std::size_t pos = text.find(quoted);
  if (pos == std::string::npos) return pos;
  pos = text.find(':', pos + quoted.size());
  if (pos == std::string::npos) return pos;
  ++pos;
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  return pos < text.size() ? pos : std::string::npos;
}

// Confidence of each rating digit from the token covering it.
inline std::array<double, kNumDims> confidences(const std::string& content, const nlohmann::json& tokens) {
  std::array<double, kNumDims> conf;
  conf.fill(kPaddingConfidence);
  if (!tokens.is_array()) return conf;
  std::vector<std::size_t> start;
  std::vector<double> lp;
  std::string joined;
  for (const auto& t : tokens) {
    if (!t.is_object() || !t.contains("token") || !t.contains("logprob") || !t["logprob"].is_number()) return conf;
    start.push_back(joined.size());
    joined += t["token"].get<std::string>();
    lp.push_back(t["logprob"].get<double>());
  }
  if (joined != content) return conf;
  for (std::size_t d = 0; d < kNumDims; ++d) {
    const std::size_t off = value_offset(content, kDimNames[d]);
    if (off == std::string::npos) continue;
    const auto it = std::upper_bound(start.begin(), start.end(), off);
    const std::size_t k = static_cast<std::size_t>(it - start.begin()) - 1;
    conf[d] = std::clamp(std::exp(lp[k]), 0.0, 1.0);
  }
  return conf;
}

}  // namespace detail

// Parses a chat-completions response body. Never throws.
inline RatingOrMissing parse_chat_response(const std::string& body, double time) {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& choice = j.at("choices").at(0);
    const std::string content = choice.at("message").at("content").get<std::string>();
    const auto r = nlohmann::json::parse(content);
    if (!r.is_object()) return MissingFrame{"rating is not an object"};
    SceneRating out;
    out.time = time;
    for (const auto& [k, v] : r.items()) {
      if (k == "reasoning") continue;
      bool known = false;
      for (const char* name : kDimNames) known = known || k == name;
      if (!known) return MissingFrame{"unexpected field " + k};
    }
    for (std::size_t d = 0; d < kNumDims; ++d) {
      if (!r.contains(kDimNames[d]) || !r[kDimNames[d]].is_number_integer())
        return MissingFrame{std::string("missing or non-integer ") + kDimNames[d]};
      out.dims[d] = r[kDimNames[d]].get<int>();
    }
    const nlohmann::json* tokens = nullptr;
    if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content"))
      tokens = &choice["logprobs"]["content"];
    if (tokens)
      out.confidence = detail::confidences(content, *tokens);
    else
      out.confidence.fill(kPaddingConfidence);
    if (!is_valid(out)) return MissingFrame{"rating violates schema"};
    return out;
  } catch (const std::exception& e) {
    return MissingFrame{std::string("malformed response: ") + e.what()};
  }
}

namespace detail {
struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint must include a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}
}  // namespace detail

// One blocking request; every failure comes back as MissingFrame.
inline RatingOrMissing query_mllm(const SceneInput& in, const PromptBundle& bundle, const MllmConfig& cfg, double time) {
  try {
    const auto ep = detail::split_endpoint(cfg.endpoint);
    httplib::Client cli(ep.base);
    const auto usec = std::chrono::microseconds(static_cast<long long>(cfg.timeout * 1e6));
    cli.set_connection_timeout(usec);
    cli.set_read_timeout(usec);
    cli.set_write_timeout(usec);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
    const auto res = cli.Post(ep.path, headers, build_request(bundle, in, cfg).dump(), "application/json");
    if (!res) return MissingFrame{"transport error: " + httplib::to_string(res.error())};
    if (res->status != 200) return MissingFrame{"HTTP " + std::to_string(res->status)};
    return parse_chat_response(res->body, time);
  } catch (const std::exception& e) {
    return MissingFrame{e.what()};
  }
}

// Runs queries off the control thread. poll() never blocks; a submit while a
// query is in flight is refused and reported as a missing frame.
class AsyncSceneRater {
 public:
  AsyncSceneRater(PromptBundle bundle, MllmConfig cfg) : bundle_(std::move(bundle)), cfg_(std::move(cfg)) {}
  ~AsyncSceneRater() {
    if (pending_.valid()) pending_.wait();
  }
  AsyncSceneRater(const AsyncSceneRater&) = delete;
  AsyncSceneRater& operator=(const AsyncSceneRater&) = delete;

  bool busy() const {
    return pending_.valid() && pending_.wait_for(std::chrono::seconds(0)) != std::future_status::ready;
  }

  bool submit(SceneInput in, double time) {
    if (busy()) return false;
    pending_ = std::async(std::launch::async, [this, in = std::move(in), time] { return query_mllm(in, bundle_, cfg_, time); });
    return true;
  }

  std::optional<RatingOrMissing> poll() {
    if (!pending_.valid() || busy()) return std::nullopt;
    return pending_.get();
  }

  // Blocks; for offline tools and tests.
  std::optional<RatingOrMissing> wait() {
    if (!pending_.valid()) return std::nullopt;
    return pending_.get();
  }

 private:
  PromptBundle bundle_;
  MllmConfig cfg_;
  std::future<RatingOrMissing> pending_;
};

// Text stand-in for a camera frame, built from the world state.
inline std::string describe_scene(const sim::WorldState& world) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  const Vec2 p = world.robot.pose.position();
  const double th = world.robot.pose.theta;
  os << "Robot moving at " << world.robot.v << " m/s. ";
  int visible = 0;
  for (const auto& ped : world.pedestrians) {
    const Vec2 rel = ped.position - p;
    const double d = norm(rel);
    if (d > 8.0) continue;
    ++visible;
    const double ahead = rel.x * std::cos(th) + rel.y * std::sin(th);
    const double left = -rel.x * std::sin(th) + rel.y * std::cos(th);
    const double closing = d > 0.0 ? -dot(rel, ped.velocity) / d : 0.0;
    os << "Person " << visible << ": " << ahead << " m ahead, " << left << " m to the left, "
       << (closing > 0.1 ? "approaching" : closing < -0.1 ? "moving away" : "not closing in") << ". ";
  }
  if (visible == 0) os << "No people in view. ";
  os << "Free passage width about " << passage_width(world) << " m; " << static_cast<int>(100.0 * local_occupancy(world))
     << "% of the nearby floor is blocked.";
  return os.str();
}

}  // namespace lenav::scene

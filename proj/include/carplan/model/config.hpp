#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace carplan {

/// Which scene elements receive displacement supervision.
enum class DpeMode : std::uint8_t { none, agent_only, map_only, agent_map };
enum class RouterKind : std::uint8_t { scene_aware, mlp };

inline std::string_view to_string(DpeMode m) {
  switch (m) {
    case DpeMode::none: return "none";
    case DpeMode::agent_only: return "agent_only";
    case DpeMode::map_only: return "map_only";
    case DpeMode::agent_map: return "agent_map";
  }
  return "?";
}
inline std::optional<DpeMode> parse_dpe_mode(std::string_view s) {
  if (s == "none" || s == "off") return DpeMode::none;
  if (s == "agent_only" || s == "agent") return DpeMode::agent_only;
  if (s == "map_only" || s == "map") return DpeMode::map_only;
  if (s == "agent_map") return DpeMode::agent_map;
  return std::nullopt;
}
inline std::string_view to_string(RouterKind k) { return k == RouterKind::scene_aware ? "scene_aware" : "mlp"; }
inline std::optional<RouterKind> parse_router_kind(std::string_view s) {
  if (s == "scene_aware") return RouterKind::scene_aware;
  if (s == "mlp") return RouterKind::mlp;
  return std::nullopt;
}

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Architecture hyper-parameters. `experts == 0` selects the plain decoder
/// (every layer a single FFN) and disables the balance loss.
struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 256;
  std::size_t encoder_layers = 4;
  std::size_t decoder_layers = 4;
  std::size_t modes = 6;
  std::size_t experts = 16;
  std::size_t top_k = 2;
  std::size_t shared_experts = 2;
  std::size_t expert_hidden = 128;
  std::size_t history_steps = 20;
  std::size_t future_steps = 40;
  RouterKind router = RouterKind::scene_aware;
  DpeMode dpe = DpeMode::agent_map;
  std::uint64_t seed = 0;

  bool moe() const { return experts > 0; }
  bool dpe_enabled() const { return dpe != DpeMode::none; }

  void validate() const {
    if (d_model == 0 || heads == 0 || d_model % heads != 0)
      throw ConfigError("d_model must be a positive multiple of heads");
    if (modes == 0) throw ConfigError("modes must be positive");
    if (decoder_layers == 0 || encoder_layers == 0) throw ConfigError("layer counts must be positive");
    if (future_steps == 0 || history_steps == 0) throw ConfigError("horizons must be positive");
    if (moe()) {
      if (top_k == 0 || top_k > experts)
        throw ConfigError("top_k " + std::to_string(top_k) + " must lie in [1, experts=" + std::to_string(experts) + "]");
      if (decoder_layers < 2) throw ConfigError("an expert decoder needs at least 2 layers");
    }
  }

  /// Desk-scale full model.
  static ModelConfig desk() { return ModelConfig{}; }

  /// Smallest configuration exercising every component; used for gradient checks.
  static ModelConfig tiny() {
    ModelConfig c;
    c.d_model = 8;
    c.heads = 2;
    c.ffn_hidden = 16;
    c.expert_hidden = 16;
    c.modes = 2;
    c.experts = 4;
    c.top_k = 2;
    c.shared_experts = 1;
    c.future_steps = 5;
    return c;
  }

  std::map<std::string, std::string> to_kv() const {
    return {{"d_model", std::to_string(d_model)},
            {"heads", std::to_string(heads)},
            {"ffn_hidden", std::to_string(ffn_hidden)},
            {"encoder_layers", std::to_string(encoder_layers)},
            {"decoder_layers", std::to_string(decoder_layers)},
            {"modes", std::to_string(modes)},
            {"experts", std::to_string(experts)},
            {"top_k", std::to_string(top_k)},
            {"shared_experts", std::to_string(shared_experts)},
            {"expert_hidden", std::to_string(expert_hidden)},
            {"history_steps", std::to_string(history_steps)},
            {"future_steps", std::to_string(future_steps)},
            {"router", std::string(to_string(router))},
            {"dpe", std::string(to_string(dpe))},
            {"model_seed", std::to_string(seed)}};
  }

  /// Applies recognized keys from `kv`; unknown keys are left for other consumers.
  void apply(const std::map<std::string, std::string>& kv) {
    auto num = [&](const char* key, std::size_t& dst) {
      if (auto it = kv.find(key); it != kv.end()) {
        try {
          std::size_t pos = 0;
          const long long v = std::stoll(it->second, &pos);
          if (pos != it->second.size() || v < 0) throw std::invalid_argument("");
          dst = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
          throw ConfigError(std::string("invalid value for ") + key + ": " + it->second);
        }
      }
    };
    num("d_model", d_model);
    num("heads", heads);
    num("ffn_hidden", ffn_hidden);
    num("encoder_layers", encoder_layers);
    num("decoder_layers", decoder_layers);
    num("modes", modes);
    num("experts", experts);
    num("top_k", top_k);
    num("shared_experts", shared_experts);
    num("expert_hidden", expert_hidden);
    num("history_steps", history_steps);
    num("future_steps", future_steps);
    if (auto it = kv.find("router"); it != kv.end()) {
      auto r = parse_router_kind(it->second);
      if (!r) throw ConfigError("invalid router: " + it->second);
      router = *r;
    }
    if (auto it = kv.find("dpe"); it != kv.end()) {
      auto d = parse_dpe_mode(it->second);
      if (!d) throw ConfigError("invalid dpe mode: " + it->second);
      dpe = *d;
    }
    if (auto it = kv.find("model_seed"); it != kv.end()) {
      std::size_t s = 0;
      num("model_seed", s);
      seed = s;
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : to_kv()) os << k << '=' << v << '\n';
    return os.str();
  }

  static ModelConfig parse(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    ModelConfig c;
    c.apply(kv);
    return c;
  }
};

}  // namespace carplan

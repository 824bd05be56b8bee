#include "refvos/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace refvos {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InputError("config: bad integer for " + key + ": '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InputError("config: bad number for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InputError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  return out;
}

std::string int_list_str(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

std::string double_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_ENTRY(K, F) \
  {K, [](RunConfig& c, const std::string& v) { c.F = parse_int(K, v); }, \
   [](const RunConfig& c) { return std::to_string(c.F); }}
#define DBL_ENTRY(K, F) \
  {K, [](RunConfig& c, const std::string& v) { c.F = parse_double(K, v); }, \
   [](const RunConfig& c) { return double_str(c.F); }}
#define BOOL_ENTRY(K, F) \
  {K, [](RunConfig& c, const std::string& v) { c.F = parse_bool(K, v); }, \
   [](const RunConfig& c) { return c.F ? "true" : "false"; }}
#define ILIST_ENTRY(K, F) \
  {K, [](RunConfig& c, const std::string& v) { c.F = parse_int_list(K, v); }, \
   [](const RunConfig& c) { return int_list_str(c.F); }}
#define STR_ENTRY(K, F) \
  {K, [](RunConfig& c, const std::string& v) { c.F = v; }, [](const RunConfig& c) { return c.F; }}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      INT_ENTRY("precision", precision),
      INT_ENTRY("model.dim", model_dim),
      INT_ENTRY("model.num_queries", num_queries),
      INT_ENTRY("model.frames", frames),
      INT_ENTRY("transformer.enc_layers", enc_layers),
      INT_ENTRY("transformer.dec_layers", dec_layers),
      INT_ENTRY("transformer.heads", heads),
      INT_ENTRY("transformer.ffn_dim", ffn_dim),
      BOOL_ENTRY("mta.enabled", mta_enabled),
      INT_ENTRY("mta.num_blocks", mta_num_blocks),
      BOOL_ENTRY("mti.enabled", mti_enabled),
      INT_ENTRY("mti.enc_blocks", mti_enc_blocks),
      INT_ENTRY("mti.dec_blocks", mti_dec_blocks),
      INT_ENTRY("mti.window", mti_window),
      BOOL_ENTRY("mti.cross_query", mti_cross_query),
      INT_ENTRY("backbone.stem_stride", stem_stride),
      ILIST_ENTRY("backbone.channels", backbone_channels),
      INT_ENTRY("backbone.convs_per_stage", convs_per_stage),
      INT_ENTRY("ref.text_dim", text_dim),
      INT_ENTRY("ref.text_heads", text_heads),
      INT_ENTRY("ref.text_layers", text_layers),
      INT_ENTRY("ref.max_len", max_text_len),
      INT_ENTRY("ref.audio_dim", audio_dim),
      ILIST_ENTRY("ref.audio_channels", audio_channels),
      BOOL_ENTRY("ref.audio_frozen", audio_frozen),
      INT_ENTRY("audio.window", stft_window),
      INT_ENTRY("audio.hop", stft_hop),
      DBL_ENTRY("loss.lambda_cls", lambda_cls),
      DBL_ENTRY("loss.lambda_l1", lambda_l1),
      DBL_ENTRY("loss.lambda_giou", lambda_giou),
      DBL_ENTRY("loss.lambda_dice", lambda_dice),
      DBL_ENTRY("loss.lambda_focal", lambda_focal),
      DBL_ENTRY("loss.focal_alpha", focal_alpha),
      DBL_ENTRY("loss.focal_gamma", focal_gamma),
      DBL_ENTRY("optim.lr", lr),
      DBL_ENTRY("optim.backbone_lr", backbone_lr),
      DBL_ENTRY("optim.weight_decay", weight_decay),
      DBL_ENTRY("optim.beta1", beta1),
      DBL_ENTRY("optim.beta2", beta2),
      DBL_ENTRY("optim.eps", adam_eps),
      INT_ENTRY("train.epochs", epochs),
      ILIST_ENTRY("train.lr_drop_epochs", lr_drop_epochs),
      INT_ENTRY("train.steps", steps),
      INT_ENTRY("train.batch_size", batch_size),
      {"train.seed",
       [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(std::stoull(v)); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      INT_ENTRY("train.log_interval", log_interval),
      INT_ENTRY("train.eval_interval", eval_interval),
      DBL_ENTRY("train.early_stop_jf", early_stop_jf),
      INT_ENTRY("train.workers", workers),
      STR_ENTRY("data.root", data_root),
      STR_ENTRY("eval.split", eval_split),
      INT_ENTRY("metric.boundary_tolerance", boundary_tolerance),
  };
  return entries;
}

#undef INT_ENTRY
#undef DBL_ENTRY
#undef BOOL_ENTRY
#undef ILIST_ENTRY
#undef STR_ENTRY

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& e : registry()) {
    if (key == e.key) {
      e.set(*this, value);
      if (key == "precision" && precision != 32 && precision != 64)
        throw InputError("config: precision must be 32 or 64");
      return;
    }
  }
  throw InputError("config: unknown key '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot open " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError("config: missing '=' at " + path + ":" + std::to_string(line_no));
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::apply_overrides(const std::vector<std::string>& kvs) {
  for (const auto& kv : kvs) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("override must be key=value, got '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& e : registry()) os << e.key << " = " << e.get(*this) << "\n";
  return os.str();
}

void RunConfig::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("config: cannot write " + path);
  out << to_text();
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : registry()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

}  // namespace refvos
